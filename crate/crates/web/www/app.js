import init, { grid_snapshot, hull_for_pose, simulate, bundled_scenarios } from "./pkg/gridsmpc_web.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");
const status = (msg) => { $("status").textContent = msg; };

// World window currently drawn, and the last grid for hull clicks.
let view = null;
let animation = null;

function setView(x0, x1, y0, y1) {
  view = { x0, x1, y0, y1, sx: canvas.width / (x1 - x0), sy: canvas.height / (y1 - y0) };
}

const px = (x) => (x - view.x0) * view.sx;
const py = (y) => canvas.height - (y - view.y0) * view.sy;

function drawGrid(g) {
  const max = Math.max(...g.values, 1e-12);
  for (let i = 0; i < g.nx; i++) {
    for (let j = 0; j < g.ny; j++) {
      const k = i * g.ny + j;
      const v = g.values[k] / max;
      const x = g.origin_x + i * g.cx, y = g.origin_y + j * g.cy;
      if (v > 0) {
        ctx.fillStyle = `rgba(220, 90, 0, ${Math.min(1, 0.1 + v)})`;
        ctx.fillRect(px(x), py(y + g.cy), g.cx * view.sx + 0.5, g.cy * view.sy + 0.5);
      }
      if (g.occupied[k]) {
        ctx.strokeStyle = "#600";
        ctx.strokeRect(px(x), py(y + g.cy), g.cx * view.sx, g.cy * view.sy);
      }
    }
  }
}

function drawPolygon(pts, fill, stroke) {
  ctx.beginPath();
  pts.forEach(([x, y], k) => (k ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y))));
  ctx.closePath();
  ctx.fillStyle = fill;
  ctx.fill();
  ctx.strokeStyle = stroke;
  ctx.stroke();
}

function drawVehicle(x, y, psi, len, wid, color) {
  const c = Math.cos(psi), s = Math.sin(psi);
  const corners = [[len / 2, wid / 2], [len / 2, -wid / 2], [-len / 2, -wid / 2], [-len / 2, wid / 2]];
  drawPolygon(corners.map(([a, b]) => [x + a * c - b * s, y + a * s + b * c]), color, "#000");
}

function drawRoad(width, lane) {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#888";
  for (let y = 0; y <= width + 1e-9; y += lane) {
    ctx.setLineDash(y > 0 && y < width - 1e-9 ? [12, 10] : []);
    ctx.beginPath();
    ctx.moveTo(0, py(y));
    ctx.lineTo(canvas.width, py(y));
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

let snapshot = null;

function showGrid() {
  stopAnimation();
  const t = Number($("t").value), h = Number($("h").value);
  try {
    snapshot = JSON.parse(grid_snapshot($("scenario").value, t, h));
  } catch (e) {
    status(String(e));
    return;
  }
  const g = snapshot.grid;
  setView(g.origin_x, g.origin_x + g.nx * g.cx, g.origin_y, g.origin_y + g.ny * g.cy);
  drawRoad(g.ny * g.cy, snapshot.lane_width);
  drawGrid(g);
  const [x, y, psi] = snapshot.ev;
  drawVehicle(x, y, psi, ...snapshot.vehicle, "rgba(200, 0, 0, 0.5)");
  status(`t = ${t} s, h = ${h}: ${g.occupied.filter(Boolean).length} cells at or above p_th = ${snapshot.p_th}`);
}

function clickHull(event) {
  if (!snapshot || animation) return;
  const r = canvas.getBoundingClientRect();
  const x = view.x0 + (event.clientX - r.left) / view.sx;
  const y = view.y0 + (canvas.height - (event.clientY - r.top)) / view.sy;
  showGrid();
  drawVehicle(x, y, 0, ...snapshot.vehicle, "rgba(200, 0, 0, 0.9)");
  try {
    const hull = JSON.parse(hull_for_pose($("scenario").value, Number($("t").value), Number($("h").value), x, y, 0));
    drawPolygon(hull.vertices, "rgba(0, 150, 60, 0.25)", "#063");
    status(`hull for the ego vehicle at (${x.toFixed(1)}, ${y.toFixed(2)})`);
  } catch (e) {
    status(`no hull at (${x.toFixed(1)}, ${y.toFixed(2)}): ${e}`);
  }
}

function stopAnimation() {
  if (animation) cancelAnimationFrame(animation);
  animation = null;
}

function runSimulation() {
  stopAnimation();
  snapshot = null;
  status("simulating...");
  // Let the status paint before the blocking run.
  setTimeout(() => {
    let run;
    try {
      run = JSON.parse(simulate($("scenario").value, Number($("seed").value), $("noise").checked));
    } catch (e) {
      status(String(e));
      return;
    }
    const [len, wid] = run.vehicle;
    const summary = run.lane_changes.map((c) => `lane change at t = ${c.t.toFixed(1)} s, dx = ${c.dx.map((d) => d.toFixed(1)).join(", ")}`);
    let k = 0, last = 0;
    const frame = (now) => {
      if (now - last >= 50) {
        last = now;
        const s = run.steps[k];
        setView(s.ev[0] - 25, s.ev[0] + 115, 0, run.road_width);
        drawRoad(run.road_width, run.lane_width);
        if (s.hull) drawPolygon(s.hull, "rgba(0, 150, 60, 0.2)", "#063");
        s.tvs.forEach(([x, y]) => drawVehicle(x, y, 0, 6, 2, "rgba(40, 80, 220, 0.8)"));
        drawVehicle(s.ev[0], s.ev[1], s.ev[2], len, wid, "rgba(200, 0, 0, 0.9)");
        status(`t = ${s.t.toFixed(1)} s, v = ${s.ev[3].toFixed(1)} m/s, ${run.outcome}\n${summary.join("\n")}`);
        k += 1;
      }
      animation = k < run.steps.length ? requestAnimationFrame(frame) : null;
    };
    animation = requestAnimationFrame(frame);
  }, 20);
}

await init();
for (const name of JSON.parse(bundled_scenarios())) {
  $("scenario").add(new Option(name, name));
}
$("show").onclick = showGrid;
$("run").onclick = runSimulation;
canvas.onclick = clickHull;
showGrid();
