use gridsmpc::smpc::plan_step;
use gridsmpc::{Scenario, SolveStatus};

#[test]
fn overtake_start_converges_inside_the_hulls() {
    let s = Scenario::builtin("overtake_2tv").unwrap();
    let r = plan_step(&s.config, &s.ev_init, &s.agents().unwrap(), s.initial_target(), None).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(r.slack_total <= 1e-3, "slack {}", r.slack_total);
    assert_eq!(r.inputs.len(), 20);
    for (s, h) in r.predicted_states[1..].iter().zip(&r.hulls) {
        assert!(h.max_violation(s.x, s.y) <= 1e-3);
    }
}

#[test]
fn grid_and_hull_phases_stay_below_the_solve() {
    let s = Scenario::builtin("overtake_2tv").unwrap();
    let log = gridsmpc::simulation::run_closed_loop(&s).unwrap();
    let n = log.records.len() as f64;
    let mean = |f: fn(&gridsmpc::simulation::StepRecord) -> f64| log.records.iter().map(f).sum::<f64>() / n;
    let grid = mean(|r| r.timings.grid);
    let hull = mean(|r| r.timings.hull);
    let solve = mean(|r| r.timings.solve);
    assert!(grid <= 0.5 * solve, "grid {grid:.5} s vs solve {solve:.5} s");
    assert!(hull <= 0.5 * solve, "hull {hull:.5} s vs solve {solve:.5} s");
}
