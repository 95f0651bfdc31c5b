use gridsmpc_web::api;
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn snapshot_of_the_overtake_start() {
    let v = parse(api::grid_snapshot("overtake_2tv", 0.0, 10).unwrap());
    let g = &v["grid"];
    let n = (g["nx"].as_u64().unwrap() * g["ny"].as_u64().unwrap()) as usize;
    assert_eq!(g["values"].as_array().unwrap().len(), n);
    let occupied = g["occupied"].as_array().unwrap().iter().filter(|b| b.as_bool().unwrap()).count();
    assert!(occupied > 0);
    assert_eq!(v["ev"][0], 10.0);
}

#[test]
fn empty_road_is_free() {
    let v = parse(api::grid_snapshot("empty_road", 2.0, 5).unwrap());
    assert!(v["grid"]["values"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
}

#[test]
fn hull_for_a_free_pose() {
    let v = parse(api::hull_for_pose("empty_road", 0.0, 1, 10.0, 5.25, 0.0).unwrap());
    let pts = v["vertices"].as_array().unwrap();
    assert_eq!(pts.len(), 4);
    // Nothing blocks the view, so the hull reaches the far end of the grid.
    assert!(pts.iter().any(|p| p[0].as_f64().unwrap() > 50.0));
}

#[test]
fn simulate_accepts_toml_text() {
    let text = "schema = 1\nduration = 2.0\n[ev]\nstate = [0.0, 1.75, 0.0, 28.0]\n";
    let v = parse(api::simulate(text, 1, true).unwrap());
    assert_eq!(v["outcome"], "Completed");
    assert_eq!(v["steps"].as_array().unwrap().len(), 11);
}

#[test]
fn errors_are_messages() {
    assert!(api::simulate("schema = 1\n", 0, false).is_err());
    assert!(api::grid_snapshot("overtake_2tv", 0.0, 99).is_err());
    assert!(api::grid_snapshot("overtake_2tv", -1.0, 1).is_err());
}
