use penflow_web::{fit_rate, run_example, tangent_project};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn pair(v: &Value) -> [f64; 2] {
    [v[0].as_f64().unwrap(), v[1].as_f64().unwrap()]
}

#[test]
fn tangent_projection_on_a_box_corner_and_ball_boundary() {
    let bx = r#"{"type": "box", "lower": [-1, -1], "upper": [1, 1]}"#;
    let r = parse(&tangent_project(bx, &[1.0, 1.0], &[0.5, -0.5]).unwrap());
    assert_eq!(pair(&r["tangent"]), [0.0, -0.5]);
    assert_eq!(pair(&r["projected"]), [1.0, 0.5]);
    assert_eq!(r["interior"], false);

    // outward radial component is removed, tangential one kept
    let ball = r#"{"type": "ball", "center": [0, 0], "radius": 1}"#;
    let r = parse(&tangent_project(ball, &[0.0, 1.0], &[0.3, 2.0]).unwrap());
    let t = pair(&r["tangent"]);
    assert!((t[0] - 0.3).abs() < 1e-15 && t[1].abs() < 1e-15);

    let r = parse(&tangent_project(ball, &[0.1, 0.2], &[0.3, 2.0]).unwrap());
    assert_eq!(pair(&r["tangent"]), [0.3, 2.0]);
    assert_eq!(r["interior"], true);
}

#[test]
fn tangent_projection_rejects_bad_input() {
    assert!(tangent_project("{}", &[0.0, 0.0], &[0.0, 0.0]).is_err());
    let ball = r#"{"type": "ball", "center": [0, 0], "radius": 1}"#;
    assert!(tangent_project(ball, &[0.0], &[0.0, 0.0]).is_err());
}

#[test]
fn example_run_returns_thinned_series() {
    let r = parse(&run_example(2, 3, 1e-3, 20_000, false).unwrap());
    let s = &r["series"];
    let n = s["time"].as_array().unwrap().len();
    assert!(n >= 2 && n <= 402);
    for key in ["v", "consensus", "residual", "agents"] {
        assert_eq!(s[key].as_array().unwrap().len(), n, "{key}");
    }
    assert_eq!(s["agents"][0].as_array().unwrap().len(), 30);
    assert_eq!(r["summary"]["seed"], 3);
    assert!(r["summary"]["final_consensus"].as_f64().unwrap() <= 1e-6);

    assert!(run_example(3, 1, 1e-3, 10, false).is_err());
    assert!(run_example(1, 1, -1.0, 10, false).is_err());
}

#[test]
fn rate_fit_recovers_a_clean_exponential() {
    let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
    let v: Vec<f64> = t.iter().map(|t| 2.0 * (-3.0 * t).exp()).collect();
    let fit = parse(&fit_rate(&t, &v).unwrap());
    assert!((fit["slope"].as_f64().unwrap() + 3.0).abs() < 1e-10);
    assert!((fit["intercept"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-10);
    assert!(fit_rate(&t, &v[..10]).is_err());
}
