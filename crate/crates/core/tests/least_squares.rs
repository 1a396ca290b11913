mod common;

use common::*;
use proptest::prelude::*;
use zsm_core::features::*;
use zsm_core::scene::{generate_scene, simulate_epochs, NoiseConfig, SceneConfig};
use zsm_core::Label;

const RX: [f64; 3] = [120.0, -45.0, 1.8];
const START: [f64; 3] = [0.0, 0.0, 0.0];

fn position_error(sol: &LsSolution, truth: [f64; 3]) -> f64 {
    let p = sol.estimate.position;
    ((p[0] - truth[0]).powi(2) + (p[1] - truth[1]).powi(2) + (p[2] - truth[2]).powi(2)).sqrt()
}

#[test]
fn noise_free_epoch_is_recovered() {
    let epoch = manual_epoch(RX, 312.5, &SKY8, &[]);
    let sol = solve_least_squares(&epoch, START).unwrap();
    assert!(position_error(&sol, RX) < 1e-6);
    assert!((sol.estimate.clock_bias - 312.5).abs() < 1e-6);
    assert!(sol.residuals.0.iter().all(|r| r.abs() < 1e-6));
    assert!(sol.trace.len() <= MAX_ITERATIONS);
}

#[test]
fn noise_free_scene_epochs_are_recovered() {
    let scene = generate_scene(&SceneConfig {
        training_epochs: 40,
        target_epochs: 20,
        ..SceneConfig::default()
    })
    .unwrap();
    for e in simulate_epochs(&scene, &NoiseConfig::noise_free()) {
        let sol = solve_least_squares(&e, scene.street_midpoint()).unwrap();
        assert!(position_error(&sol, e.receiver()) < 1e-6);
        assert!((sol.estimate.clock_bias - e.true_clock_bias).abs() < 1e-6);
    }
}

#[test]
fn delayed_satellite_has_largest_residual() {
    let mut errors = [0.0; 8];
    errors[3] = 30.0;
    let epoch = manual_epoch(RX, 0.0, &SKY8, &errors);
    let sol = solve_least_squares(&epoch, START).unwrap();
    let worst = sol
        .residuals
        .0
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
        .0;
    assert_eq!(worst, 3);
    assert!(sol.residuals.0[3] > 0.0);

    let reference = reference_ls(&epoch, START);
    for k in 0..3 {
        assert!((sol.estimate.position[k] - reference[k]).abs() < 1e-6);
    }
    assert!((sol.estimate.clock_bias - reference[3]).abs() < 1e-6);
    for (o, r) in epoch.observations.iter().zip(&sol.residuals.0) {
        let s = o.sat_position;
        let range = ((reference[0] - s[0]).powi(2) + (reference[1] - s[1]).powi(2) + (reference[2] - s[2]).powi(2)).sqrt();
        assert!((o.pseudorange - range - reference[3] - r).abs() < 1e-6);
    }
}

#[test]
fn degenerate_geometry_is_reported() {
    let three = manual_epoch(RX, 0.0, &SKY8[..3], &[]);
    assert!(matches!(
        solve_least_squares(&three, START),
        Err(LsError::DegenerateGeometry { observations: 3, .. })
    ));
    let stacked = manual_epoch(RX, 0.0, &[(45.0, 30.0); 5], &[]);
    assert!(matches!(
        solve_least_squares(&stacked, START),
        Err(LsError::DegenerateGeometry { .. })
    ));
}

fn hand_geometry() -> GeometryMatrix {
    GeometryMatrix {
        rows: vec![
            [1.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 1.0],
            [0.6, 0.8, 0.0, 1.0],
        ],
    }
}

#[test]
fn residuals_of_a_hand_worked_system() {
    let g = hand_geometry();
    let p = ReceiverEstimate {
        position: [1.0, 2.0, 3.0],
        clock_bias: 4.0,
    };
    let exact = compute_residuals(&PseudorangeVector(vec![5.0, 6.0, 7.0, 6.2]), &g, &p).unwrap();
    assert!(exact.0.iter().all(|r| r.abs() < 1e-12));
    let bumped = compute_residuals(&PseudorangeVector(vec![5.0, 6.0, 7.0, 7.2]), &g, &p).unwrap();
    assert!((bumped.0[3] - 1.0).abs() < 1e-12);
    assert!(bumped.0[..3].iter().all(|r| r.abs() < 1e-12));
    assert!(matches!(
        compute_residuals(&PseudorangeVector(vec![1.0; 3]), &g, &p),
        Err(LsError::DimensionMismatch(_))
    ));
}

fn shifted(epoch: &zsm_core::scene::EpochObservation, v: [f64; 3]) -> zsm_core::scene::EpochObservation {
    let mut e = epoch.clone();
    for o in &mut e.observations {
        for k in 0..3 {
            o.sat_position[k] += v[k];
        }
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_moves_the_estimate(dx in -500.0f64..500.0, dy in -500.0f64..500.0, dz in -50.0f64..50.0,
                                      e0 in -20.0f64..20.0, e1 in -20.0f64..20.0) {
        let epoch = manual_epoch(RX, 10.0, &SKY8, &[e0, 0.0, e1, 0.0, 5.0, 0.0, -3.0, 0.0]);
        let a = solve_least_squares(&epoch, START).unwrap();
        let start = [START[0] + dx, START[1] + dy, START[2] + dz];
        let b = solve_least_squares(&shifted(&epoch, [dx, dy, dz]), start).unwrap();
        for k in 0..3 {
            let moved = a.estimate.position[k] + [dx, dy, dz][k];
            prop_assert!((b.estimate.position[k] - moved).abs() < 1e-5);
        }
        for (x, y) in a.residuals.0.iter().zip(&b.residuals.0) {
            prop_assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn common_bias_goes_to_the_clock(c in -1.0e4f64..1.0e4, e0 in -20.0f64..20.0) {
        let epoch = manual_epoch(RX, 0.0, &SKY8, &[e0, 4.0, 0.0, -2.0]);
        let mut biased = epoch.clone();
        for o in &mut biased.observations {
            o.pseudorange += c;
        }
        let a = solve_least_squares(&epoch, START).unwrap();
        let b = solve_least_squares(&biased, START).unwrap();
        prop_assert!((b.estimate.clock_bias - a.estimate.clock_bias - c).abs() < 1e-5);
        for k in 0..3 {
            prop_assert!((b.estimate.position[k] - a.estimate.position[k]).abs() < 1e-5);
        }
        for (x, y) in a.residuals.0.iter().zip(&b.residuals.0) {
            prop_assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn samples_round_trip_through_csv() {
    let (_, _, train, _) = synthetic_samples(2);
    let dir = std::env::temp_dir().join(format!("zsm-ls-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("samples.csv");
    write_samples_csv(&path, &train).unwrap();
    assert_eq!(read_samples_csv(&path).unwrap(), train);

    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "elevation_deg,cn0_dbhz,residual_m,label\n30,40,oops,los\n").unwrap();
    assert!(read_samples_csv(&bad).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn nlos_residuals_are_larger_on_average() {
    let (_, _, train, test) = synthetic_samples(1);
    let mean_abs = |label: Label| {
        let v: Vec<f64> = train
            .iter()
            .chain(&test)
            .filter(|s| s.label == label)
            .map(|s| s.features.residual_m.abs())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_abs(Label::Nlos) > mean_abs(Label::Los));
}
