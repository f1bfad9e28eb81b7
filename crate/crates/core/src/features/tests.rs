use std::f64::consts::TAU;

use approx::assert_relative_eq;
use proptest::prelude::*;

use super::*;
use crate::dataset::{
    synthesize_gait, AxisRole, GaitSpec, MedicationState, Motion, ParticipantId, SyntheticGait, UpdrsScore,
};
use crate::gaitevents::FootEvents;
use crate::skeleton::{h36m, H36M17};

fn gait(spec: GaitSpec) -> SyntheticGait {
    synthesize_gait(&spec).unwrap()
}

fn spec(cadence: f64) -> GaitSpec {
    GaitSpec {
        cadence_steps_per_min: cadence,
        ..GaitSpec::default()
    }
}

/// Generator truth rounded to frames.
fn truth_events(g: &SyntheticGait) -> GaitEvents {
    let frames = |v: &[f64]| v.iter().map(|t| (t * g.walk.fps).round() as usize).filter(|&f| f < g.walk.frame_count()).collect();
    let foot = |f: Foot| FootEvents {
        heel_strikes: frames(g.truth.heel_strikes_s(f)),
        toe_offs: frames(g.truth.toe_offs_s(f)),
    };
    GaitEvents {
        left: foot(Foot::Left),
        right: foot(Foot::Right),
    }
}

fn hs_only(left: &[usize], right: &[usize]) -> GaitEvents {
    GaitEvents {
        left: FootEvents { heel_strikes: left.to_vec(), toe_offs: vec![] },
        right: FootEvents { heel_strikes: right.to_vec(), toe_offs: vec![] },
    }
}

/// A 17-joint walk whose joints are all at the origin except as set by `place`.
fn built_walk(n: usize, fps: f64, place: impl Fn(usize, &mut Vec<[f64; 3]>)) -> RawWalk {
    let frames: Vec<Vec<[f64; 3]>> = (0..n)
        .map(|f| {
            let mut p = vec![[0.0, 0.0, 0.0]; 17];
            p[h36m::L_HIP] = [0.0, 0.1, 0.9];
            p[h36m::R_HIP] = [0.0, -0.1, 0.9];
            place(f, &mut p);
            p
        })
        .collect();
    RawWalk {
        walk_id: "built".into(),
        participant: ParticipantId::new("p").unwrap(),
        medication: MedicationState::Off,
        label: UpdrsScore::new(1).unwrap(),
        fps,
        layout: H36M17.into(),
        motion: Motion::from_points(&frames, vec![AxisRole::Ap, AxisRole::Ml, AxisRole::Up]).unwrap(),
    }
}

#[test]
fn alternating_heel_strikes_form_steps() {
    let steps = step_sequence(&hs_only(&[0, 30], &[15])).unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(
        steps[0],
        Step { trail_foot: Foot::Left, trail_frame: 0, lead_foot: Foot::Right, lead_frame: 15 }
    );
    assert_eq!(steps[1].lead_frame, 30);
}

#[test]
fn single_foot_events_are_insufficient() {
    let err = step_sequence(&hs_only(&[0, 30, 60], &[])).unwrap_err();
    assert!(matches!(err, Error::InsufficientGait(_)));
}

#[test]
fn repeated_or_coincident_strikes_make_no_step() {
    // L L R R: only the L->R transition is a step; coincident pair is dropped
    assert_eq!(step_sequence(&hs_only(&[0, 30], &[45, 60])).unwrap().len(), 1);
    assert_eq!(step_sequence(&hs_only(&[10], &[10])).unwrap().len(), 0);
}

#[test]
fn ten_seconds_at_120_gives_about_20_steps() {
    let g = gait(spec(120.0));
    let events = detect_events(&g.walk, &EventConfig::default()).unwrap();
    let n = step_sequence(&events).unwrap().len() as i64;
    assert!((n - 20).abs() <= 1, "{n} steps");
}

#[test]
fn step_time_is_frame_difference_over_fps() {
    let s = Step { trail_foot: Foot::Left, trail_frame: 0, lead_foot: Foot::Right, lead_frame: 15 };
    assert_eq!(compute_step_time(&s, 30.0), 0.5);
    let same = Step { lead_frame: 0, ..s };
    assert_eq!(compute_step_time(&same, 30.0), 0.0);
}

#[test]
fn synthetic_step_time_matches_cadence() {
    let g = gait(spec(120.0));
    let (_, f) = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
    assert_relative_eq!(f.step_time_mean_s, 0.5, max_relative = 0.02);
}

#[test]
fn step_length_and_width_from_ankles() {
    let walk = built_walk(10, 30.0, |_, p| {
        p[h36m::R_ANKLE] = [1.0, -0.06, 0.08];
        p[h36m::L_ANKLE] = [0.5, -0.06, 0.08];
    });
    let s = Step { trail_foot: Foot::Left, trail_frame: 2, lead_foot: Foot::Right, lead_frame: 5 };
    let (length, width) = compute_step_length_width(&s, &walk).unwrap();
    assert_relative_eq!(length, 0.5, epsilon = 1e-12);
    assert_eq!(width, 0.0);
}

#[test]
fn synthetic_step_length_and_width_are_recovered() {
    let g = gait(GaitSpec { step_length_m: 0.5, step_width_m: 0.12, ..spec(110.0) });
    let (_, f) = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
    assert_relative_eq!(f.step_length_mean_m, 0.5, max_relative = 0.03);
    assert!((f.step_width_mean_m - 0.12).abs() <= 0.005, "{}", f.step_width_mean_m);
}

#[test]
fn straight_line_speed() {
    let walk = built_walk(151, 30.0, |f, p| p[h36m::PELVIS] = [f as f64 / 30.0, 0.0, 0.9]);
    let ev = hs_only(&[0, 60, 120], &[30, 90, 150]);
    assert_relative_eq!(compute_walking_speed(&walk, &ev).unwrap(), 1.0, epsilon = 1e-12);

    let still = built_walk(151, 30.0, |_, p| p[h36m::PELVIS] = [0.3, 0.1, 0.9]);
    assert_eq!(compute_walking_speed(&still, &ev).unwrap(), 0.0);
}

#[test]
fn short_event_span_has_no_speed() {
    let walk = built_walk(40, 30.0, |f, p| p[h36m::PELVIS] = [f as f64 / 30.0, 0.0, 0.9]);
    let err = compute_walking_speed(&walk, &hs_only(&[0, 20], &[10])).unwrap_err();
    assert!(matches!(err, Error::InsufficientGait(_)));
}

#[test]
fn synthetic_speed_matches_generator() {
    let g = gait(GaitSpec { step_length_m: 0.5, ..spec(120.0) });
    let (_, f) = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
    assert_relative_eq!(f.walking_speed_m_per_s, g.spec.speed_m_per_s(), max_relative = 0.03);
    assert_relative_eq!(f.walking_speed_m_per_s, 1.0, max_relative = 0.03);
}

#[test]
fn cadence_arithmetic() {
    // 21 alternating strikes every 15 frames: 20 steps over 10 s
    let left: Vec<usize> = (0..=20).step_by(2).map(|k| 15 * k).collect();
    let right: Vec<usize> = (1..20).step_by(2).map(|k| 15 * k).collect();
    assert_relative_eq!(compute_cadence(&hs_only(&left, &right), 30.0).unwrap(), 120.0, epsilon = 1e-9);
    assert_relative_eq!(compute_cadence(&hs_only(&[0, 30], &[15]), 30.0).unwrap(), 120.0, epsilon = 1e-9);
    assert!(compute_cadence(&hs_only(&[0], &[15]), 30.0).is_err());
}

#[test]
fn synthetic_cadence_sweep() {
    for c in [80.0, 100.0, 120.0] {
        let g = gait(GaitSpec { duration_s: 15.0, ..spec(c) });
        let (_, f) = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
        assert_relative_eq!(f.cadence_steps_per_min, c, max_relative = 0.02);
        assert_relative_eq!(f.cadence_steps_per_min, 60.0 / f.step_time_mean_s, max_relative = 0.05);
    }
}

/// Two steps whose single-support windows see the given sacrum and ankle
/// mediolateral positions.
fn mos_fixture(sacrum_ml: f64, left_ml: f64, right_ml: f64) -> (RawWalk, GaitEvents) {
    let walk = built_walk(61, 30.0, |_, p| {
        p[h36m::PELVIS] = [0.0, sacrum_ml, 0.9];
        p[h36m::L_ANKLE] = [0.0, left_ml, 0.08];
        p[h36m::R_ANKLE] = [0.0, right_ml, 0.08];
    });
    let events = GaitEvents {
        left: FootEvents { heel_strikes: vec![0, 30], toe_offs: vec![] },
        right: FootEvents { heel_strikes: vec![15, 45], toe_offs: vec![5, 35] },
    };
    (walk, events)
}

#[test]
fn mos_is_zero_with_com_over_stance_ankle() {
    // left stance from right toe-off to right heel strike, sacrum over left ankle
    let (walk, events) = mos_fixture(0.1, 0.1, -0.1);
    let mos = compute_mos(&walk, &events, Some(0.9)).unwrap();
    assert_eq!(mos.len(), 2);
    assert_relative_eq!(mos[0], 0.0, epsilon = 1e-12);
}

#[test]
fn mos_with_static_com_inside_boundary() {
    let (walk, events) = mos_fixture(0.05, 0.1, -0.1);
    let mos = compute_mos(&walk, &events, Some(0.9)).unwrap();
    assert_relative_eq!(mos[0], 0.05, epsilon = 1e-12);
}

#[test]
fn mos_negative_when_com_passes_the_ankle() {
    let (walk, events) = mos_fixture(0.13, 0.1, -0.1);
    assert_relative_eq!(compute_mos(&walk, &events, Some(0.9)).unwrap()[0], -0.03, epsilon = 1e-12);
}

#[test]
fn mos_matches_pendulum_closed_form() {
    // sway a·cos(2π(t − t_mid)/T) peaks toward the stance ankle at
    // mid-single-support; with XCOM = x + ẋ/ω0 the margin's minimum over the
    // window is W/2 − a·√(1 + (2π/(T·ω0))²).
    for (cadence, a, w) in [(120.0, 0.02, 0.12), (100.0, 0.03, 0.15), (90.0, 0.015, 0.1)] {
        let g = gait(GaitSpec { sway_amplitude_m: a, step_width_m: w, ..spec(cadence) });
        let leg = 0.87;
        let omega0 = (9.81f64 / leg).sqrt();
        let period = 2.0 * 60.0 / cadence;
        let expected = w / 2.0 - a * (1.0 + (TAU / (period * omega0)).powi(2)).sqrt();
        let mos = compute_mos(&g.walk, &truth_events(&g), Some(leg)).unwrap();
        assert!(mos.len() >= 10);
        for m in mos {
            assert!((m - expected).abs() <= 1e-3, "cadence {cadence}: {m} vs {expected}");
        }
    }
}

#[test]
fn aggregate_identical_steps_has_zero_spread() {
    let s = StepMeasures {
        step_times_s: vec![0.5; 4],
        step_lengths_m: vec![0.6; 4],
        step_widths_m: vec![0.1; 4],
        mos_m: vec![0.04; 3],
    };
    let f = aggregate_features(&s, 120.0, 1.2).unwrap();
    assert_eq!((f.step_time_std_s, f.step_length_std_m, f.step_width_std_m, f.mos_std_m), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(f.n_steps, 4);
}

#[test]
fn aggregate_uses_sample_std_and_mos_minimum() {
    let s = StepMeasures {
        step_times_s: vec![0.4, 0.6],
        step_lengths_m: vec![0.5, 0.5],
        step_widths_m: vec![0.1, 0.1],
        mos_m: vec![0.02, -0.01, 0.03],
    };
    let f = aggregate_features(&s, 120.0, 1.0).unwrap();
    assert_relative_eq!(f.step_time_mean_s, 0.5, epsilon = 1e-12);
    assert_relative_eq!(f.step_time_std_s, 0.02f64.sqrt(), epsilon = 1e-12);
    assert_relative_eq!(f.step_time_std_s, 0.1414, epsilon = 1e-4);
    assert_eq!(f.mos_min_m, -0.01);
    assert!(aggregate_features(&StepMeasures { step_times_s: vec![0.5], ..s }, 1.0, 1.0).is_err());
}

#[test]
fn features_translate_invariantly() {
    let g = gait(GaitSpec { noise_std_m: 0.002, ..spec(105.0) });
    let (_, base) = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
    let mut moved = g.walk.clone();
    moved.motion.translate(&[3.5, -2.0, 0.4]);
    let (_, f) = walk_features(&moved, &FeatureConfig::default()).unwrap();
    for (a, b) in base.to_array().iter().zip(f.to_array()) {
        assert_relative_eq!(*a, b, epsilon = 1e-9, max_relative = 1e-9);
    }
}

#[test]
fn spatial_scaling_scales_lengths_only() {
    // Without sway the XCOM velocity term vanishes, so MOS is purely a length.
    let g = gait(GaitSpec { sway_amplitude_m: 0.0, ..spec(110.0) });
    let events = truth_events(&g);
    let base = compute_features(&g.walk, &events, None).unwrap();
    for s in [0.5, 1.7] {
        let mut scaled = g.walk.clone();
        scaled.motion.scale(s);
        let f = compute_features(&scaled, &events, None).unwrap();
        assert_relative_eq!(f.step_length_mean_m, s * base.step_length_mean_m, max_relative = 1e-9);
        assert_relative_eq!(f.step_width_mean_m, s * base.step_width_mean_m, max_relative = 1e-9);
        assert_relative_eq!(f.step_width_std_m, s * base.step_width_std_m, epsilon = 1e-12, max_relative = 1e-9);
        assert_relative_eq!(f.walking_speed_m_per_s, s * base.walking_speed_m_per_s, max_relative = 1e-9);
        assert_relative_eq!(f.mos_min_m, s * base.mos_min_m, max_relative = 1e-9);
        assert_eq!(f.cadence_steps_per_min, base.cadence_steps_per_min);
        assert_eq!(f.step_time_mean_s, base.step_time_mean_s);
        assert_eq!(f.n_steps, base.n_steps);
    }
}

#[test]
fn mos_velocity_term_scales_with_power_three_halves() {
    // g is the one dimensional constant: v/ω0 scales as s·√s when the leg
    // length scales with the body.
    let g = gait(GaitSpec { sway_amplitude_m: 0.02, step_width_m: 0.0, ..spec(110.0) });
    let events = truth_events(&g);
    let walk_at = |s: f64| {
        let mut w = g.walk.clone();
        w.motion.scale(s);
        w
    };
    // a vanishing leg length switches the velocity term off
    let m1 = compute_mos(&walk_at(1.0), &events, Some(1.0)).unwrap();
    let m4 = compute_mos(&walk_at(4.0), &events, Some(4.0)).unwrap();
    let m1_static = compute_mos(&walk_at(1.0), &events, Some(1e-12)).unwrap();
    let m4_static = compute_mos(&walk_at(4.0), &events, Some(4e-12)).unwrap();
    for k in 0..m1.len() {
        assert_relative_eq!(m4_static[k], 4.0 * m1_static[k], max_relative = 1e-6);
        assert!((m4[k] - 4.0 * m1[k]).abs() > 1e-4, "velocity term should not scale linearly");
    }
}

#[test]
fn extraction_is_deterministic() {
    let g = gait(GaitSpec { noise_std_m: 0.004, seed: 9, ..spec(100.0) });
    let a = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
    let b = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
    assert_eq!(a.0, b.0);
    let bits = |f: &GaitFeatureVector| f.to_array().map(f64::to_bits);
    assert_eq!(bits(&a.1), bits(&b.1));
}

#[test]
fn events_past_the_walk_are_rejected() {
    let g = gait(spec(120.0));
    let mut ev = truth_events(&g);
    ev.left.heel_strikes.push(10_000);
    assert!(matches!(compute_features(&g.walk, &ev, None), Err(Error::Validation(_))));
}

#[test]
fn csv_round_trip_is_exact() {
    let g = gait(GaitSpec { noise_std_m: 0.003, ..spec(115.0) });
    let (_, f) = walk_features(&g.walk, &FeatureConfig::default()).unwrap();
    let rows = vec![
        FeatureRow {
            walk_id: "w1".into(),
            participant: ParticipantId::new("SUB01").unwrap(),
            medication: MedicationState::On,
            label: UpdrsScore::new(2).unwrap(),
            features: f,
        },
        FeatureRow {
            walk_id: "w2".into(),
            participant: ParticipantId::new("SUB02").unwrap(),
            medication: MedicationState::Off,
            label: UpdrsScore::new(0).unwrap(),
            features: GaitFeatureVector { mos_min_m: -0.0125, ..f },
        },
    ];
    let mut buf = Vec::new();
    write_features_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("walk_id,participant,medication,label,cadence_steps_per_min,"));
    assert!(text.lines().next().unwrap().ends_with(",mos_std_m,n_steps"));
    assert_eq!(read_features_csv(buf.as_slice()).unwrap(), rows);
}

#[test]
fn csv_missing_column_is_a_parse_error() {
    let text = "walk_id,participant,medication,label,cadence_steps_per_min\nw,p,ON,1,100\n";
    assert!(matches!(read_features_csv(text.as_bytes()), Err(Error::Parse { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn translation_never_changes_features(dx in -5.0..5.0f64, dy in -5.0..5.0f64, dz in -1.0..1.0f64) {
        let g = gait(spec(110.0));
        let events = truth_events(&g);
        let base = compute_features(&g.walk, &events, Some(0.9)).unwrap();
        let mut moved = g.walk.clone();
        moved.motion.translate(&[dx, dy, dz]);
        let f = compute_features(&moved, &events, Some(0.9)).unwrap();
        for (a, b) in base.to_array().iter().zip(f.to_array()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sample_std_matches_two_pass_formula(v in prop::collection::vec(-10.0..10.0f64, 2..40)) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| x * x).sum::<f64>() / (n - 1.0) - m * m * n / (n - 1.0);
        prop_assert!((sample_std(&v) - var.max(0.0).sqrt()).abs() <= 1e-6);
    }
}
