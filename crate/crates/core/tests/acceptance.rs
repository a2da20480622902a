//! End-to-end acceptance suite. Each test covers one numbered criterion and
//! prints a single pass line; tolerances are fixed here and must not be
//! loosened to make a failing build green.

use std::path::PathBuf;
use std::sync::OnceLock;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use offnav::harness::{run_ablation, AblationMode};
use offnav::instruction::{compile_mission, parse_directive, AdverbLexicon, InstructionError, LegTrigger};
use offnav::mhe::{mhe_estimate, MheOptions, MheWindow, PoseMeasurement};
use offnav::perception::{
    argmax_mask, coverage_bin_index, denoise, dice, LabelMask, ScoreMap,
};
use offnav::planner::{solve, MpcConfig, MpcProblem};
use offnav::projection::{ground_to_pixel, horizon_row, pixel_to_ground, CameraIntrinsics, CameraMount, GroundPoint};
use offnav::scenario::load_scenario;
use offnav::sim::{Outcome, RunLog, Scenario};
use offnav::vehicle::{step, ControlInput, VehicleParams, VehicleState};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn ablation_runs() -> &'static Vec<(AblationMode, u64, RunLog)> {
    static RUNS: OnceLock<Vec<(AblationMode, u64, RunLog)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let scn = load_scenario(&scenario_path("two_landmark.scn")).unwrap();
        assert!((scn.render_noise_p - 0.05).abs() < 1e-12, "ablation scenario pins p = 0.05");
        let modes = [AblationMode::Full, AblationMode::NoAdverbs, AblationMode::NoTerrains];
        let seeds: Vec<u64> = (0..20).collect();
        run_ablation(&scn, &modes, &seeds).unwrap()
    })
}

fn count(runs: &[(AblationMode, u64, RunLog)], mode: AblationMode, pred: impl Fn(&RunLog) -> bool) -> usize {
    runs.iter().filter(|(m, _, log)| *m == mode && pred(log)).count()
}

#[test]
fn criterion_1_two_landmark_ablation() {
    let runs = ablation_runs();
    let full_ok = count(runs, AblationMode::Full, |l| l.outcome == Outcome::Success);
    let na_hazard = count(runs, AblationMode::NoAdverbs, |l| l.outcome == Outcome::HazardSpeedViolation);
    let nt_fail = count(runs, AblationMode::NoTerrains, |l| {
        matches!(l.outcome, Outcome::BlockedCellEntered | Outcome::StepLimitExceeded)
    });
    let nt_success = count(runs, AblationMode::NoTerrains, |l| l.outcome == Outcome::Success);
    assert!(full_ok >= 19, "full instruction: {full_ok}/20 Success");
    assert!(na_hazard >= 18, "no-adverbs: {na_hazard}/20 HazardSpeedViolation");
    assert!(nt_fail >= 18, "no-terrains: {nt_fail}/20 blocked or stalled");
    assert_eq!(nt_success, 0, "no-terrains must never succeed");
    println!("criterion 1 (two-landmark ablation): pass ({full_ok}/20, {na_hazard}/20, {nt_fail}/20)");
}

#[test]
fn criterion_2_speed_constraint_guarantee() {
    let mut violations = 0usize;
    let mut steps = 0usize;
    for (_, _, log) in ablation_runs() {
        for r in &log.records {
            steps += 1;
            if r.true_state.speed > log.leg_limits[r.leg_index] + 1e-6 {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0, "speed above the active leg limit in {violations} of {steps} steps");
    println!("criterion 2 (speed-constraint guarantee): pass (0/{steps} steps over the cap)");
}

#[test]
fn criterion_3_turning_radius() {
    let p = VehicleParams { wheelbase: 0.5, max_steering: 0.6, max_accel: 5.0, max_speed: 10.0 };
    let u = ControlInput { steering: 0.3, accel: 0.0 };
    let mut s = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 1.0 };
    let expected = 0.5 / 0.3f64.tan();
    // One full revolution; fit the radius from the swept positions.
    let period = 2.0 * std::f64::consts::PI * expected / s.speed;
    let n = (period / 0.01).ceil() as usize;
    let (mut min_r, mut max_r) = (f64::INFINITY, 0.0f64);
    let center = (0.0, expected); // instantaneous center for heading 0 at origin
    for _ in 0..n {
        s = step(&s, &u, 0.01, &p);
        let r = (s.x - center.0).hypot(s.y - center.1);
        min_r = min_r.min(r);
        max_r = max_r.max(r);
    }
    let worst = (max_r - expected).abs().max((min_r - expected).abs());
    assert!(worst / expected < 1e-3, "radius error {worst:.2e} vs {expected}");
    assert!((expected - 1.61637).abs() < 1e-4);
    println!("criterion 3 (turning radius): pass (max radial error {:.2e} m)", worst);
}

#[test]
fn criterion_4_projection_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let width = rng.gen_range(64..320usize);
        let height = rng.gen_range(48..240usize);
        let intr = CameraIntrinsics {
            fx: rng.gen_range(20.0..250.0),
            fy: rng.gen_range(20.0..250.0),
            cx: width as f64 / 2.0 + rng.gen_range(-5.0..5.0),
            cy: height as f64 / 2.0 + rng.gen_range(-5.0..5.0),
            width,
            height,
        };
        let mount = CameraMount {
            height_above_ground: rng.gen_range(0.3..2.0),
            pitch: rng.gen_range(0.05..0.6),
            longitudinal_offset: rng.gen_range(-1.0..1.0),
            lateral_offset: rng.gen_range(-1.0..1.0),
        };
        intr.validate().unwrap();
        mount.validate().unwrap();
        let hrow = horizon_row(&intr, &mount);
        let lo = hrow + 5.0;
        if lo >= height as f64 - 1.0 {
            continue;
        }
        let row = rng.gen_range(lo..height as f64);
        let col = rng.gen_range(0.0..width as f64);
        let g = pixel_to_ground(row, col, &intr, &mount).unwrap();
        let (r2, c2) = ground_to_pixel(g, &intr, &mount).unwrap();
        worst = worst.max((r2 - row).abs().max((c2 - col).abs()));
    }
    assert!(worst < 1e-9, "round-trip pixel error {worst:.2e}");
    println!("criterion 4 (projection round trip): pass (max error {worst:.2e} px)");
}

fn brute_dice(a: &LabelMask, b: &LabelMask, class: u8) -> f64 {
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for i in 0..a.class_ids.len() {
        let ia = a.class_ids[i] == class;
        let ib = b.class_ids[i] == class;
        inter += (ia && ib) as usize;
        na += ia as usize;
        nb += ib as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

fn brute_bin(coverage: f64) -> usize {
    for i in 0..10 {
        let lo = i as f64 / 10.0;
        let hi = (i + 1) as f64 / 10.0;
        if coverage >= lo && (coverage < hi || i == 9) {
            return i;
        }
    }
    unreachable!()
}

#[test]
fn criterion_5_dice_oracle_equivalence() {
    let labels = vec!["other".to_string(), "road".to_string()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let p: f64 = rng.gen_range(0.0..1.0);
        let make = |rng: &mut ChaCha8Rng| LabelMask {
            width: 16,
            height: 16,
            labels: labels.clone(),
            class_ids: (0..256).map(|_| (rng.gen::<f64>() < p) as u8).collect(),
        };
        let a = make(&mut rng);
        let b = make(&mut rng);
        let got = dice(&a, &b, "road").unwrap();
        assert_eq!(got, brute_dice(&a, &b, 1), "dice mismatch");
        let coverage = a.class_ids.iter().filter(|&&c| c == 1).count() as f64 / 256.0;
        assert_eq!(coverage_bin_index(coverage), brute_bin(coverage), "bin mismatch at {coverage}");
    }
    // Exact edge coverages, including both ends of every bin.
    for k in 0..=100 {
        let c = k as f64 / 100.0;
        assert_eq!(coverage_bin_index(c), brute_bin(c), "bin mismatch at {c}");
    }
    println!("criterion 5 (dice oracle equivalence): pass (1000 pairs exact)");
}

fn one_hot(labels: &[&str], w: usize, h: usize, ids: &[u8]) -> ScoreMap {
    let plane = w * h;
    let mut scores = vec![0.0f32; labels.len() * plane];
    for (px, &id) in ids.iter().enumerate() {
        scores[id as usize * plane + px] = 1.0;
    }
    ScoreMap::new(w, h, labels.iter().map(|s| s.to_string()).collect(), scores).unwrap()
}

#[test]
fn criterion_6_denoiser_efficacy() {
    let (w, h) = (128usize, 128usize);
    let labels = ["background", "road", "rock"];
    let mut sum_noisy = 0.0;
    let mut sum_denoised = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Four well-separated discs, radius 12..18 px (far above the 12 px
        // blob floor), over a two-class foreground.
        let mut ids = vec![0u8; w * h];
        let mut placed: Vec<(i64, i64, i64)> = Vec::new();
        while placed.len() < 4 {
            let class = rng.gen_range(1..3) as u8;
            let cx = rng.gen_range(20..(w as i64 - 20));
            let cy = rng.gen_range(20..(h as i64 - 20));
            let rad = rng.gen_range(12..19) as i64;
            if placed
                .iter()
                .any(|&(px, py, pr)| (px - cx).pow(2) + (py - cy).pow(2) < (pr + rad + 8).pow(2))
            {
                continue;
            }
            placed.push((cx, cy, rad));
            for r in 0..h as i64 {
                for c in 0..w as i64 {
                    if (r - cy).pow(2) + (c - cx).pow(2) <= rad * rad {
                        ids[(r * w as i64 + c) as usize] = class;
                    }
                }
            }
        }
        let clean = LabelMask {
            width: w,
            height: h,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            class_ids: ids.clone(),
        };
        // 10% salt-and-pepper: replace with a uniformly random other class.
        let mut noisy_ids = ids;
        for px in noisy_ids.iter_mut() {
            if rng.gen::<f64>() < 0.10 {
                let other = rng.gen_range(0..2) as u8;
                *px = if other >= *px { other + 1 } else { other };
            }
        }
        let noisy_map = one_hot(&labels, w, h, &noisy_ids);
        let noisy_mask = argmax_mask(&noisy_map);
        let denoised = denoise(&noisy_map, &[9, 5, 3], 0.25).unwrap();
        for l in &labels[1..] {
            sum_noisy += dice(&noisy_mask, &clean, l).unwrap() / 2.0;
            sum_denoised += dice(&denoised, &clean, l).unwrap() / 2.0;
        }
    }
    let mean_noisy = sum_noisy / 100.0;
    let mean_denoised = sum_denoised / 100.0;
    assert!(mean_denoised >= 0.95, "denoised mean dice {mean_denoised:.4} < 0.95");
    assert!(
        mean_denoised - mean_noisy >= 0.03,
        "improvement {:.4} < 0.03",
        mean_denoised - mean_noisy
    );
    println!(
        "criterion 6 (denoiser efficacy): pass (noisy {mean_noisy:.4} -> denoised {mean_denoised:.4})"
    );
}

fn mhe_case(true_wb: f64, noise: Option<(&mut ChaCha8Rng, f64, f64)>) -> MheWindow {
    let plant = VehicleParams { wheelbase: true_wb, max_steering: 0.6, max_accel: 3.0, max_speed: 6.0 };
    let dt = 0.05;
    let n = 30;
    let mut s = VehicleState { x: 0.0, y: 0.0, heading: 0.1, speed: 1.8 };
    let mut states = vec![s];
    let mut controls = Vec::new();
    for k in 0..n - 1 {
        let u = ControlInput {
            steering: 0.35 * (k as f64 * 0.4).sin(),
            accel: 0.3 * (k as f64 * 0.23).cos(),
        };
        controls.push(u);
        s = step(&s, &u, dt, &plant);
        states.push(s);
    }
    let mut rng_noise = noise;
    let measurements: Vec<PoseMeasurement> = states
        .iter()
        .map(|st| {
            let (dx, dy, dh) = match rng_noise.as_mut() {
                Some((rng, sp, sh)) => {
                    let g = |rng: &mut ChaCha8Rng| {
                        let u1: f64 = rng.gen_range(1e-12..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    };
                    (*sp * g(rng), *sp * g(rng), *sh * g(rng))
                }
                None => (0.0, 0.0, 0.0),
            };
            PoseMeasurement { x: st.x + dx, y: st.y + dy, heading: st.heading + dh }
        })
        .collect();
    MheWindow {
        dt,
        measurements,
        controls,
        sigma_pos: 0.01,
        sigma_heading: 0.005,
        prior: states[0],
        prior_weight: 1.0,
    }
}

#[test]
fn criterion_7_mhe_parameter_recovery() {
    let nominal = VehicleParams { wheelbase: 0.55, max_steering: 0.6, max_accel: 3.0, max_speed: 6.0 };
    let opts = MheOptions::default();

    let window = mhe_case(0.5, None);
    let sol = mhe_estimate(&window, &nominal, &opts).unwrap();
    let noiseless_err = (sol.wheelbase - 0.5).abs() / 0.5;
    assert!(noiseless_err <= 0.01, "noiseless wheelbase error {:.3}%", noiseless_err * 100.0);

    let mut good = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = mhe_case(0.5, Some((&mut rng, 0.01, 0.005)));
        if let Ok(sol) = mhe_estimate(&window, &nominal, &opts) {
            if (sol.wheelbase - 0.5).abs() / 0.5 <= 0.10 {
                good += 1;
            }
        }
    }
    assert!(good >= 18, "wheelbase within 10% in only {good}/20 noisy seeds");
    println!(
        "criterion 7 (MHE parameter recovery): pass (noiseless {:.3}%, noisy {good}/20)",
        noiseless_err * 100.0
    );
}

#[test]
fn criterion_8_mpc_properties() {
    let params = VehicleParams { wheelbase: 0.5, max_steering: 0.5, max_accel: 2.0, max_speed: 4.0 };
    let cfg = MpcConfig { max_iterations: 30, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let limit = rng.gen_range(0.5..4.0);
        let state = VehicleState {
            x: rng.gen_range(-5.0..5.0),
            y: rng.gen_range(-5.0..5.0),
            heading: rng.gen_range(-3.1..3.1),
            // The invariant is forward: a compliant start stays compliant.
            speed: rng.gen_range(0.0..limit),
        };
        let goal = GroundPoint { x: rng.gen_range(-10.0..10.0), y: rng.gen_range(-10.0..10.0) };
        let prob = MpcProblem { state, goal, speed_limit: limit, params };
        let sol = solve(&prob, &cfg, None);
        // Feasibility: actuator boxes and the hard speed cap hold on the
        // entire planned trajectory.
        for u in &sol.controls {
            assert!(u.steering.abs() <= params.max_steering + 1e-12);
            assert!(u.accel.abs() <= params.max_accel + 1e-12);
        }
        for s in &sol.trajectory {
            assert!(s.speed <= limit + 1e-9, "planned speed {} over cap {limit}", s.speed);
        }
        // Line search never increases the cost.
        for w in sol.cost_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "cost increased {} -> {}", w[0], w[1]);
        }
        // Mirror equivariance on a subsample.
        if i % 10 == 0 {
            let m_prob = MpcProblem {
                state: VehicleState { x: state.x, y: -state.y, heading: -state.heading, speed: state.speed },
                goal: GroundPoint { x: goal.x, y: -goal.y },
                speed_limit: limit,
                params,
            };
            let m_sol = solve(&m_prob, &cfg, None);
            for (u, mu) in sol.controls.iter().zip(&m_sol.controls) {
                assert!((u.steering + mu.steering).abs() <= 1e-6, "mirror steering asymmetry");
                assert!((u.accel - mu.accel).abs() <= 1e-6, "mirror accel asymmetry");
            }
        }
    }
    println!("criterion 8 (MPC properties): pass (1000 problems feasible, monotone, mirror-symmetric)");
}

#[test]
fn criterion_9_long_run_loop() {
    let scn: Scenario = load_scenario(&scenario_path("loop.scn")).unwrap();
    assert!((scn.render_noise_p - 0.05).abs() < 1e-12, "loop scenario pins p = 0.05");
    assert_eq!(scn.goal_laps, 3);
    let start = std::time::Instant::now();
    let log = offnav::sim::run_episode(&scn).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(log.outcome, Outcome::Success, "loop ended with {}", log.outcome);
    assert!(log.path_length >= 500.0, "only {:.1} m covered", log.path_length);
    let road = scn.grid.labels.iter().position(|l| l == "road").unwrap() as u8;
    for r in &log.records {
        assert_eq!(
            scn.grid.class_at(r.true_state.x, r.true_state.y),
            road,
            "left the road at step {} ({:.2}, {:.2})",
            r.step,
            r.true_state.x,
            r.true_state.y
        );
    }
    assert!(elapsed.as_secs() < 60, "loop took {elapsed:?}");
    println!(
        "criterion 9 (long-run loop): pass ({:.1} m, {} steps, {elapsed:?})",
        log.path_length, log.steps
    );
}

#[test]
fn criterion_10_parser_golden_suite() {
    let lex = AdverbLexicon::default();
    let base = "★ asphalt: quickly\n★ asphalt: slowly\n★ sandy road: slowly\n# parked car\n# animal sculpture";

    let expect_base = |text: &str| {
        let plan = compile_mission(&parse_directive(text).unwrap(), &lex).unwrap();
        assert_eq!(plan.legs.len(), 3);
        assert_eq!(plan.legs[0].preferred_terrain, "asphalt");
        assert_eq!(plan.legs[0].speed_limit, 3.0);
        assert_eq!(plan.legs[0].trigger, LegTrigger::StartOfMission);
        assert_eq!(plan.legs[1].preferred_terrain, "asphalt");
        assert_eq!(plan.legs[1].speed_limit, 1.5);
        assert_eq!(plan.legs[1].trigger, LegTrigger::Landmark("parked car".into()));
        assert_eq!(plan.legs[2].preferred_terrain, "sandy road");
        assert_eq!(plan.legs[2].speed_limit, 1.5);
        assert_eq!(plan.legs[2].trigger, LegTrigger::Landmark("animal sculpture".into()));
        assert_eq!(plan.terrain_vocabulary, vec!["asphalt", "sandy road"]);
        assert_eq!(plan.landmark_vocabulary, vec!["parked car", "animal sculpture"]);
    };

    // The reference directive.
    expect_base(base);

    // 1. Landmark lines moved ahead of the terrain lines: same plan.
    expect_base("# parked car\n# animal sculpture\n★ asphalt: quickly\n★ asphalt: slowly\n★ sandy road: slowly");

    // 2. Junk lines interspersed: ignored.
    expect_base("Sure! Here is the plan:\n★ asphalt: quickly\n(brisk start)\n★ asphalt: slowly\n★ sandy road: slowly\n# parked car\n# animal sculpture\nGood luck!");

    // 3. Case and spacing variations normalize away.
    expect_base("★  ASPHALT :  Quickly\n★ Asphalt: SLOWLY\n★  Sandy Road  : slowly\n#  Parked Car\n# ANIMAL SCULPTURE");

    // 4. Terrain line without a colon is malformed.
    let bad = base.replace("★ asphalt: quickly", "★ asphalt quickly");
    assert!(matches!(parse_directive(&bad), Err(InstructionError::MalformedTerrainLine(_))));

    // 5. Terrain line with two colons is malformed.
    let bad = base.replace("★ asphalt: quickly", "★ asphalt: quickly: very");
    assert!(matches!(parse_directive(&bad), Err(InstructionError::MalformedTerrainLine(_))));

    // 6. A missing landmark breaks the pair/trigger balance.
    let d = parse_directive(&base.replace("\n# animal sculpture", "")).unwrap();
    assert!(matches!(
        compile_mission(&d, &lex),
        Err(InstructionError::TriggerCountMismatch { pairs: 3, landmarks: 1 })
    ));

    // 7. An extra landmark does too.
    let d = parse_directive(&format!("{base}\n# gate")).unwrap();
    assert!(matches!(
        compile_mission(&d, &lex),
        Err(InstructionError::TriggerCountMismatch { pairs: 3, landmarks: 3 })
    ));

    // 8. Unknown adverb surfaces by name.
    let d = parse_directive(&base.replace("quickly", "leisurely")).unwrap();
    match compile_mission(&d, &lex) {
        Err(InstructionError::UnknownAdverb(a)) => assert_eq!(a, "leisurely"),
        other => panic!("expected UnknownAdverb, got {other:?}"),
    }

    // 9. No terrain lines at all.
    assert!(matches!(
        parse_directive("# parked car\n# animal sculpture"),
        Err(InstructionError::NoTerrainLines)
    ));

    // 10. Consecutive identical (terrain, speed) legs merge, dropping the
    //     later trigger; numeric adverbs resolve as themselves.
    let text = "★ asphalt: quickly\n★ asphalt: 3.0\n★ sandy road: slowly\n# parked car\n# animal sculpture";
    let plan = compile_mission(&parse_directive(text).unwrap(), &lex).unwrap();
    assert_eq!(plan.legs.len(), 2);
    assert_eq!(plan.legs[0].speed_limit, 3.0);
    assert_eq!(plan.legs[1].preferred_terrain, "sandy road");
    assert_eq!(plan.legs[1].trigger, LegTrigger::Landmark("animal sculpture".into()));

    println!("criterion 10 (parser golden suite): pass (reference + 10 variants)");
}
