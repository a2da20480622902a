//! Deterministic world model and mission executor.
//!
//! One episode closes the loop: render a synthetic score map from the true
//! pose, denoise it, check landmark triggers, pick a goal pixel on the
//! preferred terrain, project it to the motion plane, solve the MPC, apply
//! the first control to the true plant, and feed a noisy pose measurement to
//! the MHE whose smoothed state (and wheelbase estimate) drive the next
//! iteration.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use thiserror::Error;

use crate::instruction::{
    compile_mission, parse_directive, AdverbLexicon, InstructionError, LegTrigger, MissionPlan,
};
use crate::mhe::{mhe_estimate_warm, MheError, MheOptions, MheWindow, PoseMeasurement};
use crate::perception::{denoise, detect_landmark, select_goal_pixel, LabelMask, PerceptionError, ScoreMap};
use crate::planner::{shift_warm_start, solve, MpcConfig, MpcProblem};
use crate::projection::{horizon_row, pixel_to_ground, CameraIntrinsics, CameraMount, HORIZON_GUARD_PX};
use crate::vehicle::{step, wrap_angle, ControlInput, VehicleParams, VehicleState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error(transparent)]
    Instruction(#[from] InstructionError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

/// Minimum distance the instantaneous goal point is pushed out to, along
/// the bearing of the selected terrain centroid.
pub const GOAL_LOOKAHEAD_M: f64 = 6.0;

/// Terrain classes on a regular grid. Row 0 sits at y = 0; cell (r, c)
/// covers x in [c, c+1)*cell_size, y in [r, r+1)*cell_size.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    /// Labels, background "other" first.
    pub labels: Vec<String>,
    /// Impassable flag per class.
    pub blocked: Vec<bool>,
    /// Row-major class ids.
    pub class_ids: Vec<u8>,
}

impl TerrainGrid {
    pub fn class_at(&self, x: f64, y: f64) -> u8 {
        let c = (x / self.cell_size).floor();
        let r = (y / self.cell_size).floor();
        if r < 0.0 || c < 0.0 || r >= self.rows as f64 || c >= self.cols as f64 {
            return 0;
        }
        self.class_ids[r as usize * self.cols + c as usize]
    }

    pub fn is_blocked_at(&self, x: f64, y: f64) -> bool {
        self.blocked[self.class_at(x, y) as usize]
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.rows * self.cols == 0 || self.class_ids.len() != self.rows * self.cols {
            return Err(SimError::ScenarioInvalid("terrain grid is empty or inconsistent".into()));
        }
        if self.labels.first().map(String::as_str) != Some("other") {
            return Err(SimError::ScenarioInvalid("first terrain label must be \"other\"".into()));
        }
        if self.blocked.len() != self.labels.len() {
            return Err(SimError::ScenarioInvalid("blocked flags do not cover all labels".into()));
        }
        if let Some(&id) = self.class_ids.iter().find(|&&id| id as usize >= self.labels.len()) {
            return Err(SimError::ScenarioInvalid(format!("grid class id {id} out of range")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub visual_radius: f64,
    pub trigger_radius: f64,
}

/// Axis-aligned region where exceeding the speed threshold fails the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardZone {
    pub rect: Rect,
    pub speed_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionConfig {
    pub kernels: Vec<usize>,
    pub confidence_floor: f32,
    pub min_landmark_pixels: usize,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig { kernels: vec![9, 5, 3], confidence_floor: 0.4, min_landmark_pixels: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub horizon: usize,
    pub sigma_pos: f64,
    pub sigma_heading: f64,
    pub prior_weight: f64,
    pub options: MheOptions,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            horizon: 20,
            sigma_pos: 0.01,
            sigma_heading: 0.005,
            prior_weight: 10.0,
            options: MheOptions { max_iterations: 8, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: TerrainGrid,
    pub landmarks: Vec<Landmark>,
    pub hazards: Vec<HazardZone>,
    pub start: VehicleState,
    pub goal: Rect,
    /// Number of distinct goal-region entries required for Success; >1 turns
    /// the goal into a lap line for looped courses.
    pub goal_laps: usize,
    pub intrinsics: CameraIntrinsics,
    pub mount: CameraMount,
    /// Offline directive in the `★`/`#` grammar; the fallback when no
    /// language-model call is made (or when one fails).
    pub directive_text: String,
    pub instruction_text: Option<String>,
    pub use_llm: bool,
    pub lexicon: AdverbLexicon,
    pub vehicle: VehicleParams,
    /// True plant wheelbase = nominal * this factor; the model mismatch the
    /// MHE has to absorb.
    pub plant_wheelbase_factor: f64,
    pub render_noise_p: f64,
    pub seed: u64,
    pub step_limit: usize,
    pub dt: f64,
    pub mpc: MpcConfig,
    pub estimator: EstimatorConfig,
    pub perception: PerceptionConfig,
    /// Safety margin subtracted from the leg limit before it is handed to
    /// the MPC, covering estimation error on the commanded speed.
    pub speed_margin: f64,
}

impl Scenario {
    pub fn compile_plan(&self) -> Result<MissionPlan, SimError> {
        let directive = parse_directive(&self.directive_text)?;
        Ok(compile_mission(&directive, &self.lexicon)?)
    }

    pub fn validate(&self) -> Result<MissionPlan, SimError> {
        self.grid.validate()?;
        self.intrinsics
            .validate()
            .and_then(|_| self.mount.validate())
            .map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
        if !self.vehicle.is_valid() {
            return Err(SimError::ScenarioInvalid("vehicle parameters out of range".into()));
        }
        if !(0.0..1.0).contains(&self.render_noise_p) {
            return Err(SimError::ScenarioInvalid("render noise p must be in [0,1)".into()));
        }
        if self.dt <= 0.0 || self.dt > 0.1 {
            return Err(SimError::ScenarioInvalid("dt must be in (0, 0.1]".into()));
        }
        let max_x = self.grid.cols as f64 * self.grid.cell_size;
        let max_y = self.grid.rows as f64 * self.grid.cell_size;
        if !(0.0..max_x).contains(&self.start.x) || !(0.0..max_y).contains(&self.start.y) {
            return Err(SimError::ScenarioInvalid("start pose outside the terrain grid".into()));
        }
        let plan = self.compile_plan()?;
        for leg in &plan.legs {
            if !self.grid.labels.contains(&leg.preferred_terrain) {
                return Err(SimError::ScenarioInvalid(format!(
                    "mission terrain {:?} not in the grid legend",
                    leg.preferred_terrain
                )));
            }
            if let LegTrigger::Landmark(l) = &leg.trigger {
                if !self.landmarks.iter().any(|lm| &lm.label == l) {
                    return Err(SimError::ScenarioInvalid(format!(
                        "trigger landmark {l:?} not placed in the scenario"
                    )));
                }
            }
        }
        for lm in &self.landmarks {
            if lm.visual_radius <= 0.0 || lm.trigger_radius < self.grid.cell_size {
                return Err(SimError::ScenarioInvalid(format!("landmark {:?} radii invalid", lm.label)));
            }
        }
        Ok(plan)
    }

    /// Score-map vocabulary: grid labels then landmark labels.
    pub fn render_labels(&self) -> Vec<String> {
        let mut labels = self.grid.labels.clone();
        for lm in &self.landmarks {
            if !labels.contains(&lm.label) {
                labels.push(lm.label.clone());
            }
        }
        labels
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    BlockedCellEntered,
    HazardSpeedViolation,
    StepLimitExceeded,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Outcome::Success => "Success",
            Outcome::BlockedCellEntered => "BlockedCellEntered",
            Outcome::HazardSpeedViolation => "HazardSpeedViolation",
            Outcome::StepLimitExceeded => "StepLimitExceeded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub true_state: VehicleState,
    pub est_state: VehicleState,
    pub wheelbase_est: f64,
    pub leg_index: usize,
    pub control: ControlInput,
    pub solver_cost: f64,
    pub solver_converged: bool,
    pub triggered: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
    pub path_length: f64,
    pub steps: usize,
    pub max_speed_per_leg: Vec<f64>,
    pub leg_limits: Vec<f64>,
}

/// Render the camera view as a softened one-hot score map: terrain classes
/// come from projecting each below-horizon pixel into the world, landmarks
/// paint discs of their visual radius, and with probability `p` a pixel's
/// class is replaced by a uniformly random other class.
pub fn render_view(true_state: &VehicleState, scenario: &Scenario, rng: &mut ChaCha8Rng) -> ScoreMap {
    let labels = scenario.render_labels();
    let classes = labels.len();
    let intr = &scenario.intrinsics;
    let mount = &scenario.mount;
    let (w, h) = (intr.width, intr.height);
    let plane = w * h;
    let horizon = horizon_row(intr, mount);
    let (sin_h, cos_h) = true_state.heading.sin_cos();
    let landmark_class: Vec<u8> = scenario
        .landmarks
        .iter()
        .map(|lm| labels.iter().position(|l| l == &lm.label).unwrap() as u8)
        .collect();

    let mut ids = vec![0u8; plane];
    for row in 0..h {
        if (row as f64) <= horizon + HORIZON_GUARD_PX {
            continue;
        }
        for col in 0..w {
            let g = match pixel_to_ground(row as f64, col as f64, intr, mount) {
                Ok(g) => g,
                Err(_) => continue,
            };
            let wx = true_state.x + g.x * cos_h - g.y * sin_h;
            let wy = true_state.y + g.x * sin_h + g.y * cos_h;
            let mut class = scenario.grid.class_at(wx, wy);
            let mut best_d2 = f64::INFINITY;
            for (lm, &lm_class) in scenario.landmarks.iter().zip(&landmark_class) {
                let d2 = (wx - lm.x).powi(2) + (wy - lm.y).powi(2);
                if d2 <= lm.visual_radius * lm.visual_radius && d2 < best_d2 {
                    best_d2 = d2;
                    class = lm_class;
                }
            }
            if scenario.render_noise_p > 0.0 && rng.gen::<f64>() < scenario.render_noise_p {
                let other = rng.gen_range(0..classes - 1) as u8;
                class = if other >= class { other + 1 } else { other };
            }
            ids[row * w + col] = class;
        }
    }

    let soft_rest = 0.1f32 / (classes.max(2) - 1) as f32;
    let mut scores = vec![soft_rest; classes * plane];
    for (px, &id) in ids.iter().enumerate() {
        scores[id as usize * plane + px] = if classes > 1 { 0.9 } else { 1.0 };
    }
    ScoreMap { width: w, height: h, labels, scores }
}

/// Advance at most one leg: the next leg's trigger landmark must be detected
/// in the current mask, the vehicle must be inside its trigger radius, and
/// the vehicle must already satisfy the next leg's speed limit — a slower
/// leg's constraint set is adopted only once it is feasible (the episode
/// loop brakes in anticipation as soon as the landmark comes into view).
pub fn advance_mission(
    plan: &MissionPlan,
    leg_index: usize,
    mask: &LabelMask,
    true_state: &VehicleState,
    landmarks: &[Landmark],
    min_pixels: usize,
) -> usize {
    let Some(next) = plan.legs.get(leg_index + 1) else {
        return leg_index;
    };
    let LegTrigger::Landmark(label) = &next.trigger else {
        return leg_index;
    };
    let Some(lm) = landmarks.iter().find(|l| &l.label == label) else {
        return leg_index;
    };
    let dist = (true_state.x - lm.x).hypot(true_state.y - lm.y);
    if dist > lm.trigger_radius || true_state.speed > next.speed_limit + 1e-9 {
        return leg_index;
    }
    match detect_landmark(mask, label, min_pixels) {
        Ok(Some(_)) => leg_index + 1,
        _ => leg_index,
    }
}

/// The speed cap handed to the planner this step: the active leg's limit,
/// tightened to the next leg's limit while that leg's trigger landmark is in
/// view so the vehicle arrives at the trigger already slow enough.
pub fn effective_speed_limit(
    plan: &MissionPlan,
    leg_index: usize,
    mask: &LabelMask,
    min_pixels: usize,
) -> f64 {
    let mut limit = plan.legs[leg_index].speed_limit;
    if let Some(next) = plan.legs.get(leg_index + 1) {
        if next.speed_limit < limit {
            if let LegTrigger::Landmark(label) = &next.trigger {
                if matches!(detect_landmark(mask, label, min_pixels), Ok(Some(_))) {
                    limit = next.speed_limit;
                }
            }
        }
    }
    limit
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0f64);
    let u2: f64 = rng.gen_range(0.0..1.0f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Sliding-window wrapper around the MHE: accumulates measurements and
/// controls, warm-starts each solve from the previous window's decision
/// vector, and falls back to dead reckoning while the window fills or if a
/// solve diverges.
struct Estimator {
    cfg: EstimatorConfig,
    dt: f64,
    nominal: VehicleParams,
    measurements: VecDeque<PoseMeasurement>,
    controls: VecDeque<ControlInput>,
    prior: VehicleState,
    warm: Option<Vec<f64>>,
    state: VehicleState,
    wheelbase: f64,
}

impl Estimator {
    fn new(cfg: EstimatorConfig, dt: f64, nominal: VehicleParams, first: PoseMeasurement, start_speed: f64) -> Self {
        let state = VehicleState { x: first.x, y: first.y, heading: first.heading, speed: start_speed };
        let mut measurements = VecDeque::new();
        measurements.push_back(first);
        Estimator {
            cfg,
            dt,
            nominal,
            measurements,
            controls: VecDeque::new(),
            prior: state,
            warm: None,
            state,
            wheelbase: nominal.wheelbase,
        }
    }

    fn model(&self) -> VehicleParams {
        let mut p = self.nominal;
        p.wheelbase = self.wheelbase;
        p
    }

    fn update(&mut self, applied: ControlInput, measurement: PoseMeasurement) -> Result<(), MheError> {
        self.controls.push_back(applied);
        self.measurements.push_back(measurement);
        let slid = self.measurements.len() > self.cfg.horizon;
        if slid {
            self.measurements.pop_front();
            self.controls.pop_front();
        }
        let window = MheWindow {
            dt: self.dt,
            measurements: self.measurements.iter().copied().collect(),
            controls: self.controls.iter().copied().collect(),
            sigma_pos: self.cfg.sigma_pos,
            sigma_heading: self.cfg.sigma_heading,
            prior: self.prior,
            prior_weight: self.cfg.prior_weight,
        };
        // Reuse the previous decision vector, shifted when the window slid.
        let warm = self.warm.as_ref().map(|prev| {
            let mut z: Vec<f64> = if slid { prev[4..].to_vec() } else { prev.clone() };
            let lb = *prev.last().unwrap();
            z.pop();
            let n_have = z.len() / 4;
            let mut last = VehicleState {
                x: z[4 * (n_have - 1)],
                y: z[4 * (n_have - 1) + 1],
                heading: z[4 * (n_have - 1) + 2],
                speed: z[4 * (n_have - 1) + 3],
            };
            let mut model = self.nominal;
            model.wheelbase = lb;
            while z.len() / 4 < window.measurements.len() {
                last = step(&last, &applied, self.dt, &model);
                z.extend_from_slice(&[last.x, last.y, last.heading, last.speed]);
            }
            z.push(lb);
            z
        });
        let mut guess = self.nominal;
        guess.wheelbase = self.wheelbase;
        match mhe_estimate_warm(&window, &guess, &self.cfg.options, warm.as_deref()) {
            Ok(sol) => {
                self.state = sol.state;
                self.wheelbase = sol.wheelbase;
                // Arrival cost for the next window anchors to the smoothed
                // second state (the next window's first state).
                if self.measurements.len() == self.cfg.horizon {
                    self.prior = VehicleState {
                        x: sol.decision[4],
                        y: sol.decision[5],
                        heading: sol.decision[6],
                        speed: sol.decision[7],
                    };
                }
                self.warm = Some(sol.decision);
                Ok(())
            }
            Err(e) => {
                // Dead-reckon through the failure; the next window gets a
                // cold start.
                self.state = step(&self.state, &applied, self.dt, &self.model());
                self.warm = None;
                Err(e)
            }
        }
    }
}

/// Run one closed-loop episode with the scenario's own mission plan.
pub fn run_episode(scenario: &Scenario) -> Result<RunLog, SimError> {
    let plan = scenario.validate()?;
    Ok(run_episode_with_plan(scenario, &plan, scenario.seed))
}

/// Run one episode with an externally supplied (possibly ablated) plan and
/// seed. The scenario must already have been validated.
pub fn run_episode_with_plan(scenario: &Scenario, plan: &MissionPlan, seed: u64) -> RunLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nominal = scenario.vehicle;
    let mut plant = scenario.vehicle;
    plant.wheelbase *= scenario.plant_wheelbase_factor;

    let mut true_state = scenario.start;
    let first_meas = PoseMeasurement {
        x: true_state.x + scenario.estimator.sigma_pos * gaussian(&mut rng),
        y: true_state.y + scenario.estimator.sigma_pos * gaussian(&mut rng),
        heading: wrap_angle(true_state.heading + scenario.estimator.sigma_heading * gaussian(&mut rng)),
    };
    let mut estimator =
        Estimator::new(scenario.estimator, scenario.dt, nominal, first_meas, scenario.start.speed);

    let horizon = horizon_row(&scenario.intrinsics, &scenario.mount);
    let band_lo = ((horizon.ceil() as i64 + 5).max(0) as usize).min(scenario.intrinsics.height - 1);
    let band = (band_lo, scenario.intrinsics.height);

    let mut leg_index = 0usize;
    let mut warm: Option<Vec<ControlInput>> = None;
    let mut records = Vec::with_capacity(scenario.step_limit + 1);
    let mut max_speed_per_leg = vec![0.0f64; plan.legs.len()];
    let mut path_length = 0.0;
    let mut laps_done = 0usize;
    let mut in_goal = scenario.goal.contains(true_state.x, true_state.y);
    let mut outcome = Outcome::StepLimitExceeded;

    records.push(StepRecord {
        step: 0,
        true_state,
        est_state: estimator.state,
        wheelbase_est: estimator.wheelbase,
        leg_index,
        control: ControlInput::default(),
        solver_cost: 0.0,
        solver_converged: true,
        triggered: None,
    });
    max_speed_per_leg[0] = true_state.speed;

    for step_idx in 1..=scenario.step_limit {
        let view = render_view(&true_state, scenario, &mut rng);
        let mask = denoise(&view, &scenario.perception.kernels, scenario.perception.confidence_floor)
            .expect("scenario perception config validated");

        let prev_leg = leg_index;
        leg_index = advance_mission(
            plan,
            leg_index,
            &mask,
            &true_state,
            &scenario.landmarks,
            scenario.perception.min_landmark_pixels,
        );
        let triggered = if leg_index != prev_leg {
            warm = None; // the goal jumps with the preferred terrain
            match &plan.legs[leg_index].trigger {
                LegTrigger::Landmark(l) => Some(l.clone()),
                LegTrigger::StartOfMission => None,
            }
        } else {
            None
        };
        let leg = &plan.legs[leg_index];

        let est = estimator.state;
        let (control, solver_cost, solver_converged) =
            match select_goal_pixel(&mask, &leg.preferred_terrain, band) {
                Ok((row, col)) => {
                    let body_goal =
                        pixel_to_ground(row as f64, col as f64, &scenario.intrinsics, &scenario.mount)
                            .expect("goal band lies below the horizon");
                    // Near-field pixels dominate the centroid, so the goal
                    // lands only a couple of metres out; keep its bearing but
                    // push it to a minimum look-ahead so the planner never
                    // overruns it between frames.
                    let dist = body_goal.x.hypot(body_goal.y).max(1e-9);
                    let scale = (GOAL_LOOKAHEAD_M / dist).max(1.0);
                    let (sin_e, cos_e) = est.heading.sin_cos();
                    let goal = crate::projection::GroundPoint {
                        x: est.x + scale * (body_goal.x * cos_e - body_goal.y * sin_e),
                        y: est.y + scale * (body_goal.x * sin_e + body_goal.y * cos_e),
                    };
                    let mut model = nominal;
                    model.wheelbase = estimator.wheelbase;
                    let cap = effective_speed_limit(
                        plan,
                        leg_index,
                        &mask,
                        scenario.perception.min_landmark_pixels,
                    );
                    let prob = MpcProblem {
                        state: est,
                        goal,
                        speed_limit: (cap - scenario.speed_margin).clamp(0.1, nominal.max_speed),
                        params: model,
                    };
                    let sol = solve(&prob, &scenario.mpc, warm.as_deref());
                    let u = sol.controls[0];
                    warm = Some(shift_warm_start(&sol));
                    (u, sol.cost, sol.converged)
                }
                Err(_) => {
                    // No traversable terrain in view: hold the wheel and brake.
                    warm = None;
                    (ControlInput { steering: 0.0, accel: -nominal.max_accel }, 0.0, false)
                }
            };

        let prev_pos = (true_state.x, true_state.y);
        true_state = step(&true_state, &control.clamped(&plant), scenario.dt, &plant);
        path_length += (true_state.x - prev_pos.0).hypot(true_state.y - prev_pos.1);
        max_speed_per_leg[leg_index] = max_speed_per_leg[leg_index].max(true_state.speed);

        let meas = PoseMeasurement {
            x: true_state.x + scenario.estimator.sigma_pos * gaussian(&mut rng),
            y: true_state.y + scenario.estimator.sigma_pos * gaussian(&mut rng),
            heading: wrap_angle(true_state.heading + scenario.estimator.sigma_heading * gaussian(&mut rng)),
        };
        let _ = estimator.update(control, meas);

        records.push(StepRecord {
            step: step_idx,
            true_state,
            est_state: estimator.state,
            wheelbase_est: estimator.wheelbase,
            leg_index,
            control,
            solver_cost,
            solver_converged,
            triggered,
        });

        if scenario.grid.is_blocked_at(true_state.x, true_state.y) {
            outcome = Outcome::BlockedCellEntered;
            break;
        }
        if scenario
            .hazards
            .iter()
            .any(|h| h.rect.contains(true_state.x, true_state.y) && true_state.speed > h.speed_threshold)
        {
            outcome = Outcome::HazardSpeedViolation;
            break;
        }
        let now_in_goal = scenario.goal.contains(true_state.x, true_state.y);
        if now_in_goal && !in_goal {
            laps_done += 1;
            if laps_done >= scenario.goal_laps.max(1) {
                outcome = Outcome::Success;
                break;
            }
        }
        in_goal = now_in_goal;
    }

    let steps = records.len() - 1;
    RunLog {
        records,
        outcome,
        path_length,
        steps,
        max_speed_per_leg,
        leg_limits: plan.legs.iter().map(|l| l.speed_limit).collect(),
    }
}

/// Aggregates of a finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub success: bool,
    pub per_leg_max_speed: Vec<f64>,
    pub speed_cap_violations: usize,
    pub path_length: f64,
    pub steps: usize,
}

pub fn evaluate(log: &RunLog) -> RunMetrics {
    let violations = log
        .records
        .iter()
        .filter(|r| r.true_state.speed > log.leg_limits[r.leg_index] + 1e-6)
        .count();
    RunMetrics {
        success: log.outcome == Outcome::Success,
        per_leg_max_speed: log.max_speed_per_leg.clone(),
        speed_cap_violations: violations,
        path_length: log.path_length,
        steps: log.steps,
    }
}
