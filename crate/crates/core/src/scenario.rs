//! Plain-text scenario files.
//!
//! A scenario is an INI-style document with an ASCII terrain grid:
//!
//! ```text
//! [terrain]
//! cell_size = 1.0
//! legend . = other
//! legend a = asphalt
//! legend r = rubble blocked
//! grid
//! rrrr
//! aaaa
//! ....
//! end
//!
//! [camera]    fx/fy/cx/cy/width/height/mount_height/pitch/offset_x/offset_y
//! [vehicle]   wheelbase/max_steering/max_accel/max_speed/plant_wheelbase_factor
//! [mission]   use_llm, optional instruction, plus raw ★/# directive lines
//! [lexicon]   adverb = speed overrides
//! [landmarks] label = x y visual_radius trigger_radius
//! [hazards]   hazard = min_x min_y max_x max_y speed_threshold
//! [run]       seed/dt/step_limit/noise_p/start/goal/goal_laps/speed_margin
//! [mpc]       horizon/dt/weights/solver knobs (optional)
//! [mhe]       window + solver knobs (optional)
//! [perception] kernels/confidence_floor/min_landmark_pixels (optional)
//! ```
//!
//! The first grid line is the top row of the map (largest y); lines starting
//! with `;` are comments. Serialization emits a canonical form that parses
//! back to an identical scenario.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::instruction::AdverbLexicon;
use crate::mhe::MheOptions;
use crate::planner::{MpcConfig, MpcWeights};
use crate::projection::{CameraIntrinsics, CameraMount};
use crate::sim::{
    EstimatorConfig, HazardZone, Landmark, PerceptionConfig, Rect, Scenario, TerrainGrid,
};
use crate::vehicle::{VehicleParams, VehicleState};

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing required section [{0}]")]
    MissingSection(&'static str),
    #[error("missing key {key:?} in section [{section}]")]
    MissingKey { section: &'static str, key: &'static str },
}

fn perr(line: usize, message: impl Into<String>) -> ScenarioFileError {
    ScenarioFileError::Parse { line, message: message.into() }
}

#[derive(Default)]
struct Section {
    // key -> (line, value); repeated keys collect into lists.
    entries: Vec<(usize, String, String)>,
    grid_lines: Vec<(usize, String)>,
    raw_lines: Vec<String>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(_, k, _)| k == key).map(|(_, _, v)| v.as_str())
    }

    fn require(&self, section: &'static str, key: &'static str) -> Result<&str, ScenarioFileError> {
        self.get(key).ok_or(ScenarioFileError::MissingKey { section, key })
    }

    fn parse_f64(&self, section: &'static str, key: &'static str) -> Result<f64, ScenarioFileError> {
        let v = self.require(section, key)?;
        v.parse().map_err(|_| ScenarioFileError::Parse {
            line: 0,
            message: format!("[{section}] {key} = {v:?} is not a number"),
        })
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ScenarioFileError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ScenarioFileError::Parse {
                line: 0,
                message: format!("{key} = {v:?} is not a number"),
            }),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ScenarioFileError> {
        Ok(self.f64_or(key, default as f64)? as usize)
    }
}

fn split_floats(value: &str) -> Result<Vec<f64>, String> {
    value
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("{t:?} is not a number")))
        .collect()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioFileError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut in_grid = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if in_grid {
            if line.trim() == "end" {
                in_grid = false;
            } else {
                let sec = sections.get_mut(current.as_ref().unwrap()).unwrap();
                sec.grid_lines.push((line_no, line.trim().to_string()));
            }
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            let name = trimmed[1..trimmed.len() - 1].to_string();
            if name == "mission" && sections.contains_key("mission") {
                return Err(perr(line_no, "more than one [mission] section"));
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some(section_name) = &current else {
            return Err(perr(line_no, format!("content before any section: {trimmed:?}")));
        };
        let sec = sections.get_mut(section_name).unwrap();
        if trimmed == "grid" && section_name == "terrain" {
            in_grid = true;
            continue;
        }
        if section_name == "mission" && !trimmed.contains('=') {
            sec.raw_lines.push(trimmed.to_string());
            continue;
        }
        if let Some((k, v)) = trimmed.split_once('=') {
            sec.entries.push((line_no, k.trim().to_string(), v.trim().to_string()));
        } else if section_name == "mission" {
            sec.raw_lines.push(trimmed.to_string());
        } else {
            return Err(perr(line_no, format!("expected 'key = value', got {trimmed:?}")));
        }
    }
    if in_grid {
        return Err(perr(text.lines().count(), "grid block not closed with 'end'"));
    }

    let terrain = sections.get("terrain").ok_or(ScenarioFileError::MissingSection("terrain"))?;
    let grid = parse_terrain(terrain)?;

    let cam = sections.get("camera").ok_or(ScenarioFileError::MissingSection("camera"))?;
    let intrinsics = CameraIntrinsics {
        fx: cam.parse_f64("camera", "fx")?,
        fy: cam.parse_f64("camera", "fy")?,
        cx: cam.parse_f64("camera", "cx")?,
        cy: cam.parse_f64("camera", "cy")?,
        width: cam.parse_f64("camera", "width")? as usize,
        height: cam.parse_f64("camera", "height")? as usize,
    };
    let mount = CameraMount {
        height_above_ground: cam.parse_f64("camera", "mount_height")?,
        pitch: cam.parse_f64("camera", "pitch")?,
        longitudinal_offset: cam.f64_or("offset_x", 0.0)?,
        lateral_offset: cam.f64_or("offset_y", 0.0)?,
    };

    let veh = sections.get("vehicle").ok_or(ScenarioFileError::MissingSection("vehicle"))?;
    let vehicle = VehicleParams {
        wheelbase: veh.parse_f64("vehicle", "wheelbase")?,
        max_steering: veh.parse_f64("vehicle", "max_steering")?,
        max_accel: veh.parse_f64("vehicle", "max_accel")?,
        max_speed: veh.parse_f64("vehicle", "max_speed")?,
    };
    let plant_wheelbase_factor = veh.f64_or("plant_wheelbase_factor", 1.1)?;

    let mission = sections.get("mission").ok_or(ScenarioFileError::MissingSection("mission"))?;
    let use_llm = mission.get("use_llm").map(|v| v == "true").unwrap_or(false);
    let instruction_text = mission.get("instruction").map(str::to_string);
    let directive_text = mission.raw_lines.join("\n");

    let mut lexicon = AdverbLexicon::default();
    if let Some(sec) = sections.get("lexicon") {
        for (line, token, speed) in &sec.entries {
            let speed: f64 = speed
                .parse()
                .map_err(|_| perr(*line, format!("lexicon speed {speed:?} is not a number")))?;
            lexicon.insert(token, speed).map_err(|e| perr(*line, e.to_string()))?;
        }
    }

    let mut landmarks = Vec::new();
    if let Some(sec) = sections.get("landmarks") {
        for (line, label, value) in &sec.entries {
            let f = split_floats(value).map_err(|e| perr(*line, e))?;
            if f.len() != 4 {
                return Err(perr(*line, "landmark needs: x y visual_radius trigger_radius"));
            }
            landmarks.push(Landmark {
                label: label.to_lowercase(),
                x: f[0],
                y: f[1],
                visual_radius: f[2],
                trigger_radius: f[3],
            });
        }
    }

    let mut hazards = Vec::new();
    if let Some(sec) = sections.get("hazards") {
        for (line, _, value) in &sec.entries {
            let f = split_floats(value).map_err(|e| perr(*line, e))?;
            if f.len() != 5 {
                return Err(perr(*line, "hazard needs: min_x min_y max_x max_y speed_threshold"));
            }
            hazards.push(HazardZone {
                rect: Rect { min_x: f[0], min_y: f[1], max_x: f[2], max_y: f[3] },
                speed_threshold: f[4],
            });
        }
    }

    let run = sections.get("run").ok_or(ScenarioFileError::MissingSection("run"))?;
    let start_f = split_floats(run.require("run", "start")?).map_err(|e| perr(0, e))?;
    if start_f.len() != 4 {
        return Err(perr(0, "[run] start needs: x y heading speed"));
    }
    let goal_f = split_floats(run.require("run", "goal")?).map_err(|e| perr(0, e))?;
    if goal_f.len() != 4 {
        return Err(perr(0, "[run] goal needs: min_x min_y max_x max_y"));
    }

    let mpc_sec = sections.get("mpc");
    let mpc_default = MpcConfig::default();
    let mpc = match mpc_sec {
        None => mpc_default,
        Some(sec) => MpcConfig {
            horizon: sec.usize_or("horizon", mpc_default.horizon)?,
            dt: sec.f64_or("dt", mpc_default.dt)?,
            weights: MpcWeights {
                w_pos: sec.f64_or("w_pos", mpc_default.weights.w_pos)?,
                w_head: sec.f64_or("w_head", mpc_default.weights.w_head)?,
                w_speed_track: sec.f64_or("w_speed_track", mpc_default.weights.w_speed_track)?,
                w_steer: sec.f64_or("w_steer", mpc_default.weights.w_steer)?,
                w_accel: sec.f64_or("w_accel", mpc_default.weights.w_accel)?,
                w_terminal: sec.f64_or("w_terminal", mpc_default.weights.w_terminal)?,
            },
            max_iterations: sec.usize_or("max_iterations", mpc_default.max_iterations)?,
            initial_step: sec.f64_or("initial_step", mpc_default.initial_step)?,
            gradient_tol: sec.f64_or("gradient_tol", mpc_default.gradient_tol)?,
        },
    };

    let est_default = EstimatorConfig::default();
    let estimator = match sections.get("mhe") {
        None => est_default,
        Some(sec) => EstimatorConfig {
            horizon: sec.usize_or("horizon", est_default.horizon)?,
            sigma_pos: sec.f64_or("sigma_pos", est_default.sigma_pos)?,
            sigma_heading: sec.f64_or("sigma_heading", est_default.sigma_heading)?,
            prior_weight: sec.f64_or("prior_weight", est_default.prior_weight)?,
            options: MheOptions {
                max_iterations: sec.usize_or("max_iterations", est_default.options.max_iterations)?,
                gradient_tol: sec.f64_or("gradient_tol", est_default.options.gradient_tol)?,
                process_weight: sec.f64_or("process_weight", est_default.options.process_weight)?,
                initial_damping: sec.f64_or("initial_damping", est_default.options.initial_damping)?,
            },
        },
    };

    let perc_default = PerceptionConfig::default();
    let perception = match sections.get("perception") {
        None => perc_default,
        Some(sec) => PerceptionConfig {
            kernels: match sec.get("kernels") {
                None => perc_default.kernels,
                Some(v) => split_floats(v)
                    .map_err(|e| perr(0, e))?
                    .into_iter()
                    .map(|f| f as usize)
                    .collect(),
            },
            confidence_floor: sec.f64_or("confidence_floor", perc_default.confidence_floor as f64)? as f32,
            min_landmark_pixels: sec.usize_or("min_landmark_pixels", perc_default.min_landmark_pixels)?,
        },
    };

    Ok(Scenario {
        grid,
        landmarks,
        hazards,
        start: VehicleState {
            x: start_f[0],
            y: start_f[1],
            heading: start_f[2],
            speed: start_f[3],
        },
        goal: Rect { min_x: goal_f[0], min_y: goal_f[1], max_x: goal_f[2], max_y: goal_f[3] },
        goal_laps: run.usize_or("goal_laps", 1)?,
        intrinsics,
        mount,
        directive_text,
        instruction_text,
        use_llm,
        lexicon,
        vehicle,
        plant_wheelbase_factor,
        render_noise_p: run.f64_or("noise_p", 0.0)?,
        seed: run.usize_or("seed", 0)? as u64,
        step_limit: run.usize_or("step_limit", 1000)?,
        dt: run.f64_or("dt", 0.1)?,
        mpc,
        estimator,
        perception,
        speed_margin: run.f64_or("speed_margin", 0.08)?,
    })
}

fn parse_terrain(sec: &Section) -> Result<TerrainGrid, ScenarioFileError> {
    let cell_size = sec.f64_or("cell_size", 1.0)?;
    // Legend: label 0 is always "other"; remaining labels keep file order.
    let mut labels = vec!["other".to_string()];
    let mut blocked = vec![false];
    let mut char_to_class: BTreeMap<char, u8> = BTreeMap::new();
    for (line, key, value) in &sec.entries {
        let Some(ch_str) = key.strip_prefix("legend") else { continue };
        let ch_str = ch_str.trim();
        if ch_str.chars().count() != 1 {
            return Err(perr(*line, format!("legend key must be one character, got {ch_str:?}")));
        }
        let ch = ch_str.chars().next().unwrap();
        let (label, is_blocked) = match value.strip_suffix("blocked") {
            Some(rest) => (rest.trim().to_lowercase(), true),
            None => (value.to_lowercase(), false),
        };
        if label.is_empty() {
            return Err(perr(*line, "legend label is empty"));
        }
        let class = match labels.iter().position(|l| l == &label) {
            Some(i) => {
                if blocked[i] != is_blocked {
                    return Err(perr(*line, format!("label {label:?} redefined with a different blocked flag")));
                }
                i as u8
            }
            None => {
                labels.push(label);
                blocked.push(is_blocked);
                (labels.len() - 1) as u8
            }
        };
        char_to_class.insert(ch, class);
    }
    if sec.grid_lines.is_empty() {
        return Err(ScenarioFileError::MissingKey { section: "terrain", key: "grid" });
    }
    let cols = sec.grid_lines[0].1.chars().count();
    let rows = sec.grid_lines.len();
    let mut class_ids = vec![0u8; rows * cols];
    // First file line is the top of the map (row index rows-1).
    for (i, (line, text)) in sec.grid_lines.iter().enumerate() {
        if text.chars().count() != cols {
            return Err(perr(*line, format!("grid row has {} cells, expected {cols}", text.chars().count())));
        }
        let r = rows - 1 - i;
        for (c, ch) in text.chars().enumerate() {
            let class = char_to_class
                .get(&ch)
                .ok_or_else(|| perr(*line, format!("grid char {ch:?} missing from the legend")))?;
            class_ids[r * cols + c] = *class;
        }
    }
    Ok(TerrainGrid { cell_size, rows, cols, labels, blocked, class_ids })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioFileError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Canonical serialization; `parse_scenario(serialize_scenario(s)) == s` for
/// every scenario this module can produce.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let w = &mut out;

    writeln!(w, "[terrain]").unwrap();
    writeln!(w, "cell_size = {}", s.grid.cell_size).unwrap();
    // Stable char assignment: digits then letters, class order.
    let glyphs: Vec<char> = ".abcdefghijklmnopqrstuvwxyz0123456789".chars().collect();
    for (i, label) in s.grid.labels.iter().enumerate() {
        let suffix = if s.grid.blocked[i] { " blocked" } else { "" };
        writeln!(w, "legend {} = {}{}", glyphs[i], label, suffix).unwrap();
    }
    writeln!(w, "grid").unwrap();
    for r in (0..s.grid.rows).rev() {
        let row: String =
            (0..s.grid.cols).map(|c| glyphs[s.grid.class_ids[r * s.grid.cols + c] as usize]).collect();
        writeln!(w, "{row}").unwrap();
    }
    writeln!(w, "end\n").unwrap();

    writeln!(w, "[camera]").unwrap();
    writeln!(w, "fx = {}", s.intrinsics.fx).unwrap();
    writeln!(w, "fy = {}", s.intrinsics.fy).unwrap();
    writeln!(w, "cx = {}", s.intrinsics.cx).unwrap();
    writeln!(w, "cy = {}", s.intrinsics.cy).unwrap();
    writeln!(w, "width = {}", s.intrinsics.width).unwrap();
    writeln!(w, "height = {}", s.intrinsics.height).unwrap();
    writeln!(w, "mount_height = {}", s.mount.height_above_ground).unwrap();
    writeln!(w, "pitch = {}", s.mount.pitch).unwrap();
    writeln!(w, "offset_x = {}", s.mount.longitudinal_offset).unwrap();
    writeln!(w, "offset_y = {}\n", s.mount.lateral_offset).unwrap();

    writeln!(w, "[vehicle]").unwrap();
    writeln!(w, "wheelbase = {}", s.vehicle.wheelbase).unwrap();
    writeln!(w, "max_steering = {}", s.vehicle.max_steering).unwrap();
    writeln!(w, "max_accel = {}", s.vehicle.max_accel).unwrap();
    writeln!(w, "max_speed = {}", s.vehicle.max_speed).unwrap();
    writeln!(w, "plant_wheelbase_factor = {}\n", s.plant_wheelbase_factor).unwrap();

    writeln!(w, "[mission]").unwrap();
    writeln!(w, "use_llm = {}", s.use_llm).unwrap();
    if let Some(instr) = &s.instruction_text {
        writeln!(w, "instruction = {instr}").unwrap();
    }
    for line in s.directive_text.lines() {
        writeln!(w, "{line}").unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "[lexicon]").unwrap();
    for (token, speed) in s.lexicon.tokens() {
        writeln!(w, "{token} = {speed}").unwrap();
    }
    writeln!(w).unwrap();

    if !s.landmarks.is_empty() {
        writeln!(w, "[landmarks]").unwrap();
        for lm in &s.landmarks {
            writeln!(w, "{} = {} {} {} {}", lm.label, lm.x, lm.y, lm.visual_radius, lm.trigger_radius)
                .unwrap();
        }
        writeln!(w).unwrap();
    }
    if !s.hazards.is_empty() {
        writeln!(w, "[hazards]").unwrap();
        for h in &s.hazards {
            writeln!(
                w,
                "hazard = {} {} {} {} {}",
                h.rect.min_x, h.rect.min_y, h.rect.max_x, h.rect.max_y, h.speed_threshold
            )
            .unwrap();
        }
        writeln!(w).unwrap();
    }

    writeln!(w, "[run]").unwrap();
    writeln!(w, "seed = {}", s.seed).unwrap();
    writeln!(w, "dt = {}", s.dt).unwrap();
    writeln!(w, "step_limit = {}", s.step_limit).unwrap();
    writeln!(w, "noise_p = {}", s.render_noise_p).unwrap();
    writeln!(w, "start = {} {} {} {}", s.start.x, s.start.y, s.start.heading, s.start.speed).unwrap();
    writeln!(w, "goal = {} {} {} {}", s.goal.min_x, s.goal.min_y, s.goal.max_x, s.goal.max_y).unwrap();
    writeln!(w, "goal_laps = {}", s.goal_laps).unwrap();
    writeln!(w, "speed_margin = {}\n", s.speed_margin).unwrap();

    writeln!(w, "[mpc]").unwrap();
    writeln!(w, "horizon = {}", s.mpc.horizon).unwrap();
    writeln!(w, "dt = {}", s.mpc.dt).unwrap();
    writeln!(w, "w_pos = {}", s.mpc.weights.w_pos).unwrap();
    writeln!(w, "w_head = {}", s.mpc.weights.w_head).unwrap();
    writeln!(w, "w_speed_track = {}", s.mpc.weights.w_speed_track).unwrap();
    writeln!(w, "w_steer = {}", s.mpc.weights.w_steer).unwrap();
    writeln!(w, "w_accel = {}", s.mpc.weights.w_accel).unwrap();
    writeln!(w, "w_terminal = {}", s.mpc.weights.w_terminal).unwrap();
    writeln!(w, "max_iterations = {}", s.mpc.max_iterations).unwrap();
    writeln!(w, "initial_step = {}", s.mpc.initial_step).unwrap();
    writeln!(w, "gradient_tol = {}\n", s.mpc.gradient_tol).unwrap();

    writeln!(w, "[mhe]").unwrap();
    writeln!(w, "horizon = {}", s.estimator.horizon).unwrap();
    writeln!(w, "sigma_pos = {}", s.estimator.sigma_pos).unwrap();
    writeln!(w, "sigma_heading = {}", s.estimator.sigma_heading).unwrap();
    writeln!(w, "prior_weight = {}", s.estimator.prior_weight).unwrap();
    writeln!(w, "max_iterations = {}", s.estimator.options.max_iterations).unwrap();
    writeln!(w, "gradient_tol = {}", s.estimator.options.gradient_tol).unwrap();
    writeln!(w, "process_weight = {}", s.estimator.options.process_weight).unwrap();
    writeln!(w, "initial_damping = {}\n", s.estimator.options.initial_damping).unwrap();

    writeln!(w, "[perception]").unwrap();
    let kernels: Vec<String> = s.perception.kernels.iter().map(|k| k.to_string()).collect();
    writeln!(w, "kernels = {}", kernels.join(" ")).unwrap();
    writeln!(w, "confidence_floor = {}", s.perception.confidence_floor).unwrap();
    writeln!(w, "min_landmark_pixels = {}", s.perception.min_landmark_pixels).unwrap();

    out
}
