//! Experiment harness: ablation modes, CSV report emission, and corpus
//! segmentation evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::instruction::MissionPlan;
use crate::perception::{coverage_report, CoverageBinReport, PerceptionError};
use crate::sim::{RunLog, Scenario};
use crate::smap::{load_label_mask, SmapError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Smap(#[from] SmapError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("truth/prediction directories differ: {0}")]
    CorpusMismatch(String),
}

/// Which part of the instruction an ablation run withholds from the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    Full,
    NoAdverbs,
    NoTerrains,
}

impl AblationMode {
    pub fn name(&self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoAdverbs => "no-adverbs",
            AblationMode::NoTerrains => "no-terrains",
        }
    }
}

impl FromStr for AblationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(AblationMode::Full),
            "no-adverbs" => Ok(AblationMode::NoAdverbs),
            "no-terrains" => Ok(AblationMode::NoTerrains),
            other => Err(format!("unknown ablation mode {other:?} (full, no-adverbs, no-terrains)")),
        }
    }
}

/// Strip information from a compiled plan: `NoAdverbs` lifts every speed
/// limit to the vehicle maximum, `NoTerrains` collapses every leg onto the
/// first mission terrain.
pub fn apply_ablation(plan: &MissionPlan, mode: AblationMode, max_speed: f64) -> MissionPlan {
    let mut out = plan.clone();
    match mode {
        AblationMode::Full => {}
        AblationMode::NoAdverbs => {
            for leg in &mut out.legs {
                leg.speed_limit = max_speed;
            }
        }
        AblationMode::NoTerrains => {
            let first = out.legs[0].preferred_terrain.clone();
            for leg in &mut out.legs {
                leg.preferred_terrain = first.clone();
            }
            out.terrain_vocabulary = vec![first];
        }
    }
    out
}

/// Parse `a..b` (inclusive) or a single seed.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.parse().map_err(|_| format!("bad seed {a:?}"))?;
        let b: u64 = b.parse().map_err(|_| format!("bad seed {b:?}"))?;
        if b < a {
            return Err(format!("empty seed range {s:?}"));
        }
        Ok((a..=b).collect())
    } else {
        let v: u64 = s.parse().map_err(|_| format!("bad seed {s:?}"))?;
        Ok(vec![v])
    }
}

pub const TRAJECTORY_HEADER: &str = "step,x,y,heading,speed,est_x,est_y,est_heading,est_speed,wheelbase_est,leg,steering,accel,cost,converged,triggered";

pub fn trajectory_csv(log: &RunLog) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &log.records {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{},{}",
            r.step,
            r.true_state.x,
            r.true_state.y,
            r.true_state.heading,
            r.true_state.speed,
            r.est_state.x,
            r.est_state.y,
            r.est_state.heading,
            r.est_state.speed,
            r.wheelbase_est,
            r.leg_index,
            r.control.steering,
            r.control.accel,
            r.solver_cost,
            r.solver_converged,
            r.triggered.as_deref().unwrap_or(""),
        )
        .unwrap();
    }
    out
}

pub const SUMMARY_HEADER: &str = "mode,seed,outcome,steps,path_length,per_leg_max_speed";

pub fn summary_csv(rows: &[(AblationMode, u64, &RunLog)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (mode, seed, log) in rows {
        let speeds: Vec<String> = log.max_speed_per_leg.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(
            out,
            "{},{},{},{},{:.4},{}",
            mode.name(),
            seed,
            log.outcome,
            log.steps,
            log.path_length,
            speeds.join(";"),
        )
        .unwrap();
    }
    out
}

pub const COVERAGE_HEADER: &str = "bin_lo,bin_hi,count,dice_mean,dice_variance";

pub fn coverage_csv(report: &CoverageBinReport) -> String {
    let mut out = String::from(COVERAGE_HEADER);
    out.push('\n');
    for (i, bin) in report.bins.iter().enumerate() {
        writeln!(
            out,
            "{:.1},{:.1},{},{:.6},{:.6}",
            i as f64 / 10.0,
            (i + 1) as f64 / 10.0,
            bin.count,
            bin.dice_mean,
            bin.dice_variance,
        )
        .unwrap();
    }
    out
}

/// Write one trajectory CSV per run plus a summary CSV; byte-stable for
/// identical inputs. Returns the written paths, summary last.
pub fn emit_reports(
    runs: &[(AblationMode, u64, RunLog)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (mode, seed, log) in runs {
        let path = out_dir.join(format!("run_{}_{seed}.csv", mode.name()));
        std::fs::write(&path, trajectory_csv(log))?;
        written.push(path);
    }
    let rows: Vec<(AblationMode, u64, &RunLog)> =
        runs.iter().map(|(m, s, l)| (*m, *s, l)).collect();
    let summary = out_dir.join("summary.csv");
    std::fs::write(&summary, summary_csv(&rows))?;
    written.push(summary);
    Ok(written)
}

/// Score a directory of predicted masks against same-named truth masks.
pub fn seg_eval_dirs(
    truth_dir: &Path,
    pred_dir: &Path,
    label: &str,
) -> Result<CoverageBinReport, HarnessError> {
    let mut names: Vec<String> = std::fs::read_dir(truth_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(PerceptionError::EmptyCorpus.into());
    }
    let mut pairs = Vec::with_capacity(names.len());
    for name in &names {
        let pred_path = pred_dir.join(name);
        if !pred_path.is_file() {
            return Err(HarnessError::CorpusMismatch(format!("no prediction for {name:?}")));
        }
        pairs.push((load_label_mask(&truth_dir.join(name))?, load_label_mask(&pred_path)?));
    }
    Ok(coverage_report(&pairs, label)?)
}

/// Compile the scenario's mission and run one episode per (mode, seed).
pub fn run_ablation(
    scenario: &Scenario,
    modes: &[AblationMode],
    seeds: &[u64],
) -> Result<Vec<(AblationMode, u64, RunLog)>, crate::sim::SimError> {
    let plan = scenario.validate()?;
    let mut out = Vec::with_capacity(modes.len() * seeds.len());
    for &mode in modes {
        let ablated = apply_ablation(&plan, mode, scenario.vehicle.max_speed);
        for &seed in seeds {
            let log = crate::sim::run_episode_with_plan(scenario, &ablated, seed);
            out.push((mode, seed, log));
        }
    }
    Ok(out)
}
