use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use offnav::harness::{
    coverage_csv, emit_reports, parse_seed_range, run_ablation, seg_eval_dirs, AblationMode,
};
use offnav::instruction::{compile_mission, parse_directive, render_plan, AdverbLexicon};
use offnav::llm::{request_completion, EndpointConfig};
use offnav::scenario::load_scenario;

#[derive(Parser)]
#[command(name = "offnav", about = "Instruction-constrained off-road navigation pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop episode from a scenario file.
    Run {
        scenario: PathBuf,
        /// Episode seed (defaults to the scenario's).
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for trajectory/summary CSV reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse an instruction file into a compiled mission plan.
    Parse {
        instruction_file: PathBuf,
        /// Send the raw instruction through the configured LLM endpoint
        /// first and parse its reply instead.
        #[arg(long)]
        llm: bool,
        /// Endpoint base URL for --llm.
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        base_url: String,
        /// Model name for --llm.
        #[arg(long, default_value = "default")]
        model: String,
    },
    /// Score predicted segmentation masks against ground truth.
    SegEval {
        truth_dir: PathBuf,
        pred_dir: PathBuf,
        /// Class label to score.
        #[arg(long)]
        label: String,
    },
    /// Run the instruction-ablation grid over a scenario.
    Ablate {
        scenario: PathBuf,
        /// Comma-separated modes: full, no-adverbs, no-terrains.
        #[arg(long, default_value = "full,no-adverbs,no-terrains")]
        modes: String,
        /// Inclusive seed range, e.g. 0..9, or a single seed.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        /// Directory for CSV reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let scn = load_scenario(&scenario).map_err(|e| e.to_string())?;
            let seed = seed.unwrap_or(scn.seed);
            let plan = scn.validate().map_err(|e| e.to_string())?;
            let log = offnav::sim::run_episode_with_plan(&scn, &plan, seed);
            println!("seed {seed}: {} after {} steps ({:.1} m)", log.outcome, log.steps, log.path_length);
            for (i, (limit, peak)) in log.leg_limits.iter().zip(&log.max_speed_per_leg).enumerate() {
                println!("  leg {i}: max speed {peak:.3} m/s (limit {limit:.3})");
            }
            if let Some(dir) = out {
                let runs = vec![(AblationMode::Full, seed, log.clone())];
                for path in emit_reports(&runs, &dir).map_err(|e| e.to_string())? {
                    println!("wrote {}", path.display());
                }
            }
            // Exit code reflects whether the run completed, not how the
            // mission ended; outcomes live in the summary.
            Ok(())
        }
        Command::Parse { instruction_file, llm, base_url, model } => {
            let text = std::fs::read_to_string(&instruction_file).map_err(|e| e.to_string())?;
            let directive_text = if llm {
                let cfg = EndpointConfig { base_url, model, ..EndpointConfig::default() };
                let vocab = vec!["asphalt".to_string(), "sandy road".to_string()];
                let prompt = offnav::instruction::build_prompt(&text, &vocab, &AdverbLexicon::default())
                    .map_err(|e| e.to_string())?;
                request_completion(&prompt, &cfg).map_err(|e| e.to_string())?
            } else {
                text
            };
            let directive = parse_directive(&directive_text).map_err(|e| e.to_string())?;
            let plan = compile_mission(&directive, &AdverbLexicon::default()).map_err(|e| e.to_string())?;
            print!("{}", render_plan(&plan));
            Ok(())
        }
        Command::SegEval { truth_dir, pred_dir, label } => {
            let report = seg_eval_dirs(&truth_dir, &pred_dir, &label).map_err(|e| e.to_string())?;
            print!("{}", coverage_csv(&report));
            Ok(())
        }
        Command::Ablate { scenario, modes, seeds, out } => {
            let scn = load_scenario(&scenario).map_err(|e| e.to_string())?;
            let modes: Vec<AblationMode> = modes
                .split(',')
                .map(|m| m.trim().parse())
                .collect::<Result<_, _>>()?;
            if modes.is_empty() {
                return Err("no ablation modes given".into());
            }
            let seeds = parse_seed_range(&seeds)?;
            let runs = run_ablation(&scn, &modes, &seeds).map_err(|e| e.to_string())?;
            for (mode, seed, log) in &runs {
                println!("{} seed {seed}: {} after {} steps", mode.name(), log.outcome, log.steps);
            }
            if let Some(dir) = out {
                for path in emit_reports(&runs, &dir).map_err(|e| e.to_string())? {
                    println!("wrote {}", path.display());
                }
            }
            Ok(())
        }
    }
}
