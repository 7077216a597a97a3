use clap::{Parser, Subcommand};
use sdcbf::sim::{builtin_names, builtin_scenario, render_svg, run_scenario, write_summary_json, write_trace_csv, SimError};
use sdcbf::ScenarioConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sdcbf", version, about = "Signed-distance CBF scenario simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv, summary.json and snapshots.svg.
    Run {
        /// JSON config file or built-in scenario name.
        scenario: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the duration (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Override the control period (s).
        #[arg(long)]
        dt: Option<f64>,
        /// Snapshot times for the SVG (s).
        #[arg(long, value_delimiter = ',')]
        svg_frames: Option<Vec<f64>>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Run the oracle and invariant suites.
    Check {
        /// Only run the fast geometric and solver suites.
        #[arg(long)]
        quick: bool,
    },
}

fn load(spec: &str) -> Result<ScenarioConfig, String> {
    if let Some(cfg) = builtin_scenario(spec) {
        return Ok(cfg);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| format!("{spec}: not a built-in scenario and unreadable: {e}"))?;
    let mut cfg = ScenarioConfig::from_json(&text).map_err(|e| format!("{spec}: {e}"))?;
    if cfg.name.is_empty() {
        cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(cfg)
}

fn default_frames(duration: f64) -> Vec<f64> {
    (0..5).map(|i| duration * i as f64 / 4.0).collect()
}

fn run(scenario: &str, out_dir: &Path, duration: Option<f64>, dt: Option<f64>, frames: Option<Vec<f64>>) -> Result<(), String> {
    let mut cfg = load(scenario)?;
    if let Some(d) = duration {
        cfg.duration = d;
    }
    if let Some(dt) = dt {
        cfg.params.dt = dt;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    std::fs::create_dir_all(out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;

    let start = Instant::now();
    let (trace, failure) = match run_scenario(&cfg) {
        Ok(t) => (t, None),
        Err(SimError::SafetyFilterFailure { t, steps, partial }) => (
            *partial,
            Some(format!("safety filter failed {steps} consecutive steps at t = {t:.3} s")),
        ),
        Err(e) => return Err(e.to_string()),
    };
    let wall = start.elapsed().as_secs_f64();

    let io = |e: std::io::Error| e.to_string();
    write_trace_csv(&trace, &out_dir.join("trace.csv")).map_err(io)?;
    write_summary_json(&trace, &out_dir.join("summary.json")).map_err(io)?;
    let frames = frames.unwrap_or_else(|| default_frames(cfg.duration));
    render_svg(&trace, &cfg, &out_dir.join("snapshots.svg"), &frames).map_err(|e| e.to_string())?;

    let s = &trace.summary;
    println!("scenario        {}", trace.scenario);
    println!("records         {}", trace.records.len());
    for (i, h) in s.min_h.iter().enumerate() {
        println!("min h_{i:<9} {h:.6}");
    }
    match s.arrival_time {
        Some(t) => println!("goal reached    t = {t:.2} s"),
        None => println!("goal reached    no (closest {:.3} m)", s.min_goal_distance),
    }
    println!("fallback steps  {}", s.fallback_steps);
    println!("mean loop       {:.3} ms", s.mean_loop_ms);
    println!("wall time       {wall:.2} s");
    println!("output          {}", out_dir.display());
    match failure {
        Some(msg) => Err(msg),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out_dir,
            duration,
            dt,
            svg_frames,
        } => run(&scenario, &out_dir, duration, dt, svg_frames),
        Command::ListScenarios => {
            for name in builtin_names() {
                let cfg = builtin_scenario(name).expect("bundled scenario");
                println!("{name:<26} {:<18} {} obstacle(s), {} s", cfg.model.name(), cfg.obstacles.len(), cfg.duration);
            }
            Ok(())
        }
        Command::Check { quick } => {
            let suites = if quick {
                sdcbf_verify::quick_suites()
            } else {
                sdcbf_verify::SUITES.to_vec()
            };
            let mut all_passed = true;
            for suite in suites {
                let report = suite();
                println!("{report}");
                all_passed &= report.passed;
            }
            if all_passed {
                Ok(())
            } else {
                Err("some checks failed".into())
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
