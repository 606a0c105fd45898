//! `lab`: solve, analyse and verify from the command line.
//!
//! Exit codes: 0 when everything passes, 1 when a check fails or a model
//! refuses, 2 on configuration errors.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use soliton_lab::asymptotics::asymptotic_constants;
use soliton_lab::bryant::{integrate, seed, SolitonProfile};
use soliton_lab::levelset::{level_grid, write_levels_csv, Spacing};
use soliton_lab::models::ModelSpace;
use soliton_lab::pick::{audit, pick_points, PickOptions};
use soliton_lab::suite::{
    emit_plots, run_checks, select, write_report, CheckResult, Status, SuiteConfig, SuiteContext,
};
use soliton_lab::LabError;

#[derive(Parser)]
#[command(name = "lab", version, about = "Steady soliton laboratory")]
struct Cli {
    /// Suite configuration (JSON); flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Integration tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Integration range of the Bryant profile.
    #[arg(long, global = true)]
    rmax: Option<f64>,
    /// Radius where the pole series hands over to the integrator.
    #[arg(long, global = true)]
    eps_seed: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Bryant profile and save it as profile.json.
    Bryant,
    /// Tabulate level-set quantities into levels.csv.
    Levels {
        #[arg(long, default_value_t = 1.0)]
        min: f64,
        #[arg(long, default_value_t = 200.0)]
        max: f64,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value = "linear")]
        spacing: Spacing,
        /// Use a saved profile instead of integrating.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Run one check by id, or all of them.
    Verify {
        #[arg(default_value = "all")]
        check: String,
    },
    /// Fit the asymptotic constants over a window `lo:hi` of levels.
    Asymptotics {
        #[arg(long, default_value = "50:200", value_parser = parse_window)]
        window: [f64; 2],
    },
    /// Run the point-picking procedure.
    Pick {
        #[arg(long, value_enum, default_value_t = PickModel::CigarLine)]
        model: PickModel,
        #[arg(long, default_value_t = 0.5)]
        rhat: f64,
        #[arg(long, default_value_t = 6)]
        jmax: usize,
    },
    /// Run the full suite and write the report and plot tables.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum PickModel {
    CigarLine,
    Bryant,
}

fn parse_window(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo > 0.0 && hi > lo) {
        return Err(format!("need 0 < lo < hi, got {lo}:{hi}"));
    }
    Ok([lo, hi])
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InvalidParameter(_) | LabError::Range { .. } | LabError::Json(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn config(cli: &Cli) -> Result<SuiteConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => SuiteConfig::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => SuiteConfig::default(),
    };
    if let Some(v) = cli.tol {
        cfg.tol = v;
    }
    if let Some(v) = cli.rmax {
        cfg.r_max = v;
    }
    if let Some(v) = cli.eps_seed {
        cfg.eps_seed = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn solve(cfg: &SuiteConfig) -> Result<SolitonProfile, Failure> {
    let s = seed(cfg.eps_seed).map_err(|e| Failure::Config(e.to_string()))?;
    integrate(&s, cfg.r_max, cfg.tol).map_err(|e| Failure::Run(e.to_string()))
}

fn write_json(path: &Path, value: serde_json::Result<serde_json::Value>) -> Result<(), Failure> {
    let value = value.map_err(|e| Failure::Run(e.to_string()))?;
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &value).map_err(|e| Failure::Run(e.to_string()))
}

fn print_checks(checks: &[CheckResult]) {
    for c in checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::MeasuredOnly => "MEASURED",
        };
        let m = c.measured.first().map_or("-".to_string(), |v| format!("{v:.6e}"));
        println!("{tag:8} {:28} {m:>14}  {}", c.check_id, c.note);
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let cfg = config(cli)?;
    fs::create_dir_all(&cfg.out)?;
    match &cli.command {
        Command::Bryant => {
            let p = solve(&cfg)?;
            let path = cfg.out.join("profile.json");
            p.save_json(&path)?;
            println!(
                "profile: r_max = {}, λ_max = {:.6}, {} nodes, max drift {:.3e} -> {}",
                p.r_max(),
                p.lambda_max(),
                p.len(),
                p.max_drift(),
                path.display()
            );
            Ok(true)
        }
        Command::Levels {
            min,
            max,
            count,
            spacing,
            profile,
        } => {
            let p = match profile {
                Some(path) => SolitonProfile::load_json(path)?,
                None => solve(&cfg)?,
            };
            let grid = level_grid(*min, *max, *count, *spacing)?;
            let path = cfg.out.join("levels.csv");
            write_levels_csv(&p, &grid, BufWriter::new(File::create(&path)?))?;
            println!("{} levels -> {}", grid.len(), path.display());
            Ok(true)
        }
        Command::Verify { check } => {
            let defs = select(check)?;
            let ctx = SuiteContext::new(cfg.clone());
            let run = run_checks(&ctx, &defs);
            write_report(&run, &cfg.out)?;
            print_checks(&run.report.checks);
            println!(
                "{} passed, {} failed, {} measured-only -> {}",
                run.report.passed,
                run.report.failed,
                run.report.measured_only,
                cfg.out.join("report.json").display()
            );
            Ok(!run.report.any_failed())
        }
        Command::Asymptotics { window } => {
            let p = solve(&cfg)?;
            match asymptotic_constants(&p, *window) {
                Ok(rep) => {
                    write_json(&cfg.out.join("asymptotics.json"), serde_json::to_value(&rep))?;
                    println!("{}", serde_json::to_string_pretty(&rep).expect("serializable"));
                    Ok(true)
                }
                Err(e @ LabError::WindowTooShort { .. }) => {
                    eprintln!("{e}");
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Pick { model, rhat, jmax } => {
            let m = match model {
                PickModel::CigarLine => ModelSpace::cigar_line_from_rhat(*rhat)?,
                PickModel::Bryant => ModelSpace::BryantNumeric(Arc::new(solve(&cfg)?)),
            };
            let opts = PickOptions {
                j_max: *jmax,
                mesh: (cfg.pick_mesh[0], cfg.pick_mesh[1]),
                ..Default::default()
            };
            match pick_points(&m, &opts) {
                Ok(seq) => {
                    let a = audit(&m, &seq)?;
                    write_json(
                        &cfg.out.join("pick.json"),
                        serde_json::to_value(&seq).and_then(|s| {
                            Ok(serde_json::json!({ "sequence": s, "audit": serde_json::to_value(&a)? }))
                        }),
                    )?;
                    seq.write_csv(BufWriter::new(File::create(cfg.out.join("pick.csv"))?))?;
                    for p in &seq.points {
                        println!(
                            "j = {:4}  s = {:10.4}  r = {:8.4}  r²R = {:8.3}  s/r = {:8.4}  δ = {}",
                            p.j, p.s, p.radius, p.r2_scalar, p.lambda, p.delta
                        );
                    }
                    println!("audit: {}", if a.all_hold() { "all properties hold" } else { "FAILED" });
                    Ok(a.all_hold())
                }
                Err(e @ LabError::BoundedCurvatureDiameter { .. }) => {
                    println!("refused: {e}");
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Report => {
            let defs = select("all")?;
            let ctx = SuiteContext::new(cfg.clone());
            let run = run_checks(&ctx, &defs);
            write_report(&run, &cfg.out)?;
            let (written, skipped) = emit_plots(&ctx, &cfg.out)?;
            print_checks(&run.report.checks);
            for w in &written {
                println!("wrote {}", w.display());
            }
            for s in &skipped {
                println!("skipped {s}");
            }
            println!(
                "{} passed, {} failed, {} measured-only",
                run.report.passed, run.report.failed, run.report.measured_only
            );
            Ok(!run.report.any_failed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
