use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mrbc::analysis::{analyze_scenario, StabilityReport};
use mrbc::scenario::{self, load_config, ScenarioConfig, SEED_ENV};
use mrbc::sweep::{sweep, trend_report, SweepGrid};
use mrbc::trace::Trace;

/// Failed sweep claims.
const EXIT_CLAIMS: u8 = 4;
/// Usage, configuration and I/O errors.
const EXIT_ERROR: u8 = 1;

#[derive(Parser)]
#[command(name = "mrbc", version, about = "Observer-based barrier control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write its trace.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the stability report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the stability monitors over a saved trace.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: String,
        /// Text report, or CSV when the path ends in `.csv`.
        #[arg(long)]
        report: PathBuf,
    },
    /// Plot trace signals to SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated column or group names, e.g. `ebar,u_sat`.
        #[arg(long, value_delimiter = ',')]
        signals: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter grid and tabulate the metrics.
    Sweep {
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

type CliResult = Result<ExitCode, String>;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_scenario(spec: &str) -> Result<ScenarioConfig, String> {
    let path = Path::new(spec);
    let cfg = if !path.exists() {
        scenario::bundled(spec).ok_or_else(|| format!("{spec}: no such file or bundled scenario"))?
    } else {
        load_config(&read(path)?).map_err(|errs| {
            errs.iter().map(|e| format!("{spec}: {e}")).collect::<Vec<_>>().join("\n")
        })?
    };
    let cfg = cfg.with_env_seed().map_err(|e| format!("{SEED_ENV}: {e}"))?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn write_report(report: &StabilityReport, path: &Path) -> Result<(), String> {
    let text = if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(StabilityReport::csv_header()).map_err(|e| e.to_string())?;
        w.write_record(report.csv_row()).map_err(|e| e.to_string())?;
        String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?
    } else {
        report.to_text()
    };
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn magnitude(v: f64) -> String {
    if v >= 1e6 {
        format!("{v:.4e}")
    } else {
        format!("{v:.4}")
    }
}

/// Logs each entry into saturation and its peak clipped amount.
fn log_saturation(trace: &Trace) {
    let mut onset: Option<(f64, f64)> = None;
    let mut events = 0;
    for r in &trace.records {
        match (&mut onset, r.delta_u != 0.0) {
            (None, true) => onset = Some((r.t, r.delta_u.abs())),
            (Some((_, peak)), true) => *peak = peak.max(r.delta_u.abs()),
            (Some((t, peak)), false) => {
                eprintln!("saturation: t = {t:.4} .. {:.4}, peak |delta_u| = {}", r.t, magnitude(*peak));
                events += 1;
                onset = None;
            }
            (None, false) => {}
        }
    }
    if let Some((t, peak)) = onset {
        eprintln!("saturation: t = {t:.4} .. end, peak |delta_u| = {}", magnitude(peak));
        events += 1;
    }
    if events > 0 {
        eprintln!("saturation events: {events}");
    }
}

fn cmd_run(config: &str, out: &Path, report: Option<&Path>) -> CliResult {
    let cfg = load_scenario(config)?;
    let outcome = scenario::run(&cfg).map_err(|errs| errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))?;
    outcome.trace.save(out).map_err(|e| format!("{}: {e}", out.display()))?;
    log_saturation(&outcome.trace);
    if let Some(f) = &outcome.failure {
        eprintln!("{f}");
    }
    println!("{}: {} ({} samples)", cfg.name, outcome.verdict, outcome.trace.len());
    if let Some(path) = report {
        let rep = analyze_scenario(&outcome.trace, &cfg).map_err(|e| e.to_string())?;
        write_report(&rep, path)?;
    }
    Ok(ExitCode::from(outcome.verdict.exit_code() as u8))
}

fn cmd_analyze(trace: &Path, config: &str, report: &Path) -> CliResult {
    let cfg = load_scenario(config)?;
    let tr = Trace::load(trace).map_err(|e| format!("{}: {e}", trace.display()))?;
    let rep = analyze_scenario(&tr, &cfg).map_err(|e| e.to_string())?;
    write_report(&rep, report)?;
    println!(
        "rho_ob = {:.6} rho_cont = {:.6} rho_all = {:.6} violations = {}",
        rep.rho_ob,
        rep.rho_cont,
        rep.rho_all,
        rep.violations.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(trace: &Path, signals: &[String], out: &Path) -> CliResult {
    let tr = Trace::load(trace).map_err(|e| format!("{}: {e}", trace.display()))?;
    mrbc::plot::plot(&tr, signals, out).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(config: Option<&str>, grid: &Path, out: &Path) -> CliResult {
    let g = SweepGrid::parse(&read(grid)?).map_err(|e| format!("{}: {e}", grid.display()))?;
    let base = match (config, &g.base) {
        (Some(c), _) => c.to_string(),
        (None, Some(b)) => b.clone(),
        (None, None) => return Err("sweep needs --config or a grid `base`".into()),
    };
    let cfg = load_scenario(&base)?;
    let table = sweep(&cfg, &g).map_err(|e| e.to_string())?;
    std::fs::write(out, table.to_csv_string()).map_err(|e| format!("{}: {e}", out.display()))?;
    for (k, row) in table.rows.iter().enumerate() {
        if row.verdict != "completed" {
            eprintln!("row {k}: {}", row.verdict);
        }
    }
    let verdicts = trend_report(&table, &g.claims);
    for v in &verdicts {
        println!("{v}");
    }
    Ok(if verdicts.iter().all(|v| v.passed) { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CLAIMS) })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.cmd {
        Cmd::Run { config, out, report } => cmd_run(config, out, report.as_deref()),
        Cmd::Analyze { trace, config, report } => cmd_analyze(trace, config, report),
        Cmd::Plot { trace, signals, out } => cmd_plot(trace, signals, out),
        Cmd::Sweep { config, grid, out } => cmd_sweep(config.as_deref(), grid, out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_ERROR)
    })
}
