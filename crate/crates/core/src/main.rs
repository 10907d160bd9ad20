use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sspm::harness::{
    self, lln_report, martingale_report, moment_report, panel, run_ensemble, write_ensemble, ExperimentConfig, Report,
};
use sspm::engine::{simulate_with_rng, RecordSpec};
use sspm::rng::{replication_stream, stream_rng};
use sspm::zoo::{ModelConfig, ModelKind};
use sspm::Result;

#[derive(Parser)]
#[command(name = "sspm", version, about = "Stochastic structured population models and their scaling limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory at level `n`.
    Simulate(Common),
    /// Run the replication ensemble at every level and write trajectories.
    Ensemble(Common),
    /// Solve the deterministic limit and write its observables.
    Limit(Common),
    /// Compare ensembles against the limit across levels.
    Converge(Common),
    /// Moment growth and explosion check.
    Moments(Common),
    /// Martingale mean and quadratic-variation check.
    Martingale(Common),
    /// Empirical audit of the declared model constants.
    Audit(Common),
    /// Residual of the computed limit in the weak equation.
    Residual(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Model with default parameters, used when no config is given.
    #[arg(long, value_parser = parse_kind, required_unless_present = "config")]
    model: Option<ModelKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown model {s:?}"))
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.model) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(kind)) => ExperimentConfig::new(ModelConfig::new(kind, 100)),
            (None, None) => unreachable!("clap requires one of --config and --model"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.workers = self.workers;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(report) => {
            println!("{}: {}", report.command, if report.passed { "PASS" } else { "FAIL" });
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: &Command) -> Result<Report> {
    let (name, common) = match command {
        Command::Simulate(c) => ("simulate", c),
        Command::Ensemble(c) => ("ensemble", c),
        Command::Limit(c) => ("limit", c),
        Command::Converge(c) => ("converge", c),
        Command::Moments(c) => ("moments", c),
        Command::Martingale(c) => ("martingale", c),
        Command::Audit(c) => ("audit", c),
        Command::Residual(c) => ("residual", c),
    };
    let cfg = common.load()?;
    let out = common.out.as_path();
    let report = match command {
        Command::Simulate(_) => simulate(&cfg, out)?,
        Command::Ensemble(_) => ensemble(&cfg, out)?,
        Command::Limit(_) => limit(&cfg, out)?,
        Command::Converge(_) => converge(&cfg, out)?,
        Command::Moments(_) => moments(&cfg, out)?,
        Command::Martingale(_) => martingale(&cfg)?,
        Command::Audit(_) => {
            let r = harness::audit(&cfg)?;
            for c in r.failures() {
                log::warn!("audit: {} {:?} value {} bound {}", c.name, c.channel, c.value, c.bound);
            }
            Report::new(name, cfg.hash(), r.passed, &r)?
        }
        Command::Residual(_) => {
            let sol = harness::solve(&cfg)?;
            let r = harness::residual_report(&cfg, &sol)?;
            log::info!("max residual {:.3e} (tolerance {:.3e})", r.max_residual, r.tolerance);
            Report::new(name, cfg.hash(), r.passed, &r)?
        }
    };
    report.write(out)?;
    Ok(report)
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let n = cfg.model.n;
    let model = cfg.model.build(n)?;
    let m0 = cfg.model.initial(n)?;
    let mut rng = stream_rng(cfg.seed, replication_stream(n, 0));
    let record = RecordSpec { log_events: true, ..cfg.record_spec() };
    let traj = simulate_with_rng(&model, &m0, cfg.horizon, &mut rng, &record, &cfg.run_options())?;
    std::fs::create_dir_all(out)?;
    traj.write_csv(std::io::BufWriter::new(std::fs::File::create(out.join("trajectory.csv"))?))?;
    traj.final_measure.write_csv(std::io::BufWriter::new(std::fs::File::create(out.join("final_measure.csv"))?))?;
    let mut events = std::io::BufWriter::new(std::fs::File::create(out.join("events.csv"))?);
    writeln!(events, "time,channel,pre_mass,post_mass")?;
    for e in &traj.events {
        writeln!(events, "{},{},{},{}", e.time, model.channels[e.channel].name(), e.pre_mass, e.post_mass)?;
    }
    events.flush()?;
    let jumps: Vec<_> =
        model.channels.iter().zip(&traj.jump_counts).map(|(c, k)| json!({"channel": c.name(), "jumps": k})).collect();
    Report::new(
        "simulate",
        cfg.hash(),
        true,
        json!({
            "run": {"n": n, "horizon": cfg.horizon, "final_mass": traj.final_mass(), "sup_mass": traj.sup_mass},
            "jumps": jumps,
            "warnings": traj.warnings,
        }),
    )
}

/// Ensemble run at every configured level, written as a manifest.
fn ensemble(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let ens = run_ensemble(cfg)?;
    write_ensemble(&ens, out)?;
    let levels: Vec<_> = ens
        .levels
        .iter()
        .map(|l| {
            let mass: Vec<f64> = l.successes().map(|t| t.final_mass()).collect();
            let (mean, se) = harness::stats::mean_se(&mass);
            json!({"n": l.n, "completed": mass.len(), "failed": l.failures(), "final_mass_mean": mean, "final_mass_se": se})
        })
        .collect();
    Report::new("ensemble", cfg.hash(), ens.failures() == 0, json!({ "levels": levels }))
}

fn limit(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let sol = harness::solve(cfg)?;
    let model = cfg.model.build(1)?;
    let panel = panel(cfg, &model)?;
    std::fs::create_dir_all(out)?;
    sol.write_csv(&panel, std::io::BufWriter::new(std::fs::File::create(out.join("limit.csv"))?))?;
    if matches!(cfg.model.model, ModelKind::BellAnderson) {
        sol.write_density_csv(std::io::BufWriter::new(std::fs::File::create(out.join("density.csv"))?))?;
    }
    let mass = sol.mass_series();
    Report::new(
        "limit",
        cfg.hash(),
        true,
        json!({
            "solution": {
                "snapshots": sol.len(),
                "horizon": sol.horizon(),
                "initial_mass": mass.first(),
                "final_mass": mass.last(),
                "scheme_error": sol.scheme_error,
                "leakage": sol.leakage,
                "clipped": sol.clipped,
            }
        }),
    )
}

fn converge(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let ens = run_ensemble(cfg)?;
    write_ensemble(&ens, out)?;
    let sol = harness::solve(cfg)?;
    let model = cfg.model.build(1)?;
    let r = lln_report(&ens, &sol, &panel(cfg, &model)?)?;
    for l in &r.levels {
        log::info!("n = {}: error {:.4e} ± {:.1e}", l.n, l.mean, l.se);
    }
    if let Some(s) = r.slope {
        log::info!("slope {s:.3} (window {:?})", r.window);
    }
    Report::new("converge", cfg.hash(), r.passed, &r)
}

fn moments(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let ens = run_ensemble(cfg)?;
    write_ensemble(&ens, out)?;
    let growth = cfg.model.build(cfg.levels()[0])?.mass_growth_rate;
    let reports: Vec<_> = ens.levels.iter().map(|l| moment_report(l, &cfg.moment_orders, growth)).collect();
    let passed = reports.iter().all(|r| r.passed);
    Report::new("moments", cfg.hash(), passed, json!({ "growth_rate": growth, "levels": reports }))
}

fn martingale(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.model.n;
    let model = cfg.model.build(n)?;
    let h = match &cfg.probe {
        Some(name) => model.observable(name)?.clone(),
        None => model.observables[0].clone(),
    };
    let m0 = cfg.model.initial(n)?;
    let r = martingale_report(&model, &m0, cfg.horizon, &h, cfg.replications, cfg.seed, &cfg.run_options(), cfg.workers)?;
    log::info!("E M_T = {:.3e} ± {:.1e}, Var/E<M> = {:.3}", r.mean, r.se, r.variance_ratio);
    Report::new("martingale", cfg.hash(), r.passed, &r)
}
