use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use offload_sim::config::{load_config, Mechanisms, ScenarioConfig, SweepSpec};
use offload_sim::output;
use offload_sim::sim::{self, SimError};

#[derive(Parser)]
#[command(
    name = "offload-sim",
    version,
    about = "Cellular/Wi-Fi energy saving simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one day with the configured mechanisms.
    Run(Common),
    /// Simulate one day with every cell tri-sectorized and no offloading.
    Baseline(Common),
    /// Average savings over replicas for each value of one variable.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// VAR=v1,v2,... with VAR one of mean_users, wifi_density, beta, nit_size
        #[arg(long)]
        sweep: SweepSpec,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of ss, pd, mde2 (or "none"); overrides the config.
    #[arg(long, value_parser = parse_mechanisms)]
    mechanisms: Option<Mechanisms>,
}

fn parse_mechanisms(s: &str) -> Result<Mechanisms, String> {
    let mut m = Mechanisms::NONE;
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "ss" => m.ss = true,
            "pd" => m.pd = true,
            "mde2" => m.mde2 = true,
            "none" => {}
            other => return Err(format!("unknown mechanism '{other}'")),
        }
    }
    Ok(m)
}

enum Failure {
    Config(String),
    Invariant(String),
    Io(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Config(e.to_string()),
            SimError::Invariant { .. } => Failure::Invariant(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn prepare(c: &Common) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.sim.seed = seed;
    }
    if let Some(m) = c.mechanisms {
        cfg.mechanisms = m;
    }
    if let Err(e) = cfg.validate() {
        return Err(Failure::Config(e.to_string()));
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run(c) => {
            let (cfg, out) = prepare(&c)?;
            let r = sim::run(&cfg)?;
            output::write_run(&out, &r)?;
            println!(
                "{}: savings {:.2}% (ss share {:.3}, pd share {:.3}) -> {}",
                cfg.mechanisms.label(),
                r.summary.savings_pct,
                r.summary.ss_share,
                r.summary.pd_share,
                out.display()
            );
        }
        Command::Baseline(c) => {
            let (cfg, out) = prepare(&c)?;
            let r = sim::run_baseline(&cfg)?;
            output::write_run(&out, &r)?;
            println!(
                "baseline: cellular {:.1} Wh -> {}",
                r.summary.cellular_wh,
                out.display()
            );
        }
        Command::Sweep { common, sweep } => {
            let (cfg, out) = prepare(&common)?;
            let points = sim::sweep(&cfg, sweep.variable, &sweep.values)?;
            std::fs::create_dir_all(&out)?;
            output::write_sweep_summary(
                &points,
                std::io::BufWriter::new(std::fs::File::create(out.join(output::SUMMARY_FILE))?),
            )?;
            let dat = output::emit_plotdata(&out, &cfg.mechanisms.label(), &points)?;
            for p in &points {
                println!(
                    "{}={} savings {:.2}% ± {:.2}",
                    sweep.variable, p.value, p.savings_pct_mean, p.savings_pct_std
                );
            }
            println!("-> {}", dat.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
