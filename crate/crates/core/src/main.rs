use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimo_cfo::pilots::PilotStructure;
use mimo_cfo::sim::{self, ExperimentConfig, SingleOptions, SweepResult};
use mimo_cfo::Error;

#[derive(Parser)]
#[command(name = "mimo-cfo", version, about = "MAP CFO/channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// CRLB/BCRLB against the temporal correlation coefficient.
    BoundsVsRho(Common),
    /// CRLB/BCRLB against SNR.
    BoundsVsSnr(Common),
    /// Monte-Carlo MSE against SNR, alongside the bounds.
    MseVsSnr(Common),
    /// One trial with all intermediates, as JSON.
    Single {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        f_true: Option<f64>,
        /// Replace the received vector by zeros.
        #[arg(long)]
        zero_rx: bool,
    },
    /// Oracle and invariant checks.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when absent.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u32>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, env = "MIMO_CFO_THREADS")]
    threads: Option<usize>,
    /// Comma-separated rho_h grid.
    #[arg(long, value_delimiter = ',')]
    rho_h: Option<Vec<f64>>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_structure)]
    pilot: Option<PilotStructure>,
    #[arg(long)]
    noiseless: bool,
    /// Drop the CFO prior (maximum-likelihood estimation).
    #[arg(long)]
    ml: bool,
    /// Also write long-format plot data to this file.
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
}

fn parse_structure(s: &str) -> Result<PilotStructure, String> {
    match s {
        "periodic" => Ok(PilotStructure::Periodic),
        "td" | "time_division" => Ok(PilotStructure::TimeDivision),
        _ => Err(format!("unknown pilot structure '{s}' (periodic or td)")),
    }
}

impl Common {
    fn load(&self) -> mimo_cfo::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(r) = &self.rho_h {
            cfg.sweep.rho_h = r.clone();
        }
        if let Some(s) = &self.snr_db {
            cfg.sweep.snr_db = s.clone();
        }
        if let Some(p) = self.pilot {
            cfg.pilot.structure = p;
            cfg.sweep.pilots = vec![p];
        }
        cfg.noiseless |= self.noiseless;
        cfg.prior.ml |= self.ml;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(figure: &str, common: &Common, cfg: &ExperimentConfig, res: &[SweepResult]) -> mimo_cfo::Result<()> {
    let mut w = output(cfg.out.as_deref())?;
    sim::write_csv(res, &mut w)?;
    w.flush()?;
    if let Some(path) = &common.emit_plot_data {
        let mut p = BufWriter::new(File::create(path)?);
        sim::write_plot_data(figure, res, &mut p)?;
        p.flush()?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Model(_) => 2,
        Error::Numerical { .. } | Error::Estimation(_) => 3,
        Error::Io(_) => 4,
    }
}

fn run(cli: Cli) -> mimo_cfo::Result<bool> {
    let common = match &cli.command {
        Command::BoundsVsRho(c) | Command::BoundsVsSnr(c) | Command::MseVsSnr(c) | Command::Validate(c) => c,
        Command::Single { common, .. } => common,
    };
    let cfg = common.load()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    pool.install(|| match &cli.command {
        Command::BoundsVsRho(c) => emit("bounds-vs-rho", c, &cfg, &sim::run_bounds_vs_rho(&cfg)?).map(|_| true),
        Command::BoundsVsSnr(c) => emit("bounds-vs-snr", c, &cfg, &sim::run_bounds_vs_snr(&cfg)?).map(|_| true),
        Command::MseVsSnr(c) => emit("mse-vs-snr", c, &cfg, &sim::run_mse_vs_snr(&cfg)?).map(|_| true),
        Command::Single { f_true, zero_rx, .. } => {
            let record = sim::run_single(
                &cfg,
                &SingleOptions {
                    f_true: *f_true,
                    zero_rx: *zero_rx,
                    ..Default::default()
                },
            )?;
            let mut w = output(cfg.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &record).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(w)?;
            w.flush()?;
            Ok(true)
        }
        Command::Validate(_) => {
            let checks = sim::validate::run_checks(cfg.seed);
            let mut w = output(cfg.out.as_deref())?;
            for c in &checks {
                writeln!(w, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            w.flush()?;
            Ok(checks.iter().all(|c| c.passed))
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
