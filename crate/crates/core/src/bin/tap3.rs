use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tap3::audit::{parse_audits, write_audits, AUDIT_TRACE_HEADER};
use tap3::metrics::{run_sweep, write_plots, PauseRange, SeedRange, SweepSpec, REFERENCE_PERIOD};
use tap3::routing::ProtocolKind;
use tap3::sim::{run, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "tap3", version, about = "Trust-aware private routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics row.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Packet trace, one row per transmission.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Route audits in replayable form.
        #[arg(long)]
        audit_log: Option<PathBuf>,
    },
    /// Run a protocol x pause x seed grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// start:end:step, quoted against a 1000 s run.
        #[arg(long)]
        pause: PauseRange,
        /// Factor applied to --pause values. Defaults to sim_duration / 1000.
        #[arg(long)]
        pause_scale: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "tap3,smprf,mprf")]
        protocols: Vec<ProtocolKind>,
        #[arg(long, default_value = "1..5")]
        seeds: SeedRange,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Re-run recorded route audits and print their verdicts.
    Audit {
        #[arg(long)]
        trace: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Run(_) => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::parse(&read(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            trace,
            audit_log,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let opts = RunOptions {
                trace: trace.is_some(),
                capture_headers: false,
                record_audits: audit_log.is_some(),
            };
            let output = run(&cfg, opts).map_err(|e| Failure::Run(e.to_string()))?;
            emit(out.as_deref(), &format!("{}\n", output.report))?;
            if let Some(p) = trace {
                write(&p, &output.trace_text())?;
            }
            if let Some(p) = audit_log {
                write(&p, &write_audits(&output.audits))?;
            }
            Ok(())
        }
        Command::Sweep {
            config,
            pause,
            pause_scale,
            protocols,
            seeds,
            out,
            plots,
        } => {
            let base = load_config(&config)?;
            let scale = pause_scale.unwrap_or(base.sim_duration / REFERENCE_PERIOD);
            let spec = SweepSpec {
                pause_times: pause.values().iter().map(|p| p * scale).collect(),
                protocols,
                seeds: seeds.values(),
                base,
            };
            spec.validate().map_err(|e| Failure::Validation(e.to_string()))?;
            let result = run_sweep(&spec).map_err(|e| Failure::Run(e.to_string()))?;
            emit(out.as_deref(), &result.to_csv())?;
            if let Some(dir) = plots {
                write_plots(&result, &dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
            }
            Ok(())
        }
        Command::Audit { trace } => {
            let audits = parse_audits(&read(&trace)?).map_err(|e| Failure::Validation(e.to_string()))?;
            println!("{AUDIT_TRACE_HEADER}");
            for (flow, audit) in &audits {
                let report = audit.run().map_err(|e| Failure::Run(e.to_string()))?;
                println!("{}", report.trace_row(*flow));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Validation(m) | Failure::Run(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
