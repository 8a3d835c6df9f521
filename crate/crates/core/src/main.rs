use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use carry_wedge::config::{load_run_config, RunOverrides};
use carry_wedge::ingest::{adapt_vendor_holdings, to_csv};
use carry_wedge::synth::{generate, SynthConfig};
use carry_wedge::{Error, Result};

#[derive(Parser)]
#[command(
    name = "carry-wedge",
    version,
    about = "ETF-options versus futures carry wedge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline and write the wedge series and summary tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        options: Option<PathBuf>,
        #[arg(long = "etf-closes")]
        etf_closes: Option<PathBuf>,
        #[arg(long)]
        holdings: Option<PathBuf>,
        #[arg(long)]
        futures: Option<PathBuf>,
        #[arg(long)]
        refrate: Option<PathBuf>,
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Abort on the first data gap instead of dropping the date.
        #[arg(long)]
        strict: bool,
    },
    /// Generate synthetic inputs with a known wedge.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert vendor holdings downloads into a canonical holdings.csv.
    AdaptHoldings {
        #[arg(long = "out")]
        out: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            options,
            etf_closes,
            holdings,
            futures,
            refrate,
            rates,
            out,
            strict,
        } => {
            let overrides = RunOverrides {
                options,
                etf_closes,
                holdings,
                futures,
                refrate,
                rates,
                out,
                strict,
            };
            let cfg = load_run_config(&config, &overrides)?;
            let outcome = carry_wedge::pipeline::run(&cfg)?;
            let r = &outcome.computation.report;
            eprintln!(
                "{} observations from {} option dates ({} selections); outputs in {}",
                r.observations,
                r.option_dates,
                r.selections,
                cfg.out_dir.display()
            );
            if r.observations == 0 {
                eprintln!("warning: no usable observations");
            }
            Ok(())
        }
        Command::Synth { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", config.display())))?;
            let cfg = SynthConfig::from_key_values(&text)?;
            let ds = generate(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            ds.write_to(&out)?;
            eprintln!(
                "wrote {} dates with injected wedge {:.6} pp to {}",
                cfg.n_days,
                cfg.injected_wedge() * 100.0,
                out.display()
            );
            Ok(())
        }
        Command::AdaptHoldings { out, files } => {
            let mut records = Vec::with_capacity(files.len());
            for f in &files {
                let rec = adapt_vendor_holdings(&read(f)?).map_err(|source| Error::Parse {
                    path: f.clone(),
                    source,
                })?;
                records.push(rec);
            }
            records.sort_by_key(|r| r.date);
            if let Some(w) = records.windows(2).find(|w| w[0].date == w[1].date) {
                return Err(Error::Config(format!(
                    "two holdings files dated {}",
                    w[0].date
                )));
            }
            std::fs::write(&out, to_csv(&records)).map_err(|source| Error::Io {
                path: out.clone(),
                source,
            })?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
