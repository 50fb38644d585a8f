//! `bench` — sweep and retrieval harness for sparse entmax decoding.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error, 3 selftest
//! failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use paged_entmax_bench::config::{BenchConfig, Method, OutputFormat, Workload};
use paged_entmax_bench::planted::{planted_retrieval, write_planted_csv, write_planted_json};
use paged_entmax_bench::record::{write_csv, write_json};
use paged_entmax_bench::selftest;
use paged_entmax_bench::sweep::run_sweep;

#[derive(Parser)]
#[command(
    name = "bench",
    about = "Benchmark harness for sparse entmax decoding over a paged KV cache",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a JSON config file.
    Run {
        /// Path to a JSON BenchConfig.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a sweep described by command-line flags.
    Sweep {
        #[command(flatten)]
        params: SweepArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Planted-key retrieval table by (n, budget, depth).
    Planted {
        #[command(flatten)]
        params: SweepArgs,
        /// Depth ratios for the planted position.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<f64>>,
        /// Planted-key alignment strength c.
        #[arg(long)]
        align: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the quick oracle/property suite.
    Selftest,
}

#[derive(Args)]
struct SweepArgs {
    /// Methods to run.
    #[arg(long = "method", value_delimiter = ',', default_values = ["topk_entmax"])]
    methods: Vec<Method>,
    /// Cache sizes.
    #[arg(long = "n", value_delimiter = ',', default_values = ["1024"])]
    n: Vec<usize>,
    /// Budgets: coverage ratios (<= 1) or token counts (> 1).
    #[arg(long = "budget", value_delimiter = ',', default_values = ["0.25"])]
    budgets: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value = "gaussian")]
    workload: Workload,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 64)]
    dv: usize,
    #[arg(long = "page-size", default_value_t = 16)]
    page_size: usize,
    #[arg(long, default_value_t = 8)]
    heads: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long = "q-page", default_value_t = 0.99)]
    q_page: f64,
    #[arg(long = "delta-margin", default_value_t = 0.0)]
    delta_margin: f64,
    #[arg(long = "warmup-iters", default_value_t = 2)]
    warmup_iters: usize,
    #[arg(long = "timed-iters", default_value_t = 5)]
    timed_iters: usize,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

impl SweepArgs {
    fn into_config(self) -> BenchConfig {
        BenchConfig {
            seed: self.seed,
            d: self.d,
            dv: self.dv,
            page_size: self.page_size,
            n: self.n,
            heads: self.heads,
            methods: self.methods,
            alpha: self.alpha,
            budgets: self.budgets,
            workload: self.workload,
            q_page: self.q_page,
            delta_margin: self.delta_margin,
            trials: self.trials,
            warmup_iters: self.warmup_iters,
            timed_iters: self.timed_iters,
            ..Default::default()
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

fn open_output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, (u8, String)> {
    match out {
        Some(path) => fs::File::create(path)
            .map(|f| Box::new(f) as Box<dyn Write>)
            .map_err(|e| {
                (
                    EXIT_RUNTIME,
                    format!("cannot create {}: {e}", path.display()),
                )
            }),
        None => Ok(Box::new(std::io::stdout())),
    }
}

fn run_sweep_command(config: BenchConfig, output: OutputArgs) -> Result<(), (u8, String)> {
    config.validate().map_err(|e| (EXIT_CONFIG, e))?;
    let records = run_sweep(&config).map_err(|e| (EXIT_RUNTIME, format!("{e:#}")))?;
    let mut w = open_output(&output.out)?;
    match output.format {
        OutputFormat::Csv => write_csv(&records, &mut w),
        OutputFormat::Json => write_json(&records, &mut w),
    }
    .map_err(|e| (EXIT_RUNTIME, format!("cannot write output: {e}")))
}

fn run_planted_command(config: BenchConfig, output: OutputArgs) -> Result<(), (u8, String)> {
    config.validate().map_err(|e| (EXIT_CONFIG, e))?;
    let records = planted_retrieval(&config).map_err(|e| (EXIT_RUNTIME, format!("{e:#}")))?;
    let mut w = open_output(&output.out)?;
    match output.format {
        OutputFormat::Csv => write_planted_csv(&records, &mut w),
        OutputFormat::Json => write_planted_json(&records, &mut w),
    }
    .map_err(|e| (EXIT_RUNTIME, format!("cannot write output: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), (u8, String)> {
    match cli.command {
        Command::Run { config, output } => {
            let text = fs::read_to_string(&config).map_err(|e| {
                (
                    EXIT_CONFIG,
                    format!("cannot read {}: {e}", config.display()),
                )
            })?;
            let config: BenchConfig = serde_json::from_str(&text)
                .map_err(|e| (EXIT_CONFIG, format!("invalid config: {e}")))?;
            run_sweep_command(config, output)
        }
        Command::Sweep { params, output } => run_sweep_command(params.into_config(), output),
        Command::Planted {
            params,
            depths,
            align,
            output,
        } => {
            let mut config = params.into_config();
            config.workload = Workload::PlantedKey;
            if let Some(depths) = depths {
                config.depths = depths;
            }
            if let Some(align) = align {
                config.planted_align = align;
            }
            run_planted_command(config, output)
        }
        Command::Selftest => {
            if selftest::run() {
                Ok(())
            } else {
                Err((EXIT_SELFTEST, "selftest failed".to_string()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; anything else is a config
            // problem and exits 1 per the CLI contract.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("bench: {message}");
            ExitCode::from(code)
        }
    }
}
