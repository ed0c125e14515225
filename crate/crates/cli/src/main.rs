//! `varcause`: batch front end for causal discovery on multivariate time series.
//!
//! Exit codes: 0 success, 1 usage, 2 bad input data, 3 numerical failure.

mod commands;
mod render;
mod settings;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use varcause::identification::DecisionRule;

use commands::{Command, Format};
use settings::Settings;

/// Bad invocation: flags, config keys or values out of range.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, thiserror::Error)]
#[error("--verify: the second run produced different output")]
struct VerifyMismatch;

#[derive(Parser)]
#[command(name = "varcause", version, about = "Causal structure of stationary multivariate time series")]
struct Cli {
    /// TOML file of defaults; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Run the command twice and fail unless both reports match byte for byte.
    #[arg(long, global = true)]
    verify: bool,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    #[value(alias = "markdown")]
    Md,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Paper,
    Conventional,
}

#[derive(Subcommand)]
enum Sub {
    /// Fit a VAR and write its variance-decomposition influence matrix.
    Decompose(SourceArgs),
    /// Equilibrium causality distribution of an influence matrix.
    Pi {
        #[command(flatten)]
        source: SourceArgs,
        /// One share per exogeneity class, summing to 1.
        #[arg(long, value_delimiter = ',')]
        quota: Option<Vec<f64>>,
        /// Causal structure JSON; read off the influence graph when omitted.
        #[arg(long)]
        structure: Option<PathBuf>,
    },
    /// Identify exogeneity classes and the transient set by bootstrap testing.
    Identify {
        #[command(flatten)]
        panel: PanelArgs,
        /// Decomposition horizon of the test statistics.
        #[arg(long)]
        horizon: Option<String>,
        #[command(flatten)]
        boot: BootArgs,
    },
    /// Local causality distribution of transient variables.
    Local {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        structure: Option<PathBuf>,
        /// Transient variable to report; every one when omitted.
        #[arg(long)]
        target: Option<String>,
        /// Steps of propagation, or `limit`.
        #[arg(long)]
        steps: Option<String>,
    },
    /// Accuracy study on generated panels.
    Simulate {
        /// Template name or `all`.
        #[arg(long)]
        template: Option<String>,
        #[arg(long)]
        datasets: Option<usize>,
        /// Observations per panel.
        #[arg(long = "T", visible_alias = "length")]
        length: Option<usize>,
        /// 20 datasets and 100 replicates unless set otherwise.
        #[arg(long)]
        quick: bool,
        #[command(flatten)]
        boot: BootArgs,
    },
    /// Write one generated panel as CSV.
    Generate {
        #[arg(long)]
        template: Option<String>,
        #[arg(long = "T", visible_alias = "length")]
        length: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct PanelArgs {
    /// Panel CSV with a header row.
    input: Option<PathBuf>,
    /// Columns to use, in order; all but the time column by default.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    #[arg(long)]
    time_column: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
    /// Lags such as `1,2` or `1-3,12`.
    #[arg(long)]
    lags: Option<String>,
}

#[derive(Args)]
struct SourceArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Influence matrix as JSON or CSV, instead of fitting a panel.
    #[arg(long, conflicts_with = "input")]
    omega: Option<PathBuf>,
    /// Forecast horizon in steps, or `limit`.
    #[arg(long)]
    horizon: Option<String>,
    /// Cholesky ordering of the variables.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<String>>,
}

#[derive(Args)]
struct BootArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    /// Resample residuals in moving blocks of this length; 0 picks one.
    #[arg(long)]
    block_len: Option<usize>,
}

impl PanelArgs {
    fn fill(self, s: &mut Settings) {
        s.input = self.input;
        s.columns = self.columns;
        s.time_column = self.time_column;
        s.delimiter = self.delimiter;
        s.lags = self.lags;
    }
}

impl SourceArgs {
    fn fill(self, s: &mut Settings) {
        self.panel.fill(s);
        s.omega = self.omega;
        s.horizon = self.horizon;
        s.order = self.order;
    }
}

impl BootArgs {
    fn fill(self, s: &mut Settings) {
        s.seed = self.seed;
        s.replicates = self.replicates;
        s.alpha = self.alpha;
        s.rule = self.rule.map(|r| match r {
            RuleArg::Paper => DecisionRule::Paper,
            RuleArg::Conventional => DecisionRule::Conventional,
        });
        s.block_len = self.block_len;
    }
}

impl Sub {
    fn into_settings(self) -> (Command, Settings) {
        let mut s = Settings::default();
        let cmd = match self {
            Sub::Decompose(src) => {
                src.fill(&mut s);
                Command::Decompose
            }
            Sub::Pi { source, quota, structure } => {
                source.fill(&mut s);
                s.quota = quota;
                s.structure = structure;
                Command::Pi
            }
            Sub::Identify { panel, horizon, boot } => {
                panel.fill(&mut s);
                s.horizon = horizon;
                boot.fill(&mut s);
                Command::Identify
            }
            Sub::Local {
                source,
                structure,
                target,
                steps,
            } => {
                source.fill(&mut s);
                s.structure = structure;
                s.target = target;
                s.steps = steps;
                Command::Local
            }
            Sub::Simulate {
                template,
                datasets,
                length,
                quick,
                boot,
            } => {
                s.template = template;
                s.datasets = datasets;
                s.length = length;
                s.quick = quick.then_some(true);
                boot.fill(&mut s);
                Command::Simulate
            }
            Sub::Generate { template, length, seed } => {
                s.template = template;
                s.length = length;
                s.seed = seed;
                Command::Generate
            }
        };
        (cmd, s)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use varcause::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if err.downcast_ref::<VerifyMismatch>().is_some() {
        return 3;
    }
    match err.downcast_ref::<E>() {
        Some(E::Contract(_)) => 1,
        Some(
            E::Schema(_)
            | E::Ingestion { .. }
            | E::DegenerateSeries(_)
            | E::DegreesOfFreedom { .. }
            | E::RankDeficient(_)
            | E::Contradiction(_)
            | E::Misclassification(_)
            | E::Io(_)
            | E::Csv(_)
            | E::Json(_),
        ) => 2,
        Some(_) => 3,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 3,
    }
}

/// Replaces `path` in one step so readers never see a partial report.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(varcause::Error::Io)?;
    tmp.write_all(bytes).map_err(varcause::Error::Io)?;
    tmp.persist(path).map_err(|e| varcause::Error::Io(e.error))?;
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
        FormatArg::Md => Format::Markdown,
    };
    let (command, flags) = cli.command.into_settings();
    let settings = match &cli.config {
        Some(path) => flags.or(Settings::load(path)?),
        None => flags,
    };
    let bytes = commands::run(command, &settings)?.render(format)?;
    if cli.verify && commands::run(command, &settings)?.render(format)? != bytes {
        return Err(VerifyMismatch.into());
    }
    match &cli.output {
        Some(path) => write_atomic(path, &bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes).map_err(varcause::Error::Io)?;
            out.flush().map_err(varcause::Error::Io)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
