//! The `uth` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use uth_core::retrieval::{encode_dataset, knn_search, lsh_encode_dataset};
use uth_core::training::{train, SystemClock};
use uth_core::{eval, CodeDatabase, NetworkParams, Objective, TrainLog, DEFAULT_THRESHOLD};

use crate::codes_file::load_codes;
use crate::config::{Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::params_file::load_params;
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "uth", version, about = "Unsupervised triplet hashing for image retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Overrides both train.seed and eval.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides train.bit_width.
    #[arg(long)]
    pub bits: Option<usize>,
    /// Overrides output_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let o = Overrides { seed: self.seed, bits: self.bits, out: self.out.clone() };
        RunConfig::load(&self.config, &o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Lsh,
    Rotinv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network; writes params.uthp, trainlog.csv and manifest.json.
    Train(ConfigArgs),
    /// Encode the configured dataset into codes.uthc.
    Encode {
        #[command(flatten)]
        args: ConfigArgs,
        /// Parameter file (default: <output_dir>/params.uthp).
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Print the k nearest codes to a stored entry as CSV.
    Search {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        query_id: u64,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Evaluate a labeled code file; writes eval_pr.csv and eval_summary.json.
    Eval {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        codes: PathBuf,
        /// Suffix for the report names, e.g. `lsh` gives eval_pr_lsh.csv.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Baselines: `lsh` writes codes_lsh.uthc, `rotinv` writes
    /// params_rotinv.uthp and trainlog_rotinv.csv.
    Baseline {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_enum)]
        method: Method,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Core(uth_core::Error::Numeric(_)) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    bit_width: usize,
    started_unix: u64,
    wall_clock_seconds: f64,
    outputs: Vec<&'a str>,
}

fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_json().as_bytes()))
}

/// Output files are written only once every input has been validated and
/// all computation has succeeded.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

struct Timer {
    started_unix: u64,
    start: Instant,
}

impl Timer {
    fn start() -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { started_unix, start: Instant::now() }
    }

    fn manifest(&self, command: &str, cfg: &RunConfig, outputs: &[(&str, Vec<u8>)]) -> Vec<u8> {
        let m = Manifest {
            command,
            config_sha256: config_hash(cfg),
            seed: cfg.train.config.seed,
            bit_width: cfg.train.config.bit_width,
            started_unix: self.started_unix,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
            outputs: outputs.iter().map(|(n, _)| *n).collect(),
        };
        let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
        s.push('\n');
        s.into_bytes()
    }
}

fn train_with(cfg: &RunConfig, objective: Objective) -> Result<(NetworkParams, TrainLog)> {
    let dataset = cfg.load_dataset()?;
    let params = cfg.initial_network()?;
    let mut tc = cfg.train.config.clone();
    tc.objective = objective;
    Ok(train(params, &dataset, &tc, &SystemClock::default())?)
}

fn check_compatible(params: &NetworkParams, cfg: &RunConfig) -> Result<()> {
    if params.input_dims() != cfg.input_dims() {
        return Err(Error::Consistency(format!(
            "params expect {:?} images, dataset provides {:?}",
            params.input_dims(),
            cfg.input_dims()
        )));
    }
    if params.bit_width() != cfg.train.config.bit_width {
        return Err(Error::Consistency(format!(
            "params emit {} bits, config asks for {}",
            params.bit_width(),
            cfg.train.config.bit_width
        )));
    }
    Ok(())
}

fn cmd_train(args: &ConfigArgs, objective: Objective, names: [&'static str; 3]) -> Result<()> {
    let timer = Timer::start();
    let cfg = args.load()?;
    let (params, log) = train_with(&cfg, objective)?;
    let mut files = vec![
        (names[0], crate::params_file::encode_params(&params)),
        (names[1], report::trainlog_csv(&log).into_bytes()),
    ];
    let manifest =
        timer.manifest(if objective == Objective::Triplet { "train" } else { "baseline-rotinv" }, &cfg, &files);
    files.push((names[2], manifest));
    write_outputs(&cfg.output_dir, &files)
}

fn cmd_encode(args: &ConfigArgs, params_path: Option<&Path>) -> Result<()> {
    let cfg = args.load()?;
    let path = params_path.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("params.uthp"));
    let params = load_params(&path)?;
    check_compatible(&params, &cfg)?;
    let dataset = cfg.load_dataset()?;
    let db = encode_dataset(&params, &dataset, DEFAULT_THRESHOLD)?;
    write_outputs(&cfg.output_dir, &[("codes.uthc", crate::codes_file::encode_codes(&db))])
}

fn cmd_search(codes: &Path, query_id: u64, k: usize, out: &mut dyn Write) -> Result<()> {
    let db = load_codes(codes)?;
    let pos = db
        .position_of(query_id)
        .ok_or_else(|| Error::Consistency(format!("id {query_id} is not in {}", codes.display())))?;
    let neighbors = knn_search(&db, &db.codes()[pos], k)?;
    out.write_all(report::search_csv(&neighbors).as_bytes())?;
    Ok(())
}

fn cmd_eval(args: &ConfigArgs, codes: &Path, tag: Option<&str>) -> Result<()> {
    let cfg = args.load()?;
    let db: CodeDatabase = load_codes(codes)?;
    let rep = eval::evaluate(&db, &cfg.eval)?;
    let (pr, summary) = match tag {
        Some(t) => (format!("eval_pr_{t}.csv"), format!("eval_summary_{t}.json")),
        None => ("eval_pr.csv".to_string(), "eval_summary.json".to_string()),
    };
    write_outputs(
        &cfg.output_dir,
        &[(&pr, report::pr_csv(&rep.pr_curve).into_bytes()), (&summary, report::summary_json(&rep).into_bytes())],
    )
}

fn cmd_lsh(args: &ConfigArgs) -> Result<()> {
    let timer = Timer::start();
    let cfg = args.load()?;
    let dataset = cfg.load_dataset()?;
    let db = lsh_encode_dataset(&dataset, cfg.train.config.bit_width, cfg.train.config.seed)?;
    let mut files = vec![("codes_lsh.uthc", crate::codes_file::encode_codes(&db))];
    let manifest = timer.manifest("baseline-lsh", &cfg, &files);
    files.push(("manifest_lsh.json", manifest));
    write_outputs(&cfg.output_dir, &files)
}

/// Runs one parsed command; search results go to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Train(args) => cmd_train(args, Objective::Triplet, ["params.uthp", "trainlog.csv", "manifest.json"]),
        Command::Encode { args, params } => cmd_encode(args, params.as_deref()),
        Command::Search { codes, query_id, k } => cmd_search(codes, *query_id, *k, stdout),
        Command::Eval { args, codes, tag } => cmd_eval(args, codes, tag.as_deref()),
        Command::Baseline { args, method: Method::Lsh } => cmd_lsh(args),
        Command::Baseline { args, method: Method::Rotinv } => cmd_train(
            args,
            Objective::RotationInvariance,
            ["params_rotinv.uthp", "trainlog_rotinv.csv", "manifest_rotinv.json"],
        ),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("uth: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn numeric_errors_map_to_three() {
        assert_eq!(exit_code(&Error::Core(uth_core::Error::Numeric("nan".into()))), 3);
        assert_eq!(exit_code(&Error::Core(uth_core::Error::Config("x".into()))), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
    }

    #[test]
    fn unknown_method_is_a_usage_error() {
        assert_eq!(main_with_args(["uth", "baseline", "--config", "c.json", "--method", "pca"]), 2);
    }
}
