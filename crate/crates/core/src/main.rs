use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use uaelab::config;
use uaelab::enumerate::{cache_file_name, explore_with, load_runset, save_runset, ExploreOptions, RunSet};
use uaelab::family::{CachePolicy, RunSetFamily};
use uaelab::lab::{error_kind, is_degenerate, ExperimentKind, Lab, TOOL_VERSION};
use uaelab::machine::{MachineConfig, MACHINE_VERSION};
use uaelab::prior::{self, PriorEstimate};
use uaelab::weights::{weight_report, MindState};
use uaelab::{Bits, Error};

#[derive(Parser)]
#[command(
    name = "uaelab",
    version,
    about = "Enumerate a small reference machine and evaluate priors, weights and decision formulas"
)]
struct Cli {
    /// Directory holding content-addressed RunSet caches.
    #[arg(long, global = true, env = "UAE_CACHE_DIR", default_value = ".uaelab-cache")]
    cache_dir: PathBuf,
    /// Worker threads for enumeration (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorCmd {
    /// Discrete prior m̂(x).
    #[value(name = "m")]
    Discrete,
    /// Monotone prior M̂(x).
    #[value(name = "M")]
    Monotone,
    /// Conditional prior m̂(x|y), y being the cache's aux tape.
    #[value(name = "cond")]
    Cond,
    /// Natural-number prior m̂_nat(n).
    #[value(name = "nat")]
    Nat,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate all programs up to the caps and write a cache file.
    Enumerate {
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value = "")]
        aux: Bits,
        /// Output file (default: content-addressed name in the cache dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a prior estimate read from a cache file.
    Prior {
        #[arg(value_enum)]
        which: PriorCmd,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<Bits>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        cache: PathBuf,
    },
    /// Print the three weight estimators for one pair of mind-states.
    Weight {
        #[arg(long)]
        a: MindState,
        #[arg(long)]
        b: MindState,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        #[command(flatten)]
        cache: CacheFlags,
    },
    /// Run an experiment described by a JSON config file.
    Experiment {
        /// teleport, simulation, ethics, resolution, triangle, gfit, utility, nid or pipeline.
        kind: ExperimentKind,
        config: PathBuf,
        #[command(flatten)]
        cache: CacheFlags,
    },
}

#[derive(clap::Args)]
struct CacheFlags {
    /// Build and store caches that are missing.
    #[arg(long)]
    build_cache: bool,
    /// Enumerate in memory without touching the cache dir.
    #[arg(long, conflicts_with = "build_cache")]
    no_cache: bool,
}

fn options(cli: &Cli) -> ExploreOptions {
    let workers = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    ExploreOptions::with_workers(workers)
}

fn family(cli: &Cli, depth: usize, steps: u64, flags: &CacheFlags) -> uaelab::Result<RunSetFamily> {
    let policy = if flags.no_cache {
        CachePolicy::InMemory
    } else if flags.build_cache {
        CachePolicy::Build(cli.cache_dir.clone())
    } else {
        CachePolicy::ReadOnly(cli.cache_dir.clone())
    };
    RunSetFamily::new(depth, steps, options(cli), policy)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::CacheCorrupt(_) | Error::CacheMismatch(_) | Error::VersionMismatch { .. } => 3,
        e if is_degenerate(e) => 2,
        _ => 1,
    }
}

/// Flattens nested JSON into `path,value` rows.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn emit(format: Format, v: &Value) -> uaelab::Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(v).expect("serializable");
            s.push('\n');
            lock.write_all(s.as_bytes())?;
        }
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", v, &mut rows);
            let mut w = csv::Writer::from_writer(lock);
            w.write_record(["key", "value"]).map_err(csv_err)?;
            for (k, val) in rows {
                w.write_record([k, val]).map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

fn prior_value(est: &PriorEstimate, rs: &RunSet) -> Value {
    let mut v = serde_json::to_value(est).expect("serializable");
    let obj = v.as_object_mut().expect("object");
    let value = obj.remove("value").expect("value field");
    for (k, x) in value.as_object().expect("dyadic object") {
        obj.insert(k.clone(), x.clone());
    }
    obj.insert("log2".into(), json!(est.value.log2()));
    obj.insert("aux".into(), json!(rs.config().aux_tape()));
    obj.insert("machine_version".into(), json!(rs.machine_version()));
    v
}

fn run(cli: &Cli) -> uaelab::Result<()> {
    match &cli.command {
        Command::Enumerate { depth, steps, aux, out } => {
            let config = MachineConfig::new(*depth, *steps, aux.clone())?;
            let path = out
                .clone()
                .unwrap_or_else(|| cli.cache_dir.join(cache_file_name(&config)));
            let rs = explore_with(&config, &options(cli))?;
            save_runset(&rs, &path)?;
            emit(
                cli.format,
                &json!({
                    "path": path.display().to_string(),
                    "records": rs.records().len(),
                    "halted": rs.halted().count(),
                    "depth_cap": rs.depth_cap(),
                    "step_cap": rs.step_cap(),
                    "aux": rs.config().aux_tape(),
                    "machine_version": MACHINE_VERSION,
                }),
            )
        }
        Command::Prior { which, x, n, cache } => {
            if !cache.exists() {
                return Err(Error::CacheMismatch(format!("missing cache {}", cache.display())));
            }
            let rs = load_runset(cache)?;
            let need_x = || x.clone().ok_or_else(|| Error::Config("--x is required".into()));
            let est = match which {
                PriorCmd::Discrete => prior::m_hat(&rs, &need_x()?),
                PriorCmd::Monotone => prior::big_m_hat(&rs, &need_x()?),
                PriorCmd::Cond => prior::m_cond_hat(&rs, &need_x()?),
                PriorCmd::Nat => prior::m_nat_hat(&rs, n.ok_or_else(|| Error::Config("--n is required".into()))?)?,
            };
            emit(cli.format, &prior_value(&est, &rs))
        }
        Command::Weight {
            a,
            b,
            depth,
            steps,
            n_max,
            cache,
        } => {
            let fam = family(cli, *depth, *steps, cache)?;
            let r = weight_report(&fam, a, b, *n_max)?;
            let mut v = serde_json::to_value(&r).expect("serializable");
            v["machine_version"] = json!(MACHINE_VERSION);
            v["tool_version"] = json!(TOOL_VERSION);
            emit(cli.format, &v)
        }
        Command::Experiment { kind, config, cache } => {
            let resolved = config::load(config)?;
            let m = &resolved.config.machine;
            let fam = family(cli, m.depth_cap, m.step_cap, cache)?;
            let report = Lab::new(resolved, fam)?.run(*kind)?;
            match cli.format {
                Format::Json => {
                    io::stdout().write_all(report.to_json().as_bytes())?;
                    Ok(())
                }
                Format::Csv => emit(cli.format, &serde_json::to_value(&report).expect("serializable")),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uaelab: {} error: {e}", error_kind(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
