//! `wetting`: runs one pipeline from a flat config file plus `key=value`
//! overrides and writes its artifacts under `<out>/<command>-<digest>/`.

mod config;
mod pipelines;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use config::{parse_flat, parse_pair, Command, ConfigError, RunConfig};
use pipelines::{FileBody, Output, RunError};

#[derive(Parser, Debug)]
#[command(name = "wetting", version, about = "Simulation and verification of wetting models")]
struct Args {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; each run writes to `<out>/<command>-<digest12>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    command: Option<String>,
    /// `key=value` overrides applied after the config file.
    overrides: Vec<String>,
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let mut pairs = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            parse_flat(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => Vec::new(),
    };
    for o in &args.overrides {
        pairs.push(parse_pair(o).ok_or_else(|| ConfigError::Malformed { line: 0, text: o.clone() }.to_string())?);
    }
    RunConfig::resolve(&pairs, args.command.as_deref(), args.seed).map_err(|e| e.to_string())
}

fn execute(cfg: &RunConfig, threads: usize) -> Result<Output, RunError> {
    match cfg.command {
        Command::SampleStatic => pipelines::sample_static_cmd(cfg),
        Command::SimulateLattice => pipelines::simulate_lattice_cmd(cfg),
        Command::SimulateContinuum => pipelines::simulate_continuum_cmd(cfg),
        Command::SimulateSpde => pipelines::simulate_spde_cmd(cfg),
        Command::Verify => pipelines::verify_cmd(cfg, threads),
        Command::Report => pipelines::report_cmd(cfg),
    }
}

fn stamp(body: FileBody, digest: &str) -> Result<String, serde_json::Error> {
    match body {
        FileBody::Csv(text) => Ok(format!("# config_digest={digest}\n{text}")),
        FileBody::Json(v) => {
            let v = match v {
                Value::Object(mut m) => {
                    m.insert("config_digest".into(), Value::String(digest.into()));
                    Value::Object(m)
                }
                other => json!({"config_digest": digest, "data": other}),
            };
            Ok(serde_json::to_string_pretty(&v)? + "\n")
        }
    }
}

fn write_outputs(dir: &Path, cfg: &RunConfig, out: Output) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let digest = cfg.digest();
    let manifest = json!({
        "command": cfg.command.name(),
        "seed": cfg.seed,
        "params": cfg.params,
        "summary": out.summary,
        "files": out.files.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    });
    let mut files = out.files;
    files.push(("manifest.json".into(), FileBody::Json(manifest)));
    for (name, body) in files {
        fs::write(dir.join(name), stamp(body, &digest)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let dir = args.out.join(format!("{}-{}", cfg.command.name(), &cfg.digest()[..12]));
    log::info!("{} -> {}", cfg.command.name(), dir.display());
    let out = match execute(&cfg, threads) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let verdict = out.verdict;
    if let Err(e) = write_outputs(&dir, &cfg, out) {
        eprintln!("error: cannot write {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    match verdict {
        Some(false) => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    }
}
