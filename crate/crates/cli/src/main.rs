//! `wavefield` command-line front end.

mod args;
mod commands;
mod manifest;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use wavefield_core::{Error, Result};

use args::Cli;
use commands::Context;
use manifest::{FileDigest, Files, RunManifest};

fn cache_dir(flag: Option<&PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.clone();
    }
    match std::env::var_os("WAVEFIELD_CACHE") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => dirs::cache_dir()
            .unwrap_or_else(std::env::temp_dir)
            .join("wavefield"),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("--threads: {e}")))?;
    }
    let mut ctx = Context {
        cache_dir: cache_dir(cli.cache.as_ref()),
        files: Files::default(),
    };
    let text = commands::dispatch(&cli.command, &mut ctx)?.render(cli.format);
    let primary = match &cli.output {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
            FileDigest::of_bytes(&path.display().to_string(), text.as_bytes())
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))?;
            FileDigest::of_bytes("-", text.as_bytes())
        }
    };
    if let Some(path) = &cli.manifest {
        let mut outputs = vec![primary];
        for p in &ctx.files.outputs {
            outputs.push(FileDigest::of_file(p)?);
        }
        let inputs = ctx
            .files
            .inputs
            .iter()
            .map(|p| FileDigest::of_file(p))
            .collect::<Result<Vec<_>>>()?;
        RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            subcommand: cli.command.name().to_string(),
            parameters: serde_json::to_value(cli).map_err(|e| Error::Parse(e.to_string()))?,
            inputs,
            outputs,
            wall_time_s: start.elapsed().as_secs_f64(),
        }
        .append(path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}
