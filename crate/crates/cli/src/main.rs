use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sstr_cli::{execute, parse_spec_with, CliError, Command, ExecOptions, Manifest};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Analytic,
    Simulate,
    Optimize,
    Sweep,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Analytic => Command::Analytic,
            Cmd::Simulate => Command::Simulate,
            Cmd::Optimize => Command::Optimize,
            Cmd::Sweep => Command::Sweep,
        }
    }
}

/// Successful symbol transmission rate of grant-free massive access.
#[derive(Debug, Parser)]
#[command(name = "sstr", version)]
struct Args {
    /// What to compute; takes precedence over `command` in the spec file.
    command: Cmd,
    /// Experiment file with `key = value` lines.
    #[arg(long)]
    spec: PathBuf,
    /// Master seed; overrides `seed` in the spec file.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when neither this nor `output` is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for Monte-Carlo batches and joint search.
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock seconds per row in `runtime_s`.
    #[arg(long)]
    timing: bool,
}

fn io_err(path: &std::path::Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn run(args: Args) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        // a second call in the same process fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let bytes = std::fs::read(&args.spec).map_err(|e| io_err(&args.spec, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut spec = parse_spec_with(&text, Some(args.command.into()))?;
    if let Some(seed) = args.seed {
        spec.config.seed = seed;
    }

    let output = execute(&spec, &ExecOptions { timing: args.timing })?;
    let csv = output.to_csv()?;
    let manifest = Manifest::new(&spec, &bytes, &output);
    let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serialises");

    match args.out.or(spec.output_path.clone()) {
        Some(path) => {
            std::fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
            let mpath = PathBuf::from(format!("{}.manifest.json", path.display()));
            std::fs::write(&mpath, manifest + "\n").map_err(|e| io_err(&mpath, e))?;
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&csv)
                .map_err(|e| io_err(std::path::Path::new("<stdout>"), e))?;
            eprintln!("{manifest}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = e.record();
            eprintln!("{}", serde_json::to_string(&record).expect("error record serialises"));
            ExitCode::from(record.exit_code as u8)
        }
    }
}
