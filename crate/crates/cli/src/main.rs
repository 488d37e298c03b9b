/// `println!` that ignores a closed stdout (e.g. piping into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

mod cmd;
mod failure;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::{classify, Failure};
use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "swg", version, about = "SwG-former sound event localization and detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render random FOA scenes as WAV files with CSV annotations.
    Synth(cmd::synth::Args),
    /// Compute standardized log-mel + intensity-vector features for a WAV directory.
    Extract(cmd::extract::Args),
    /// Train a model on features and labels, writing a checkpoint and a log.
    Train(cmd::train::Args),
    /// Run a checkpoint on features: decoded events and raw ACCDOA output.
    Infer(cmd::infer::Args),
    /// Score predicted annotations against references.
    Eval(cmd::eval::Args),
    /// Draw predicted and reference ACCDOA trajectories as SVG.
    Plot(cmd::plot::Args),
    /// Run the finite-difference gradient suites.
    Gradcheck(cmd::gradcheck::Args),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Eval(_) => "eval",
            Command::Plot(_) => "plot",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    fn out_dir(&self) -> &PathBuf {
        match self {
            Command::Synth(a) => &a.out,
            Command::Extract(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Infer(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::Plot(a) => &a.out,
            Command::Gradcheck(a) => &a.out,
        }
    }

    fn run(&self, m: &mut Manifest) -> anyhow::Result<()> {
        match self {
            Command::Synth(a) => cmd::synth::run(a, m),
            Command::Extract(a) => cmd::extract::run(a, m),
            Command::Train(a) => cmd::train::run(a, m),
            Command::Infer(a) => cmd::infer::run(a, m),
            Command::Eval(a) => cmd::eval::run(a, m),
            Command::Plot(a) => cmd::plot::run(a, m),
            Command::Gradcheck(a) => cmd::gradcheck::run(a, m),
        }
    }
}

/// Caps rayon's pool at `SWG_THREADS` when set.
fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("SWG_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SWG_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Failure::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let name = cli.command.name();
    if let Err(f) = configure_threads() {
        eprintln!("swg {name}: {f}");
        return ExitCode::from(f.code());
    }
    let out = cli.command.out_dir().clone();
    let mut manifest = Manifest::new(name, std::env::args().collect());
    let result = std::fs::create_dir_all(&out)
        .map_err(|e| anyhow::Error::new(e).context(format!("cannot create output directory {}", out.display())))
        .and_then(|_| cli.command.run(&mut manifest));
    match result {
        Ok(()) => match manifest.finish(&out, None) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("swg {name}: cannot write manifest: {e:#}");
                ExitCode::from(Failure::DATA)
            }
        },
        Err(e) => {
            let f = classify(&e);
            eprintln!("swg {name}: {f}");
            match manifest.finish(&out, Some(&f)) {
                Ok(path) => eprintln!("diagnostics: {}", path.display()),
                Err(_) => eprintln!("diagnostics: {}", out.display()),
            }
            ExitCode::from(f.code())
        }
    }
}
