use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Sawtooth shear mixing experiments.
#[derive(Parser, Debug)]
#[command(name = "batchelor-lab", version)]
struct Args {
    /// mixing, projected-mixing, batchelor, flux, geometry, norms, evolve or render
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "BLAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "BLAB_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: config field `threads`: must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match batchelor_lab::run_from_file(&args.experiment, &args.config, args.out.as_deref()) {
        Ok(m) => {
            println!("{}: wrote {} files", args.experiment, m.files.len() + 1);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
