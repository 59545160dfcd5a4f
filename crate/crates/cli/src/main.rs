mod args;
mod cmd;
mod config;
mod pipeline;
mod provenance;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// A user-facing validation failure (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<InputError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<nopcode_core::Error>() {
            return match e {
                nopcode_core::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
                e if e.is_input_error() => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(j) = cli.settings.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global()?;
    }
    let settings = cli.settings;
    match &cli.command {
        Command::Extract { dirs, corpus, output } => {
            cmd::corpus::extract(settings, dirs, corpus.as_deref(), output.as_deref())
        }
        Command::Stats => cmd::corpus::stats(settings),
        Command::Vocab => cmd::corpus::vocab(settings),
        Command::Featurize => cmd::corpus::featurize(settings),
        Command::Select => cmd::select::run(settings),
        Command::Export { format } => cmd::corpus::export(settings, *format),
        Command::Evaluate => cmd::evaluate::run(settings),
        Command::Bench => cmd::bench::run(settings),
        Command::Synth(a) => cmd::synth::run(settings, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
