pub mod args;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use config::{resolve, Config, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Bad invocation: wrong flag combination or value.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Error chain joined by `: `, skipping causes the previous message already
/// spells out.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.is::<UsageError>() || matches!(cause.downcast_ref(), Some(msface::Error::InvalidArgument(_))) {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

pub fn overrides(g: &args::GlobalArgs) -> Overrides {
    Overrides {
        threshold_deg: g.threshold,
        stride: g.stride,
        chip_size: g.chip_size,
        fever_threshold_c: g.fever_threshold,
        calibration: g.calibration.clone(),
        eigen_k: g.eigen_k,
        jobs: g.jobs,
        seed: g.seed,
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let cfg = match resolve(cli.global.config.as_deref(), env_seed.as_deref(), &overrides(&cli.global)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return EXIT_USAGE;
        }
    };
    if cli.global.print_config {
        print!("{}", cfg.to_toml());
        return EXIT_OK;
    }
    let ctx = commands::Ctx { cfg, out: cli.global.out.clone() };
    match commands::dispatch(cli.command, &ctx) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            exit_code(&e)
        }
    }
}
