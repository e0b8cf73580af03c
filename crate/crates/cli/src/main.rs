mod args;
mod commands;
mod ctx;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use ctx::Ctx;
use error::CliResult;

fn run(cli: Cli) -> CliResult<()> {
    macro_rules! go {
        ($stage:literal, $a:expr, $f:path) => {{
            let a = $a;
            let ctx = Ctx::new($stage, a.common.seed, a.common.config.clone())?;
            $f(a, &ctx)
        }};
    }
    match cli.command {
        Command::Phantom(a) => go!("phantom", a, commands::phantom),
        Command::Radon(a) => go!("radon", a, commands::radon),
        Command::Fbp(a) => go!("fbp", a, commands::fbp),
        Command::Mlem(a) => go!("mlem", a, commands::mlem),
        Command::DmmMasks(a) => go!("dmm-masks", a, commands::dmm_masks),
        Command::Augment(a) => go!("augment", a, commands::augment),
        Command::Tma(a) => go!("tma", a, commands::tma),
        Command::Diffuse(a) => go!("diffuse", a, commands::diffuse),
        Command::TrainDenoiser(a) => go!("train-denoiser", a, commands::train_denoiser),
        Command::Certify(a) => go!("certify", a, commands::certify_cmd),
        Command::Concentration(a) => go!("concentration", a, commands::concentration),
        Command::Metrics(a) => go!("metrics", a, commands::metrics),
        Command::Pipeline(a) => go!("pipeline", a, commands::pipeline),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("projdiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
