mod args;
mod commands;
mod error;

use std::process;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{exit, CliError};

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter_or("DIFFEOFLOW_LOG", "warn");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    builder.format_timestamp(None).init();
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    match &cli.command {
        Command::BuildTemplate(a) => commands::build_template_cmd(a),
        Command::Deform(a) => commands::deform_cmd(a),
        Command::Fit(a) => commands::fit_cmd(a, cli.seed),
        Command::Metrics(a) => commands::metrics_cmd(a, cli.seed),
        Command::GenField(a) => commands::gen_field_cmd(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => e.exit(),
            _ => {
                let err = CliError::Usage(e.render().to_string().trim().to_string());
                eprintln!("{}", err.to_json());
                process::exit(exit::USAGE);
            }
        },
    };
    init_logging(cli.log_level.as_deref());
    if let Err(e) = run(&cli) {
        log::debug!("{e:?}");
        eprintln!("{}", e.to_json());
        process::exit(e.exit_code());
    }
    process::exit(exit::OK);
}
