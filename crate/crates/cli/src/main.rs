use std::process::ExitCode;

use clap::Parser;

use explsum_cli::args::{Cli, Command};
use explsum_cli::{bench, commands, exit, service, CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Summarize(args) => commands::cmd_summarize(&args).map(drop),
        Command::Ingest(cmd) => commands::cmd_ingest(&cmd),
        Command::Inspect(args) => commands::cmd_inspect(&args, &mut std::io::stdout().lock()),
        Command::Bench(args) => bench::cmd_bench(&args).map(drop),
        Command::Serve(args) => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(CliError::internal)?
            .block_on(service::serve(&args)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MELODY_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
