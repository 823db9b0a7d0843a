use clap::Parser;
use mixplan_cli::{execute, Cli, EXIT_INPUT};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXPLAN_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(execute(&cli));
}
