use clap::Parser;
use serverpop_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    if let Err(e) = serverpop_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
