use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = regopt_cli::Cli::parse();
    if let Err(e) = regopt_cli::run(cli) {
        eprintln!("regopt: {e}");
        std::process::exit(e.exit_code());
    }
}
