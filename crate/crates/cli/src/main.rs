use clap::Parser;

use prefmorl::session::RunMode;
use prefmorl_cli::commands::{self, Cli, Command};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => commands::run(a, RunMode::Preference).map(|_| ()),
        Command::Baseline(a) => commands::run(a, RunMode::Baseline).map(|_| ()),
        Command::Serve(a) => commands::serve(a),
        Command::Resume(a) => commands::resume(a).map(|_| ()),
        Command::Report(a) => commands::report(a),
        Command::ExampleConfig => {
            println!("{}", commands::example_config());
            Ok(())
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
