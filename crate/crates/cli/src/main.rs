use clap::Parser;
use ruin_cli::RunConfig;

fn main() {
    let config = RunConfig::parse();
    match ruin_cli::run(&config) {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            eprintln!("{err}");
            std::process::exit(err.code());
        }
    }
}
