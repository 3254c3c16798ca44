use clap::Parser;
use sblab::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    let result = cli::init_threads().and_then(|()| cli::run(&args));
    match result {
        Ok(report) => println!("{}", serde_json::to_string_pretty(&report).expect("json serializes")),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
