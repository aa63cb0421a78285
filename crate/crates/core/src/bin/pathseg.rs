use clap::Parser;
use pathseg::cli::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(msg) => println!("{msg}"),
        Err(e) => {
            eprintln!("pathseg: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
