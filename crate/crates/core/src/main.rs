use clap::Parser;

use hybrid_cover::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli, std::env::vars()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
