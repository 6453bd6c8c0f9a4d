use clap::error::ErrorKind;
use clap::Parser;

use sednet_io::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let first_line = e.to_string();
            let first_line = first_line.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {first_line}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{}", e.stderr_line());
        std::process::exit(e.exit_code());
    }
}
