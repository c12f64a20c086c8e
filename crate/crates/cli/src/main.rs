use clap::Parser;

fn main() {
    let cli = fdisac_cli::Cli::parse();
    match fdisac_cli::run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
