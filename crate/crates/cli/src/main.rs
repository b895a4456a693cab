use clap::Parser;

fn main() {
    let cli = padicvol_cli::Cli::parse();
    std::process::exit(padicvol_cli::run(cli));
}
