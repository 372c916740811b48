//! `nlkg` command line interface (placeholder while the harness is built).

fn main() {
    eprintln!("nlkg: command line interface not wired up yet");
    std::process::exit(2);
}
