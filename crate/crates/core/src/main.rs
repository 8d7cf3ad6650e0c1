use std::io::Write;

fn main() {
    let (code, output) = contab::cli::run(std::env::args_os());
    let mut out = std::io::stdout().lock();
    // a closed pipe downstream is not an error worth reporting
    let _ = writeln!(out, "{}", output.trim_end()).and_then(|_| out.flush());
    std::process::exit(code);
}
