use std::io::Write;

fn main() {
    let res = dualsection_cli::run(std::env::args_os());
    if !res.stdout.is_empty() {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{}", res.stdout.trim_end());
    }
    if !res.stderr.is_empty() {
        eprintln!("{}", res.stderr.trim_end());
    }
    std::process::exit(res.code);
}
