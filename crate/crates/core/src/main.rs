fn main() {
    let code = probe_arena::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
