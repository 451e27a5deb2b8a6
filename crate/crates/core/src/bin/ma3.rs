fn main() {
    let code = ma3::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
