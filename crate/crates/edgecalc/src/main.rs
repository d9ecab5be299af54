fn main() {
    std::process::exit(edgecalc::cli::run(std::env::args_os()));
}
