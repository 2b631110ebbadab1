fn main() {
    std::process::exit(msalab_cli::run(std::env::args_os()));
}
