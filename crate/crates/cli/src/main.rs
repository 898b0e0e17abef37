fn main() {
    std::process::exit(gasp_cli::run(std::env::args_os()));
}
