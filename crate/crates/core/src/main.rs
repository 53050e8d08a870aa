fn main() {
    std::process::exit(haarfactor::cli::run_command(std::env::args_os()));
}
