fn main() {
    std::process::exit(infobound::cli::run(std::env::args_os()));
}
