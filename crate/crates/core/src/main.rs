fn main() {
    std::process::exit(omnidp::cli::run(std::env::args_os()));
}
