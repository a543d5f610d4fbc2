fn main() {
    std::process::exit(tcontrol_cli::run(std::env::args_os()));
}
