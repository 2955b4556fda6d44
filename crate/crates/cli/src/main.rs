fn main() {
    std::process::exit(chargeplan_cli::run(std::env::args_os()));
}
