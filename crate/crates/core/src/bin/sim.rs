fn main() {
    std::process::exit(rampsim::cli::main(std::env::args_os()));
}
