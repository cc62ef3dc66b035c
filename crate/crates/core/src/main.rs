fn main() {
    std::process::exit(pcsampling::cli::main_with_args(std::env::args_os()));
}
