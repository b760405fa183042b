fn main() {
    std::process::exit(quantile_density::cli::main_with_args(std::env::args_os()));
}
