fn main() {
    std::process::exit(wishart_sum_cli::run(std::env::args_os()));
}
