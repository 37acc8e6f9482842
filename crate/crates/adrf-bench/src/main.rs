fn main() {
    std::process::exit(adrf_bench::cli::run(std::env::args_os()));
}
