fn main() {
    std::process::exit(ricci_harnack::cli::run_cli(std::env::args_os()));
}
