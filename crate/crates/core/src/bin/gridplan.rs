fn main() {
    std::process::exit(gridplan::cli::cli_main(std::env::args_os()));
}
