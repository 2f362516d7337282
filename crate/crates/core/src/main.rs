fn main() {
    std::process::exit(snndse::cli::run(std::env::args_os()));
}
