fn main() {
    std::process::exit(nap_select::cli::run(std::env::args_os()));
}
