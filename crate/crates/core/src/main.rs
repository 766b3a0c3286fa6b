fn main() {
    std::process::exit(docmask::cli::run(std::env::args_os()));
}
