fn main() {
    std::process::exit(scvi_hmm::cli::run(std::env::args_os()));
}
