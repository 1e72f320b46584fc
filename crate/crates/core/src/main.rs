fn main() {
    std::process::exit(mdl_select::cli::run(std::env::args().collect()));
}
