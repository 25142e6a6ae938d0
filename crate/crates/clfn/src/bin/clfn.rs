fn main() {
    std::process::exit(clfn::cli::run());
}
