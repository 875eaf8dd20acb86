fn main() {
    std::process::exit(moran_dim::cli::run(std::env::args_os()));
}
