fn main() {
    std::process::exit(john_ellipsoid::cli::run(std::env::args_os()));
}
