fn main() {
    std::process::exit(css_lattice::cli::main_with_args(std::env::args_os()));
}
