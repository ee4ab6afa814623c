fn main() {
    std::process::exit(spectra_shape::cli::run());
}
