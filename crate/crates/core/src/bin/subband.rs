fn main() {
    let code = subband_cnn::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
