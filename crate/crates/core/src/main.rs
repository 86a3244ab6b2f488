fn main() {
    std::process::exit(zsmstm::cli::run_from(std::env::args_os()));
}
