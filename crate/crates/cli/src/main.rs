fn main() {
    std::process::exit(wsdist_cli::run(std::env::args_os()));
}
