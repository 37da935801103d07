fn main() {
    std::process::exit(neuralmag::app::run(std::env::args_os()));
}
