fn main() {
    std::process::exit(dartr::io::cli_main(std::env::args_os()));
}
