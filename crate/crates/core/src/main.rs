fn main() {
    std::process::exit(privgame::experiments::cli_main(std::env::args_os()));
}
