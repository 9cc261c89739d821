fn main() {
    std::process::exit(switchgame::cli::run());
}
