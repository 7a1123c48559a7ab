fn main() {
    std::process::exit(traffic_game_cli::run(std::env::args()));
}
