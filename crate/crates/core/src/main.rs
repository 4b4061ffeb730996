fn main() {
    std::process::exit(radar_gesture::cli::main_with_args(std::env::args_os()));
}
