fn main() {
    std::process::exit(heat_dpg::experiments::cli::run(std::env::args_os()));
}
