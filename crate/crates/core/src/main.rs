fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IOTPRINT_LOG", "info")).init();
    std::process::exit(iotprint::cli::run(std::env::args_os()));
}
