fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROVEX_LOG", "warn")).init();
    std::process::exit(provex::cli::run(std::env::args_os()));
}
