fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("GFCLT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) => gfclt::exec::init_threads(n),
            Err(_) => log::warn!("ignoring GFCLT_THREADS={v}: not a thread count"),
        }
    }
    std::process::exit(gfclt_cli::run(std::env::args_os()));
}
