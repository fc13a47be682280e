use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = veriq::cli::Cli::parse();
    if let Err(err) = veriq::cli::run(cli) {
        let broken_pipe = err
            .chain()
            .filter_map(|c| c.downcast_ref::<std::io::Error>())
            .any(|e| e.kind() == std::io::ErrorKind::BrokenPipe);
        if broken_pipe {
            return;
        }
        eprintln!("error: {err:#}");
        std::process::exit(veriq::cli::exit_code(&err));
    }
}
