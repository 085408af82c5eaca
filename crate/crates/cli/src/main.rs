use std::io::Write;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXGEN_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let mut stdout = std::io::stdout();
    let code = mixgen_cli::main_with(std::env::args_os(), &mut stdout, &mut std::io::stderr());
    let _ = stdout.flush();
    std::process::exit(code);
}
