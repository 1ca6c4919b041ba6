fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = ebf::engine::with_big_stack(|| ebf::main_with(std::env::args_os()));
    std::process::exit(code);
}
