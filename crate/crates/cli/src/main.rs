fn main() -> std::process::ExitCode {
    saegraph_cli::main_with_args(std::env::args_os())
}
