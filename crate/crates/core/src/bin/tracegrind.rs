fn main() {
    std::process::exit(tracegrind::commands::main_with_args(std::env::args_os()));
}
