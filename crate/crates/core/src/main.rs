fn main() {
    std::process::exit(bohmvar::cli::main_with_args(std::env::args_os()));
}
