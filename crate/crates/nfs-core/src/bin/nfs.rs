fn main() { std::process::exit(nfs_core::cli::main_with_args(std::env::args_os())); }
