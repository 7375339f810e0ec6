fn main() -> std::process::ExitCode {
    lattice_sqr::cli::run(std::env::args_os())
}
