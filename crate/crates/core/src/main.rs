fn main() -> std::process::ExitCode {
    aetc::cli::main()
}
