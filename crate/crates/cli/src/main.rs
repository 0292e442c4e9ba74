fn main() {
    std::process::exit(bubblebench_cli::run());
}
