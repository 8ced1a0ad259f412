fn main() {
    std::process::exit(coupledpf_harness::run_cli(std::env::args_os()));
}
