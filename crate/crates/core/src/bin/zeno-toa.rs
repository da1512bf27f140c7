fn main() {
    std::process::exit(zeno_toa::io::run_command(std::env::args_os()));
}
