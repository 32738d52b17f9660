fn main() {
    std::process::exit(framescope::dispatch(std::env::args_os()));
}
