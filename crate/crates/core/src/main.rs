fn main() {
    // Die quietly on a closed pipe (e.g. `attack-forecast ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(attack_forecast::cli::run(std::env::args_os()));
}
