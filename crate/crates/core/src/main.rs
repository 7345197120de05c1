fn main() {
    std::process::exit(ddlaws::cli::run(std::env::args_os()));
}
