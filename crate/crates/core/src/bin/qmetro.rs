fn main() {
    std::process::exit(qmetro::pipeline::cli_entry(std::env::args_os()));
}
