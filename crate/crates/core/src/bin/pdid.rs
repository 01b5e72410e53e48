fn main() {
    let code = pdid::admin::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
