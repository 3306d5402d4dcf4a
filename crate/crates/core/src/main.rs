use std::io;

fn main() {
    let hw_env = std::env::var_os(layerpar::cli::HW_ENV).map(Into::into);
    let code = layerpar::cli::run(
        std::env::args_os(),
        hw_env,
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
