use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use interdistrict_cli::commands::{execute, Cli};
use interdistrict_cli::Exit;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(Exit::Input.code());
        }
    }
    let out = execute(&cli);
    for (path, body) in &out.files {
        if let Err(e) = std::fs::write(path, body) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(Exit::Input.code());
        }
    }
    let text = out.report;
    if out.exit == Exit::Input || out.exit == Exit::Mechanism && text.starts_with("error:") {
        eprint!("{text}");
    } else {
        let _ = std::io::stdout().write_all(text.as_bytes());
    }
    ExitCode::from(out.exit.code())
}
