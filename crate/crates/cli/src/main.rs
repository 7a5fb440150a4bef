// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

use clap::Parser;

use sfamss_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let code = match run(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("sfamss: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
