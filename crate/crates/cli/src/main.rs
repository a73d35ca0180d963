use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use factgpt_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.global.json;
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            if json {
                let _ = writeln!(stdout, "{}", outcome.summary);
            } else {
                if let Some(text) = &outcome.stdout {
                    let _ = write!(stdout, "{text}");
                    if !text.ends_with('\n') {
                        let _ = writeln!(stdout);
                    }
                }
                let dry = outcome.summary["dry_run"].as_bool().unwrap_or(false);
                for output in outcome.summary["outputs"].as_array().into_iter().flatten() {
                    eprintln!(
                        "{} {} ({} bytes)",
                        if dry { "would write" } else { "wrote" },
                        output["path"].as_str().unwrap_or_default(),
                        output["bytes"]
                    );
                }
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            if json {
                eprintln!("{}", err.to_json());
            } else {
                eprintln!("error: {err}");
            }
            ExitCode::from(err.exit_code())
        }
    }
}
