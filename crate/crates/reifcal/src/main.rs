use clap::{Parser, Subcommand};
use reifcal::diagnostic::Diagnostic;
use reifcal::{run, Command, Flags};
use std::io::Write;
use std::process::ExitCode;

/// Certify point clouds as almost-calibrated Reifenberg sets.
///
/// Exit status: 0 when the verdict is true, 2 when it is false, 1 on error
/// (with a JSON diagnostic on stderr).
#[derive(Parser)]
#[command(name = "reifcal", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Multiscale flatness and positivity certificate.
    Analyze(Flags),
    /// Build the approximating surface family and check its properties.
    Build(Flags),
    /// Hypotheses plus measured conclusions in one verdict document.
    Certify(Flags),
    /// Write a synthetic cloud and its metadata.
    Generate(Flags),
    /// Estimate the comass of a form.
    Comass(Flags),
}

fn fail(d: Diagnostic) -> ExitCode {
    let _ = writeln!(std::io::stderr(), "{}", d.to_json());
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(Diagnostic::new("usage", e.to_string().trim_end().to_string(), serde_json::Value::Null));
        }
    };
    let (command, flags) = match cli.command {
        Cmd::Analyze(f) => (Command::Analyze, f),
        Cmd::Build(f) => (Command::Build, f),
        Cmd::Certify(f) => (Command::Certify, f),
        Cmd::Generate(f) => (Command::Generate, f),
        Cmd::Comass(f) => (Command::Comass, f),
    };
    let result = flags.resolve(command).and_then(|cfg| {
        if let Some(t) = cfg.threads {
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
        }
        run(&cfg)
    });
    match result {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.document.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => fail(Diagnostic::from_error(&e)),
    }
}
