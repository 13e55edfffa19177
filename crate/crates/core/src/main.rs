use std::process::ExitCode;

use clap::Parser;

use witgen::cli::{Cli, Command, Resolved};
use witgen::commands::{self, CliError, JobStatus};
use witgen::harness::ProcessExecutor;
use witgen::llm::{ChatProvider, Mode, OpenAiProvider};

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let resolved = Resolved::new(cli.global)?;
    let dry_run = resolved.global.dry_run;
    match cli.command {
        Command::Run => {
            let cfg = resolved.run_config()?;
            // nothing is sent on a dry run, so no key is needed there
            let provider: Option<Box<dyn ChatProvider>> = match cfg.mode {
                Mode::Replay => None,
                _ if dry_run => None,
                Mode::Live | Mode::Record => Some(Box::new(OpenAiProvider::from_env()?)),
            };
            let summary = commands::cmd_run(&cfg, &ProcessExecutor::default(), provider)?;
            for job in &summary.jobs {
                match &job.error {
                    Some(e) => println!("{}\t{}\t{e}", job.key, job.status.as_str()),
                    None => println!("{}\t{}", job.key, job.status.as_str()),
                }
            }
            eprintln!(
                "{} completed, {} skipped, {} failed, {} planned",
                summary.count(JobStatus::Completed),
                summary.count(JobStatus::Skipped),
                summary.count(JobStatus::Failed),
                summary.count(JobStatus::Planned)
            );
            Ok(summary.exit_code())
        }
        Command::Slice { entry_id, dest } => {
            let dest = dest.unwrap_or_else(|| ".".into());
            for p in commands::cmd_slice(&resolved.manifest()?, &entry_id, &dest, dry_run)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Report(args) => {
            let cfg = resolved.report_config(&args)?;
            if let Some(s) = commands::cmd_report(&cfg)? {
                println!(
                    "{} records: syntactic {}, semantic {}{}",
                    s.records,
                    s.overall.syntactic_ok,
                    s.overall.semantic_ok,
                    s.overall.usable.map(|u| format!(", usable {u}")).unwrap_or_default()
                );
                println!("bundle written to {}", cfg.dest.display());
            }
            Ok(0)
        }
        Command::Validate => {
            let reports = commands::cmd_validate(&resolved.manifest()?)?;
            println!("{} entries valid", reports.len());
            Ok(0)
        }
        Command::Prompts { dest } => {
            for p in commands::cmd_prompts(&dest, dry_run)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.verbose);
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
