use std::process::ExitCode;

use clap::Parser;
use latent_impact_cli::{parse_config, run_command, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = parse_config(&cli)
        .map_err(|e| ("config", e))
        .and_then(|cfg| {
            run_command(&cfg)
                .map(|out| (cfg, out))
                .map_err(|e| ("run", e))
        });
    match result {
        Ok((cfg, out)) => {
            for f in out.files {
                println!("{}", cfg.output_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err((kind, e)) => {
            let msg = serde_json::json!({ "error": { "kind": kind, "message": format!("{e:#}") } });
            eprintln!("{msg}");
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}
