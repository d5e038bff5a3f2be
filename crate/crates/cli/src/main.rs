use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, Command};
use serde_json::json;

fn cli() -> Command {
    let mut cmd = Command::new("sgdlab")
        .about("Numerical laboratory for SGD dynamics and its Fokker-Planck description")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for name in sgdlab::config::EXPERIMENT_NAMES {
        cmd = cmd.subcommand(
            Command::new(name)
                .about(format!("run the `{name}` experiment"))
                .arg(
                    Arg::new("config")
                        .long("config")
                        .required(true)
                        .value_name("PATH")
                        .help("JSON experiment configuration"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("N")
                        .value_parser(clap::value_parser!(u64))
                        .help("override the config root seed"),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("DIR")
                        .help("override the config output directory"),
                )
                .arg(
                    Arg::new("quiet")
                        .long("quiet")
                        .action(ArgAction::SetTrue)
                        .help("suppress the completion line"),
                ),
        );
    }
    cmd
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let config_path = PathBuf::from(sub.get_one::<String>("config").unwrap());
    let seed = sub.get_one::<u64>("seed").copied();
    let out = sub.get_one::<String>("out").cloned();
    let base_dir = config_path
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));

    let cfg = match sgdlab::load_config(name, &config_path, seed, out) {
        Ok(c) => c,
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": {"kind": "config", "message": format!("{e:#}")}})
            );
            return ExitCode::from(2);
        }
    };
    match sgdlab::run_experiment(&cfg, &base_dir) {
        Ok(()) => {
            if !sub.get_flag("quiet") {
                println!("{name}: wrote {}", cfg.out_dir());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": {"kind": "runtime", "message": format!("{e:#}")}})
            );
            ExitCode::FAILURE
        }
    }
}
