//! Command-line front end: dataset generation, training, evaluation,
//! anomaly scoring, FLOP reporting, Pareto exploration and front export.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure. Errors go to stderr with a machine-parsable `error_code=` line.

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(sparsest::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<sparsest::Error> for CliError {
    fn from(e: sparsest::Error) -> Self {
        CliError::Lib(e)
    }
}

fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Usage(_) => 1,
        CliError::Lib(lib) => match lib {
            sparsest::Error::Numeric(_) => 3,
            _ => 2,
        },
    }
}

const USAGE: &str = "\
sparsest <command> [options]

Commands:
  generate      write dataset files for the configured data kind
  train         train a model on the generated dataset
  eval          recursive-rollout metrics and cost report for a checkpoint
  anomaly       sliding-window anomaly scores, ROC curve and AUC
  flops         per-unit FLOP/acceleration report for a checkpoint
  pareto        explore the preference-weight trade-off (trains many models)
  front-export  dominance-filter pareto records into a front CSV

Options (all commands):
  --config FILE     load `key = value` lines (# comments) before overrides
  --set KEY=VALUE   override one config key (repeatable)
  --seed N          shorthand for --set seed=N
  --jobs N          shorthand for --set jobs=N
  --out-dir DIR     shorthand for --set out_dir=DIR
  --help            print this message

Artifacts are read from and written to the configured out_dir.";

fn parse_args(args: &[String]) -> Result<(String, RunConfig), CliError> {
    if args.is_empty() {
        return Err(CliError::Usage(format!("missing command\n{USAGE}")));
    }
    if args[0] == "--help" || args[0] == "-h" || args[0] == "help" {
        println!("{USAGE}");
        std::process::exit(0);
    }
    let command = args[0].clone();
    let mut cfg = RunConfig::default();
    // First pass: the config file, so flags override it.
    let mut i = 1;
    let mut overrides: Vec<(String, String)> = Vec::new();
    while i < args.len() {
        let take_value = |i: &mut usize| -> Result<String, CliError> {
            *i += 1;
            args.get(*i)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("{} needs a value", args[*i - 1])))
        };
        match args[i].as_str() {
            "--config" => {
                let path = take_value(&mut i)?;
                cfg.load_file(std::path::Path::new(&path))?;
            }
            "--set" => {
                let kv = take_value(&mut i)?;
                let Some((k, v)) = kv.split_once('=') else {
                    return Err(CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")));
                };
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
            "--seed" => {
                let v = take_value(&mut i)?;
                overrides.push(("seed".to_string(), v));
            }
            "--jobs" => {
                let v = take_value(&mut i)?;
                overrides.push(("jobs".to_string(), v));
            }
            "--out-dir" => {
                let v = take_value(&mut i)?;
                overrides.push(("out_dir".to_string(), v));
            }
            "--help" | "-h" => {
                println!("{USAGE}");
                std::process::exit(0);
            }
            other => {
                return Err(CliError::Usage(format!("unknown argument {other:?}\n{USAGE}")));
            }
        }
        i += 1;
    }
    for (k, v) in overrides {
        cfg.apply(&k, &v)?;
    }
    Ok((command, cfg))
}

fn run(args: &[String]) -> Result<(), CliError> {
    let (command, cfg) = parse_args(args)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(sparsest::Error::Io)?;
    match command.as_str() {
        "generate" => commands::generate(&cfg),
        "train" => commands::train(&cfg),
        "eval" => commands::eval(&cfg),
        "anomaly" => commands::anomaly(&cfg),
        "flops" => commands::flops(&cfg),
        "pareto" => commands::pareto(&cfg),
        "front-export" => commands::front_export(&cfg),
        other => Err(CliError::Usage(format!("unknown command {other:?}\n{USAGE}"))),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = run(&args) {
        let code = exit_code(&e);
        eprintln!("error: {e}");
        eprintln!("error_code={code}");
        std::process::exit(code);
    }
}
