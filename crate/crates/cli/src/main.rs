//! `pcg`: heart sound classification from the command line.

use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use pcg_core::pipeline::{self, PipelineError, RunConfig, KEYS};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("synth", "write a seeded synthetic dataset to --out"),
    ("segment", "segment the dataset into beats and dump them"),
    ("features", "extract MFCC or TVAR maps for every beat"),
    ("train", "train the configured model on the TRAIN split"),
    ("evaluate", "score a trained model on the TEST split"),
    ("predict", "per-beat scores for one recording"),
];

fn flag_name(key: &str) -> &'static str {
    Box::leak(key.replace('_', "-").into_boxed_str())
}

fn cli() -> Command {
    let mut cmd = Command::new("pcg")
        .about("Short-segment heart sound classification")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("config").long("config").value_name("PATH").global(true).help("config file (key = value with [section] headers)"))
        .arg(Arg::new("verbose").short('v').long("verbose").action(ArgAction::Count).global(true).help("more logging"))
        .arg(Arg::new("quiet").short('q').long("quiet").action(ArgAction::SetTrue).global(true).help("warnings and errors only"))
        .arg(Arg::new("print-config").long("print-config").action(ArgAction::SetTrue).global(true).help("print the effective config and exit"));
    for (section, key, default, help) in KEYS {
        let mut arg = Arg::new(*key)
            .long(flag_name(key))
            .value_name("VALUE")
            .global(true)
            .help_heading(*section)
            .help(format!("{help} [default: {}]", if default.is_empty() { "none" } else { default }));
        if key.contains('_') {
            arg = arg.alias(*key);
        }
        cmd = cmd.arg(arg);
    }
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd
}

fn build_config(m: &ArgMatches) -> Result<RunConfig, PipelineError> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for (_, key, _, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn run(name: &str, cfg: &RunConfig) -> Result<(), PipelineError> {
    match name {
        "synth" => {
            let m = pipeline::cmd_synth(cfg)?;
            println!("wrote {} recordings to {}", m.entries().len(), cfg.out.display());
        }
        "segment" => {
            for (split, s) in pipeline::cmd_segment(cfg)? {
                println!("{split}: {} beats kept, {} discarded", s.kept(), s.discarded);
            }
        }
        "features" => {
            for (split, n) in pipeline::cmd_features(cfg)? {
                println!("{split}: {n} feature maps");
            }
        }
        "train" => {
            let s = pipeline::cmd_train(cfg)?;
            println!("trained {} on {} beats ({} validation); model written to {}", s.kind, s.n_train, s.n_val, s.model_path.display());
        }
        "evaluate" => {
            let o = pipeline::cmd_evaluate(cfg)?;
            print!("{}", o.report.to_text(o.kind.display_name(), &o.features));
            for w in &o.warnings {
                println!("warning: {w}");
            }
        }
        "predict" => {
            println!("beat_index,p_normal,p_abnormal,label");
            for r in pipeline::cmd_predict(cfg)? {
                println!("{},{:.6},{:.6},{}", r.beat_index, r.p_normal, r.p_abnormal, r.label);
            }
        }
        _ => unreachable!("clap restricts subcommands"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let level = match (matches.get_flag("quiet"), matches.get_count("verbose")) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = build_config(sub).and_then(|cfg| {
        if sub.get_flag("print-config") {
            print!("{}", cfg.to_text());
            return Ok(());
        }
        run(name, &cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
