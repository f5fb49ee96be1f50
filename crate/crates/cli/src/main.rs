use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icc_cli::{run, CliError, ConfigError, ExperimentConfig, RawConfig, Verb};

/// Ion Coulomb crystal experiments from a config file.
#[derive(Debug, Parser)]
#[command(name = "icc", version, about)]
struct Cli {
    #[command(subcommand)]
    verb: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Relax to an equilibrium crystal.
    Relax(RunArgs),
    /// Relax, then compute the normal-mode spectrum.
    Modes(RunArgs),
    /// Integrate laser-cooled dynamics from the relaxed crystal.
    Evolve(RunArgs),
    /// Ramp a string through the zigzag transition over seeds and quench times.
    Quench(RunArgs),
    /// Relax over a grid of one trap parameter and label the structures.
    Scan(RunArgs),
    /// Render a synthetic camera image of the relaxed crystal.
    Image(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override one config value; may be repeated.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Print the canonical config and exit without running.
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (Verb, RunArgs) {
        match self {
            Command::Relax(a) => (Verb::Relax, a),
            Command::Modes(a) => (Verb::Modes, a),
            Command::Evolve(a) => (Verb::Evolve, a),
            Command::Quench(a) => (Verb::Quench, a),
            Command::Scan(a) => (Verb::Scan, a),
            Command::Image(a) => (Verb::Image, a),
        }
    }
}

fn load(verb: Verb, args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut raw = RawConfig::parse(&text)?;
    for s in &args.set {
        raw.set(s)?;
    }
    match raw.get("protocol", "verb") {
        Some(v) if v != verb.as_str() => {
            return Err(ConfigError::at(0, "protocol.verb", format!("config asks for `{v}` but the command is `{verb}`")).into());
        }
        Some(_) => {}
        None => raw.set(&format!("protocol.verb={verb}"))?,
    }
    Ok(ExperimentConfig::from_raw(&raw)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (verb, args) = cli.verb.split();
    let outcome = load(verb, &args).and_then(|config| {
        if args.print_config {
            println!("{}", config.serialize());
            return Ok(());
        }
        let manifest = run(&config)?;
        let dir = icc_cli::run::output_dir(&config);
        println!("{} finished: {} files in {}", manifest.verb, manifest.outputs.len() + 1, dir.display());
        Ok(())
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
