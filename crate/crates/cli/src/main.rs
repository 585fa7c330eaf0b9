use std::path::PathBuf;
use std::process::ExitCode;

use adaptive_consensus_cli::commands::{self, Demo, Overrides};
use adaptive_consensus_cli::scenario::Scenario;
use adaptive_consensus_cli::CliError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "consensus", version, about = "Adaptive consensus synthesis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct RunFlags {
    /// Seed for initial states and couplings.
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon.
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
    /// Consensus error threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

impl RunFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            dt: self.dt,
            t_final: self.t_final,
            out: self.out.clone(),
            threshold: self.threshold,
            svg: self.svg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    Manipulator,
    Leader,
    Static,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize and verify feedback gains.
    Synth {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a closed-loop simulation.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Print the Laplacian spectrum summary of the scenario's topology.
    Spectrum { scenario: PathBuf },
    /// Run a built-in scenario.
    Demo {
        #[arg(value_enum, default_value = "manipulator")]
        name: DemoName,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn run_simulation(mut scenario: Scenario, flags: &RunFlags) -> Result<(), CliError> {
    let overrides = flags.overrides();
    overrides.apply(&mut scenario);
    let summary = commands::simulate(&scenario, overrides.svg)?;
    println!(
        "{}: achieved = {}, final error = {:e}, runtime = {:.2} s, output in {}",
        summary.variant,
        summary.achieved,
        summary.final_error.unwrap_or(f64::NAN),
        summary.runtime_s,
        scenario.out_dir().display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { scenario, out } => {
            let mut scenario = Scenario::load(&scenario)?;
            if let Some(out) = out {
                scenario.out = Some(out);
            }
            let dir = commands::synth(&scenario)?;
            println!("gain verified; wrote {}", dir.join("gain.json").display());
        }
        Command::Simulate { scenario, flags } => run_simulation(Scenario::load(&scenario)?, &flags)?,
        Command::Spectrum { scenario } => print!("{}", commands::spectrum(&Scenario::load(&scenario)?)?),
        Command::Demo { name, flags } => {
            let demo = match name {
                DemoName::Manipulator => Demo::Manipulator,
                DemoName::Leader => Demo::Leader,
                DemoName::Static => Demo::Static,
            };
            run_simulation(demo.scenario(), &flags)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
