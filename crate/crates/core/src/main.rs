use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcsim::config::{parse_config, Model, Params};
use mcsim::run::run_and_write;
use mcsim::verify::{run_suites, Fault, Suite};

#[derive(Parser)]
#[command(name = "mcsim", version, about = "Discrete-event simulation of multicomponent systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// TOML file with parameters; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

#[derive(Subcommand)]
enum Command {
    /// Hard balls in a one-dimensional gutter
    Billiards(ModelArgs),
    /// Ballistic deposition of disks on a periodic substrate
    Deposition(ModelArgs),
    /// Kinetic Ising model on a periodic square lattice
    Ising(ModelArgs),
    /// Customers switching between two telephone providers
    Telecom(ModelArgs),
    /// Circuit-switched network with alternate routing
    Circuitnet(ModelArgs),
    /// Run cross-oracle verification suites
    Verify {
        /// dispenser, billiards, deposition, parallel, ising, telecom, circuitnet or all
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report here as well as to stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn simulate(model: Model, args: &ModelArgs) -> mcsim::Result<()> {
    let cfg = parse_config(model, args.config.as_deref(), &args.params)?;
    let output = run_and_write(&cfg)?;
    let dir = cfg.out_dir();
    for (name, _) in &output.files {
        println!("wrote {}", dir.join(name).display());
    }
    for (k, v) in &output.metrics {
        println!("{k} = {v}");
    }
    Ok(())
}

fn verify(suite: &str, seed: u64, out: Option<&PathBuf>, fault: Option<&str>) -> mcsim::Result<bool> {
    let suites = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse::<Suite>()?]
    };
    let fault = fault.map(str::parse::<Fault>).transpose()?;
    let report = run_suites(&suites, seed, fault);
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(path) = out {
        std::fs::write(path, &csv)?;
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Billiards(a) => simulate(Model::Billiards, a).map(|_| true),
        Command::Deposition(a) => simulate(Model::Deposition, a).map(|_| true),
        Command::Ising(a) => simulate(Model::Ising, a).map(|_| true),
        Command::Telecom(a) => simulate(Model::Telecom, a).map(|_| true),
        Command::Circuitnet(a) => simulate(Model::Circuitnet, a).map(|_| true),
        Command::Verify {
            suite,
            seed,
            out,
            inject_fault,
        } => verify(suite, *seed, out.as_ref(), inject_fault.as_deref()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
