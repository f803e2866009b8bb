mod commands;
mod csv;
mod model;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "condext",
    version,
    about = "Partially Lagrangian dynamics of conditional-extremum problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model selection shared by the model-based subcommands.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Built-in model name or path to a TOML model file.
    pub model: String,
    /// Override a model parameter, `NAME=VALUE`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Rank threshold of the closure (relative singular value).
    #[arg(long, value_parser = model::number)]
    pub rank_tol: Option<f64>,
    /// Largest bracket residual accepted as closed.
    #[arg(long, value_parser = model::number)]
    pub closure_tol: Option<f64>,
    /// Smallest accepted `|det ∂²L/∂u∂u|`.
    #[arg(long, value_parser = model::number)]
    pub hessian_tol: Option<f64>,
    /// Integrator relative tolerance.
    #[arg(long, value_parser = model::number)]
    pub rtol: Option<f64>,
    /// Integrator absolute tolerance.
    #[arg(long, value_parser = model::number)]
    pub atol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Close the distribution and report the added fields.
    Closure(ModelArgs),
    /// Build the bracket, Hamiltonian and drift and evaluate them at a point.
    Hamiltonize {
        #[command(flatten)]
        model: ModelArgs,
        /// Phase point `x1,..,xn,p1,..`; defaults to the model's initial state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Option<Vec<String>>,
    },
    /// Integrate and write the trajectory as CSV.
    Integrate(commands::IntegrateArgs),
    /// Run the identity checks on phase samples and print JSON verdicts.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of phase samples.
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Tolerance of the Jacobi and drift checks.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Classify a Coulomb central-field orbit.
    Classify(commands::ClassifyArgs),
    /// Degrees of freedom of an involutive table.
    Dof {
        /// Fixture name or path to a TOML table.
        table: String,
        #[arg(long)]
        json: bool,
    },
    /// Compare multiplier runs with the partially Lagrangian central field.
    CompareMultiplier(commands::CompareArgs),
    /// List the built-in models and fixtures.
    List,
}

/// Failure already reported on stderr.
#[derive(Debug)]
pub struct Reported;

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("reported")
    }
}

impl std::error::Error for Reported {}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Closure(m) => commands::closure(&m),
        Command::Hamiltonize { model, at } => commands::hamiltonize(&model, at.as_deref()),
        Command::Integrate(a) => commands::integrate(&a),
        Command::Check {
            model,
            samples,
            tol,
        } => commands::check(&model, samples, tol),
        Command::Classify(a) => commands::classify(&a),
        Command::Dof { table, json } => commands::dof(&table, json),
        Command::CompareMultiplier(a) => commands::compare(&a),
        Command::List => {
            println!("models: {}", condext::toy_models::NAMES.join(", "));
            println!("dof fixtures: {}", condext::dofcount::FIXTURES.join(", "));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // reader went away, e.g. `| head`
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            if e.downcast_ref::<Reported>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}
