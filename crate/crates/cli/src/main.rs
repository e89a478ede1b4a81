use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iongate::optimizer::Optimizer;
use iongate::oracle::{thermal_fidelity, OracleConfig};
use iongate::scanlab::{self, SweepSpec, Target};
use iongate::{
    Crystal, DecayWeight, Error, Execution, GateModel, GatePair, ModeScope, PulseSchedule, SegmentGrid, TAU0,
};

#[derive(Parser)]
#[command(name = "iongate", version, about = "Segmented-pulse conditional-phase gates in linear ion crystals")]
struct Cli {
    /// Evaluate grid points one at a time instead of in parallel.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium positions, normal modes and local frequencies.
    Crystal {
        #[arg(long)]
        ions: usize,
        /// Write the crystal as JSON here instead of printing it.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate (or optimize) one segmented pulse.
    Gate(GateArgs),
    /// Detuning sweep written as CSV.
    Sweep(SweepArgs),
    /// Regenerate a figure or table data set.
    Reproduce {
        target: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the analytic fidelity with direct Fock-space integration.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    ions: usize,
    /// 1-based gate ions, e.g. 10,11.
    #[arg(long)]
    pair: Option<String>,
    /// Gate time in units of the trap period.
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    segments: usize,
    /// Segment amplitudes (comma separated); all ones if omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    amps: Option<Vec<f64>>,
    #[arg(long)]
    optimize: bool,
    /// Polish the optimized amplitudes with a simplex search.
    #[arg(long)]
    refine: bool,
    #[arg(long, default_value = "full")]
    scope: String,
    #[arg(long)]
    nbar: f64,
    /// Decay weight in the fidelity: half (default) or double.
    #[arg(long, default_value = "half")]
    weight: String,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file with SweepSpec fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ions: Option<usize>,
    #[arg(long)]
    pair: Option<String>,
    /// Gate times in units of the trap period (comma separated).
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long)]
    mu_min: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    nbar: Option<f64>,
    #[arg(long)]
    scope: Option<String>,
    #[arg(long)]
    refine: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 2)]
    ions: usize,
    #[arg(long)]
    pair: Option<String>,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    segments: usize,
    /// Segment amplitudes; the optimizer's choice if omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    amps: Option<Vec<f64>>,
    #[arg(long)]
    nbar: f64,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, exec: Execution) -> Result<(), Error> {
    match command {
        Command::Crystal { ions, json } => {
            let crystal = Crystal::new(ions)?;
            emit_json(&crystal.export(), json.as_deref())
        }
        Command::Gate(args) => gate(args),
        Command::Sweep(args) => sweep(args, exec),
        Command::Reproduce { target, out } => {
            let target: Target = target.parse()?;
            let written = scanlab::reproduce(target, &out, exec)?;
            let lines: Vec<String> = written.iter().map(|p| p.display().to_string() + "\n").collect();
            stdout(&lines.concat())
        }
        Command::Oracle(args) => oracle(args),
    }
}

fn emit_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => stdout(&(text + "\n"))?,
    }
    Ok(())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn stdout(text: &str) -> Result<(), Error> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn pair_arg(pair: Option<&str>, ions: usize) -> Result<GatePair, Error> {
    match pair {
        Some(s) => GatePair::parse(s, ions),
        None => GatePair::center(ions),
    }
}

fn weight_arg(s: &str) -> Result<DecayWeight, Error> {
    match s {
        "half" => Ok(DecayWeight::Half),
        "double" => Ok(DecayWeight::Double),
        _ => Err(Error::InvalidInput(format!("weight must be half or double, got {s:?}"))),
    }
}

fn gate(args: GateArgs) -> Result<(), Error> {
    let crystal = Crystal::new(args.ions)?;
    let pair = pair_arg(args.pair.as_deref(), args.ions)?;
    let weight = weight_arg(&args.weight)?;
    let grid = SegmentGrid::new(args.tau * TAU0, args.mu, args.segments)?;
    if args.optimize {
        let scope: ModeScope = args.scope.parse()?;
        let result = Optimizer::new(&crystal, pair, args.nbar, scope)?
            .with_refine(args.refine)
            .with_weight(weight)
            .run(grid)?;
        return emit_json(&result.export(), args.json.as_deref());
    }
    let amps = args.amps.unwrap_or_else(|| vec![1.0; args.segments]);
    if amps.len() != args.segments {
        return Err(Error::InvalidInput(format!("{} amplitudes given for {} segments", amps.len(), args.segments)));
    }
    let model = GateModel::new(crystal.modes, pair, args.nbar)?.with_weight(weight);
    let outcome = model.evaluate(&PulseSchedule::new(grid.tau, grid.mu, amps)?)?;
    emit_json(&outcome.export(), args.json.as_deref())
}

fn sweep(args: SweepArgs, exec: Execution) -> Result<(), Error> {
    let mut spec = match &args.config {
        Some(path) => serde_json::from_str::<SweepSpec>(&fs::read_to_string(path)?)?,
        None => {
            let ions = args.ions.ok_or_else(|| Error::InvalidInput("--ions is required without --config".into()))?;
            let tau = args.tau.clone().ok_or_else(|| Error::InvalidInput("--tau is required without --config".into()))?;
            SweepSpec::new(ions, tau)
        }
    };
    if let Some(ions) = args.ions {
        if args.config.is_some() && ions != spec.ions && args.pair.is_none() {
            let (i, j) = GatePair::center(ions)?.one_based();
            spec.pair = [i, j];
        }
        spec.ions = ions;
    }
    if let Some(p) = &args.pair {
        let (i, j) = GatePair::parse(p, spec.ions)?.one_based();
        spec.pair = [i, j];
    }
    if let Some(t) = args.tau {
        spec.tau = t;
    }
    if let Some(v) = args.mu_min {
        spec.mu_min = v;
    }
    if let Some(v) = args.mu_max {
        spec.mu_max = v;
    }
    if let Some(v) = args.points {
        spec.points = v;
    }
    if let Some(v) = args.segments {
        spec.segments = v;
    }
    if let Some(v) = args.nbar {
        spec.nbar = v;
    }
    if let Some(s) = &args.scope {
        spec.scope = s.parse()?;
    }
    if args.refine {
        spec.refine = true;
    }
    if let Some(p) = args.csv {
        spec.output = Some(p);
    }
    let records = scanlab::sweep(&spec, exec)?;
    let table = scanlab::records_table(&records);
    match &spec.output {
        Some(path) => table.write(path)?,
        None => stdout(&table.render())?,
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<(), Error> {
    let pair = pair_arg(args.pair.as_deref(), args.ions)?;
    let grid = SegmentGrid::new(args.tau * TAU0, args.mu, args.segments)?;
    let amps = match args.amps {
        Some(a) => a,
        None => {
            let crystal = Crystal::new(args.ions)?;
            Optimizer::new(&crystal, pair, args.nbar, ModeScope::Full)?.run(grid)?.amps
        }
    };
    let schedule = PulseSchedule::new(grid.tau, grid.mu, amps)?;
    let mut config = OracleConfig::new(args.ions, pair, schedule, args.nbar)?;
    if let Some(n) = args.n_max {
        config.n_max = n;
    }
    emit_json(&thermal_fidelity(&config)?, args.json.as_deref())
}
