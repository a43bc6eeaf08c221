use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relaxeq::driver::config::read_config_file;
use relaxeq::driver::convergence::{convergence_study, halving_sequence};
use relaxeq::driver::presets::describe;
use relaxeq::driver::{run, Preset, RunConfig};
use relaxeq::Result;

#[derive(Parser)]
#[command(
    name = "relaxeq",
    version,
    about = "Relaxed energy-quadratization solvers for phase-field gradient flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write series.csv, snapshots and summary.txt.
    Run(RunArgs),
    /// Temporal self-convergence study against a fine-step reference.
    Converge {
        #[command(flatten)]
        args: RunArgs,
        /// Largest time step of the study.
        #[arg(long, default_value_t = 1e-2)]
        dt0: f64,
        /// Number of halvings of dt0.
        #[arg(long, default_value_t = 4)]
        halvings: usize,
    },
    /// Print a preset's initial-condition formula and default configuration.
    PrintPreset {
        /// seven_disks, mbe_benchmark, pfc_blocks, smooth or custom
        name: String,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat key = value file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// ac, ch, mbe or pfc
    #[arg(long)]
    model: Option<String>,
    /// cn or bdf2
    #[arg(long)]
    scheme: Option<String>,
    /// Apply the relaxation step.
    #[arg(long)]
    relaxed: bool,
    #[arg(long)]
    eta: Option<f64>,
    /// Replace the optimal xi0 by a constant (diagnostic).
    #[arg(long)]
    force_xi: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    lx: Option<f64>,
    #[arg(long)]
    ly: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    mobility: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    b0: Option<f64>,
    /// PFC constant, or "auto".
    #[arg(long)]
    c0: Option<String>,
    /// Skew drift velocity "cx,cy".
    #[arg(long)]
    skew: Option<String>,
    /// Initial field (.pfield) for the custom preset.
    #[arg(long)]
    init_file: Option<PathBuf>,
    #[arg(long)]
    log_every: Option<usize>,
    /// Comma-separated snapshot times.
    #[arg(long)]
    snapshot_times: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// 2/3-rule dealiasing of the coupling products.
    #[arg(long)]
    dealias: bool,
    /// Abort if the scheme's energy increases.
    #[arg(long)]
    strict: bool,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let mut pairs: Vec<(String, String)> = match &self.config {
            Some(path) => read_config_file(path)?,
            None => Vec::new(),
        };
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        let s = |v: &Option<f64>| v.map(|x| x.to_string());
        put("preset", self.preset.clone());
        put("model", self.model.clone());
        put("scheme", self.scheme.clone());
        put("relaxed", self.relaxed.then(|| "true".into()));
        put("eta", s(&self.eta));
        put("force_xi", s(&self.force_xi));
        put("dt", s(&self.dt));
        put("t_end", s(&self.t_end));
        put("nx", self.nx.map(|n| n.to_string()));
        put("ny", self.ny.map(|n| n.to_string()));
        put("lx", s(&self.lx));
        put("ly", s(&self.ly));
        put("eps", s(&self.eps));
        put("mobility", s(&self.mobility));
        put("gamma0", s(&self.gamma0));
        put("a0", s(&self.a0));
        put("b0", s(&self.b0));
        put("c0", self.c0.clone());
        put("skew", self.skew.clone());
        put("init_file", self.init_file.as_ref().map(|p| p.display().to_string()));
        put("log_every", self.log_every.map(|n| n.to_string()));
        put("snapshot_times", self.snapshot_times.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("tol", s(&self.tol));
        put("max_iter", self.max_iter.map(|n| n.to_string()));
        put("dealias", self.dealias.then(|| "true".into()));
        put("strict", self.strict.then(|| "true".into()));
        RunConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

/// Keeps grid-sized temporaries on the heap instead of mapping and
/// unmapping pages on every allocation.
#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn tune_allocator() {
    const LARGE: libc::c_int = 256 << 20;
    // SAFETY: called once before any other thread exists.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, LARGE);
        libc::mallopt(libc::M_TRIM_THRESHOLD, LARGE);
    }
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn tune_allocator() {}

fn main() -> ExitCode {
    tune_allocator();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut config = args.to_config()?;
            if config.output_dir.is_none() {
                config.output_dir = Some(PathBuf::from("out"));
            }
            let summary = run(&config)?;
            print!("{}", summary.to_text(&config));
        }
        Command::Converge { args, dt0, halvings } => {
            let config = args.to_config()?;
            let table = convergence_study(&config, &halving_sequence(dt0, halvings))?;
            print!("{table}");
            if let Some(dir) = &config.output_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("convergence.csv"), table.to_string())?;
            }
        }
        Command::PrintPreset { name } => {
            let preset: Preset = name.parse()?;
            print!("{}", describe(preset));
        }
    }
    Ok(())
}
