mod analyze;
mod config;
mod plot;
mod simulate;
mod table;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use entropic::analysis::scale::{scale_row, SCALE_TABLE};
use entropic::duality::{dual_coupling, self_dual_point, DualityRelation, RelationKind};
use entropic::lattice::{
    build_gauge_replica, build_protocol_graph, build_replica_lattice, Boundary, GeometryVariant, ReplicaLatticeSpec,
};
use entropic::model::{action, clock_fourier_coeffs, couplings_at, Seams, SpinConfig};
use entropic::sampler::{sw_sweep, RngStream};

use config::RunConfig;

/// Errors that map to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser)]
#[command(name = "entropic", version, about = "Entropic c-function of the 3D Ising model via non-equilibrium Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trajectory ensembles for every (beta, l) point of a config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Print the plan and exit.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a named identity suite and print a JSON report.
    Verify {
        suite: String,
        /// Also write the report here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Thermodynamic and continuum extrapolation, normalization and fits.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// c-function CSV files written by `simulate`.
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Require the l m_g axis (needs analysis.mg_table).
        #[arg(long)]
        mg_axis: bool,
    },
    /// Duality maps and prefactors.
    Dualize {
        #[command(subcommand)]
        what: Dualize,
    },
    /// Geometry debugging.
    Lattice {
        #[command(subcommand)]
        what: LatticeCmd,
    },
    /// Lattice spacing table: beta_c and a T_c for a given N_tau.
    Scale {
        n_tau: Option<usize>,
        #[arg(long, conflicts_with = "n_tau")]
        all: bool,
    },
    /// Energy and magnetization trace of Swendsen-Wang sweeps, as CSV.
    Trace {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1000)]
        sweeps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum Dualize {
    /// beta, beta*, ln prefactor and entropy shift for each coupling.
    Beta {
        #[arg(required = true, num_args = 1..)]
        beta: Vec<f64>,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Fourier coefficients C_k of the N-state clock weight.
    Coeffs {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        beta: f64,
    },
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Bond list as CSV: site_a,site_b,class,sign.
    Dump {
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Protocol graph (both cut placements) instead of the replica lattice.
        #[arg(long)]
        protocol: bool,
    },
}

#[derive(Args, Clone)]
struct GeometryArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Comma separated, N_tau first.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 4])]
    extents: Vec<usize>,
    /// Replicas.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Slab length.
    #[arg(long, default_value_t = 0)]
    l: usize,
    /// Comma separated: periodic, antiperiodic or free.
    #[arg(long, value_delimiter = ',')]
    boundaries: Option<Vec<String>>,
    #[arg(long, default_value = "standard-cut")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    offset: usize,
}

fn parse_kebab<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| ConfigError(format!("unknown {what} {s:?}")).into())
}

impl GeometryArgs {
    fn spec(&self) -> Result<ReplicaLatticeSpec> {
        let mut s = ReplicaLatticeSpec::new(self.dim, self.n, &self.extents, self.l)
            .with_offset(self.offset)
            .with_variant(parse_kebab::<GeometryVariant>(&self.variant, "variant")?);
        if let Some(b) = &self.boundaries {
            let b: Vec<Boundary> = b.iter().map(|x| parse_kebab(x, "boundary")).collect::<Result<_>>()?;
            s = s.with_boundaries(&b);
        }
        s.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(s)
    }

    /// Relation for Z_n at this geometry.
    fn relation(&self) -> Result<DualityRelation> {
        let spec = self.spec()?;
        let v = spec.volume();
        let b = spec.boundary_sites();
        let n_g = || -> Result<usize> { Ok(build_gauge_replica(&spec.clone().with_replicas(1).with_slab_length(0))?.n_g()) };
        let r = match (spec.dimension, spec.n_replicas, spec.variant) {
            (2, 1, _) => DualityRelation::new(RelationKind::Ising2d, 1, v, 0, 0)?,
            (2, n, _) => DualityRelation::new(RelationKind::Replica2d, n, v, 0, b)?,
            (3, 1, _) => DualityRelation::new(RelationKind::Gauge3d, 1, v, n_g()?, 0)?,
            (3, n, GeometryVariant::CentralPlaquette) => {
                DualityRelation::new(RelationKind::CentralPlaquette, n, v, n_g()?, b)?
            }
            (3, n, _) => DualityRelation::new(RelationKind::Replica3d, n, v, n_g()?, b)?,
            _ => unreachable!("validated"),
        };
        Ok(r)
    }
}

fn init_pool(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    RunConfig::load(path).map_err(|e| ConfigError(e).into())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Simulate { config, dry_run, output } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = output {
                cfg.io.output_dir = Some(o);
            }
            init_pool(cfg.io.workers);
            if dry_run || cfg.protocol.trajectories == 0 {
                let plan = simulate::plan(&cfg).map_err(|e| ConfigError(e.to_string()))?;
                writeln!(out, "{}", serde_json::to_string_pretty(&plan)?)?;
                return Ok(ExitCode::SUCCESS);
            }
            let dir = cfg.output_dir();
            let results = simulate::simulate(&cfg, &dir)?;
            let flagged = results.iter().filter(|r| r.consistency.as_ref().is_some_and(|c| c.flagged)).count();
            if flagged > 0 {
                eprintln!("warning: {flagged} point(s) fail the forward/reverse consistency check; the schedule may be too fast");
            }
            writeln!(out, "{}", dir.display())?;
        }
        Command::Verify { suite, output } => {
            if !entropic::verify::SUITES.contains(&suite.as_str()) {
                return Err(ConfigError(format!("unknown suite {suite:?}; known: {}", entropic::verify::SUITES.join(", "))).into());
            }
            let report = entropic::verify::run_suite(&suite)?;
            let text = serde_json::to_string_pretty(&report)?;
            writeln!(out, "{text}")?;
            if let Some(p) = output {
                std::fs::write(&p, &text).with_context(|| format!("writing {}", p.display()))?;
            }
            if !report.passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Analyze { config, inputs, output, mg_axis } => {
            let cfg = load_config(&config)?;
            init_pool(cfg.io.workers);
            let mut points = Vec::new();
            for p in &inputs {
                points.extend(table::read_points(p).map_err(|e| ConfigError(format!("{e:#}")))?);
            }
            let dir = output.unwrap_or_else(|| cfg.output_dir().join("analysis"));
            let report = analyze::analyze(&cfg, &points, &dir, mg_axis)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            writeln!(out, "{}", dir.display())?;
        }
        Command::Dualize { what: Dualize::Beta { beta, geometry } } => {
            let rel = geometry.relation()?;
            writeln!(out, "beta,beta_star,ln_prefactor,entropy_shift")?;
            for b in beta {
                let bs = dual_coupling(b).map_err(|e| ConfigError(e.to_string()))?;
                writeln!(out, "{b},{bs},{},{}", rel.ln_prefactor(b)?, rel.entropy_shift(b))?;
            }
            eprintln!(
                "{:?}: ln Z = {} ln 2 + {} ln sinh(2 beta*) + ln Z*; self-dual point {}",
                rel.kind,
                rel.ln2_coeff,
                rel.sinh_coeff,
                self_dual_point()
            );
        }
        Command::Dualize { what: Dualize::Coeffs { n, beta } } => {
            let c = clock_fourier_coeffs(n, beta).map_err(|e| ConfigError(e.to_string()))?;
            writeln!(out, "k,C_k")?;
            for (k, v) in c.iter().enumerate() {
                writeln!(out, "{k},{v}")?;
            }
        }
        Command::Lattice { what: LatticeCmd::Dump { geometry, protocol } } => {
            let spec = geometry.spec()?;
            let g = if protocol { build_protocol_graph(&spec)? } else { build_replica_lattice(&spec)? };
            write!(out, "{}", g.to_csv())?;
            eprintln!("{} sites, {} bonds, geometry hash {}", g.n_sites(), g.n_bonds(), g.geometry_hash());
        }
        Command::Scale { n_tau, all } => {
            let rows: Vec<_> = match (n_tau, all) {
                (Some(nt), _) => vec![scale_row(nt).map_err(|e| ConfigError(e.to_string()))?],
                (None, true) => SCALE_TABLE.to_vec(),
                (None, false) => return Err(ConfigError("give N_tau or --all".into()).into()),
            };
            writeln!(out, "n_tau_c,beta_c,a_tc,entry")?;
            for r in rows {
                writeln!(out, "{},{},{},{}", r.n_tau_c, r.beta_c, 1.0 / r.n_tau_c as f64, r.text)?;
            }
        }
        Command::Trace { geometry, beta, sweeps, seed } => {
            let g = build_replica_lattice(&geometry.spec()?)?;
            let c = couplings_at(&g, beta, 0.0, &Seams::new()).map_err(|e| ConfigError(e.to_string()))?;
            let mut rng = RngStream::new(seed, 0);
            let mut s = SpinConfig::random(g.n_sites(), &mut rng);
            writeln!(out, "sweep,action,magnetization")?;
            for k in 1..=sweeps {
                sw_sweep(&mut s, &c, &mut rng)?;
                writeln!(out, "{k},{},{}", action(&s, &c)?, s.magnetization())?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<ConfigError>().is_some()
                || matches!(
                    e.downcast_ref::<entropic::Error>(),
                    Some(entropic::Error::Geometry(_) | entropic::Error::InvalidArgument(_) | entropic::Error::Unsupported(_))
                );
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
