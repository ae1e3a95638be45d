//! Run configuration (TOML, schema "entropic-run/1"). The grammar is
//! documented in docs/config.md.

use std::path::{Path, PathBuf};

use entropic::analysis::{scale::n_tau_c_of_beta, scale_lookup, FitWindow};
use entropic::lattice::{Boundary, GeometryVariant, ReplicaLatticeSpec};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "entropic-run/1";
pub const OUTPUT_ENV: &str = "ENTROPIC_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub io: IoConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dimension: usize,
    pub extents: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<Vec<Boundary>>,
    #[serde(default)]
    pub cut_offset: usize,
    #[serde(default = "standard_cut")]
    pub variant: GeometryVariant,
}

fn standard_cut() -> GeometryVariant {
    GeometryVariant::StandardCut
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub n: usize,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub n_tau_c: Vec<usize>,
    /// Smaller slab length of each (l, l + 1) pair.
    pub l: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub n_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps_per_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibration_sweeps: Option<usize>,
    pub pilot_sweeps: usize,
    pub trajectories: u64,
    pub master_seed: u64,
    pub reverse: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_steps: 64,
            sweeps_per_step: None,
            equilibration_sweeps: None,
            pilot_sweeps: 2000,
            trajectories: 1000,
            master_seed: 1,
            reverse: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ansatz_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ansatz_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub powerlaw_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub powerlaw_max: Option<f64>,
    pub ansatz_start: [f64; 2],
    pub thermo_m_start: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2_cft: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mg_table: Option<PathBuf>,
    /// l T_c values at which continuum extrapolations are made.
    pub continuum_targets: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            ansatz_min: Some(0.84),
            ansatz_max: None,
            powerlaw_min: None,
            powerlaw_max: Some(1.26),
            ansatz_start: [0.3, 0.4],
            thermo_m_start: 0.1,
            c2_cft: None,
            mg_table: None,
            continuum_targets: Vec::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn ansatz_window(&self) -> FitWindow {
        FitWindow { min: self.ansatz_min, max: self.ansatz_max }
    }

    pub fn powerlaw_window(&self) -> FitWindow {
        FitWindow { min: self.powerlaw_min, max: self.powerlaw_max }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Trajectories per append to the record file; 0 means 1000.
    pub checkpoint_interval: u64,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
}

/// A coupling to simulate with the table entry it came from, if any.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coupling {
    pub beta: f64,
    pub n_tau_c: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema != SCHEMA {
            return Err(format!("schema must be \"{SCHEMA}\", got \"{}\"", self.schema));
        }
        if self.physics.n < 1 {
            return Err("physics.n must be >= 1".into());
        }
        if self.physics.l.is_empty() {
            return Err("physics.l must list at least one slab length".into());
        }
        if let Some(b) = self.physics.beta.iter().find(|b| !(**b > 0.0)) {
            return Err(format!("physics.beta entries must be > 0, got {b}"));
        }
        for &nt in &self.physics.n_tau_c {
            scale_lookup(nt).map_err(|e| format!("physics.n_tau_c: {e}"))?;
        }
        if self.protocol.n_steps == 0 || self.protocol.sweeps_per_step == Some(0) {
            return Err("protocol.n_steps and protocol.sweeps_per_step must be positive".into());
        }
        for &l in &self.physics.l {
            self.spec(l + 1).validate().map_err(|e| format!("geometry with l = {l}: {e}"))?;
        }
        if let Some(c) = self.analysis.c2_cft {
            if !(c > 0.0) {
                return Err(format!("analysis.c2_cft must be > 0, got {c}"));
            }
        }
        Ok(())
    }

    /// Geometry at slab length `slab`.
    pub fn spec(&self, slab: usize) -> ReplicaLatticeSpec {
        let g = &self.geometry;
        let mut s = ReplicaLatticeSpec::new(g.dimension, self.physics.n, &g.extents, slab)
            .with_offset(g.cut_offset)
            .with_variant(g.variant);
        if let Some(b) = &g.boundaries {
            s = s.with_boundaries(b);
        }
        s
    }

    pub fn couplings(&self) -> Vec<Coupling> {
        let mut out: Vec<Coupling> =
            self.physics.beta.iter().map(|&beta| Coupling { beta, n_tau_c: n_tau_c_of_beta(beta) }).collect();
        for &nt in &self.physics.n_tau_c {
            let beta = scale_lookup(nt).expect("validated").0;
            if !out.iter().any(|c| c.beta == beta) {
                out.push(Coupling { beta, n_tau_c: Some(nt) });
            }
        }
        out
    }

    /// Output directory: io.output_dir, else $ENTROPIC_OUTPUT_DIR, else ./entropic-out.
    pub fn output_dir(&self) -> PathBuf {
        resolve_output_dir(self.io.output_dir.as_deref())
    }
}

pub fn resolve_output_dir(configured: Option<&Path>) -> PathBuf {
    configured
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("entropic-out"))
}
