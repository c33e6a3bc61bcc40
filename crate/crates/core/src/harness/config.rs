//! TOML experiment descriptions.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::synthetic::{synthetic_permeability, SyntheticLayout};
use crate::error::{Error, Result};
use crate::fem::PermeabilityField;
use crate::grid::StructuredMesh;
use crate::integrator::trajectory::OnlineSource;
use crate::integrator::{NewtonConfig, Nonlinearity, SolverMode, TimeGrid};
use crate::msbasis::BasisParams;
use crate::noise::{NoiseKind, NoiseModel};
use crate::rom::SnapshotCase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Fine cells per axis.
    pub fine: [usize; 2],
    /// Coarse blocks per axis.
    pub coarse: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "default_eigen")]
    pub eigen_count: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Basis cache file; loaded when it matches, written otherwise.
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

fn default_eigen() -> usize {
    BasisParams::default().eigen_count
}

fn default_layers() -> usize {
    BasisParams::default().layers
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            eigen_count: default_eigen(),
            layers: default_layers(),
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum PermeabilityConfig {
    Constant { value: f64 },
    /// Whitespace separated raster with one value per fine cell.
    File { path: PathBuf },
    Synthetic(SyntheticLayout),
}

impl Default for PermeabilityConfig {
    fn default() -> Self {
        PermeabilityConfig::Synthetic(SyntheticLayout::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `amplitude · sin(2πx) sin(2πy)`.
    SineProduct { amplitude: f64 },
    /// `value` at interior nodes, zero on the boundary.
    ConstantInterior { value: f64 },
    Zero,
}

impl InitialCondition {
    pub fn nodal(&self, mesh: &StructuredMesh) -> DVector<f64> {
        DVector::from_fn(mesh.node_count(), |id, _| {
            if mesh.is_boundary_node(id) {
                return 0.0;
            }
            let (x, y) = mesh.node_coords(id);
            match *self {
                InitialCondition::SineProduct { amplitude } => amplitude * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
                InitialCondition::ConstantInterior { value } => value,
                InitialCondition::Zero => 0.0,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub drift: Nonlinearity,
    pub diffusion: Nonlinearity,
    pub initial: InitialCondition,
}

/// `dv = −θ(v − u) dt + σ dW` with constant `v₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub theta: f64,
    pub sigma: f64,
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeimConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_case")]
    pub case: SnapshotCase,
    /// Trajectories averaged into the offline mean state. Held-out
    /// trajectories are numbered after them.
    #[serde(default = "default_offline")]
    pub offline_trajectories: usize,
    #[serde(default)]
    pub online_source: OnlineSource,
}

fn default_m() -> usize {
    30
}

fn default_case() -> SnapshotCase {
    SnapshotCase::First
}

fn default_offline() -> usize {
    10
}

impl Default for DeimConfig {
    fn default() -> Self {
        Self {
            m: default_m(),
            case: default_case(),
            offline_trajectories: default_offline(),
            online_source: OnlineSource::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trajectories: usize,
    #[serde(default = "all_modes")]
    pub modes: Vec<SolverMode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses the rayon default.
    #[serde(default)]
    pub workers: usize,
}

fn all_modes() -> Vec<SolverMode> {
    SolverMode::ALL.to_vec()
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub permeability: PermeabilityConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub coupling: Option<CouplingConfig>,
    pub noise: NoiseKind,
    pub time: TimeGrid,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub deim: DeimConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        // Relative file references are taken from the config's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        if let PermeabilityConfig::File { path: p } = &mut cfg.permeability {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh()?;
        TimeGrid::new(self.time.t_final, self.time.steps)?;
        self.noise_model()?;
        if self.basis.eigen_count == 0 {
            return Err(Error::Config("basis.eigen_count must be positive".into()));
        }
        if self.run.trajectories == 0 {
            return Err(Error::Config("run.trajectories must be positive".into()));
        }
        if self.run.modes.is_empty() {
            return Err(Error::Config("run.modes is empty".into()));
        }
        if self.needs_offline() {
            if self.deim.offline_trajectories == 0 {
                return Err(Error::Config("DEIM modes need deim.offline_trajectories > 0".into()));
            }
            if self.deim.m == 0 {
                return Err(Error::Config("deim.m must be positive".into()));
            }
        }
        let (off, on) = self.deim.case.windows(self.time.steps);
        off.check(self.time.steps)?;
        on.check(self.time.steps)?;
        let uses_aux = self.problem.drift.uses_aux() || self.problem.diffusion.uses_aux();
        if uses_aux && self.coupling.is_none() {
            return Err(Error::Config(
                "the drift or diffusion reads the auxiliary field but no [coupling] is given".into(),
            ));
        }
        if let PermeabilityConfig::Constant { value } = self.permeability {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("constant permeability {value} must be positive")));
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<StructuredMesh> {
        StructuredMesh::new(self.mesh.fine[0], self.mesh.fine[1], self.mesh.coarse[0], self.mesh.coarse[1])
    }

    pub fn basis_params(&self) -> BasisParams {
        BasisParams {
            eigen_count: self.basis.eigen_count,
            layers: self.basis.layers,
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let m = NoiseModel {
            kind: self.noise.clone(),
            seed: self.run.seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn permeability(&self) -> Result<PermeabilityField> {
        let [nx, ny] = self.mesh.fine;
        match &self.permeability {
            PermeabilityConfig::Constant { value } => PermeabilityField::new(nx, ny, vec![*value; nx * ny]),
            PermeabilityConfig::File { path } => PermeabilityField::load_raster(path, nx, ny),
            PermeabilityConfig::Synthetic(layout) => synthetic_permeability(layout, nx, ny),
        }
    }

    pub fn needs_offline(&self) -> bool {
        self.run
            .modes
            .iter()
            .any(|m| matches!(m, SolverMode::MsDeimOffline | SolverMode::MsDeimOnline))
    }

    pub fn needs_space(&self) -> bool {
        self.run.modes.iter().any(|m| *m != SolverMode::FineReference)
    }
}
