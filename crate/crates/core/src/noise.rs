//! Stochastic forcing: space-constant Brownian motion and truncated
//! Karhunen–Loève Q-Wiener fields on the unit square.
//!
//! Every increment is drawn from a ChaCha stream keyed by
//! `(seed, trajectory, step)`, so a path is reproducible bit for bit no matter
//! which thread samples it or in which order steps are requested.
//!
//! The complex Fourier eigenfunctions `exp(2πi(j1 x + j2 y))` are realified
//! into cosine/sine pairs with independent weights. The real covariance kernel
//! is then `Δt · Σ μ_j cos(2π j·(x − y))`, which is the real part of the complex
//! kernel over the same index box.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::StructuredMesh;
use crate::integrator::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseKind {
    /// `ΔW = √Q · N(0, Δt)`, the same value at every node.
    ScalarBrownian { q: f64 },
    /// Truncated Q-Wiener field with eigenvalues `exp(-α (j1² + j2²))` for
    /// `j ∈ (-J/2, J/2]` per axis. `amplitude` scales the covariance.
    QWienerField {
        alpha: f64,
        j1: usize,
        j2: usize,
        #[serde(default = "unit")]
        amplitude: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn scalar(q: f64, seed: u64) -> Result<Self> {
        let m = Self {
            kind: NoiseKind::ScalarBrownian { q },
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn q_wiener(alpha: f64, j1: usize, j2: usize, seed: u64) -> Result<Self> {
        let m = Self {
            kind: NoiseKind::QWienerField {
                alpha,
                j1,
                j2,
                amplitude: 1.0,
            },
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::ScalarBrownian { q } => {
                if !(q > 0.0 && q.is_finite()) {
                    return Err(Error::Config(format!("noise variance Q must be positive, got {q}")));
                }
            }
            NoiseKind::QWienerField {
                alpha,
                j1,
                j2,
                amplitude,
            } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Config(format!("decay rate alpha must be positive, got {alpha}")));
                }
                if j1 == 0 || j2 == 0 || j1 % 2 != 0 || j2 % 2 != 0 {
                    return Err(Error::Config(format!(
                        "truncation orders must be even and positive, got J1={j1}, J2={j2}"
                    )));
                }
                if !(amplitude > 0.0 && amplitude.is_finite()) {
                    return Err(Error::Config(format!("amplitude must be positive, got {amplitude}")));
                }
            }
        }
        Ok(())
    }

    /// Variance of `W(x, t)` at any point for `t = 1` (the truncated trace).
    pub fn trace(&self) -> f64 {
        match self.kind {
            NoiseKind::ScalarBrownian { q } => q,
            NoiseKind::QWienerField {
                alpha,
                j1,
                j2,
                amplitude,
            } => {
                let s1: f64 = mode_range(j1).map(|j| (-alpha * (j * j) as f64).exp()).sum();
                let s2: f64 = mode_range(j2).map(|j| (-alpha * (j * j) as f64).exp()).sum();
                amplitude * s1 * s2
            }
        }
    }

    /// Covariance kernel of `W(·, t)` for `t = 1` between two points.
    pub fn kernel(&self, x: (f64, f64), y: (f64, f64)) -> f64 {
        match self.kind {
            NoiseKind::ScalarBrownian { q } => q,
            NoiseKind::QWienerField {
                alpha,
                j1,
                j2,
                amplitude,
            } => {
                let mut acc = 0.0;
                for a in mode_range(j1) {
                    for b in mode_range(j2) {
                        let mu = (-alpha * (a * a + b * b) as f64).exp();
                        acc += mu * (2.0 * PI * (a as f64 * (x.0 - y.0) + b as f64 * (x.1 - y.1))).cos();
                    }
                }
                amplitude * acc
            }
        }
    }
}

/// Mode indices `-J/2 + 1 ..= J/2`.
fn mode_range(j: usize) -> impl Iterator<Item = i64> + Clone {
    let h = (j / 2) as i64;
    (-h + 1)..=h
}

/// Increments `ΔW_k` at fine nodes for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub trajectory: u64,
    pub time: TimeGrid,
    pub increments: Vec<DVector<f64>>,
}

impl NoisePath {
    pub fn zeros(node_count: usize, time: TimeGrid) -> Self {
        Self {
            trajectory: 0,
            time,
            increments: vec![DVector::zeros(node_count); time.steps],
        }
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, trajectory, step)`.
pub fn substream(seed: u64, trajectory: u64, step: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = splitmix(seed ^ 0x6D73_6465_696D_0001);
    for (k, word) in [trajectory, step, 0x51_57_49_45, 0x4E_45_52].into_iter().enumerate() {
        s = splitmix(s ^ word.wrapping_mul(0xA24B_AED4_963E_E407));
        key[8 * k..8 * k + 8].copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Precomputed separable Fourier factors for a model on a mesh.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    mesh: StructuredMesh,
    field: Option<FieldFactors>,
}

#[derive(Debug, Clone)]
struct FieldFactors {
    /// `√μ_{j1}` weighted cos/sin along x: `J1 × (nx+1)`.
    cx: DMatrix<f64>,
    sx: DMatrix<f64>,
    /// Same along y: `J2 × (ny+1)`.
    cy: DMatrix<f64>,
    sy: DMatrix<f64>,
    amplitude: f64,
}

fn axis_factors(j: usize, alpha: f64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let modes: Vec<i64> = mode_range(j).collect();
    let h = 1.0 / n as f64;
    let mut c = DMatrix::zeros(modes.len(), n + 1);
    let mut s = DMatrix::zeros(modes.len(), n + 1);
    for (r, &m) in modes.iter().enumerate() {
        let w = (-0.5 * alpha * (m * m) as f64).exp();
        for i in 0..=n {
            let th = 2.0 * PI * m as f64 * i as f64 * h;
            c[(r, i)] = w * th.cos();
            s[(r, i)] = w * th.sin();
        }
    }
    (c, s)
}

impl NoiseSampler {
    pub fn new(model: &NoiseModel, mesh: &StructuredMesh) -> Result<Self> {
        model.validate()?;
        let field = match model.kind {
            NoiseKind::ScalarBrownian { .. } => None,
            NoiseKind::QWienerField {
                alpha,
                j1,
                j2,
                amplitude,
            } => {
                let (cx, sx) = axis_factors(j1, alpha, mesh.nx);
                let (cy, sy) = axis_factors(j2, alpha, mesh.ny);
                Some(FieldFactors {
                    cx,
                    sx,
                    cy,
                    sy,
                    amplitude,
                })
            }
        };
        Ok(Self {
            model: model.clone(),
            mesh: *mesh,
            field,
        })
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// One increment over a step of length `dt`.
    pub fn increment(&self, trajectory: u64, step: u64, dt: f64) -> DVector<f64> {
        let mut rng = substream(self.model.seed, trajectory, step);
        let n = self.mesh.node_count();
        match (&self.model.kind, &self.field) {
            (NoiseKind::ScalarBrownian { q }, _) => {
                let z: f64 = rng.sample(StandardNormal);
                DVector::from_element(n, (q * dt).sqrt() * z)
            }
            (NoiseKind::QWienerField { .. }, Some(f)) => {
                let (k1, k2) = (f.cx.nrows(), f.cy.nrows());
                let mut xc = DMatrix::zeros(k1, k2);
                let mut xs = DMatrix::zeros(k1, k2);
                for a in 0..k1 {
                    for b in 0..k2 {
                        xc[(a, b)] = rng.sample(StandardNormal);
                        xs[(a, b)] = rng.sample(StandardNormal);
                    }
                }
                // cos(θx+θy) = cxcy − sxsy and sin(θx+θy) = sxcy + cxsy.
                let g = &xc * &f.cy + &xs * &f.sy;
                let h = &xc * &f.sy - &xs * &f.cy;
                let w = f.cx.transpose() * g - f.sx.transpose() * h;
                let scale = (f.amplitude * dt).sqrt();
                let nx1 = self.mesh.nx + 1;
                DVector::from_fn(n, |id, _| scale * w[(id % nx1, id / nx1)])
            }
            (NoiseKind::QWienerField { .. }, None) => unreachable!("field factors are built in new()"),
        }
    }

    pub fn sample_path(&self, time: TimeGrid, trajectory: u64) -> NoisePath {
        let dt = time.dt();
        NoisePath {
            trajectory,
            time,
            increments: (0..time.steps)
                .map(|k| self.increment(trajectory, k as u64, dt))
                .collect(),
        }
    }
}

pub fn sample_path(
    model: &NoiseModel,
    mesh: &StructuredMesh,
    time: TimeGrid,
    trajectory: u64,
) -> Result<NoisePath> {
    Ok(NoiseSampler::new(model, mesh)?.sample_path(time, trajectory))
}

/// Probe nodes at the centre and the four quarter points of the domain.
pub fn default_probes(mesh: &StructuredMesh) -> Vec<usize> {
    let at = |fx: f64, fy: f64| {
        mesh.node_id(
            (fx * mesh.nx as f64).round() as usize,
            (fy * mesh.ny as f64).round() as usize,
        )
    };
    vec![
        at(0.5, 0.5),
        at(0.25, 0.25),
        at(0.75, 0.25),
        at(0.25, 0.75),
        at(0.75, 0.75),
    ]
}

#[derive(Debug, Clone)]
pub struct CovarianceReport {
    pub probes: Vec<usize>,
    pub empirical: DMatrix<f64>,
    pub analytic: DMatrix<f64>,
    /// `max |empirical − analytic|` over all probe pairs.
    pub max_abs: f64,
    /// `max |var_emp / var_analytic − 1|` over probe nodes.
    pub max_rel_variance: f64,
}

/// Compares the empirical covariance of single increments `W(x, Δt)` over
/// `n_paths` independent trajectories against `Δt · kernel(x, y)`.
pub fn covariance_check(
    model: &NoiseModel,
    mesh: &StructuredMesh,
    n_paths: usize,
    dt: f64,
    probes: &[usize],
) -> Result<CovarianceReport> {
    let sampler = NoiseSampler::new(model, mesh)?;
    let p = probes.len();
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut mean = DVector::<f64>::zeros(p);
    for path in 0..n_paths {
        let dw = sampler.increment(path as u64, 0, dt);
        let v = DVector::from_iterator(p, probes.iter().map(|&id| dw[id]));
        mean += &v;
        sum += &v * v.transpose();
    }
    let nf = n_paths as f64;
    mean /= nf;
    // Known zero mean, so the second moment is the covariance estimator.
    let empirical = sum / nf;
    let analytic = DMatrix::from_fn(p, p, |a, b| {
        dt * model.kernel(mesh.node_coords(probes[a]), mesh.node_coords(probes[b]))
    });
    let max_abs = (&empirical - &analytic).amax();
    let max_rel_variance = (0..p)
        .map(|a| (empirical[(a, a)] / analytic[(a, a)] - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(CovarianceReport {
        probes: probes.to_vec(),
        empirical,
        analytic,
        max_abs,
        max_rel_variance,
    })
}

const NOISE_MAGIC: &[u8; 8] = b"MSNOISE1";

/// Writes a path as a binary record: header with model parameters, seed and
/// grid dimensions, then one little-endian `f64` vector per step.
pub fn write_noise_archive(
    path: &Path,
    model: &NoiseModel,
    mesh: &StructuredMesh,
    noise: &NoisePath,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(NOISE_MAGIC)?;
    let (tag, p0, p1, p2, j1, j2) = match model.kind {
        NoiseKind::ScalarBrownian { q } => (0u8, q, 0.0, 0.0, 0u64, 0u64),
        NoiseKind::QWienerField {
            alpha,
            j1,
            j2,
            amplitude,
        } => (1u8, alpha, amplitude, 0.0, j1 as u64, j2 as u64),
    };
    w.write_u8(tag)?;
    for v in [p0, p1, p2] {
        w.write_f64::<LittleEndian>(v)?;
    }
    for v in [j1, j2, model.seed, noise.trajectory, mesh.nx as u64, mesh.ny as u64] {
        w.write_u64::<LittleEndian>(v)?;
    }
    w.write_f64::<LittleEndian>(noise.time.t_final)?;
    w.write_u64::<LittleEndian>(noise.time.steps as u64)?;
    w.write_u64::<LittleEndian>(mesh.node_count() as u64)?;
    for inc in &noise.increments {
        for &v in inc.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_noise_archive(path: &Path) -> Result<(NoiseModel, StructuredMesh, NoisePath)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != NOISE_MAGIC {
        return Err(Error::Format("not a noise archive".into()));
    }
    let tag = r.read_u8()?;
    let p0 = r.read_f64::<LittleEndian>()?;
    let p1 = r.read_f64::<LittleEndian>()?;
    let _p2 = r.read_f64::<LittleEndian>()?;
    let mut u = [0u64; 6];
    for v in u.iter_mut() {
        *v = r.read_u64::<LittleEndian>()?;
    }
    let [j1, j2, seed, trajectory, nx, ny] = u;
    let t_final = r.read_f64::<LittleEndian>()?;
    let steps = r.read_u64::<LittleEndian>()? as usize;
    let nodes = r.read_u64::<LittleEndian>()? as usize;
    let kind = match tag {
        0 => NoiseKind::ScalarBrownian { q: p0 },
        1 => NoiseKind::QWienerField {
            alpha: p0,
            j1: j1 as usize,
            j2: j2 as usize,
            amplitude: p1,
        },
        t => return Err(Error::Format(format!("unknown noise kind tag {t}"))),
    };
    let model = NoiseModel { kind, seed };
    model.validate()?;
    let mesh = StructuredMesh::new(nx as usize, ny as usize, 1, 1)?;
    if mesh.node_count() != nodes {
        return Err(Error::Format(format!(
            "archive declares {nodes} nodes but a {nx}x{ny} grid has {}",
            mesh.node_count()
        )));
    }
    let time = TimeGrid::new(t_final, steps)?;
    let mut increments = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut v = DVector::zeros(nodes);
        for x in v.iter_mut() {
            *x = r.read_f64::<LittleEndian>()?;
        }
        increments.push(v);
    }
    Ok((
        model,
        mesh,
        NoisePath {
            trajectory,
            time,
            increments,
        },
    ))
}
