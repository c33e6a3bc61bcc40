//! Stochastic full-implicit time stepping with Newton iteration.
//!
//! One step solves
//!
//! ```text
//! M(x − x_k) + Δt A x − Δt N(x) = M(g(u_k) ⊙ ΔW_k)
//! ```
//!
//! for any system exposing its linear operators, projected drift `N` and the
//! Newton linear solve through [`SemilinearSystem`].

pub mod trajectory;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use trajectory::{
    run_trajectory, Coupling, OnlineSource, PhaseTiming, Problem, ReducedContext, SolverMode, Trajectory,
    UpdateSummary,
};

/// Scalar nonlinearities applied nodewise. The optional second argument `v`
/// is an auxiliary field (the coupled SDE state); entries that do not use it
/// ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Nonlinearity {
    Zero,
    Constant { value: f64 },
    /// `rate · u`.
    Linear { rate: f64 },
    /// `scale · cos u`; Lipschitz with constant `|scale|`.
    Cosine { scale: f64 },
    /// `u² + shift`; only locally Lipschitz, bounded on the range a stable
    /// run visits.
    ShiftedSquare { shift: f64 },
    /// `scale · exp(rate · v) · sin u`; Lipschitz in `u` for bounded `v`.
    ExpSine { scale: f64, rate: f64 },
    /// `rate · (v − u)`.
    Relaxation { rate: f64 },
}

impl Nonlinearity {
    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Constant { value } => value,
            Nonlinearity::Linear { rate } => rate * u,
            Nonlinearity::Cosine { scale } => scale * u.cos(),
            Nonlinearity::ShiftedSquare { shift } => u * u + shift,
            Nonlinearity::ExpSine { scale, rate } => scale * (rate * v).exp() * u.sin(),
            Nonlinearity::Relaxation { rate } => rate * (v - u),
        }
    }

    /// Derivative with respect to `u`.
    #[inline]
    pub fn deriv(&self, u: f64, v: f64) -> f64 {
        match *self {
            Nonlinearity::Zero | Nonlinearity::Constant { .. } => 0.0,
            Nonlinearity::Linear { rate } => rate,
            Nonlinearity::Cosine { scale } => -scale * u.sin(),
            Nonlinearity::ShiftedSquare { .. } => 2.0 * u,
            Nonlinearity::ExpSine { scale, rate } => scale * (rate * v).exp() * u.cos(),
            Nonlinearity::Relaxation { rate } => -rate,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    pub fn uses_aux(&self) -> bool {
        matches!(self, Nonlinearity::ExpSine { .. } | Nonlinearity::Relaxation { .. })
    }

    /// Nodewise evaluation; `aux` defaults to zero.
    pub fn apply(&self, u: &DVector<f64>, aux: Option<&DVector<f64>>) -> DVector<f64> {
        match aux {
            Some(v) => u.zip_map(v, |a, b| self.eval(a, b)),
            None => u.map(|a| self.eval(a, 0.0)),
        }
    }

    pub fn apply_deriv(&self, u: &DVector<f64>, aux: Option<&DVector<f64>>) -> DVector<f64> {
        match aux {
            Some(v) => u.zip_map(v, |a, b| self.deriv(a, b)),
            None => u.map(|a| self.deriv(a, 0.0)),
        }
    }
}

/// Uniform time grid `t_k = k T / M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) || steps == 0 {
            return Err(Error::Config(format!(
                "time grid needs T > 0 and at least one step, got T={t_final}, steps={steps}"
            )));
        }
        Ok(Self { t_final, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        self.t_final * level as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    /// Residual tolerance relative to `max(1, ‖M x_k + forcing‖)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 25,
        }
    }
}

/// A (fine or reduced) semilinear system `M ẋ + A x = N(x) + noise`.
pub trait SemilinearSystem {
    fn dim(&self) -> usize;
    fn mass_apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn stiffness_apply(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Projected drift `N(x)`.
    fn drift(&mut self, x: &DVector<f64>, aux: Option<&DVector<f64>>) -> DVector<f64>;
    /// Projected stochastic forcing `M(g(u) ⊙ ΔW)` for a nodal increment.
    fn noise_forcing(&mut self, x: &DVector<f64>, aux: Option<&DVector<f64>>, dw: &DVector<f64>) -> DVector<f64>;
    /// Solves `(M + Δt A − Δt N'(x)) δ = rhs`.
    fn solve_jacobian(
        &mut self,
        x: &DVector<f64>,
        aux: Option<&DVector<f64>>,
        dt: f64,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DVector<f64>,
    /// Newton corrections applied.
    pub iterations: usize,
    /// Residual norm before each correction and after the last one.
    pub residuals: Vec<f64>,
}

/// One step of the full-implicit scheme. `aux_new` is the auxiliary field at
/// the new level (used by the implicit drift); `aux_old` at the old level
/// (used by the explicit noise term).
pub fn implicit_step<S: SemilinearSystem + ?Sized>(
    sys: &mut S,
    x_k: &DVector<f64>,
    aux_old: Option<&DVector<f64>>,
    aux_new: Option<&DVector<f64>>,
    dw: &DVector<f64>,
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<StepOutcome> {
    let forcing = sys.noise_forcing(x_k, aux_old, dw);
    let b = sys.mass_apply(x_k) + forcing;
    let scale = b.norm().max(1.0);
    let mut x = x_k.clone();
    let mut residuals = Vec::new();
    let mut iterations = 0;
    loop {
        let r = sys.mass_apply(&x) + dt * sys.stiffness_apply(&x) - dt * sys.drift(&x, aux_new) - &b;
        let rn = r.norm();
        residuals.push(rn);
        if !rn.is_finite() {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: rn,
            });
        }
        if rn <= cfg.tol * scale {
            break;
        }
        if iterations == cfg.max_iter {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: rn,
            });
        }
        let delta = sys.solve_jacobian(&x, aux_new, dt, &r)?;
        x -= &delta;
        iterations += 1;
        // Corrections at rounding level cannot reduce the residual further.
        if delta.norm() <= 8.0 * f64::EPSILON * x.norm().max(1.0) {
            let r = sys.mass_apply(&x) + dt * sys.stiffness_apply(&x) - dt * sys.drift(&x, aux_new) - &b;
            residuals.push(r.norm());
            break;
        }
    }
    Ok(StepOutcome {
        state: x,
        iterations,
        residuals,
    })
}

/// Drift-implicit update of `dv = −θ(v − u) dt + σ dW`. The noise is
/// additive, so the Milstein correction vanishes.
pub fn drift_implicit_sde_step(
    v: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    dw: &DVector<f64>,
    theta: f64,
    sigma: f64,
) -> DVector<f64> {
    let denom = 1.0 + theta * dt;
    DVector::from_fn(v.len(), |i, _| (v[i] + theta * dt * u[i] + sigma * dw[i]) / denom)
}
