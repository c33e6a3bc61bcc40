//! Whole-trajectory drivers for the four solver modes.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{drift_implicit_sde_step, implicit_step, NewtonConfig, Nonlinearity, SemilinearSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::fem::{FineSystem, OperatorSet};
use crate::msbasis::CoarseOperators;
use crate::noise::NoisePath;
use crate::rom::offline::evaluate_snapshots;
use crate::rom::{online_update_from_evaluations, NonlinearTerms, OfflineModel, ReducedDeim, ReducedSystem, SnapshotWindow};

/// Particle-velocity SDE `dv = −θ(v − u) dt + σ dW` advanced before each PDE
/// step; the drift sees `v` as its auxiliary field.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub theta: f64,
    pub sigma: f64,
    pub initial: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub ops: OperatorSet,
    pub drift: Nonlinearity,
    pub diffusion: Nonlinearity,
    /// Nodal initial field, zero on the boundary.
    pub initial: DVector<f64>,
    pub time: TimeGrid,
    pub newton: NewtonConfig,
    pub coupling: Option<Coupling>,
}

impl Problem {
    pub fn new(
        ops: OperatorSet,
        drift: Nonlinearity,
        diffusion: Nonlinearity,
        initial: DVector<f64>,
        time: TimeGrid,
    ) -> Self {
        Self {
            ops,
            drift,
            diffusion,
            initial,
            time,
            newton: NewtonConfig::default(),
            coupling: None,
        }
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Self {
        self.coupling = Some(coupling);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    FineReference,
    MsNewton,
    MsDeimOffline,
    MsDeimOnline,
}

impl SolverMode {
    pub const ALL: [SolverMode; 4] = [
        SolverMode::FineReference,
        SolverMode::MsNewton,
        SolverMode::MsDeimOffline,
        SolverMode::MsDeimOnline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverMode::FineReference => "fine-reference",
            SolverMode::MsNewton => "ms-newton",
            SolverMode::MsDeimOffline => "ms-deim-offline",
            SolverMode::MsDeimOnline => "ms-deim-online",
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SolverMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown solver mode {s:?}")))
    }
}

/// Where the online update takes its new-trajectory data from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnlineSource {
    /// A preliminary offline-DEIM run of the same noise path over the window.
    #[default]
    Bootstrap,
    /// A preliminary exact-nonlinearity coarse run over the window.
    MsNewton,
}

/// Coarse space and reduced models shared by all coarse modes.
#[derive(Debug, Clone, Copy)]
pub struct ReducedContext<'a> {
    pub basis: &'a DMatrix<f64>,
    pub coarse: &'a CoarseOperators,
    pub offline: Option<&'a OfflineModel>,
    pub online_window: SnapshotWindow,
    pub online_source: OnlineSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTiming {
    /// Wall time of the production time loop, seconds.
    pub stepping: f64,
    /// Wall time spent gathering data and updating the DEIM basis, seconds.
    pub online_update: f64,
    pub newton_iterations: usize,
    pub drift_evaluations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateSummary {
    pub drift_accepted: bool,
    pub drift_condition: f64,
    pub diffusion_accepted: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: u64,
    pub mode: SolverMode,
    /// Nodal `u` at levels `0..=M`.
    pub states: Vec<DVector<f64>>,
    /// Nodal auxiliary field at levels `0..=M` for coupled problems.
    pub aux: Option<Vec<DVector<f64>>>,
    /// Coarse coefficients at levels `0..=M` (coarse modes only).
    pub coefficients: Option<Vec<DVector<f64>>>,
    pub timing: PhaseTiming,
    pub update: Option<UpdateSummary>,
}

struct Integration {
    states: Vec<DVector<f64>>,
    nodal: Vec<DVector<f64>>,
    aux: Option<Vec<DVector<f64>>>,
    iterations: usize,
}

fn integrate<S: SemilinearSystem>(
    sys: &mut S,
    problem: &Problem,
    noise: &NoisePath,
    x0: DVector<f64>,
    to_nodal: impl Fn(&DVector<f64>) -> DVector<f64>,
    steps: usize,
) -> Result<Integration> {
    let dt = problem.time.dt();
    let mut states = Vec::with_capacity(steps + 1);
    let mut nodal = Vec::with_capacity(steps + 1);
    let mut aux = problem.coupling.as_ref().map(|c| vec![c.initial.clone()]);
    let mut iterations = 0;
    nodal.push(to_nodal(&x0));
    states.push(x0);
    for k in 0..steps {
        let dw = &noise.increments[k];
        let (aux_old, aux_new) = match (&problem.coupling, aux.as_mut()) {
            (Some(c), Some(hist)) => {
                let v_old = hist[k].clone();
                let v_new = drift_implicit_sde_step(&v_old, &nodal[k], dt, dw, c.theta, c.sigma);
                hist.push(v_new.clone());
                (Some(v_old), Some(v_new))
            }
            _ => (None, None),
        };
        // The coupled PDE carries no stochastic forcing of its own.
        let step = implicit_step(sys, &states[k], aux_old.as_ref(), aux_new.as_ref(), dw, dt, &problem.newton)
            .map_err(|e| e.at_step(k))?;
        iterations += step.iterations;
        nodal.push(to_nodal(&step.state));
        states.push(step.state);
    }
    Ok(Integration {
        states,
        nodal,
        aux,
        iterations,
    })
}

/// `(RᵀMR)⁻¹ RᵀM u₀`.
fn project_initial(ctx: &ReducedContext<'_>, u0: &DVector<f64>) -> Result<DVector<f64>> {
    let rhs = ctx.coarse.mass_basis.tr_mul(u0);
    let chol = ctx
        .coarse
        .mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Linear("coarse mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

fn deim_terms(ctx: &ReducedContext<'_>, model: &OfflineModel) -> NonlinearTerms {
    NonlinearTerms::Deim {
        drift: ReducedDeim::new(&model.drift, ctx.basis, ctx.coarse),
        diffusion: model.diffusion.as_ref().map(|g| ReducedDeim::new(g, ctx.basis, ctx.coarse)),
    }
}

fn run_coarse(
    problem: &Problem,
    noise: &NoisePath,
    ctx: &ReducedContext<'_>,
    terms: NonlinearTerms,
    steps: usize,
) -> Result<(Integration, u64, f64)> {
    let mut sys = ReducedSystem::new(ctx.basis, ctx.coarse, problem.drift, problem.diffusion, terms);
    let c0 = project_initial(ctx, &problem.initial)?;
    let basis = ctx.basis;
    let start = Instant::now();
    let out = integrate(&mut sys, problem, noise, c0, |c| basis * c, steps)?;
    Ok((out, sys.evaluations(), start.elapsed().as_secs_f64()))
}

/// Runs one trajectory in the requested mode. Coarse modes need `ctx`; DEIM
/// modes additionally need its offline model.
pub fn run_trajectory(
    problem: &Problem,
    noise: &NoisePath,
    mode: SolverMode,
    ctx: Option<&ReducedContext<'_>>,
) -> Result<Trajectory> {
    let steps = problem.time.steps;
    if noise.steps() < steps {
        return Err(Error::Data(format!(
            "noise path has {} increments for {steps} steps",
            noise.steps()
        )));
    }
    let need_ctx = || {
        ctx.ok_or_else(|| Error::Config(format!("mode {mode} requires a multiscale space")))
    };
    fn need_offline<'a>(c: &ReducedContext<'a>, mode: SolverMode) -> Result<&'a OfflineModel> {
        c.offline
            .ok_or_else(|| Error::Config(format!("mode {mode} requires an offline DEIM model")))
    }
    match mode {
        SolverMode::FineReference => {
            let mut sys = FineSystem::new(&problem.ops, problem.drift, problem.diffusion)?;
            let x0 = sys.restrict(&problem.initial);
            let start = Instant::now();
            let interior = problem.ops.interior.clone();
            let n = problem.ops.node_count();
            let expand = move |x: &DVector<f64>| {
                let mut full = DVector::zeros(n);
                for (&node, &v) in interior.iter().zip(x.iter()) {
                    full[node] = v;
                }
                full
            };
            let out = integrate(&mut sys, problem, noise, x0, expand, steps)?;
            let stepping = start.elapsed().as_secs_f64();
            Ok(Trajectory {
                id: noise.trajectory,
                mode,
                states: out.nodal,
                aux: out.aux,
                coefficients: None,
                timing: PhaseTiming {
                    stepping,
                    online_update: 0.0,
                    newton_iterations: out.iterations,
                    drift_evaluations: sys.evaluations(),
                },
                update: None,
            })
        }
        SolverMode::MsNewton | SolverMode::MsDeimOffline => {
            let c = need_ctx()?;
            let terms = if mode == SolverMode::MsNewton {
                NonlinearTerms::Galerkin
            } else {
                deim_terms(c, need_offline(c, mode)?)
            };
            let (out, evals, stepping) = run_coarse(problem, noise, c, terms, steps)?;
            Ok(Trajectory {
                id: noise.trajectory,
                mode,
                states: out.nodal,
                aux: out.aux,
                coefficients: Some(out.states),
                timing: PhaseTiming {
                    stepping,
                    online_update: 0.0,
                    newton_iterations: out.iterations,
                    drift_evaluations: evals,
                },
                update: None,
            })
        }
        SolverMode::MsDeimOnline => {
            let c = need_ctx()?;
            let offline = need_offline(c, mode)?;
            let window = c.online_window;
            window.check(steps)?;
            let start = Instant::now();
            let data_terms = match c.online_source {
                OnlineSource::Bootstrap => deim_terms(c, offline),
                OnlineSource::MsNewton => NonlinearTerms::Galerkin,
            };
            let (data, _, _) = run_coarse(problem, noise, c, data_terms, window.end)?;
            let levels = window.levels();
            let states: Vec<DVector<f64>> = levels.iter().map(|&l| data.nodal[l].clone()).collect();
            let aux: Option<Vec<DVector<f64>>> =
                data.aux.as_ref().map(|a| levels.iter().map(|&l| a[l].clone()).collect());
            let ff = evaluate_snapshots(&problem.drift, &states, aux.as_deref());
            let f_up = online_update_from_evaluations(&offline.drift, &ff)?;
            let g_up = match &offline.diffusion {
                Some(g) => {
                    let fg = evaluate_snapshots(&problem.diffusion, &states, aux.as_deref());
                    Some(online_update_from_evaluations(g, &fg)?)
                }
                None => None,
            };
            let updated = OfflineModel {
                drift: f_up.model.clone(),
                diffusion: g_up.as_ref().map(|u| u.model.clone()),
                ..offline.clone()
            };
            let terms = deim_terms(c, &updated);
            let online_update = start.elapsed().as_secs_f64();
            let (out, evals, stepping) = run_coarse(problem, noise, c, terms, steps)?;
            Ok(Trajectory {
                id: noise.trajectory,
                mode,
                states: out.nodal,
                aux: out.aux,
                coefficients: Some(out.states),
                timing: PhaseTiming {
                    stepping,
                    online_update,
                    newton_iterations: out.iterations,
                    drift_evaluations: evals,
                },
                update: Some(UpdateSummary {
                    drift_accepted: f_up.accepted,
                    drift_condition: f_up.condition,
                    diffusion_accepted: g_up.map(|u| u.accepted),
                }),
            })
        }
    }
}
