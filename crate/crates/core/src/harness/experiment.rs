//! Whole experiments: operators, coarse space, offline model, then every
//! requested mode on every held-out trajectory with shared noise.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::{deviation, ensemble_mean, or_nan, relative_energy_error, relative_l2_error, ErrorRecord};
use crate::error::{Error, Result};
use crate::fem::{OperatorSet, PermeabilityField};
use crate::grid::StructuredMesh;
use crate::integrator::trajectory::UpdateSummary;
use crate::integrator::{run_trajectory, Coupling, PhaseTiming, Problem, ReducedContext, SolverMode, Trajectory};
use crate::msbasis::{build_multiscale_space, load_basis_cache, save_basis_cache, CoarseOperators, MultiscaleSpace};
use crate::noise::NoiseSampler;
use crate::rom::{build_offline_model, OfflineModel};

/// Everything a run needs before the first time step.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub mesh: StructuredMesh,
    pub kappa: PermeabilityField,
    pub problem: Problem,
    pub space: Option<MultiscaleSpace>,
    pub coarse: Option<CoarseOperators>,
    pub sampler: NoiseSampler,
    pub basis_seconds: f64,
    pool: rayon::ThreadPool,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Loads the cached basis when it matches `kappa`, otherwise builds it and
/// refreshes the cache.
pub fn obtain_space(
    config: &ExperimentConfig,
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
) -> Result<(MultiscaleSpace, f64)> {
    let params = config.basis_params();
    let start = Instant::now();
    if let Some(path) = &config.basis.cache {
        if path.exists() {
            if let Ok(space) = load_basis_cache(path, mesh, kappa, params) {
                return Ok((space, start.elapsed().as_secs_f64()));
            }
        }
    }
    let space = build_multiscale_space(mesh, kappa, params)?;
    let secs = start.elapsed().as_secs_f64();
    if let Some(path) = &config.basis.cache {
        save_basis_cache(&space, path)?;
    }
    Ok((space, secs))
}

impl Workspace {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let pool = thread_pool(config.run.workers)?;
        let mesh = config.mesh()?;
        let kappa = config.permeability()?;
        let ops = OperatorSet::assemble(&mesh, &kappa)?;
        let (space, basis_seconds) = if config.needs_space() {
            let (s, t) = pool.install(|| obtain_space(config, &mesh, &kappa))?;
            (Some(s), t)
        } else {
            (None, 0.0)
        };
        let coarse = space.as_ref().map(|s| s.coarse_operators(&ops));
        let mut problem = Problem::new(
            ops,
            config.problem.drift,
            config.problem.diffusion,
            config.problem.initial.nodal(&mesh),
            config.time,
        );
        problem.newton = config.newton;
        if let Some(c) = config.coupling {
            problem = problem.with_coupling(Coupling {
                theta: c.theta,
                sigma: c.sigma,
                initial: DVector::from_element(mesh.node_count(), c.initial),
            });
        }
        let sampler = NoiseSampler::new(&config.noise_model()?, &mesh)?;
        Ok(Self {
            config: config.clone(),
            mesh,
            kappa,
            problem,
            space,
            coarse,
            sampler,
            basis_seconds,
            pool,
        })
    }

    /// First held-out trajectory id; ids below it feed the offline mean.
    pub fn first_held_out(&self) -> u64 {
        if self.config.needs_offline() {
            self.config.deim.offline_trajectories as u64
        } else {
            0
        }
    }

    fn context<'a>(&'a self, offline: Option<&'a OfflineModel>) -> Option<ReducedContext<'a>> {
        let (_, on_window) = self.config.deim.case.windows(self.config.time.steps);
        Some(ReducedContext {
            basis: &self.space.as_ref()?.basis,
            coarse: self.coarse.as_ref()?,
            offline,
            online_window: on_window,
            online_source: self.config.deim.online_source,
        })
    }

    /// Runs `ms-newton` on trajectories `0..offline_trajectories` and builds
    /// the offline DEIM models from their mean. Returns the model and its
    /// wall time.
    pub fn offline(&self) -> Result<(OfflineModel, f64)> {
        let ctx = self
            .context(None)
            .ok_or_else(|| Error::Config("offline model needs a multiscale space".into()))?;
        let start = Instant::now();
        let time = self.config.time;
        let ids: Vec<u64> = (0..self.config.deim.offline_trajectories as u64).collect();
        let runs = self.pool.install(|| {
            ids.par_iter()
                .map(|&id| {
                    let noise = self.sampler.sample_path(time, id);
                    run_trajectory(&self.problem, &noise, SolverMode::MsNewton, Some(&ctx))
                })
                .collect::<Result<Vec<Trajectory>>>()
        })?;
        let (window, _) = self.config.deim.case.windows(time.steps);
        let states: Vec<&[DVector<f64>]> = runs.iter().map(|t| t.states.as_slice()).collect();
        let aux: Option<Vec<&[DVector<f64>]>> = runs
            .iter()
            .map(|t| t.aux.as_deref())
            .collect::<Option<Vec<_>>>();
        let model = build_offline_model(
            &states,
            aux.as_deref(),
            window,
            self.config.deim.m,
            &self.problem.drift,
            &self.problem.diffusion,
        )?;
        Ok((model, start.elapsed().as_secs_f64()))
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryReport {
    pub id: u64,
    pub mode: SolverMode,
    pub errors: Vec<ErrorRecord>,
    pub final_state: DVector<f64>,
    pub final_aux: Option<DVector<f64>>,
    pub timing: PhaseTiming,
    pub update: Option<UpdateSummary>,
}

impl TrajectoryReport {
    pub fn final_errors(&self) -> &ErrorRecord {
        self.errors.last().expect("a report covers at least level 0")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub id: u64,
    pub mode: SolverMode,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ModeTiming {
    pub trajectories: usize,
    pub stepping: f64,
    pub online_update: f64,
    pub newton_iterations: usize,
    pub drift_evaluations: u64,
}

/// Wall-clock seconds per phase. Kept out of the CSV files, which must be
/// reproducible byte for byte.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TimingReport {
    pub basis_build: f64,
    pub offline_rom: f64,
    pub modes: BTreeMap<String, ModeTiming>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by trajectory id, then by the order of `run.modes`.
    pub reports: Vec<TrajectoryReport>,
    pub failures: Vec<Failure>,
    pub timing: TimingReport,
    pub coarse_dim: Option<usize>,
    pub lambda: Option<f64>,
}

impl ExperimentResult {
    pub fn of_mode(&self, mode: SolverMode) -> impl Iterator<Item = &TrajectoryReport> {
        self.reports.iter().filter(move |r| r.mode == mode)
    }

    /// `(id, rel_l2)` at `step` for every successful trajectory of `mode`.
    pub fn l2_at(&self, mode: SolverMode, step: usize) -> Vec<(u64, f64)> {
        self.of_mode(mode).map(|r| (r.id, r.errors[step].rel_l2)).collect()
    }

    pub fn mean_l2_at(&self, mode: SolverMode, step: usize) -> Option<f64> {
        let v = self.l2_at(mode, step);
        (!v.is_empty()).then(|| v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64)
    }
}

struct HeldOut {
    reference: Option<Vec<DVector<f64>>>,
    modes: Vec<std::result::Result<(Trajectory, Vec<(f64, f64)>), Failure>>,
}

fn fail(id: u64, mode: SolverMode, e: impl std::fmt::Display) -> Failure {
    Failure {
        id,
        mode,
        message: e.to_string(),
    }
}

fn errors_against(traj: &Trajectory, reference: &[DVector<f64>], ops: &OperatorSet) -> Result<Vec<(f64, f64)>> {
    traj.states
        .iter()
        .zip(reference)
        .map(|(u, r)| {
            Ok((
                or_nan(relative_l2_error(u, r, &ops.mass))?,
                or_nan(relative_energy_error(u, r, &ops.stiffness))?,
            ))
        })
        .collect()
}

fn run_held_out(ws: &Workspace, ctx: Option<&ReducedContext<'_>>, id: u64) -> HeldOut {
    let noise = ws.sampler.sample_path(ws.config.time, id);
    let problem = &ws.problem;
    let reference = run_trajectory(problem, &noise, SolverMode::FineReference, None);
    let modes = ws
        .config
        .run
        .modes
        .iter()
        .map(|&mode| {
            let reference = reference.as_ref().map_err(|e| fail(id, mode, format!("fine reference failed: {e}")))?;
            let traj = if mode == SolverMode::FineReference {
                reference.clone()
            } else {
                run_trajectory(problem, &noise, mode, ctx).map_err(|e| fail(id, mode, e))?
            };
            let errs = errors_against(&traj, &reference.states, &problem.ops).map_err(|e| fail(id, mode, e))?;
            Ok((traj, errs))
        })
        .collect();
    HeldOut {
        reference: reference.ok().map(|t| t.states),
        modes,
    }
}

/// Runs the experiment in memory. Fails only when configuration or setup is
/// invalid or when every trajectory of every mode failed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let ws = Workspace::prepare(config)?;
    let (offline, offline_rom) = if config.needs_offline() {
        let (m, t) = ws.offline()?;
        (Some(m), t)
    } else {
        (None, 0.0)
    };
    let ctx = ws.context(offline.as_ref());
    let first = ws.first_held_out();
    let ids: Vec<u64> = (first..first + config.run.trajectories as u64).collect();
    let held: Vec<HeldOut> = ws.pool.install(|| ids.par_iter().map(|&id| run_held_out(&ws, ctx.as_ref(), id)).collect());

    let refs: Vec<&[DVector<f64>]> = held.iter().filter_map(|h| h.reference.as_deref()).collect();
    let mean = if refs.is_empty() { None } else { Some(ensemble_mean(&refs)?) };
    let ops = &ws.problem.ops;
    let time = config.time;

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut timing = TimingReport {
        basis_build: ws.basis_seconds,
        offline_rom,
        modes: BTreeMap::new(),
    };
    for (&id, h) in ids.iter().zip(held) {
        let devs: Vec<f64> = match (&h.reference, &mean) {
            (Some(r), Some(m)) => r
                .iter()
                .zip(m)
                .map(|(u, mu)| or_nan(deviation(u, mu, &ops.mass)))
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        for outcome in h.modes {
            let (traj, errs) = match outcome {
                Ok(v) => v,
                Err(f) => {
                    failures.push(f);
                    continue;
                }
            };
            let errors = errs
                .iter()
                .enumerate()
                .map(|(step, &(rel_l2, rel_energy))| ErrorRecord {
                    step,
                    t: time.time(step),
                    rel_l2,
                    rel_energy,
                    deviation: devs[step],
                })
                .collect();
            let t = timing.modes.entry(traj.mode.name().to_string()).or_default();
            t.trajectories += 1;
            t.stepping += traj.timing.stepping;
            t.online_update += traj.timing.online_update;
            t.newton_iterations += traj.timing.newton_iterations;
            t.drift_evaluations += traj.timing.drift_evaluations;
            reports.push(TrajectoryReport {
                id,
                mode: traj.mode,
                errors,
                final_state: traj.states.last().cloned().unwrap_or_default(),
                final_aux: traj.aux.as_ref().and_then(|a| a.last().cloned()),
                timing: traj.timing,
                update: traj.update,
            });
        }
    }
    if reports.is_empty() {
        let first = failures
            .first()
            .map(|f| format!("trajectory {} ({}): {}", f.id, f.mode, f.message))
            .unwrap_or_default();
        return Err(Error::Data(format!("every trajectory failed; first failure: {first}")));
    }
    Ok(ExperimentResult {
        config: config.clone(),
        reports,
        failures,
        timing,
        coarse_dim: ws.space.as_ref().map(|s| s.basis.ncols()),
        lambda: ws.space.as_ref().map(|s| s.lambda),
    })
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for x in v.iter() {
        writeln!(w, "{}", sci(*x))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes per-trajectory error CSVs, `summary.csv`, `failures.csv`, final
/// fields and `timing.json` into `dir`.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), result.config.to_toml()?)?;
    let mut summary = BufWriter::new(fs::File::create(dir.join("summary.csv"))?);
    writeln!(
        summary,
        "mode,trajectory,final_rel_l2,final_rel_energy,final_deviation,newton_iterations,drift_evaluations,update_accepted"
    )?;
    for r in &result.reports {
        let name = r.mode.name();
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("errors_{name}_traj{}.csv", r.id)))?);
        writeln!(w, "step,t,rel_l2,rel_energy,deviation")?;
        for e in &r.errors {
            writeln!(w, "{},{},{},{},{}", e.step, sci(e.t), sci(e.rel_l2), sci(e.rel_energy), sci(e.deviation))?;
        }
        w.flush()?;
        write_vector(&dir.join(format!("final_{name}_traj{}.txt", r.id)), &r.final_state)?;
        if let Some(v) = &r.final_aux {
            write_vector(&dir.join(format!("final_aux_{name}_traj{}.txt", r.id)), v)?;
        }
        let f = r.final_errors();
        let accepted = r.update.map_or(String::new(), |u| u.drift_accepted.to_string());
        writeln!(
            summary,
            "{name},{},{},{},{},{},{},{accepted}",
            r.id,
            sci(f.rel_l2),
            sci(f.rel_energy),
            sci(f.deviation),
            r.timing.newton_iterations,
            r.timing.drift_evaluations
        )?;
    }
    summary.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join("failures.csv"))?);
    writeln!(w, "trajectory,mode,message")?;
    for f in &result.failures {
        writeln!(w, "{},{},\"{}\"", f.id, f.mode, f.message.replace('"', "'"))?;
    }
    w.flush()?;
    let timing = serde_json::to_string_pretty(&result.timing).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("timing.json"), timing)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(modes: &str, workers: usize) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
[mesh]
fine = [8, 8]
coarse = [2, 2]
[basis]
eigen_count = 2
layers = 1
[permeability]
source = "constant"
value = 1.0
[problem]
drift = {{ name = "cosine", scale = 1.0 }}
diffusion = {{ name = "shifted-square", shift = 2.0 }}
initial = {{ kind = "sine-product", amplitude = 1.0 }}
[noise]
kind = "scalar-brownian"
q = 0.01
[time]
t_final = 0.1
steps = 6
[deim]
m = 3
offline_trajectories = 2
[run]
trajectories = 3
modes = [{modes}]
seed = 5
workers = {workers}
"#
        ))
        .unwrap()
    }

    #[test]
    fn fine_mode_has_zero_error_and_ids_follow_offline_set() {
        let cfg = tiny("\"fine-reference\", \"ms-newton\", \"ms-deim-offline\"", 1);
        let res = run_experiment(&cfg).unwrap();
        assert!(res.failures.is_empty());
        assert_eq!(res.reports.len(), 9);
        let ids: Vec<u64> = res.of_mode(SolverMode::MsNewton).map(|r| r.id).collect();
        assert_eq!(ids, vec![2, 3, 4]);
        for r in res.of_mode(SolverMode::FineReference) {
            assert!(r.errors.iter().all(|e| e.rel_l2 == 0.0 && e.rel_energy == 0.0));
        }
        for r in &res.reports {
            assert_eq!(r.errors.len(), 7);
            assert!(r.errors.iter().all(|e| e.rel_l2 >= 0.0 && e.deviation >= 0.0));
        }
    }

    #[test]
    fn outputs_do_not_depend_on_worker_count() {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for (workers, dir) in [1, 3].into_iter().zip(&dirs) {
            let res = run_experiment(&tiny("\"ms-newton\", \"ms-deim-online\"", workers)).unwrap();
            write_results(&res, dir.path()).unwrap();
        }
        let mut names: Vec<_> = fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .filter(|n| n.to_string_lossy().ends_with(".csv"))
            .collect();
        names.sort();
        assert!(names.len() > 3);
        for n in names {
            let a = fs::read(dirs[0].path().join(&n)).unwrap();
            let b = fs::read(dirs[1].path().join(&n)).unwrap();
            assert_eq!(a, b, "{n:?} differs");
        }
    }
}
