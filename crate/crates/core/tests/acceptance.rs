//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the lines reach the console; exits non-zero if any criterion
//! fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use msdeim::harness::{run_experiment, write_results, ExperimentConfig, ExperimentResult};
use msdeim::integrator::SolverMode;
use msdeim::noise::{covariance_check, default_probes, NoiseModel, NoiseSampler};
use msdeim::rom::online::online_update;
use msdeim::rom::{DeimModel, SnapshotCase};
use msdeim::grid::StructuredMesh;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn orthonormal(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

fn deim_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_span, mut worst_sample) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let u = orthonormal(&mut rng, 200, 12);
        let model = DeimModel::new(u.clone()).unwrap();
        let c = DVector::from_fn(12, |_, _| rng.random_range(-5.0..5.0));
        let f = &u * c;
        worst_span = worst_span.max((model.approximate(&f) - &f).norm() / f.norm());
        let g = DVector::from_fn(200, |_, _| rng.random_range(-1.0..1.0));
        let ga = model.approximate(&g);
        for &p in model.points() {
            worst_sample = worst_sample.max((ga[p] - g[p]).abs());
        }
    }
    outcome(
        worst_span <= 1e-10 && worst_sample <= 1e-13,
        format!("span error {worst_span:.2e}, residual at points {worst_sample:.2e}"),
    )
}

fn online_hand_example() -> Outcome {
    let model = DeimModel::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let f = DMatrix::from_element(2, 2, 1.0);
    let up = online_update(&model, &c, &f).unwrap();
    let u = up.model.basis();
    let fit = (u * &c - &f).amax();
    let target = (u - DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).amax();
    outcome(
        up.accepted && target <= 1e-15 && fit <= 1e-15,
        format!("U~ = ({:.3}, {:.3}), max |U~C - F| = {fit:.1e}", u[0], u[1]),
    )
}

fn online_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let model = DeimModel::new(orthonormal(&mut rng, 50, 5)).unwrap();
        let c = DMatrix::from_fn(5, 20, |_, _| rng.random_range(-1.0..1.0));
        let f = DMatrix::from_fn(50, 20, |_, _| rng.random_range(-1.0..1.0));
        let up = online_update(&model, &c, &f).unwrap();
        let before = select_rows(&(model.basis() * &c - &f), model.points()).norm();
        let after = select_rows(&(up.model.basis() * &c - &f), model.points()).norm();
        if after > before * (1.0 + 1e-12) {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(after / before);
    }
    outcome(violations == 0, format!("{violations} violations in 100, worst ratio {worst_ratio:.3e}"))
}

fn final_energy(cfg: &ExperimentConfig) -> f64 {
    let res = run_experiment(cfg).unwrap();
    let e = res.of_mode(SolverMode::MsNewton).next().unwrap().final_errors().rel_energy;
    e
}

fn multiscale_convergence() -> Outcome {
    let coarse4 = config("deterministic.toml");
    let mut coarse8 = coarse4.clone();
    coarse8.mesh.coarse = [8, 8];
    coarse8.basis.eigen_count = 4;
    let e4 = final_energy(&coarse4);
    let e8 = final_energy(&coarse8);
    let ratio = e8 / e4;
    outcome(
        e8 < e4 && ratio <= 0.7,
        format!("energy error 4x4 {e4:.4e}, 8x8 {e8:.4e}, ratio {ratio:.3}"),
    )
}

fn noise_statistics() -> Outcome {
    let mesh = StructuredMesh::new(20, 20, 4, 4).unwrap();
    let dt = 0.01;
    let scalar = NoiseSampler::new(&NoiseModel::scalar(1.0, 99).unwrap(), &mesh).unwrap();
    let n = 10_000;
    let xs: Vec<f64> = (0..n).map(|k| scalar.increment(0, k, dt)[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let bound = 4.0 * dt.sqrt() / (n as f64).sqrt();
    let scalar_ok = mean.abs() <= bound && (0.0094..=0.0106).contains(&var);
    let field = NoiseModel::q_wiener(0.0005, 16, 16, 5).unwrap();
    let report = covariance_check(&field, &mesh, 5000, dt, &default_probes(&mesh)).unwrap();
    let field_ok = report.max_rel_variance <= 0.1;
    outcome(
        scalar_ok && field_ok,
        format!(
            "scalar mean {mean:.2e} (bound {bound:.1e}), variance {var:.5}; field worst variance error {:.2}%",
            100.0 * report.max_rel_variance
        ),
    )
}

/// Fraction of trajectories where `a` has error no larger than `b`.
fn win_rate(res: &ExperimentResult, a: SolverMode, b: SolverMode, step: usize) -> f64 {
    let ea = res.l2_at(a, step);
    let eb = res.l2_at(b, step);
    let pairs: Vec<(f64, f64)> = ea
        .iter()
        .filter_map(|(id, x)| eb.iter().find(|(j, _)| j == id).map(|(_, y)| (*x, *y)))
        .collect();
    pairs.iter().filter(|(x, y)| x <= y).count() as f64 / pairs.len().max(1) as f64
}

fn error_ordering(out: &Path) -> (Outcome, ExperimentResult) {
    let mut cfg = config("error_ordering.toml");
    cfg.run.workers = 1;
    let res = run_experiment(&cfg).unwrap();
    write_results(&res, out).unwrap();
    let last = cfg.time.steps;
    let ms = res.mean_l2_at(SolverMode::MsNewton, last).unwrap();
    let on = res.mean_l2_at(SolverMode::MsDeimOnline, last).unwrap();
    let off = res.mean_l2_at(SolverMode::MsDeimOffline, last).unwrap();
    let w1 = win_rate(&res, SolverMode::MsNewton, SolverMode::MsDeimOnline, last);
    let w2 = win_rate(&res, SolverMode::MsDeimOnline, SolverMode::MsDeimOffline, last);
    let pass = ms <= on && on <= off && w1 >= 0.6 && w2 >= 0.6 && res.failures.is_empty();
    (
        outcome(
            pass,
            format!(
                "ms {ms:.4e}, online {on:.4e}, offline {off:.4e}; wins ms<=online {:.0}%, online<=offline {:.0}%",
                100.0 * w1,
                100.0 * w2
            ),
        ),
        res,
    )
}

fn speedup() -> Outcome {
    let cfg = config("speedup.toml");
    let res = run_experiment(&cfg).unwrap();
    // Online time includes its update.
    let cost = |m: SolverMode| {
        let t = &res.timing.modes[m.name()];
        t.stepping + t.online_update
    };
    let ms = cost(SolverMode::MsNewton);
    let off = cost(SolverMode::MsDeimOffline);
    let on = cost(SolverMode::MsDeimOnline);
    let ratio = off.max(on) / ms;
    let [nx, ny] = cfg.mesh.fine;
    let threshold = if nx >= 100 { 0.5 } else { 0.7 };
    outcome(
        ratio <= threshold,
        format!(
            "{nx}x{ny}: ms-newton {ms:.2}s, offline DEIM {off:.2}s, online DEIM {on:.2}s, ratio {ratio:.3} (limit {threshold})"
        ),
    )
}

fn case_study() -> Outcome {
    let base = config("qwiener_cases.toml");
    let mean_for = |case: SnapshotCase| {
        let mut cfg = base.clone();
        cfg.deim.case = case;
        cfg.run.modes = vec![SolverMode::MsDeimOnline];
        let res = run_experiment(&cfg).unwrap();
        res.mean_l2_at(SolverMode::MsDeimOnline, cfg.time.steps).unwrap()
    };
    let one = mean_for(SnapshotCase::First);
    let two = mean_for(SnapshotCase::Second);
    outcome(two <= one, format!("online DEIM final error, case I {one:.4e}, case II {two:.4e}"))
}

fn coupled_system() -> Outcome {
    let cfg = config("coupled.toml");
    let res = run_experiment(&cfg).unwrap();
    let complete = SolverMode::ALL
        .iter()
        .all(|m| res.of_mode(*m).count() == cfg.run.trajectories && res.of_mode(*m).all(|r| r.errors.len() == 101));
    let step = cfg.time.steps / 2 + 5;
    let on = res.mean_l2_at(SolverMode::MsDeimOnline, step).unwrap_or(f64::NAN);
    let off = res.mean_l2_at(SolverMode::MsDeimOffline, step).unwrap_or(f64::NAN);
    outcome(
        complete && on <= off,
        format!(
            "all modes complete: {complete}; step {step}: online {on:.4e}, offline {off:.4e}, failures {}",
            res.failures.len()
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    let mut cfg = config("error_ordering.toml");
    cfg.run.workers = 3;
    let res = run_experiment(&cfg).unwrap();
    write_results(&res, second).unwrap();
    let a = csv_files(first);
    let b = csv_files(second);
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    let same_names = names(&a) == names(&b);
    let differing = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| fs::read(x).unwrap() != fs::read(y).unwrap())
        .count();
    outcome(
        same_names && differing == 0 && !a.is_empty(),
        format!("{} CSV files compared (1 vs 3 workers), {differing} differ", a.len()),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let run_a = scratch.path().join("workers1");
    let run_b = scratch.path().join("workers3");
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("criterion {n:>2} {tag} {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
    };
    let t = Instant::now();
    report(1, "DEIM exactness", t, deim_exactness());
    let t = Instant::now();
    report(2, "online update hand example", t, online_hand_example());
    let t = Instant::now();
    report(3, "online update monotonicity", t, online_monotonicity());
    let t = Instant::now();
    report(4, "multiscale convergence", t, multiscale_convergence());
    let t = Instant::now();
    report(5, "noise statistics", t, noise_statistics());
    let t = Instant::now();
    let (o6, _) = error_ordering(&run_a);
    report(6, "error ordering", t, o6);
    let t = Instant::now();
    report(7, "speedup", t, speedup());
    let t = Instant::now();
    report(8, "snapshot case study", t, case_study());
    let t = Instant::now();
    report(9, "coupled system", t, coupled_system());
    let t = Instant::now();
    report(10, "determinism", t, determinism(&run_a, &run_b));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
