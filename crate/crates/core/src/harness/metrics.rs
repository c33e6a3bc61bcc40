//! Error measures between nodal fields.

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::sparse::quadratic_form;

fn weighted_relative(u: &DVector<f64>, u_ref: &DVector<f64>, w: &CsrMatrix<f64>, what: &str) -> Result<f64> {
    if u.len() != u_ref.len() || w.nrows() != u.len() {
        return Err(Error::Data(format!(
            "{what}: fields of length {} and {} against a {}x{} matrix",
            u.len(),
            u_ref.len(),
            w.nrows(),
            w.ncols()
        )));
    }
    let denom = quadratic_form(w, u_ref.as_slice());
    if !(denom > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let diff = u - u_ref;
    Ok((quadratic_form(w, diff.as_slice()).max(0.0) / denom).sqrt())
}

/// `‖u − u_ref‖_M / ‖u_ref‖_M`.
pub fn relative_l2_error(u: &DVector<f64>, u_ref: &DVector<f64>, mass: &CsrMatrix<f64>) -> Result<f64> {
    weighted_relative(u, u_ref, mass, "relative L2 error")
}

/// `‖u − u_ref‖_A / ‖u_ref‖_A`. `A` is only a seminorm on fields that are
/// not zero on the boundary; constants lie in its kernel.
pub fn relative_energy_error(u: &DVector<f64>, u_ref: &DVector<f64>, stiffness: &CsrMatrix<f64>) -> Result<f64> {
    weighted_relative(u, u_ref, stiffness, "relative energy error")
}

/// Square root of the relative L2 distance from the ensemble mean.
pub fn deviation(u: &DVector<f64>, mean: &DVector<f64>, mass: &CsrMatrix<f64>) -> Result<f64> {
    Ok(weighted_relative(u, mean, mass, "deviation")?.sqrt())
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub step: usize,
    pub t: f64,
    pub rel_l2: f64,
    pub rel_energy: f64,
    pub deviation: f64,
}

/// Ensemble mean per level, summed in slice order.
pub fn ensemble_mean(states: &[&[DVector<f64>]]) -> Result<Vec<DVector<f64>>> {
    let first = states
        .first()
        .ok_or_else(|| Error::Data("empty ensemble".into()))?;
    let k = states.len() as f64;
    (0..first.len())
        .map(|lvl| {
            let mut acc = DVector::zeros(first[lvl].len());
            for s in states {
                acc += s.get(lvl).ok_or_else(|| Error::Data(format!("trajectory has no level {lvl}")))?;
            }
            Ok(acc / k)
        })
        .collect()
}

/// A zero reference gives NaN rather than an error so one degenerate level
/// (e.g. a zero initial field) does not void a whole series.
pub(crate) fn or_nan(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::ZeroNorm) => Ok(f64::NAN),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sparse::to_dense;
    use crate::fem::{OperatorSet, PermeabilityField};
    use crate::grid::StructuredMesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ops() -> OperatorSet {
        let mesh = StructuredMesh::new(6, 6, 2, 2).unwrap();
        let kappa = PermeabilityField::new(6, 6, (0..36).map(|k| 1.0 + (k % 5) as f64).collect()).unwrap();
        OperatorSet::assemble(&mesh, &kappa).unwrap()
    }

    #[test]
    fn identity_and_homogeneity() {
        let ops = ops();
        let u = DVector::from_fn(49, |i, _| (i as f64 * 0.3).sin());
        assert_eq!(relative_l2_error(&u, &u, &ops.mass).unwrap(), 0.0);
        assert_eq!(relative_energy_error(&u, &u, &ops.stiffness).unwrap(), 0.0);
        assert!((relative_l2_error(&(2.0 * &u), &u, &ops.mass).unwrap() - 1.0).abs() < 1e-14);
        assert!((relative_energy_error(&(2.0 * &u), &u, &ops.stiffness).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_weighted_norm() {
        let ops = ops();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = DVector::from_fn(49, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(49, |_, _| rng.random_range(-1.0..1.0));
        for (w, got) in [
            (to_dense(&ops.mass), relative_l2_error(&u, &v, &ops.mass).unwrap()),
            (to_dense(&ops.stiffness), relative_energy_error(&u, &v, &ops.stiffness).unwrap()),
        ] {
            let d = &u - &v;
            let oracle = (d.dot(&(&w * &d)) / v.dot(&(&w * &v))).sqrt();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_shift_is_invisible_to_energy() {
        let ops = ops();
        let u = DVector::from_fn(49, |i, _| (i as f64).cos());
        let shifted = u.add_scalar(3.0);
        assert!(relative_energy_error(&shifted, &u, &ops.stiffness).unwrap() < 1e-12);
        assert!(relative_l2_error(&shifted, &u, &ops.mass).unwrap() > 0.1);
    }

    #[test]
    fn deviation_takes_square_root() {
        let ops = ops();
        let mean = DVector::from_fn(49, |i, _| 1.0 + i as f64);
        let u = 1.25 * &mean;
        assert!((deviation(&u, &mean, &ops.mass).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(deviation(&mean, &mean, &ops.mass).unwrap(), 0.0);
    }

    #[test]
    fn zero_reference_is_an_error() {
        let ops = ops();
        let z = DVector::zeros(49);
        let u = DVector::from_element(49, 1.0);
        assert!(matches!(relative_l2_error(&u, &z, &ops.mass), Err(Error::ZeroNorm)));
        assert!(matches!(deviation(&u, &z, &ops.mass), Err(Error::ZeroNorm)));
        assert!(or_nan(relative_l2_error(&u, &z, &ops.mass)).unwrap().is_nan());
    }

    #[test]
    fn mean_sums_in_order() {
        let a = vec![DVector::from_element(2, 1.0), DVector::from_element(2, 3.0)];
        let b = vec![DVector::from_element(2, 3.0), DVector::from_element(2, 5.0)];
        let m = ensemble_mean(&[&a, &b]).unwrap();
        assert_eq!(m[0], DVector::from_element(2, 2.0));
        assert_eq!(m[1], DVector::from_element(2, 4.0));
    }
}
