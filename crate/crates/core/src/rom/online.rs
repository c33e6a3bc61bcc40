//! Per-trajectory correction of an offline DEIM basis with the interpolation
//! points held fixed.

use nalgebra::DMatrix;

use super::deim::{select_rows, DeimModel};
use crate::error::{Error, Result};

/// Relative singular value cutoff for the pseudo-inverse of `C`.
pub const PINV_TOL: f64 = 1e-10;
/// Updates whose `PᵀŨ` is worse conditioned than this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct OnlineUpdateRecord {
    /// `C`, `m × M`.
    pub coefficients: DMatrix<f64>,
    /// `R = ŪC − F`, `n × M`.
    pub residual: DMatrix<f64>,
    /// `ΔU = −R C⁺`.
    pub increment: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct OnlineUpdate {
    /// The updated model, or a copy of the input when the update is rejected.
    pub model: DeimModel,
    pub record: OnlineUpdateRecord,
    pub accepted: bool,
    /// Condition number of `PᵀŨ` (of `PᵀŪ` when rejected).
    pub condition: f64,
}

/// Moore–Penrose pseudo-inverse with a relative cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = rel_tol * smax;
    if smax == 0.0 {
        return Ok(DMatrix::zeros(a.ncols(), a.nrows()));
    }
    svd.pseudo_inverse(eps).map_err(|e| Error::Linear(e.to_string()))
}

/// `Ũ = Ū − (ŪC − F) C⁺` with the points of `model` retained.
pub fn online_update(model: &DeimModel, c: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<OnlineUpdate> {
    let ubar = model.basis();
    if c.nrows() != ubar.ncols() || f.nrows() != ubar.nrows() || c.ncols() != f.ncols() {
        return Err(Error::Data(format!(
            "online update shapes: U {}x{}, C {}x{}, F {}x{}",
            ubar.nrows(),
            ubar.ncols(),
            c.nrows(),
            c.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let residual = ubar * c - f;
    let increment = -(&residual * pseudo_inverse(c, PINV_TOL)?);
    let record = OnlineUpdateRecord {
        coefficients: c.clone(),
        residual,
        increment,
    };
    let updated = ubar + &record.increment;
    let cond = super::deim::condition_number(&select_rows(&updated, model.points()));
    if !(cond <= MAX_CONDITION) {
        return Ok(OnlineUpdate {
            model: model.clone(),
            record,
            accepted: false,
            condition: model.condition(),
        });
    }
    let model = DeimModel::with_points(updated, model.points().to_vec())?;
    Ok(OnlineUpdate {
        condition: model.condition(),
        model,
        record,
        accepted: true,
    })
}

/// Builds `C = (PᵀŪ)⁻¹ PᵀF` from full evaluations along a new trajectory and
/// applies [`online_update`].
pub fn online_update_from_evaluations(model: &DeimModel, f: &DMatrix<f64>) -> Result<OnlineUpdate> {
    let fp = select_rows(f, model.points());
    let c = model.coefficient_matrix(&fp);
    online_update(model, &c, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_example() {
        let model = DeimModel::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let f = DMatrix::from_element(2, 2, 1.0);
        let up = online_update(&model, &c, &f).unwrap();
        assert!(up.accepted);
        assert_eq!(up.record.residual, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, -1.0]));
        assert!((&up.record.increment - DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).amax() < 1e-15);
        assert!((up.model.basis() - DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).amax() < 1e-15);
        assert!((up.model.basis() * &c - &f).amax() < 1e-15);
        assert_eq!(up.model.points(), model.points());
    }

    #[test]
    fn zero_residual_leaves_basis_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let model = DeimModel::new(u.clone()).unwrap();
        let c = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let f = &u * &c;
        let up = online_update(&model, &c, &f).unwrap();
        assert!(up.record.increment.amax() < 1e-14);
        assert!((up.model.basis() - u).amax() < 1e-14);
    }

    #[test]
    fn residual_rows_orthogonal_to_row_space_of_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let model = DeimModel::new(u).unwrap();
        let c = DMatrix::from_fn(4, 9, |_, _| rng.random_range(-1.0..1.0));
        let f = DMatrix::from_fn(30, 9, |_, _| rng.random_range(-1.0..1.0));
        let up = online_update(&model, &c, &f).unwrap();
        let new_res = up.model.basis() * &c - &f;
        assert!((new_res * c.transpose()).amax() < 1e-10);
    }

    #[test]
    fn pseudo_inverse_handles_rank_deficiency() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let pinv = pseudo_inverse(&c, PINV_TOL).unwrap();
        assert!((&c * &pinv * &c - &c).amax() < 1e-12);
        assert!((&pinv * &c * &pinv - &pinv).amax() < 1e-12);
    }

    #[test]
    fn evaluations_route_has_zero_sampled_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DMatrix::from_fn(25, 3, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let model = DeimModel::new(u).unwrap();
        let f = DMatrix::from_fn(25, 4, |_, _| rng.random_range(-1.0..1.0));
        let up = online_update_from_evaluations(&model, &f).unwrap();
        let pr = select_rows(&up.record.residual, model.points());
        assert!(pr.amax() < 1e-12);
        // M > m here, so training columns are matched only in the
        // least-squares sense; the full residual still cannot grow.
        let before = (model.basis() * &up.record.coefficients - &f).norm();
        let after = (up.model.basis() * &up.record.coefficients - &f).norm();
        assert!(after <= before + 1e-12);
    }
}
