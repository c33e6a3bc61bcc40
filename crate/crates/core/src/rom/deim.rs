//! Discrete empirical interpolation: greedy point selection and the oblique
//! projector `U (PᵀU)⁻¹ Pᵀ`.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Greedy interpolation indices for the columns of `u`.
pub fn deim_points(u: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = u.shape();
    if m == 0 || m > n {
        return Err(Error::Config(format!("cannot select {m} interpolation points from {n} rows")));
    }
    let mut p = vec![u.column(0).iamax()];
    for k in 1..m {
        let uk = u.column(k);
        let pu = DMatrix::from_fn(k, k, |i, j| u[(p[i], j)]);
        let rhs = DVector::from_fn(k, |i, _| uk[p[i]]);
        let c = pu.lu().solve(&rhs).ok_or_else(|| {
            Error::SingularInterpolation(format!("interpolation prefix of size {k} is singular"))
        })?;
        let r = uk - u.columns(0, k) * c;
        let idx = r.iamax();
        if r[idx] == 0.0 || p.contains(&idx) {
            return Err(Error::SingularInterpolation(format!(
                "column {k} is dependent on the previous ones"
            )));
        }
        p.push(idx);
    }
    Ok(p)
}

/// `‖PᵀU‖₂ ‖(PᵀU)⁻¹‖₂`.
pub fn condition_number(pu: &DMatrix<f64>) -> f64 {
    let sv = pu.clone().svd(false, false).singular_values;
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

#[derive(Debug, Clone)]
pub struct DeimModel {
    basis: DMatrix<f64>,
    points: Vec<usize>,
    /// Factorization of `PᵀU`.
    factor: LU<f64, Dyn, Dyn>,
    condition: f64,
}

impl DeimModel {
    /// Selects points greedily for `basis`.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let points = deim_points(&basis)?;
        Self::with_points(basis, points)
    }

    pub fn with_points(basis: DMatrix<f64>, points: Vec<usize>) -> Result<Self> {
        let (n, m) = basis.shape();
        if points.len() != m {
            return Err(Error::Config(format!("{} points for a basis with {m} columns", points.len())));
        }
        let mut sorted = points.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.last().is_some_and(|&l| l >= n) {
            return Err(Error::Config("interpolation points must be distinct and in range".into()));
        }
        let pu = select_rows(&basis, &points);
        let condition = condition_number(&pu);
        if !condition.is_finite() {
            return Err(Error::SingularInterpolation("PᵀU is singular".into()));
        }
        Ok(Self {
            factor: pu.lu(),
            basis,
            points,
            condition,
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Number of interpolation points `m`.
    pub fn rank(&self) -> usize {
        self.points.len()
    }

    /// Full dimension `n`.
    pub fn len(&self) -> usize {
        self.basis.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.nrows() == 0
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `Pᵀ f`.
    pub fn sample(&self, f: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.rank(), self.points.iter().map(|&i| f[i]))
    }

    /// `(PᵀU)⁻¹ fp`.
    pub fn coefficients(&self, fp: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(fp).expect("PᵀU was checked to be nonsingular")
    }

    /// `(PᵀU)⁻¹ Fp` for many samples at once.
    pub fn coefficient_matrix(&self, fp: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(fp).expect("PᵀU was checked to be nonsingular")
    }

    /// `U (PᵀU)⁻¹ fp` from sampled values only.
    pub fn reconstruct(&self, fp: &DVector<f64>) -> DVector<f64> {
        &self.basis * self.coefficients(fp)
    }

    /// `U (PᵀU)⁻¹ Pᵀ f`.
    pub fn approximate(&self, f: &DVector<f64>) -> DVector<f64> {
        self.reconstruct(&self.sample(f))
    }

    /// `X (PᵀU)⁻¹` for a left factor `X` with `m` columns, i.e. the reduced
    /// operator that maps sampled values to projected terms.
    pub fn right_solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        // X (PᵀU)⁻¹ = ((PᵀU)⁻ᵀ Xᵀ)ᵀ
        let pu_t = select_rows(&self.basis, &self.points).transpose();
        pu_t.lu()
            .solve(&x.transpose())
            .expect("PᵀU was checked to be nonsingular")
            .transpose()
    }
}

pub(crate) fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Free-function form of [`DeimModel::approximate`].
pub fn deim_apply(model: &DeimModel, f: &DVector<f64>) -> DVector<f64> {
    model.approximate(f)
}
