//! Fine-grid semilinear system on interior unknowns and the reference solver.

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;

use super::sparse::{add_scaled, spmv, submatrix, LuPattern};
use super::OperatorSet;
use crate::error::{Error, Result};
use crate::integrator::{
    run_trajectory, Nonlinearity, Problem, SemilinearSystem, SolverMode, Trajectory,
};
use crate::noise::NoisePath;

/// `M ẋ + A x = (M f(u))_I + (M (g(u) ⊙ Ẇ))_I` restricted to interior nodes;
/// nonlinear terms see the full nodal field with zero boundary values.
pub struct FineSystem<'a> {
    ops: &'a OperatorSet,
    drift: Nonlinearity,
    diffusion: Nonlinearity,
    mass_ii: CsrMatrix<f64>,
    stiff_ii: CsrMatrix<f64>,
    /// Interior rows of `M` over all columns.
    mass_i: CsrMatrix<f64>,
    /// `M_II` on the pattern of `M_II + A_II` (entries aligned with `base`).
    mass_aligned: CsrMatrix<f64>,
    pattern: LuPattern,
    evaluations: u64,
}

impl<'a> FineSystem<'a> {
    pub fn new(ops: &'a OperatorSet, drift: Nonlinearity, diffusion: Nonlinearity) -> Result<Self> {
        let all: Vec<usize> = (0..ops.node_count()).collect();
        let mass_ii = submatrix(&ops.mass, &ops.interior, &ops.interior);
        let stiff_ii = submatrix(&ops.stiffness, &ops.interior, &ops.interior);
        let mass_i = submatrix(&ops.mass, &ops.interior, &all);
        let base = add_scaled(&mass_ii, 1.0, &stiff_ii);
        let mass_aligned = add_scaled(&mass_ii, 0.0, &stiff_ii);
        if base.col_indices() != mass_aligned.col_indices() || base.row_offsets() != mass_aligned.row_offsets() {
            return Err(Error::Linear("mass and stiffness patterns could not be aligned".into()));
        }
        let pattern = LuPattern::analyze(&base)?;
        Ok(Self {
            ops,
            drift,
            diffusion,
            mass_ii,
            stiff_ii,
            mass_i,
            mass_aligned,
            pattern,
            evaluations: 0,
        })
    }

    pub fn expand(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.ops.node_count());
        for (&node, &v) in self.ops.interior.iter().zip(x.iter()) {
            full[node] = v;
        }
        full
    }

    pub fn restrict(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.ops.interior.len(), self.ops.interior.iter().map(|&i| u[i]))
    }

    /// Scalar drift evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

impl SemilinearSystem for FineSystem<'_> {
    fn dim(&self) -> usize {
        self.ops.interior.len()
    }

    fn mass_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        spmv(&self.mass_ii, x.as_slice())
    }

    fn stiffness_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        spmv(&self.stiff_ii, x.as_slice())
    }

    fn drift(&mut self, x: &DVector<f64>, aux: Option<&DVector<f64>>) -> DVector<f64> {
        if self.drift.is_zero() {
            return DVector::zeros(self.dim());
        }
        let u = self.expand(x);
        self.evaluations += u.len() as u64;
        spmv(&self.mass_i, self.drift.apply(&u, aux).as_slice())
    }

    fn noise_forcing(&mut self, x: &DVector<f64>, aux: Option<&DVector<f64>>, dw: &DVector<f64>) -> DVector<f64> {
        if self.diffusion.is_zero() {
            return DVector::zeros(self.dim());
        }
        let u = self.expand(x);
        let gw = self.diffusion.apply(&u, aux).component_mul(dw);
        spmv(&self.mass_i, gw.as_slice())
    }

    fn solve_jacobian(
        &mut self,
        x: &DVector<f64>,
        aux: Option<&DVector<f64>>,
        dt: f64,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let interior = &self.ops.interior;
        let fp: Vec<f64> = if self.drift.is_zero() {
            vec![0.0; interior.len()]
        } else {
            interior
                .iter()
                .zip(x.iter())
                .map(|(&node, &u)| self.drift.deriv(u, aux.map_or(0.0, |v| v[node])))
                .collect()
        };
        // J = M_II + Δt A_II − Δt M_II diag(f'), assembled on the shared pattern.
        let mut jac = add_scaled(&self.mass_ii, dt, &self.stiff_ii);
        {
            let cols: Vec<usize> = jac.col_indices().to_vec();
            let m_vals = self.mass_aligned.values();
            for (k, v) in jac.values_mut().iter_mut().enumerate() {
                *v -= dt * m_vals[k] * fp[cols[k]];
            }
        }
        let lu = self.pattern.factor(&jac)?;
        let mut sol = rhs.as_slice().to_vec();
        lu.solve_in_place(&mut sol);
        Ok(DVector::from_vec(sol))
    }
}

/// Fine-grid reference trajectory for one noise path.
pub fn solve_reference(problem: &Problem, noise: &NoisePath) -> Result<Trajectory> {
    run_trajectory(problem, noise, SolverMode::FineReference, None)
}
