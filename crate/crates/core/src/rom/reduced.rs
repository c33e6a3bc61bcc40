//! Coarse-space semilinear systems with exact (Galerkin) or interpolated
//! nonlinear terms.

use nalgebra::{DMatrix, DVector};

use super::deim::{select_rows, DeimModel};
use crate::error::{Error, Result};
use crate::integrator::{Nonlinearity, SemilinearSystem};
use crate::msbasis::CoarseOperators;

/// A DEIM model folded into the coarse space: `E = (MR)ᵀ U (PᵀU)⁻¹`, the
/// nodal interpolant `U (PᵀU)⁻¹` and the sampled rows `PᵀR`.
#[derive(Debug, Clone)]
pub struct ReducedDeim {
    pub points: Vec<usize>,
    pub projector: DMatrix<f64>,
    pub interpolant: DMatrix<f64>,
    pub rows: DMatrix<f64>,
}

impl ReducedDeim {
    pub fn new(model: &DeimModel, basis: &DMatrix<f64>, coarse: &CoarseOperators) -> Self {
        let x = coarse.mass_basis.tr_mul(model.basis());
        Self {
            points: model.points().to_vec(),
            projector: model.right_solve(&x),
            interpolant: model.right_solve(model.basis()),
            rows: select_rows(basis, model.points()),
        }
    }

    fn sample(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.points.len(), self.points.iter().map(|&i| v[i]))
    }
}

#[derive(Debug, Clone)]
pub enum NonlinearTerms {
    Galerkin,
    Deim {
        drift: ReducedDeim,
        diffusion: Option<ReducedDeim>,
    },
}

/// Reduced drift, noise forcing and drift Jacobian at coarse state `c`.
#[derive(Debug, Clone)]
pub struct ReducedTerms {
    pub drift: DVector<f64>,
    pub noise: DVector<f64>,
    /// `∂ drift / ∂ c`.
    pub jacobian: DMatrix<f64>,
}

pub struct ReducedSystem<'a> {
    basis: &'a DMatrix<f64>,
    coarse: &'a CoarseOperators,
    drift: Nonlinearity,
    diffusion: Nonlinearity,
    terms: NonlinearTerms,
    /// `(MR)ᵀ`, stored so the Galerkin products run as plain matrix products.
    projector: DMatrix<f64>,
    evaluations: u64,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(
        basis: &'a DMatrix<f64>,
        coarse: &'a CoarseOperators,
        drift: Nonlinearity,
        diffusion: Nonlinearity,
        terms: NonlinearTerms,
    ) -> Self {
        Self {
            basis,
            coarse,
            drift,
            diffusion,
            terms,
            projector: coarse.mass_basis.transpose(),
            evaluations: 0,
        }
    }

    /// Scalar drift evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn sampled_aux(aux: Option<&DVector<f64>>, d: &ReducedDeim) -> Option<DVector<f64>> {
        aux.map(|v| d.sample(v))
    }

    fn drift_jacobian(&self, c: &DVector<f64>, aux: Option<&DVector<f64>>) -> DMatrix<f64> {
        match &self.terms {
            NonlinearTerms::Galerkin => {
                let u = self.basis * c;
                let fp = self.drift.apply_deriv(&u, aux);
                let mut dr = self.basis.clone();
                for (mut row, &s) in dr.row_iter_mut().zip(fp.iter()) {
                    row *= s;
                }
                &self.projector * dr
            }
            NonlinearTerms::Deim { drift, .. } => {
                let up = &drift.rows * c;
                let fp = self.drift.apply_deriv(&up, Self::sampled_aux(aux, drift).as_ref());
                let mut rows = drift.rows.clone();
                for (mut row, &s) in rows.row_iter_mut().zip(fp.iter()) {
                    row *= s;
                }
                &drift.projector * rows
            }
        }
    }
}

impl SemilinearSystem for ReducedSystem<'_> {
    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn mass_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.coarse.mass * x
    }

    fn stiffness_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.coarse.stiffness * x
    }

    fn drift(&mut self, c: &DVector<f64>, aux: Option<&DVector<f64>>) -> DVector<f64> {
        if self.drift.is_zero() {
            return DVector::zeros(self.dim());
        }
        match &self.terms {
            NonlinearTerms::Galerkin => {
                let u = self.basis * c;
                self.evaluations += u.len() as u64;
                &self.projector * self.drift.apply(&u, aux)
            }
            NonlinearTerms::Deim { drift, .. } => {
                let up = &drift.rows * c;
                self.evaluations += up.len() as u64;
                let fp = self.drift.apply(&up, Self::sampled_aux(aux, drift).as_ref());
                &drift.projector * fp
            }
        }
    }

    fn noise_forcing(&mut self, c: &DVector<f64>, aux: Option<&DVector<f64>>, dw: &DVector<f64>) -> DVector<f64> {
        if self.diffusion.is_zero() {
            return DVector::zeros(self.dim());
        }
        if let NonlinearTerms::Deim {
            diffusion: Some(g), ..
        } = &self.terms
        {
            // Interpolate g only; the increment is a rough field and is
            // applied to the interpolant nodewise.
            let up = &g.rows * c;
            let gp = self.diffusion.apply(&up, Self::sampled_aux(aux, g).as_ref());
            if dw.iter().all(|&w| w == dw[0]) {
                return &g.projector * (gp * dw[0]);
            }
            return &self.projector * (&g.interpolant * gp).component_mul(dw);
        }
        let u = self.basis * c;
        &self.projector * self.diffusion.apply(&u, aux).component_mul(dw)
    }

    fn solve_jacobian(
        &mut self,
        c: &DVector<f64>,
        aux: Option<&DVector<f64>>,
        dt: f64,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let mut j = &self.coarse.mass + dt * &self.coarse.stiffness;
        if !self.drift.is_zero() {
            j -= dt * self.drift_jacobian(c, aux);
        }
        j.lu()
            .solve(rhs)
            .ok_or_else(|| Error::Linear("singular reduced Newton matrix".into()))
    }
}

/// Reduced drift, noise forcing and drift Jacobian for one state, evaluated
/// through `system`'s nonlinear terms.
pub fn reduced_nonlinear_terms(
    system: &mut ReducedSystem<'_>,
    c: &DVector<f64>,
    aux: Option<&DVector<f64>>,
    dw: &DVector<f64>,
) -> ReducedTerms {
    ReducedTerms {
        drift: system.drift(c, aux),
        noise: system.noise_forcing(c, aux, dw),
        jacobian: system.drift_jacobian(c, aux),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{OperatorSet, PermeabilityField};
    use crate::grid::StructuredMesh;
    use crate::msbasis::{build_multiscale_space, BasisParams};

    fn fixture() -> (OperatorSet, DMatrix<f64>, CoarseOperators) {
        let mesh = StructuredMesh::new(8, 8, 2, 2).unwrap();
        let kappa = PermeabilityField::new(8, 8, (0..64).map(|k| if k % 7 == 0 { 50.0 } else { 1.0 }).collect()).unwrap();
        let ops = OperatorSet::assemble(&mesh, &kappa).unwrap();
        let space = build_multiscale_space(&mesh, &kappa, BasisParams { eigen_count: 2, layers: 1 }).unwrap();
        let coarse = space.coarse_operators(&ops);
        (ops, space.basis, coarse)
    }

    #[test]
    fn full_rank_deim_equals_galerkin() {
        let (ops, basis, coarse) = fixture();
        let n = ops.node_count();
        let model = DeimModel::new(DMatrix::identity(n, n)).unwrap();
        let f = Nonlinearity::Cosine { scale: 10.0 };
        let g = Nonlinearity::ShiftedSquare { shift: 2.0 };
        let deim = NonlinearTerms::Deim {
            drift: ReducedDeim::new(&model, &basis, &coarse),
            diffusion: Some(ReducedDeim::new(&model, &basis, &coarse)),
        };
        let mut exact = ReducedSystem::new(&basis, &coarse, f, g, NonlinearTerms::Galerkin);
        let mut reduced = ReducedSystem::new(&basis, &coarse, f, g, deim);
        let c = DVector::from_fn(basis.ncols(), |i, _| (i as f64).sin());
        let dw = DVector::from_fn(n, |i, _| 0.01 * (i as f64).cos());
        let a = reduced_nonlinear_terms(&mut exact, &c, None, &dw);
        let b = reduced_nonlinear_terms(&mut reduced, &c, None, &dw);
        assert!((&a.drift - &b.drift).amax() < 1e-10);
        assert!((&a.noise - &b.noise).amax() < 1e-10);
        assert!((&a.jacobian - &b.jacobian).amax() < 1e-10);
    }

    #[test]
    fn exact_g_model_reproduces_rough_noise() {
        let (ops, basis, coarse) = fixture();
        let n = ops.node_count();
        // g ≡ 3 is captured exactly by a single constant column.
        let model = DeimModel::new(DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt())).unwrap();
        let g = Nonlinearity::Constant { value: 3.0 };
        let terms = NonlinearTerms::Deim {
            drift: ReducedDeim::new(&model, &basis, &coarse),
            diffusion: Some(ReducedDeim::new(&model, &basis, &coarse)),
        };
        let mut exact = ReducedSystem::new(&basis, &coarse, Nonlinearity::Zero, g, NonlinearTerms::Galerkin);
        let mut reduced = ReducedSystem::new(&basis, &coarse, Nonlinearity::Zero, g, terms);
        let c = DVector::from_element(basis.ncols(), 0.1);
        let dw = DVector::from_fn(n, |i, _| if i % 3 == 0 { 0.02 } else { -0.01 * (i as f64).sin() });
        let a = exact.noise_forcing(&c, None, &dw);
        let b = reduced.noise_forcing(&c, None, &dw);
        assert!((&a - &b).amax() < 1e-12 * (1.0 + a.amax()));
        let flat = DVector::from_element(n, 0.05);
        assert!((exact.noise_forcing(&c, None, &flat) - reduced.noise_forcing(&c, None, &flat)).amax() < 1e-12);
    }

    #[test]
    fn deim_evaluates_only_sampled_rows() {
        let (ops, basis, coarse) = fixture();
        let n = ops.node_count();
        let u = DMatrix::from_fn(n, 4, |i, j| ((i * (j + 1)) as f64 * 0.37).sin());
        let model = DeimModel::new(u.qr().q()).unwrap();
        let terms = NonlinearTerms::Deim {
            drift: ReducedDeim::new(&model, &basis, &coarse),
            diffusion: None,
        };
        let mut sys = ReducedSystem::new(&basis, &coarse, Nonlinearity::Cosine { scale: 1.0 }, Nonlinearity::Zero, terms);
        let c = DVector::from_element(basis.ncols(), 0.3);
        sys.drift(&c, None);
        assert_eq!(sys.evaluations(), 4);
        let mut galerkin = ReducedSystem::new(&basis, &coarse, Nonlinearity::Cosine { scale: 1.0 }, Nonlinearity::Zero, NonlinearTerms::Galerkin);
        galerkin.drift(&c, None);
        assert_eq!(galerkin.evaluations(), n as u64);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let (_, basis, coarse) = fixture();
        let mut sys = ReducedSystem::new(&basis, &coarse, Nonlinearity::Cosine { scale: 3.0 }, Nonlinearity::Zero, NonlinearTerms::Galerkin);
        let c = DVector::from_fn(basis.ncols(), |i, _| 0.2 * i as f64);
        let j = sys.drift_jacobian(&c, None);
        let h = 1e-6;
        for k in 0..basis.ncols() {
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[k] += h;
            cm[k] -= h;
            let fd = (sys.drift(&cp, None) - sys.drift(&cm, None)) / (2.0 * h);
            assert!((fd - j.column(k)).amax() < 1e-6);
        }
    }
}
