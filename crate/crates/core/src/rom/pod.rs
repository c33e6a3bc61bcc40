//! Proper orthogonal decomposition by thin SVD.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative singular value cutoff used to decide the numerical rank.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PodTarget {
    Rank(usize),
    /// Smallest rank capturing at least this fraction of `Σ σ_k²`.
    Energy(f64),
}

#[derive(Debug, Clone)]
pub struct Pod {
    /// Orthonormal columns, each with its largest-magnitude entry positive.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// `Σ_{k>r} σ_k²`.
    pub discarded_energy: f64,
    /// Numerical rank of the snapshot matrix.
    pub rank: usize,
}

pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

pub fn pod(snapshots: &DMatrix<f64>, target: PodTarget) -> Result<Pod> {
    if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
        return Err(Error::Data("empty snapshot matrix".into()));
    }
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("snapshot matrix has non-finite entries".into()));
    }
    let svd = snapshots.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Linear("SVD did not return left vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let rank = numerical_rank(&sv);
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let r = match target {
        PodTarget::Rank(r) => {
            if r > rank {
                return Err(Error::RankExceeded {
                    requested: r,
                    achievable: rank,
                });
            }
            r
        }
        PodTarget::Energy(frac) => {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::Config(format!("energy fraction must lie in (0, 1], got {frac}")));
            }
            let mut acc = 0.0;
            let mut r = 0;
            while r < rank && acc < frac * total {
                acc += sv[r] * sv[r];
                r += 1;
            }
            r.max(1).min(rank.max(1))
        }
    };
    let mut basis = DMatrix::from_fn(snapshots.nrows(), r, |i, k| u[(i, order[k])]);
    for mut col in basis.column_iter_mut() {
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    let discarded_energy = sv[r..].iter().map(|s| s * s).sum();
    Ok(Pod {
        basis,
        singular_values: sv,
        discarded_energy,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_by_hand() {
        let y = DMatrix::from_column_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let p = pod(&y, PodTarget::Rank(1)).unwrap();
        assert!((p.basis[(0, 0)] - 0.6).abs() < 1e-14);
        assert!((p.basis[(1, 0)] - 0.8).abs() < 1e-14);
        assert!(p.discarded_energy.abs() < 1e-20);
        assert!(matches!(
            pod(&y, PodTarget::Rank(2)),
            Err(Error::RankExceeded { requested: 2, achievable: 1 })
        ));
    }

    #[test]
    fn orthogonal_columns_reconstruct_exactly() {
        let y = DMatrix::from_column_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 0.0, -5.0]);
        let p = pod(&y, PodTarget::Rank(2)).unwrap();
        let rec = &p.basis * p.basis.transpose() * &y;
        assert!((rec - y).amax() < 1e-14);
    }

    #[test]
    fn discarded_energy_identity() {
        let y = random(8, 5, 1);
        let oracle = y.clone().svd(false, false).singular_values;
        let mut sv: Vec<f64> = oracle.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for r in 1..=5 {
            let p = pod(&y, PodTarget::Rank(r)).unwrap();
            let resid = &y - &p.basis * (p.basis.transpose() * &y);
            let want: f64 = sv[r..].iter().map(|s| s * s).sum();
            assert!((resid.norm_squared() - want).abs() < 1e-10);
            assert!((p.discarded_energy - want).abs() < 1e-10);
        }
    }

    #[test]
    fn pod_beats_random_subspaces() {
        let y = random(12, 6, 2);
        let p = pod(&y, PodTarget::Rank(3)).unwrap();
        let best = (&y - &p.basis * (p.basis.transpose() * &y)).norm();
        for seed in 0..20 {
            let q = random(12, 3, 100 + seed).qr().q();
            let e = (&y - &q * (q.transpose() * &y)).norm();
            assert!(best <= e + 1e-12);
        }
    }

    #[test]
    fn energy_target() {
        let y = DMatrix::from_column_slice(3, 3, &[10.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.1]);
        assert_eq!(pod(&y, PodTarget::Energy(0.9)).unwrap().basis.ncols(), 1);
        assert_eq!(pod(&y, PodTarget::Energy(0.999)).unwrap().basis.ncols(), 2);
        assert_eq!(pod(&y, PodTarget::Energy(1.0)).unwrap().basis.ncols(), 3);
    }
}
