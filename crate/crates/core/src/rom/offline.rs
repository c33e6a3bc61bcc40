//! Offline DEIM models built from the mean state of a trajectory ensemble.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::deim::DeimModel;
use super::pod::{pod, PodTarget};
use crate::error::{Error, Result};
use crate::integrator::Nonlinearity;

/// Time levels `start, start + stride, …` up to and including `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotWindow {
    pub start: usize,
    pub end: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl SnapshotWindow {
    pub fn new(start: usize, end: usize, stride: usize) -> Result<Self> {
        if start > end || stride == 0 {
            return Err(Error::Config(format!(
                "invalid snapshot window {start}..={end} with stride {stride}"
            )));
        }
        Ok(Self { start, end, stride })
    }

    pub fn levels(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.stride).collect()
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) / self.stride + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check(&self, steps: usize) -> Result<()> {
        if self.end > steps {
            return Err(Error::Config(format!(
                "snapshot window ends at level {} but the time grid has {steps} steps",
                self.end
            )));
        }
        Ok(())
    }
}

/// Offline/online window pairs of the snapshot study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotCase {
    /// Offline and online data from the first half of the interval.
    #[serde(rename = "I")]
    First,
    /// Offline data from the whole interval, online data from the first half.
    #[serde(rename = "II")]
    Second,
    /// Offline data from the first half, online data from the whole interval
    /// sampled at every other level so the column count matches case I.
    #[serde(rename = "III")]
    Third,
}

impl SnapshotCase {
    /// `(offline window, online window)` for a grid with `steps` steps.
    pub fn windows(&self, steps: usize) -> (SnapshotWindow, SnapshotWindow) {
        let half = SnapshotWindow {
            start: 0,
            end: steps / 2,
            stride: 1,
        };
        let full = SnapshotWindow {
            start: 0,
            end: steps,
            stride: 1,
        };
        match self {
            SnapshotCase::First => (half, half),
            SnapshotCase::Second => (full, half),
            SnapshotCase::Third => (half, SnapshotWindow { stride: 2, ..full }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    SingleTrajectory,
    MeanOfTrajectories { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    /// `n × M`, one column per window level.
    pub data: DMatrix<f64>,
    pub window: SnapshotWindow,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct OfflineModel {
    pub drift: DeimModel,
    /// `None` when the diffusion coefficient is identically zero.
    pub diffusion: Option<DeimModel>,
    pub drift_snapshots: SnapshotMatrix,
    pub diffusion_snapshots: SnapshotMatrix,
    /// Mean states at the window levels.
    pub mean_states: Vec<DVector<f64>>,
}

/// Mean over trajectories of the states at each level of `window`, summed in
/// trajectory order.
pub fn mean_states(ensemble: &[&[DVector<f64>]], window: &SnapshotWindow) -> Result<Vec<DVector<f64>>> {
    if ensemble.is_empty() {
        return Err(Error::Data("offline model needs at least one trajectory".into()));
    }
    let k = ensemble.len() as f64;
    window
        .levels()
        .into_iter()
        .map(|lvl| {
            let mut acc = DVector::zeros(ensemble[0][0].len());
            for traj in ensemble {
                let s = traj.get(lvl).ok_or_else(|| {
                    Error::Data(format!("trajectory has no state at level {lvl}"))
                })?;
                acc += s;
            }
            Ok(acc / k)
        })
        .collect()
}

/// Snapshot matrix of `f` evaluated at the given states.
pub fn evaluate_snapshots(
    f: &Nonlinearity,
    states: &[DVector<f64>],
    aux: Option<&[DVector<f64>]>,
) -> DMatrix<f64> {
    let n = states[0].len();
    let mut out = DMatrix::zeros(n, states.len());
    for (k, s) in states.iter().enumerate() {
        out.set_column(k, &f.apply(s, aux.map(|a| &a[k])));
    }
    out
}

/// Mean states over `ensemble` on `window`, snapshots `f(mean)` and
/// `g(mean)`, then POD and greedy points. The drift model has exactly `m`
/// columns; the diffusion model is capped at its snapshot rank.
pub fn build_offline_model(
    ensemble: &[&[DVector<f64>]],
    aux_ensemble: Option<&[&[DVector<f64>]]>,
    window: SnapshotWindow,
    m: usize,
    drift: &Nonlinearity,
    diffusion: &Nonlinearity,
) -> Result<OfflineModel> {
    let states = mean_states(ensemble, &window)?;
    let aux = aux_ensemble.map(|a| mean_states(a, &window)).transpose()?;
    let provenance = if ensemble.len() == 1 {
        Provenance::SingleTrajectory
    } else {
        Provenance::MeanOfTrajectories {
            count: ensemble.len(),
        }
    };
    let fs = evaluate_snapshots(drift, &states, aux.as_deref());
    let gs = evaluate_snapshots(diffusion, &states, aux.as_deref());
    let f_pod = pod(&fs, PodTarget::Rank(m))?;
    let drift_model = DeimModel::new(f_pod.basis)?;
    let diffusion_model = if diffusion.is_zero() {
        None
    } else {
        let rank = pod(&gs, PodTarget::Rank(0))?.rank;
        if rank == 0 {
            None
        } else {
            let g_pod = pod(&gs, PodTarget::Rank(m.min(rank)))?;
            Some(DeimModel::new(g_pod.basis)?)
        }
    };
    Ok(OfflineModel {
        drift: drift_model,
        diffusion: diffusion_model,
        drift_snapshots: SnapshotMatrix {
            data: fs,
            window,
            provenance: provenance.clone(),
        },
        diffusion_snapshots: SnapshotMatrix {
            data: gs,
            window,
            provenance,
        },
        mean_states: states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble() -> Vec<Vec<DVector<f64>>> {
        (0..3)
            .map(|t| {
                (0..=6)
                    .map(|lvl| {
                        DVector::from_fn(10, |i, _| {
                            ((i + 1) as f64 * 0.3 * (lvl as f64 + 1.0)).sin() * (1.0 + 0.2 * t as f64)
                        })
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn windows_of_the_three_cases() {
        let (off, on) = SnapshotCase::First.windows(100);
        assert_eq!((off.levels().len(), on.levels().len()), (51, 51));
        let (off, on) = SnapshotCase::Second.windows(100);
        assert_eq!((off.end, on.end), (100, 50));
        let (off, on) = SnapshotCase::Third.windows(100);
        assert_eq!(off.end, 50);
        assert_eq!(on.levels().len(), 51);
        assert_eq!(on.levels().last(), Some(&100));
        assert!(SnapshotWindow::new(3, 2, 1).is_err());
        assert!(SnapshotWindow::new(0, 2, 0).is_err());
    }

    #[test]
    fn single_trajectory_mean_is_itself() {
        let e = ensemble();
        let w = SnapshotWindow::new(0, 6, 1).unwrap();
        let means = mean_states(&[&e[1]], &w).unwrap();
        for (a, b) in means.iter().zip(&e[1]) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn snapshots_are_nonlinearity_of_mean_state() {
        let e = ensemble();
        let refs: Vec<&[DVector<f64>]> = e.iter().map(|t| t.as_slice()).collect();
        let w = SnapshotWindow::new(1, 5, 2).unwrap();
        let f = Nonlinearity::Cosine { scale: 2.0 };
        let model = build_offline_model(&refs, None, w, 3, &f, &Nonlinearity::ShiftedSquare { shift: 2.0 }).unwrap();
        for (k, lvl) in w.levels().into_iter().enumerate() {
            let mean = (&e[0][lvl] + &e[1][lvl] + &e[2][lvl]) / 3.0;
            let of_mean = f.apply(&mean, None);
            let mean_of = (f.apply(&e[0][lvl], None) + f.apply(&e[1][lvl], None) + f.apply(&e[2][lvl], None)) / 3.0;
            let col = model.drift_snapshots.data.column(k).into_owned();
            assert!((&col - &of_mean).amax() < 1e-14);
            assert!((&col - &mean_of).amax() > 1e-3);
        }
        assert_eq!(model.drift.rank(), 3);
        assert_eq!(model.drift_snapshots.provenance, Provenance::MeanOfTrajectories { count: 3 });
    }

    #[test]
    fn rank_limits() {
        let e = ensemble();
        let refs: Vec<&[DVector<f64>]> = e.iter().map(|t| t.as_slice()).collect();
        let w = SnapshotWindow::new(0, 2, 1).unwrap();
        let f = Nonlinearity::Cosine { scale: 1.0 };
        match build_offline_model(&refs, None, w, 5, &f, &Nonlinearity::Zero) {
            Err(Error::RankExceeded { requested: 5, achievable }) => assert!(achievable <= 3),
            other => panic!("expected rank error, got {other:?}"),
        }
        // Constant diffusion has rank one snapshots.
        let model = build_offline_model(&refs, None, w, 2, &f, &Nonlinearity::Constant { value: 1.0 }).unwrap();
        assert_eq!(model.diffusion.unwrap().rank(), 1);
        let model = build_offline_model(&refs, None, w, 2, &f, &Nonlinearity::Zero).unwrap();
        assert!(model.diffusion.is_none());
    }
}
