//! Reduction of the nonlinear terms: POD, DEIM, the online basis update and
//! the coarse-space systems that consume them.

pub mod archive;
pub mod deim;
pub mod offline;
pub mod online;
pub mod pod;
pub mod reduced;

pub use archive::{read_snapshot_archive, write_snapshot_archive};
pub use deim::{deim_apply, deim_points, DeimModel};
pub use offline::{
    build_offline_model, mean_states, OfflineModel, Provenance, SnapshotCase, SnapshotMatrix, SnapshotWindow,
};
pub use online::{online_update, online_update_from_evaluations, OnlineUpdate, OnlineUpdateRecord};
pub use pod::{pod, Pod, PodTarget};
pub use reduced::{reduced_nonlinear_terms, NonlinearTerms, ReducedDeim, ReducedSystem, ReducedTerms};
