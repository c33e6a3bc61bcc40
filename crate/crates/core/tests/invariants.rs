use nalgebra::DMatrix;
use proptest::prelude::*;

use msdeim::grid::StructuredMesh;
use msdeim::rom::{online_update_from_evaluations, pod, DeimModel, PodTarget};

fn matrix(rows: usize, cols: usize, seed: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| seed[(i * cols + j) % seed.len()] + 0.01 * ((i * 7 + j * 3) as f64).sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn node_and_cell_indexing_round_trips(nx in 1usize..6, ny in 1usize..6, kx in 1usize..4, ky in 1usize..4) {
        let mesh = StructuredMesh::new(nx * kx, ny * ky, nx, ny).unwrap();
        for id in 0..mesh.node_count() {
            let (i, j) = mesh.node_ij(id);
            prop_assert_eq!(mesh.node_id(i, j), id);
        }
        let mut seen = vec![0usize; mesh.cell_count()];
        for b in 0..mesh.block_count() {
            for c in mesh.block_cells(b) {
                prop_assert_eq!(mesh.block_of_cell(c), b);
                seen[c] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        prop_assert_eq!(mesh.boundary_nodes().len() + mesh.interior_nodes().len(), mesh.node_count());
    }

    #[test]
    fn deim_is_a_projection(seed in prop::collection::vec(-1.0f64..1.0, 40..80), m in 1usize..6) {
        let u = matrix(30, m, &seed).qr().q();
        let model = DeimModel::new(u).unwrap();
        let f = nalgebra::DVector::from_fn(30, |i, _| seed[i % seed.len()]);
        let once = model.approximate(&f);
        let twice = model.approximate(&once);
        prop_assert!((&once - &twice).amax() <= 1e-9 * (1.0 + once.amax()));
    }

    #[test]
    fn online_update_keeps_sampled_rows(seed in prop::collection::vec(-1.0f64..1.0, 60..120)) {
        let u = matrix(25, 4, &seed).qr().q();
        let model = DeimModel::new(u).unwrap();
        let f = matrix(25, 9, &seed[3..]);
        let up = online_update_from_evaluations(&model, &f).unwrap();
        for &p in model.points() {
            for j in 0..4 {
                let d = (up.model.basis()[(p, j)] - model.basis()[(p, j)]).abs();
                prop_assert!(d <= 1e-9, "row {} moved by {}", p, d);
            }
        }
    }

    #[test]
    fn pod_error_is_discarded_energy(seed in prop::collection::vec(-1.0f64..1.0, 50..90), r in 1usize..5) {
        let s = matrix(20, 8, &seed);
        let p = pod(&s, PodTarget::Rank(r)).unwrap();
        let proj = &p.basis * (p.basis.transpose() * &s);
        let err = (&s - proj).norm_squared();
        prop_assert!((err - p.discarded_energy).abs() <= 1e-9 * (1.0 + err));
        let gram = p.basis.transpose() * &p.basis;
        prop_assert!((gram - DMatrix::identity(r, r)).amax() <= 1e-10);
    }
}
