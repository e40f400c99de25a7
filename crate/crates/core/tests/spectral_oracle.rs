use sgaae::spectral::{largest_eigenpairs, node_features, signed_normalized_laplacian, smallest_eigenpairs, FeatureConfig};
use sgaae::SignedGraph;

mod common;
use common::{dense_residual, dense_signed_laplacian, jacobi_eigen, oracle_graphs, random_signed_graph};

#[test]
fn lanczos_matches_dense_oracle() {
    for (name, g) in oracle_graphs() {
        let n = g.node_count();
        let dense = dense_signed_laplacian(&g);
        let sparse = signed_normalized_laplacian(&g);
        assert!((&sparse.to_dense() - &dense).iter().all(|d| d.abs() < 1e-15), "{name}: Laplacian");
        let (values, _) = jacobi_eigen(&dense);
        let d = 12.min(n - 1);
        let low = smallest_eigenpairs(&sparse, d, 1e-10, 7).unwrap();
        let high = largest_eigenpairs(&sparse, d, 1e-10, 7).unwrap();
        for (k, &mu) in low.eigenvalues.iter().enumerate() {
            assert!((mu - values[k]).abs() <= 1e-8, "{name}: low {k}: {mu} vs {}", values[k]);
            let v = low.matrix.column(k).to_vec();
            assert!(dense_residual(&dense, &v, mu) <= 1e-6, "{name}: low residual {k}");
        }
        for (k, &mu) in high.eigenvalues.iter().enumerate() {
            let want = values[n - d + k];
            assert!((mu - want).abs() <= 1e-8, "{name}: high {k}: {mu} vs {want}");
            let v = high.matrix.column(k).to_vec();
            assert!(dense_residual(&dense, &v, mu) <= 1e-6, "{name}: high residual {k}");
        }
        assert!(low.orthonormality_error() < 1e-8, "{name}");
        assert!(high.orthonormality_error() < 1e-8, "{name}");
    }
}

#[test]
fn two_node_cases_are_exact() {
    let friends = SignedGraph::new(2, [(0, 1, 1)]).unwrap();
    let foes = SignedGraph::new(2, [(0, 1, -1)]).unwrap();
    assert_eq!(signed_normalized_laplacian(&friends).to_dense(), ndarray::array![[1.0, -1.0], [-1.0, 1.0]]);
    assert_eq!(signed_normalized_laplacian(&foes).to_dense(), ndarray::array![[1.0, 1.0], [1.0, 1.0]]);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (g, kernel) in [(&friends, [h, h]), (&foes, [h, -h])] {
        let l = signed_normalized_laplacian(g);
        let low = smallest_eigenpairs(&l, 1, 1e-12, 0).unwrap();
        let high = largest_eigenpairs(&l, 1, 1e-12, 0).unwrap();
        assert!(low.eigenvalues[0].abs() < 1e-14);
        assert!((high.eigenvalues[0] - 2.0).abs() < 1e-14);
        let v = low.matrix.column(0);
        let overlap = v[0] * kernel[0] + v[1] * kernel[1];
        assert!((overlap.abs() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn relabeling_nodes_permutes_feature_rows() {
    let g = random_signed_graph(90, 0.08, 11);
    let cfg = FeatureConfig { dim: 6, seed: 2, ..Default::default() };
    let base = node_features(&g, &cfg).unwrap();
    let gaps = base.eigenvalues.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    assert!(gaps > 1e-3, "test graph needs a simple spectrum");
    let order: Vec<usize> = (0..90).map(|i| (i * 37 + 5) % 90).collect();
    let permuted = g.permuted(&order).unwrap();
    let moved = node_features(&permuted, &cfg).unwrap();
    let position = sgaae::graph::inverse_permutation(&order, 90).unwrap();
    for i in 0..90 {
        for k in 0..6 {
            let a = base.matrix[[i, k]];
            let b = moved.matrix[[position[i], k]];
            assert!((a - b).abs() < 1e-7, "node {i} column {k}: {a} vs {b}");
        }
    }
}
