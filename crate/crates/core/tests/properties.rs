use dual_core::cluster::{kmeans, DEFAULT_MAX_ITER, DEFAULT_TOL};
use dual_core::dual::{score_samples, select_top_m};
use dual_core::Matrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn ranking_is_a_permutation_sorted_by_score(q in matrix(7, 7), p in matrix(7, 3)) {
        let mut q = q;
        q.zero_diagonal();
        let s = score_samples(&q, &p).unwrap();
        let mut seen = s.ranked_indices.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..7).collect::<Vec<_>>());
        for w in s.ranked_indices.windows(2) {
            let (a, b) = (s.combined_score[w[0]], s.combined_score[w[1]]);
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
        for v in s.q_hat.iter().chain(&s.p_hat) {
            prop_assert!((0.0..=1.0).contains(v));
        }
        let top = select_top_m(&s, 3).unwrap();
        prop_assert_eq!(&top[..], &s.ranked_indices[..3]);
    }

    #[test]
    fn ranking_ignores_positive_rescaling(q in matrix(6, 6), p in matrix(6, 2), c in 0.01f64..100.0) {
        let mut q = q;
        q.zero_diagonal();
        let a = score_samples(&q, &p).unwrap();
        let b = score_samples(&q.scale(c), &p.scale(c)).unwrap();
        for (x, y) in a.combined_score.iter().zip(&b.combined_score) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn kmeans_assigns_to_nearest_centroid(points in matrix(2, 30), k in 1usize..6, seed in 0u64..50) {
        let r = kmeans(&points, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        prop_assert_eq!(r.assignment.len(), 30);
        let mut inertia = 0.0;
        for j in 0..30 {
            let d = |c: usize| (0..2).map(|i| (points[(i, j)] - r.centroids[(i, c)]).powi(2)).sum::<f64>();
            let own = d(r.assignment[j]);
            inertia += own;
            for c in 0..k {
                prop_assert!(own <= d(c) + 1e-9);
            }
        }
        prop_assert!((inertia - r.inertia).abs() <= 1e-9 * inertia.max(1.0));
        for c in 0..k {
            prop_assert!(r.assignment.contains(&c));
        }
    }
}
