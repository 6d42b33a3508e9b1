//! Randomized property tests for structural invariants that should hold
//! for every input, not just hand-picked examples.

use proptest::prelude::*;

use mmcl_core::{
    evaluate, partition_queries, solve_assignment, CostMatrix, LossConfig, LossKind, Matrix,
};

/// A random cost matrix between 1x1 and 6x6 with values in [-2, 2], plus a
/// row permutation used to build a competing assignment.
fn cost_matrix() -> impl Strategy<Value = (CostMatrix, Vec<usize>)> {
    ((1usize..=6, 1usize..=6))
        .prop_flat_map(|(rows, cols)| {
            (
                Just(rows),
                Just(cols),
                proptest::collection::vec(-2.0f64..2.0, rows * cols),
                Just(()).prop_perturb(move |_, mut rng| {
                    // Fisher-Yates over the columns, seeded by proptest.
                    let mut perm: Vec<usize> = (0..cols).collect();
                    for i in (1..cols).rev() {
                        let j = rng.random_range(0..=i);
                        perm.swap(i, j);
                    }
                    perm
                }),
            )
        })
        .prop_map(|(rows, cols, data, perm)| {
            let mut m = CostMatrix::zeros(rows, cols);
            m.data_mut().copy_from_slice(&data);
            (m, perm)
        })
}

/// A random query matrix with a compatible partition.
fn query_setup() -> impl Strategy<Value = (Matrix, usize, usize)> {
    (4usize..=12, 2usize..=4, 2usize..=6)
        .prop_flat_map(|(n, k, d)| {
            (Just(n), Just(k.min(n)), Just(d), proptest::collection::vec(-1.0f64..1.0, n * d))
        })
        .prop_map(|(n, k, d, data)| {
            let mut q = Matrix::zeros(n, d);
            q.data_mut().copy_from_slice(&data);
            (q, n, k)
        })
}

proptest! {
    /// The solver's matching is structurally valid and never beaten by a
    /// competing permutation assignment.
    #[test]
    fn matcher_is_valid_and_not_beaten_by_permutations((costs, perm) in cost_matrix()) {
        let a = solve_assignment(&costs).unwrap();
        let expect = costs.rows().min(costs.cols());
        prop_assert_eq!(a.pairs.len(), expect);

        let mut rows_seen = vec![false; costs.rows()];
        let mut cols_seen = vec![false; costs.cols()];
        for &(r, c) in &a.pairs {
            prop_assert!(!rows_seen[r], "row {} matched twice", r);
            prop_assert!(!cols_seen[c], "column {} matched twice", c);
            rows_seen[r] = true;
            cols_seen[c] = true;
        }
        for &r in &a.unmatched_rows {
            prop_assert!(!rows_seen[r], "row {} both matched and unmatched", r);
            rows_seen[r] = true;
        }
        prop_assert!(rows_seen.iter().all(|&s| s), "every row is accounted for");

        // Compete with the permutation: assign row i to column perm[i]
        // for the first min(rows, cols) rows.
        let competing: f64 =
            (0..expect).map(|r| costs.get(r, perm[r % perm.len()])).sum();
        prop_assert!(
            a.total_cost <= competing + 1e-9,
            "solver cost {} beaten by permutation cost {}",
            a.total_cost,
            competing
        );
    }

    /// Group sizes are balanced, ordered, and cover every index exactly once.
    #[test]
    fn partition_is_balanced_and_contiguous(n in 1usize..=257, k_raw in 1usize..=257) {
        let k = k_raw.min(n);
        let p = partition_queries(n, k).unwrap();
        let sizes = p.group_sizes();
        prop_assert_eq!(sizes.len(), k);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(max - min <= 1, "sizes must differ by at most one");
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "larger groups come first");
        let mut next = 0usize;
        for g in 0..k {
            let span = p.members(g);
            prop_assert_eq!(span.start, next);
            for i in span.clone() {
                prop_assert_eq!(p.group_of(i), g);
            }
            next = span.end;
        }
        prop_assert_eq!(next, n);
    }

    /// The combined loss equals its weighted components, and every loss but
    /// the divergence-based one is non-negative with a finite gradient.
    #[test]
    fn losses_are_finite_composed_and_signed((q, n, k) in query_setup()) {
        let p = partition_queries(n, k).unwrap();
        let cfg = LossConfig::default();
        let mmcl = evaluate(LossKind::Mmcl, &q, &p, &cfg).unwrap();
        let imc = evaluate(LossKind::Imc, &q, &p, &cfg).unwrap();
        let ime = evaluate(LossKind::Ime, &q, &p, &cfg).unwrap();
        let composed = cfg.gamma * imc.value + cfg.eta * ime.value;
        prop_assert!(
            (mmcl.value - composed).abs() <= 1e-12 * (1.0 + composed.abs()),
            "combined {} != {} + {}",
            mmcl.value,
            imc.value,
            ime.value
        );

        for kind in LossKind::ALL {
            let result = evaluate(kind, &q, &p, &cfg).unwrap();
            prop_assert!(result.value.is_finite(), "{} value not finite", kind);
            prop_assert!(result.gradient.is_finite(), "{} gradient not finite", kind);
            if kind != LossKind::Iic {
                prop_assert!(result.value >= 0.0, "{} went negative: {}", kind, result.value);
            }
        }
    }

    /// Cosine-based losses depend only on row directions: scaling any row
    /// by a positive factor leaves the value unchanged.
    #[test]
    fn cosine_losses_ignore_row_scale(
        (q, n, k) in query_setup(),
        row_frac in 0.0f64..1.0,
        scale in 0.25f64..4.0,
    ) {
        let p = partition_queries(n, k).unwrap();
        let cfg = LossConfig::default();
        let row = ((row_frac * n as f64) as usize).min(n - 1);
        let mut scaled = q.clone();
        for v in scaled.row_mut(row) {
            *v *= scale;
        }
        for kind in LossKind::ALL {
            if kind == LossKind::Iic {
                continue; // operates on raw coordinates, not directions
            }
            let a = evaluate(kind, &q, &p, &cfg).unwrap().value;
            let b = evaluate(kind, &scaled, &p, &cfg).unwrap().value;
            prop_assert!(
                (a - b).abs() <= 1e-9 * (1.0 + a.abs()),
                "{} changed under row scaling: {} vs {}",
                kind,
                a,
                b
            );
        }
    }
}
