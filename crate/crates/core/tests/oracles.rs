//! Brute-force oracles written independently of the library internals.

use lowertail::entropy::{h, i_p_scalar, EdgeWeights};
use lowertail::graph::{count_copies, injective_density, CopyHypergraph, Graph};
use lowertail::metrics::{cut_norm_exact, cut_norm_heuristic, spectral_cut_bound, SquareMatrix};
use lowertail::sampler::{ExactConditional, LowerTailEvent};
use proptest::prelude::*;

/// Enumerate all 2^10 graphs on 5 vertices, keep the triangle-free ones, and
/// weight them by p^e (1-p)^(10-e).
fn triangle_free_n5(p: f64) -> (usize, f64, Vec<f64>) {
    let pairs: Vec<(usize, usize)> = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect();
    let mut support = 0;
    let mut z = 0.0;
    let mut marg = vec![0.0; 10];
    for mask in 0u32..1 << 10 {
        let mut adj = [[false; 5]; 5];
        for (k, &(a, b)) in pairs.iter().enumerate() {
            if mask >> k & 1 == 1 {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
        let has_triangle = (0..5).any(|a| (a + 1..5).any(|b| (b + 1..5).any(|c| adj[a][b] && adj[a][c] && adj[b][c])));
        if has_triangle {
            continue;
        }
        support += 1;
        let e = mask.count_ones() as i32;
        let w = p.powi(e) * (1.0 - p).powi(10 - e);
        z += w;
        for (k, m) in marg.iter_mut().enumerate() {
            if mask >> k & 1 == 1 {
                *m += w;
            }
        }
    }
    (support, z, marg.into_iter().map(|m| m / z).collect())
}

#[test]
fn exact_law_matches_brute_force_triangle_free() {
    let (support, z, marg) = triangle_free_n5(0.4);
    assert_eq!(support, 388);
    for eta in [0.5, 0.7, 0.9] {
        let ex = ExactConditional::new(&LowerTailEvent::new(&Graph::complete(3), 5, 0.4, eta).unwrap()).unwrap();
        assert_eq!(ex.support_len(), 388);
        assert!((ex.z() - z).abs() < 1e-14);
        for (a, b) in ex.marginals().iter().zip(&marg) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    assert!((marg[0] - 0.31314470763948021).abs() < 1e-15);
}

#[test]
fn n4_triangle_free_count() {
    let ex = ExactConditional::new(&LowerTailEvent::new(&Graph::complete(3), 4, 0.5, 1.0).unwrap()).unwrap();
    assert_eq!(ex.support_len(), 41);
    assert!((ex.neg_log_probability() - (64.0f64 / 41.0).ln()).abs() < 1e-12);
}

fn sym_matrix(n: usize, vals: &[f64]) -> SquareMatrix {
    SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            0.0
        } else if i < j {
            vals[(j * (j - 1)) / 2 + i]
        } else {
            vals[(i * (i - 1)) / 2 + j]
        }
    })
}

/// Cut norm by direct enumeration of all pairs of 0/1 vectors.
fn brute_cut_norm(a: &SquareMatrix) -> f64 {
    let n = a.n();
    let mut best: f64 = 0.0;
    for s in 0u32..1 << n {
        for t in 0u32..1 << n {
            let mut v = 0.0;
            for i in 0..n {
                if s >> i & 1 == 1 {
                    for j in 0..n {
                        if t >> j & 1 == 1 {
                            v += a.get(i, j);
                        }
                    }
                }
            }
            best = best.max(v.abs());
        }
    }
    best / (n * n) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cut_norm_matches_brute_force(vals in prop::collection::vec(-1.0f64..1.0, 15)) {
        let a = sym_matrix(6, &vals);
        let exact = cut_norm_exact(&a).unwrap();
        prop_assert!((exact - brute_cut_norm(&a)).abs() < 1e-12);
        prop_assert!(cut_norm_heuristic(&a, 8, 0) <= exact + 1e-12);
        prop_assert!(exact <= spectral_cut_bound(&a).unwrap() + 1e-12);
        prop_assert!((cut_norm_exact(&a.transpose()).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_divergence_is_nonnegative(q in 0.0f64..=1.0, p in 0.01f64..0.99) {
        let v = i_p_scalar(q, p).unwrap();
        prop_assert!(v >= -1e-15);
        let direct = if q == 0.0 { 0.0 } else { q * (q / p).ln() }
            + if q == 1.0 { 0.0 } else { (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln() };
        prop_assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn sparse_entropy_is_nonnegative(x in 0.0f64..=1.0) {
        prop_assert!(h(x) >= -1e-15);
        let direct = if x == 0.0 { 1.0 } else { x * x.ln() - x + 1.0 };
        prop_assert!((h(x) - direct).abs() < 1e-12);
    }

    #[test]
    fn triangle_count_matches_triple_loop(mask in 0u64..(1 << 21)) {
        let g = Graph::from_slot_mask(7, mask);
        let mut t = 0u64;
        for a in 0..7 {
            for b in a + 1..7 {
                for c in b + 1..7 {
                    if g.has_edge(a, b) && g.has_edge(a, c) && g.has_edge(b, c) {
                        t += 1;
                    }
                }
            }
        }
        prop_assert_eq!(count_copies(&Graph::complete(3), &g), t);
    }

    #[test]
    fn injective_density_of_constant(c in 0.0f64..=1.0) {
        let hg = CopyHypergraph::enumerate(&Graph::cycle(4).unwrap(), 6).unwrap();
        let q = EdgeWeights::constant(6, c).unwrap();
        prop_assert!((injective_density(&hg, &q).unwrap() - c.powi(4)).abs() < 1e-12);
    }
}
