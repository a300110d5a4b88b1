//! Cut norm (exact, heuristic lower bound, spectral upper bound) and
//! closed-walk trace statistics.
//!
//! `‖A‖_□ = sup_{x, y ∈ [0,1]^n} |xᵀ A y| / n²`. The objective is bilinear, so
//! the supremum is attained at 0/1 vectors; for a fixed `x` the best `y` takes
//! coordinate `j` iff `(xᵀA)_j` has the wanted sign. The exact search therefore
//! enumerates `x ∈ {0,1}^n` only.
//!
//! Deviation matrices have a zero diagonal and subtract the constant off the
//! diagonal only. `closed_walk_trace` instead uses the full `A - qJ`.

use std::collections::HashMap;
use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::entropy::EdgeWeights;
use crate::error::{Error, Result};
use crate::graph::{EdgeSlot, Graph};

/// Largest `n` accepted by [`cut_norm_exact`].
pub const EXACT_CUT_NORM_MAX_N: usize = 20;

/// Dense row-major `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareMatrix { n, data }
    }

    /// Dense decimal text, one row per line.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            rows.push(row.map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad number in `{line}`"),
            })?);
        }
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("row has {} entries, expected {n}", r.len()),
            });
        }
        SquareMatrix::new(n, rows.concat())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| crate::numeric::fmt_f64(*v)).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn transpose(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn add(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        if other.n != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(SquareMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

/// Symmetric matrix with zero diagonal, typically adjacency minus a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationMatrix(SquareMatrix);

impl DeviationMatrix {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        if !m.is_symmetric() {
            return Err(Error::InvalidInput("deviation matrix must be symmetric".into()));
        }
        if (0..m.n()).any(|i| m.get(i, i) != 0.0) {
            return Err(Error::InvalidInput("deviation matrix must have zero diagonal".into()));
        }
        Ok(DeviationMatrix(m))
    }

    /// `A(G) - q (J - I)`.
    pub fn graph_minus_constant(g: &Graph, q: f64) -> Self {
        let n = g.n();
        DeviationMatrix(SquareMatrix::from_fn(n, |i, j| {
            if i == j {
                0.0
            } else if g.has_edge(i, j) {
                1.0 - q
            } else {
                -q
            }
        }))
    }

    /// `A(q)` for an edge-weight vector.
    pub fn from_weights(q: &EdgeWeights) -> Self {
        Self::from_slot_values(q.n(), q.as_slice())
    }

    /// `A(a - b)` for two weight vectors on the same `n`.
    pub fn weight_difference(a: &EdgeWeights, b: &EdgeWeights) -> Result<Self> {
        if a.n() != b.n() {
            return Err(Error::Dimension {
                expected: a.len(),
                got: b.len(),
            });
        }
        let d: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
        Ok(Self::from_slot_values(a.n(), &d))
    }

    /// `A(q - c)` for a constant `c`.
    pub fn weights_minus_constant(q: &[f64], n: usize, c: f64) -> Self {
        let d: Vec<f64> = q.iter().map(|x| x - c).collect();
        Self::from_slot_values(n, &d)
    }

    pub fn from_slot_values(n: usize, values: &[f64]) -> Self {
        DeviationMatrix(SquareMatrix::from_fn(n, |i, j| {
            if i == j {
                0.0
            } else {
                values[EdgeSlot::from_pair(i, j).index()]
            }
        }))
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }
}

impl Deref for DeviationMatrix {
    type Target = SquareMatrix;
    fn deref(&self) -> &SquareMatrix {
        &self.0
    }
}

#[inline]
fn split_sum(v: &[f64]) -> (f64, f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for &x in v {
        if x > 0.0 {
            pos += x;
        } else {
            neg -= x;
        }
    }
    (pos, neg)
}

/// Gray-code sweep over the low `bits` coordinates of `x`, with the higher
/// coordinates fixed by `high`. Returns the best `max(pos, neg)`.
fn gray_block(a: &SquareMatrix, high: u64, bits: usize) -> f64 {
    let n = a.n();
    let mut v = vec![0.0; n];
    for i in bits..n {
        if high >> i & 1 == 1 {
            for (vj, aij) in v.iter_mut().zip(a.row(i)) {
                *vj += aij;
            }
        }
    }
    let (p, q) = split_sum(&v);
    let mut best = p.max(q);
    let mut x = 0u64;
    for k in 1u64..(1u64 << bits) {
        let bit = k.trailing_zeros() as usize;
        let row = a.row(bit);
        if x >> bit & 1 == 1 {
            for (vj, aij) in v.iter_mut().zip(row) {
                *vj -= aij;
            }
        } else {
            for (vj, aij) in v.iter_mut().zip(row) {
                *vj += aij;
            }
        }
        x ^= 1 << bit;
        let (p, q) = split_sum(&v);
        best = best.max(p).max(q);
    }
    best
}

/// Exact cut norm by enumeration of `x ∈ {0,1}^n`, `n <= 20`.
pub fn cut_norm_exact(a: &SquareMatrix) -> Result<f64> {
    let n = a.n();
    if n > EXACT_CUT_NORM_MAX_N {
        return Err(Error::Resource {
            what: "exact cut norm enumeration".into(),
            estimated: 2f64.powi(n as i32),
            limit: 2f64.powi(EXACT_CUT_NORM_MAX_N as i32),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let high_bits = n.saturating_sub(12).min(8);
    let low = n - high_bits;
    let best = (0u64..(1u64 << high_bits))
        .into_par_iter()
        .map(|h| gray_block(a, h << low, low))
        .reduce(|| 0.0, f64::max);
    Ok(best / (n * n) as f64)
}

/// Best `σ · xᵀAy` reachable by alternating best responses from `x`.
fn alternate(a: &SquareMatrix, at: &SquareMatrix, mut x: Vec<bool>, sign: f64) -> f64 {
    let n = a.n();
    let mut best = f64::NEG_INFINITY;
    let mut y = vec![false; n];
    let mut v = vec![0.0; n];
    for _ in 0..(4 * n + 10) {
        // y given x
        v.iter_mut().for_each(|t| *t = 0.0);
        for i in (0..n).filter(|&i| x[i]) {
            for (t, aij) in v.iter_mut().zip(a.row(i)) {
                *t += aij;
            }
        }
        for j in 0..n {
            y[j] = sign * v[j] > 0.0;
        }
        // x given y
        v.iter_mut().for_each(|t| *t = 0.0);
        for j in (0..n).filter(|&j| y[j]) {
            for (t, aji) in v.iter_mut().zip(at.row(j)) {
                *t += aji;
            }
        }
        let mut val = 0.0;
        for i in 0..n {
            x[i] = sign * v[i] > 0.0;
            if x[i] {
                val += sign * v[i];
            }
        }
        if val <= best + 1e-15 * best.abs().max(1.0) {
            best = best.max(val);
            break;
        }
        best = val;
    }
    best.max(0.0)
}

/// Multi-start alternating maximization; a lower bound on the cut norm.
pub fn cut_norm_heuristic(a: &SquareMatrix, restarts: usize, seed: u64) -> f64 {
    let n = a.n();
    if n == 0 {
        return 0.0;
    }
    let at = a.transpose();
    let best = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let x: Vec<bool> = if r == 0 {
                vec![true; n]
            } else {
                (0..n).map(|_| rng.random::<bool>()).collect()
            };
            alternate(a, &at, x.clone(), 1.0).max(alternate(a, &at, x, -1.0))
        })
        .reduce(|| 0.0, f64::max);
    best / (n * n) as f64
}

/// `max_i |λ_i| / n`, an upper bound on the cut norm of a symmetric matrix.
pub fn spectral_cut_bound(a: &SquareMatrix) -> Result<f64> {
    if !a.is_symmetric() {
        return Err(Error::InvalidInput("spectral bound needs a symmetric matrix".into()));
    }
    if a.n() == 0 {
        return Ok(0.0);
    }
    Ok(spectral_radius(a) / a.n() as f64)
}

fn spectral_radius(a: &SquareMatrix) -> f64 {
    let eig = SymmetricEigen::try_new(a.to_nalgebra(), 1e-14, 0).expect("symmetric eigensolve");
    eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &SquareMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::try_new(a.to_nalgebra(), 1e-14, 0).expect("symmetric eigensolve");
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v
}

/// Isomorphism class of the subgraph traced by a set of closed walks.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkClass {
    pub vertices: usize,
    pub edges: usize,
    /// Canonical edge list on `0..vertices`.
    pub canonical_edges: Vec<(usize, usize)>,
    pub walks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedWalkTrace {
    /// `Tr((A - qJ)^{2k})` with the full all-ones `J`.
    pub trace: f64,
    /// `Tr(A^{2k})`, the number of closed walks of length `2k`.
    pub adjacency_trace: f64,
    /// Closed walks grouped by the graph they trace; only for `n <= 8`, `k <= 3`.
    pub walk_classes: Option<Vec<WalkClass>>,
}

/// Traces of `2k`-th powers of `A - qJ` and `A`, by repeated multiplication.
pub fn closed_walk_trace(g: &Graph, q: f64, k: usize) -> Result<ClosedWalkTrace> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("closed walk length parameter k must be >= 2, got {k}")));
    }
    let n = g.n();
    let a = DMatrix::from_row_slice(n, n, &g.adjacency_dense());
    let dev = a.map(|x| x - q);
    Ok(ClosedWalkTrace {
        trace: trace_even_power(&dev, k),
        adjacency_trace: trace_even_power(&a, k),
        walk_classes: if n <= 8 && k <= 3 { Some(walk_classes(g, 2 * k)) } else { None },
    })
}

/// `Tr(M^{2k}) = ‖M^k‖_F²` for symmetric `M`.
fn trace_even_power(m: &DMatrix<f64>, k: usize) -> f64 {
    let mut p = m.clone();
    for _ in 1..k {
        p = &p * m;
    }
    p.iter().map(|x| x * x).sum()
}

fn canonical_form(edges: &[(usize, usize)]) -> (usize, Vec<(usize, usize)>) {
    let mut verts: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    verts.sort_unstable();
    verts.dedup();
    let v = verts.len();
    let local: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| {
            let ia = verts.binary_search(&a).unwrap();
            let ib = verts.binary_search(&b).unwrap();
            (ia, ib)
        })
        .collect();
    let mut perm: Vec<usize> = (0..v).collect();
    let mut best: Option<Vec<(usize, usize)>> = None;
    permute(&mut perm, 0, &mut |p| {
        let mut e: Vec<(usize, usize)> = local
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (p[a], p[b]);
                if x < y {
                    (x, y)
                } else {
                    (y, x)
                }
            })
            .collect();
        e.sort_unstable();
        if best.as_ref().is_none_or(|b| e < *b) {
            best = Some(e);
        }
    });
    (v, best.unwrap_or_default())
}

fn permute<F: FnMut(&[usize])>(p: &mut Vec<usize>, k: usize, f: &mut F) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

fn walk_classes(g: &Graph, len: usize) -> Vec<WalkClass> {
    let n = g.n();
    let mut by_mask: HashMap<u64, u64> = HashMap::new();
    let mut walk = vec![0usize; len + 1];
    fn rec(g: &Graph, walk: &mut Vec<usize>, d: usize, len: usize, mask: u64, out: &mut HashMap<u64, u64>) {
        if d == len {
            if g.has_edge(walk[len - 1], walk[0]) {
                let m = mask | 1 << EdgeSlot::from_pair(walk[len - 1], walk[0]).0;
                *out.entry(m).or_insert(0) += 1;
            }
            return;
        }
        let u = walk[d - 1];
        for v in 0..g.n() {
            if g.has_edge(u, v) {
                walk[d] = v;
                rec(g, walk, d + 1, len, mask | 1 << EdgeSlot::from_pair(u, v).0, out);
            }
        }
    }
    for s in 0..n {
        walk[0] = s;
        rec(g, &mut walk, 1, len, 0, &mut by_mask);
    }
    let mut classes: HashMap<Vec<(usize, usize)>, (usize, u64)> = HashMap::new();
    for (mask, count) in by_mask {
        let edges = Graph::from_slot_mask(n, mask).edges();
        let (v, canon) = canonical_form(&edges);
        classes.entry(canon).or_insert((v, 0)).1 += count;
    }
    let mut out: Vec<WalkClass> = classes
        .into_iter()
        .map(|(canon, (v, walks))| WalkClass {
            vertices: v,
            edges: canon.len(),
            canonical_edges: canon,
            walks,
        })
        .collect();
    out.sort_by(|a, b| (a.edges, a.vertices, &a.canonical_edges).cmp(&(b.edges, b.vertices, &b.canonical_edges)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize, signs: bool) -> SquareMatrix {
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..i {
                let v = if signs {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.random_range(-1.0..1.0)
                };
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Oracle: double enumeration over x and y.
    fn double_enum(a: &SquareMatrix) -> f64 {
        let n = a.n();
        let mut best = 0.0f64;
        for x in 0u32..(1 << n) {
            for y in 0u32..(1 << n) {
                let mut s = 0.0;
                for i in (0..n).filter(|i| x >> i & 1 == 1) {
                    for j in (0..n).filter(|j| y >> j & 1 == 1) {
                        s += a.get(i, j);
                    }
                }
                best = best.max(s.abs());
            }
        }
        best / (n * n) as f64
    }

    #[test]
    fn exact_examples() {
        assert_eq!(cut_norm_exact(&SquareMatrix::zeros(5)).unwrap(), 0.0);
        let j = SquareMatrix::from_fn(4, |i, k| if i == k { 0.0 } else { 1.0 });
        assert!((cut_norm_exact(&j).unwrap() - 0.75).abs() < 1e-15);
        assert!(cut_norm_exact(&SquareMatrix::zeros(21)).is_err());
    }

    #[test]
    fn exact_matches_double_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [3, 6, 10] {
            for _ in 0..2 {
                let a = random_sym(&mut rng, n, true);
                assert!((cut_norm_exact(&a).unwrap() - double_enum(&a)).abs() < 1e-12);
            }
        }
        // non-symmetric input is handled too
        let a = SquareMatrix::from_fn(5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        assert!((cut_norm_exact(&a).unwrap() - double_enum(&a)).abs() < 1e-12);
    }

    #[test]
    fn exact_parallel_blocks_agree_with_single_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_sym(&mut rng, 16, false);
        let single = gray_block(&a, 0, 16) / 256.0;
        assert!((cut_norm_exact(&a).unwrap() - single).abs() < 1e-12);
    }

    #[test]
    fn invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let a = random_sym(&mut rng, 9, false);
            let b = random_sym(&mut rng, 9, false);
            let ca = cut_norm_exact(&a).unwrap();
            assert!((cut_norm_exact(&a.transpose()).unwrap() - ca).abs() < 1e-12);
            assert!((cut_norm_exact(&a.scaled(-1.0)).unwrap() - ca).abs() < 1e-12);
            for c in [0.5, 2.0] {
                assert!((cut_norm_exact(&a.scaled(c)).unwrap() - c * ca).abs() < 1e-12);
            }
            let cab = cut_norm_exact(&a.add(&b).unwrap()).unwrap();
            assert!(cab <= ca + cut_norm_exact(&b).unwrap() + 1e-12);
        }
    }

    #[test]
    fn heuristic_and_spectral_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        assert_eq!(cut_norm_heuristic(&SquareMatrix::zeros(6), 4, 0), 0.0);
        assert_eq!(spectral_cut_bound(&SquareMatrix::zeros(6)).unwrap(), 0.0);
        for _ in 0..20 {
            let a = random_sym(&mut rng, 12, false);
            let ex = cut_norm_exact(&a).unwrap();
            let he = cut_norm_heuristic(&a, 32, 7);
            let sp = spectral_cut_bound(&a).unwrap();
            assert!(he <= ex + 1e-12 && ex <= sp + 1e-12, "{he} {ex} {sp}");
        }
    }

    #[test]
    fn rank_one_spectral() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 8;
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let full = SquareMatrix::from_fn(n, |i, j| u[i] * u[j]);
        let norm2: f64 = u.iter().map(|x| x * x).sum();
        assert!((spectral_cut_bound(&full).unwrap() - norm2 / n as f64).abs() < 1e-12);
        // zeroing the diagonal perturbs each eigenvalue by at most max u_i²
        let zeroed = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { u[i] * u[j] });
        let maxu2 = u.iter().map(|x| x * x).fold(0.0, f64::max);
        assert!((spectral_cut_bound(&zeroed).unwrap() - norm2 / n as f64).abs() <= maxu2 / n as f64 + 1e-12);
    }

    #[test]
    fn deviation_constructors() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let d = DeviationMatrix::graph_minus_constant(&g, 0.25);
        assert_eq!(d.get(0, 1), 0.75);
        assert_eq!(d.get(1, 2), -0.25);
        assert_eq!(d.get(2, 2), 0.0);
        assert!(DeviationMatrix::new(SquareMatrix::from_fn(2, |i, j| (i + 2 * j) as f64)).is_err());
        assert!(DeviationMatrix::new(SquareMatrix::from_fn(2, |_, _| 1.0)).is_err());
        let q = EdgeWeights::new(3, vec![0.1, 0.2, 0.3]).unwrap();
        let a = DeviationMatrix::from_weights(&q);
        assert_eq!(a.get(1, 2), 0.3);
        assert_eq!(a.get(2, 0), 0.2);
    }

    #[test]
    fn matrix_text_roundtrip() {
        let a = SquareMatrix::from_fn(3, |i, j| i as f64 - 0.5 * j as f64);
        assert_eq!(SquareMatrix::parse_text(&a.to_text()).unwrap(), a);
        assert!(SquareMatrix::parse_text("1 2\n3\n").is_err());
    }

    #[test]
    fn trace_examples() {
        let t = closed_walk_trace(&Graph::empty(5), 0.0, 2).unwrap();
        assert_eq!(t.trace, 0.0);
        for n in [3, 5, 7] {
            let t = closed_walk_trace(&Graph::complete(n), 1.0, 3).unwrap();
            assert!((t.trace - n as f64).abs() < 1e-9);
        }
        assert!(closed_walk_trace(&Graph::empty(3), 0.0, 1).is_err());
    }

    #[test]
    fn trace_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 8;
        let mut g = Graph::empty(n);
        for j in 1..n {
            for i in 0..j {
                if rng.random::<f64>() < 0.5 {
                    g.add_edge(i, j);
                }
            }
        }
        let q = 0.4;
        let t = closed_walk_trace(&g, q, 2).unwrap();
        let m = SquareMatrix::from_fn(n, |i, j| if g.has_edge(i, j) { 1.0 } else { 0.0 } - q);
        let eig = symmetric_eigenvalues(&m);
        let s4: f64 = eig.iter().map(|l| l.powi(4)).sum();
        assert!((t.trace - s4).abs() <= 1e-8 * s4);
        // walk classes add up to Tr(A^4)
        let classes = t.walk_classes.unwrap();
        let total: u64 = classes.iter().map(|c| c.walks).sum();
        assert_eq!(total as f64, t.adjacency_trace);
    }

    #[test]
    fn walk_classes_of_c4() {
        let g = Graph::cycle(4).unwrap();
        let classes = closed_walk_trace(&g, 0.0, 2).unwrap().walk_classes.unwrap();
        // K2: 2 walks per edge-orientation start => 4 edges * 2; P3: ...; C4: 8
        let by_edges: Vec<(usize, u64)> = classes.iter().map(|c| (c.edges, c.walks)).collect();
        assert_eq!(by_edges, vec![(1, 8), (2, 16), (4, 8)]);
        let total: u64 = classes.iter().map(|c| c.walks).sum();
        assert_eq!(total, 32);
    }
}
