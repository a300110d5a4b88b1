use std::collections::{HashMap, HashSet};
use std::ops::Deref;

use super::embed::{automorphism_count, for_each_embedding};
use super::{num_slots, EdgeSlot, Graph};
use crate::entropy::EdgeWeights;
use crate::error::{Error, Result};
use crate::numeric::{falling_factorial, CompensatedSum};

/// Default cap on the number of hyperedges `enumerate` will materialize.
pub const DEFAULT_COPY_BUDGET: f64 = 1e8;

/// An `r`-uniform hypergraph on vertices `0..num_vertices`.
///
/// Hyperedges are stored sorted and in lexicographic order; `incidence[v]`
/// lists the hyperedges containing `v` in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    num_vertices: usize,
    rank: usize,
    edges: Vec<u32>,
    incidence: Vec<Vec<u32>>,
}

impl Hypergraph {
    pub fn new(num_vertices: usize, edges: Vec<Vec<u32>>) -> Result<Self> {
        let rank = edges.first().map_or(0, |e| e.len());
        let mut sorted: Vec<Vec<u32>> = Vec::with_capacity(edges.len());
        for mut e in edges {
            if e.len() != rank {
                return Err(Error::InvalidInput(format!(
                    "hyperedge sizes differ: expected {rank}, got {}",
                    e.len()
                )));
            }
            e.sort_unstable();
            if e.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidInput(format!("hyperedge {e:?} repeats a vertex")));
            }
            if e.iter().any(|&v| v as usize >= num_vertices) {
                return Err(Error::InvalidInput(format!("hyperedge {e:?} out of range")));
            }
            sorted.push(e);
        }
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("repeated hyperedge".into()));
        }
        Ok(Self::from_sorted(num_vertices, rank, sorted))
    }

    fn from_sorted(num_vertices: usize, rank: usize, sorted: Vec<Vec<u32>>) -> Self {
        let mut incidence = vec![Vec::new(); num_vertices];
        let mut flat = Vec::with_capacity(sorted.len() * rank);
        for (idx, e) in sorted.iter().enumerate() {
            for &v in e {
                incidence[v as usize].push(idx as u32);
            }
            flat.extend_from_slice(e);
        }
        Hypergraph {
            num_vertices,
            rank,
            edges: flat,
            incidence,
        }
    }

    /// Text format: first line the vertex count, then one hyperedge per line
    /// (whitespace-separated vertex indices). `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut num_vertices = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno + 1, msg };
            let vals: std::result::Result<Vec<u32>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| perr(format!("bad integer in `{line}`")))?;
            match num_vertices {
                None => {
                    if vals.len() != 1 {
                        return Err(perr("expected vertex count".into()));
                    }
                    num_vertices = Some(vals[0] as usize);
                }
                Some(_) => edges.push(vals),
            }
        }
        let v = num_vertices.ok_or(Error::Parse {
            line: 0,
            msg: "empty hypergraph file".into(),
        })?;
        Hypergraph::new(v, edges)
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn edge_count(&self) -> usize {
        if self.rank == 0 {
            0
        } else {
            self.edges.len() / self.rank
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edge_count() == 0
    }

    pub fn edge(&self, idx: usize) -> &[u32] {
        &self.edges[idx * self.rank..(idx + 1) * self.rank]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.edges.chunks_exact(self.rank.max(1)).take(self.edge_count())
    }

    pub fn incidence(&self, v: usize) -> &[u32] {
        &self.incidence[v]
    }

    /// Each hyperedge as a bit mask; only for at most 64 vertices.
    pub fn edge_masks(&self) -> Option<Vec<u64>> {
        if self.num_vertices > 64 {
            return None;
        }
        Some(self.iter().map(|e| e.iter().fold(0u64, |m, &v| m | (1 << v))).collect())
    }

    fn check_len(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.num_vertices {
            return Err(Error::Dimension {
                expected: self.num_vertices,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// `Σ_A Π_{a ∈ A} q_a` with compensated accumulation.
    pub fn expected_count(&self, q: &[f64]) -> Result<f64> {
        self.check_len(q)?;
        let mut acc = CompensatedSum::new();
        for e in self.iter() {
            acc.add(e.iter().map(|&v| q[v as usize]).product());
        }
        Ok(acc.value())
    }

    /// Expected count and its gradient; `grad[s] = Σ_{A ∋ s} Π_{a ∈ A, a ≠ s} q_a`.
    pub fn expected_count_with_gradient(&self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(q)?;
        if grad.len() != self.num_vertices {
            return Err(Error::Dimension {
                expected: self.num_vertices,
                got: grad.len(),
            });
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acc = CompensatedSum::new();
        let r = self.rank;
        let mut prefix = vec![1.0; r + 1];
        for e in self.iter() {
            for k in 0..r {
                prefix[k + 1] = prefix[k] * q[e[k] as usize];
            }
            acc.add(prefix[r]);
            let mut suffix = 1.0;
            for k in (0..r).rev() {
                grad[e[k] as usize] += prefix[k] * suffix;
                suffix *= q[e[k] as usize];
            }
        }
        Ok(acc.value())
    }

    /// Maximum co-degrees `Δ_s` for `s = 1..=r`.
    pub fn degree_profile(&self) -> DegreeProfile {
        let r = self.rank;
        let mut delta = vec![0u64; r];
        if !self.is_empty() {
            delta[0] = self.incidence.iter().map(|l| l.len() as u64).max().unwrap_or(0);
            for s in 2..=r {
                let mut deg: HashMap<Vec<u32>, u64> = HashMap::new();
                for e in self.iter() {
                    for_each_subset(e, s, |b| *deg.entry(b.to_vec()).or_insert(0) += 1);
                }
                delta[s - 1] = deg.values().copied().max().unwrap_or(0);
            }
        }
        DegreeProfile {
            delta,
            v_count: self.num_vertices,
            e_count: self.edge_count(),
        }
    }
}

fn for_each_subset<F: FnMut(&[u32])>(set: &[u32], size: usize, mut f: F) {
    let r = set.len();
    let mut idx: Vec<usize> = (0..size).collect();
    let mut buf = vec![0u32; size];
    if size > r {
        return;
    }
    loop {
        for (k, &i) in idx.iter().enumerate() {
            buf[k] = set[i];
        }
        f(&buf);
        let mut k = size;
        while k > 0 && idx[k - 1] == r - size + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return;
        }
        idx[k - 1] += 1;
        for t in k..size {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Co-degree statistics of an `r`-uniform hypergraph.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeProfile {
    /// `delta[s - 1] = Δ_s`.
    pub delta: Vec<u64>,
    pub v_count: usize,
    pub e_count: usize,
}

impl DegreeProfile {
    pub fn delta(&self, s: usize) -> u64 {
        self.delta[s - 1]
    }

    /// Smallest `K` with `Δ_s <= K (λ p)^{s-1} e(H) / v(H)` for every `s`.
    pub fn uniformity_constant(&self, lambda: f64, p: f64) -> Result<f64> {
        if !(lambda > 0.0) || !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidInput(format!("need λ > 0 and p in (0, 1], got λ = {lambda}, p = {p}")));
        }
        if self.e_count == 0 {
            return Ok(0.0);
        }
        let avg = self.e_count as f64 / self.v_count as f64;
        Ok(self
            .delta
            .iter()
            .enumerate()
            .map(|(k, &d)| d as f64 / ((lambda * p).powi(k as i32) * avg))
            .fold(0.0, f64::max))
    }
}

/// The hypergraph `𝓗(H)` on the edge slots of `K_n` whose hyperedges are the
/// slot sets of copies of `H`.
#[derive(Debug, Clone)]
pub struct CopyHypergraph {
    n: usize,
    pattern: Graph,
    hypergraph: Hypergraph,
}

impl CopyHypergraph {
    pub fn enumerate(h: &Graph, n: usize) -> Result<Self> {
        Self::enumerate_with_budget(h, n, DEFAULT_COPY_BUDGET)
    }

    pub fn enumerate_with_budget(h: &Graph, n: usize, budget: f64) -> Result<Self> {
        if h.edge_count() == 0 {
            return Err(Error::InvalidInput("pattern graph has no edges".into()));
        }
        if h.has_isolated_vertex() {
            return Err(Error::InvalidInput("pattern graph has isolated vertices".into()));
        }
        if h.n() > n {
            return Err(Error::InvalidInput(format!("pattern has {} vertices, ambient n = {n}", h.n())));
        }
        let estimated = falling_factorial(n as u64, h.n() as u64) / automorphism_count(h) as f64;
        if estimated > budget {
            return Err(Error::Resource {
                what: format!("copies of the pattern in K_{n}"),
                estimated,
                limit: budget,
            });
        }
        let edges = h.edges();
        let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(estimated as usize);
        for_each_embedding(h, &Graph::complete(n), |phi| {
            let mut slots: Vec<u32> = edges.iter().map(|&(a, b)| EdgeSlot::from_pair(phi[a], phi[b]).0).collect();
            slots.sort_unstable();
            seen.insert(slots);
        });
        let mut sorted: Vec<Vec<u32>> = seen.into_iter().collect();
        sorted.sort_unstable();
        Ok(CopyHypergraph {
            n,
            pattern: h.clone(),
            hypergraph: Hypergraph::from_sorted(num_slots(n), h.edge_count(), sorted),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pattern(&self) -> &Graph {
        &self.pattern
    }

    pub fn hypergraph(&self) -> &Hypergraph {
        &self.hypergraph
    }

    /// `N_H(1)`, the number of copies of `H` in `K_n`.
    pub fn total_copies(&self) -> usize {
        self.hypergraph.edge_count()
    }
}

impl Deref for CopyHypergraph {
    type Target = Hypergraph;
    fn deref(&self) -> &Hypergraph {
        &self.hypergraph
    }
}

fn check_weights(hg: &CopyHypergraph, q: &EdgeWeights) -> Result<()> {
    if q.n() != hg.n() {
        return Err(Error::Dimension {
            expected: num_slots(hg.n()),
            got: q.len(),
        });
    }
    Ok(())
}

/// `E[N_H(q)]` for independent edges with probabilities `q`.
pub fn expected_count(hg: &CopyHypergraph, q: &EdgeWeights) -> Result<f64> {
    check_weights(hg, q)?;
    hg.expected_count(q.as_slice())
}

/// `t_inj(H, q) = E[N_H(q)] / N_H(1)`.
pub fn injective_density(hg: &CopyHypergraph, q: &EdgeWeights) -> Result<f64> {
    if hg.is_empty() {
        return Err(Error::InvalidInput("empty copy hypergraph".into()));
    }
    Ok(expected_count(hg, q)? / hg.total_copies() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{count_copies, CopyCounter};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k(n: usize) -> Graph {
        Graph::complete(n)
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
        let mut g = Graph::empty(n);
        for j in 1..n {
            for i in 0..j {
                if rng.random::<f64>() < p {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    fn patterns() -> Vec<Graph> {
        vec![
            k(2),
            k(3),
            Graph::path(3).unwrap(),
            Graph::path(4).unwrap(),
            Graph::cycle(4).unwrap(),
            Graph::cycle(5).unwrap(),
            k(4),
            k(2).disjoint_union(&k(2)),
            Graph::from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap(),
        ]
    }

    #[test]
    fn enumeration_examples() {
        let h = CopyHypergraph::enumerate(&k(2), 4).unwrap();
        assert_eq!((h.edge_count(), h.rank()), (6, 1));
        let h = CopyHypergraph::enumerate(&k(3), 4).unwrap();
        assert_eq!((h.edge_count(), h.rank()), (4, 3));
        let h = CopyHypergraph::enumerate(&Graph::cycle(4).unwrap(), 4).unwrap();
        assert_eq!((h.edge_count(), h.rank()), (3, 4));
    }

    /// Oracle: triples of vertices give the triangles of K_n.
    #[test]
    fn triangles_match_vertex_triples() {
        for n in 3..=7 {
            let hg = CopyHypergraph::enumerate(&k(3), n).unwrap();
            let mut expect = Vec::new();
            for c in 2..n {
                for b in 1..c {
                    for a in 0..b {
                        let mut s = vec![
                            EdgeSlot::from_pair(a, b).0,
                            EdgeSlot::from_pair(a, c).0,
                            EdgeSlot::from_pair(b, c).0,
                        ];
                        s.sort_unstable();
                        expect.push(s);
                    }
                }
            }
            expect.sort_unstable();
            let got: Vec<Vec<u32>> = hg.iter().map(|e| e.to_vec()).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn budget_guard() {
        let err = CopyHypergraph::enumerate_with_budget(&k(3), 100, 1000.0).unwrap_err();
        match err {
            Error::Resource { estimated, .. } => assert_eq!(estimated, 161_700.0),
            other => panic!("{other:?}"),
        }
        assert!(CopyHypergraph::enumerate(&Graph::from_edges(3, [(0, 1)]).unwrap(), 4).is_err());
    }

    #[test]
    fn hypergraph_invariants() {
        for h in patterns() {
            for n in h.n()..=7 {
                let hg = CopyHypergraph::enumerate(&h, n).unwrap();
                // distinct, right size
                let set: HashSet<&[u32]> = hg.iter().collect();
                assert_eq!(set.len(), hg.edge_count());
                assert!(hg.iter().all(|e| e.len() == h.edge_count()));
                // copy count from the counter
                assert_eq!(hg.total_copies() as u64, count_copies(&h, &k(n)));
                // incidence is the transpose
                for v in 0..hg.num_vertices() {
                    for &e in hg.incidence(v) {
                        assert!(hg.edge(e as usize).contains(&(v as u32)));
                    }
                }
                let inc_total: usize = (0..hg.num_vertices()).map(|v| hg.incidence(v).len()).sum();
                assert_eq!(inc_total, hg.edge_count() * hg.rank());
            }
        }
    }

    #[test]
    fn edge_transitive_slot_degrees() {
        for h in patterns() {
            for n in h.n()..=8 {
                let hg = CopyHypergraph::enumerate(&h, n).unwrap();
                let total = h.edge_count() * hg.total_copies();
                let m = num_slots(n);
                assert_eq!(total % m, 0);
                for s in 0..m {
                    assert_eq!(hg.incidence(s).len(), total / m);
                }
            }
        }
    }

    #[test]
    fn copy_consistency_with_filtering() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for h in patterns().into_iter().filter(|h| h.n() <= 5) {
            let counter = CopyCounter::new(&h);
            for n in h.n()..=6 {
                let hg = CopyHypergraph::enumerate(&h, n).unwrap();
                let masks = hg.edge_masks().unwrap();
                for _ in 0..8 {
                    let g = random_graph(&mut rng, n, 0.6);
                    let gm = g.slot_mask();
                    let filtered = masks.iter().filter(|&&a| a & gm == a).count() as u64;
                    assert_eq!(counter.count(&g), filtered);
                }
            }
        }
    }

    #[test]
    fn downward_closure_exhaustive() {
        for h in [k(3), Graph::cycle(4).unwrap()] {
            let counter = CopyCounter::new(&h);
            for n in 3..=5 {
                let m = num_slots(n);
                let counts: Vec<u64> = (0..1u64 << m).map(|x| counter.count(&Graph::from_slot_mask(n, x))).collect();
                for x in 0..1u64 << m {
                    for s in 0..m {
                        if x >> s & 1 == 1 {
                            assert!(counts[(x & !(1 << s)) as usize] <= counts[x as usize]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn expected_count_constant_and_ones() {
        let n = 7;
        let hg = CopyHypergraph::enumerate(&k(3), n).unwrap();
        let p = 0.3;
        let q = EdgeWeights::constant(n, p).unwrap();
        let expect = 35.0 * p * p * p;
        assert!((expected_count(&hg, &q).unwrap() - expect).abs() < 1e-13);
        let one = EdgeWeights::constant(n, 1.0).unwrap();
        assert_eq!(expected_count(&hg, &one).unwrap(), 35.0);
        assert!((injective_density(&hg, &q).unwrap() - p.powi(3)).abs() < 1e-15);
        let zero = EdgeWeights::constant(n, 0.0).unwrap();
        assert_eq!(injective_density(&hg, &zero).unwrap(), 0.0);
        let wrong = EdgeWeights::constant(6, 0.5).unwrap();
        assert!(matches!(expected_count(&hg, &wrong), Err(Error::Dimension { .. })));
    }

    /// Sampling oracle: the Monte Carlo mean of N_K3 over G(5, q).
    #[test]
    fn expected_count_matches_monte_carlo() {
        let n = 5;
        let hg = CopyHypergraph::enumerate(&k(3), n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let q: Vec<f64> = (0..num_slots(n)).map(|_| rng.random::<f64>()).collect();
        let masks = hg.edge_masks().unwrap();
        let samples = 1_000_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..samples {
            let mut gm = 0u64;
            for (s, &qs) in q.iter().enumerate() {
                if rng.random::<f64>() < qs {
                    gm |= 1 << s;
                }
            }
            let c = masks.iter().filter(|&&a| a & gm == a).count() as f64;
            sum += c;
            sumsq += c * c;
        }
        let mean = sum / samples as f64;
        let se = ((sumsq / samples as f64 - mean * mean) / samples as f64).sqrt();
        let exact = hg.expected_count(&q).unwrap();
        assert!((mean - exact).abs() < 3.0 * se, "mc {mean} exact {exact} se {se}");
    }

    #[test]
    fn multilinearity_finite_difference() {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for h in [k(3), Graph::cycle(4).unwrap(), k(4)] {
            let hg = CopyHypergraph::enumerate(&h, n).unwrap();
            let q: Vec<f64> = (0..num_slots(n)).map(|_| rng.random::<f64>()).collect();
            let mut grad = vec![0.0; q.len()];
            hg.expected_count_with_gradient(&q, &mut grad).unwrap();
            for s in 0..q.len() {
                let (mut lo, mut hi) = (q.clone(), q.clone());
                lo[s] = 0.0;
                hi[s] = 1.0;
                let slope = hg.expected_count(&hi).unwrap() - hg.expected_count(&lo).unwrap();
                // weighted count through s with that coordinate removed
                let direct: f64 = hg
                    .incidence(s)
                    .iter()
                    .map(|&e| hg.edge(e as usize).iter().filter(|&&a| a as usize != s).map(|&a| q[a as usize]).product::<f64>())
                    .sum();
                assert!((slope - direct).abs() < 1e-10);
                assert!((grad[s] - direct).abs() < 1e-10);
                // affine: the midpoint value is the average
                let mut mid = q.clone();
                mid[s] = 0.5;
                let avg = 0.5 * (hg.expected_count(&hi).unwrap() + hg.expected_count(&lo).unwrap());
                assert!((hg.expected_count(&mid).unwrap() - avg).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degree_profile_triangles() {
        let hg = CopyHypergraph::enumerate(&k(3), 6).unwrap();
        let d = hg.degree_profile();
        assert_eq!(d.delta, vec![4, 1, 1]);
        assert_eq!((d.v_count, d.e_count), (15, 20));
        for n in 3..=8 {
            let d = CopyHypergraph::enumerate(&k(3), n).unwrap().degree_profile();
            assert_eq!(d.delta(3), 1);
            assert_eq!(d.delta(1), n as u64 - 2);
        }
        // C4 through two slots sharing a vertex: 1 in K_n... brute force check
        let hg = CopyHypergraph::enumerate(&Graph::cycle(4).unwrap(), 6).unwrap();
        let d = hg.degree_profile();
        assert!(d.delta.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(d.delta(4), 1);
    }

    #[test]
    fn uniformity_constant_is_minimal() {
        let hg = CopyHypergraph::enumerate(&Graph::cycle(4).unwrap(), 7).unwrap();
        let d = hg.degree_profile();
        let (lambda, p) = (2.0, 0.3);
        let kk = d.uniformity_constant(lambda, p).unwrap();
        let avg = d.e_count as f64 / d.v_count as f64;
        let mut tight = false;
        for s in 1..=hg.rank() {
            let bound = kk * (lambda * p).powi(s as i32 - 1) * avg;
            assert!(d.delta(s) as f64 <= bound * (1.0 + 1e-12));
            tight |= (d.delta(s) as f64 - bound).abs() < 1e-9 * bound;
        }
        assert!(tight);
        assert!(d.uniformity_constant(0.0, 0.5).is_err());
    }

    #[test]
    fn general_hypergraph_text() {
        let hg = Hypergraph::parse_text("# three vertices\n3\n0 1\n1 2\n").unwrap();
        assert_eq!((hg.num_vertices(), hg.rank(), hg.edge_count()), (3, 2, 2));
        assert!(Hypergraph::parse_text("3\n0 1\n1 1\n").is_err());
        assert!(Hypergraph::parse_text("3\n0 1\n0 1 2\n").is_err());
        assert!(Hypergraph::parse_text("3\n0 1\n1 0\n").is_err());
    }
}
