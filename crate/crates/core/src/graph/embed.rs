//! Injective-embedding search used for copy counting and enumeration.
//!
//! A copy of `H` in `G` is an unlabeled subgraph; each copy corresponds to
//! exactly `|Aut(H)|` injective edge-preserving maps `V(H) -> V(G)`.

use std::collections::HashSet;

use super::{EdgeSlot, Graph};

/// Vertex order for the backtracking search plus, for each position, the
/// earlier positions adjacent to it in `H`.
#[derive(Debug, Clone)]
pub(crate) struct EmbeddingPlan {
    order: Vec<usize>,
    back: Vec<Vec<usize>>,
}

impl EmbeddingPlan {
    /// Greedy connectivity order starting with `prefix`.
    pub(crate) fn new(h: &Graph, prefix: &[usize]) -> Self {
        let k = h.n();
        let mut order: Vec<usize> = prefix.to_vec();
        let mut placed = vec![false; k];
        for &v in prefix {
            placed[v] = true;
        }
        while order.len() < k {
            let best = (0..k)
                .filter(|&v| !placed[v])
                .max_by_key(|&v| {
                    let links = order.iter().filter(|&&u| h.has_edge(u, v)).count();
                    (links, h.degree(v), std::cmp::Reverse(v))
                })
                .unwrap();
            placed[best] = true;
            order.push(best);
        }
        let back = (0..k)
            .map(|d| (0..d).filter(|&e| h.has_edge(order[e], order[d])).collect())
            .collect();
        EmbeddingPlan { order, back }
    }

    fn len(&self) -> usize {
        self.order.len()
    }
}

struct Search<'a> {
    g: &'a Graph,
    plan: &'a EmbeddingPlan,
    w: usize,
    cand: Vec<u64>,
    used: Vec<u64>,
    img: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(g: &'a Graph, plan: &'a EmbeddingPlan) -> Self {
        let w = g.words();
        Search {
            g,
            plan,
            w,
            cand: vec![0; w * plan.len().max(1)],
            used: vec![0; w],
            img: vec![usize::MAX; plan.len()],
        }
    }

    fn fill_candidates(&mut self, depth: usize) {
        let w = self.w;
        let n = self.g.n();
        let (start, end) = (depth * w, (depth + 1) * w);
        let back = &self.plan.back[depth];
        if back.is_empty() {
            for k in 0..w {
                let lo = k * 64;
                let full = if n >= lo + 64 {
                    u64::MAX
                } else if n > lo {
                    (1u64 << (n - lo)) - 1
                } else {
                    0
                };
                self.cand[start + k] = full & !self.used[k];
            }
        } else {
            let first = self.g.neighbors(self.img[back[0]]);
            self.cand[start..end].copy_from_slice(first);
            for &b in &back[1..] {
                let nb = self.g.neighbors(self.img[b]);
                for k in 0..w {
                    self.cand[start + k] &= nb[k];
                }
            }
            for k in 0..w {
                self.cand[start + k] &= !self.used[k];
            }
        }
    }

    fn set_used(&mut self, v: usize, on: bool) {
        if on {
            self.used[v / 64] |= 1 << (v % 64);
        } else {
            self.used[v / 64] &= !(1 << (v % 64));
        }
    }

    fn count(&mut self, depth: usize) -> u64 {
        let k = self.plan.len();
        if depth == k {
            return 1;
        }
        self.fill_candidates(depth);
        let (start, end) = (depth * self.w, (depth + 1) * self.w);
        if depth + 1 == k {
            return self.cand[start..end].iter().map(|x| x.count_ones() as u64).sum();
        }
        let mut total = 0;
        for word in 0..self.w {
            let mut bits = self.cand[start + word];
            while bits != 0 {
                let v = word * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                self.img[depth] = v;
                self.set_used(v, true);
                total += self.count(depth + 1);
                self.set_used(v, false);
            }
        }
        debug_assert!(end <= self.cand.len());
        total
    }

    fn visit<F: FnMut(&[usize])>(&mut self, depth: usize, f: &mut F) {
        let k = self.plan.len();
        if depth == k {
            f(&self.img);
            return;
        }
        self.fill_candidates(depth);
        let start = depth * self.w;
        for word in 0..self.w {
            let mut bits = self.cand[start + word];
            while bits != 0 {
                let v = word * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                self.img[depth] = v;
                self.set_used(v, true);
                self.visit(depth + 1, f);
                self.set_used(v, false);
            }
        }
    }

    /// Pins the first `pins.len()` plan positions; returns false if the pins collide.
    fn pin(&mut self, pins: &[usize]) -> bool {
        for (d, &v) in pins.iter().enumerate() {
            if self.used[v / 64] >> (v % 64) & 1 == 1 {
                return false;
            }
            self.img[d] = v;
            self.set_used(v, true);
        }
        true
    }
}

/// Number of injective edge-preserving maps `H -> G`; the first plan positions
/// optionally pinned.
pub(crate) fn count_embeddings(plan: &EmbeddingPlan, g: &Graph, pins: &[usize]) -> u64 {
    if plan.len() > g.n() {
        return 0;
    }
    let mut s = Search::new(g, plan);
    if !s.pin(pins) {
        return 0;
    }
    s.count(pins.len())
}

/// Calls `f` with the image of every injective edge-preserving map, indexed by `H` vertex.
pub(crate) fn for_each_embedding<F: FnMut(&[usize])>(h: &Graph, g: &Graph, mut f: F) {
    let plan = EmbeddingPlan::new(h, &[]);
    if plan.len() > g.n() {
        return;
    }
    let mut by_vertex = vec![0usize; plan.len()];
    let order = plan.order.clone();
    let mut s = Search::new(g, &plan);
    s.visit(0, &mut |img: &[usize]| {
        for (pos, &v) in order.iter().enumerate() {
            by_vertex[v] = img[pos];
        }
        f(&by_vertex);
    });
}

/// `|Aut(H)|`, counted as embeddings of `H` into itself.
pub fn automorphism_count(h: &Graph) -> u64 {
    count_embeddings(&EmbeddingPlan::new(h, &[]), h, &[])
}

/// Precomputed counting machinery for a fixed pattern `H`.
#[derive(Debug, Clone)]
pub struct CopyCounter {
    pattern: Graph,
    aut: u64,
    full: EmbeddingPlan,
    /// One entry per orbit of directed edges of `H` under `Aut(H)`: orbit size and a
    /// plan whose first two positions are the representative's endpoints.
    pinned: Vec<(u64, EmbeddingPlan)>,
}

impl CopyCounter {
    pub fn new(h: &Graph) -> Self {
        let mut autos: Vec<Vec<usize>> = Vec::new();
        for_each_embedding(h, h, |phi| autos.push(phi.to_vec()));
        let aut = autos.len() as u64;
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        let mut pinned = Vec::new();
        for (a, b) in h.edges() {
            for (x, y) in [(a, b), (b, a)] {
                if seen.contains(&(x, y)) {
                    continue;
                }
                let orbit: HashSet<(usize, usize)> = autos.iter().map(|s| (s[x], s[y])).collect();
                let size = orbit.len() as u64;
                seen.extend(orbit);
                pinned.push((size, EmbeddingPlan::new(h, &[x, y])));
            }
        }
        CopyCounter {
            pattern: h.clone(),
            aut,
            full: EmbeddingPlan::new(h, &[]),
            pinned,
        }
    }

    pub fn pattern(&self) -> &Graph {
        &self.pattern
    }

    pub fn automorphisms(&self) -> u64 {
        self.aut
    }

    /// `N_H(G)`.
    pub fn count(&self, g: &Graph) -> u64 {
        if self.pattern.n() > g.n() {
            return 0;
        }
        let emb = count_embeddings(&self.full, g, &[]);
        debug_assert_eq!(emb % self.aut, 0);
        emb / self.aut
    }

    /// Copies of `H` in `G ∪ {s}` that use the slot `s`.
    pub fn count_through_slot(&self, g: &Graph, s: EdgeSlot) -> u64 {
        if self.pattern.n() > g.n() || self.pattern.edge_count() == 0 {
            return 0;
        }
        let (i, j) = s.pair();
        let emb: u64 = self
            .pinned
            .iter()
            .map(|(size, plan)| size * count_embeddings(plan, g, &[i, j]))
            .sum();
        debug_assert_eq!(emb % self.aut, 0);
        emb / self.aut
    }
}

/// Number of subgraphs of `G` isomorphic to `H`.
pub fn count_copies(h: &Graph, g: &Graph) -> u64 {
    CopyCounter::new(h).count(g)
}

/// Number of copies of `H` in `G ∪ {s}` containing `s`.
pub fn count_copies_through_slot(h: &Graph, g: &Graph, s: EdgeSlot) -> u64 {
    CopyCounter::new(h).count_through_slot(g, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::num_slots;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k(n: usize) -> Graph {
        Graph::complete(n)
    }

    /// Brute-force oracle: subsets of `G`'s edges isomorphic to `H`, by trying
    /// every injective vertex map and collecting image edge sets.
    fn brute_copies(h: &Graph, g: &Graph) -> u64 {
        let mut found = HashSet::new();
        let n = g.n();
        let v = h.n();
        let mut perm = vec![0usize; v];
        fn rec(d: usize, perm: &mut Vec<usize>, n: usize, h: &Graph, g: &Graph, found: &mut HashSet<Vec<u32>>) {
            if d == perm.len() {
                let mut slots: Vec<u32> = Vec::new();
                for (a, b) in h.edges() {
                    if !g.has_edge(perm[a], perm[b]) {
                        return;
                    }
                    slots.push(EdgeSlot::from_pair(perm[a], perm[b]).0);
                }
                slots.sort_unstable();
                let mut verts: Vec<u32> = perm.iter().map(|&x| x as u32).collect();
                verts.sort_unstable();
                slots.push(u32::MAX);
                slots.extend(verts);
                found.insert(slots);
                return;
            }
            for x in 0..n {
                if !perm[..d].contains(&x) {
                    perm[d] = x;
                    rec(d + 1, perm, n, h, g, found);
                }
            }
        }
        if v <= n {
            rec(0, &mut perm, n, h, g, &mut found);
        }
        found.len() as u64
    }

    #[test]
    fn automorphism_counts() {
        assert_eq!(automorphism_count(&k(3)), 6);
        assert_eq!(automorphism_count(&k(4)), 24);
        assert_eq!(automorphism_count(&Graph::cycle(4).unwrap()), 8);
        assert_eq!(automorphism_count(&Graph::path(3).unwrap()), 2);
        assert_eq!(automorphism_count(&k(2).disjoint_union(&k(2))), 8);
    }

    #[test]
    fn small_counts() {
        assert_eq!(count_copies(&k(3), &k(3)), 1);
        assert_eq!(count_copies(&k(3), &k(4)), 4);
        assert_eq!(count_copies(&Graph::cycle(4).unwrap(), &k(4)), 3);
        assert_eq!(count_copies(&k(4), &k(3)), 0);
        assert_eq!(count_copies(&k(3), &Graph::cycle(5).unwrap()), 0);
    }

    #[test]
    fn k2_counts_edges_and_brute_force_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let patterns = [k(2), k(3), Graph::path(3).unwrap(), Graph::cycle(4).unwrap(), k(4), k(2).disjoint_union(&k(2))];
        for _ in 0..30 {
            let n = rng.random_range(2..=7);
            let mut g = Graph::empty(n);
            for j in 1..n {
                for i in 0..j {
                    if rng.random::<f64>() < 0.5 {
                        g.add_edge(i, j);
                    }
                }
            }
            assert_eq!(count_copies(&k(2), &g), g.edge_count() as u64);
            for h in &patterns {
                assert_eq!(count_copies(h, &g), brute_copies(h, &g), "{h:?} in {g:?}");
            }
        }
    }

    #[test]
    fn through_slot_examples() {
        let mut g = k(4);
        g.remove_edge(0, 1);
        let s = EdgeSlot::from_pair(0, 1);
        assert_eq!(count_copies_through_slot(&k(3), &g, s), 2);
        assert_eq!(count_copies_through_slot(&k(2), &g, s), 1);
        // counted in G ∪ {s}, so presence of s does not matter
        assert_eq!(count_copies_through_slot(&k(3), &k(4), s), 2);
    }

    #[test]
    fn through_slot_matches_flip_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let patterns = [k(3), Graph::cycle(4).unwrap(), Graph::path(3).unwrap(), k(4), Graph::cycle(5).unwrap()];
        for _ in 0..40 {
            let n = rng.random_range(4..=8);
            let mut g = Graph::empty(n);
            for j in 1..n {
                for i in 0..j {
                    if rng.random::<f64>() < 0.6 {
                        g.add_edge(i, j);
                    }
                }
            }
            let s = EdgeSlot(rng.random_range(0..num_slots(n) as u32));
            let (i, j) = s.pair();
            let mut with = g.clone();
            with.add_edge(i, j);
            let mut without = g.clone();
            without.remove_edge(i, j);
            for h in &patterns {
                let c = CopyCounter::new(h);
                assert_eq!(c.count_through_slot(&g, s), c.count(&with) - c.count(&without));
            }
        }
    }

    #[test]
    fn slot_sum_in_complete_graph() {
        for h in [k(3), Graph::cycle(4).unwrap(), k(4), Graph::path(3).unwrap()] {
            let c = CopyCounter::new(&h);
            for n in h.n()..=7 {
                let kn = k(n);
                let total: u64 = (0..num_slots(n) as u32).map(|s| c.count_through_slot(&kn, EdgeSlot(s))).sum();
                assert_eq!(total, h.edge_count() as u64 * c.count(&kn));
            }
        }
    }
}
