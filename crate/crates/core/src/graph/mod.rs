//! Labeled simple graphs on `[n]`, edge-slot indexing, copy counting and the
//! copy hypergraph.
//!
//! Edge slots are numbered colexicographically: the pair `{i, j}` with `i < j`
//! gets index `j (j - 1) / 2 + i`. Every vector indexed by slots (edge weights,
//! marginals, `q_star` dumps) uses this order.

mod density;
mod embed;
mod hypergraph;

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub use density::two_density;
pub use embed::{automorphism_count, count_copies, count_copies_through_slot, CopyCounter};
pub use hypergraph::{
    expected_count, injective_density, CopyHypergraph, DegreeProfile, Hypergraph, DEFAULT_COPY_BUDGET,
};

/// Number of edge slots of `K_n`.
#[inline]
pub fn num_slots(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Index of an unordered vertex pair in colexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeSlot(pub u32);

impl EdgeSlot {
    /// Slot of the pair `{a, b}`; `a != b`.
    #[inline]
    pub fn from_pair(a: usize, b: usize) -> Self {
        debug_assert_ne!(a, b);
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        EdgeSlot((j * (j - 1) / 2 + i) as u32)
    }

    /// The pair `(i, j)` with `i < j`.
    #[inline]
    pub fn pair(self) -> (usize, usize) {
        let s = self.0 as usize;
        let mut j = ((1.0 + (1.0 + 8.0 * s as f64).sqrt()) / 2.0) as usize;
        while j * (j - 1) / 2 > s {
            j -= 1;
        }
        while (j + 1) * j / 2 <= s {
            j += 1;
        }
        (s - j * (j - 1) / 2, j)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A labeled simple graph stored as per-vertex adjacency bitsets.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    words: usize,
    adj: Vec<u64>,
    m: usize,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Graph {
            n,
            words,
            adj: vec![0; n * words],
            m: 0,
        }
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<Self> {
        let mut g = Graph::empty(n);
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::InvalidInput(format!("loop at vertex {a}")));
            }
            if !g.add_edge(a, b) {
                return Err(Error::InvalidInput(format!("repeated edge ({a}, {b})")));
            }
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for j in 1..n {
            for i in 0..j {
                g.add_edge(i, j);
            }
        }
        g
    }

    /// Cycle on `k >= 3` vertices.
    pub fn cycle(k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidInput(format!("cycle needs at least 3 vertices, got {k}")));
        }
        Graph::from_edges(k, (0..k).map(|i| (i, (i + 1) % k)))
    }

    /// Path on `k >= 2` vertices.
    pub fn path(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!("path needs at least 2 vertices, got {k}")));
        }
        Graph::from_edges(k, (0..k - 1).map(|i| (i, i + 1)))
    }

    /// Graph on `n` vertices whose slot `s` is present iff bit `s` of `mask` is set.
    pub fn from_slot_mask(n: usize, mask: u64) -> Self {
        let mut g = Graph::empty(n);
        let mut rest = mask;
        while rest != 0 {
            let s = rest.trailing_zeros();
            rest &= rest - 1;
            let (i, j) = EdgeSlot(s).pair();
            g.add_edge(i, j);
        }
        g
    }

    /// Slot mask of the edge set; requires `C(n, 2) <= 64`.
    pub fn slot_mask(&self) -> u64 {
        debug_assert!(num_slots(self.n) <= 64);
        self.edges()
            .into_iter()
            .fold(0u64, |acc, (i, j)| acc | (1u64 << EdgeSlot::from_pair(i, j).0))
    }

    /// Vertex-disjoint union, `other`'s vertices shifted by `self.n()`.
    pub fn disjoint_union(&self, other: &Graph) -> Graph {
        let n = self.n + other.n;
        let mut g = Graph::empty(n);
        for (a, b) in self.edges() {
            g.add_edge(a, b);
        }
        for (a, b) in other.edges() {
            g.add_edge(a + self.n, b + self.n);
        }
        g
    }

    /// Parses a named built-in: `Kk`, `Ck`, `Pk` (path on `k` vertices).
    pub fn builtin(name: &str) -> Result<Self> {
        let name = name.trim();
        let bad = || Error::InvalidInput(format!("unknown built-in graph `{name}`"));
        let mut chars = name.chars();
        let kind = chars.next().ok_or_else(bad)?;
        let k: usize = chars.as_str().parse().map_err(|_| bad())?;
        match kind {
            'K' if k >= 1 => Ok(Graph::complete(k)),
            'C' => Graph::cycle(k),
            'P' => Graph::path(k),
            _ => Err(bad()),
        }
    }

    /// Parses the text format: first line `n`, then one `i j` pair per line.
    /// `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut g = Graph::empty(0);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno + 1, msg };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match n {
                None => {
                    if toks.len() != 1 {
                        return Err(perr("expected vertex count".into()));
                    }
                    let v: usize = toks[0].parse().map_err(|_| perr(format!("bad vertex count `{}`", toks[0])))?;
                    if v == 0 {
                        return Err(perr("vertex count must be at least 1".into()));
                    }
                    n = Some(v);
                    g = Graph::empty(v);
                }
                Some(v) => {
                    if toks.len() != 2 {
                        return Err(perr("expected `i j`".into()));
                    }
                    let a: usize = toks[0].parse().map_err(|_| perr(format!("bad vertex `{}`", toks[0])))?;
                    let b: usize = toks[1].parse().map_err(|_| perr(format!("bad vertex `{}`", toks[1])))?;
                    if a >= v || b >= v {
                        return Err(perr(format!("vertex out of range in ({a}, {b})")));
                    }
                    if a == b {
                        return Err(perr(format!("loop at {a}")));
                    }
                    if !g.add_edge(a, b) {
                        return Err(perr(format!("repeated edge ({a}, {b})")));
                    }
                }
            }
        }
        if n.is_none() {
            return Err(Error::Parse {
                line: 0,
                msg: "empty graph file".into(),
            });
        }
        Ok(g)
    }

    /// A built-in name or a path to a graph file.
    pub fn from_spec(spec: &str) -> Result<Self> {
        match Graph::builtin(spec) {
            Ok(g) => Ok(g),
            Err(e) => {
                let path = Path::new(spec);
                if path.exists() {
                    Graph::parse_text(&std::fs::read_to_string(path)?)
                } else {
                    Err(e)
                }
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (a, b) in self.edges() {
            s.push_str(&format!("{a} {b}\n"));
        }
        s
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.m
    }

    #[inline]
    pub(crate) fn words(&self) -> usize {
        self.words
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u64] {
        &self.adj[v * self.words..(v + 1) * self.words]
    }

    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    #[inline]
    pub fn has_slot(&self, s: EdgeSlot) -> bool {
        let (i, j) = s.pair();
        self.has_edge(i, j)
    }

    /// Adds `{a, b}`; returns false if already present.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        debug_assert!(a != b && a < self.n && b < self.n);
        if self.has_edge(a, b) {
            return false;
        }
        self.adj[a * self.words + b / 64] |= 1 << (b % 64);
        self.adj[b * self.words + a / 64] |= 1 << (a % 64);
        self.m += 1;
        true
    }

    /// Removes `{a, b}`; returns false if absent.
    pub fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        if !self.has_edge(a, b) {
            return false;
        }
        self.adj[a * self.words + b / 64] &= !(1 << (b % 64));
        self.adj[b * self.words + a / 64] &= !(1 << (a % 64));
        self.m -= 1;
        true
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Codegree `|N(a) ∩ N(b)|`.
    pub fn codegree(&self, a: usize, b: usize) -> usize {
        self.neighbors(a)
            .iter()
            .zip(self.neighbors(b))
            .map(|(x, y)| (x & y).count_ones() as usize)
            .sum()
    }

    /// Edges `(i, j)`, `i < j`, in slot order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.m);
        for j in 1..self.n {
            for i in 0..j {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn slots(&self) -> Vec<EdgeSlot> {
        self.edges().into_iter().map(|(i, j)| EdgeSlot::from_pair(i, j)).collect()
    }

    pub fn has_isolated_vertex(&self) -> bool {
        (0..self.n).any(|v| self.degree(v) == 0)
    }

    /// Slot bitvector rendered as fixed-width hex, most significant digit first.
    pub fn slot_hex(&self) -> String {
        let m = num_slots(self.n);
        let digits = m.div_ceil(4).max(1);
        let mut nibbles = vec![0u8; digits];
        for s in self.slots() {
            nibbles[s.index() / 4] |= 1 << (s.index() % 4);
        }
        nibbles
            .iter()
            .rev()
            .map(|d| char::from_digit(*d as u32, 16).unwrap())
            .collect()
    }

    /// Dense 0/1 adjacency matrix in row-major order.
    pub fn adjacency_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for (i, j) in self.edges() {
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
        a
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, edges={:?})", self.n, self.edges())
    }
}
