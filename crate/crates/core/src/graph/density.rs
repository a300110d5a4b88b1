use num_rational::Ratio;

use super::Graph;
use crate::error::{Error, Result};

const MAX_DENSITY_VERTICES: usize = 24;

/// The 2-density `m_2(G) = max (e(F) - 1) / (v(F) - 2)` over subgraphs `F` with
/// `e(F) >= 2`, as an exact rational.
///
/// For a fixed vertex set the induced subgraph maximizes the ratio and extra
/// isolated vertices only lower it, so the search runs over vertex subsets of
/// size at least 3 and their induced edge counts.
pub fn two_density(g: &Graph) -> Result<Ratio<i64>> {
    if g.edge_count() < 2 {
        return Err(Error::InvalidInput(format!(
            "2-density needs at least 2 edges, graph has {}",
            g.edge_count()
        )));
    }
    // vertices with an edge; isolated ones never help
    let active: Vec<usize> = (0..g.n()).filter(|&v| g.degree(v) > 0).collect();
    let k = active.len();
    if k > MAX_DENSITY_VERTICES {
        return Err(Error::Resource {
            what: "2-density subset search".into(),
            estimated: 2f64.powi(k as i32),
            limit: 2f64.powi(MAX_DENSITY_VERTICES as i32),
        });
    }
    // local adjacency masks over the active vertices
    let local: Vec<u32> = active
        .iter()
        .map(|&u| {
            active
                .iter()
                .enumerate()
                .filter(|(_, &w)| g.has_edge(u, w))
                .fold(0u32, |m, (idx, _)| m | (1 << idx))
        })
        .collect();
    let mut best: Option<Ratio<i64>> = None;
    for subset in 1u32..(1u32 << k) {
        let v = subset.count_ones() as i64;
        if v < 3 {
            continue;
        }
        let mut twice_e = 0i64;
        let mut rest = subset;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            twice_e += (local[i] & subset).count_ones() as i64;
        }
        let e = twice_e / 2;
        if e < 2 {
            continue;
        }
        let r = Ratio::new(e - 1, v - 2);
        if best.is_none_or(|b| r > b) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("no subgraph with at least 2 edges".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle: every edge subset with at least 2 edges, vertex set = endpoints.
    fn brute_two_density(g: &Graph) -> Ratio<i64> {
        let edges = g.edges();
        let mut best = Ratio::new(0, 1);
        for mask in 0u32..(1 << edges.len()) {
            if mask.count_ones() < 2 {
                continue;
            }
            let mut verts = std::collections::BTreeSet::new();
            for (k, &(a, b)) in edges.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    verts.insert(a);
                    verts.insert(b);
                }
            }
            let r = Ratio::new(mask.count_ones() as i64 - 1, verts.len() as i64 - 2);
            if r > best {
                best = r;
            }
        }
        best
    }

    #[test]
    fn named_values() {
        assert_eq!(two_density(&Graph::complete(3)).unwrap(), Ratio::new(2, 1));
        assert_eq!(two_density(&Graph::cycle(4).unwrap()).unwrap(), Ratio::new(3, 2));
        assert_eq!(two_density(&Graph::complete(4)).unwrap(), Ratio::new(5, 2));
        for k in 2..=5 {
            let c = Graph::cycle(2 * k).unwrap();
            assert_eq!(two_density(&c).unwrap(), Ratio::new(2 * k as i64 - 1, 2 * k as i64 - 2));
        }
    }

    #[test]
    fn matches_edge_subset_oracle() {
        let graphs = [
            Graph::complete(4),
            Graph::complete(5),
            Graph::cycle(5).unwrap(),
            Graph::path(4).unwrap(),
            Graph::complete(4).disjoint_union(&Graph::complete(4)),
            Graph::complete(2).disjoint_union(&Graph::complete(2)),
            Graph::from_edges(5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]).unwrap(),
        ];
        for g in &graphs {
            assert_eq!(two_density(g).unwrap(), brute_two_density(g), "{g:?}");
        }
    }

    #[test]
    fn rejects_sparse_graphs() {
        assert!(two_density(&Graph::complete(2)).is_err());
        assert!(two_density(&Graph::empty(4)).is_err());
    }
}
