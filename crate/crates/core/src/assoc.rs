//! Item association graph built from co-adjacency in training sequences.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{check_index, Result};

/// Undirected weighted item graph. `neighbors(i)` holds `(i', δ)` pairs with
/// `δ` the number of times `i` and `i'` were adjacent; never contains `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationGraph {
    neighbors: Vec<Vec<(usize, u32)>>,
    degree_weight: Vec<u64>,
    window: usize,
}

impl AssociationGraph {
    /// Counts every pair of positions at most `window` apart inside each
    /// sequence, skipping pairs of identical items. Only training prefixes
    /// should be passed in.
    pub fn build<'a, I>(sequences: I, n_items: usize, window: usize) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let window = window.max(1);
        let mut counts: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); n_items];
        for seq in sequences {
            for (t, &a) in seq.iter().enumerate() {
                for &b in seq.iter().skip(t + 1).take(window) {
                    if a == b {
                        continue;
                    }
                    *counts[a].entry(b).or_default() += 1;
                    *counts[b].entry(a).or_default() += 1;
                }
            }
        }
        let neighbors: Vec<Vec<(usize, u32)>> = counts.into_iter().map(|m| m.into_iter().collect()).collect();
        let degree_weight = neighbors
            .iter()
            .map(|ns| ns.iter().map(|&(_, w)| u64::from(w)).sum())
            .collect();
        Self {
            neighbors,
            degree_weight,
            window,
        }
    }

    /// Graph over the training prefixes of `ds` with adjacency window 1.
    pub fn from_dataset(ds: &crate::Dataset) -> Self {
        Self::build(ds.train_prefixes(), ds.n_items(), 1)
    }

    /// A graph with no edges; every item scores through its own factors only.
    pub fn empty(n_items: usize) -> Self {
        Self::build(std::iter::empty(), n_items, 1)
    }

    pub fn n_items(&self) -> usize {
        self.neighbors.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Neighbors of `item` in ascending index order.
    pub fn neighbors(&self, item: usize) -> Result<&[(usize, u32)]> {
        check_index("item", item, self.n_items())?;
        Ok(&self.neighbors[item])
    }

    pub(crate) fn neighbors_unchecked(&self, item: usize) -> &[(usize, u32)] {
        &self.neighbors[item]
    }

    pub fn degree_weight(&self, item: usize) -> Result<u64> {
        check_index("item", item, self.n_items())?;
        Ok(self.degree_weight[item])
    }

    pub(crate) fn degree_weight_unchecked(&self, item: usize) -> u64 {
        self.degree_weight[item]
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Writes `i,i',δ` lines for every directed view, ascending by `i` then `i'`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &(j, w) in ns {
                writeln!(out, "{i},{j},{w}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use proptest::prelude::*;

    fn graph(seqs: &[&[usize]], m: usize) -> AssociationGraph {
        AssociationGraph::build(seqs.iter().copied(), m, 1)
    }

    // Brute force: count unordered consecutive pairs with distinct items.
    fn brute(seqs: &[Vec<usize>], m: usize) -> Vec<Vec<u32>> {
        let mut w = vec![vec![0u32; m]; m];
        for s in seqs {
            for pair in s.windows(2) {
                if pair[0] != pair[1] {
                    w[pair[0]][pair[1]] += 1;
                    w[pair[1]][pair[0]] += 1;
                }
            }
        }
        w
    }

    #[test]
    fn two_user_example() {
        let g = graph(&[&[1, 2, 3], &[2, 3, 4]], 5);
        assert_eq!(g.neighbors(3).unwrap(), &[(2, 2), (4, 1)]);
        assert_eq!(g.degree_weight(3).unwrap(), 3);
        assert_eq!(g.neighbors(0).unwrap(), &[]);
        assert!(matches!(g.neighbors(5), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn singletons_give_empty_graph() {
        let g = graph(&[&[1], &[2], &[0]], 3);
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn self_pairs_skipped() {
        let g = graph(&[&[1, 1, 2]], 3);
        assert_eq!(g.neighbors(1).unwrap(), &[(2, 1)]);
        assert_eq!(g.neighbors(2).unwrap(), &[(1, 1)]);
    }

    #[test]
    fn wider_window_adds_skip_pairs() {
        let g = AssociationGraph::build([&[0usize, 1, 2][..]], 3, 2);
        assert_eq!(g.neighbors(0).unwrap(), &[(1, 1), (2, 1)]);
    }

    #[test]
    fn edge_list_format() {
        let g = graph(&[&[1, 2, 3], &[2, 3, 4]], 5);
        let mut out = Vec::new();
        g.write_edge_list(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "1,2,1\n2,1,1\n2,3,2\n3,2,2\n3,4,1\n4,3,1\n"
        );
    }

    proptest! {
        #[test]
        fn matches_brute_force(seqs in prop::collection::vec(prop::collection::vec(0usize..10, 0..12), 0..20)) {
            let g = AssociationGraph::build(seqs.iter().map(Vec::as_slice), 10, 1);
            let w = brute(&seqs, 10);
            let mut pairs = 0u64;
            for s in &seqs {
                pairs += s.windows(2).filter(|p| p[0] != p[1]).count() as u64;
            }
            let mut total = 0;
            for (i, row) in w.iter().enumerate() {
                let expect: Vec<(usize, u32)> = (0..10).filter(|&j| row[j] > 0).map(|j| (j, row[j])).collect();
                prop_assert_eq!(g.neighbors(i).unwrap(), &expect[..]);
                for &(j, d) in g.neighbors(i).unwrap() {
                    prop_assert!(j != i && d >= 1);
                    prop_assert!(g.neighbors(j).unwrap().contains(&(i, d)));
                }
                total += g.degree_weight(i).unwrap();
            }
            prop_assert_eq!(total, 2 * pairs);

            let mut reversed = seqs.clone();
            reversed.reverse();
            prop_assert_eq!(AssociationGraph::build(reversed.iter().map(Vec::as_slice), 10, 1), g);
        }
    }
}
