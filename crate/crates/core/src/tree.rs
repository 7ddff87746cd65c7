//! Uniform spanning trees and population-balanced tree cuts.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::metrics::relative_deviation;

/// The subgraph induced by a node subset, with local adjacency lists.
#[derive(Debug, Clone)]
pub struct Subgraph {
    nodes: Vec<usize>,
    /// Neighbors of local node `u` are `adj[adj_start[u]..adj_start[u + 1]]`.
    adj_start: Vec<usize>,
    adj: Vec<usize>,
}

impl Subgraph {
    /// Errors with [`Error::DisconnectedSubset`] unless the induced
    /// subgraph is connected.
    pub fn induced(graph: &RegionGraph, subset: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; graph.len()];
        for (i, &v) in subset.iter().enumerate() {
            local[v] = i;
        }
        let mut adj_start = Vec::with_capacity(subset.len() + 1);
        let mut adj = Vec::new();
        adj_start.push(0);
        for &v in subset {
            adj.extend(
                graph
                    .neighbors(v)
                    .iter()
                    .filter_map(|&w| (local[w] != usize::MAX).then_some(local[w])),
            );
            adj_start.push(adj.len());
        }
        let sub = Subgraph {
            nodes: subset.to_vec(),
            adj_start,
            adj,
        };
        if !sub.is_connected() {
            return Err(Error::DisconnectedSubset);
        }
        Ok(sub)
    }

    fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[self.adj_start[u]..self.adj_start[u + 1]]
    }

    /// Wilson's algorithm: loop-erased random walks from each node until
    /// they hit the growing tree. The result is uniform over all spanning
    /// trees regardless of the root or the order walks start from.
    pub fn random_spanning_tree<R: Rng + ?Sized>(&self, rng: &mut R) -> SpanningTree {
        let n = self.nodes.len();
        let root = rng.random_range(0..n);
        let mut in_tree = vec![false; n];
        let mut next = vec![usize::MAX; n];
        in_tree[root] = true;
        for start in 0..n {
            let mut u = start;
            while !in_tree[u] {
                let nbrs = self.neighbors(u);
                next[u] = nbrs[rng.random_range(0..nbrs.len())];
                u = next[u];
            }
            // Overwritten `next` pointers already erased any loops.
            u = start;
            while !in_tree[u] {
                in_tree[u] = true;
                u = next[u];
            }
        }
        let parent = next
            .into_iter()
            .enumerate()
            .map(|(i, p)| (i != root).then_some(p))
            .collect();
        SpanningTree {
            nodes: self.nodes.clone(),
            parent,
            root,
        }
    }
}

/// A spanning tree over a node subset, stored as parent links.
///
/// Positions in [`SpanningTree::nodes`] are "local" indices; `parent` links
/// are local too.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    nodes: Vec<usize>,
    parent: Vec<Option<usize>>,
    root: usize,
}

impl SpanningTree {
    /// Builds a tree from parent links, checking it is acyclic and spans
    /// every node.
    pub fn from_parents(nodes: Vec<usize>, parent: Vec<Option<usize>>) -> Result<Self> {
        if nodes.len() != parent.len() || nodes.is_empty() {
            return Err(Error::LengthMismatch(nodes.len(), parent.len()));
        }
        let roots: Vec<usize> = (0..parent.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidConfig(format!(
                "spanning tree needs exactly one root, found {}",
                roots.len()
            )));
        }
        let tree = SpanningTree {
            nodes,
            parent,
            root: roots[0],
        };
        if tree.order_from_root().len() != tree.nodes.len() {
            return Err(Error::InvalidConfig("parent links contain a cycle".into()));
        }
        Ok(tree)
    }

    /// Builds a tree from parent links the caller guarantees form a tree
    /// rooted at local index `root`.
    pub(crate) fn from_parents_unchecked(nodes: Vec<usize>, parent: Vec<Option<usize>>, root: usize) -> Self {
        debug_assert!(parent[root].is_none());
        SpanningTree { nodes, parent, root }
    }

    /// Parent links in local indices.
    pub(crate) fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Local index of the root.
    pub(crate) fn root_local(&self) -> usize {
        self.root
    }

    /// Global node ids, in local order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.nodes[self.root]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tree edges as sorted global pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| {
                p.map(|p| {
                    let (a, b) = (self.nodes[c], self.nodes[p]);
                    (a.min(b), a.max(b))
                })
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Children of every local node in compressed form: the children of
    /// `u` are `list[start[u]..start[u + 1]]`, in increasing local order.
    fn children(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.nodes.len();
        let mut start = vec![0usize; n + 1];
        for p in self.parent.iter().flatten() {
            start[p + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut list = vec![0usize; start[n]];
        for (c, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                list[fill[p]] = c;
                fill[p] += 1;
            }
        }
        (start, list)
    }

    /// Local indices in breadth-first order from the root. Shorter than
    /// `len()` only if the parent links are not a tree.
    fn order_from_root(&self) -> Vec<usize> {
        let (start, list) = self.children();
        let mut order = Vec::with_capacity(self.nodes.len());
        order.push(self.root);
        let mut head = 0;
        while head < order.len() && order.len() <= self.nodes.len() {
            let u = order[head];
            head += 1;
            order.extend_from_slice(&list[start[u]..start[u + 1]]);
        }
        order
    }

    /// Population below each local node (inclusive).
    fn subtree_pops(&self, pops: &[u64]) -> Vec<u64> {
        let mut sub: Vec<u64> = self.nodes.iter().map(|&v| pops[v]).collect();
        for &u in self.order_from_root().iter().rev() {
            if let Some(p) = self.parent[u] {
                sub[p] += sub[u];
            }
        }
        sub
    }

    /// Global ids of the subtree hanging below local node `child`.
    fn subtree_nodes(&self, child: usize) -> Vec<usize> {
        let (start, list) = self.children();
        let mut out = Vec::new();
        let mut stack = vec![child];
        while let Some(u) = stack.pop() {
            out.push(self.nodes[u]);
            stack.extend_from_slice(&list[start[u]..start[u + 1]]);
        }
        out
    }

    /// Splits the tree at `cut`: `(new district, remainder)` in global ids,
    /// each sorted.
    pub fn split(&self, cut: &CutEdge) -> (Vec<usize>, Vec<usize>) {
        let mut below = self.subtree_nodes(cut.child_local);
        below.sort_unstable();
        let mut rest: Vec<usize> = self
            .nodes
            .iter()
            .copied()
            .filter(|v| below.binary_search(v).is_err())
            .collect();
        rest.sort_unstable();
        match cut.district_side {
            DistrictSide::Subtree => (below, rest),
            DistrictSide::Complement => (rest, below),
        }
    }
}

/// Population goals for one binary split of a region that must eventually
/// hold `n_districts` districts: one side becomes a single district, the
/// other keeps `n_districts - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTarget {
    /// Ideal population of one district.
    pub district_pop: f64,
    pub n_districts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistrictSide {
    /// The part below the cut edge becomes the single district.
    Subtree,
    /// The part containing the root becomes the single district.
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutEdge {
    /// Global id of the endpoint away from the root.
    pub child: usize,
    pub parent: usize,
    pub district_side: DistrictSide,
    pub subtree_pop: u64,
    child_local: usize,
}

impl CutEdge {
    pub fn edge(&self) -> (usize, usize) {
        (self.child.min(self.parent), self.child.max(self.parent))
    }
}

fn side_ok(pop: u64, districts: u32, district_pop: f64, tolerance: f64) -> bool {
    relative_deviation(pop as f64, district_pop * districts as f64) <= tolerance
}

/// Tree edges whose removal leaves one single-district side within
/// `tolerance` of `district_pop` and the other side within `tolerance` of
/// `(n_districts - 1) × district_pop`. Regions holding fewer than two
/// districts have no valid cuts.
pub fn balanced_cut_edges(
    tree: &SpanningTree,
    pops: &[u64],
    target: SplitTarget,
    tolerance: f64,
) -> Vec<CutEdge> {
    if target.n_districts < 2 {
        return Vec::new();
    }
    let sub = tree.subtree_pops(pops);
    let total = sub[tree.root];
    let rest_districts = target.n_districts - 1;
    let mut out = Vec::new();
    for (c, p) in tree.parent.iter().enumerate() {
        let Some(p) = *p else { continue };
        let below = sub[c];
        let above = total - below;
        let side = if side_ok(below, 1, target.district_pop, tolerance)
            && side_ok(above, rest_districts, target.district_pop, tolerance)
        {
            Some(DistrictSide::Subtree)
        } else if side_ok(above, 1, target.district_pop, tolerance)
            && side_ok(below, rest_districts, target.district_pop, tolerance)
        {
            Some(DistrictSide::Complement)
        } else {
            None
        };
        if let Some(district_side) = side {
            out.push(CutEdge {
                child: tree.nodes[c],
                parent: tree.nodes[p],
                district_side,
                subtree_pop: below,
                child_local: c,
            });
        }
    }
    out
}

/// Draws a uniform spanning tree of the subgraph induced by `subset`.
pub fn uniform_spanning_tree<R: Rng + ?Sized>(
    graph: &RegionGraph,
    subset: &[usize],
    rng: &mut R,
) -> Result<SpanningTree> {
    Ok(Subgraph::induced(graph, subset)?.random_spanning_tree(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::grid;
    use crate::rng::stream_rng;

    fn path_tree(n: usize) -> SpanningTree {
        let parent = (0..n).map(|i| i.checked_sub(1)).collect();
        SpanningTree::from_parents((0..n).collect(), parent).unwrap()
    }

    #[test]
    fn path_has_one_tree() {
        let g = grid(1, 3);
        let mut rng = stream_rng(1, &[]);
        for _ in 0..20 {
            let t = uniform_spanning_tree(&g, &[0, 1, 2], &mut rng).unwrap();
            assert_eq!(t.edges(), vec![(0, 1), (1, 2)]);
        }
    }

    #[test]
    fn disconnected_subset_errors() {
        let g = grid(1, 3);
        let mut rng = stream_rng(1, &[]);
        assert!(matches!(
            uniform_spanning_tree(&g, &[0, 2], &mut rng),
            Err(Error::DisconnectedSubset)
        ));
    }

    #[test]
    fn tree_spans_subset() {
        let g = grid(4, 4);
        let subset = vec![0, 1, 2, 4, 5, 6, 8, 9];
        let mut rng = stream_rng(3, &[]);
        for _ in 0..50 {
            let t = uniform_spanning_tree(&g, &subset, &mut rng).unwrap();
            let edges = t.edges();
            assert_eq!(edges.len(), subset.len() - 1);
            for (a, b) in edges {
                assert!(g.neighbors(a).contains(&b));
            }
            assert_eq!(t.order_from_root().len(), subset.len());
        }
    }

    #[test]
    fn from_parents_rejects_cycles() {
        assert!(SpanningTree::from_parents(vec![0, 1, 2], vec![None, Some(2), Some(1)]).is_err());
        assert!(SpanningTree::from_parents(vec![0, 1], vec![None, None]).is_err());
    }

    #[test]
    fn path_middle_edge_only() {
        let t = path_tree(4);
        let cuts = balanced_cut_edges(
            &t,
            &[1, 1, 1, 1],
            SplitTarget {
                district_pop: 2.0,
                n_districts: 2,
            },
            0.0,
        );
        assert_eq!(cuts.len(), 1);
        assert_eq!(cuts[0].edge(), (1, 2));
        let (d, r) = t.split(&cuts[0]);
        assert_eq!((d.len(), r.len()), (2, 2));
    }

    #[test]
    fn star_has_no_balanced_cut() {
        // Center 0 with pop 10, four leaves with pop 1.
        let t = SpanningTree::from_parents(
            (0..5).collect(),
            vec![None, Some(0), Some(0), Some(0), Some(0)],
        )
        .unwrap();
        let cuts = balanced_cut_edges(
            &t,
            &[10, 1, 1, 1, 1],
            SplitTarget {
                district_pop: 7.0,
                n_districts: 2,
            },
            0.0,
        );
        assert!(cuts.is_empty());
    }

    #[test]
    fn peel_side_orientation() {
        // Path of 6 unit nodes rooted at 0, peeling one of three districts:
        // the subtree {4,5} or the complement {0,1} may be the district.
        let t = path_tree(6);
        let cuts = balanced_cut_edges(
            &t,
            &[1; 6],
            SplitTarget {
                district_pop: 2.0,
                n_districts: 3,
            },
            0.0,
        );
        let sides: Vec<_> = cuts.iter().map(|c| (c.edge(), c.district_side)).collect();
        assert_eq!(
            sides,
            vec![((1, 2), DistrictSide::Complement), ((3, 4), DistrictSide::Subtree)]
        );
        assert_eq!(t.split(&cuts[0]).0, vec![0, 1]);
        assert_eq!(t.split(&cuts[1]).0, vec![4, 5]);
    }

    #[test]
    fn single_district_region_has_no_cuts() {
        let t = path_tree(3);
        let cuts = balanced_cut_edges(
            &t,
            &[1; 3],
            SplitTarget {
                district_pop: 3.0,
                n_districts: 1,
            },
            1.0,
        );
        assert!(cuts.is_empty());
    }
}
