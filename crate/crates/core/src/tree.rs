//! Perfect k-ary tree geometry with a fixed level-major site ordering.
//!
//! Site 0 is the root. Sites are numbered breadth-first, left to right, so
//! the children of site `h` are `k*h + 1 ..= k*h + k`. A tree of depth `L`
//! has its root at level `L` and its leaves at level 1; the chain is `k = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub child: usize,
    pub parent: usize,
    /// Level of the child site.
    pub level: usize,
    /// Slot of the child under its parent.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub d: usize,
    pub k: usize,
    pub depth: usize,
    pub sites: usize,
    pub edges: Vec<Edge>,
}

impl TreeShape {
    pub fn new(d: usize, k: usize, depth: usize) -> Result<Self> {
        if d < 2 || k < 1 || depth < 1 {
            return Err(Error::InvalidParameter(format!(
                "tree needs d >= 2, k >= 1, depth >= 1 (got d={d}, k={k}, depth={depth})"
            )));
        }
        let mut sites: usize = 0;
        let mut width: usize = 1;
        for _ in 0..depth {
            sites = sites
                .checked_add(width)
                .ok_or_else(|| Error::InvalidParameter("tree too large".into()))?;
            width = width.saturating_mul(k);
        }
        let mut shape = Self {
            d,
            k,
            depth,
            sites,
            edges: Vec::with_capacity(sites.saturating_sub(1)),
        };
        for child in 1..sites {
            let parent = (child - 1) / k;
            shape.edges.push(Edge {
                child,
                parent,
                level: shape.level_of(child),
                slot: (child - 1) % k,
            });
        }
        Ok(shape)
    }

    /// First site index at tree depth `t` (root depth 0).
    pub fn depth_offset(&self, t: usize) -> usize {
        if self.k == 1 {
            t
        } else {
            (self.k.pow(t as u32) - 1) / (self.k - 1)
        }
    }

    /// Sites at a given level, left to right.
    pub fn sites_at_level(&self, level: usize) -> std::ops::Range<usize> {
        assert!((1..=self.depth).contains(&level), "level out of range");
        let t = self.depth - level;
        let start = self.depth_offset(t);
        start..start + self.k.pow(t as u32)
    }

    pub fn level_of(&self, site: usize) -> usize {
        let mut t = 0;
        while self.depth_offset(t + 1) <= site {
            t += 1;
        }
        self.depth - t
    }

    pub fn children(&self, site: usize) -> std::ops::Range<usize> {
        if self.level_of(site) == 1 {
            return 0..0;
        }
        self.k * site + 1..self.k * site + 1 + self.k
    }

    /// `d^N`, or `None` on overflow.
    pub fn hilbert_dim(&self) -> Option<usize> {
        self.d.checked_pow(self.sites as u32)
    }

    /// Sites of the subtree rooted at `site` in depth-first order, the order
    /// in which a root-to-leaf contraction emits physical indices.
    pub fn subtree_order(&self, site: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![site];
        while let Some(s) = stack.pop() {
            out.push(s);
            stack.extend(self.children(s).rev());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_shape() {
        let t = TreeShape::new(2, 1, 4).unwrap();
        assert_eq!(t.sites, 4);
        assert_eq!(t.edges.len(), 3);
        assert_eq!(
            t.edges[0],
            Edge {
                child: 1,
                parent: 0,
                level: 3,
                slot: 0
            }
        );
        assert_eq!(t.subtree_order(0), vec![0, 1, 2, 3]);
        assert_eq!(t.sites_at_level(1), 3..4);
    }

    #[test]
    fn binary_tree_shape() {
        let t = TreeShape::new(4, 2, 3).unwrap();
        assert_eq!(t.sites, 7);
        assert_eq!(t.sites_at_level(2), 1..3);
        assert_eq!(t.sites_at_level(1), 3..7);
        assert_eq!(t.children(1), 3..5);
        assert_eq!(t.children(4), 0..0);
        assert_eq!(t.subtree_order(0), vec![0, 1, 3, 4, 2, 5, 6]);
        assert_eq!(t.edges.iter().filter(|e| e.level == 1).count(), 4);
        assert_eq!(
            t.edges[5],
            Edge {
                child: 6,
                parent: 2,
                level: 1,
                slot: 1
            }
        );
    }

    #[test]
    fn site_count_formula() {
        for k in 2..5usize {
            for depth in 1..5usize {
                let t = TreeShape::new(2, k, depth).unwrap();
                assert_eq!(t.sites, (k.pow(depth as u32) - 1) / (k - 1));
            }
        }
    }
}
