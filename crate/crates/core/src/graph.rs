//! Undirected graphs supplying the neighborhoods used by local updates.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Undirected graph on `p` nodes stored as sorted adjacency lists.
/// Symmetric, no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Graph with `p` isolated nodes.
    pub fn empty(p: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); p],
        }
    }

    /// Build from an edge list; duplicate and reversed edges are deduplicated.
    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); p];
        for &(i, j) in edges {
            if i >= p || j >= p {
                return Err(Error::InvalidDimension(format!(
                    "edge ({i}, {j}) out of range for p = {p}"
                )));
            }
            if i == j {
                return Err(Error::Parse(format!("self-loop at node {i}")));
            }
            adj[i].insert(j);
            adj[j].insert(i);
        }
        Ok(Self {
            adjacency: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Band graph: nodes i, j adjacent iff 1 <= |i - j| <= bandwidth.
    pub fn band(p: usize, bandwidth: usize) -> Self {
        let mut adj = vec![Vec::new(); p];
        for i in 0..p {
            for j in i.saturating_sub(bandwidth)..(i + bandwidth + 1).min(p) {
                if j != i {
                    adj[i].push(j);
                }
            }
        }
        Self { adjacency: adj }
    }

    /// Parse the plain-text edge-list format: a header line `p=<int>`, then
    /// one edge per line as two 1-based node ids separated by whitespace or a
    /// comma. Duplicates and reversed edges are deduplicated; isolated nodes
    /// are implied by the header count.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let p: usize = header
            .strip_prefix("p=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| {
                Error::Parse(format!("expected header line `p=<int>`, got `{header}`"))
            })?;
        let mut edges = Vec::new();
        for line in lines {
            let parts: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if parts.len() != 2 {
                return Err(Error::Parse(format!("expected two node ids, got `{line}`")));
            }
            let a: usize = parts[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad node id `{}`", parts[0])))?;
            let b: usize = parts[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad node id `{}`", parts[1])))?;
            if a == 0 || b == 0 {
                return Err(Error::Parse(format!("node ids are 1-based, got `{line}`")));
            }
            edges.push((a - 1, b - 1));
        }
        Self::from_edges(p, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// True if every edge of `other` is also an edge of `self`.
    pub fn contains(&self, other: &Graph) -> bool {
        if self.node_count() != other.node_count() {
            return false;
        }
        other
            .adjacency
            .iter()
            .enumerate()
            .all(|(i, nbrs)| nbrs.iter().all(|&j| self.has_edge(i, j)))
    }

    /// Relabel nodes: node i of the original becomes `perm[i]` in the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let p = self.node_count();
        if perm.len() != p {
            return Err(Error::InvalidDimension(format!(
                "permutation length {} for {} nodes",
                perm.len(),
                p
            )));
        }
        let mut seen = vec![false; p];
        for &q in perm {
            if q >= p || seen[q] {
                return Err(Error::Parse("not a permutation".into()));
            }
            seen[q] = true;
        }
        let mut adj = vec![Vec::new(); p];
        for i in 0..p {
            for &j in &self.adjacency[i] {
                adj[perm[i]].push(perm[j]);
            }
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        Ok(Self { adjacency: adj })
    }
}
