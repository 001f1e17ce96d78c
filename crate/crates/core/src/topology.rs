//! Agent communication graph and Metropolis consensus weights.
//!
//! Nodes are stored 0-based. Anything rendered for humans (errors, the
//! `weights` report) uses 1-based labels.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("adjacency matrix is empty")]
    Empty,
    #[error("adjacency matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("adjacency entry must be 0 or 1, found {value} at ({row}, {col})")]
    BadEntry { row: usize, col: usize, value: i64 },
    #[error("adjacency matrix is asymmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("graph is disconnected: node {unreachable} is unreachable from node 1")]
    Disconnected { unreachable: usize },
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
}

/// The five-node network used throughout the default scenario.
pub const REFERENCE_ADJACENCY: [[u8; 5]; 5] = [
    [1, 0, 0, 1, 0],
    [0, 1, 1, 0, 0],
    [0, 1, 1, 1, 1],
    [1, 0, 1, 1, 0],
    [0, 0, 1, 0, 1],
];

/// Validated undirected communication graph.
///
/// The diagonal is always set; neighbor lists exclude self and are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    adjacency: Vec<Vec<bool>>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    pub fn new(mut adjacency: Vec<Vec<bool>>) -> Result<Self, TopologyError> {
        let n = adjacency.len();
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        for (row, r) in adjacency.iter().enumerate() {
            if r.len() != n {
                return Err(TopologyError::NotSquare { row: row + 1, len: r.len(), n });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(TopologyError::Asymmetric { row: i + 1, col: j + 1 });
                }
            }
        }
        for (i, row) in adjacency.iter_mut().enumerate() {
            row[i] = true;
        }
        let neighbors: Vec<Vec<usize>> = adjacency
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(j, &linked)| linked && j != i)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(TopologyError::Disconnected { unreachable: missing + 1 });
        }

        Ok(Self { adjacency, neighbors })
    }

    /// Builds a graph from rows of 0/1 integers, the scenario-file encoding.
    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self, TopologyError> {
        let mut adjacency = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut out = Vec::with_capacity(row.as_ref().len());
            for (j, &value) in row.as_ref().iter().enumerate() {
                match value {
                    0 => out.push(false),
                    1 => out.push(true),
                    _ => return Err(TopologyError::BadEntry { row: i + 1, col: j + 1, value }),
                }
            }
            adjacency.push(out);
        }
        Self::new(adjacency)
    }

    pub fn reference() -> Self {
        let rows: Vec<Vec<i64>> = REFERENCE_ADJACENCY
            .iter()
            .map(|r| r.iter().map(|&v| i64::from(v)).collect())
            .collect();
        Self::from_rows(&rows).expect("reference topology is valid")
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    fn check(&self, i: usize) -> Result<(), TopologyError> {
        if i < self.len() {
            Ok(())
        } else {
            Err(TopologyError::IndexOutOfRange { index: i, n: self.len() })
        }
    }

    /// Sorted neighbor indices of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> Result<&[usize], TopologyError> {
        self.check(i)?;
        Ok(&self.neighbors[i])
    }

    pub fn degree(&self, i: usize) -> Result<usize, TopologyError> {
        self.neighbors(i).map(<[usize]>::len)
    }

    /// True for distinct linked nodes. Self pairs are not edges.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && i < self.len() && j < self.len() && self.adjacency[i][j]
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    /// Undirected edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, TopologyError> {
        let n = self.len();
        if perm.len() != n {
            return Err(TopologyError::NotSquare { row: 0, len: perm.len(), n });
        }
        if let Some(&bad) = perm.iter().find(|&&p| p >= n) {
            return Err(TopologyError::IndexOutOfRange { index: bad, n });
        }
        let mut adjacency = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                adjacency[perm[i]][perm[j]] = self.adjacency[i][j];
            }
        }
        Self::new(adjacency)
    }
}

/// Consensus weights plus the neighbor structure they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: Vec<Vec<f64>>,
    neighbors: Vec<Vec<usize>>,
}

impl WeightMatrix {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// One averaging step `W·x`.
    ///
    /// Each entry is accumulated over neighbors in ascending index order with
    /// the self term added last. The agent update uses the same order, so the
    /// two paths agree bit for bit.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len(), "vector length must match weight matrix");
        (0..self.len())
            .map(|i| {
                let mut acc = 0.0;
                for &j in &self.neighbors[i] {
                    acc += self.w[i][j] * x[j];
                }
                acc + self.w[i][i] * x[i]
            })
            .collect()
    }
}

impl fmt::Display for WeightMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>6}", "")?;
        for j in 0..self.len() {
            write!(f, " {:>10}", format!("{}", j + 1))?;
        }
        writeln!(f)?;
        for (i, row) in self.w.iter().enumerate() {
            write!(f, "{:>6}", i + 1)?;
            for v in row {
                write!(f, " {v:>10.6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Metropolis rule: `1/max(n_i, n_j)` between neighbors, self weight is the
/// row complement.
pub fn metropolis_weights(graph: &CommGraph) -> WeightMatrix {
    let n = graph.len();
    let degree: Vec<usize> = graph.neighbors.iter().map(Vec::len).collect();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut off = 0.0;
        for &j in &graph.neighbors[i] {
            let a = 1.0 / degree[i].max(degree[j]) as f64;
            w[i][j] = a;
            off += a;
        }
        w[i][i] = 1.0 - off;
    }
    WeightMatrix { w, neighbors: graph.neighbors.clone() }
}
