//! Sparse binary matrices with row and column adjacency, alist I/O and
//! Tanner-graph girth.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparseError {
    #[error("entry ({0}, {1}) outside a {2}x{3} matrix")]
    OutOfRange(usize, usize, usize, usize),
    #[error("duplicate entry ({0}, {1})")]
    Duplicate(usize, usize),
    #[error("alist: {0}")]
    Alist(String),
}

/// Binary matrix stored as sorted row and column incidence lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_adj: Vec<Vec<u32>>,
    col_adj: Vec<Vec<u32>>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_adj: vec![Vec::new(); rows],
            col_adj: vec![Vec::new(); cols],
        }
    }

    /// Builds a matrix from `(row, col)` pairs; duplicates are rejected.
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, SparseError> {
        let mut m = SparseMatrix::new(rows, cols);
        for (r, c) in entries {
            if r >= rows || c >= cols {
                return Err(SparseError::OutOfRange(r, c, rows, cols));
            }
            m.row_adj[r].push(c as u32);
            m.col_adj[c].push(r as u32);
        }
        for r in 0..rows {
            m.row_adj[r].sort_unstable();
            if let Some(w) = m.row_adj[r].windows(2).find(|w| w[0] == w[1]) {
                return Err(SparseError::Duplicate(r, w[0] as usize));
            }
        }
        for c in 0..cols {
            m.col_adj[c].sort_unstable();
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.row_adj.iter().map(Vec::len).sum()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.row_adj[r]
    }

    pub fn col(&self, c: usize) -> &[u32] {
        &self.col_adj[c]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_adj[r].binary_search(&(c as u32)).is_ok()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_adj
            .iter()
            .enumerate()
            .flat_map(|(r, cs)| cs.iter().map(move |&c| (r, c as usize)))
    }

    /// Leading `cols` columns.
    pub fn leading_columns(&self, cols: usize) -> SparseMatrix {
        assert!(cols <= self.cols);
        SparseMatrix::from_entries(self.rows, cols, self.entries().filter(|&(_, c)| c < cols))
            .expect("sub-matrix of a valid matrix")
    }

    /// Leading `rows` rows.
    pub fn leading_rows(&self, rows: usize) -> SparseMatrix {
        assert!(rows <= self.rows);
        SparseMatrix::from_entries(rows, self.cols, self.entries().filter(|&(r, _)| r < rows))
            .expect("sub-matrix of a valid matrix")
    }

    /// Rows `range`, renumbered from zero.
    pub fn row_slice(&self, range: std::ops::Range<usize>) -> SparseMatrix {
        let start = range.start;
        SparseMatrix::from_entries(
            range.len(),
            self.cols,
            self.entries()
                .filter(|(r, _)| range.contains(r))
                .map(|(r, c)| (r - start, c)),
        )
        .expect("sub-matrix of a valid matrix")
    }

    /// Columns `range`, renumbered from zero.
    pub fn col_slice(&self, range: std::ops::Range<usize>) -> SparseMatrix {
        let start = range.start;
        SparseMatrix::from_entries(
            self.rows,
            range.len(),
            self.entries()
                .filter(|(_, c)| range.contains(c))
                .map(|(r, c)| (r, c - start)),
        )
        .expect("sub-matrix of a valid matrix")
    }

    /// `H x` over GF(2) for a 0/1 vector `x`.
    pub fn mul_vec(&self, x: &[u8]) -> Vec<u8> {
        assert_eq!(x.len(), self.cols);
        self.row_adj
            .iter()
            .map(|cs| cs.iter().fold(0u8, |acc, &c| acc ^ (x[c as usize] & 1)))
            .collect()
    }

    pub fn is_codeword(&self, x: &[u8]) -> bool {
        self.mul_vec(x).iter().all(|&b| b == 0)
    }

    /// Length of the shortest cycle in the Tanner graph, `None` if acyclic.
    ///
    /// `sources` restricts the BFS roots to the given variable nodes; every
    /// cycle must pass through one of them for the answer to be exact (all
    /// variables, or one representative per circulant orbit).
    pub fn girth_from(&self, sources: impl IntoIterator<Item = usize>) -> Option<usize> {
        // nodes: variables 0..cols, checks cols..cols+rows
        let n = self.cols + self.rows;
        let mut dist = vec![u32::MAX; n];
        let mut parent = vec![u32::MAX; n];
        let mut touched = Vec::new();
        let mut best = usize::MAX;
        let mut queue = VecDeque::new();
        for s in sources {
            for &t in &touched {
                dist[t] = u32::MAX;
                parent[t] = u32::MAX;
            }
            touched.clear();
            queue.clear();
            dist[s] = 0;
            touched.push(s);
            queue.push_back(s);
            'bfs: while let Some(u) = queue.pop_front() {
                let du = dist[u] as usize;
                if 2 * du + 1 >= best {
                    break;
                }
                let neigh: &[u32] = if u < self.cols {
                    &self.col_adj[u]
                } else {
                    &self.row_adj[u - self.cols]
                };
                for &w in neigh {
                    let w = if u < self.cols {
                        w as usize + self.cols
                    } else {
                        w as usize
                    };
                    if w as u32 == parent[u] {
                        continue;
                    }
                    if dist[w] == u32::MAX {
                        dist[w] = du as u32 + 1;
                        parent[w] = u as u32;
                        touched.push(w);
                        queue.push_back(w);
                    } else {
                        best = best.min(du + dist[w] as usize + 1);
                        if best == 4 {
                            break 'bfs;
                        }
                    }
                }
            }
            if best == 4 {
                break;
            }
        }
        (best != usize::MAX).then_some(best)
    }

    pub fn girth(&self) -> Option<usize> {
        self.girth_from(0..self.cols)
    }

    /// MacKay alist text (1-based indices, zero padded).
    pub fn to_alist(&self) -> String {
        let mut s = String::new();
        let max_col = self.col_adj.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.row_adj.iter().map(Vec::len).max().unwrap_or(0);
        let _ = writeln!(s, "{} {}", self.cols, self.rows);
        let _ = writeln!(s, "{} {}", max_col, max_row);
        let join = |v: Vec<String>| v.join(" ");
        let _ = writeln!(s, "{}", join(self.col_adj.iter().map(|c| c.len().to_string()).collect()));
        let _ = writeln!(s, "{}", join(self.row_adj.iter().map(|r| r.len().to_string()).collect()));
        for (adj, width) in [(&self.col_adj, max_col), (&self.row_adj, max_row)] {
            for list in adj {
                let mut items: Vec<String> = list.iter().map(|&x| (x + 1).to_string()).collect();
                items.resize(width, "0".to_string());
                let _ = writeln!(s, "{}", join(items));
            }
        }
        s
    }

    pub fn from_alist(text: &str) -> Result<SparseMatrix, SparseError> {
        let err = |m: &str| SparseError::Alist(m.to_string());
        let mut nums = text
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| err("non-integer token")));
        let mut next = || nums.next().unwrap_or_else(|| Err(err("truncated")));
        let cols = next()?;
        let rows = next()?;
        let max_col = next()?;
        let max_row = next()?;
        let col_deg = (0..cols).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
        let row_deg = (0..rows).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
        let mut entries = Vec::new();
        for (c, &d) in col_deg.iter().enumerate() {
            for k in 0..max_col {
                let r = next()?;
                if k < d {
                    if r == 0 {
                        return Err(err("zero index inside column degree"));
                    }
                    entries.push((r - 1, c));
                } else if r != 0 {
                    return Err(err("column padding must be zero"));
                }
            }
        }
        let m = SparseMatrix::from_entries(rows, cols, entries)?;
        for (r, &d) in row_deg.iter().enumerate() {
            let mut listed = Vec::with_capacity(d);
            for k in 0..max_row {
                let c = next()?;
                if k < d {
                    if c == 0 {
                        return Err(err("zero index inside row degree"));
                    }
                    listed.push(c as u32 - 1);
                }
            }
            listed.sort_unstable();
            if listed != m.row_adj[r] {
                return Err(err("row lists disagree with column lists"));
            }
        }
        Ok(m)
    }
}
