//! Two-step lifting of proto-matrices to sparse parity-check matrices.
//!
//! A first PEG lift by a small factor separates parallel edges; a circulant
//! lift by `Q` then reaches the target length. Lifted indices are laid out
//! so that prototype column `j` owns columns `[j F, (j + 1) F)` with
//! `F = factor * Q`, and likewise for rows: lineage is `(r / F, c / F)`, and
//! sub-codes of a nested family are leading columns or leading rows.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::protograph::{ExtensionKind, ProtoError, ProtoMatrix};
use crate::sparse::{SparseError, SparseMatrix};

/// Factor of the first, parallel-edge removing lift.
pub const PEG_FACTOR: usize = 4;

/// Fresh RNG streams tried before the first-stage PEG gives up.
const PEG_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("lift factor {factor} cannot separate {entry} parallel edges")]
    FactorTooSmall { factor: usize, entry: u8 },
    #[error("lift factor must be positive")]
    ZeroFactor,
    #[error("PEG could not complete the first-stage lift")]
    PegStuck,
    #[error("family is empty")]
    EmptyFamily,
    #[error("{0} is not nested in the family's extreme member")]
    NotNested(String),
    #[error("information length {info} is not a multiple of {unit}")]
    InfoLength { info: usize, unit: usize },
    #[error("metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Sparse parity-check matrix lifted from a proto-matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedCode {
    pub h: SparseMatrix,
    pub proto: ProtoMatrix,
    pub peg_factor: usize,
    pub circulant: usize,
    pub seed: u64,
    pub girth: Option<usize>,
}

impl LiftedCode {
    /// Total lift factor `F`.
    pub fn lift_factor(&self) -> usize {
        self.peg_factor * self.circulant
    }

    pub fn n(&self) -> usize {
        self.h.cols()
    }

    pub fn m(&self) -> usize {
        self.h.rows()
    }

    /// Prototype edge type `(row, col)` of a lifted entry.
    pub fn lineage(&self, r: usize, c: usize) -> (usize, usize) {
        let f = self.lift_factor();
        (r / f, c / f)
    }

    pub fn is_punctured(&self, c: usize) -> bool {
        self.proto.is_punctured(c / self.lift_factor())
    }

    /// Column ranges actually sent over the channel, in order.
    pub fn transmitted_ranges(&self) -> Vec<Range<usize>> {
        let f = self.lift_factor();
        let mut out: Vec<Range<usize>> = Vec::new();
        for j in (0..self.proto.vars()).filter(|&j| !self.proto.is_punctured(j)) {
            match out.last_mut() {
                Some(last) if last.end == j * f => last.end = (j + 1) * f,
                _ => out.push(j * f..(j + 1) * f),
            }
        }
        out
    }

    /// Transmitted column indices, in order.
    pub fn transmitted(&self) -> Vec<usize> {
        self.transmitted_ranges().into_iter().flatten().collect()
    }

    pub fn transmitted_len(&self) -> usize {
        self.proto.transmitted_vars() * self.lift_factor()
    }

    /// `(V - C) F`, the dimension when `H` has full rank.
    pub fn design_info_len(&self) -> usize {
        (self.proto.vars() - self.proto.checks()) * self.lift_factor()
    }

    /// Sidecar text describing how the matrix was produced.
    pub fn meta(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.proto.name());
        let _ = writeln!(s, "peg_factor={}", self.peg_factor);
        let _ = writeln!(s, "circulant={}", self.circulant);
        let _ = writeln!(s, "seed={}", self.seed);
        let girth = self.girth.map_or("none".to_string(), |g| g.to_string());
        let _ = writeln!(s, "girth={girth}");
        let ranges: Vec<String> = self
            .transmitted_ranges()
            .iter()
            .map(|r| format!("{}..{}", r.start, r.end))
            .collect();
        let _ = writeln!(s, "transmitted={}", ranges.join(","));
        let _ = writeln!(s, "proto:");
        s.push_str(&self.proto.to_text());
        s
    }

    /// Rebuilds a code from alist text and its sidecar.
    pub fn from_parts(alist: &str, meta: &str) -> Result<LiftedCode, LiftError> {
        let err = |m: &str| LiftError::Meta(m.to_string());
        let h = SparseMatrix::from_alist(alist)?;
        let (head, proto_text) = meta.split_once("proto:\n").ok_or_else(|| err("missing proto"))?;
        let mut name = None;
        let mut peg = None;
        let mut q = None;
        let mut seed = None;
        let mut girth = None;
        for line in head.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            match k.trim() {
                "name" => name = Some(v.trim().to_string()),
                "peg_factor" => peg = v.trim().parse().ok(),
                "circulant" => q = v.trim().parse().ok(),
                "seed" => seed = v.trim().parse().ok(),
                "girth" => girth = Some(v.trim().parse().ok()),
                _ => {}
            }
        }
        let name = name.ok_or_else(|| err("missing name"))?;
        let proto = ProtoMatrix::from_text(name, proto_text)?;
        let code = LiftedCode {
            h,
            proto,
            peg_factor: peg.ok_or_else(|| err("missing peg_factor"))?,
            circulant: q.ok_or_else(|| err("missing circulant"))?,
            seed: seed.ok_or_else(|| err("missing seed"))?,
            girth: girth.ok_or_else(|| err("missing girth"))?,
        };
        let f = code.lift_factor();
        if code.h.rows() != code.proto.checks() * f || code.h.cols() != code.proto.vars() * f {
            return Err(err("matrix shape does not match the proto-matrix"));
        }
        Ok(code)
    }
}

/// First-stage lift: every entry `b` of `p` becomes a `factor x factor`
/// binary block with `b` ones per row and column, placed by progressive
/// edge growth. Ties go to the check copy of lowest current degree, then to
/// a seeded random pick.
pub fn peg_lift(p: &ProtoMatrix, factor: usize, seed: u64) -> Result<SparseMatrix, LiftError> {
    if factor == 0 {
        return Err(LiftError::ZeroFactor);
    }
    let max = p.entries().max_entry();
    if max as usize > factor {
        return Err(LiftError::FactorTooSmall { factor, entry: max });
    }
    for attempt in 0..PEG_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        if let Some(h) = peg_attempt(p, factor, &mut rng) {
            return Ok(h);
        }
    }
    Err(LiftError::PegStuck)
}

fn peg_attempt(p: &ProtoMatrix, factor: usize, rng: &mut ChaCha8Rng) -> Option<SparseMatrix> {
    let (rows, cols) = (p.checks() * factor, p.vars() * factor);
    let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); rows];
    let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); cols];
    // remaining ones per (proto edge type, row copy)
    let mut cap: Vec<Vec<usize>> = (0..p.checks() * p.vars())
        .map(|k| vec![p.get(k / p.vars(), k % p.vars()) as usize; factor])
        .collect();
    let mut order: Vec<usize> = (0..p.vars()).collect();
    order.sort_by_key(|&j| p.column_sum(j));
    let mut dist = vec![usize::MAX; rows + cols];
    for &j in &order {
        for b in 0..factor {
            let v = j * factor + b;
            // copies of column j still to be placed, this one included
            let left = factor - b;
            for i in 0..p.checks() {
                let want = p.get(i, j) as usize;
                let cap_i = &mut cap[i * p.vars() + j];
                for _ in 0..want {
                    bfs_distances(&row_adj, &col_adj, cols, v, &mut dist);
                    let open: Vec<usize> = (0..factor)
                        .filter(|&a| cap_i[a] > 0 && !col_adj[v].contains(&(i * factor + a)))
                        .collect();
                    // a copy whose capacity equals the remaining columns
                    // must be used now or the block cannot be completed
                    let forced: Vec<usize> = open.iter().copied().filter(|&a| cap_i[a] >= left).collect();
                    let pool = if forced.is_empty() { open } else { forced };
                    if pool.is_empty() {
                        return None;
                    }
                    let score = |a: usize| {
                        let r = i * factor + a;
                        (std::cmp::Reverse(dist[cols + r]), row_adj[r].len())
                    };
                    let best = pool.iter().map(|&a| score(a)).min().unwrap();
                    let ties: Vec<usize> = pool.into_iter().filter(|&a| score(a) == best).collect();
                    let a = *ties.choose(rng).unwrap();
                    cap_i[a] -= 1;
                    let r = i * factor + a;
                    row_adj[r].push(v);
                    col_adj[v].push(r);
                }
            }
        }
    }
    let entries = col_adj
        .iter()
        .enumerate()
        .flat_map(|(c, rs)| rs.iter().map(move |&r| (r, c)));
    SparseMatrix::from_entries(rows, cols, entries).ok()
}

/// BFS distances from variable `v`; checks are offset by `cols`.
fn bfs_distances(row_adj: &[Vec<usize>], col_adj: &[Vec<usize>], cols: usize, v: usize, dist: &mut [usize]) {
    dist.fill(usize::MAX);
    dist[v] = 0;
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u] + 1;
        let next: &[usize] = if u < cols { &col_adj[u] } else { &row_adj[u - cols] };
        for &w in next {
            let w = if u < cols { w + cols } else { w };
            if dist[w] == usize::MAX {
                dist[w] = d;
                queue.push_back(w);
            }
        }
    }
}

/// Circulant shift per edge of a binary base matrix, chosen edge by edge in
/// PEG fashion: each shift maximizes the shortest cycle it closes in the
/// partially lifted graph, ties going to the smallest shift.
///
/// Every variable of a circulant block sees the same graph up to a cyclic
/// relabeling, so one search from the block's first variable gives the
/// local girth of every candidate shift at once.
pub fn choose_shifts(base: &SparseMatrix, q: usize) -> Vec<Vec<usize>> {
    let (rows, cols) = (base.rows(), base.cols());
    let mut shift: Vec<Vec<usize>> = (0..rows).map(|r| vec![0; base.row(r).len()]).collect();
    let mut var_adj: Vec<Vec<u32>> = vec![Vec::new(); cols * q];
    let mut chk_adj: Vec<Vec<u32>> = vec![Vec::new(); rows * q];
    let mut var_seen = vec![u32::MAX; cols * q];
    let mut chk_dist = vec![u32::MAX; rows * q];
    let mut frontier: Vec<u32> = Vec::new();
    let mut next: Vec<u32> = Vec::new();
    let mut stamp = 0u32;
    for j in 0..cols {
        for &i in base.col(j) {
            let i = i as usize;
            // breadth-first search from variable j*q over the current graph
            stamp += 1;
            let v0 = (j * q) as u32;
            var_seen[v0 as usize] = stamp;
            frontier.clear();
            frontier.push(v0);
            let mut touched: Vec<u32> = Vec::new();
            let mut depth = 1u32;
            while !frontier.is_empty() {
                next.clear();
                for &v in &frontier {
                    for &c in &var_adj[v as usize] {
                        if chk_dist[c as usize] == u32::MAX {
                            chk_dist[c as usize] = depth;
                            touched.push(c);
                            for &w in &chk_adj[c as usize] {
                                if var_seen[w as usize] != stamp {
                                    var_seen[w as usize] = stamp;
                                    next.push(w);
                                }
                            }
                        }
                    }
                }
                std::mem::swap(&mut frontier, &mut next);
                depth += 2;
            }
            // shift s joins check i*q + (q - s) % q to variable j*q
            let s = (0..q)
                .max_by_key(|&s| (chk_dist[i * q + (q - s) % q], std::cmp::Reverse(s)))
                .unwrap();
            for &c in &touched {
                chk_dist[c as usize] = u32::MAX;
            }
            let k = base.row(i).binary_search(&(j as u32)).unwrap();
            shift[i][k] = s;
            for t in 0..q {
                let c = i * q + t;
                let v = j * q + (t + s) % q;
                chk_adj[c].push(v as u32);
                var_adj[v].push(c as u32);
            }
        }
    }
    shift
}

/// Expands a binary base matrix by `q x q` circulants: base entry `(I, J)`
/// with shift `s` connects row `I q + k` to column `J q + (k + s) mod q`.
pub fn expand_circulant(base: &SparseMatrix, q: usize, shifts: &[Vec<usize>]) -> SparseMatrix {
    let mut entries = Vec::with_capacity(base.nnz() * q);
    for r in 0..base.rows() {
        for (k, &c) in base.row(r).iter().enumerate() {
            let s = shifts[r][k];
            for t in 0..q {
                entries.push((r * q + t, c as usize * q + (t + s) % q));
            }
        }
    }
    SparseMatrix::from_entries(base.rows() * q, base.cols() * q, entries).expect("circulant blocks are disjoint")
}

/// Girth of a circulant lift, searching from one column per orbit.
pub fn circulant_girth(h: &SparseMatrix, q: usize) -> Option<usize> {
    h.girth_from((0..h.cols() / q).map(|j| j * q))
}

/// Second-stage lift of a binary base matrix into a [`LiftedCode`].
pub fn circulant_lift(
    base: &SparseMatrix,
    proto: &ProtoMatrix,
    peg_factor: usize,
    q: usize,
    seed: u64,
) -> Result<LiftedCode, LiftError> {
    if q == 0 {
        return Err(LiftError::ZeroFactor);
    }
    let shifts = choose_shifts(base, q);
    let h = expand_circulant(base, q, &shifts);
    let girth = circulant_girth(&h, q);
    Ok(LiftedCode {
        h,
        proto: proto.clone(),
        peg_factor,
        circulant: q,
        seed,
        girth,
    })
}

/// Both lifting stages with the default first-stage factor.
pub fn lift(p: &ProtoMatrix, q: usize, seed: u64) -> Result<LiftedCode, LiftError> {
    let base = peg_lift(p, PEG_FACTOR, seed)?;
    circulant_lift(&base, p, PEG_FACTOR, q, seed)
}

/// Circulant size giving `info_len` design information bits for `p`.
pub fn circulant_for_info(p: &ProtoMatrix, peg_factor: usize, info_len: usize) -> Result<usize, LiftError> {
    let unit = (p.vars() - p.checks()) * peg_factor;
    if info_len == 0 || !info_len.is_multiple_of(unit) {
        return Err(LiftError::InfoLength { info: info_len, unit });
    }
    Ok(info_len / unit)
}

/// A nested family lifted once through its extreme member.
#[derive(Debug, Clone)]
pub struct LiftedFamily {
    pub kind: ExtensionKind,
    pub parent: LiftedCode,
    pub members: Vec<ProtoMatrix>,
}

impl LiftedFamily {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.members.iter().position(|m| m.name().eq_ignore_ascii_case(name))
    }

    /// The lifted code of member `k`, cut from the parent.
    pub fn member(&self, k: usize) -> LiftedCode {
        let p = &self.members[k];
        let f = self.parent.lift_factor();
        let h = match self.kind {
            ExtensionKind::Lengthened => self.parent.h.leading_columns(p.vars() * f),
            ExtensionKind::Expurgated => self.parent.h.leading_rows(p.checks() * f),
        };
        let girth = if h == self.parent.h {
            self.parent.girth
        } else {
            circulant_girth(&h, self.parent.circulant)
        };
        LiftedCode {
            h,
            proto: p.clone(),
            peg_factor: self.parent.peg_factor,
            circulant: self.parent.circulant,
            seed: self.parent.seed,
            girth,
        }
    }

    /// Lifted columns (lengthened) or rows (expurgated) that member `k`
    /// drops from the parent.
    pub fn dropped(&self, k: usize) -> Range<usize> {
        let p = &self.members[k];
        let f = self.parent.lift_factor();
        match self.kind {
            ExtensionKind::Lengthened => p.vars() * f..self.parent.n(),
            ExtensionKind::Expurgated => p.checks() * f..self.parent.m(),
        }
    }
}

/// Lifts the extreme member of a nested family (most columns when
/// lengthened, most rows when expurgated) and derives every other member
/// from it by deleting lifted columns or rows.
pub fn lift_family(
    members: &[ProtoMatrix],
    kind: ExtensionKind,
    q: usize,
    seed: u64,
) -> Result<LiftedFamily, LiftError> {
    let extreme = match kind {
        ExtensionKind::Lengthened => members.iter().max_by_key(|p| p.vars()),
        ExtensionKind::Expurgated => members.iter().max_by_key(|p| p.checks()),
    }
    .ok_or(LiftError::EmptyFamily)?;
    for p in members {
        let boundary = match kind {
            ExtensionKind::Lengthened => p.vars(),
            ExtensionKind::Expurgated => p.checks(),
        };
        let nested = extreme
            .split_bilayer(kind, boundary)
            .map(|(sub, _)| sub.entries() == p.entries() && sub.punctured() == p.punctured())
            .unwrap_or(false);
        if !nested {
            return Err(LiftError::NotNested(p.name().to_string()));
        }
    }
    Ok(LiftedFamily {
        kind,
        parent: lift(extreme, q, seed)?,
        members: members.to_vec(),
    })
}
