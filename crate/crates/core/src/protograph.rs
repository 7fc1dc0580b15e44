//! Proto-matrices and the built-in bilayer code families.
//!
//! A proto-matrix is a small `C x V` integer matrix whose `(check, variable)`
//! entries count parallel edges of the protograph. Row 0 of every built-in
//! matrix is the check attached to the degree-1 variable (column 0) and column
//! 1 is the punctured variable. Lengthening appends variable columns,
//! expurgation appends check rows; both always append at the end so that
//! family members nest as leading sub-blocks of each other.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use thiserror::Error;

/// Largest parallel-edge count allowed in an extension block.
pub const MAX_EXTENSION_EDGES: u8 = 2;

/// Minimum column sum, over the checks not attached to a degree-1 variable,
/// of every lengthening column.
pub const DEFAULT_COLUMN_SUM_MIN: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtoError {
    #[error("proto-matrix has no rows or no columns")]
    Empty,
    #[error("row {0} has length {1}, expected {2}")]
    Ragged(usize, usize, usize),
    #[error("column {0} has no edges")]
    EmptyColumn(usize),
    #[error("row {0} has no edges")]
    EmptyRow(usize),
    #[error("punctured column {0} outside 0..{1}")]
    PuncturedOutOfRange(usize, usize),
    #[error("degenerate design rate {0}/{1}")]
    DegenerateRate(i64, i64),
    #[error("extension has {got} rows, parent has {expected}")]
    ExtensionShape { got: usize, expected: usize },
    #[error("extension entry {0} exceeds {MAX_EXTENSION_EDGES}")]
    ExtensionEntry(u8),
    #[error("appended column {0} has no edges")]
    ZeroColumn(usize),
    #[error("appended column {col} sums to {sum} outside the degree-1 check, need at least {min}")]
    ColumnSum { col: usize, sum: u32, min: u32 },
    #[error("appended row is all zero")]
    ZeroRow,
    #[error("appended row touches degree-1 column {0}")]
    DegreeOneTouched(usize),
    #[error("appended row leaves punctured column {0} unconnected")]
    PuncturedUnconnected(usize),
    #[error("split boundary {boundary} outside 1..={limit}")]
    Boundary { boundary: usize, limit: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown registry code {0:?}")]
    UnknownCode(String),
}

/// Dense small matrix of parallel-edge counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Block {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Block {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, ProtoError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ProtoError::Ragged(i, r.len(), cols));
            }
            data.extend_from_slice(r);
        }
        Ok(Block {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<u8> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn max_entry(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn total_edges(&self) -> u32 {
        self.data.iter().map(|&v| v as u32).sum()
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Block) -> Block {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Block {
            rows: self.rows,
            cols,
            data,
        }
    }

    /// Vertical concatenation `[self; other]`.
    pub fn vcat(&self, other: &Block) -> Block {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Block {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn columns(&self, range: std::ops::Range<usize>) -> Block {
        let mut out = Block::zeros(self.rows, range.len());
        for r in 0..self.rows {
            for (k, c) in range.clone().enumerate() {
                out.set(r, k, self.get(r, c));
            }
        }
        out
    }

    pub fn row_range(&self, range: std::ops::Range<usize>) -> Block {
        Block {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }
}

/// Protograph parity-check description with punctured-column markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtoMatrix {
    name: String,
    entries: Block,
    punctured: Vec<usize>,
}

/// Which layer a bilayer extension adds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtensionKind {
    /// Appended variable columns: `H_SR = [H_SD | H_e]`.
    Lengthened,
    /// Appended check rows: `H_SD = [H_SR; H_e]`.
    Expurgated,
}

impl fmt::Display for ExtensionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtensionKind::Lengthened => f.write_str("lengthened"),
            ExtensionKind::Expurgated => f.write_str("expurgated"),
        }
    }
}

impl FromStr for ExtensionKind {
    type Err = ProtoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lengthened" | "bl" | "BL" => Ok(ExtensionKind::Lengthened),
            "expurgated" | "be" | "BE" => Ok(ExtensionKind::Expurgated),
            other => Err(ProtoError::Parse(format!("unknown extension kind {other:?}"))),
        }
    }
}

impl ProtoMatrix {
    pub fn new(
        name: impl Into<String>,
        entries: Block,
        punctured: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ProtoError> {
        if entries.rows() == 0 || entries.cols() == 0 {
            return Err(ProtoError::Empty);
        }
        for c in 0..entries.cols() {
            if (0..entries.rows()).all(|r| entries.get(r, c) == 0) {
                return Err(ProtoError::EmptyColumn(c));
            }
        }
        for r in 0..entries.rows() {
            if entries.row(r).iter().all(|&v| v == 0) {
                return Err(ProtoError::EmptyRow(r));
            }
        }
        let mut punctured: Vec<usize> = punctured.into_iter().collect();
        punctured.sort_unstable();
        punctured.dedup();
        if let Some(&p) = punctured.iter().find(|&&p| p >= entries.cols()) {
            return Err(ProtoError::PuncturedOutOfRange(p, entries.cols()));
        }
        Ok(ProtoMatrix {
            name: name.into(),
            entries,
            punctured,
        })
    }

    pub fn from_rows<R: AsRef<[u8]>>(
        name: impl Into<String>,
        rows: &[R],
        punctured: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ProtoError> {
        Self::new(name, Block::from_rows(rows)?, punctured)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn entries(&self) -> &Block {
        &self.entries
    }

    pub fn checks(&self) -> usize {
        self.entries.rows()
    }

    pub fn vars(&self) -> usize {
        self.entries.cols()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.entries.get(r, c)
    }

    pub fn punctured(&self) -> &[usize] {
        &self.punctured
    }

    pub fn is_punctured(&self, c: usize) -> bool {
        self.punctured.binary_search(&c).is_ok()
    }

    pub fn transmitted_vars(&self) -> usize {
        self.vars() - self.punctured.len()
    }

    pub fn column_sum(&self, c: usize) -> u32 {
        (0..self.checks()).map(|r| self.get(r, c) as u32).sum()
    }

    pub fn row_sum(&self, r: usize) -> u32 {
        self.entries.row(r).iter().map(|&v| v as u32).sum()
    }

    /// Columns of total degree one.
    pub fn degree_one_columns(&self) -> Vec<usize> {
        (0..self.vars()).filter(|&c| self.column_sum(c) == 1).collect()
    }

    /// Checks adjacent to a degree-1 variable.
    pub fn degree_one_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .degree_one_columns()
            .into_iter()
            .filter_map(|c| (0..self.checks()).find(|&r| self.get(r, c) != 0))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    /// `(V - C) / (V - |punctured|)`, required to lie strictly inside (0, 1).
    pub fn design_rate(&self) -> Result<Rational64, ProtoError> {
        let v = self.vars() as i64;
        let c = self.checks() as i64;
        let t = self.transmitted_vars() as i64;
        if t <= 0 || v <= c {
            return Err(ProtoError::DegenerateRate(v - c, t));
        }
        let rate = Rational64::new(v - c, t);
        if rate >= Rational64::from_integer(1) {
            return Err(ProtoError::DegenerateRate(v - c, t));
        }
        Ok(rate)
    }

    /// Appends three (or any number of) transmitted variable columns.
    ///
    /// Each new column needs at least one edge and a sum of at least
    /// [`DEFAULT_COLUMN_SUM_MIN`] over the checks that are not attached to a
    /// degree-1 variable.
    pub fn lengthen(&self, ext: &Block) -> Result<ProtoMatrix, ProtoError> {
        self.lengthen_with_min(ext, DEFAULT_COLUMN_SUM_MIN)
    }

    pub fn lengthen_with_min(&self, ext: &Block, column_sum_min: u32) -> Result<ProtoMatrix, ProtoError> {
        if ext.rows() != self.checks() {
            return Err(ProtoError::ExtensionShape {
                got: ext.rows(),
                expected: self.checks(),
            });
        }
        if ext.max_entry() > MAX_EXTENSION_EDGES {
            return Err(ProtoError::ExtensionEntry(ext.max_entry()));
        }
        let excluded = self.degree_one_rows();
        for c in 0..ext.cols() {
            let col = ext.column(c);
            if col.iter().all(|&v| v == 0) {
                return Err(ProtoError::ZeroColumn(c));
            }
            let sum: u32 = col
                .iter()
                .enumerate()
                .filter(|(r, _)| !excluded.contains(r))
                .map(|(_, &v)| v as u32)
                .sum();
            if sum < column_sum_min {
                return Err(ProtoError::ColumnSum {
                    col: c,
                    sum,
                    min: column_sum_min,
                });
            }
        }
        ProtoMatrix::new(
            format!("{}+L{}", self.name, ext.cols()),
            self.entries.hcat(ext),
            self.punctured.iter().copied(),
        )
    }

    /// Appends one check row.
    pub fn expurgate(&self, row: &[u8]) -> Result<ProtoMatrix, ProtoError> {
        if row.len() != self.vars() {
            return Err(ProtoError::ExtensionShape {
                got: row.len(),
                expected: self.vars(),
            });
        }
        if let Some(&v) = row.iter().find(|&&v| v > MAX_EXTENSION_EDGES) {
            return Err(ProtoError::ExtensionEntry(v));
        }
        if row.iter().all(|&v| v == 0) {
            return Err(ProtoError::ZeroRow);
        }
        if let Some(c) = self.degree_one_columns().into_iter().find(|&c| row[c] != 0) {
            return Err(ProtoError::DegreeOneTouched(c));
        }
        if let Some(&p) = self.punctured.iter().find(|&&p| row[p] == 0) {
            return Err(ProtoError::PuncturedUnconnected(p));
        }
        let ext = Block::from_rows(&[row])?;
        ProtoMatrix::new(
            format!("{}+E1", self.name),
            self.entries.vcat(&ext),
            self.punctured.iter().copied(),
        )
    }

    /// Splits a family member into its sub-code proto-matrix and the
    /// extension block `H_e`.
    ///
    /// For [`ExtensionKind::Lengthened`] the boundary is a column index and
    /// the sub-code keeps the leading columns. For
    /// [`ExtensionKind::Expurgated`] it is a row index and the sub-code keeps
    /// the leading rows.
    pub fn split_bilayer(
        &self,
        kind: ExtensionKind,
        boundary: usize,
    ) -> Result<(ProtoMatrix, Block), ProtoError> {
        match kind {
            ExtensionKind::Lengthened => {
                if boundary == 0 || boundary > self.vars() {
                    return Err(ProtoError::Boundary {
                        boundary,
                        limit: self.vars(),
                    });
                }
                let sub = ProtoMatrix::new(
                    format!("{}[..{boundary}]", self.name),
                    self.entries.columns(0..boundary),
                    self.punctured.iter().copied().filter(|&p| p < boundary),
                )?;
                Ok((sub, self.entries.columns(boundary..self.vars())))
            }
            ExtensionKind::Expurgated => {
                if boundary == 0 || boundary > self.checks() {
                    return Err(ProtoError::Boundary {
                        boundary,
                        limit: self.checks(),
                    });
                }
                let sub = ProtoMatrix::new(
                    format!("{}[..{boundary};]", self.name),
                    self.entries.row_range(0..boundary),
                    self.punctured.iter().copied(),
                )?;
                Ok((sub, self.entries.row_range(boundary..self.checks())))
            }
        }
    }

    /// Inverse of [`ProtoMatrix::split_bilayer`]; no design constraints are
    /// checked.
    pub fn recombine(&self, kind: ExtensionKind, ext: &Block) -> Result<ProtoMatrix, ProtoError> {
        let entries = match kind {
            ExtensionKind::Lengthened => {
                if ext.rows() != self.checks() {
                    return Err(ProtoError::ExtensionShape {
                        got: ext.rows(),
                        expected: self.checks(),
                    });
                }
                self.entries.hcat(ext)
            }
            ExtensionKind::Expurgated => {
                if !ext.is_empty() && ext.cols() != self.vars() {
                    return Err(ProtoError::ExtensionShape {
                        got: ext.cols(),
                        expected: self.vars(),
                    });
                }
                if ext.rows() == 0 {
                    self.entries.clone()
                } else {
                    self.entries.vcat(ext)
                }
            }
        };
        ProtoMatrix::new(self.name.clone(), entries, self.punctured.iter().copied())
    }

    /// Plain-text form: `C V rate punctured=<list>` followed by `C` rows.
    pub fn to_text(&self) -> String {
        let rate = match self.design_rate() {
            Ok(r) => format!("{}/{}", r.numer(), r.denom()),
            Err(_) => "0/1".to_string(),
        };
        let punct: Vec<String> = self.punctured.iter().map(|p| p.to_string()).collect();
        let mut s = format!(
            "{} {} {} punctured={}\n",
            self.checks(),
            self.vars(),
            rate,
            punct.join(",")
        );
        for r in 0..self.checks() {
            let row: Vec<String> = self.entries.row(r).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(name: impl Into<String>, text: &str) -> Result<ProtoMatrix, ProtoError> {
        let perr = |m: &str| ProtoError::Parse(m.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| perr("missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(perr("header must be `C V rate punctured=<list>`"));
        }
        let c: usize = fields[0].parse().map_err(|_| perr("bad C"))?;
        let v: usize = fields[1].parse().map_err(|_| perr("bad V"))?;
        let rate = parse_rational(fields[2]).ok_or_else(|| perr("bad rate"))?;
        let list = fields[3]
            .strip_prefix("punctured=")
            .ok_or_else(|| perr("missing punctured="))?;
        let punctured = if list.is_empty() {
            Vec::new()
        } else {
            list.split(',')
                .map(|s| s.parse::<usize>().map_err(|_| perr("bad punctured index")))
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut rows = Vec::with_capacity(c);
        for _ in 0..c {
            let line = lines.next().ok_or_else(|| perr("too few rows"))?;
            let row = line
                .split_whitespace()
                .map(|s| s.parse::<u8>().map_err(|_| perr("bad entry")))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != v {
                return Err(perr("row length differs from V"));
            }
            rows.push(row);
        }
        if lines.next().is_some() {
            return Err(perr("trailing rows"));
        }
        let p = ProtoMatrix::from_rows(name, &rows, punctured)?;
        if p.design_rate()? != rate {
            return Err(perr("header rate does not match the matrix"));
        }
        Ok(p)
    }
}

/// Parses `a/b` or an integer into a rational.
pub fn parse_rational(s: &str) -> Option<Rational64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            (d != 0).then(|| Rational64::new(n, d))
        }
        None => s.trim().parse::<i64>().ok().map(Rational64::from_integer),
    }
}

pub fn format_rational(r: Rational64) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

const BASE_ROWS: [[u8; 7]; 4] = [
    [1, 2, 0, 0, 0, 1, 0],
    [0, 3, 1, 1, 1, 1, 0],
    [0, 1, 2, 2, 2, 1, 1],
    [0, 2, 0, 0, 0, 0, 2],
];

const BASE_PUNCTURED: usize = 1;

/// Lengthening blocks for rates 2/3 .. 9/10, one 4x3 block each.
const LENGTHENING_BLOCKS: [[[u8; 3]; 4]; 8] = [
    [[0, 1, 1], [1, 1, 1], [2, 1, 2], [0, 1, 0]],
    [[0, 0, 2], [2, 2, 0], [1, 1, 2], [0, 0, 1]],
    [[0, 1, 2], [1, 2, 2], [2, 1, 1], [0, 0, 0]],
    [[0, 0, 1], [2, 2, 0], [1, 1, 2], [0, 0, 2]],
    [[0, 0, 1], [1, 2, 1], [2, 1, 2], [0, 1, 0]],
    [[0, 0, 2], [2, 2, 0], [1, 1, 2], [0, 0, 2]],
    [[0, 0, 0], [0, 1, 2], [2, 2, 1], [1, 1, 0]],
    [[0, 0, 2], [1, 2, 0], [2, 1, 2], [0, 0, 2]],
];

const LENGTHENED_NAMES: [&str; 9] = [
    "BL-1/2", "BL-2/3", "BL-3/4", "BL-4/5", "BL-5/6", "BL-6/7", "BL-7/8", "BL-8/9", "BL-9/10",
];

/// Expurgation rows appended to the rate-3/4 lengthened member, in order
/// 2/3, 7/12, 1/2, 5/12, 1/3.
const EXPURGATION_ROWS: [[u8; 13]; 5] = [
    [0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 2],
    [0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 2],
    [0, 2, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0],
    [0, 2, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0],
    [0, 2, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0],
];

const EXPURGATED_NAMES: [&str; 6] = ["BE-3/4", "BE-2/3", "BE-7/12", "BE-1/2", "BE-5/12", "BE-1/3"];

/// Index of the lengthened member the expurgated family starts from.
const EXPURGATION_PARENT: usize = 2;

/// The built-in bilayer lengthened and expurgated code families.
#[derive(Debug, Clone)]
pub struct CodeFamilyRegistry {
    lengthened: Vec<ProtoMatrix>,
    expurgated: Vec<ProtoMatrix>,
}

impl CodeFamilyRegistry {
    pub fn builtin() -> Self {
        let base = ProtoMatrix::from_rows(LENGTHENED_NAMES[0], &BASE_ROWS, [BASE_PUNCTURED])
            .expect("base protograph is valid");
        let mut lengthened = vec![base];
        for (blk, name) in LENGTHENING_BLOCKS.iter().zip(&LENGTHENED_NAMES[1..]) {
            let ext = Block::from_rows(blk).expect("4x3 block");
            let next = lengthened
                .last()
                .unwrap()
                .lengthen(&ext)
                .expect("built-in lengthening satisfies the design rules")
                .with_name(*name);
            lengthened.push(next);
        }
        let mut expurgated =
            vec![lengthened[EXPURGATION_PARENT].clone().with_name(EXPURGATED_NAMES[0])];
        for (row, name) in EXPURGATION_ROWS.iter().zip(&EXPURGATED_NAMES[1..]) {
            let next = expurgated
                .last()
                .unwrap()
                .expurgate(row)
                .expect("built-in expurgation satisfies the design rules")
                .with_name(*name);
            expurgated.push(next);
        }
        CodeFamilyRegistry {
            lengthened,
            expurgated,
        }
    }

    pub fn base(&self) -> &ProtoMatrix {
        &self.lengthened[0]
    }

    /// Rates 1/2, 2/3, ..., 9/10.
    pub fn lengthened(&self) -> &[ProtoMatrix] {
        &self.lengthened
    }

    /// Rates 3/4, 2/3, 7/12, 1/2, 5/12, 1/3.
    pub fn expurgated(&self) -> &[ProtoMatrix] {
        &self.expurgated
    }

    pub fn all(&self) -> impl Iterator<Item = &ProtoMatrix> {
        self.lengthened.iter().chain(self.expurgated.iter())
    }

    pub fn names(&self) -> Vec<&str> {
        self.all().map(|p| p.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&ProtoMatrix, ProtoError> {
        self.all()
            .find(|p| p.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| ProtoError::UnknownCode(name.to_string()))
    }

    pub fn family(&self, kind: ExtensionKind) -> &[ProtoMatrix] {
        match kind {
            ExtensionKind::Lengthened => &self.lengthened,
            ExtensionKind::Expurgated => &self.expurgated,
        }
    }

    /// Family member with the given design rate.
    pub fn by_rate(&self, kind: ExtensionKind, rate: Rational64) -> Option<&ProtoMatrix> {
        self.family(kind)
            .iter()
            .find(|p| p.design_rate().ok() == Some(rate))
    }

    /// Every distinct design rate available in either family, ascending.
    pub fn rate_ladder(&self) -> Vec<Rational64> {
        let mut rates: Vec<Rational64> = self.all().filter_map(|p| p.design_rate().ok()).collect();
        rates.sort();
        rates.dedup();
        rates
    }
}

impl Default for CodeFamilyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn base_rate_is_one_half() {
        let reg = CodeFamilyRegistry::builtin();
        let base = reg.base();
        assert_eq!((base.checks(), base.vars()), (4, 7));
        assert_eq!(base.design_rate().unwrap(), r(1, 2));
        assert_eq!(base.entries().total_edges(), 24);
    }

    #[test]
    fn rate_three_quarter_shape() {
        let reg = CodeFamilyRegistry::builtin();
        let p = reg.get("BL-3/4").unwrap();
        assert_eq!((p.checks(), p.vars(), p.punctured()), (4, 13, &[1usize][..]));
        assert_eq!(p.design_rate().unwrap(), r(3, 4));
    }

    #[test]
    fn identity_like_is_degenerate() {
        let p = ProtoMatrix::from_rows("I2", &[[1u8, 0], [0, 1]], []).unwrap();
        assert_eq!(p.design_rate(), Err(ProtoError::DegenerateRate(0, 2)));
    }

    #[test]
    fn rate_ladders() {
        let reg = CodeFamilyRegistry::builtin();
        let bl: Vec<_> = reg.lengthened().iter().map(|p| p.design_rate().unwrap()).collect();
        let want: Vec<_> = (1..=9).map(|n| r(n, n + 1)).collect();
        assert_eq!(bl, want);
        let be: Vec<_> = reg.expurgated().iter().map(|p| p.design_rate().unwrap()).collect();
        assert_eq!(be, vec![r(3, 4), r(2, 3), r(7, 12), r(1, 2), r(5, 12), r(1, 3)]);
    }

    #[test]
    fn lengthen_to_two_thirds() {
        let reg = CodeFamilyRegistry::builtin();
        let ext = Block::from_rows(&LENGTHENING_BLOCKS[0]).unwrap();
        let p = reg.base().lengthen(&ext).unwrap();
        assert_eq!(p.entries(), reg.get("BL-2/3").unwrap().entries());
        assert_eq!(p.design_rate().unwrap(), r(2, 3));
    }

    #[test]
    fn lengthen_rejects_light_column() {
        let reg = CodeFamilyRegistry::builtin();
        let ext = Block::from_rows(&[[2u8], [1], [1], [0]]).unwrap();
        assert!(matches!(
            reg.base().lengthen(&ext),
            Err(ProtoError::ColumnSum { sum: 2, .. })
        ));
        let zero = Block::from_rows(&[[0u8], [0], [0], [0]]).unwrap();
        assert_eq!(reg.base().lengthen(&zero), Err(ProtoError::ZeroColumn(0)));
    }

    #[test]
    fn expurgate_to_two_thirds() {
        let reg = CodeFamilyRegistry::builtin();
        let p = reg
            .get("BL-3/4")
            .unwrap()
            .expurgate(&[0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 2])
            .unwrap();
        assert_eq!(p.entries(), reg.get("BE-2/3").unwrap().entries());
        let q = p.expurgate(&EXPURGATION_ROWS[1]).unwrap();
        assert_eq!(q.design_rate().unwrap(), r(7, 12));
    }

    #[test]
    fn expurgate_errors() {
        let reg = CodeFamilyRegistry::builtin();
        let p = reg.get("BE-3/4").unwrap();
        let mut row = EXPURGATION_ROWS[0];
        row[0] = 1;
        assert_eq!(p.expurgate(&row), Err(ProtoError::DegreeOneTouched(0)));
        assert_eq!(p.expurgate(&[0; 13]), Err(ProtoError::ZeroRow));
        let mut row = EXPURGATION_ROWS[0];
        row[1] = 0;
        assert_eq!(p.expurgate(&row), Err(ProtoError::PuncturedUnconnected(1)));
    }

    #[test]
    fn split_lengthened_three_quarter() {
        let reg = CodeFamilyRegistry::builtin();
        let p = reg.get("BL-3/4").unwrap();
        let (sub, ext) = p.split_bilayer(ExtensionKind::Lengthened, 7).unwrap();
        assert_eq!(sub.entries(), reg.base().entries());
        assert_eq!(sub.punctured(), &[1]);
        assert_eq!(ext.cols(), 6);
        let back = sub.recombine(ExtensionKind::Lengthened, &ext).unwrap();
        assert_eq!(back.entries(), p.entries());
        assert_eq!(back.punctured(), p.punctured());
    }

    #[test]
    fn split_expurgated_one_half() {
        let reg = CodeFamilyRegistry::builtin();
        let p = reg.get("BE-1/2").unwrap();
        let (sub, ext) = p.split_bilayer(ExtensionKind::Expurgated, 4).unwrap();
        assert_eq!(sub.entries(), reg.get("BL-3/4").unwrap().entries());
        assert_eq!(ext.rows(), 3);
        assert_eq!(sub.recombine(ExtensionKind::Expurgated, &ext).unwrap().entries(), p.entries());
    }

    #[test]
    fn split_at_full_width_is_identity() {
        let reg = CodeFamilyRegistry::builtin();
        let p = reg.get("BL-2/3").unwrap();
        let (sub, ext) = p.split_bilayer(ExtensionKind::Lengthened, p.vars()).unwrap();
        assert_eq!(sub.entries(), p.entries());
        assert_eq!(ext.cols(), 0);
        assert!(matches!(
            p.split_bilayer(ExtensionKind::Lengthened, p.vars() + 1),
            Err(ProtoError::Boundary { .. })
        ));
        assert!(matches!(
            p.split_bilayer(ExtensionKind::Expurgated, 0),
            Err(ProtoError::Boundary { .. })
        ));
    }

    #[test]
    fn registry_round_trips_every_pair() {
        let reg = CodeFamilyRegistry::builtin();
        for fam in [ExtensionKind::Lengthened, ExtensionKind::Expurgated] {
            let members = reg.family(fam);
            for (i, child) in members.iter().enumerate() {
                for parent in &members[..=i] {
                    let boundary = match fam {
                        ExtensionKind::Lengthened => parent.vars(),
                        ExtensionKind::Expurgated => parent.checks(),
                    };
                    let (sub, ext) = child.split_bilayer(fam, boundary).unwrap();
                    assert_eq!(sub.entries(), parent.entries());
                    assert_eq!(sub.recombine(fam, &ext).unwrap().entries(), child.entries());
                }
            }
        }
    }

    #[test]
    fn entry_bounds_and_column_sums() {
        let reg = CodeFamilyRegistry::builtin();
        assert!(reg.base().entries().max_entry() <= 3);
        let top = reg.lengthened().last().unwrap();
        for c in 7..top.vars() {
            let col = top.entries().column(c);
            assert!(col.iter().all(|&v| v <= 2));
            assert!(col[1..].iter().map(|&v| v as u32).sum::<u32>() >= 3, "column {c}");
        }
        let bottom = reg.expurgated().last().unwrap();
        for rr in 4..bottom.checks() {
            assert!(bottom.entries().row(rr).iter().all(|&v| v <= 2));
        }
    }

    #[test]
    fn registry_checksum() {
        // Position-weighted checksum over the shipped matrices.
        let reg = CodeFamilyRegistry::builtin();
        let sum = |p: &ProtoMatrix| -> u64 {
            let mut acc = 0u64;
            for rr in 0..p.checks() {
                for c in 0..p.vars() {
                    acc = acc.wrapping_mul(31).wrapping_add(p.get(rr, c) as u64 + 1);
                }
            }
            acc
        };
        let top_l = reg.lengthened().last().unwrap();
        let top_e = reg.expurgated().last().unwrap();
        assert_eq!(top_l.entries().total_edges(), REG_EDGES_L);
        assert_eq!(top_e.entries().total_edges(), REG_EDGES_E);
        assert_eq!(top_l.to_text().lines().count(), 5);
        // Frozen once from the verbatim tables.
        assert_eq!((sum(top_l), sum(top_e)), (REG_SUM_L, REG_SUM_E));
    }

    const REG_SUM_L: u64 = 11238228547222396990;
    const REG_SUM_E: u64 = 16951273841754843299;
    const REG_EDGES_L: u32 = 114;
    const REG_EDGES_E: u32 = 68;

    #[test]
    fn text_round_trip() {
        let reg = CodeFamilyRegistry::builtin();
        for p in reg.all() {
            let text = p.to_text();
            let q = ProtoMatrix::from_text(p.name(), &text).unwrap();
            assert_eq!(&q, p);
        }
        let t = reg.base().to_text();
        assert!(t.starts_with("4 7 1/2 punctured=1\n1 2 0 0 0 1 0\n"));
        assert!(ProtoMatrix::from_text("x", "4 7 2/3 punctured=1\n1 2 0 0 0 1 0\n0 3 1 1 1 1 0\n0 1 2 2 2 1 1\n0 2 0 0 0 0 2\n").is_err());
    }
}
