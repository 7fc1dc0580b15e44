//! Constrained exhaustive search for lengthening columns and expurgation
//! rows, scored by PEXIT threshold.

use std::collections::HashSet;

use num_rational::Rational64;
use rayon::prelude::*;
use thiserror::Error;

use crate::pexit::{
    biawgn_capacity_db, rate_f64, threshold_with, Pexit, PexitError, ThresholdOptions,
    ThresholdResult, BRACKET_CEILING_DB,
};
use crate::protograph::{
    Block, ExtensionKind, ProtoError, ProtoMatrix, DEFAULT_COLUMN_SUM_MIN, MAX_EXTENSION_EDGES,
};

/// Number of columns appended per lengthening step.
pub const LENGTHENING_WIDTH: usize = 3;

/// Default pre-filter margin above the Shannon limit of the child rate (dB).
pub const DEFAULT_PREFILTER_MARGIN_DB: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("expected {expected} entry sets, got {got}")]
    BoundCount { got: usize, expected: usize },
    #[error("entry set for position {0} is empty")]
    EmptyBound(usize),
    #[error("lengthening width must be positive")]
    ZeroWidth,
    #[error("no candidate converges below {0} dB")]
    NothingConverges(f64),
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Pexit(#[from] PexitError),
}

/// Search space and scoring options.
#[derive(Debug, Clone)]
pub struct SearchSpec {
    pub parent: ProtoMatrix,
    pub kind: ExtensionKind,
    /// Columns appended when lengthening; ignored when expurgating.
    pub width: usize,
    /// Allowed values per position: row-major over the `C x width` block
    /// when lengthening, one set per column when expurgating.
    pub entry_bounds: Vec<Vec<u8>>,
    /// Lengthening only: minimum appended column sum over the checks not
    /// attached to a degree-1 variable.
    pub column_sum_min: u32,
    /// Keep at most this many pre-filter survivors for full scoring, the
    /// fastest converging first. Not score-preserving.
    pub beam: Option<usize>,
    /// Margin above the child's Shannon limit for the single-probe
    /// pre-filter, `None` to score every candidate.
    pub prefilter_margin_db: Option<f64>,
    pub threshold: ThresholdOptions,
}

impl SearchSpec {
    /// Default lengthening space: every entry in {0, 1, 2}.
    pub fn lengthened(parent: &ProtoMatrix) -> SearchSpec {
        SearchSpec {
            parent: parent.clone(),
            kind: ExtensionKind::Lengthened,
            width: LENGTHENING_WIDTH,
            entry_bounds: vec![vec![0, 1, 2]; parent.checks() * LENGTHENING_WIDTH],
            column_sum_min: DEFAULT_COLUMN_SUM_MIN,
            beam: None,
            prefilter_margin_db: Some(DEFAULT_PREFILTER_MARGIN_DB),
            threshold: ThresholdOptions::default(),
        }
    }

    /// Default expurgation space: 0 on degree-1 columns, {1, 2} on punctured
    /// columns, {0, 1, 2} elsewhere.
    pub fn expurgated(parent: &ProtoMatrix) -> SearchSpec {
        let deg1 = parent.degree_one_columns();
        let entry_bounds = (0..parent.vars())
            .map(|c| {
                if deg1.contains(&c) {
                    vec![0]
                } else if parent.is_punctured(c) {
                    vec![1, 2]
                } else {
                    vec![0, 1, 2]
                }
            })
            .collect();
        SearchSpec {
            parent: parent.clone(),
            kind: ExtensionKind::Expurgated,
            width: LENGTHENING_WIDTH,
            entry_bounds,
            column_sum_min: DEFAULT_COLUMN_SUM_MIN,
            beam: None,
            prefilter_margin_db: Some(DEFAULT_PREFILTER_MARGIN_DB),
            threshold: ThresholdOptions::default(),
        }
    }

    /// One-candidate space holding exactly `ext`.
    pub fn pinned(parent: &ProtoMatrix, kind: ExtensionKind, ext: &Block) -> SearchSpec {
        let mut spec = match kind {
            ExtensionKind::Lengthened => SearchSpec::lengthened(parent),
            ExtensionKind::Expurgated => SearchSpec::expurgated(parent),
        };
        spec.width = ext.cols();
        spec.entry_bounds = (0..ext.rows())
            .flat_map(|r| ext.row(r).iter().map(|&v| vec![v]).collect::<Vec<_>>())
            .collect();
        spec
    }

    /// Shape of one candidate block.
    pub fn block_shape(&self) -> (usize, usize) {
        match self.kind {
            ExtensionKind::Lengthened => (self.parent.checks(), self.width),
            ExtensionKind::Expurgated => (1, self.parent.vars()),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.kind == ExtensionKind::Lengthened && self.width == 0 {
            return Err(SearchError::ZeroWidth);
        }
        let (r, c) = self.block_shape();
        if self.entry_bounds.len() != r * c {
            return Err(SearchError::BoundCount {
                got: self.entry_bounds.len(),
                expected: r * c,
            });
        }
        if let Some(k) = self.entry_bounds.iter().position(Vec::is_empty) {
            return Err(SearchError::EmptyBound(k));
        }
        Ok(())
    }

    /// Design rate of every candidate child.
    pub fn child_rate(&self) -> Result<Rational64, SearchError> {
        let (v, c) = match self.kind {
            ExtensionKind::Lengthened => (self.parent.vars() + self.width, self.parent.checks()),
            ExtensionKind::Expurgated => (self.parent.vars(), self.parent.checks() + 1),
        };
        let t = v - self.parent.punctured().len();
        if v <= c || t == 0 {
            return Err(ProtoError::DegenerateRate(v as i64 - c as i64, t as i64).into());
        }
        Ok(Rational64::new((v - c) as i64, t as i64))
    }

    /// Applies `ext` to the parent with the protograph module's own checks.
    pub fn apply(&self, ext: &Block) -> Result<ProtoMatrix, ProtoError> {
        match self.kind {
            ExtensionKind::Lengthened => self.parent.lengthen_with_min(ext, self.column_sum_min),
            ExtensionKind::Expurgated => self.parent.expurgate(ext.row(0)),
        }
    }

    fn admissible(&self, ext: &Block, excluded_rows: &[usize], deg1: &[usize]) -> bool {
        match self.kind {
            ExtensionKind::Lengthened => (0..ext.cols()).all(|c| {
                let col = ext.column(c);
                let sum: u32 = col
                    .iter()
                    .enumerate()
                    .filter(|(r, _)| !excluded_rows.contains(r))
                    .map(|(_, &v)| v as u32)
                    .sum();
                col.iter().any(|&v| v != 0) && sum >= self.column_sum_min && ext.max_entry() <= MAX_EXTENSION_EDGES
            }),
            ExtensionKind::Expurgated => {
                let row = ext.row(0);
                row.iter().any(|&v| v != 0)
                    && row.iter().all(|&v| v <= MAX_EXTENSION_EDGES)
                    && deg1.iter().all(|&c| row[c] == 0)
                    && self.parent.punctured().iter().all(|&p| row[p] != 0)
            }
        }
    }

    /// Groups of exchangeable slots. A slot is an appended column when
    /// lengthening and a parent column when expurgating; permuting slots
    /// within a group maps the search space onto itself and yields
    /// isomorphic protographs.
    pub fn symmetry_classes(&self) -> Vec<Vec<usize>> {
        let (rows, cols) = self.block_shape();
        let slot_key = |s: usize| -> (Vec<u8>, Vec<Vec<u8>>, bool) {
            match self.kind {
                ExtensionKind::Lengthened => (
                    Vec::new(),
                    (0..rows).map(|r| self.entry_bounds[r * cols + s].clone()).collect(),
                    false,
                ),
                ExtensionKind::Expurgated => (
                    self.parent.entries().column(s),
                    vec![self.entry_bounds[s].clone()],
                    self.parent.is_punctured(s),
                ),
            }
        };
        let mut classes: Vec<(_, Vec<usize>)> = Vec::new();
        for s in 0..cols {
            let key = slot_key(s);
            match classes.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(s),
                None => classes.push((key, vec![s])),
            }
        }
        classes.into_iter().map(|(_, m)| m).collect()
    }
}

/// Representative of `ext` under permutations within each symmetry class.
fn canonical_key(ext: &Block, classes: &[Vec<usize>]) -> Vec<u8> {
    let mut key = Vec::with_capacity(ext.rows() * ext.cols());
    for class in classes {
        let mut slots: Vec<Vec<u8>> = class.iter().map(|&s| ext.column(s)).collect();
        slots.sort();
        for s in slots {
            key.extend(s);
        }
    }
    key
}

/// Odometer over the entry sets, first position most significant.
struct Odometer<'a> {
    bounds: &'a [Vec<u8>],
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for Odometer<'_> {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        if self.done {
            return None;
        }
        let out = self.digits.iter().zip(self.bounds).map(|(&d, b)| b[d]).collect();
        self.done = true;
        for k in (0..self.digits.len()).rev() {
            self.digits[k] += 1;
            if self.digits[k] < self.bounds[k].len() {
                self.done = false;
                break;
            }
            self.digits[k] = 0;
        }
        Some(out)
    }
}

/// Every structurally admissible extension of the spec, in deterministic
/// order, before symmetry reduction.
pub fn enumerate_candidates(spec: &SearchSpec) -> Result<impl Iterator<Item = Block> + '_, SearchError> {
    spec.validate()?;
    let (rows, cols) = spec.block_shape();
    let excluded = spec.parent.degree_one_rows();
    let deg1 = spec.parent.degree_one_columns();
    let odo = Odometer {
        bounds: &spec.entry_bounds,
        digits: vec![0; spec.entry_bounds.len()],
        done: spec.entry_bounds.is_empty(),
    };
    Ok(odo.filter_map(move |values| {
        let mut ext = Block::zeros(rows, cols);
        for (k, v) in values.into_iter().enumerate() {
            ext.set(k / cols, k % cols, v);
        }
        spec.admissible(&ext, &excluded, &deg1).then_some(ext)
    }))
}

/// One fully scored candidate.
#[derive(Debug, Clone)]
pub struct Scored {
    /// Position in the raw enumeration order.
    pub index: usize,
    pub extension: Block,
    pub code: ProtoMatrix,
    pub result: ThresholdResult,
}

/// Ranked candidates plus bookkeeping on how many were considered.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub ranked: Vec<Scored>,
    pub enumerated: usize,
    pub distinct: usize,
    pub survivors: usize,
    pub disqualified: usize,
    /// Eb/N0 of the pre-filter probe, if one ran.
    pub cutoff_db: Option<f64>,
}

impl SearchOutcome {
    pub fn best(&self) -> Option<&Scored> {
        self.ranked.first()
    }
}

/// Scores the spec's candidates by PEXIT threshold, best first.
///
/// Candidates equivalent under [`SearchSpec::symmetry_classes`] are scored
/// once (the first in enumeration order). With a pre-filter, every
/// candidate is probed once at the child's Shannon limit plus the margin
/// and only converging ones are bisected; the margin doubles until at least
/// one survives, so the best candidate is always kept. Ties rank by
/// enumeration order.
pub fn search_best(spec: &SearchSpec) -> Result<SearchOutcome, SearchError> {
    let classes = spec.symmetry_classes();
    let mut seen = HashSet::new();
    let mut enumerated = 0;
    let mut pool: Vec<(usize, Block)> = Vec::new();
    for (index, ext) in enumerate_candidates(spec)?.enumerate() {
        enumerated += 1;
        if seen.insert(canonical_key(&ext, &classes)) {
            pool.push((index, ext));
        }
    }
    let distinct = pool.len();
    let mut children: Vec<(usize, Block, ProtoMatrix)> = pool
        .into_iter()
        .filter_map(|(i, ext)| {
            let code = spec.apply(&ext).ok()?;
            Some((i, ext, code))
        })
        .collect();
    let mut disqualified = distinct - children.len();

    let opts = spec.threshold;
    let mut cutoff_db = None;
    if let Some(margin) = spec.prefilter_margin_db {
        let limit = biawgn_capacity_db(rate_f64(spec.child_rate()?))?;
        let mut margin = margin.max(0.05);
        loop {
            let cutoff = limit + margin;
            let probes: Vec<Option<usize>> = children
                .par_iter()
                .map(|(_, _, code)| {
                    let px = Pexit::new(code).ok()?;
                    let pr = px.probe(cutoff, opts.max_iters, opts.stall_tolerance);
                    pr.converged.then_some(pr.iterations)
                })
                .collect();
            if probes.iter().any(Option::is_some) {
                let mut kept: Vec<(usize, (usize, Block, ProtoMatrix))> = probes
                    .into_iter()
                    .zip(children)
                    .filter_map(|(p, c)| p.map(|it| (it, c)))
                    .collect();
                if let Some(beam) = spec.beam {
                    kept.sort_by_key(|(it, c)| (*it, c.0));
                    kept.truncate(beam);
                    kept.sort_by_key(|(_, c)| c.0);
                }
                children = kept.into_iter().map(|(_, c)| c).collect();
                cutoff_db = Some(cutoff);
                break;
            }
            if cutoff >= BRACKET_CEILING_DB {
                return Err(SearchError::NothingConverges(cutoff));
            }
            margin *= 2.0;
        }
    } else if let Some(beam) = spec.beam {
        children.truncate(beam);
    }
    let survivors = children.len();

    let scored: Vec<Option<Scored>> = children
        .into_par_iter()
        .map(|(index, extension, code)| {
            let (result, _) = threshold_with(&code, opts).ok()?;
            Some(Scored {
                index,
                extension,
                code,
                result,
            })
        })
        .collect();
    disqualified += scored.iter().filter(|s| s.is_none()).count();
    let mut ranked: Vec<Scored> = scored.into_iter().flatten().collect();
    ranked.sort_by(|a, b| {
        a.result
            .threshold_db
            .total_cmp(&b.result.threshold_db)
            .then(a.index.cmp(&b.index))
    });
    Ok(SearchOutcome {
        ranked,
        enumerated,
        distinct,
        survivors,
        disqualified,
        cutoff_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pexit::threshold;
    use crate::protograph::CodeFamilyRegistry;

    /// Admissible 4x3 lengthening blocks over {0,1,2}, counted column by
    /// column: 3 choices on the degree-1 check times the x-triples with sum
    /// at least 3.
    fn lengthened_count() -> usize {
        let mut triples = 0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    if a + b + c >= 3 {
                        triples += 1;
                    }
                }
            }
        }
        (3 * triples as usize).pow(3)
    }

    #[test]
    fn lengthened_enumeration_count() {
        let reg = CodeFamilyRegistry::builtin();
        let spec = SearchSpec::lengthened(reg.base());
        assert_eq!(enumerate_candidates(&spec).unwrap().count(), lengthened_count());
        assert_eq!(lengthened_count(), 132651);
    }

    #[test]
    fn expurgated_enumeration_count() {
        let reg = CodeFamilyRegistry::builtin();
        let spec = SearchSpec::expurgated(reg.get("BE-3/4").unwrap());
        assert_eq!(enumerate_candidates(&spec).unwrap().count(), 2 * 3usize.pow(11));
    }

    #[test]
    fn published_extensions_are_enumerated() {
        let reg = CodeFamilyRegistry::builtin();
        let (_, ext) = reg.lengthened()[1]
            .split_bilayer(ExtensionKind::Lengthened, 7)
            .unwrap();
        let spec = SearchSpec::lengthened(reg.base());
        assert!(enumerate_candidates(&spec).unwrap().any(|b| b == ext));

        let (_, row) = reg.expurgated()[1]
            .split_bilayer(ExtensionKind::Expurgated, 4)
            .unwrap();
        let spec = SearchSpec::expurgated(&reg.expurgated()[0]);
        assert!(enumerate_candidates(&spec).unwrap().any(|b| b == row));
    }

    #[test]
    fn enumeration_is_deterministic_and_admissible() {
        let reg = CodeFamilyRegistry::builtin();
        let spec = SearchSpec::lengthened(reg.base());
        let a: Vec<Block> = enumerate_candidates(&spec).unwrap().take(500).collect();
        let b: Vec<Block> = enumerate_candidates(&spec).unwrap().take(500).collect();
        assert_eq!(a, b);
        for ext in &a {
            assert!(reg.base().lengthen(ext).is_ok());
        }
    }

    #[test]
    fn symmetry_classes() {
        let reg = CodeFamilyRegistry::builtin();
        let spec = SearchSpec::lengthened(reg.base());
        assert_eq!(spec.symmetry_classes(), vec![vec![0, 1, 2]]);
        let spec = SearchSpec::expurgated(reg.get("BE-3/4").unwrap());
        let classes = spec.symmetry_classes();
        // columns 2, 3, 4 and 7 are all (0,1,2,0); 10 and 11 are (0,2,1,0)
        assert!(classes.contains(&vec![2, 3, 4, 7]));
        assert!(classes.contains(&vec![10, 11]));
        assert_eq!(classes.iter().map(Vec::len).sum::<usize>(), 13);
    }

    #[test]
    fn validate_rejects_bad_bounds() {
        let reg = CodeFamilyRegistry::builtin();
        let mut spec = SearchSpec::lengthened(reg.base());
        spec.entry_bounds.pop();
        assert!(matches!(spec.validate(), Err(SearchError::BoundCount { .. })));
        let mut spec = SearchSpec::lengthened(reg.base());
        spec.entry_bounds[3].clear();
        assert_eq!(spec.validate(), Err(SearchError::EmptyBound(3)));
    }

    #[test]
    fn pinned_search_returns_the_pinned_extension() {
        let reg = CodeFamilyRegistry::builtin();
        let parent = &reg.expurgated()[0];
        let (_, row) = reg.expurgated()[1]
            .split_bilayer(ExtensionKind::Expurgated, 4)
            .unwrap();
        let spec = SearchSpec::pinned(parent, ExtensionKind::Expurgated, &row);
        let out = search_best(&spec).unwrap();
        assert_eq!(out.ranked.len(), 1);
        let best = out.best().unwrap();
        assert_eq!(best.extension, row);
        let direct = threshold(&reg.expurgated()[1]).unwrap();
        assert_eq!(best.result.threshold_db, direct.threshold_db);
    }

    #[test]
    fn prefilter_keeps_the_optimum() {
        // {0,1} on a handful of free columns, everything else pinned to the
        // published rate-2/3 expurgation row
        let reg = CodeFamilyRegistry::builtin();
        let parent = &reg.expurgated()[0];
        let (_, row) = reg.expurgated()[1]
            .split_bilayer(ExtensionKind::Expurgated, 4)
            .unwrap();
        let mut spec = SearchSpec::pinned(parent, ExtensionKind::Expurgated, &row);
        for c in [1, 5, 6, 8, 9, 12] {
            spec.entry_bounds[c] = if parent.is_punctured(c) { vec![1] } else { vec![0, 1] };
        }
        spec.prefilter_margin_db = None;
        let full = search_best(&spec).unwrap();
        spec.prefilter_margin_db = Some(0.05);
        let screened = search_best(&spec).unwrap();
        assert!(screened.survivors < full.survivors);
        let (a, b) = (full.best().unwrap(), screened.best().unwrap());
        assert_eq!(a.index, b.index);
        assert_eq!(a.result.threshold_db, b.result.threshold_db);
        for w in full.ranked.windows(2) {
            assert!(w[0].result.threshold_db <= w[1].result.threshold_db);
        }
    }
}
