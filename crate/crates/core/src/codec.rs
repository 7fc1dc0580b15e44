//! GF(2) encoding, relay-side parities and sum-product decoding.

use thiserror::Error;

use crate::gf2::{pack, BitMatrix};
use crate::lifting::{LiftedCode, LiftedFamily};
use crate::protograph::ExtensionKind;
use crate::sparse::SparseMatrix;

/// Default bound on channel and internal LLR magnitudes.
pub const DEFAULT_CLIP: f64 = 30.0;

/// Default decoder iteration budget.
pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("expected {expected} bits, got {got}")]
    Length { got: usize, expected: usize },
    #[error("syndrome is not in the column space of H")]
    Syndrome,
    #[error("punctured columns are linearly dependent (rank {rank} of {cols})")]
    PuncturedRank { rank: usize, cols: usize },
    #[error("no family member named {0}")]
    UnknownMember(String),
}

fn check_len(got: usize, expected: usize) -> Result<(), CodecError> {
    if got == expected {
        Ok(())
    } else {
        Err(CodecError::Length { got, expected })
    }
}

/// A codeword together with the information bits it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword {
    pub bits: Vec<u8>,
    pub info: Vec<u8>,
}

/// Systematic encoder from the reduced row echelon form of `H`.
///
/// Pivot columns carry parity, the remaining columns carry information.
/// Preferred columns are tried as pivots first, so punctured columns end up
/// as parity whenever the rank allows.
#[derive(Debug, Clone)]
pub struct Encoder {
    n: usize,
    m: usize,
    pivots: Vec<usize>,
    info_positions: Vec<usize>,
    // pivot rows restricted to the information columns
    gen: BitMatrix,
    // row operations taking H to its echelon form
    transform: BitMatrix,
}

impl Encoder {
    pub fn new(h: &SparseMatrix, prefer: &[usize]) -> Encoder {
        let (m, n) = (h.rows(), h.cols());
        let mut aug = BitMatrix::zeros(m, n + m);
        for (r, c) in h.entries() {
            aug.set(r, c, true);
        }
        for r in 0..m {
            aug.set(r, n + r, true);
        }
        let mut order: Vec<usize> = prefer.to_vec();
        let mut taken = vec![false; n];
        for &c in prefer {
            taken[c] = true;
        }
        order.extend((0..n).filter(|&c| !taken[c]));
        let pivots = aug.rref_with_order(&order);
        let mut is_pivot = vec![false; n];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let rows: Vec<usize> = (0..pivots.len()).collect();
        let gen = aug.select(&rows, &info_positions);
        let all_rows: Vec<usize> = (0..m).collect();
        let tcols: Vec<usize> = (n..n + m).collect();
        let transform = aug.select(&all_rows, &tcols);
        Encoder {
            n,
            m,
            pivots,
            info_positions,
            gen,
            transform,
        }
    }

    /// Encoder preferring the code's punctured columns as parity.
    pub fn for_code(code: &LiftedCode) -> Encoder {
        let punctured: Vec<usize> = (0..code.n()).filter(|&c| code.is_punctured(c)).collect();
        Encoder::new(&code.h, &punctured)
    }

    /// Actual dimension `n - rank(H)`.
    pub fn dimension(&self) -> usize {
        self.info_positions.len()
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn encode(&self, info: &[u8]) -> Result<Codeword, CodecError> {
        self.encode_coset(info, None)
    }

    /// Word `x` with `H x = syndrome` carrying `info` on the information
    /// positions.
    pub fn encode_coset(&self, info: &[u8], syndrome: Option<&[u8]>) -> Result<Codeword, CodecError> {
        check_len(info.len(), self.dimension())?;
        let mut parity = self.gen.mul_packed(&pack(info));
        if let Some(s) = syndrome {
            check_len(s.len(), self.m)?;
            let ts = self.transform.mul_vec(s);
            if ts[self.rank()..].iter().any(|&b| b != 0) {
                return Err(CodecError::Syndrome);
            }
            for (p, t) in parity.iter_mut().zip(&ts) {
                *p ^= t;
            }
        }
        let mut bits = vec![0u8; self.n];
        for (&c, &b) in self.info_positions.iter().zip(info) {
            bits[c] = b & 1;
        }
        for (&c, &b) in self.pivots.iter().zip(&parity) {
            bits[c] = b;
        }
        Ok(Codeword {
            bits,
            info: info.iter().map(|b| b & 1).collect(),
        })
    }

    /// Information bits read back from a codeword.
    pub fn extract(&self, bits: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&c| bits[c]).collect()
    }
}

/// `H_e x` over GF(2): the extra check values an expurgating relay sends.
pub fn extension_parities(h_e: &SparseMatrix, bits: &[u8]) -> Result<Vec<u8>, CodecError> {
    check_len(bits.len(), h_e.cols())?;
    Ok(h_e.mul_vec(bits))
}

/// Syndromes of a code with punctured columns, reduced modulo the span of
/// those columns.
///
/// A sender that knows only the transmitted part `x_t` of a word can
/// describe the coset of `(x_t, p)` for the best-fitting `p` with
/// `rows - rank(H_p)` bits: pick rows `P` where `H_p` is invertible, then
/// send `s[!P] + H_p[!P] H_p[P]^-1 s[P]`. The receiver restores a full
/// syndrome with zeros on `P` and coset-decodes.
#[derive(Debug, Clone)]
pub struct SyndromeCompressor {
    h: SparseMatrix,
    punctured: Vec<usize>,
    transmitted: Vec<usize>,
    pivot_rows: Vec<usize>,
    kept_rows: Vec<usize>,
    k: BitMatrix,
}

impl SyndromeCompressor {
    pub fn new(code: &LiftedCode) -> Result<SyndromeCompressor, CodecError> {
        let h = code.h.clone();
        let punctured: Vec<usize> = (0..code.n()).filter(|&c| code.is_punctured(c)).collect();
        let transmitted = code.transmitted();
        let hp = BitMatrix::from_sparse(&h);
        let rows: Vec<usize> = (0..h.rows()).collect();
        let hp = hp.select(&rows, &punctured);
        // independent rows of H_p, found on its transpose
        let mut tr = BitMatrix::zeros(punctured.len(), h.rows());
        for r in 0..h.rows() {
            for j in 0..punctured.len() {
                if hp.get(r, j) {
                    tr.set(j, r, true);
                }
            }
        }
        let pivot_rows = tr.rref_with_order(&rows);
        if pivot_rows.len() < punctured.len() {
            return Err(CodecError::PuncturedRank {
                rank: pivot_rows.len(),
                cols: punctured.len(),
            });
        }
        let mut is_pivot = vec![false; h.rows()];
        for &r in &pivot_rows {
            is_pivot[r] = true;
        }
        let kept_rows: Vec<usize> = rows.iter().copied().filter(|&r| !is_pivot[r]).collect();
        let all: Vec<usize> = (0..punctured.len()).collect();
        let inv = hp
            .select(&pivot_rows, &all)
            .inverse()
            .expect("pivot rows of H_p are independent");
        let k = hp.select(&kept_rows, &all).mul(&inv);
        Ok(SyndromeCompressor {
            h,
            punctured,
            transmitted,
            pivot_rows,
            kept_rows,
            k,
        })
    }

    /// Length of a compressed syndrome.
    pub fn len(&self) -> usize {
        self.kept_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_rows.is_empty()
    }

    pub fn transmitted_len(&self) -> usize {
        self.transmitted.len()
    }

    pub fn compress(&self, x_t: &[u8]) -> Result<Vec<u8>, CodecError> {
        check_len(x_t.len(), self.transmitted.len())?;
        let mut x = vec![0u8; self.h.cols()];
        for (&c, &b) in self.transmitted.iter().zip(x_t) {
            x[c] = b & 1;
        }
        let s = self.h.mul_vec(&x);
        let sp: Vec<u8> = self.pivot_rows.iter().map(|&r| s[r]).collect();
        let ks = self.k.mul_vec(&sp);
        Ok(self.kept_rows.iter().zip(&ks).map(|(&r, &b)| s[r] ^ b).collect())
    }

    /// Full-length syndrome matching a compressed one.
    pub fn expand(&self, compressed: &[u8]) -> Result<Vec<u8>, CodecError> {
        check_len(compressed.len(), self.kept_rows.len())?;
        let mut s = vec![0u8; self.h.rows()];
        for (&r, &b) in self.kept_rows.iter().zip(compressed) {
            s[r] = b & 1;
        }
        Ok(s)
    }

    pub fn punctured(&self) -> &[usize] {
        &self.punctured
    }
}

/// Decoder settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub max_iters: usize,
    pub clip: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            max_iters: DEFAULT_MAX_ITERS,
            clip: DEFAULT_CLIP,
        }
    }
}

/// Result of one decoding attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Flooding sum-product decoder with exact tanh-rule check updates.
///
/// Channel LLRs follow `log P(0)/P(1)`. Finite inputs and all messages are
/// clipped to `±clip`; infinite inputs mark known bits and pass through
/// untouched. Checks beyond the active prefix send zero messages and are
/// not tested for convergence.
#[derive(Debug, Clone)]
pub struct Decoder {
    cfg: DecoderConfig,
    m: usize,
    n: usize,
    check_start: Vec<usize>,
    edge_var: Vec<u32>,
    var_start: Vec<usize>,
    var_edges: Vec<u32>,
    c2v: Vec<f64>,
    // tanh(m/2) of each variable-to-check message m
    v2c: Vec<f64>,
    total: Vec<f64>,
    scratch: Vec<f64>,
}

impl Decoder {
    pub fn new(h: &SparseMatrix, cfg: DecoderConfig) -> Decoder {
        let (m, n) = (h.rows(), h.cols());
        let mut check_start = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::with_capacity(h.nnz());
        check_start.push(0);
        for r in 0..m {
            edge_var.extend_from_slice(h.row(r));
            check_start.push(edge_var.len());
        }
        let mut var_start = vec![0usize; n + 1];
        for &v in &edge_var {
            var_start[v as usize + 1] += 1;
        }
        for v in 0..n {
            var_start[v + 1] += var_start[v];
        }
        let mut fill = var_start.clone();
        let mut var_edges = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        let max_row = (0..m).map(|r| check_start[r + 1] - check_start[r]).max().unwrap_or(0);
        Decoder {
            cfg,
            m,
            n,
            check_start,
            edge_var,
            var_start,
            var_edges,
            c2v: vec![0.0; h.nnz()],
            v2c: vec![0.0; h.nnz()],
            total: vec![0.0; n],
            scratch: vec![0.0; max_row + 1],
        }
    }

    pub fn config(&self) -> DecoderConfig {
        self.cfg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn decode(&mut self, llr: &[f64]) -> Decoded {
        self.decode_with(llr, None, self.m)
    }

    /// Decodes against `H x = syndrome` (zero when omitted), using only the
    /// first `active` checks.
    pub fn decode_with(&mut self, llr: &[f64], syndrome: Option<&[u8]>, active: usize) -> Decoded {
        assert_eq!(llr.len(), self.n, "LLR vector length");
        if let Some(s) = syndrome {
            assert_eq!(s.len(), self.m, "syndrome length");
        }
        let active = active.min(self.m);
        let clip = self.cfg.clip;
        let clamp = |x: f64| if x.is_infinite() { x } else { x.clamp(-clip, clip) };
        for (t, &l) in self.total.iter_mut().zip(llr) {
            *t = clamp(l);
        }
        self.c2v.fill(0.0);
        let mut bits = vec![0u8; self.n];
        for iter in 1..=self.cfg.max_iters {
            // variable -> check
            for v in 0..self.n {
                let t = self.total[v];
                for &e in &self.var_edges[self.var_start[v]..self.var_start[v + 1]] {
                    let e = e as usize;
                    let m = if t.is_infinite() { t } else { (t - self.c2v[e]).clamp(-clip, clip) };
                    self.v2c[e] = half_tanh(m);
                }
            }
            // check -> variable
            for r in 0..self.m {
                let (lo, hi) = (self.check_start[r], self.check_start[r + 1]);
                if r >= active {
                    self.c2v[lo..hi].fill(0.0);
                    continue;
                }
                let flip = syndrome.is_some_and(|s| s[r] & 1 == 1);
                let d = hi - lo;
                // forward products in scratch, backward product on the fly
                let mut acc = 1.0;
                for k in 0..d {
                    self.scratch[k] = acc;
                    acc *= self.v2c[lo + k];
                }
                let mut back = 1.0;
                for k in (0..d).rev() {
                    let p = self.scratch[k] * back;
                    back *= self.v2c[lo + k];
                    let out = two_atanh(p).clamp(-clip, clip);
                    self.c2v[lo + k] = if flip { -out } else { out };
                }
            }
            // a-posteriori and hard decision
            for v in 0..self.n {
                let mut t = clamp(llr[v]);
                for &e in &self.var_edges[self.var_start[v]..self.var_start[v + 1]] {
                    t += self.c2v[e as usize];
                }
                self.total[v] = t;
                bits[v] = (t < 0.0) as u8;
            }
            debug_assert!(self.c2v.iter().all(|m| m.abs() <= clip));
            let satisfied = (0..active).all(|r| {
                let parity = self.edge_var[self.check_start[r]..self.check_start[r + 1]]
                    .iter()
                    .fold(0u8, |acc, &v| acc ^ bits[v as usize]);
                parity == syndrome.map_or(0, |s| s[r] & 1)
            });
            if satisfied {
                return Decoded {
                    bits,
                    converged: true,
                    iterations: iter,
                };
            }
        }
        Decoded {
            bits,
            converged: false,
            iterations: self.cfg.max_iters,
        }
    }
}

#[inline]
fn half_tanh(x: f64) -> f64 {
    if x.is_infinite() {
        return x.signum();
    }
    let e = (-x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

#[inline]
fn two_atanh(p: f64) -> f64 {
    ((1.0 + p) / (1.0 - p)).ln()
}

/// Full-length LLR vector for `code` from LLRs of its transmitted columns;
/// punctured columns get 0.
pub fn expand_llrs(code: &LiftedCode, tx: &[f64]) -> Result<Vec<f64>, CodecError> {
    check_len(tx.len(), code.transmitted_len())?;
    let mut out = vec![0.0; code.n()];
    for (c, &l) in code.transmitted().into_iter().zip(tx) {
        out[c] = l;
    }
    Ok(out)
}

/// Decodes family member `k` with the decoder of the family's extreme
/// member.
///
/// Lengthened: columns the member lacks are known zeros (infinite LLR),
/// which is exactly the member's own graph. Expurgated: the member's
/// missing checks are neutralized. Either way the hard decisions equal
/// those of decoding the member's own matrix. `llr` covers the member's
/// columns; the returned bits do too.
pub fn decode_nested(
    family: &LiftedFamily,
    decoder: &mut Decoder,
    k: usize,
    llr: &[f64],
    syndrome: Option<&[u8]>,
) -> Result<Decoded, CodecError> {
    let member = &family.members[k];
    let f = family.parent.lift_factor();
    let n = member.vars() * f;
    check_len(llr.len(), n)?;
    match family.kind {
        ExtensionKind::Lengthened => {
            let mut full = llr.to_vec();
            full.resize(family.parent.n(), f64::INFINITY);
            let mut out = decoder.decode_with(&full, syndrome, family.parent.m());
            out.bits.truncate(n);
            Ok(out)
        }
        ExtensionKind::Expurgated => {
            let active = member.checks() * f;
            let full_syndrome = syndrome.map(|s| {
                let mut v = s.to_vec();
                v.resize(family.parent.m(), 0);
                v
            });
            Ok(decoder.decode_with(llr, full_syndrome.as_deref(), active))
        }
    }
}
