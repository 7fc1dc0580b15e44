//! Protograph EXIT analysis over the BI-AWGN channel.
//!
//! Messages are modelled as consistent Gaussian LLRs, so a mutual
//! information value `I` stands for an LLR of standard deviation
//! `J^-1(I)`. The recursion tracks one MI value per edge type of the
//! proto-matrix in both directions, with parallel edges counted by the entry
//! multiplicity and punctured columns receiving no channel information.

use std::sync::OnceLock;

use num_rational::Rational64;
use thiserror::Error;

use crate::protograph::{ProtoError, ProtoMatrix};

/// Per-column a-posteriori MI needed to declare convergence.
pub const CONVERGENCE_MI: f64 = 1.0 - 1e-6;

/// PEXIT iterations allowed per probe.
pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Bisection stops once the bracket is narrower than this (dB).
pub const THRESHOLD_RESOLUTION_DB: f64 = 0.001;

/// Highest Eb/N0 tried while looking for a converging bracket.
pub const BRACKET_CEILING_DB: f64 = 15.0;

/// A probe that gains less than this much MI on every edge in one iteration
/// has reached a fixed point.
pub const STALL_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PexitError {
    #[error("J^-1 is undefined at I = {0}")]
    JInverseDomain(f64),
    #[error("rate {0} outside (0, 1)")]
    RateOutOfRange(f64),
    #[error("no convergence found below {0} dB")]
    NoConvergence(f64),
    #[error(transparent)]
    Proto(#[from] ProtoError),
}

// ---------------------------------------------------------------------------
// J function
// ---------------------------------------------------------------------------

const J_STEP: f64 = 0.01;
const J_SIGMA_MAX: f64 = 24.0;
const J_Z_SPAN: f64 = 12.0;
const J_Z_INTERVALS: usize = 2400;
const J_INDEX_BUCKETS: usize = 4096;

struct JTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
    // First node whose value exceeds bucket * (1 / J_INDEX_BUCKETS).
    index: Vec<u32>,
}

fn softplus2(l: f64) -> f64 {
    // log2(1 + e^-l), stable for both signs
    (if l < 0.0 { -l } else { 0.0 } + (-l.abs()).exp().ln_1p()) / std::f64::consts::LN_2
}

impl JTable {
    fn build() -> JTable {
        let n = (J_SIGMA_MAX / J_STEP).round() as usize + 1;
        let h = 2.0 * J_Z_SPAN / J_Z_INTERVALS as f64;
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        // Simpson weights folded with the standard normal density.
        let nodes: Vec<(f64, f64)> = (0..=J_Z_INTERVALS)
            .map(|k| {
                let z = -J_Z_SPAN + k as f64 * h;
                let w = if k == 0 || k == J_Z_INTERVALS {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                (z, w * h / 3.0 * inv_sqrt_2pi * (-0.5 * z * z).exp())
            })
            .collect();
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        for k in 0..n {
            let s = k as f64 * J_STEP;
            if k == 0 {
                values.push(0.0);
                slopes.push(0.0);
                continue;
            }
            let mut loss = 0.0;
            let mut slope = 0.0;
            for &(z, w) in &nodes {
                let l = 0.5 * s * s + s * z;
                loss += w * softplus2(l);
                // d/ds of -log2(1 + e^-l) with dl/ds = s + z
                let logistic = if l > 0.0 {
                    let e = (-l).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + l.exp())
                };
                slope += w * (s + z) * logistic;
            }
            values.push((1.0 - loss).clamp(0.0, 1.0));
            slopes.push((slope / std::f64::consts::LN_2).max(0.0));
        }
        // Enforce monotone data so the Hermite interpolant stays monotone.
        for k in 1..n {
            if values[k] < values[k - 1] {
                values[k] = values[k - 1];
            }
        }
        for k in 0..n - 1 {
            let secant = (values[k + 1] - values[k]) / J_STEP;
            if secant == 0.0 {
                slopes[k] = 0.0;
                slopes[k + 1] = 0.0;
            } else {
                // Fritsch-Carlson limiter
                let a = slopes[k] / secant;
                let b = slopes[k + 1] / secant;
                let r = a * a + b * b;
                if r > 9.0 {
                    let t = 3.0 / r.sqrt();
                    slopes[k] = t * a * secant;
                    slopes[k + 1] = t * b * secant;
                }
            }
        }
        let mut index = Vec::with_capacity(J_INDEX_BUCKETS + 1);
        let mut k = 0usize;
        for b in 0..=J_INDEX_BUCKETS {
            let level = b as f64 / J_INDEX_BUCKETS as f64;
            while k < n && values[k] <= level {
                k += 1;
            }
            index.push(k as u32);
        }
        JTable {
            values,
            slopes,
            index,
        }
    }

    #[inline]
    fn segment(&self, k: usize, t: f64) -> f64 {
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[k]
            + h10 * J_STEP * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * J_STEP * self.slopes[k + 1]
    }

    #[inline]
    fn segment_slope(&self, k: usize, t: f64) -> f64 {
        let t2 = t * t;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        (d00 * self.values[k] + d01 * self.values[k + 1]) / J_STEP
            + d10 * self.slopes[k]
            + d11 * self.slopes[k + 1]
    }

    #[inline]
    fn eval(&self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return 0.0;
        }
        let x = sigma / J_STEP;
        let k = x as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        self.segment(k, x - k as f64)
    }

    /// Inverse of the interpolant, clamped to `[0, J_SIGMA_MAX]`.
    #[inline]
    fn inverse(&self, mi: f64) -> f64 {
        if mi <= 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        let b = ((mi * J_INDEX_BUCKETS as f64) as usize).min(J_INDEX_BUCKETS);
        let lo = self.index[b.saturating_sub(1)] as usize;
        let hi = (self.index[(b + 1).min(J_INDEX_BUCKETS)] as usize).min(n);
        // first node with value > mi
        let upper = lo + self.values[lo..hi].partition_point(|&v| v <= mi);
        if upper >= n {
            return J_SIGMA_MAX;
        }
        let k = upper - 1;
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        let target = mi;
        let mut a = 0.0;
        let mut c = 1.0;
        let mut t = ((target - v0) / (v1 - v0)).clamp(0.0, 1.0);
        for _ in 0..40 {
            let f = self.segment(k, t) - target;
            if f > 0.0 {
                c = t;
            } else {
                a = t;
            }
            if f.abs() <= 1e-15 || c - a < 1e-14 {
                break;
            }
            let d = self.segment_slope(k, t) * J_STEP;
            let mut next = if d > 0.0 { t - f / d } else { f64::NAN };
            if !(next > a && next < c) {
                next = 0.5 * (a + c);
            }
            t = next;
        }
        (k as f64 + t) * J_STEP
    }
}

fn table() -> &'static JTable {
    static TABLE: OnceLock<JTable> = OnceLock::new();
    TABLE.get_or_init(JTable::build)
}

/// Mutual information between a bit and a consistent Gaussian LLR with
/// standard deviation `sigma` (mean `sigma^2 / 2`).
pub fn j_function(sigma: f64) -> f64 {
    table().eval(sigma)
}

/// Inverse of [`j_function`] on `[0, 1)`.
pub fn j_inverse(mi: f64) -> Result<f64, PexitError> {
    if !(0.0..1.0).contains(&mi) {
        return Err(PexitError::JInverseDomain(mi));
    }
    Ok(table().inverse(mi))
}

// ---------------------------------------------------------------------------
// Capacity
// ---------------------------------------------------------------------------

/// BI-AWGN capacity in bits per channel use at the given Es/N0 (linear),
/// integrated over the channel output.
pub fn biawgn_capacity(es_n0: f64) -> f64 {
    if es_n0 <= 0.0 {
        return 0.0;
    }
    let var = 1.0 / (2.0 * es_n0);
    let sd = var.sqrt();
    let intervals = 4000;
    let (lo, hi) = (1.0 - 14.0 * sd, 1.0 + 14.0 * sd);
    let h = (hi - lo) / intervals as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    let mut acc = 0.0;
    for k in 0..=intervals {
        let y = lo + k as f64 * h;
        let w = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let density = norm * (-(y - 1.0) * (y - 1.0) / (2.0 * var)).exp();
        acc += w * density * softplus2(2.0 * y / var);
    }
    1.0 - acc * h / 3.0
}

/// Eb/N0 (dB) at which BI-AWGN capacity equals `rate`.
pub fn biawgn_capacity_db(rate: f64) -> Result<f64, PexitError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(PexitError::RateOutOfRange(rate));
    }
    let cap = |db: f64| biawgn_capacity(rate * db_to_linear(db));
    let (mut lo, mut hi) = (-10.0_f64, 20.0_f64);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if cap(mid) >= rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn rate_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

// ---------------------------------------------------------------------------
// PEXIT recursion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct EdgeType {
    row: usize,
    col: usize,
    mult: f64,
}

/// Per-edge-type MI state of one PEXIT run. Matrices are `C x V`, row-major,
/// zero where the proto-matrix has no edge.
#[derive(Debug, Clone, PartialEq)]
pub struct PexitState {
    pub checks: usize,
    pub vars: usize,
    pub iev: Vec<f64>,
    pub iec: Vec<f64>,
    pub ich: Vec<f64>,
    pub app: Vec<f64>,
}

impl PexitState {
    pub fn iev(&self, r: usize, c: usize) -> f64 {
        self.iev[r * self.vars + c]
    }

    pub fn iec(&self, r: usize, c: usize) -> f64 {
        self.iec[r * self.vars + c]
    }
}

/// Precomputed edge structure of a proto-matrix for repeated PEXIT probes.
#[derive(Debug, Clone)]
pub struct Pexit {
    checks: usize,
    vars: usize,
    rate: f64,
    punctured: Vec<bool>,
    edges: Vec<EdgeType>,
    // edges grouped by column / row, as indices into `edges`
    by_col: Vec<Vec<usize>>,
    by_row: Vec<Vec<usize>>,
}

/// Outcome of a single PEXIT probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub converged: bool,
    pub iterations: usize,
}

/// One PEXIT run in progress.
pub struct PexitRun<'a> {
    pexit: &'a Pexit,
    sigma2_ch: Vec<f64>,
    iev: Vec<f64>,
    iec: Vec<f64>,
    app: Vec<f64>,
    s_ac: Vec<f64>,
    s_ev: Vec<f64>,
    iterations: usize,
}

impl Pexit {
    pub fn new(p: &ProtoMatrix) -> Result<Pexit, PexitError> {
        let rate = rate_f64(p.design_rate()?);
        let mut edges = Vec::new();
        let mut by_col = vec![Vec::new(); p.vars()];
        let mut by_row = vec![Vec::new(); p.checks()];
        for r in 0..p.checks() {
            for c in 0..p.vars() {
                let b = p.get(r, c);
                if b > 0 {
                    by_col[c].push(edges.len());
                    by_row[r].push(edges.len());
                    edges.push(EdgeType {
                        row: r,
                        col: c,
                        mult: b as f64,
                    });
                }
            }
        }
        Ok(Pexit {
            checks: p.checks(),
            vars: p.vars(),
            rate,
            punctured: (0..p.vars()).map(|c| p.is_punctured(c)).collect(),
            edges,
            by_col,
            by_row,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Channel LLR variance `8 R Eb/N0` per column, zero on punctured columns.
    pub fn channel_sigma2(&self, ebno_db: f64) -> Vec<f64> {
        let s2 = 8.0 * self.rate * db_to_linear(ebno_db);
        self.punctured
            .iter()
            .map(|&p| if p { 0.0 } else { s2 })
            .collect()
    }

    pub fn start(&self, ebno_db: f64) -> PexitRun<'_> {
        let n = self.edges.len();
        PexitRun {
            pexit: self,
            sigma2_ch: self.channel_sigma2(ebno_db),
            iev: vec![0.0; n],
            iec: vec![0.0; n],
            app: vec![0.0; self.vars],
            s_ac: vec![0.0; n],
            s_ev: vec![0.0; n],
            iterations: 0,
        }
    }

    /// Runs PEXIT at `ebno_db` until every column's a-posteriori MI reaches
    /// [`CONVERGENCE_MI`], the recursion stalls, or `max_iters` is hit.
    pub fn converges(&self, ebno_db: f64, max_iters: usize) -> Probe {
        self.probe(ebno_db, max_iters, STALL_TOLERANCE)
    }

    /// [`Pexit::converges`] with a caller-chosen stall tolerance.
    pub fn probe(&self, ebno_db: f64, max_iters: usize, stall_tolerance: f64) -> Probe {
        let mut run = self.start(ebno_db);
        while run.iterations < max_iters {
            let gain = run.step();
            if run.converged() {
                return Probe {
                    converged: true,
                    iterations: run.iterations,
                };
            }
            if gain < stall_tolerance {
                break;
            }
        }
        Probe {
            converged: false,
            iterations: run.iterations,
        }
    }
}

impl PexitRun<'_> {
    /// One full iteration (variable update, check update, APP). Returns the
    /// largest MI increase over all check-to-variable edge values.
    pub fn step(&mut self) -> f64 {
        let px = self.pexit;
        let t = table();
        // variable -> check; s_ac holds J^-1(iec)^2 from the previous APP pass
        for (c, list) in px.by_col.iter().enumerate() {
            let total: f64 = self.sigma2_ch[c]
                + list
                    .iter()
                    .map(|&e| px.edges[e].mult * self.s_ac[e])
                    .sum::<f64>();
            for &e in list {
                self.iev[e] = t.eval((total - self.s_ac[e]).max(0.0).sqrt());
            }
        }
        // check -> variable; an input with zero MI is an erasure (infinite
        // J^-1 of its complement) and silences every other edge of the check
        for e in 0..px.edges.len() {
            let complement = 1.0 - self.iev[e];
            self.s_ev[e] = if complement >= 1.0 {
                f64::INFINITY
            } else {
                let s = t.inverse(complement);
                s * s
            };
        }
        let mut gain = 0.0f64;
        for list in &px.by_row {
            let mut finite = 0.0;
            let mut erased = 0.0;
            for &e in list {
                if self.s_ev[e].is_infinite() {
                    erased += px.edges[e].mult;
                } else {
                    finite += px.edges[e].mult * self.s_ev[e];
                }
            }
            for &e in list {
                let own_inf = self.s_ev[e].is_infinite();
                let others_erased = erased - if own_inf { 1.0 } else { 0.0 };
                let out = if others_erased > 0.0 {
                    0.0
                } else {
                    let rest = if own_inf { finite } else { finite - self.s_ev[e] };
                    1.0 - t.eval(rest.max(0.0).sqrt())
                };
                gain = gain.max(out - self.iec[e]);
                self.iec[e] = out;
            }
        }
        // a-posteriori
        for (c, list) in px.by_col.iter().enumerate() {
            let mut total = self.sigma2_ch[c];
            for &e in list {
                let s = t.inverse(self.iec[e]);
                self.s_ac[e] = s * s;
                total += px.edges[e].mult * self.s_ac[e];
            }
            self.app[c] = t.eval(total.sqrt());
        }
        self.iterations += 1;
        gain
    }

    pub fn converged(&self) -> bool {
        self.app.iter().all(|&a| a >= CONVERGENCE_MI)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn state(&self) -> PexitState {
        let px = self.pexit;
        let mut iev = vec![0.0; px.checks * px.vars];
        let mut iec = vec![0.0; px.checks * px.vars];
        for (e, et) in px.edges.iter().enumerate() {
            iev[et.row * px.vars + et.col] = self.iev[e];
            iec[et.row * px.vars + et.col] = self.iec[e];
        }
        PexitState {
            checks: px.checks,
            vars: px.vars,
            iev,
            iec,
            ich: self.sigma2_ch.iter().map(|&s2| j_function(s2.sqrt())).collect(),
            app: self.app.clone(),
        }
    }
}

/// Whether PEXIT on `p` converges at `ebno_db` within `max_iters`.
pub fn pexit_converges(p: &ProtoMatrix, ebno_db: f64, max_iters: usize) -> Result<Probe, PexitError> {
    Ok(Pexit::new(p)?.converges(ebno_db, max_iters))
}

// ---------------------------------------------------------------------------
// Threshold
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub threshold_db: f64,
    pub capacity_db: f64,
    pub gap_db: f64,
    pub iterations_at_threshold: usize,
}

/// One probe of a threshold search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub ebno_db: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Options for [`threshold_with`].
#[derive(Debug, Clone, Copy)]
pub struct ThresholdOptions {
    pub max_iters: usize,
    pub resolution_db: f64,
    pub stall_tolerance: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            max_iters: DEFAULT_MAX_ITERS,
            resolution_db: THRESHOLD_RESOLUTION_DB,
            stall_tolerance: STALL_TOLERANCE,
        }
    }
}

/// PEXIT decoding threshold of `p` with default options.
pub fn threshold(p: &ProtoMatrix) -> Result<ThresholdResult, PexitError> {
    threshold_with(p, ThresholdOptions::default()).map(|(r, _)| r)
}

/// Threshold search returning the probe trace as well.
///
/// The low bracket starts at the Shannon limit for the design rate and moves
/// down until a probe fails; the high bracket climbs in 0.5 dB steps until a
/// probe converges. Bisection then narrows the bracket and reports the
/// lowest converging Eb/N0 seen.
pub fn threshold_with(
    p: &ProtoMatrix,
    opts: ThresholdOptions,
) -> Result<(ThresholdResult, Vec<TracePoint>), PexitError> {
    let px = Pexit::new(p)?;
    let capacity_db = biawgn_capacity_db(px.rate())?;
    let mut trace = Vec::new();
    let probe = |db: f64, trace: &mut Vec<TracePoint>| {
        let pr = px.probe(db, opts.max_iters, opts.stall_tolerance);
        trace.push(TracePoint {
            ebno_db: db,
            converged: pr.converged,
            iterations: pr.iterations,
        });
        pr
    };

    let mut lo = capacity_db;
    while probe(lo, &mut trace).converged {
        lo -= 1.0;
    }
    let mut hi = lo + 0.5;
    let mut hi_probe = probe(hi, &mut trace);
    while !hi_probe.converged {
        lo = hi;
        hi += 0.5;
        if hi > BRACKET_CEILING_DB {
            return Err(PexitError::NoConvergence(BRACKET_CEILING_DB));
        }
        hi_probe = probe(hi, &mut trace);
    }
    let mut hi_iters = hi_probe.iterations;
    while hi - lo > opts.resolution_db {
        let mid = 0.5 * (lo + hi);
        let pr = probe(mid, &mut trace);
        if pr.converged {
            hi = mid;
            hi_iters = pr.iterations;
        } else {
            lo = mid;
        }
    }
    Ok((
        ThresholdResult {
            threshold_db: hi,
            capacity_db,
            gap_db: hi - capacity_db,
            iterations_at_threshold: hi_iters,
        },
        trace,
    ))
}
