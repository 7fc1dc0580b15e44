//! Half-duplex decode-forward relaying with bilayer codes.
//!
//! Three protocols share one frame model. The source sends a high-rate
//! codeword in slot 1. Each relay decodes it and forwards a few extra bits
//! in a later slot. The destination uses those bits to turn its own
//! observation of slot 1 into a low-rate code.
//!
//! * [`Scheme::Expurgated`]: the extra bits are the values of the checks
//!   that turn the source code into its expurgated sub-code.
//! * [`Scheme::Lengthened`]: the extra bits are a compressed syndrome of
//!   the source codeword's extension columns under a helper code `C_1`.
//! * [`Scheme::TwoRelay`]: two relays each supply one layer of expurgating
//!   checks.

use std::ops::Range;

use num_rational::Rational64;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ebn0_to_snr_db, snr_to_ebn0_db, frame_rng, transmit, SlicePoint};
use crate::codec::{
    decode_nested, expand_llrs, extension_parities, CodecError, Decoder, DecoderConfig, Encoder,
    SyndromeCompressor,
};
use crate::lifting::{circulant_for_info, lift, lift_family, LiftError, LiftedCode, LiftedFamily, PEG_FACTOR};
use crate::pexit::rate_f64;
use crate::protograph::{format_rational, CodeFamilyRegistry, ExtensionKind, ProtoError, ProtoMatrix};
use crate::sparse::SparseMatrix;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("slot fractions must lie in (0,1) and sum to 1")]
    SlotFractions,
    #[error("layer rates must be non-increasing and positive")]
    RateOrder,
    #[error("{what} is not an integer ({value})")]
    NonInteger { what: &'static str, value: String },
    #[error("required helper rate {0} is outside the available code rates")]
    Infeasible(String),
    #[error("no registry code has rate {0}")]
    NoCode(String),
    #[error("schedule and codes disagree: {0}")]
    Mismatch(String),
    #[error("ledger term {0} has no trials")]
    EmptyTerm(String),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Proto(#[from] ProtoError),
}

fn integer(what: &'static str, v: Rational64) -> Result<i64, RelayError> {
    if v.is_integer() {
        Ok(v.to_integer())
    } else {
        Err(RelayError::NonInteger {
            what,
            value: format_rational(v),
        })
    }
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Slot lengths, parity counts and helper rates of a relay session.
///
/// Layer `i ≥ 1` adds `k_i` checks, taking the destination's code from
/// `layer_rates[i-1]` to `layer_rates[i]`. Slot `i` carries the `k_i` bits
/// at `helper_rates[i-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelaySchedule {
    pub info_len: i64,
    pub layer_rates: Vec<Rational64>,
    pub requested_t: Vec<Rational64>,
    pub slot_uses: Vec<i64>,
    pub parities: Vec<i64>,
    pub helper_rates: Vec<Option<Rational64>>,
}

impl RelaySchedule {
    pub fn relays(&self) -> usize {
        self.parities.len()
    }

    pub fn k(&self, layer: usize) -> i64 {
        if layer == 1 {
            self.info_len
        } else {
            self.parities[layer - 2]
        }
    }

    pub fn total_uses(&self) -> i64 {
        self.slot_uses.iter().sum()
    }

    pub fn throughput(&self) -> Rational64 {
        r(self.info_len, self.total_uses())
    }

    /// Realized slot fractions.
    pub fn t(&self) -> Vec<Rational64> {
        let total = self.total_uses();
        self.slot_uses.iter().map(|&u| r(u, total)).collect()
    }

    /// No relay help is needed.
    pub fn is_degenerate(&self) -> bool {
        self.parities.iter().all(|&k| k == 0)
    }
}

/// Plans a layered session by parity-bit accounting.
///
/// Slot 1 sends `info_len / rates[0]` symbols. Layer `i` needs
/// `slot1 (rates[i-1] - rates[i])` parity bits. Its slot gets
/// `slot1 t_i / t_1` channel uses. The helper code is the fastest
/// available rate not above `k_i / uses`.
pub fn plan_layers(
    info_len: i64,
    rates: &[Rational64],
    t: &[Rational64],
    available: &[Rational64],
) -> Result<RelaySchedule, RelayError> {
    let zero = r(0, 1);
    let one = r(1, 1);
    if t.len() != rates.len() || t.iter().any(|&x| x <= zero || x >= one) || t.iter().sum::<Rational64>() != one {
        return Err(RelayError::SlotFractions);
    }
    if rates.iter().any(|&x| x <= zero || x > one) || rates.windows(2).any(|w| w[1] > w[0]) {
        return Err(RelayError::RateOrder);
    }
    let slot1 = integer("slot 1 length", Rational64::from_integer(info_len) / rates[0])?;
    let mut slot_uses = vec![slot1];
    let mut parities = Vec::new();
    let mut helper_rates = Vec::new();
    for i in 1..rates.len() {
        let k = integer("parity count", Rational64::from_integer(slot1) * (rates[i - 1] - rates[i]))?;
        parities.push(k);
        if k == 0 {
            slot_uses.push(0);
            helper_rates.push(None);
            continue;
        }
        let uses = Rational64::from_integer(slot1) * t[i] / t[0];
        let required = Rational64::from_integer(k) / uses;
        let chosen = available
            .iter()
            .copied()
            .filter(|&a| a <= required)
            .max()
            .ok_or_else(|| RelayError::Infeasible(format_rational(required)))?;
        if required > *available.iter().max().unwrap() {
            return Err(RelayError::Infeasible(format_rational(required)));
        }
        slot_uses.push((Rational64::from_integer(k) / chosen).ceil().to_integer());
        helper_rates.push(Some(chosen));
    }
    Ok(RelaySchedule {
        info_len,
        layer_rates: rates.to_vec(),
        requested_t: t.to_vec(),
        slot_uses,
        parities,
        helper_rates,
    })
}

/// Single-relay schedule.
pub fn plan_schedule(
    info_len: i64,
    r_sr1: Rational64,
    r_sd1: Rational64,
    t: Rational64,
    available: &[Rational64],
) -> Result<RelaySchedule, RelayError> {
    plan_layers(info_len, &[r_sr1, r_sd1], &[t, r(1, 1) - t], available)
}

/// Two-relay schedule with rates `[R_SR1, R_SR2, R_SD]` and slot fractions
/// `[t1, t2, t3]`.
pub fn plan_two_relay(
    info_len: i64,
    rates: [Rational64; 3],
    t: [Rational64; 3],
    available: &[Rational64],
) -> Result<RelaySchedule, RelayError> {
    plan_layers(info_len, &rates, &t, available)
}

/// The relaying protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Expurgated,
    Lengthened,
    TwoRelay,
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::Expurgated => "be",
            Scheme::Lengthened => "bl",
            Scheme::TwoRelay => "two",
        }
    }

    /// Rates and slot fractions of the reference configuration.
    pub fn reference(&self) -> (Vec<Rational64>, Vec<Rational64>) {
        match self {
            Scheme::Expurgated | Scheme::Lengthened => (vec![r(3, 4), r(1, 2)], vec![r(3, 4), r(1, 4)]),
            Scheme::TwoRelay => (vec![r(3, 4), r(7, 12), r(1, 3)], vec![r(3, 5), r(1, 5), r(1, 5)]),
        }
    }

    /// Reference schedule for `info_len` source bits.
    pub fn reference_schedule(&self, info_len: i64, reg: &CodeFamilyRegistry) -> Result<RelaySchedule, RelayError> {
        let (rates, t) = self.reference();
        plan_layers(info_len, &rates, &t, &reg.rate_ladder())
    }
}

/// How link SNR values are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrConvention {
    /// Received symbol SNR `1/σ²`.
    #[default]
    Snr,
    /// Eb/N0 relative to the rate of the code decoded on that link.
    EbN0,
}

impl SnrConvention {
    pub fn to_snr(&self, value: f64, rate: f64) -> f64 {
        match self {
            SnrConvention::Snr => value,
            SnrConvention::EbN0 => ebn0_to_snr_db(value, rate),
        }
    }
}

/// Simulation switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub decoder: DecoderConfig,
    pub convention: SnrConvention,
    /// The (first) relay always knows the source word.
    pub genie_relay: bool,
    /// Two-relay only: layer-3 checks reach the destination error-free.
    pub genie_relay2: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            decoder: DecoderConfig::default(),
            convention: SnrConvention::Snr,
            genie_relay: false,
            genie_relay2: false,
        }
    }
}

/// Link SNRs of a two-relay session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRelaySnrs {
    pub sd: f64,
    pub sr1: f64,
    pub sr2: f64,
    pub r1r2: f64,
    pub r1d: f64,
    pub r2d: f64,
}

impl From<SlicePoint> for TwoRelaySnrs {
    /// Source links at the relay offset, relay transmissions at the
    /// relay-destination offset.
    fn from(p: SlicePoint) -> Self {
        TwoRelaySnrs {
            sd: p.sd,
            sr1: p.sr,
            sr2: p.sr,
            r1r2: p.rd,
            r1d: p.rd,
            r2d: p.rd,
        }
    }
}

/// Which side of the session a component error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Relay,
    Destination,
}

/// Errors out of trials for one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCount {
    pub errors: u64,
    pub trials: u64,
}

impl EventCount {
    fn record(&mut self, error: bool) {
        self.trials += 1;
        self.errors += error as u64;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.errors as f64 / self.trials as f64)
    }

    /// 95% Wilson score interval.
    pub fn wilson(&self) -> Option<(f64, f64)> {
        wilson(self.errors, self.trials, Z95)
    }
}

/// Wilson score interval for `errors` out of `trials`.
pub fn wilson(errors: u64, trials: u64, z: f64) -> Option<(f64, f64)> {
    if trials == 0 {
        return None;
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (centre + half).min(1.0) };
    Some((lo, hi))
}

/// A named component error event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub name: &'static str,
    pub side: Side,
    pub count: EventCount,
}

/// Error counts of a batch of relay frames.
///
/// Component events are counted on every frame on which they can occur.
/// The final decode is counted only on frames with no earlier error, and
/// the end-to-end counter on every frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialLedger {
    pub scheme: Scheme,
    pub frames: u64,
    pub components: Vec<Component>,
    pub final_decode: EventCount,
    pub end_to_end: EventCount,
}

/// The union bound with its interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TrialLedger {
    pub fn empty(scheme: Scheme) -> TrialLedger {
        let comp = |name, side| Component {
            name,
            side,
            count: EventCount::default(),
        };
        let components = match scheme {
            Scheme::Expurgated | Scheme::Lengthened => {
                vec![comp("r", Side::Relay), comp("rd", Side::Destination)]
            }
            Scheme::TwoRelay => vec![
                comp("r1", Side::Relay),
                comp("r1r2", Side::Relay),
                comp("r2", Side::Relay),
                comp("r1d", Side::Destination),
                comp("r2d", Side::Destination),
            ],
        };
        TrialLedger {
            scheme,
            frames: 0,
            components,
            final_decode: EventCount::default(),
            end_to_end: EventCount::default(),
        }
    }

    pub fn merge(mut self, other: TrialLedger) -> TrialLedger {
        assert_eq!(self.scheme, other.scheme);
        self.frames += other.frames;
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.count.errors += b.count.errors;
            a.count.trials += b.count.trials;
        }
        self.final_decode.errors += other.final_decode.errors;
        self.final_decode.trials += other.final_decode.trials;
        self.end_to_end.errors += other.end_to_end.errors;
        self.end_to_end.trials += other.end_to_end.trials;
        self
    }

    pub fn component(&self, name: &str) -> Option<&EventCount> {
        self.components.iter().find(|c| c.name == name).map(|c| &c.count)
    }

    /// Sum of component rates on one side.
    pub fn side_rate(&self, side: Side) -> Option<f64> {
        self.components
            .iter()
            .filter(|c| c.side == side)
            .map(|c| c.count.rate())
            .sum()
    }

    /// Largest component or final-decode rate.
    pub fn max_term(&self) -> Option<f64> {
        let mut m: f64 = self.final_decode.rate()?;
        for c in &self.components {
            m = m.max(c.count.rate()?);
        }
        Some(m)
    }

    /// `P(E_D | clean) + Σ P(component)`, with per-term Wilson intervals
    /// combined in quadrature.
    pub fn bound(&self) -> Result<BoundEstimate, RelayError> {
        let terms = self
            .components
            .iter()
            .map(|c| (c.name, c.count))
            .chain(std::iter::once(("final", self.final_decode)));
        let (mut value, mut lo2, mut hi2) = (0.0, 0.0, 0.0);
        for (name, count) in terms {
            let p = count.rate().ok_or_else(|| RelayError::EmptyTerm(name.to_string()))?;
            let (lo, hi) = count.wilson().unwrap();
            value += p;
            lo2 += (p - lo).powi(2);
            hi2 += (hi - p).powi(2);
        }
        Ok(BoundEstimate {
            value,
            lo: (value - lo2.sqrt()).max(0.0),
            hi: value + hi2.sqrt(),
        })
    }
}

fn proto_rate(p: &ProtoMatrix) -> Result<f64, RelayError> {
    Ok(rate_f64(p.design_rate()?))
}

fn find_rate(reg: &CodeFamilyRegistry, kind: ExtensionKind, rate: Rational64) -> Result<usize, RelayError> {
    reg.family(kind)
        .iter()
        .position(|p| p.design_rate().ok() == Some(rate))
        .ok_or_else(|| RelayError::NoCode(format_rational(rate)))
}

/// A lifted helper code carrying `k` bits at `rate`.
fn helper_code(reg: &CodeFamilyRegistry, rate: Rational64, k: usize, seed: u64) -> Result<LiftedCode, RelayError> {
    let p = reg
        .by_rate(ExtensionKind::Lengthened, rate)
        .or_else(|| reg.by_rate(ExtensionKind::Expurgated, rate))
        .ok_or_else(|| RelayError::NoCode(format_rational(rate)))?;
    let q = circulant_for_info(p, PEG_FACTOR, k)?;
    Ok(lift(p, q, seed)?)
}

/// A helper code with its encoder and the number of payload bits.
#[derive(Debug, Clone)]
pub struct HelperLink {
    pub code: LiftedCode,
    pub encoder: Encoder,
    pub payload: usize,
}

impl HelperLink {
    fn new(code: LiftedCode, payload: usize) -> Result<HelperLink, RelayError> {
        let encoder = Encoder::for_code(&code);
        if encoder.dimension() < payload {
            return Err(RelayError::Mismatch(format!(
                "{} carries {} bits, {} needed",
                code.proto.name(),
                encoder.dimension(),
                payload
            )));
        }
        Ok(HelperLink { code, encoder, payload })
    }

    /// Transmitted bits carrying `payload`; spare information positions
    /// (rank deficiency) are zero.
    fn encode(&self, payload: &[u8]) -> Vec<u8> {
        let mut info = payload.to_vec();
        info.resize(self.encoder.dimension(), 0);
        let cw = self.encoder.encode(&info).expect("payload fits");
        self.code.transmitted().iter().map(|&c| cw.bits[c]).collect()
    }

    fn payload_of(&self, bits: &[u8]) -> Vec<u8> {
        let mut info = self.encoder.extract(bits);
        info.truncate(self.payload);
        info
    }

    fn rate(&self) -> Result<f64, RelayError> {
        proto_rate(&self.code.proto)
    }
}

fn check_uses(what: &str, got: usize, planned: i64) -> Result<(), RelayError> {
    if got as i64 == planned {
        Ok(())
    } else {
        Err(RelayError::Mismatch(format!("{what}: {got} symbols, schedule has {planned}")))
    }
}

/// Source code and one extra layer of expurgating checks.
#[derive(Debug, Clone)]
pub struct ExpurgatedCodes {
    pub schedule: RelaySchedule,
    pub family: LiftedFamily,
    pub sr: usize,
    pub h_e: SparseMatrix,
    pub source: Encoder,
    pub rd: HelperLink,
}

impl ExpurgatedCodes {
    pub fn build(reg: &CodeFamilyRegistry, schedule: &RelaySchedule, seed: u64) -> Result<ExpurgatedCodes, RelayError> {
        if schedule.relays() != 1 {
            return Err(RelayError::Mismatch("single-relay schedule expected".into()));
        }
        let fam = reg.family(ExtensionKind::Expurgated);
        let sr = find_rate(reg, ExtensionKind::Expurgated, schedule.layer_rates[0])?;
        let sd = find_rate(reg, ExtensionKind::Expurgated, schedule.layer_rates[1])?;
        let q = circulant_for_info(&fam[sr], PEG_FACTOR, schedule.info_len as usize)?;
        let family = lift_family(&fam[sr..=sd], ExtensionKind::Expurgated, q, seed)?;
        let f = family.parent.lift_factor();
        let source_code = family.member(0);
        let h_e = family.parent.h.row_slice(fam[sr].checks() * f..family.parent.m());
        let k2 = h_e.rows();
        let rate = schedule.helper_rates[0].ok_or_else(|| RelayError::Mismatch("degenerate schedule".into()))?;
        let rd = HelperLink::new(helper_code(reg, rate, k2, seed.wrapping_add(1))?, k2)?;
        check_uses("slot 1", source_code.transmitted_len(), schedule.slot_uses[0])?;
        check_uses("slot 2", rd.code.transmitted_len(), schedule.slot_uses[1])?;
        check_uses("k2", k2, schedule.parities[0])?;
        Ok(ExpurgatedCodes {
            schedule: schedule.clone(),
            source: Encoder::for_code(&source_code),
            family,
            sr: 0,
            h_e,
            rd,
        })
    }

    pub fn names(&self) -> String {
        let last = self.family.members.len() - 1;
        format!(
            "{}>{}+{}",
            self.family.members[self.sr].name(),
            self.family.members[last].name(),
            self.rd.code.proto.name()
        )
    }

    /// Link rates `(sr, sd, rd)`.
    pub fn link_rates(&self) -> Result<(f64, f64, f64), RelayError> {
        Ok((
            proto_rate(&self.family.members[self.sr])?,
            proto_rate(&self.family.parent.proto)?,
            self.rd.rate()?,
        ))
    }
}

/// Source code with extension columns, its destination sub-code, the
/// syndrome code `C_1` and the relay link.
#[derive(Debug, Clone)]
pub struct LengthenedCodes {
    pub schedule: RelaySchedule,
    pub family: LiftedFamily,
    pub sd: usize,
    pub source: Encoder,
    pub c1: LiftedCode,
    pub compressor: SyndromeCompressor,
    pub rd: HelperLink,
}

impl LengthenedCodes {
    pub fn build(reg: &CodeFamilyRegistry, schedule: &RelaySchedule, seed: u64) -> Result<LengthenedCodes, RelayError> {
        if schedule.relays() != 1 {
            return Err(RelayError::Mismatch("single-relay schedule expected".into()));
        }
        let fam = reg.family(ExtensionKind::Lengthened);
        let sr = find_rate(reg, ExtensionKind::Lengthened, schedule.layer_rates[0])?;
        let sd = find_rate(reg, ExtensionKind::Lengthened, schedule.layer_rates[1])?;
        let q = circulant_for_info(&fam[sr], PEG_FACTOR, schedule.info_len as usize)?;
        let family = lift_family(&fam[sd..=sr], ExtensionKind::Lengthened, q, seed)?;
        let ext_len = family.dropped(0).len();
        // C_1 has the destination code's structure at the same lift
        let c1 = lift(&fam[sd], q, seed.wrapping_add(2))?;
        if c1.transmitted_len() != ext_len {
            return Err(RelayError::Mismatch(format!(
                "C_1 sends {} symbols for {} extension bits",
                c1.transmitted_len(),
                ext_len
            )));
        }
        let compressor = SyndromeCompressor::new(&c1)?;
        let k2 = compressor.len();
        let rate = schedule.helper_rates[0].ok_or_else(|| RelayError::Mismatch("degenerate schedule".into()))?;
        let rd = HelperLink::new(helper_code(reg, rate, k2, seed.wrapping_add(1))?, k2)?;
        check_uses("slot 1", family.parent.transmitted_len(), schedule.slot_uses[0])?;
        check_uses("slot 2", rd.code.transmitted_len(), schedule.slot_uses[1])?;
        check_uses("k2", k2, schedule.parities[0])?;
        Ok(LengthenedCodes {
            schedule: schedule.clone(),
            source: Encoder::for_code(&family.parent),
            family,
            sd: 0,
            c1,
            compressor,
            rd,
        })
    }

    pub fn names(&self) -> String {
        format!(
            "{}>{}+{}+{}",
            self.family.parent.proto.name(),
            self.family.members[self.sd].name(),
            self.c1.proto.name(),
            self.rd.code.proto.name()
        )
    }

    pub fn link_rates(&self) -> Result<(f64, f64, f64), RelayError> {
        Ok((
            proto_rate(&self.family.parent.proto)?,
            proto_rate(&self.family.members[self.sd])?,
            self.rd.rate()?,
        ))
    }
}

/// Three nested expurgated layers and the two relay links.
#[derive(Debug, Clone)]
pub struct TwoRelayCodes {
    pub schedule: RelaySchedule,
    pub family: LiftedFamily,
    /// Family indices of the relay-1, relay-2 and destination codes.
    pub layers: [usize; 3],
    pub h_e2: SparseMatrix,
    pub h_e3: SparseMatrix,
    pub source: Encoder,
    pub c1: HelperLink,
    pub c2: HelperLink,
}

impl TwoRelayCodes {
    pub fn build(reg: &CodeFamilyRegistry, schedule: &RelaySchedule, seed: u64) -> Result<TwoRelayCodes, RelayError> {
        if schedule.relays() != 2 {
            return Err(RelayError::Mismatch("two-relay schedule expected".into()));
        }
        let fam = reg.family(ExtensionKind::Expurgated);
        let idx: Vec<usize> = schedule
            .layer_rates
            .iter()
            .map(|&rate| find_rate(reg, ExtensionKind::Expurgated, rate))
            .collect::<Result<_, _>>()?;
        let q = circulant_for_info(&fam[idx[0]], PEG_FACTOR, schedule.info_len as usize)?;
        let family = lift_family(&fam[idx[0]..=idx[2]], ExtensionKind::Expurgated, q, seed)?;
        let f = family.parent.lift_factor();
        let rows = |i: usize| fam[i].checks() * f;
        let h_e2 = family.parent.h.row_slice(rows(idx[0])..rows(idx[1]));
        let h_e3 = family.parent.h.row_slice(rows(idx[1])..rows(idx[2]));
        let helper = |k: usize, slot: usize, s: u64| -> Result<HelperLink, RelayError> {
            let rate = schedule.helper_rates[slot].ok_or_else(|| RelayError::Mismatch("degenerate schedule".into()))?;
            HelperLink::new(helper_code(reg, rate, k, seed.wrapping_add(s))?, k)
        };
        let c1 = helper(h_e2.rows(), 0, 1)?;
        let c2 = helper(h_e3.rows(), 1, 2)?;
        let source_code = family.member(0);
        check_uses("slot 1", source_code.transmitted_len(), schedule.slot_uses[0])?;
        check_uses("slot 2", c1.code.transmitted_len(), schedule.slot_uses[1])?;
        check_uses("slot 3", c2.code.transmitted_len(), schedule.slot_uses[2])?;
        check_uses("k2", h_e2.rows(), schedule.parities[0])?;
        check_uses("k3", h_e3.rows(), schedule.parities[1])?;
        let base = idx[0];
        Ok(TwoRelayCodes {
            schedule: schedule.clone(),
            source: Encoder::for_code(&source_code),
            layers: [0, idx[1] - base, idx[2] - base],
            family,
            h_e2,
            h_e3,
            c1,
            c2,
        })
    }

    pub fn names(&self) -> String {
        let m = &self.family.members;
        format!(
            "{}>{}>{}+{}+{}",
            m[self.layers[0]].name(),
            m[self.layers[1]].name(),
            m[self.layers[2]].name(),
            self.c1.code.proto.name(),
            self.c2.code.proto.name()
        )
    }
}

/// Codes of any scheme.
#[derive(Debug, Clone)]
pub enum RelayCodes {
    Expurgated(ExpurgatedCodes),
    Lengthened(LengthenedCodes),
    TwoRelay(TwoRelayCodes),
}

impl RelayCodes {
    pub fn build(
        scheme: Scheme,
        reg: &CodeFamilyRegistry,
        schedule: &RelaySchedule,
        seed: u64,
    ) -> Result<RelayCodes, RelayError> {
        Ok(match scheme {
            Scheme::Expurgated => RelayCodes::Expurgated(ExpurgatedCodes::build(reg, schedule, seed)?),
            Scheme::Lengthened => RelayCodes::Lengthened(LengthenedCodes::build(reg, schedule, seed)?),
            Scheme::TwoRelay => RelayCodes::TwoRelay(TwoRelayCodes::build(reg, schedule, seed)?),
        })
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            RelayCodes::Expurgated(_) => Scheme::Expurgated,
            RelayCodes::Lengthened(_) => Scheme::Lengthened,
            RelayCodes::TwoRelay(_) => Scheme::TwoRelay,
        }
    }

    pub fn schedule(&self) -> &RelaySchedule {
        match self {
            RelayCodes::Expurgated(c) => &c.schedule,
            RelayCodes::Lengthened(c) => &c.schedule,
            RelayCodes::TwoRelay(c) => &c.schedule,
        }
    }

    pub fn names(&self) -> String {
        match self {
            RelayCodes::Expurgated(c) => c.names(),
            RelayCodes::Lengthened(c) => c.names(),
            RelayCodes::TwoRelay(c) => c.names(),
        }
    }

    /// Rates of the codes decoded on the source-destination,
    /// source-relay and relay-destination links.
    pub fn link_rates(&self) -> Result<(f64, f64, f64), RelayError> {
        match self {
            RelayCodes::Expurgated(c) => c.link_rates().map(|(sr, sd, rd)| (sd, sr, rd)),
            RelayCodes::Lengthened(c) => c.link_rates().map(|(sr, sd, rd)| (sd, sr, rd)),
            RelayCodes::TwoRelay(c) => Ok((
                proto_rate(&c.family.parent.proto)?,
                proto_rate(&c.family.members[0])?,
                c.c1.rate()?,
            )),
        }
    }

    /// Simulates frames `frames` at one slice point.
    pub fn simulate(&self, point: SlicePoint, frames: Range<u64>, seed: u64, opts: &SimOptions) -> TrialLedger {
        match self {
            RelayCodes::Expurgated(c) => simulate_be(c, point, frames, seed, opts),
            RelayCodes::Lengthened(c) => simulate_bl(c, point, frames, seed, opts),
            RelayCodes::TwoRelay(c) => simulate_two_relay(c, point.into(), frames, seed, opts),
        }
    }
}

fn run_frames<W, F>(scheme: Scheme, frames: Range<u64>, init: impl Fn() -> W + Sync + Send, frame: F) -> TrialLedger
where
    W: Send,
    F: Fn(&mut W, u64, &mut TrialLedger) + Sync + Send,
{
    frames
        .into_par_iter()
        .fold(
            || (init(), TrialLedger::empty(scheme)),
            |(mut ws, mut ledger), i| {
                frame(&mut ws, i, &mut ledger);
                ledger.frames += 1;
                (ws, ledger)
            },
        )
        .map(|(_, l)| l)
        .reduce(|| TrialLedger::empty(scheme), TrialLedger::merge)
}

fn random_info<R: rand::Rng>(k: usize, rng: &mut R) -> Vec<u8> {
    (0..k).map(|_| rng.gen_range(0..2u8)).collect()
}

fn pick(bits: &[u8], cols: &[usize]) -> Vec<u8> {
    cols.iter().map(|&c| bits[c]).collect()
}

/// Bilayer-expurgated single-relay frames.
pub fn simulate_be(
    codes: &ExpurgatedCodes,
    point: SlicePoint,
    frames: Range<u64>,
    seed: u64,
    opts: &SimOptions,
) -> TrialLedger {
    let (r_sr, r_sd, r_rd) = codes.link_rates().expect("registry rates are valid");
    let snr_sd = opts.convention.to_snr(point.sd, r_sd);
    let snr_sr = opts.convention.to_snr(point.sr, r_sr);
    let snr_rd = opts.convention.to_snr(point.rd, r_rd);
    let clip = opts.decoder.clip;
    let fam = &codes.family;
    let source_code = fam.member(codes.sr);
    let tx_cols = source_code.transmitted();
    let rd_code = &codes.rd.code;
    let sr_rows = source_code.m();
    run_frames(
        Scheme::Expurgated,
        frames,
        || {
            (
                Decoder::new(&fam.parent.h, opts.decoder),
                Decoder::new(&rd_code.h, opts.decoder),
            )
        },
        |(dec, dec_rd), frame, ledger| {
            let mut rng = frame_rng(seed, frame);
            let info = random_info(codes.source.dimension(), &mut rng);
            let x = codes.source.encode(&info).expect("info length").bits;
            let tx = pick(&x, &tx_cols);
            let y_sr = transmit(&tx, snr_sr, clip, &mut rng);
            let y_sd = transmit(&tx, snr_sd, clip, &mut rng);

            let relay_bits = if opts.genie_relay {
                x.clone()
            } else {
                let llr = expand_llrs(&source_code, &y_sr).expect("length");
                decode_nested(fam, dec, codes.sr, &llr, None).expect("length").bits
            };
            let relay_ok = relay_bits == x;
            let parities = extension_parities(&codes.h_e, &relay_bits).expect("length");

            let c = codes.rd.encode(&parities);
            let y_rd = transmit(&c, snr_rd, clip, &mut rng);
            let out = dec_rd.decode(&expand_llrs(rd_code, &y_rd).expect("length"));
            let heard = codes.rd.payload_of(&out.bits);
            let rd_ok = heard == parities;

            let mut syndrome = vec![0u8; sr_rows];
            syndrome.extend_from_slice(&heard);
            let llr = expand_llrs(&fam.parent, &y_sd).expect("length");
            let d = dec.decode_with(&llr, Some(&syndrome), fam.parent.m());
            let final_err = d.bits != x;

            ledger.components[0].count.record(!relay_ok);
            ledger.components[1].count.record(!rd_ok);
            if relay_ok && rd_ok {
                ledger.final_decode.record(final_err);
            }
            ledger.end_to_end.record(final_err);
        },
    )
}

/// Bilayer-lengthened single-relay frames.
pub fn simulate_bl(
    codes: &LengthenedCodes,
    point: SlicePoint,
    frames: Range<u64>,
    seed: u64,
    opts: &SimOptions,
) -> TrialLedger {
    let (r_sr, r_sd, r_rd) = codes.link_rates().expect("registry rates are valid");
    let snr_sd = opts.convention.to_snr(point.sd, r_sd);
    let snr_sr = opts.convention.to_snr(point.sr, r_sr);
    let snr_rd = opts.convention.to_snr(point.rd, r_rd);
    let clip = opts.decoder.clip;
    let fam = &codes.family;
    let parent = &fam.parent;
    let tx_cols = parent.transmitted();
    let ext = fam.dropped(codes.sd);
    let h_ext = parent.h.col_slice(ext.clone());
    let rd_code = &codes.rd.code;
    let c1_tx = codes.c1.transmitted();
    run_frames(
        Scheme::Lengthened,
        frames,
        || {
            (
                Decoder::new(&parent.h, opts.decoder),
                Decoder::new(&codes.c1.h, opts.decoder),
                Decoder::new(&rd_code.h, opts.decoder),
            )
        },
        |(dec, dec_c1, dec_rd), frame, ledger| {
            let mut rng = frame_rng(seed, frame);
            let info = random_info(codes.source.dimension(), &mut rng);
            let x = codes.source.encode(&info).expect("info length").bits;
            let tx = pick(&x, &tx_cols);
            let y_sr = transmit(&tx, snr_sr, clip, &mut rng);
            let y_sd = transmit(&tx, snr_sd, clip, &mut rng);

            let relay_bits = if opts.genie_relay {
                x.clone()
            } else {
                dec.decode(&expand_llrs(parent, &y_sr).expect("length")).bits
            };
            let relay_ok = relay_bits == x;
            let x2 = &relay_bits[ext.clone()];
            let compressed = codes.compressor.compress(x2).expect("length");

            let c = codes.rd.encode(&compressed);
            let y_rd = transmit(&c, snr_rd, clip, &mut rng);
            let out = dec_rd.decode(&expand_llrs(rd_code, &y_rd).expect("length"));
            let heard = codes.rd.payload_of(&out.bits);

            // recover the extension bits from their syndrome
            let llr_sd = expand_llrs(parent, &y_sd).expect("length");
            let syndrome = codes.compressor.expand(&heard).expect("length");
            let c1_llr = expand_llrs(&codes.c1, &llr_sd[ext.clone()]).expect("length");
            let c1_out = dec_c1.decode_with(&c1_llr, Some(&syndrome), codes.c1.m());
            let x2_hat = pick(&c1_out.bits, &c1_tx);
            let rd_ok = heard == compressed && x2_hat == x2;

            // strip them and decode the destination sub-code
            let sub_syndrome = h_ext.mul_vec(&x2_hat);
            let sub_llr = &llr_sd[..ext.start];
            let d = decode_nested(fam, dec, codes.sd, sub_llr, Some(&sub_syndrome)).expect("length");
            let mut x_hat = d.bits;
            x_hat.extend_from_slice(&x2_hat);
            let final_err = x_hat != x;

            ledger.components[0].count.record(!relay_ok);
            ledger.components[1].count.record(!rd_ok);
            if relay_ok && rd_ok {
                ledger.final_decode.record(final_err);
            }
            ledger.end_to_end.record(final_err);
        },
    )
}

/// Two-relay expurgated frames.
pub fn simulate_two_relay(
    codes: &TwoRelayCodes,
    snrs: TwoRelaySnrs,
    frames: Range<u64>,
    seed: u64,
    opts: &SimOptions,
) -> TrialLedger {
    let fam = &codes.family;
    let rate = |k: usize| proto_rate(&fam.members[codes.layers[k]]).expect("registry rates are valid");
    let (r_c1, r_c2) = (codes.c1.rate().unwrap(), codes.c2.rate().unwrap());
    let conv = opts.convention;
    let snr_sr1 = conv.to_snr(snrs.sr1, rate(0));
    let snr_sr2 = conv.to_snr(snrs.sr2, rate(1));
    let snr_sd = conv.to_snr(snrs.sd, rate(2));
    let snr_r1r2 = conv.to_snr(snrs.r1r2, r_c1);
    let snr_r1d = conv.to_snr(snrs.r1d, r_c1);
    let snr_r2d = conv.to_snr(snrs.r2d, r_c2);
    let clip = opts.decoder.clip;
    let source_code = fam.member(codes.layers[0]);
    let tx_cols = source_code.transmitted();
    let sr1_rows = source_code.m();
    let sr2_rows = sr1_rows + codes.h_e2.rows();
    run_frames(
        Scheme::TwoRelay,
        frames,
        || {
            (
                Decoder::new(&fam.parent.h, opts.decoder),
                Decoder::new(&codes.c1.code.h, opts.decoder),
                Decoder::new(&codes.c2.code.h, opts.decoder),
            )
        },
        |(dec, dec_c1, dec_c2), frame, ledger| {
            let mut rng = frame_rng(seed, frame);
            let info = random_info(codes.source.dimension(), &mut rng);
            let x = codes.source.encode(&info).expect("info length").bits;
            let tx = pick(&x, &tx_cols);
            let y_r1 = transmit(&tx, snr_sr1, clip, &mut rng);
            let y_r2 = transmit(&tx, snr_sr2, clip, &mut rng);
            let y_d = transmit(&tx, snr_sd, clip, &mut rng);

            // slot 1: relay 1 decodes the source code
            let b1 = if opts.genie_relay {
                x.clone()
            } else {
                let llr = expand_llrs(&source_code, &y_r1).expect("length");
                decode_nested(fam, dec, codes.layers[0], &llr, None).expect("length").bits
            };
            let r1_ok = b1 == x;

            // slot 2: layer-2 checks via C_1 to relay 2 and the destination
            let p2 = extension_parities(&codes.h_e2, &b1).expect("length");
            let c = codes.c1.encode(&p2);
            let y_12 = transmit(&c, snr_r1r2, clip, &mut rng);
            let y_1d = transmit(&c, snr_r1d, clip, &mut rng);
            let c1_code = &codes.c1.code;
            let p2_r2 = codes.c1.payload_of(&dec_c1.decode(&expand_llrs(c1_code, &y_12).expect("length")).bits);
            let p2_d = codes.c1.payload_of(&dec_c1.decode(&expand_llrs(c1_code, &y_1d).expect("length")).bits);
            let r1r2_ok = opts.genie_relay2 || p2_r2 == p2;
            let r1d_ok = p2_d == p2;

            // relay 2 decodes the middle code with the layer-2 checks
            let b2 = if opts.genie_relay2 {
                x.clone()
            } else {
                let mut s = vec![0u8; sr1_rows];
                s.extend_from_slice(&p2_r2);
                s.resize(fam.parent.m(), 0);
                let llr = expand_llrs(&source_code, &y_r2).expect("length");
                dec.decode_with(&llr, Some(&s), sr2_rows).bits
            };
            let r2_ok = b2 == x;

            // slot 3: layer-3 checks via C_2 to the destination
            let p3 = extension_parities(&codes.h_e3, &b2).expect("length");
            let p3_d = if opts.genie_relay2 {
                p3.clone()
            } else {
                let c = codes.c2.encode(&p3);
                let y_2d = transmit(&c, snr_r2d, clip, &mut rng);
                let c2_code = &codes.c2.code;
                codes.c2.payload_of(&dec_c2.decode(&expand_llrs(c2_code, &y_2d).expect("length")).bits)
            };
            let r2d_ok = p3_d == p3;

            let mut s = vec![0u8; sr1_rows];
            s.extend_from_slice(&p2_d);
            s.extend_from_slice(&p3_d);
            let llr = expand_llrs(&fam.parent, &y_d).expect("length");
            let d = dec.decode_with(&llr, Some(&s), fam.parent.m());
            let final_err = d.bits != x;

            ledger.components[0].count.record(!r1_ok);
            ledger.components[1].count.record(!r1r2_ok);
            if r1_ok && r1r2_ok {
                ledger.components[2].count.record(!r2_ok);
            }
            ledger.components[3].count.record(!r1d_ok);
            ledger.components[4].count.record(!r2d_ok);
            if r1_ok && r1r2_ok && r2_ok && r1d_ok && r2d_ok {
                ledger.final_decode.record(final_err);
            }
            ledger.end_to_end.record(final_err);
        },
    )
}

/// Per-link SNR and Eb/N0 at one slice point: `(sd, sr, rd)` each.
pub fn link_snrs(codes: &RelayCodes, point: SlicePoint, conv: SnrConvention) -> Result<([f64; 3], [f64; 3]), RelayError> {
    let (r_sd, r_sr, r_rd) = codes.link_rates()?;
    let snr = [
        conv.to_snr(point.sd, r_sd),
        conv.to_snr(point.sr, r_sr),
        conv.to_snr(point.rd, r_rd),
    ];
    let eb = [
        snr_to_ebn0_db(snr[0], r_sd),
        snr_to_ebn0_db(snr[1], r_sr),
        snr_to_ebn0_db(snr[2], r_rd),
    ];
    Ok((snr, eb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SnrSlice;

    fn reg() -> CodeFamilyRegistry {
        CodeFamilyRegistry::builtin()
    }

    #[test]
    fn single_relay_reference_schedule() {
        let s = plan_schedule(16380, r(3, 4), r(1, 2), r(3, 4), &reg().rate_ladder()).unwrap();
        assert_eq!(s.slot_uses, vec![21840, 7280]);
        assert_eq!(s.parities, vec![5460]);
        assert_eq!(s.helper_rates, vec![Some(r(3, 4))]);
        // independent cross-check of the throughput
        assert_eq!(s.throughput(), r(16380, 21840 + 7280));
        assert_eq!(s.throughput(), r(9, 16));
        assert_eq!(s.t(), vec![r(3, 4), r(1, 4)]);
    }

    #[test]
    fn two_relay_reference_schedule() {
        let s = plan_two_relay(
            16380,
            [r(3, 4), r(7, 12), r(1, 3)],
            [r(3, 5), r(1, 5), r(1, 5)],
            &reg().rate_ladder(),
        )
        .unwrap();
        assert_eq!(s.parities, vec![3640, 5460]);
        assert_eq!(s.helper_rates, vec![Some(r(1, 2)), Some(r(3, 4))]);
        assert_eq!(s.slot_uses, vec![21840, 7280, 7280]);
        assert_eq!(s.throughput(), r(9, 20));
    }

    #[test]
    fn equal_rates_need_no_relay() {
        let s = plan_schedule(900, r(3, 4), r(3, 4), r(2, 3), &reg().rate_ladder()).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(s.parities, vec![0]);
        assert_eq!(s.helper_rates, vec![None]);
        assert_eq!(s.throughput(), r(3, 4));
    }

    #[test]
    fn schedule_rejections() {
        let ladder = reg().rate_ladder();
        // the relay slot would need rate 3/2
        assert!(matches!(
            plan_schedule(16380, r(3, 4), r(1, 2), r(9, 10), &ladder),
            Err(RelayError::Infeasible(_))
        ));
        assert!(matches!(
            plan_schedule(16380, r(1, 2), r(3, 4), r(3, 4), &ladder),
            Err(RelayError::RateOrder)
        ));
        assert!(matches!(
            plan_schedule(16380, r(3, 4), r(1, 2), r(1, 1), &ladder),
            Err(RelayError::SlotFractions)
        ));
        assert!(matches!(
            plan_schedule(16381, r(3, 4), r(1, 2), r(3, 4), &ladder),
            Err(RelayError::NonInteger { .. })
        ));
    }

    #[test]
    fn slower_helper_lengthens_the_slot() {
        // t = 8/11 asks for rate 2/3, only 1/2 is below it
        let ladder = [r(1, 2), r(3, 4)];
        let s = plan_schedule(16380, r(3, 4), r(1, 2), r(8, 11), &ladder).unwrap();
        assert_eq!(s.helper_rates, vec![Some(r(1, 2))]);
        assert_eq!(s.slot_uses[1], 10920);
    }

    #[test]
    fn wilson_interval() {
        assert_eq!(wilson(0, 0, Z95), None);
        let (lo, hi) = wilson(0, 100, Z95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.0370).abs() < 1e-3);
        let (lo, hi) = wilson(50, 100, Z95).unwrap();
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn bound_arithmetic() {
        let mut l = TrialLedger::empty(Scheme::Expurgated);
        assert!(matches!(l.bound(), Err(RelayError::EmptyTerm(_))));
        for c in &mut l.components {
            c.count = EventCount { errors: 0, trials: 10 };
        }
        l.final_decode = EventCount { errors: 0, trials: 10 };
        assert_eq!(l.bound().unwrap().value, 0.0);
        for c in &mut l.components {
            c.count = EventCount { errors: 1, trials: 1000 };
        }
        l.final_decode = EventCount { errors: 1, trials: 1000 };
        assert!((l.bound().unwrap().value - 3e-3).abs() < 1e-15);
    }

    fn desk(scheme: Scheme) -> RelayCodes {
        let reg = reg();
        let info = match scheme {
            Scheme::TwoRelay => 9 * 4 * 12,
            _ => 9 * 4 * 12,
        };
        let s = scheme.reference_schedule(info, &reg).unwrap();
        RelayCodes::build(scheme, &reg, &s, 3).unwrap()
    }

    #[test]
    fn desk_lengths_scale_exactly() {
        let reg = reg();
        // F = 456 against the reference F = 1820
        let s = Scheme::Lengthened.reference_schedule(4104, &reg).unwrap();
        let codes = LengthenedCodes::build(&reg, &s, 1).unwrap();
        let f = codes.family.parent.lift_factor() as i64;
        assert_eq!(f, 456);
        assert_eq!(codes.family.parent.transmitted_len() as i64 * 1820, 21840 * f);
        assert_eq!(codes.c1.transmitted_len() as i64 * 1820, 10920 * f);
        assert_eq!(codes.compressor.len() as i64 * 1820, 5460 * f);
        assert_eq!(codes.rd.code.transmitted_len() as i64 * 1820, 7280 * f);
    }

    #[test]
    fn two_relay_node_counts() {
        let reg = reg();
        let s = Scheme::TwoRelay.reference_schedule(4104, &reg).unwrap();
        let codes = TwoRelayCodes::build(&reg, &s, 1).unwrap();
        let f = codes.family.parent.lift_factor();
        assert_eq!(codes.family.parent.n(), 13 * f);
        assert_eq!(codes.c1.code.transmitted_len(), s.slot_uses[1] as usize);
        assert_eq!(codes.c2.code.transmitted_len(), s.slot_uses[2] as usize);
        assert_eq!(codes.h_e2.rows(), 2 * f);
        assert_eq!(codes.h_e3.rows(), 3 * f);
    }

    #[test]
    fn noiseless_sessions_are_error_free() {
        for scheme in [Scheme::Expurgated, Scheme::Lengthened, Scheme::TwoRelay] {
            let codes = desk(scheme);
            let l = codes.simulate(SnrSlice::new(0.0, 0.0).point(40.0), 0..8, 1, &SimOptions::default());
            assert_eq!(l.frames, 8);
            assert!(l.components.iter().all(|c| c.count.errors == 0), "{scheme:?}");
            assert_eq!(l.final_decode, EventCount { errors: 0, trials: 8 });
            assert_eq!(l.end_to_end.errors, 0);
            assert_eq!(l.bound().unwrap().value, 0.0);
        }
    }

    #[test]
    fn results_do_not_depend_on_batching() {
        let codes = desk(Scheme::Expurgated);
        let p = SnrSlice::new(1.4, 1.6).point(-1.2);
        let opts = SimOptions::default();
        let whole = codes.simulate(p, 0..24, 5, &opts);
        let parts = codes
            .simulate(p, 0..10, 5, &opts)
            .merge(codes.simulate(p, 10..24, 5, &opts));
        assert_eq!(whole, parts);
    }

    #[test]
    fn end_to_end_errors_respect_the_union() {
        for scheme in [Scheme::Expurgated, Scheme::Lengthened, Scheme::TwoRelay] {
            let codes = desk(scheme);
            let l = codes.simulate(SnrSlice::new(1.4, 1.6).point(-1.0), 0..40, 2, &SimOptions::default());
            let clean_failures = l.final_decode.errors;
            let components: u64 = l.components.iter().map(|c| c.count.errors).sum();
            // every end-to-end error is a final error on a clean frame or
            // a frame with some component error
            assert!(l.end_to_end.errors <= clean_failures + components, "{scheme:?}");
        }
    }
}
