//! Point-to-point BER/WER sweeps of one lifted code.

use bilayer::channel::{frame_rng, snr_to_ebn0_db, transmit};
use bilayer::codec::{expand_llrs, Decoder, DecoderConfig, Encoder};
use bilayer::lifting::{circulant_for_info, lift, LiftedCode, PEG_FACTOR};
use bilayer::pexit::rate_f64;
use bilayer::protograph::ProtoMatrix;
use bilayer::relay::{wilson, SnrConvention, Z95};
use rand::Rng;
use rayon::prelude::*;

use crate::{db, prob, validate_grid, CliError, Table};

#[derive(Debug, Clone)]
pub struct P2pConfig {
    pub code: ProtoMatrix,
    pub info_len: usize,
    /// Sweep values, read through `convention` at the code's design rate.
    pub grid: Vec<f64>,
    pub convention: SnrConvention,
    pub max_frames: u64,
    /// Stop a point once this many word errors are seen.
    pub min_errors: u64,
    /// Frames simulated between stop-rule checks.
    pub batch: u64,
    /// Seeds the lift and the noise.
    pub seed: u64,
    pub decoder: DecoderConfig,
}

impl P2pConfig {
    pub fn new(code: ProtoMatrix, info_len: usize, grid: Vec<f64>, seed: u64) -> P2pConfig {
        P2pConfig {
            code,
            info_len,
            grid,
            convention: SnrConvention::EbN0,
            max_frames: 10_000,
            min_errors: 100,
            batch: 64,
            seed,
            decoder: DecoderConfig::default(),
        }
    }
}

/// Counts at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct P2pPoint {
    pub snr_db: f64,
    pub ebn0_db: f64,
    pub frames: u64,
    pub info_bits: u64,
    pub bit_errors: u64,
    pub word_errors: u64,
    pub iterations: u64,
}

impl P2pPoint {
    pub fn wer(&self) -> f64 {
        self.word_errors as f64 / self.frames as f64
    }

    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.info_bits as f64
    }

    pub fn avg_iters(&self) -> f64 {
        self.iterations as f64 / self.frames as f64
    }

    pub fn wer_ci(&self) -> (f64, f64) {
        wilson(self.word_errors, self.frames, Z95).unwrap_or((0.0, 1.0))
    }

    fn add(mut self, o: P2pPoint) -> P2pPoint {
        self.frames += o.frames;
        self.info_bits += o.info_bits;
        self.bit_errors += o.bit_errors;
        self.word_errors += o.word_errors;
        self.iterations += o.iterations;
        self
    }
}

/// Simulates frames `start..end` of one point.
pub fn simulate_frames(
    code: &LiftedCode,
    enc: &Encoder,
    snr_db: f64,
    frames: std::ops::Range<u64>,
    seed: u64,
    cfg: DecoderConfig,
) -> P2pPoint {
    let tx_cols = code.transmitted();
    frames
        .into_par_iter()
        .map_init(
            || Decoder::new(&code.h, cfg),
            |dec, f| {
                let mut rng = frame_rng(seed, f);
                let info: Vec<u8> = (0..enc.dimension()).map(|_| rng.gen_range(0..2u8)).collect();
                let cw = enc.encode(&info).expect("info has the encoder's dimension");
                let tx: Vec<u8> = tx_cols.iter().map(|&c| cw.bits[c]).collect();
                let y = transmit(&tx, snr_db, cfg.clip, &mut rng);
                let out = dec.decode(&expand_llrs(code, &y).expect("one LLR per sent bit"));
                let got = enc.extract(&out.bits);
                let bit_errors = got.iter().zip(&info).filter(|(a, b)| a != b).count() as u64;
                P2pPoint {
                    frames: 1,
                    info_bits: info.len() as u64,
                    bit_errors,
                    word_errors: u64::from(out.bits != cw.bits),
                    iterations: out.iterations as u64,
                    ..P2pPoint::default()
                }
            },
        )
        .reduce(P2pPoint::default, P2pPoint::add)
}

/// One point under the stop rule: batches of `batch` frames until
/// `min_errors` word errors or `max_frames` frames. Batch boundaries are
/// fixed, so results do not depend on thread scheduling.
pub fn simulate_point(code: &LiftedCode, enc: &Encoder, snr_db: f64, cfg: &P2pConfig) -> P2pPoint {
    let mut acc = P2pPoint::default();
    let batch = cfg.batch.max(1);
    while acc.frames < cfg.max_frames && acc.word_errors < cfg.min_errors {
        let end = (acc.frames + batch).min(cfg.max_frames);
        acc = acc.add(simulate_frames(code, enc, snr_db, acc.frames..end, cfg.seed, cfg.decoder));
    }
    acc
}

pub fn run_p2p_sweep(cfg: &P2pConfig) -> Result<(Table, Vec<P2pPoint>), CliError> {
    validate_grid(&cfg.grid)?;
    let q = circulant_for_info(&cfg.code, PEG_FACTOR, cfg.info_len)?;
    let rate = rate_f64(cfg.code.design_rate()?);
    let mut t = Table::new(&[
        "code", "info_len", "n", "seed", "snr_db", "ebn0_db", "frames", "bit_errors", "ber", "word_errors", "wer",
        "ci_lo", "ci_hi", "avg_iters",
    ]);
    t.note("command", "p2p");
    t.note("convention", convention_name(cfg.convention));
    t.note(
        "stop_rule",
        format!("{} word errors or {} frames, batches of {}", cfg.min_errors, cfg.max_frames, cfg.batch.max(1)),
    );
    t.note("decoder", format!("max_iters={} clip={}", cfg.decoder.max_iters, cfg.decoder.clip));
    if cfg.max_frames == 0 {
        t.warnings.push("frame budget is zero; nothing simulated".into());
        return Ok((t, Vec::new()));
    }
    let code = lift(&cfg.code, q, cfg.seed)?;
    let enc = Encoder::for_code(&code);
    t.note("circulant", q);
    t.note("dimension", enc.dimension());
    let mut points = Vec::with_capacity(cfg.grid.len());
    for &v in &cfg.grid {
        let snr = cfg.convention.to_snr(v, rate);
        let mut p = simulate_point(&code, &enc, snr, cfg);
        p.snr_db = snr;
        p.ebn0_db = snr_to_ebn0_db(snr, rate);
        let (lo, hi) = p.wer_ci();
        t.push(vec![
            cfg.code.name().into(),
            cfg.info_len.to_string(),
            code.transmitted_len().to_string(),
            cfg.seed.to_string(),
            db(p.snr_db),
            db(p.ebn0_db),
            p.frames.to_string(),
            p.bit_errors.to_string(),
            prob(p.ber()),
            p.word_errors.to_string(),
            prob(p.wer()),
            prob(lo),
            prob(hi),
            format!("{:.2}", p.avg_iters()),
        ]);
        points.push(p);
    }
    Ok((t, points))
}

pub(crate) fn convention_name(c: SnrConvention) -> &'static str {
    match c {
        SnrConvention::Snr => "snr",
        SnrConvention::EbN0 => "ebn0",
    }
}
