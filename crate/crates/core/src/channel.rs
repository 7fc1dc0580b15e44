//! BI-AWGN links, SNR bookkeeping and the fixed-offset SNR slice.
//!
//! SNR values are received symbol SNR `1/σ²` for unit-energy BPSK in
//! real Gaussian noise of variance `σ²`, so `snr_db = 0` means `σ² = 1`.
//! A link carrying `R` information bits per transmitted symbol then has
//! `Eb/N0 = SNR / (2R)`. Punctured positions are never sent and carry no
//! energy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::DEFAULT_CLIP;

/// Noise variance for a received SNR in dB.
pub fn sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Eb/N0 in dB for a link carrying `rate` information bits per symbol.
pub fn snr_to_ebn0_db(snr_db: f64, rate: f64) -> f64 {
    snr_db - 10.0 * (2.0 * rate).log10()
}

/// Received SNR in dB giving `ebn0_db` at `rate`.
pub fn ebn0_to_snr_db(ebn0_db: f64, rate: f64) -> f64 {
    ebn0_db + 10.0 * (2.0 * rate).log10()
}

/// Independent, reproducible noise stream for one frame.
pub fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

/// A real AWGN link `y = h x + n` with unit-variance noise and unit-power
/// BPSK input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub gain: f64,
    pub snr_db: f64,
}

impl LinkModel {
    pub fn from_gain(gain: f64) -> LinkModel {
        LinkModel {
            gain,
            snr_db: 20.0 * gain.abs().log10(),
        }
    }

    pub fn from_snr_db(snr_db: f64) -> LinkModel {
        LinkModel {
            gain: 10f64.powf(snr_db / 20.0),
            snr_db,
        }
    }
}

/// Sends `bits` as BPSK (0 → +1) at the given SNR and returns clipped
/// channel LLRs `2y/σ²`.
pub fn transmit<R: rand::Rng + ?Sized>(bits: &[u8], snr_db: f64, clip: f64, rng: &mut R) -> Vec<f64> {
    let s2 = sigma2(snr_db);
    let sigma = s2.sqrt();
    bits.iter()
        .map(|&b| {
            let x = if b & 1 == 0 { 1.0 } else { -1.0 };
            let n: f64 = StandardNormal.sample(rng);
            (2.0 * (x + sigma * n) / s2).clamp(-clip, clip)
        })
        .collect()
}

/// [`transmit`] with the default clip.
pub fn transmit_default<R: rand::Rng + ?Sized>(bits: &[u8], snr_db: f64, rng: &mut R) -> Vec<f64> {
    transmit(bits, snr_db, DEFAULT_CLIP, rng)
}

/// Fixed offsets tying the three link SNRs to the source-destination SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSlice {
    pub alpha_db: f64,
    pub beta_db: f64,
}

/// SNRs of the three links at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePoint {
    pub sd: f64,
    pub sr: f64,
    pub rd: f64,
}

impl SnrSlice {
    pub fn new(alpha_db: f64, beta_db: f64) -> SnrSlice {
        SnrSlice { alpha_db, beta_db }
    }

    pub fn point(&self, snr_sd_db: f64) -> SlicePoint {
        SlicePoint {
            sd: snr_sd_db,
            sr: snr_sd_db + self.alpha_db,
            rd: snr_sd_db + self.beta_db,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_db_is_unit_variance() {
        assert_eq!(sigma2(0.0), 1.0);
        assert!((sigma2(10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rate_conversion() {
        // rate 1/2 makes the two scales coincide
        assert_eq!(snr_to_ebn0_db(0.7, 0.5), 0.7);
        assert!((snr_to_ebn0_db(0.0, 0.25) - 10.0 * 2f64.log10()).abs() < 1e-12);
        assert!((ebn0_to_snr_db(snr_to_ebn0_db(1.3, 0.75), 0.75) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn noiseless_limit_saturates() {
        let mut rng = frame_rng(1, 0);
        let bits = [0u8, 1, 1, 0, 1];
        let llr = transmit(&bits, 200.0, 30.0, &mut rng);
        for (&b, &l) in bits.iter().zip(&llr) {
            assert_eq!(l, if b == 0 { 30.0 } else { -30.0 });
        }
    }

    #[test]
    fn slice_offsets() {
        let p = SnrSlice::new(1.4, 1.6).point(0.225);
        assert!((p.sd - 0.225).abs() < 1e-12);
        assert!((p.sr - 1.625).abs() < 1e-12);
        assert!((p.rd - 1.825).abs() < 1e-12);
        let flat = SnrSlice::new(0.0, 0.0).point(-2.0);
        assert_eq!((flat.sd, flat.sr, flat.rd), (-2.0, -2.0, -2.0));
        let s = SnrSlice::new(1.4, 1.6);
        for sd in [-3.0, 0.0, 2.5] {
            let p = s.point(sd);
            assert!((p.sr - p.sd - 1.4).abs() < 1e-12 && (p.rd - p.sd - 1.6).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let bits = vec![0u8; 64];
        let a = transmit_default(&bits, 1.0, &mut frame_rng(9, 3));
        let b = transmit_default(&bits, 1.0, &mut frame_rng(9, 3));
        let c = transmit_default(&bits, 1.0, &mut frame_rng(9, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gain_and_snr_agree() {
        let l = LinkModel::from_gain(2.0);
        assert!((l.snr_db - 6.0206).abs() < 1e-4);
        assert!((LinkModel::from_snr_db(l.snr_db).gain - 2.0).abs() < 1e-12);
    }

    #[test]
    fn llr_moments() {
        // mean 2/σ² and variance 4/σ² for the all-zero word
        let snr = 1.0;
        let s2 = sigma2(snr);
        let n = 1_000_000;
        let llr = transmit(&vec![0u8; n], snr, f64::INFINITY, &mut frame_rng(77, 0));
        let mean = llr.iter().sum::<f64>() / n as f64;
        let var = llr.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean / (2.0 / s2) - 1.0).abs() < 0.01, "mean {mean}");
        assert!((var / (4.0 / s2) - 1.0).abs() < 0.01, "var {var}");
        let se = (4.0 / s2 / n as f64).sqrt();
        assert!((mean - 2.0 / s2).abs() < 3.0 * se);
    }
}
