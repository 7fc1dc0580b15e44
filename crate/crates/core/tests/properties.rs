use bilayer::channel::{frame_rng, transmit, SnrSlice};
use bilayer::codec::{Decoder, DecoderConfig, Encoder};
use bilayer::gf2::BitMatrix;
use bilayer::lifting::lift;
use bilayer::pexit::{biawgn_capacity_db, j_function, j_inverse};
use bilayer::protograph::{Block, CodeFamilyRegistry, ProtoMatrix};
use bilayer::relay::{plan_layers, wilson, EventCount, Scheme, TrialLedger, Z95};
use bilayer::sparse::SparseMatrix;
use num_rational::Rational64;
use proptest::prelude::*;
use std::sync::OnceLock;

fn small_code() -> &'static (SparseMatrix, Encoder) {
    static CODE: OnceLock<(SparseMatrix, Encoder)> = OnceLock::new();
    CODE.get_or_init(|| {
        let reg = CodeFamilyRegistry::builtin();
        let code = lift(reg.get("BL-2/3").unwrap(), 6, 2).unwrap();
        let enc = Encoder::for_code(&code);
        (code.h, enc)
    })
}

fn bits(n: usize) -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(0u8..2, n)
}

fn ledger(counts: Vec<(u64, u64)>) -> TrialLedger {
    let mut l = TrialLedger::empty(Scheme::Expurgated);
    for (c, &(e, t)) in l.components.iter_mut().zip(&counts) {
        c.count = EventCount { errors: e.min(t), trials: t };
    }
    let (e, t) = counts[2];
    l.final_decode = EventCount { errors: e.min(t), trials: t };
    l.frames = counts[0].1;
    l.end_to_end = EventCount { errors: 0, trials: l.frames };
    l
}

fn counts() -> impl Strategy<Value = Vec<(u64, u64)>> {
    proptest::collection::vec((0u64..50, 0u64..200), 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn j_round_trip(mi in 1e-4f64..0.9999) {
        let s = j_inverse(mi).unwrap();
        prop_assert!((j_function(s) - mi).abs() < 1e-6);
        prop_assert!(j_inverse(mi + 5e-5).unwrap() > s);
    }

    #[test]
    fn capacity_increases_with_rate(a in 0.05f64..0.9, d in 0.01f64..0.09) {
        prop_assert!(biawgn_capacity_db(a + d).unwrap() > biawgn_capacity_db(a).unwrap());
    }

    #[test]
    fn encoding_is_linear(a in bits(small_code().1.dimension()), b in bits(small_code().1.dimension())) {
        let (h, enc) = small_code();
        let ca = enc.encode(&a).unwrap();
        let cb = enc.encode(&b).unwrap();
        let sum: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let cs = enc.encode(&sum).unwrap();
        prop_assert!(h.is_codeword(&ca.bits));
        let xor: Vec<u8> = ca.bits.iter().zip(&cb.bits).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(cs.bits, xor);
        prop_assert_eq!(enc.extract(&ca.bits), a);
    }

    #[test]
    fn coset_words_have_their_syndrome(info in bits(small_code().1.dimension()), seed in any::<u64>()) {
        let (h, enc) = small_code();
        // any H·x is a reachable syndrome
        let mut rng = frame_rng(seed, 0);
        let x: Vec<u8> = (0..h.cols()).map(|_| rand::Rng::gen_range(&mut rng, 0..2u8)).collect();
        let s = h.mul_vec(&x);
        let w = enc.encode_coset(&info, Some(&s)).unwrap();
        prop_assert_eq!(h.mul_vec(&w.bits), s);
        prop_assert_eq!(enc.extract(&w.bits), info);
    }

    #[test]
    fn noiseless_decoding_returns_the_word(info in bits(small_code().1.dimension())) {
        let (h, enc) = small_code();
        let cw = enc.encode(&info).unwrap();
        let llr: Vec<f64> = cw.bits.iter().map(|&b| if b == 0 { 30.0 } else { -30.0 }).collect();
        let out = Decoder::new(h, DecoderConfig::default()).decode(&llr);
        prop_assert!(out.converged && out.iterations <= 2);
        prop_assert_eq!(out.bits, cw.bits);
    }

    #[test]
    fn llrs_respect_clip_and_sign(b in bits(64), snr in -5.0f64..40.0, clip in 1.0f64..30.0, seed in any::<u64>()) {
        let llr = transmit(&b, snr, clip, &mut frame_rng(seed, 1));
        for (&x, &l) in b.iter().zip(&llr) {
            prop_assert!(l.abs() <= clip);
            // a flip needs noise beyond 1/σ standard deviations
            if snr >= 30.0 {
                prop_assert_eq!(l < 0.0, x == 1);
            }
        }
    }

    #[test]
    fn slice_is_affine(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, sd in -5.0f64..10.0) {
        let p = SnrSlice::new(alpha, beta).point(sd);
        prop_assert!((p.sr - sd - alpha).abs() < 1e-12);
        prop_assert!((p.rd - sd - beta).abs() < 1e-12);
    }

    #[test]
    fn schedule_arithmetic(units in 1i64..60, t0 in 30i64..95) {
        // info is a multiple of 60 so every slot is integral at rates 3/4 and 1/2
        let info = 60 * units;
        let rates = [Rational64::new(3, 4), Rational64::new(1, 2)];
        let t = [Rational64::new(t0, 100), Rational64::new(100 - t0, 100)];
        let ladder = CodeFamilyRegistry::builtin().rate_ladder();
        let slot1 = info * 4 / 3;
        let required = Rational64::new(slot1 / 4, 1) / (Rational64::new(slot1, 1) * t[1] / t[0]);
        let res = plan_layers(info, &rates, &t, &ladder);
        if required < ladder[0] || required > *ladder.last().unwrap() {
            prop_assert!(res.is_err());
            return Ok(());
        }
        let s = res.unwrap();
        prop_assert_eq!(s.slot_uses[0], slot1);
        prop_assert_eq!(s.parities[0], slot1 / 4);
        let rate = s.helper_rates[0].unwrap();
        prop_assert!(rate <= required);
        prop_assert!(ladder.iter().all(|&r| r <= rate || r > required));
        prop_assert!(Rational64::new(s.parities[0], 1) <= rate * s.slot_uses[1]);
        prop_assert_eq!(s.throughput(), Rational64::new(info, s.total_uses()));
    }

    #[test]
    fn ledger_merge_is_associative_and_commutative(a in counts(), b in counts(), c in counts()) {
        let (la, lb, lc) = (ledger(a), ledger(b), ledger(c));
        let left = la.clone().merge(lb.clone()).merge(lc.clone());
        let right = la.clone().merge(lb.clone().merge(lc.clone()));
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(la.clone().merge(lb.clone()), lb.merge(la));
    }

    #[test]
    fn wilson_brackets_the_rate(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
        let errors = ((trials as f64) * frac).round() as u64;
        let (lo, hi) = wilson(errors, trials, Z95).unwrap();
        let p = errors as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }

    #[test]
    fn proto_text_round_trip(entries in proptest::collection::vec(1u8..3, 12), punct in any::<bool>()) {
        let rows: Vec<Vec<u8>> = entries.chunks(4).map(|c| c.to_vec()).collect();
        let p = ProtoMatrix::new("p", Block::from_rows(&rows).unwrap(), punct.then_some(0)).unwrap();
        let q = ProtoMatrix::from_text("p", &p.to_text()).unwrap();
        prop_assert_eq!(p.entries(), q.entries());
        prop_assert_eq!(p.punctured(), q.punctured());
    }

    #[test]
    fn alist_round_trip(edges in proptest::collection::btree_set((0usize..9, 0usize..13), 1..60)) {
        let h = SparseMatrix::from_entries(9, 13, edges.iter().copied()).unwrap();
        let back = SparseMatrix::from_alist(&h.to_alist()).unwrap();
        prop_assert_eq!(back.entries().collect::<Vec<_>>(), h.entries().collect::<Vec<_>>());
    }

    #[test]
    fn rank_is_invariant_under_row_operations(seed in any::<u64>()) {
        let mut rng = frame_rng(seed, 2);
        let mut m = BitMatrix::zeros(6, 10);
        for r in 0..6 {
            for c in 0..10 {
                m.set(r, c, rand::Rng::gen_bool(&mut rng, 0.4));
            }
        }
        let mut m2 = m.clone();
        for c in 0..10 {
            let v = m2.get(1, c) ^ m2.get(0, c);
            m2.set(1, c, v);
        }
        prop_assert_eq!(m.rank(), m2.rank());
        prop_assert!(m.rank() <= 6);
    }
}
