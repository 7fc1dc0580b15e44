use bilayer::channel::SnrSlice;
use bilayer::codec::DecoderConfig;
use bilayer::pexit::threshold;
use bilayer::protograph::CodeFamilyRegistry;
use bilayer::relay::{RelayCodes, Scheme, SimOptions, SnrConvention, TrialLedger};

fn codes(scheme: Scheme, info: i64, seed: u64) -> RelayCodes {
    let reg = CodeFamilyRegistry::builtin();
    let s = scheme.reference_schedule(info, &reg).unwrap();
    RelayCodes::build(scheme, &reg, &s, seed).unwrap()
}

/// Mode comparisons do not need the full iteration budget.
fn quick() -> SimOptions {
    SimOptions {
        decoder: DecoderConfig {
            max_iters: 60,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn overlap(a: &TrialLedger, b: &TrialLedger) -> bool {
    let (alo, ahi) = a.end_to_end.wilson().unwrap();
    let (blo, bhi) = b.end_to_end.wilson().unwrap();
    alo <= bhi && blo <= ahi
}

#[test]
fn genie_relay_matches_a_reliable_relay() {
    let c = codes(Scheme::Expurgated, 1080, 21);
    // relay link far above its threshold, destination links near theirs
    let point = SnrSlice::new(8.0, 1.0).point(2.0);
    let normal = c.simulate(point, 0..200, 5, &quick());
    let genie = c.simulate(point, 0..200, 5, &SimOptions { genie_relay: true, ..quick() });
    assert_eq!(normal.component("r").unwrap().errors, 0);
    assert_eq!(genie.component("r").unwrap().errors, 0);
    assert!(normal.end_to_end.errors > 0, "point should not be error-free");
    assert_eq!(normal.final_decode, genie.final_decode);
    assert_eq!(normal.end_to_end, genie.end_to_end);
    assert!(overlap(&normal, &genie));
}

#[test]
fn genie_relay_removes_relay_errors_only() {
    let c = codes(Scheme::Lengthened, 1080, 22);
    let point = SnrSlice::new(0.0, 4.0).point(2.0);
    let normal = c.simulate(point, 0..120, 6, &quick());
    let genie = c.simulate(point, 0..120, 6, &SimOptions { genie_relay: true, ..quick() });
    assert!(normal.component("r").unwrap().errors > 0);
    assert_eq!(genie.component("r").unwrap().errors, 0);
    assert!(genie.end_to_end.errors <= normal.end_to_end.errors);
}

#[test]
fn disabled_second_relay_reduces_to_one_relay() {
    let c = codes(Scheme::TwoRelay, 1080, 23);
    let point = SnrSlice::new(1.4, 1.6).point(2.4);
    let normal = c.simulate(point, 0..120, 7, &quick());
    let opts = SimOptions {
        genie_relay2: true,
        ..quick()
    };
    let single = c.simulate(point, 0..120, 7, &opts);
    for name in ["r1r2", "r2", "r2d"] {
        assert_eq!(single.component(name).unwrap().errors, 0, "{name}");
    }
    // relay 1's decode and its broadcast to the destination are untouched
    assert_eq!(single.component("r1"), normal.component("r1"));
    assert_eq!(single.component("r1d"), normal.component("r1d"));
    assert!(single.end_to_end.errors <= normal.end_to_end.errors);
    // what is left is the single-relay union: relay, its link, final decode
    let b = single.bound().unwrap();
    let m = single.end_to_end.rate().unwrap();
    assert!(m <= b.hi);
}

#[test]
fn measured_wer_never_exceeds_the_bound() {
    for (scheme, sd) in [(Scheme::Expurgated, 2.4), (Scheme::Lengthened, 2.4), (Scheme::TwoRelay, 2.6)] {
        let c = codes(scheme, 1080, 24);
        let l = c.simulate(SnrSlice::new(1.4, 1.6).point(sd), 0..100, 8, &quick());
        let b = l.bound().unwrap();
        let (lo, _) = l.end_to_end.wilson().unwrap();
        assert!(lo <= b.hi, "{scheme:?}: measured {:?} bound {b:?}", l.end_to_end);
        assert!(b.value >= 0.0 && b.lo <= b.value && b.value <= b.hi);
    }
}

#[test]
fn desk_scale_be_one_db_above_threshold() {
    // per-link Eb/N0 reading, source-destination code BE-1/2
    let reg = CodeFamilyRegistry::builtin();
    let th = threshold(reg.get("BE-1/2").unwrap()).unwrap().threshold_db;
    let c = codes(Scheme::Expurgated, 4104, 1);
    let opts = SimOptions {
        convention: SnrConvention::EbN0,
        ..Default::default()
    };
    let l = c.simulate(SnrSlice::new(1.4, 1.6).point(th + 1.0), 0..300, 9, &opts);
    for comp in &l.components {
        assert!(comp.count.rate().unwrap() < 1e-2, "{}: {:?}", comp.name, comp.count);
    }
    assert!(l.final_decode.rate().unwrap() < 1e-2);
    assert!(l.bound().unwrap().value < 3e-2);
}
