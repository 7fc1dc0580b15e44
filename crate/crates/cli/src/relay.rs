//! End-to-end relay sweeps along the fixed-offset SNR slice.

use bilayer::channel::{SlicePoint, SnrSlice};
use bilayer::protograph::CodeFamilyRegistry;
use bilayer::relay::{
    link_snrs, BoundEstimate, RelayCodes, Scheme, Side, SimOptions, TrialLedger,
};

use crate::p2p::convention_name;
use crate::{db, prob, validate_grid, CliError, Table};

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub scheme: Scheme,
    pub info_len: i64,
    /// Source-destination values of the sweep.
    pub grid: Vec<f64>,
    pub slice: SnrSlice,
    pub frames: u64,
    /// Seeds the lifts and the noise.
    pub seed: u64,
    pub options: SimOptions,
}

impl RelayConfig {
    pub fn new(scheme: Scheme, info_len: i64, grid: Vec<f64>, frames: u64, seed: u64) -> RelayConfig {
        RelayConfig {
            scheme,
            info_len,
            grid,
            slice: SnrSlice::new(1.4, 1.6),
            frames,
            seed,
            options: SimOptions::default(),
        }
    }
}

/// Ledger and link SNRs of one sweep point.
#[derive(Debug, Clone)]
pub struct RelayPoint {
    pub point: SlicePoint,
    /// Received SNR of the sd, sr and rd links.
    pub snr_db: [f64; 3],
    pub ebn0_db: [f64; 3],
    pub ledger: TrialLedger,
    pub bound: Option<BoundEstimate>,
}

impl RelayPoint {
    pub fn measured(&self) -> f64 {
        self.ledger.end_to_end.rate().unwrap_or(f64::NAN)
    }

    pub fn measured_ci(&self) -> (f64, f64) {
        self.ledger.end_to_end.wilson().unwrap_or((0.0, 1.0))
    }
}

pub fn build_codes(cfg: &RelayConfig, reg: &CodeFamilyRegistry) -> Result<RelayCodes, CliError> {
    let schedule = cfg.scheme.reference_schedule(cfg.info_len, reg)?;
    Ok(RelayCodes::build(cfg.scheme, reg, &schedule, cfg.seed)?)
}

/// Runs every grid point with already built codes, in grid order.
pub fn simulate_points(codes: &RelayCodes, cfg: &RelayConfig) -> Result<Vec<RelayPoint>, CliError> {
    validate_grid(&cfg.grid)?;
    cfg.grid
        .iter()
        .map(|&sd| {
            let point = cfg.slice.point(sd);
            let (snr_db, ebn0_db) = link_snrs(codes, point, cfg.options.convention)?;
            let ledger = codes.simulate(point, 0..cfg.frames, cfg.seed, &cfg.options);
            let bound = ledger.bound().ok();
            Ok(RelayPoint {
                point,
                snr_db,
                ebn0_db,
                ledger,
                bound,
            })
        })
        .collect()
}

fn components(l: &TrialLedger) -> String {
    l.components
        .iter()
        .map(|c| format!("{}={}/{}", c.name, c.count.errors, c.count.trials))
        .chain(std::iter::once(format!(
            "final={}/{}",
            l.final_decode.errors, l.final_decode.trials
        )))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn relay_table(codes: &RelayCodes, cfg: &RelayConfig, points: &[RelayPoint]) -> Table {
    let mut t = Table::new(&[
        "snr_sd_db", "p_er", "p_erd", "p_ed_cond", "bound", "measured_wer", "ci_lo", "ci_hi", "bound_lo", "bound_hi",
        "scheme", "codes", "info_len", "slot_uses", "frames", "seed", "alpha_db", "beta_db", "convention",
        "link_snr_db", "link_ebn0_db", "events",
    ]);
    t.note("command", "relay");
    t.note("slice", "sr = sd + alpha, rd = sd + beta");
    t.note(
        "columns",
        "link values are sd sr rd; p_er and p_erd sum the relay-side and destination-side events",
    );
    if cfg.options.genie_relay || cfg.options.genie_relay2 {
        t.note("genie", format!("relay={} relay2={}", cfg.options.genie_relay, cfg.options.genie_relay2));
    }
    let sch = codes.schedule();
    let na = || "nan".to_string();
    for p in points {
        let l = &p.ledger;
        let (lo, hi) = p.measured_ci();
        let triple = |v: &[f64; 3]| v.iter().map(|&x| db(x)).collect::<Vec<_>>().join(" ");
        t.push(vec![
            db(p.point.sd),
            l.side_rate(Side::Relay).map_or_else(na, prob),
            l.side_rate(Side::Destination).map_or_else(na, prob),
            l.final_decode.rate().map_or_else(na, prob),
            p.bound.map_or_else(na, |b| prob(b.value)),
            prob(p.measured()),
            prob(lo),
            prob(hi),
            p.bound.map_or_else(na, |b| prob(b.lo)),
            p.bound.map_or_else(na, |b| prob(b.hi)),
            cfg.scheme.tag().into(),
            codes.names(),
            cfg.info_len.to_string(),
            sch.slot_uses.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" "),
            cfg.frames.to_string(),
            cfg.seed.to_string(),
            db(cfg.slice.alpha_db),
            db(cfg.slice.beta_db),
            convention_name(cfg.options.convention).into(),
            triple(&p.snr_db),
            triple(&p.ebn0_db),
            components(l),
        ]);
    }
    t
}

pub fn run_relay_sweep(cfg: &RelayConfig) -> Result<(Table, Vec<RelayPoint>), CliError> {
    validate_grid(&cfg.grid)?;
    let reg = CodeFamilyRegistry::builtin();
    let codes = build_codes(cfg, &reg)?;
    let mut points = Vec::new();
    if cfg.frames > 0 {
        points = simulate_points(&codes, cfg)?;
    }
    let mut t = relay_table(&codes, cfg, &points);
    if cfg.frames == 0 {
        t.warnings.push("frame budget is zero; nothing simulated".into());
    }
    Ok((t, points))
}
