//! Deterministic tables: thresholds, searches, lifts and the summary report.

use std::path::PathBuf;

use bilayer::codec::Encoder;
use bilayer::lifting::{circulant_for_info, lift, LiftedCode, PEG_FACTOR};
use bilayer::pexit::{biawgn_capacity_db, rate_f64, threshold};
use bilayer::protograph::{format_rational, CodeFamilyRegistry, ExtensionKind, ProtoMatrix};
use bilayer::relay::Scheme;
use bilayer::search::{search_best, SearchSpec};
use num_rational::Rational64;
use rayon::prelude::*;

use crate::{db, format_block, CliError, Table};

/// PEXIT thresholds of `codes`, one row each, in the given order. A code
/// whose threshold cannot be computed gets `NaN` cells and a warning.
pub fn run_threshold_table(codes: &[ProtoMatrix]) -> Table {
    let mut t = Table::new(&["name", "rate", "threshold_db", "capacity_db", "gap_db"]);
    t.note("command", "threshold");
    let results: Vec<_> = codes.par_iter().map(threshold).collect();
    for (p, res) in codes.iter().zip(results) {
        let rate = p.design_rate().map(format_rational).unwrap_or_else(|_| "nan".into());
        match res {
            Ok(r) => t.push(vec![
                p.name().into(),
                rate,
                db(r.threshold_db),
                db(r.capacity_db),
                db(r.gap_db),
            ]),
            Err(e) => {
                let cap = p
                    .design_rate()
                    .ok()
                    .and_then(|r| biawgn_capacity_db(rate_f64(r)).ok())
                    .map_or("nan".into(), db);
                t.warnings.push(format!("{}: {e}", p.name()));
                t.push(vec![p.name().into(), rate, "nan".into(), cap, "nan".into()]);
            }
        }
    }
    t
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub parent: ProtoMatrix,
    pub kind: ExtensionKind,
    /// Restrict the search to exactly this extension.
    pub pin: Option<bilayer::protograph::Block>,
    pub top: usize,
    /// `None` scores every candidate.
    pub prefilter_margin_db: Option<f64>,
}

/// Best `top` extensions of `parent`, fastest threshold first.
pub fn run_search(cfg: &SearchConfig) -> Result<Table, CliError> {
    let mut spec = match &cfg.pin {
        Some(ext) => SearchSpec::pinned(&cfg.parent, cfg.kind, ext),
        None => match cfg.kind {
            ExtensionKind::Lengthened => SearchSpec::lengthened(&cfg.parent),
            ExtensionKind::Expurgated => SearchSpec::expurgated(&cfg.parent),
        },
    };
    spec.prefilter_margin_db = cfg.prefilter_margin_db;
    spec.validate()?;
    let out = search_best(&spec)?;
    let mut t = Table::new(&[
        "rank",
        "index",
        "rate",
        "threshold_db",
        "capacity_db",
        "gap_db",
        "extension",
    ]);
    t.note("command", "search");
    t.note("parent", cfg.parent.name());
    t.note("kind", cfg.kind);
    t.note("enumerated", out.enumerated);
    t.note("distinct", out.distinct);
    t.note("survivors", out.survivors);
    if let Some(c) = out.cutoff_db {
        t.note("prefilter_db", db(c));
    }
    let rate = format_rational(spec.child_rate()?);
    for (rank, s) in out.ranked.iter().take(cfg.top).enumerate() {
        t.push(vec![
            (rank + 1).to_string(),
            s.index.to_string(),
            rate.clone(),
            db(s.result.threshold_db),
            db(s.result.capacity_db),
            db(s.result.gap_db),
            format_block(&s.extension),
        ]);
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct LiftConfig {
    pub code: ProtoMatrix,
    pub info_len: usize,
    pub seed: u64,
    /// Writes the alist here and the sidecar next to it with `.meta`
    /// appended.
    pub out: Option<PathBuf>,
}

pub fn run_lift(cfg: &LiftConfig) -> Result<(Table, LiftedCode), CliError> {
    let q = circulant_for_info(&cfg.code, PEG_FACTOR, cfg.info_len)?;
    let code = lift(&cfg.code, q, cfg.seed)?;
    let enc = Encoder::for_code(&code);
    if let Some(path) = &cfg.out {
        std::fs::write(path, code.h.to_alist())?;
        let mut meta = path.clone().into_os_string();
        meta.push(".meta");
        std::fs::write(meta, code.meta())?;
    }
    let mut t = Table::new(&[
        "name",
        "info_len",
        "circulant",
        "n",
        "m",
        "transmitted",
        "dimension",
        "girth",
        "seed",
    ]);
    t.note("command", "lift");
    t.note("peg_factor", PEG_FACTOR);
    t.push(vec![
        cfg.code.name().into(),
        cfg.info_len.to_string(),
        q.to_string(),
        code.n().to_string(),
        code.m().to_string(),
        code.transmitted_len().to_string(),
        enc.dimension().to_string(),
        code.girth.map_or("none".into(), |g| g.to_string()),
        cfg.seed.to_string(),
    ]);
    Ok((t, code))
}

fn join_rationals(v: &[Rational64]) -> String {
    v.iter().map(|&r| format_rational(r)).collect::<Vec<_>>().join(" ")
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// The full threshold table and the reference relay schedules for
/// `info_len` source bits.
pub fn run_report(reg: &CodeFamilyRegistry, info_len: i64) -> Result<(Table, Table), CliError> {
    let codes: Vec<ProtoMatrix> = reg.all().cloned().collect();
    let mut thresholds = run_threshold_table(&codes);
    thresholds.provenance[0] = "command: report".into();
    let mut s = Table::new(&[
        "scheme",
        "info_len",
        "layer_rates",
        "slot_uses",
        "t",
        "parities",
        "helper_rates",
        "total_uses",
        "throughput",
    ]);
    s.note("command", "report");
    for scheme in [Scheme::Expurgated, Scheme::Lengthened, Scheme::TwoRelay] {
        let sch = scheme.reference_schedule(info_len, reg)?;
        let helpers: Vec<String> = sch
            .helper_rates
            .iter()
            .map(|h| h.map_or("-".into(), format_rational))
            .collect();
        s.push(vec![
            scheme.tag().into(),
            info_len.to_string(),
            join_rationals(&sch.layer_rates),
            join(&sch.slot_uses),
            join_rationals(&sch.t()),
            join(&sch.parities),
            helpers.join(" "),
            sch.total_uses().to_string(),
            format_rational(sch.throughput()),
        ]);
    }
    Ok((thresholds, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_selection_is_an_empty_table() {
        let t = run_threshold_table(&[]);
        assert!(t.rows.is_empty());
        assert_eq!(t.body().unwrap(), "name,rate,threshold_db,capacity_db,gap_db\n");
    }

    #[test]
    fn pinned_search_has_one_row() {
        let reg = CodeFamilyRegistry::builtin();
        let (_, ext) = reg.lengthened()[1].split_bilayer(ExtensionKind::Lengthened, 7).unwrap();
        let cfg = SearchConfig {
            parent: reg.base().clone(),
            kind: ExtensionKind::Lengthened,
            pin: Some(ext.clone()),
            top: 5,
            prefilter_margin_db: None,
        };
        let t = run_search(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0][2], "2/3");
        assert_eq!(t.rows[0][6], format_block(&ext));
    }

    #[test]
    fn report_schedules() {
        let reg = CodeFamilyRegistry::builtin();
        let (_, s) = run_report(&reg, 16380).unwrap();
        assert_eq!(s.rows[0][3], "21840 7280");
        assert_eq!(s.rows[0][8], "9/16");
        assert_eq!(s.rows[2][5], "3640 5460");
        assert_eq!(s.rows[2][8], "9/20");
    }
}
