use std::process::{Command, Output};

use bilayer::lifting::LiftedCode;
use bilayer::protograph::{CodeFamilyRegistry, ExtensionKind};
use bilayer_cli::format_block;

fn bilayer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilayer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn body(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn threshold_single_code() {
    let o = bilayer(&["threshold", "BL-1/2"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("# bilayer "));
    let rows = body(&s);
    assert_eq!(rows[0], "name,rate,threshold_db,capacity_db,gap_db");
    assert_eq!(rows.len(), 2);
    let cells: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(cells[..2], ["BL-1/2", "1/2"]);
    let th: f64 = cells[2].parse().unwrap();
    assert!((th - 0.439).abs() <= 0.05, "{th}");
}

#[test]
fn unknown_code_is_a_config_error() {
    let o = bilayer(&["threshold", "BL-5/9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("BL-5/9"));
}

#[test]
fn stochastic_commands_need_a_seed() {
    let o = bilayer(&["relay", "--scheme", "be", "--snr-sd", "3", "--frames", "2"]);
    assert!(!o.status.success());
    let o = bilayer(&["p2p", "BL-1/2", "--info-len", "192", "--snr", "1"]);
    assert!(!o.status.success());
    let o = bilayer(&["lift", "BL-1/2", "--info-len", "192"]);
    assert!(!o.status.success());
}

#[test]
fn bad_grids_are_rejected() {
    for grid in ["2,1", "1,1", "0:-1:3"] {
        let o = bilayer(&["relay", "--scheme", "be", "--snr-sd", grid, "--frames", "2", "--seed", "1"]);
        assert_eq!(o.status.code(), Some(2), "{grid}");
    }
}

#[test]
fn infeasible_relay_length_exits_3() {
    let o = bilayer(&["relay", "--scheme", "bl", "--snr-sd", "3", "--frames", "2", "--seed", "1", "--info-len", "1000"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn relay_rows_are_self_describing_and_reproducible() {
    let args = [
        "relay", "--scheme", "be", "--snr-sd", "2.5,3.5", "--frames", "8", "--seed", "11", "--info-len", "1080",
    ];
    let a = bilayer(&args);
    let b = bilayer(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    let rows = body(&s);
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("snr_sd_db,p_er,p_erd,p_ed_cond,bound,measured_wer,ci_lo,ci_hi"));
    let text = rows.join("\n");
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let head = rdr.headers().unwrap().clone();
    let col = |n: &str| head.iter().position(|h| h == n).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[col("scheme")], "be");
        assert_eq!(&rec[col("seed")], "11");
        assert_eq!(&rec[col("info_len")], "1080");
        assert_eq!(&rec[col("frames")], "8");
        assert!(rec[col("codes")].contains("BE-1/2"));
        assert_eq!(rec[col("link_ebn0_db")].split(' ').count(), 3);
    }
}

#[test]
fn single_point_sweep() {
    let o = bilayer(&["relay", "--scheme", "two", "--snr-sd", "5", "--frames", "2", "--seed", "4", "--info-len", "1080"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(body(&stdout(&o)).len(), 2);
}

#[test]
fn zero_frame_p2p_warns() {
    let o = bilayer(&["p2p", "BL-1/2", "--info-len", "192", "--snr", "1", "--frames", "0", "--seed", "1"]);
    assert!(o.status.success());
    assert_eq!(body(&stdout(&o)).len(), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn lift_writes_a_loadable_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bl34.alist");
    let o = bilayer(&["lift", "BL-3/4", "--info-len", "2160", "--seed", "9", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let alist = std::fs::read_to_string(&path).unwrap();
    let meta = std::fs::read_to_string(dir.path().join("bl34.alist.meta")).unwrap();
    let code = LiftedCode::from_parts(&alist, &meta).unwrap();
    assert_eq!(code.seed, 9);
    assert_eq!(code.design_info_len(), 2160);
    let s = stdout(&o);
    assert!(body(&s)[1].starts_with("BL-3/4,2160,"));
}

#[test]
fn report_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = bilayer(&["report", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let th = std::fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    assert_eq!(body(&th).len(), 16);
    let sch = std::fs::read_to_string(dir.path().join("schedules.csv")).unwrap();
    let rows = body(&sch);
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("be,16380,3/4 1/2,21840 7280,"));
}

#[test]
fn pinned_search_cli() {
    let reg = CodeFamilyRegistry::builtin();
    let (_, row) = reg.get("BE-2/3").unwrap().split_bilayer(ExtensionKind::Expurgated, 4).unwrap();
    let pin = format_block(&row);
    let o = bilayer(&["search", "--parent", "BE-3/4", "--kind", "expurgated", "--pin", &pin, "--no-prefilter"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let rows = body(&s);
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,0,2/3,"));
    assert!(rows[1].ends_with(&pin));
}
