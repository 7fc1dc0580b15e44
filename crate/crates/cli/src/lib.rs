//! Batch experiment runners for bilayer protograph codes.
//!
//! Every runner returns a [`Table`]: a CSV body plus `#` provenance lines.
//! Bodies depend only on the configuration, so reruns are byte-identical.

pub mod args;
pub mod p2p;
pub mod relay;
pub mod tables;
pub mod table;

use std::path::Path;

use bilayer::codec::CodecError;
use bilayer::lifting::LiftError;
use bilayer::protograph::{Block, CodeFamilyRegistry, ProtoError, ProtoMatrix};
use bilayer::relay::RelayError;
use bilayer::search::SearchError;
use thiserror::Error;

pub use p2p::{run_p2p_sweep, P2pConfig, P2pPoint};
pub use relay::{run_relay_sweep, RelayConfig, RelayPoint};
pub use table::Table;
pub use tables::{run_lift, run_report, run_search, run_threshold_table, LiftConfig, SearchConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for bad configuration, 3 for infeasible experiments, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Proto(_) | CliError::Search(_) => 2,
            CliError::Lift(LiftError::InfoLength { .. }) => 2,
            CliError::Relay(
                RelayError::Infeasible(_)
                | RelayError::NoCode(_)
                | RelayError::NonInteger { .. }
                | RelayError::RateOrder
                | RelayError::SlotFractions,
            ) => 3,
            CliError::Relay(RelayError::Lift(LiftError::InfoLength { .. })) => 3,
            _ => 1,
        }
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses a sweep grid: `a,b,c` or `start:step:stop` (stop included).
/// The result must be non-empty and strictly increasing.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| config(format!("bad number {t:?} in grid {s:?}")))
    };
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(config(format!("grid {s:?} must be start:step:stop")));
        }
        let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step <= 0.0 {
            return Err(config("grid step must be positive"));
        }
        let n = ((stop - start) / step + 1e-9).floor();
        if n < 0.0 {
            return Err(config(format!("grid {s:?} is empty")));
        }
        (0..=n as usize).map(|i| start + i as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    validate_grid(&grid)?;
    Ok(grid)
}

pub fn validate_grid(grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(config("sweep grid is empty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config("sweep grid must be strictly increasing"));
    }
    Ok(())
}

/// A registry name, or a path to a proto-matrix text file.
pub fn resolve_code(reg: &CodeFamilyRegistry, arg: &str) -> Result<ProtoMatrix, CliError> {
    if let Ok(p) = reg.get(arg) {
        return Ok(p.clone());
    }
    let path = Path::new(arg);
    if path.is_file() {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
        return Ok(ProtoMatrix::from_text(name, &std::fs::read_to_string(path)?)?);
    }
    Err(ProtoError::UnknownCode(arg.to_string()).into())
}

/// Parses an extension block: rows separated by `;`, entries by spaces or
/// commas.
pub fn parse_block(s: &str) -> Result<Block, CliError> {
    let rows = s
        .split(';')
        .map(|row| {
            row.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<u8>().map_err(|_| config(format!("bad entry {t:?} in {s:?}"))))
                .collect::<Result<Vec<u8>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Block::from_rows(&rows)?)
}

pub fn format_block(b: &Block) -> String {
    (0..b.rows())
        .map(|r| b.row(r).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(";")
}

/// Fixed-point dB value.
pub fn db(x: f64) -> String {
    format!("{x:.4}")
}

/// Probability in scientific notation.
pub fn prob(x: f64) -> String {
    format!("{x:.4e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1.0").unwrap(), vec![1.0]);
        assert_eq!(parse_grid("0,0.5,2").unwrap(), vec![0.0, 0.5, 2.0]);
        let g = parse_grid("0:0.1:0.3").unwrap();
        assert_eq!(g.len(), 4);
        assert!((g[3] - 0.3).abs() < 1e-12);
        assert_eq!(parse_grid("-1:0.5:-1").unwrap(), vec![-1.0]);
        for bad in ["", "1,1", "2,1", "0:0:1", "1:0.5:0", "a", "0:1", "nan"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn blocks_round_trip() {
        let b = parse_block("1 0 2;0,1,1").unwrap();
        assert_eq!((b.rows(), b.cols()), (2, 3));
        assert_eq!(b.get(0, 2), 2);
        assert_eq!(format_block(&b), "1 0 2;0 1 1");
        assert!(parse_block("1 0;1").is_err());
        assert!(parse_block("x").is_err());
    }

    #[test]
    fn codes_resolve_by_name_or_file() {
        let reg = CodeFamilyRegistry::builtin();
        assert_eq!(resolve_code(&reg, "bl-1/2").unwrap().name(), "BL-1/2");
        assert!(matches!(resolve_code(&reg, "BL-5/9"), Err(CliError::Proto(_))));
        let dir = std::env::temp_dir().join(format!("bilayer-resolve-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mine.txt");
        std::fs::write(&path, reg.base().to_text()).unwrap();
        let p = resolve_code(&reg, path.to_str().unwrap()).unwrap();
        assert_eq!(p.name(), "mine");
        assert_eq!(p.entries(), reg.base().entries());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(config("x").exit_code(), 2);
        assert_eq!(CliError::Relay(RelayError::Infeasible("1".into())).exit_code(), 3);
        assert_eq!(CliError::Io(std::io::Error::other("x")).exit_code(), 1);
    }
}
