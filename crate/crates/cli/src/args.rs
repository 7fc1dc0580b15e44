//! Command-line definitions and dispatch.

use std::path::PathBuf;

use bilayer::channel::SnrSlice;
use bilayer::codec::DecoderConfig;
use bilayer::protograph::{CodeFamilyRegistry, ExtensionKind, ProtoMatrix};
use bilayer::relay::{Scheme, SimOptions, SnrConvention};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::{
    parse_block, parse_grid, resolve_code, run_lift, run_p2p_sweep, run_relay_sweep, run_report, run_search,
    run_threshold_table, CliError, LiftConfig, P2pConfig, RelayConfig, SearchConfig, Table,
};

#[derive(Debug, Parser)]
#[command(name = "bilayer", version, about = "Bilayer protograph LDPC codes for relay channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// PEXIT thresholds, capacity limits and gaps.
    Threshold {
        /// Registry names or proto-matrix files; all 15 registry codes if empty.
        codes: Vec<String>,
    },
    /// Exhaustive search for the best one-step extension.
    Search {
        #[arg(long)]
        parent: String,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Pin the extension, e.g. "1 0 0;0 1 1;1 1 0;0 1 1".
        #[arg(long)]
        pin: Option<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Pre-filter margin above the Shannon limit in dB.
        #[arg(long, default_value_t = bilayer::search::DEFAULT_PREFILTER_MARGIN_DB)]
        margin: f64,
        /// Score every candidate.
        #[arg(long)]
        no_prefilter: bool,
    },
    /// Lift a code and write its parity-check matrix.
    Lift {
        code: String,
        #[arg(long)]
        info_len: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point-to-point BER/WER sweep.
    P2p {
        code: String,
        #[arg(long)]
        info_len: usize,
        /// Grid `a,b,c` or `start:step:stop`.
        #[arg(long, allow_hyphen_values = true)]
        snr: String,
        #[arg(long, value_enum, default_value_t = ConventionArg::Ebn0)]
        snr_convention: ConventionArg,
        #[arg(long, default_value_t = 10_000)]
        frames: u64,
        #[arg(long, default_value_t = 100)]
        min_errors: u64,
        #[arg(long, default_value_t = 64)]
        batch: u64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// End-to-end relay sweep with the union bound.
    Relay {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Source-destination grid `a,b,c` or `start:step:stop`.
        #[arg(long, allow_hyphen_values = true)]
        snr_sd: String,
        #[arg(long, default_value_t = 1.4, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 1.6, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long)]
        frames: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4104)]
        info_len: i64,
        #[arg(long, value_enum, default_value_t = ConventionArg::Snr)]
        snr_convention: ConventionArg,
        /// The first relay always decodes correctly.
        #[arg(long)]
        genie_relay: bool,
        /// Two-relay: the second relay's checks reach the destination intact.
        #[arg(long)]
        genie_relay2: bool,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// Threshold table and reference relay schedules.
    Report {
        #[arg(long, default_value_t = 16380)]
        info_len: i64,
        /// Write thresholds.csv and schedules.csv here instead of stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct DecoderArgs {
    #[arg(long, default_value_t = bilayer::codec::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = bilayer::codec::DEFAULT_CLIP)]
    pub clip: f64,
}

impl DecoderArgs {
    fn config(&self) -> Result<DecoderConfig, CliError> {
        if self.max_iters == 0 || !(self.clip > 0.0) {
            return Err(CliError::Config("max-iters and clip must be positive".into()));
        }
        Ok(DecoderConfig {
            max_iters: self.max_iters,
            clip: self.clip,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Lengthened,
    Expurgated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Be,
    Bl,
    Two,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConventionArg {
    Snr,
    Ebn0,
}

impl From<ConventionArg> for SnrConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Snr => SnrConvention::Snr,
            ConventionArg::Ebn0 => SnrConvention::EbN0,
        }
    }
}

/// Output of one invocation: CSV text per destination.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub warnings: Vec<String>,
}

impl Output {
    fn table(mut self, t: &Table) -> Result<Output, CliError> {
        self.stdout.push_str(&t.to_csv()?);
        self.warnings.extend(t.warnings.iter().cloned());
        Ok(self)
    }
}

fn args_line(cli: &Command) -> String {
    format!("{cli:?}")
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    let reg = CodeFamilyRegistry::builtin();
    let invocation = args_line(&cli.command);
    let out = Output::default();
    let mut t = match cli.command {
        Command::Threshold { codes } => {
            let list: Vec<ProtoMatrix> = if codes.is_empty() {
                reg.all().cloned().collect()
            } else {
                codes.iter().map(|c| resolve_code(&reg, c)).collect::<Result<_, _>>()?
            };
            run_threshold_table(&list)
        }
        Command::Search {
            parent,
            kind,
            pin,
            top,
            margin,
            no_prefilter,
        } => {
            let kind = match kind {
                KindArg::Lengthened => ExtensionKind::Lengthened,
                KindArg::Expurgated => ExtensionKind::Expurgated,
            };
            run_search(&SearchConfig {
                parent: resolve_code(&reg, &parent)?,
                kind,
                pin: pin.as_deref().map(parse_block).transpose()?,
                top,
                prefilter_margin_db: (!no_prefilter).then_some(margin),
            })?
        }
        Command::Lift {
            code,
            info_len,
            seed,
            out: path,
        } => {
            run_lift(&LiftConfig {
                code: resolve_code(&reg, &code)?,
                info_len,
                seed,
                out: path,
            })?
            .0
        }
        Command::P2p {
            code,
            info_len,
            snr,
            snr_convention,
            frames,
            min_errors,
            batch,
            seed,
            decoder,
        } => {
            let cfg = P2pConfig {
                code: resolve_code(&reg, &code)?,
                info_len,
                grid: parse_grid(&snr)?,
                convention: snr_convention.into(),
                max_frames: frames,
                min_errors,
                batch,
                seed,
                decoder: decoder.config()?,
            };
            run_p2p_sweep(&cfg)?.0
        }
        Command::Relay {
            scheme,
            snr_sd,
            alpha,
            beta,
            frames,
            seed,
            info_len,
            snr_convention,
            genie_relay,
            genie_relay2,
            decoder,
        } => {
            let scheme = match scheme {
                SchemeArg::Be => Scheme::Expurgated,
                SchemeArg::Bl => Scheme::Lengthened,
                SchemeArg::Two => Scheme::TwoRelay,
            };
            if genie_relay2 && scheme != Scheme::TwoRelay {
                return Err(CliError::Config("--genie-relay2 needs --scheme two".into()));
            }
            let cfg = RelayConfig {
                scheme,
                info_len,
                grid: parse_grid(&snr_sd)?,
                slice: SnrSlice::new(alpha, beta),
                frames,
                seed,
                options: SimOptions {
                    decoder: decoder.config()?,
                    convention: snr_convention.into(),
                    genie_relay,
                    genie_relay2,
                },
            };
            run_relay_sweep(&cfg)?.0
        }
        Command::Report { info_len, out_dir } => {
            let (mut thresholds, mut schedules) = run_report(&reg, info_len)?;
            thresholds.provenance.insert(0, format!("args: {invocation}"));
            schedules.provenance.insert(0, format!("args: {invocation}"));
            return match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("thresholds.csv"), thresholds.to_csv()?)?;
                    std::fs::write(dir.join("schedules.csv"), schedules.to_csv()?)?;
                    let mut o = Output::default();
                    o.warnings.extend(thresholds.warnings);
                    Ok(o)
                }
                None => {
                    let mut o = out.table(&thresholds)?;
                    o.stdout.push('\n');
                    o.table(&schedules)
                }
            };
        }
    };
    t.provenance.insert(0, format!("args: {invocation}"));
    t.provenance.insert(0, format!("bilayer {}", env!("CARGO_PKG_VERSION")));
    out.table(&t)
}
