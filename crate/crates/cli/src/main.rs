use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use irs_sense::codebook::{build_codebook, frame_gain};
use irs_sense::harness::{
    crlb_sweep, detect_roc, parse_values, sweep, write_csv, Experiment, ScenarioConfig,
    CRLB_COLUMNS, ROC_COLUMNS, SWEEP_COLUMNS,
};
use irs_sense::ofdm::write_echo_csv;
use irs_sense::Error;
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "irs-sense", version, about = "IRS-assisted NLOS target sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count; overrides `run.trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the hierarchical codebook, or a gain map of one layer.
    Codebook {
        #[arg(long, default_value_t = 64)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write a CSV gain scan `k,i,j,u,v,gain` instead of the binary dump.
        #[arg(long)]
        gain_map: bool,
        /// Layer scanned by `--gain-map`.
        #[arg(long, default_value_t = 1)]
        layer: usize,
        /// Scan points per axis for `--gain-map`.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Run one end-to-end trial and print the estimates as JSON.
    Sense {
        #[command(flatten)]
        common: Common,
        /// Number of targets; overrides `target.count`.
        #[arg(long)]
        targets: Option<usize>,
        /// Write the training trace as JSON.
        #[arg(long)]
        dump_trace: Option<PathBuf>,
        /// Write the CGS and FGS echoes as CSV `n,l,re,im`.
        #[arg(long)]
        dump_echo: Option<PathBuf>,
    },
    /// Monte Carlo sweep of one scalar parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter name, e.g. `n_sc`, `m`, `snr_db`, `t_fg`.
        #[arg(long)]
        axis: String,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long)]
        values: String,
    },
    /// Empirical false-alarm and detection rates per false-alarm target.
    DetectRoc {
        #[command(flatten)]
        common: Common,
        /// False-alarm targets, `start:stop:step` or a comma-separated list.
        #[arg(long, default_value = "0.001,0.01,0.05,0.1")]
        far: String,
        /// Subcarrier count override.
        #[arg(long)]
        n_sc: Option<usize>,
        /// Reference SNR override in dB.
        #[arg(long)]
        snr_db: Option<f64>,
    },
    /// Range, velocity and direction CRLBs versus SNR.
    Crlb {
        #[command(flatten)]
        common: Common,
        /// `snr=start:stop:step` (dB).
        #[arg(long, default_value = "snr=-10:40:5")]
        sweep: String,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Partial(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let config = matches!(
            e.downcast_ref::<Error>(),
            Some(Error::Config(_) | Error::Toml(_) | Error::UnknownAxis(_))
        );
        if config {
            Failure::Config(e)
        } else {
            Failure::Other(e)
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<std::string::FromUtf8Error> for Failure {
    fn from(e: std::string::FromUtf8Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.run.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// CSV tables carry a fixed header, so the resolved configuration goes to a
/// sidecar `<out>.config.toml`.
fn write_sidecar(out: Option<&Path>, cfg: &ScenarioConfig) -> anyhow::Result<()> {
    if let Some(p) = out {
        let mut name = p.as_os_str().to_owned();
        name.push(".config.toml");
        std::fs::write(PathBuf::from(name), cfg.to_toml_string()?)?;
    }
    Ok(())
}

fn emit_table<T: serde::Serialize>(
    common: &Common,
    cfg: &ScenarioConfig,
    rows: &[T],
    columns: &[&str],
    extra: serde_json::Value,
) -> anyhow::Result<()> {
    let mut w = output(common.out.as_deref())?;
    match common.format {
        Format::Csv => {
            write_csv(rows, columns, &mut w)?;
            write_sidecar(common.out.as_deref(), cfg)?;
        }
        Format::Json => {
            let mut doc = json!({ "config": cfg, "rows": rows });
            if let (Some(obj), serde_json::Value::Object(more)) = (doc.as_object_mut(), extra) {
                obj.extend(more);
            }
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_failures(failures: usize, trials: usize, cfg: &ScenarioConfig) -> Result<(), Failure> {
    if trials > 0 && failures as f64 / trials as f64 > cfg.run.max_failure_rate {
        return Err(Failure::Partial(format!(
            "{failures} of {trials} trials failed (limit {})",
            cfg.run.max_failure_rate
        )));
    }
    Ok(())
}

fn cmd_codebook(m: usize, out: &Path, gain_map: bool, layer: usize, grid: usize) -> Result<(), Failure> {
    let cb = build_codebook(m)?;
    let mut w = output(Some(out))?;
    if !gain_map {
        cb.write_binary(&mut w)?;
        w.flush()?;
        return Ok(());
    }
    if grid == 0 {
        return Err(Error::Config("gain map grid must have at least one point".into()).into());
    }
    writeln!(w, "k,i,j,u,v,gain")?;
    // Scan points are the centers of a grid x grid tiling of [-1, 1]².
    let axis: Vec<f64> = (1..=grid).map(|g| (2.0 * g as f64 - 1.0) / grid as f64 - 1.0).collect();
    for cw in cb.layer_codewords(layer)? {
        for &u in &axis {
            for &v in &axis {
                writeln!(w, "{},{},{},{},{},{:e}", cw.k, cw.i, cw.j, u, v, frame_gain(&cw.phases, u, v))
                    ?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_sense(
    common: &Common,
    targets: Option<usize>,
    dump_trace: Option<&Path>,
    dump_echo: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if let Some(a) = targets {
        cfg.target.count = a;
        cfg.validate()?;
    }
    let seed = cfg.run.seed;
    let exp = Experiment::new(cfg.clone())?;
    let mut w = output(common.out.as_deref())?;
    let failure;
    if cfg.target.count == 1 {
        let detail = exp.run_trial_detailed(seed, dump_echo.is_some())?;
        let r = &detail.result;
        failure = r.failure.clone();
        let doc = json!({
            "detected": r.detected,
            "u_hat": r.u_hat,
            "v_hat": r.v_hat,
            "range_m": r.range_m,
            "velocity_mps": r.velocity_mps,
            "location": r.location,
            "eps_dr": r.eps_dr,
            "eps_d": r.eps_d,
            "eps_v": r.eps_v,
            "eps_l": r.eps_l,
            "seed": seed,
            "truth": r.truth,
            "failure": r.failure,
            "config": cfg,
        });
        serde_json::to_writer_pretty(&mut w, &doc)?;
        if let Some(p) = dump_trace {
            serde_json::to_writer_pretty(output(Some(p))?, &detail.trace)?;
        }
        if let Some(p) = dump_echo {
            let mut e = output(Some(p))?;
            writeln!(e, "n,l,re,im")?;
            for (l, row) in &detail.cgs_rows {
                for (n, z) in row.iter().enumerate() {
                    writeln!(e, "{n},{l},{:e},{:e}", z.re, z.im)?;
                }
            }
            if let Some((grid, _)) = &detail.fgs {
                let mut buf = Vec::new();
                write_echo_csv(grid, &mut buf)?;
                // Skip the header of the FGS block.
                let text = String::from_utf8(buf)?;
                for line in text.lines().skip(1) {
                    writeln!(e, "{line}")?;
                }
            }
            e.flush()?;
        }
    } else {
        let (r, trace) = exp.run_multi_trial_detailed(seed)?;
        failure = r.failure.clone();
        let doc = json!({
            "config": cfg,
            "seed": seed,
            "shortfall": r.shortfall,
            "results": r.results,
            "truths": r.truths,
        });
        serde_json::to_writer_pretty(&mut w, &doc)?;
        if let Some(p) = dump_trace {
            serde_json::to_writer_pretty(output(Some(p))?, &trace)?;
        }
    }
    writeln!(w)?;
    w.flush()?;
    check_failures(usize::from(failure.is_some()), 1, &cfg)
}

fn cmd_sweep(common: &Common, axis: &str, values: &str) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let values = parse_values(values)?;
    let rows = sweep(&cfg, axis, &values, cfg.run.trials, cfg.run.seed)?;
    emit_table(common, &cfg, &rows, SWEEP_COLUMNS, json!({ "axis": axis }))?;
    let failures: usize = rows.iter().map(|r| r.failures).sum();
    check_failures(failures, rows.iter().map(|r| r.trials).sum(), &cfg)
}

fn cmd_detect_roc(common: &Common, far: &str, n_sc: Option<usize>, snr_db: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if let Some(n) = n_sc {
        cfg = cfg.with_axis("n_sc", n as f64)?;
    }
    if let Some(s) = snr_db {
        cfg = cfg.with_axis("snr_db", s)?;
    }
    let fars = parse_values(far)?;
    let rows = detect_roc(&cfg, &fars, cfg.run.trials, cfg.run.seed)?;
    emit_table(common, &cfg, &rows, ROC_COLUMNS, json!({}))?;
    Ok(())
}

fn cmd_crlb(common: &Common, sweep_arg: &str) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let values = sweep_arg
        .strip_prefix("snr=")
        .ok_or_else(|| Error::Config(format!("expected snr=start:stop:step, got {sweep_arg:?}")))?;
    let rows = crlb_sweep(&cfg, &parse_values(values)?)?;
    emit_table(common, &cfg, &rows, CRLB_COLUMNS, json!({}))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Codebook { m, out, gain_map, layer, grid } => cmd_codebook(*m, out, *gain_map, *layer, *grid),
        Command::Sense { common, targets, dump_trace, dump_echo } => {
            cmd_sense(common, *targets, dump_trace.as_deref(), dump_echo.as_deref())
        }
        Command::Sweep { common, axis, values } => cmd_sweep(common, axis, values),
        Command::DetectRoc { common, far, n_sc, snr_db } => cmd_detect_roc(common, far, *n_sc, *snr_db),
        Command::Crlb { common, sweep } => cmd_crlb(common, sweep),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("partial failure: {msg}");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
