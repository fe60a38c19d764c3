//! Monte Carlo aggregation, parameter sweeps, ROC points and CRLB tables.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::trial::{Experiment, TrialResult};
use crate::bounds::{crlb_direction, crlb_rv, fim_direction, snr_fg, DirectionModel};
use crate::codebook::{cell_index, compensate_incident};
use crate::error::{Error, Result};
use crate::geometry::{ScenarioGeometry, TargetState, C64};
use crate::rng::{derive, Stream};

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive(master, Stream::Trial, index as u64)
}

/// Run `trials` trials in parallel; the output is sorted by seed.
pub fn run_trials(exp: &Experiment, master: u64, trials: usize) -> Vec<TrialResult> {
    let mut out: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|k| exp.run_trial(trial_seed(master, k)))
        .collect();
    out.sort_by_key(|r| r.seed);
    out
}

/// Aggregate metrics over a set of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub detection_rate: f64,
    pub detection_rate_se: f64,
    pub success_rate: f64,
    pub success_rate_se: f64,
    pub rss_success_rate: Option<f64>,
    pub rss_success_rate_se: Option<f64>,
    pub eps_dr_rmse: Option<f64>,
    pub eps_dr_se: Option<f64>,
    pub eps_dr_no_br_rmse: Option<f64>,
    pub eps_d_rmse: Option<f64>,
    pub eps_d_se: Option<f64>,
    pub eps_v_rmse: Option<f64>,
    pub eps_v_se: Option<f64>,
    pub eps_l_rmse: Option<f64>,
    pub eps_l_se: Option<f64>,
    /// Trials that raised an error or produced an infeasible location.
    pub failures: usize,
}

fn rate(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// RMSE and its delta-method standard error.
fn rmse(errors: impl Iterator<Item = f64>) -> (Option<f64>, Option<f64>) {
    let sq: Vec<f64> = errors.map(|e| e * e).collect();
    if sq.is_empty() {
        return (None, None);
    }
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let r = mean.sqrt();
    if sq.len() < 2 || r == 0.0 {
        return (Some(r), Some(0.0));
    }
    let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(r), Some((var / n).sqrt() / (2.0 * r)))
}

/// Reduce trial results (in seed order) to a [`Summary`].
pub fn summarize(results: &[TrialResult]) -> Summary {
    let mut sorted: Vec<&TrialResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let n = sorted.len();
    let (detection_rate, detection_rate_se) = rate(sorted.iter().filter(|r| r.detected).count(), n);
    let (success_rate, success_rate_se) = rate(sorted.iter().filter(|r| r.success).count(), n);
    let rss: Vec<bool> = sorted.iter().filter_map(|r| r.rss_success).collect();
    let (rss_success_rate, rss_success_rate_se) = if rss.is_empty() {
        (None, None)
    } else {
        let (p, se) = rate(rss.iter().filter(|&&s| s).count(), rss.len());
        (Some(p), Some(se))
    };
    let (eps_dr_rmse, eps_dr_se) = rmse(sorted.iter().filter_map(|r| r.eps_dr));
    let (eps_dr_no_br_rmse, _) = rmse(sorted.iter().filter_map(|r| r.eps_dr_no_br));
    let (eps_d_rmse, eps_d_se) = rmse(sorted.iter().filter_map(|r| r.eps_d));
    let (eps_v_rmse, eps_v_se) = rmse(sorted.iter().filter_map(|r| r.eps_v));
    let (eps_l_rmse, eps_l_se) = rmse(sorted.iter().filter_map(|r| r.eps_l));
    Summary {
        trials: n,
        detection_rate,
        detection_rate_se,
        success_rate,
        success_rate_se,
        rss_success_rate,
        rss_success_rate_se,
        eps_dr_rmse,
        eps_dr_se,
        eps_dr_no_br_rmse,
        eps_d_rmse,
        eps_d_se,
        eps_v_rmse,
        eps_v_se,
        eps_l_rmse,
        eps_l_se,
        failures: sorted.iter().filter(|r| r.failure.is_some()).count(),
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub snr_db: f64,
    pub trials: usize,
    pub detection_rate: f64,
    pub detection_rate_se: f64,
    pub success_rate: f64,
    pub success_rate_se: f64,
    pub rss_success_rate: Option<f64>,
    pub rss_success_rate_se: Option<f64>,
    pub eps_dr_rmse: Option<f64>,
    pub eps_dr_se: Option<f64>,
    pub eps_dr_no_br_rmse: Option<f64>,
    pub eps_d_rmse: Option<f64>,
    pub eps_d_se: Option<f64>,
    pub eps_v_rmse: Option<f64>,
    pub eps_v_se: Option<f64>,
    pub eps_l_rmse: Option<f64>,
    pub eps_l_se: Option<f64>,
    pub failures: usize,
}

/// Column names of the sweep CSV, in order.
pub const SWEEP_COLUMNS: &[&str] = &[
    "axis",
    "value",
    "snr_db",
    "trials",
    "detection_rate",
    "detection_rate_se",
    "success_rate",
    "success_rate_se",
    "rss_success_rate",
    "rss_success_rate_se",
    "eps_dr_rmse",
    "eps_dr_se",
    "eps_dr_no_br_rmse",
    "eps_d_rmse",
    "eps_d_se",
    "eps_v_rmse",
    "eps_v_se",
    "eps_l_rmse",
    "eps_l_se",
    "failures",
];

impl SweepRow {
    fn new(axis: &str, value: f64, snr_db: f64, s: Summary) -> Self {
        Self {
            axis: axis.to_string(),
            value,
            snr_db,
            trials: s.trials,
            detection_rate: s.detection_rate,
            detection_rate_se: s.detection_rate_se,
            success_rate: s.success_rate,
            success_rate_se: s.success_rate_se,
            rss_success_rate: s.rss_success_rate,
            rss_success_rate_se: s.rss_success_rate_se,
            eps_dr_rmse: s.eps_dr_rmse,
            eps_dr_se: s.eps_dr_se,
            eps_dr_no_br_rmse: s.eps_dr_no_br_rmse,
            eps_d_rmse: s.eps_d_rmse,
            eps_d_se: s.eps_d_se,
            eps_v_rmse: s.eps_v_rmse,
            eps_v_se: s.eps_v_se,
            eps_l_rmse: s.eps_l_rmse,
            eps_l_se: s.eps_l_se,
            failures: s.failures,
        }
    }
}

/// Sweep one scalar parameter; every point reuses the same trial seeds.
pub fn sweep(config: &ScenarioConfig, axis: &str, values: &[f64], trials: usize, master: u64) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let cfg = config.with_axis(axis, value)?;
            let snr_db = cfg.reference_snr_db()?;
            let exp = Experiment::new(cfg)?;
            let results = run_trials(&exp, master, trials);
            Ok(SweepRow::new(axis, value, snr_db, summarize(&results)))
        })
        .collect()
}

/// One point of an empirical detector ROC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub far_target: f64,
    pub empirical_far: f64,
    pub empirical_detection_rate: f64,
    pub snr_db: f64,
}

/// Column names of the ROC CSV, in order.
pub const ROC_COLUMNS: &[&str] = &["far_target", "empirical_far", "empirical_detection_rate", "snr_db"];

/// For each false-alarm target, run target-present and target-absent trials
/// on the same seeds.
pub fn detect_roc(config: &ScenarioConfig, far_targets: &[f64], trials: usize, master: u64) -> Result<Vec<RocRow>> {
    far_targets
        .iter()
        .map(|&far| {
            let mut cfg = config.with_axis("far_target", far)?;
            cfg.target.count = 1;
            cfg.target.directions.truncate(1);
            cfg.target.ranges_m.truncate(1);
            cfg.target.present = true;
            let present = run_trials(&Experiment::new(cfg.clone())?, master, trials);
            cfg.target.present = false;
            let absent = run_trials(&Experiment::new(cfg.clone())?, master, trials);
            Ok(RocRow {
                far_target: far,
                empirical_far: rate(absent.iter().filter(|r| r.detected).count(), trials).0,
                empirical_detection_rate: rate(present.iter().filter(|r| r.detected).count(), trials).0,
                snr_db: cfg.reference_snr_db()?,
            })
        })
        .collect()
}

/// Bounds at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbRow {
    pub snr_db: f64,
    pub crlb_range_m2: f64,
    pub crlb_vel_mps2: f64,
    pub crlb_u: f64,
    pub crlb_v: f64,
}

/// Column names of the CRLB CSV, in order.
pub const CRLB_COLUMNS: &[&str] = &["snr_db", "crlb_range_m2", "crlb_vel_mps2", "crlb_u", "crlb_v"];

/// Range, velocity and direction CRLBs versus the reference SNR. The first
/// target (fixed direction, or the center of the spans) is used; the
/// direction FIM stacks the final-layer beam of its cell and the axis
/// neighbors, one symbol each.
pub fn crlb_sweep(config: &ScenarioConfig, snr_db: &[f64]) -> Result<Vec<CrlbRow>> {
    snr_db
        .iter()
        .map(|&snr| {
            let cfg = config.with_axis("snr_db", snr)?;
            let wf = cfg.waveform_config()?;
            let array = cfg.array_config();
            let path = cfg.path_model();
            let t = &cfg.target;
            let [u, v] = t
                .directions
                .first()
                .copied()
                .unwrap_or([(t.u_span[0] + t.u_span[1]) / 2.0, (t.v_span[0] + t.v_span[1]) / 2.0]);
            let range = t.ranges_m.first().copied().unwrap_or(t.range_m);
            let geometry = ScenarioGeometry::from_direction(
                cfg.geometry.q_b,
                cfg.geometry.q_irs,
                u,
                v,
                range,
                &array,
                cfg.wavelength(),
            )?;
            let codebook = crate::codebook::build_codebook(array.m)?;
            let big_k = codebook.depth();
            let (ci, cj) = (cell_index(big_k, u) as isize, cell_index(big_k, v) as isize);
            let m = array.m as isize;
            let beams: Vec<(usize, Vec<C64>)> = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .map(|&(di, dj)| (ci + di, cj + dj))
                .filter(|&(i, j)| i >= 1 && j >= 1 && i <= m && j <= m)
                .enumerate()
                .map(|(l, (i, j))| {
                    let w = codebook.codeword(big_k, i as usize, j as usize)?.phases;
                    Ok((l, compensate_incident(&w, geometry.incident())))
                })
                .collect::<Result<_>>()?;
            let target = TargetState::with_phase(t.velocity_mps, t.rcs_variance, 0.0, cfg.wavelength());
            let model = DirectionModel { waveform: wf, array, path, geometry, target, seed: cfg.run.seed };
            let crlb_dir = crlb_direction(&fim_direction(&model, &beams)?)?;
            let xi_opt = crate::codebook::optimal_beam(array.m, u, v, geometry.incident());
            let snr_lin = snr_fg(&wf, &array, &path, &geometry, t.rcs_variance, &xi_opt)?;
            let (crlb_range_m2, crlb_vel_mps2) = crlb_rv(snr_lin, wf.n_sc, wf.t_fg, wf.delta_f, wf.t_o, wf.f_c)?;
            Ok(CrlbRow { snr_db: snr, crlb_range_m2, crlb_vel_mps2, crlb_u: crlb_dir[(0, 0)], crlb_v: crlb_dir[(1, 1)] })
        })
        .collect()
}

/// Write rows as CSV with a header row.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], columns: &[&str], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(columns).map_err(csv_error)?;
    for row in rows {
        wtr.serialize(row).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Parse `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse value list {list:?}"));
    if list.contains(':') {
        let parts: Vec<f64> = list
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| start + k as f64 * step).collect());
    }
    list.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect()
}
