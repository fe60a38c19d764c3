//! One Monte Carlo trial: scene draw, CGS (training and refinement), FGS
//! (H-R&VE), conversion and localization.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::codebook::{beam_center, build_codebook, cell_index, compensate_incident, covers, HierarchicalCodebook};
use crate::dd::{auxiliary_matrix, h_rve, localize, HrveResult, RvEstimate};
use crate::detection::{far_threshold, rss_threshold, Statistic};
use crate::error::{Error, Result};
use crate::geometry::{ArrayConfig, PathModel, ScenarioGeometry, TargetState, Vec3, C64};
use crate::multi::{multi_fgs_schedule, multi_hbt, MultiOptions, MultiTrace};
use crate::ofdm::{EchoGrid, EchoSynth, Reflector, WaveformConfig};
use crate::rng::{stream_rng, Stream};
use crate::training::{beam_refinement, hbt_3d, training_budget, EchoSounder, TrainingTrace};

/// Ground truth of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub u: f64,
    pub v: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub location: Vec3,
}

/// Drawn targets and the echo synthesizer for one trial.
#[derive(Debug, Clone)]
pub struct Scene {
    pub truths: Vec<Truth>,
    pub synth: EchoSynth,
}

/// Outcome of a single-target trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub present: bool,
    pub detected: bool,
    /// Detected and the true direction lies in the final training cell.
    pub success: bool,
    /// Same criterion for RSS-driven training on the same echoes.
    pub rss_success: Option<bool>,
    pub u_hat: Option<f64>,
    pub v_hat: Option<f64>,
    pub range_m: Option<f64>,
    pub velocity_mps: Option<f64>,
    pub location: Option<Vec3>,
    pub eps_dr: Option<f64>,
    /// Direction error of the cell center before refinement.
    pub eps_dr_no_br: Option<f64>,
    pub eps_d: Option<f64>,
    pub eps_v: Option<f64>,
    pub eps_l: Option<f64>,
    /// Symbols used by training and refinement.
    pub cgs_symbols: usize,
    pub truth: Option<Truth>,
    pub failure: Option<String>,
}

impl TrialResult {
    fn empty(seed: u64, present: bool) -> Self {
        Self {
            seed,
            present,
            detected: false,
            success: false,
            rss_success: None,
            u_hat: None,
            v_hat: None,
            range_m: None,
            velocity_mps: None,
            location: None,
            eps_dr: None,
            eps_dr_no_br: None,
            eps_d: None,
            eps_v: None,
            eps_l: None,
            cgs_symbols: 0,
            truth: None,
            failure: None,
        }
    }
}

/// Everything a single-target trial produced, for dumps.
#[derive(Debug, Clone)]
pub struct TrialDetail {
    pub result: TrialResult,
    pub trace: TrainingTrace,
    /// CGS echo rows `(symbol, row)`.
    pub cgs_rows: Vec<(usize, Vec<C64>)>,
    pub fgs: Option<(EchoGrid, HrveResult)>,
}

/// Per-target outcome of a multi-target trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    /// Final-layer cell `(i, j)`.
    pub cell: (usize, usize),
    /// Index of the nearest true target.
    pub truth_index: usize,
    /// The matched target lies in `cell`.
    pub cell_correct: bool,
    pub u_hat: f64,
    pub v_hat: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub location: Option<Vec3>,
    pub tau_hat: f64,
    pub tau_step: f64,
    pub doppler_step: f64,
    pub eps_dr: f64,
    pub eps_d: f64,
    pub eps_v: f64,
    pub eps_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTrialResult {
    pub seed: u64,
    pub shortfall: bool,
    pub results: Vec<TargetResult>,
    pub truths: Vec<Truth>,
    pub cgs_symbols: usize,
    pub failure: Option<String>,
}

/// A validated configuration with the derived objects every trial shares.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ScenarioConfig,
    pub waveform: WaveformConfig,
    pub array: ArrayConfig,
    pub path: PathModel,
    pub codebook: HierarchicalCodebook,
    pub n_q: usize,
    pub dsp_threshold: f64,
    pub rss_threshold: f64,
}

impl Experiment {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let waveform = config.waveform_config()?;
        let n_q = config.n_q();
        let far = config.detector.far_target;
        let budget = training_budget(config.array.m);
        if budget > waveform.t_cg {
            log::warn!(
                "training needs up to {budget} symbols but T_CG = {}; FGS starts after training ends",
                waveform.t_cg
            );
        }
        Ok(Self {
            array: config.array_config(),
            path: config.path_model(),
            codebook: build_codebook(config.array.m)?,
            dsp_threshold: far_threshold(far, waveform.noise_power, n_q)?,
            rss_threshold: rss_threshold(far, waveform.noise_power, waveform.n_sc)?,
            waveform,
            n_q,
            config,
        })
    }

    fn threshold(&self, statistic: Statistic) -> f64 {
        match statistic {
            Statistic::Dsp => self.dsp_threshold,
            Statistic::Rss => self.rss_threshold,
        }
    }

    /// Draw target directions, ranges, velocities and RCS phases for `seed`.
    pub fn scene(&self, seed: u64) -> Result<Scene> {
        let t = &self.config.target;
        let g = &self.config.geometry;
        let lambda = self.waveform.wavelength();
        let big_k = self.codebook.depth();
        let snap = |x: f64| if t.snap_to_grid { beam_center(big_k, cell_index(big_k, x)) } else { x };
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, span: [f64; 2]| span[0] + (span[1] - span[0]) * rng.random::<f64>();

        let mut truths: Vec<Truth> = Vec::with_capacity(t.count);
        let mut reflectors = Vec::with_capacity(t.count);
        for a in 0..t.count {
            let mut rng = stream_rng(seed, Stream::Target, a as u64);
            let (u, v) = match t.directions.get(a) {
                Some(&[u, v]) => (snap(u), snap(v)),
                None => {
                    // Targets share no final-layer cell.
                    let mut attempt = 0;
                    loop {
                        let (u, v) = (snap(draw(&mut rng, t.u_span)), snap(draw(&mut rng, t.v_span)));
                        let taken = truths.iter().any(|o| {
                            cell_index(big_k, o.u) == cell_index(big_k, u) && cell_index(big_k, o.v) == cell_index(big_k, v)
                        });
                        if !taken {
                            break (u, v);
                        }
                        attempt += 1;
                        if attempt > 1000 {
                            return Err(Error::Config("cannot place targets in distinct cells".into()));
                        }
                    }
                }
            };
            let range_m = match (t.ranges_m.get(a), t.range_span_m) {
                (Some(&d), _) => d,
                (None, Some(span)) => draw(&mut rng, span),
                (None, None) => t.range_m,
            };
            let velocity_mps = match t.velocity_span_mps {
                Some(span) => draw(&mut rng, span),
                None => t.velocity_mps,
            };
            let geometry = ScenarioGeometry::from_direction(g.q_b, g.q_irs, u, v, range_m, &self.array, lambda)?;
            let mut rcs_rng = stream_rng(seed, Stream::Rcs, a as u64);
            let target = TargetState::draw(velocity_mps, t.rcs_variance, lambda, &mut rcs_rng);
            truths.push(Truth { u, v, range_m, velocity_mps, location: geometry.q_g });
            reflectors.push(Reflector { geometry, target });
        }
        let frame = reflectors[0].geometry;
        if !t.present {
            reflectors.clear();
        }
        let synth = EchoSynth::new(self.waveform, self.array, &self.path, &frame, reflectors, seed)?;
        Ok(Scene { truths, synth })
    }

    /// FGS with the target-frame beam `w` held for `len` symbols from `first`.
    pub fn fgs(&self, synth: &EchoSynth, w: &[C64], first: usize, len: usize) -> Result<(EchoGrid, HrveResult)> {
        let xi = compensate_incident(w, synth.incident());
        let grid = synth.grid(first, &vec![xi; len])?;
        let symbols = synth.symbol_block(first, len);
        let f: Array2<C64> = auxiliary_matrix(&grid.y, &symbols, synth.tau0(), self.waveform.delta_f)?;
        let est = h_rve(&f, self.config.hrve_params(), self.waveform.delta_f, self.waveform.t_o)?;
        Ok((grid, est))
    }

    /// Single-target trial keeping the trace and echoes.
    pub fn run_trial_detailed(&self, seed: u64, keep_rows: bool) -> Result<TrialDetail> {
        let scene = self.scene(seed)?;
        let synth = &scene.synth;
        let present = self.config.target.present;
        let truth = scene.truths[0];
        let statistic = self.config.detector.statistic;
        let big_k = self.codebook.depth();

        let mut sounder = EchoSounder::new(synth, self.n_q, 0)?.keep_rows(keep_rows);
        let mut trace = hbt_3d(&self.codebook, &mut sounder, statistic, self.threshold(statistic))?;
        let mut result = TrialResult::empty(seed, present);
        result.truth = Some(truth);
        result.detected = trace.detected;
        let (ci, cj) = trace.final_index;
        result.success = present && trace.detected && covers(big_k, ci, cj, truth.u, truth.v);

        if self.config.detector.compare_rss {
            let mut rss_sounder = EchoSounder::new(synth, self.n_q, 0)?;
            let rss = hbt_3d(&self.codebook, &mut rss_sounder, Statistic::Rss, self.rss_threshold)?;
            let (ri, rj) = rss.final_index;
            result.rss_success = Some(present && rss.detected && covers(big_k, ri, rj, truth.u, truth.v));
        }

        let mut fgs = None;
        if trace.detected {
            beam_refinement(&mut trace, &self.codebook, &mut sounder, self.config.detector.rule)?;
            result.cgs_symbols = sounder.next_symbol();
            let d = trace.direction();
            result.u_hat = Some(d.u_hat);
            result.v_hat = Some(d.v_hat);

            let first = self.waveform.t_cg.max(sounder.next_symbol());
            let (grid, est) = self.fgs(synth, &trace.refined_beam(), first, self.waveform.t_fg)?;
            let rv = RvEstimate::new(est.tau_hat, est.doppler_hat, self.waveform.f_c);
            result.range_m = Some(rv.range_hat);
            result.velocity_mps = Some(rv.velocity_hat);
            if present {
                result.eps_dr = Some(d.eps_dr(truth.u, truth.v));
                result.eps_dr_no_br = Some(trace.coarse_direction().eps_dr(truth.u, truth.v));
                result.eps_d = Some((rv.range_hat - truth.range_m).abs());
                result.eps_v = Some((rv.velocity_hat - truth.velocity_mps).abs());
            }
            match localize(d.u_hat, d.v_hat, rv.range_hat, self.config.geometry.q_irs) {
                Ok(q) => {
                    result.location = Some(q);
                    if present {
                        result.eps_l = Some(distance(q, truth.location));
                    }
                }
                Err(e) => result.failure = Some(e.to_string()),
            }
            fgs = Some((grid, est));
        } else {
            result.cgs_symbols = sounder.next_symbol();
        }
        let cgs_rows = sounder.rows().to_vec();
        Ok(TrialDetail { result, trace, cgs_rows, fgs })
    }

    /// Single-target trial; errors become a recorded failure.
    pub fn run_trial(&self, seed: u64) -> TrialResult {
        match self.run_trial_detailed(seed, false) {
            Ok(d) => d.result,
            Err(e) => {
                let mut r = TrialResult::empty(seed, self.config.target.present);
                r.failure = Some(e.to_string());
                r
            }
        }
    }

    /// Multi-target trial keeping the training trace.
    pub fn run_multi_trial_detailed(&self, seed: u64) -> Result<(MultiTrialResult, MultiTrace)> {
        let scene = self.scene(seed)?;
        let synth = &scene.synth;
        let count = self.config.target.count;
        let big_k = self.codebook.depth();
        let opts = MultiOptions {
            targets: count,
            threshold: self.dsp_threshold,
            eps_r2g: self.path.eps_r2g,
            branch_cap: self.config.detector.branch_cap,
            rule: self.config.detector.rule,
        };
        let mut sounder = EchoSounder::new(synth, self.n_q, 0)?;
        let trace = multi_hbt(&self.codebook, &mut sounder, &opts)?;
        let cgs_symbols = sounder.next_symbol();
        let first = self.waveform.t_cg.max(cgs_symbols);

        let mut results = Vec::with_capacity(trace.areas.len());
        let mut failure = None;
        if !trace.areas.is_empty() {
            let schedule = multi_fgs_schedule(self.waveform.t_fg, trace.areas.len())?;
            for (area, (offset, len)) in trace.areas.iter().zip(schedule) {
                let d = area.direction(self.codebook.m);
                let w = crate::geometry::steering_upa(self.codebook.m, d.u_hat, d.v_hat);
                let (_, est) = self.fgs(synth, &w, first + offset, len)?;
                let rv = RvEstimate::new(est.tau_hat, est.doppler_hat, self.waveform.f_c);
                let (truth_index, truth) = scene
                    .truths
                    .iter()
                    .enumerate()
                    .min_by(|a, b| d.eps_dr(a.1.u, a.1.v).total_cmp(&d.eps_dr(b.1.u, b.1.v)))
                    .expect("at least one target");
                let location = match localize(d.u_hat, d.v_hat, rv.range_hat, self.config.geometry.q_irs) {
                    Ok(q) => Some(q),
                    Err(e) => {
                        failure = Some(e.to_string());
                        None
                    }
                };
                results.push(TargetResult {
                    cell: area.index,
                    truth_index,
                    cell_correct: covers(big_k, area.index.0, area.index.1, truth.u, truth.v),
                    u_hat: d.u_hat,
                    v_hat: d.v_hat,
                    range_m: rv.range_hat,
                    velocity_mps: rv.velocity_hat,
                    location,
                    tau_hat: est.tau_hat,
                    tau_step: est.tau_step,
                    doppler_step: est.doppler_step,
                    eps_dr: d.eps_dr(truth.u, truth.v),
                    eps_d: (rv.range_hat - truth.range_m).abs(),
                    eps_v: (rv.velocity_hat - truth.velocity_mps).abs(),
                    eps_l: location.map(|q| distance(q, truth.location)),
                });
            }
        }
        let result = MultiTrialResult {
            seed,
            shortfall: trace.shortfall,
            results,
            truths: scene.truths,
            cgs_symbols,
            failure,
        };
        Ok((result, trace))
    }

    pub fn run_multi_trial(&self, seed: u64) -> MultiTrialResult {
        match self.run_multi_trial_detailed(seed) {
            Ok((r, _)) => r,
            Err(e) => MultiTrialResult {
                seed,
                shortfall: true,
                results: Vec::new(),
                truths: Vec::new(),
                cgs_symbols: 0,
                failure: Some(e.to_string()),
            },
        }
    }
}

fn distance(a: Vec3, b: Vec3) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SPEED_OF_LIGHT;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.array.m = 16;
        c.array.n_b = 16;
        c.waveform.n_sc = 64;
        c.waveform.t_fg = 16;
        c.grid = super::super::config::GridSection { n_r: 32, t_v: 8, iters: 2 };
        c
    }

    #[test]
    fn deterministic_per_seed() {
        let mut c = small();
        c.waveform.snr_db = Some(5.0);
        let exp = Experiment::new(c).unwrap();
        let a = serde_json::to_string(&exp.run_trial(9)).unwrap();
        let b = serde_json::to_string(&exp.run_trial(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, serde_json::to_string(&exp.run_trial(10)).unwrap());
    }

    #[test]
    fn noiseless_on_grid_trial() {
        let mut c = small();
        c.waveform.noiseless = true;
        c.target.snap_to_grid = true;
        let exp = Experiment::new(c).unwrap();
        for seed in 0..10 {
            let d = exp.run_trial_detailed(seed, true).unwrap();
            let r = &d.result;
            assert!(r.detected && r.success, "seed {seed}: {r:?}");
            assert!(r.eps_dr.unwrap() < 1e-9, "{r:?}");
            let (_, est) = d.fgs.as_ref().unwrap();
            assert!(r.eps_d.unwrap() <= SPEED_OF_LIGHT / 4.0 * est.tau_step * (1.0 + 1e-9));
            assert!(r.eps_l.is_some());
            assert_eq!(d.cgs_rows.len(), r.cgs_symbols);
        }
    }

    #[test]
    fn absent_target_false_alarms() {
        let mut c = small();
        c.array.m = 64;
        c.waveform.n_sc = 32;
        c.waveform.snr_db = Some(0.0);
        c.target.present = false;
        let exp = Experiment::new(c).unwrap();
        let trials = 1000;
        let hits = (0..trials).filter(|&s| exp.run_trial(s).detected).count();
        let rate = hits as f64 / trials as f64;
        // The final decision is the maximum over four independent probes.
        let p = 0.01;
        let want = 1.0 - (1.0f64 - p).powi(4);
        let sigma = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((rate - want).abs() <= 3.0 * sigma, "{rate} vs {want}");
        assert!(rate <= p * 6.0, "{rate}");
    }

    #[test]
    fn scene_targets_in_distinct_cells() {
        let mut c = small();
        c.target.count = 3;
        c.target.ranges_m = vec![5.0, 10.0, 15.0];
        let exp = Experiment::new(c).unwrap();
        for seed in 0..20 {
            let s = exp.scene(seed).unwrap();
            let cells: std::collections::HashSet<_> =
                s.truths.iter().map(|t| (cell_index(4, t.u), cell_index(4, t.v))).collect();
            assert_eq!(cells.len(), 3);
        }
    }

    #[test]
    fn multi_trial_two_targets() {
        let mut c = small();
        c.waveform.noiseless = true;
        c.waveform.n_sc = 500;
        c.target.count = 2;
        c.target.ranges_m = vec![5.0, 10.0];
        c.target.snap_to_grid = true;
        let exp = Experiment::new(c).unwrap();
        let r = exp.run_multi_trial(3);
        assert!(r.failure.is_none() && !r.shortfall, "{r:?}");
        assert_eq!(r.results.len(), 2);
        assert!(r.results.iter().all(|t| t.cell_correct));
        assert_ne!(r.results[0].truth_index, r.results[1].truth_index);
    }
}
