//! Scenario configuration. Every key has a default taken from the reference
//! system parameters, so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::Statistic;
use crate::error::{Error, Result};
use crate::geometry::{free_space_loss_db, path_gain, ArrayConfig, PathModel, Vec3, SPEED_OF_LIGHT};
use crate::ofdm::WaveformConfig;
use crate::training::InterpolationRule;

/// `dBm -> W`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `W -> dBm`.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSection {
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Number of subcarriers `N`.
    pub n_sc: usize,
    /// Cyclic prefix in seconds.
    pub t_cp: f64,
    /// Symbol duration in seconds; derived as `1/Δf + T_cp` when absent.
    pub t_o: Option<f64>,
    pub t_cg: usize,
    pub t_fg: usize,
    /// Total transmit power, split evenly across subcarriers.
    pub total_power_dbm: f64,
    /// `σ0²` per subcarrier sample.
    pub noise_power_dbm: f64,
    /// When set, `σ0²` is chosen so that the reference SNR (see
    /// [`ScenarioConfig::reference_snr_db`]) equals this value.
    pub snr_db: Option<f64>,
    /// Noiseless echoes; overrides both noise keys.
    pub noiseless: bool,
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            f_c: 28.5e9,
            delta_f: 120e3,
            n_sc: 833,
            t_cp: 0.58e-6,
            t_o: None,
            t_cg: 24,
            t_fg: 42,
            total_power_dbm: 25.0,
            noise_power_dbm: -123.2,
            snr_db: None,
            noiseless: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    /// DFBS antennas `N_B`.
    pub n_b: usize,
    /// IRS side `m` (`M = m²` elements).
    pub m: usize,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self { n_b: 64, m: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub eps_b2r: f64,
    pub eps_r2g: f64,
    /// Path loss at the reference distance; free-space loss when absent.
    pub pl_d0_db: Option<f64>,
    pub d0: f64,
}

impl Default for PathSection {
    fn default() -> Self {
        Self { eps_b2r: 2.1, eps_r2g: 2.2, pl_d0_db: None, d0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub q_b: Vec3,
    pub q_irs: Vec3,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { q_b: [35.0, -20.0, 10.0], q_irs: [0.0, 0.0, 10.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub count: usize,
    pub present: bool,
    /// IRS-target distance `d_R2G` in meters.
    pub range_m: f64,
    /// Draw the range uniformly from this interval instead.
    pub range_span_m: Option<[f64; 2]>,
    /// Fixed per-target ranges; overrides both keys above.
    pub ranges_m: Vec<f64>,
    pub velocity_mps: f64,
    /// Draw the velocity uniformly from this interval instead.
    pub velocity_span_mps: Option<[f64; 2]>,
    /// `ζ_G²`.
    pub rcs_variance: f64,
    pub u_span: [f64; 2],
    pub v_span: [f64; 2],
    /// Fixed per-target directions `[u, v]`; overrides the spans.
    pub directions: Vec<[f64; 2]>,
    /// Move each direction to the center of its final-layer cell.
    pub snap_to_grid: bool,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            count: 1,
            present: true,
            range_m: 10.0,
            range_span_m: None,
            ranges_m: Vec::new(),
            velocity_mps: 20.0,
            velocity_span_mps: None,
            rcs_variance: 1.0,
            u_span: [-0.5, 0.5],
            v_span: [-0.5, 0.5],
            directions: Vec::new(),
            snap_to_grid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// `p̄_FAR`.
    pub far_target: f64,
    /// Delay-spectrum size `N_Q`; `oversample · N` when absent.
    pub n_q: Option<usize>,
    pub oversample: usize,
    pub statistic: Statistic,
    pub rule: InterpolationRule,
    /// Also run RSS-driven training on the same echoes.
    pub compare_rss: bool,
    /// Upper bound on multi-target branches per stage.
    pub branch_cap: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            far_target: 0.01,
            n_q: None,
            oversample: 1,
            statistic: Statistic::Dsp,
            rule: InterpolationRule::ThreePoint,
            compare_rss: false,
            branch_cap: crate::multi::DEFAULT_BRANCH_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_r: usize,
    pub t_v: usize,
    /// Refinement iterations `I`.
    pub iters: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_r: 100, t_v: 100, iters: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub trials: usize,
    pub seed: u64,
    /// Fraction of failed trials above which a run is reported as partial.
    pub max_failure_rate: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { trials: 100, seed: 1, max_failure_rate: 0.1 }
    }
}

/// Complete scenario description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub waveform: WaveformSection,
    pub array: ArraySection,
    pub path: PathSection,
    pub geometry: GeometrySection,
    pub target: TargetSection,
    pub detector: DetectorSection,
    pub grid: GridSection,
    pub run: RunSection,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.waveform.f_c
    }

    pub fn n_q(&self) -> usize {
        self.detector.n_q.unwrap_or(self.waveform.n_sc * self.detector.oversample)
    }

    pub fn array_config(&self) -> ArrayConfig {
        ArrayConfig::half_wavelength(self.array.n_b, self.array.m, self.wavelength())
    }

    pub fn path_model(&self) -> PathModel {
        let p = &self.path;
        PathModel {
            pl_d0_db: p.pl_d0_db.unwrap_or_else(|| free_space_loss_db(p.d0, self.waveform.f_c)),
            d0: p.d0,
            eps_b2r: p.eps_b2r,
            eps_r2g: p.eps_r2g,
        }
    }

    pub fn power_per_sc(&self) -> f64 {
        dbm_to_watts(self.waveform.total_power_dbm) / self.waveform.n_sc as f64
    }

    /// Received SNR per sample with a perfectly aligned IRS beam at the
    /// nominal range: `p̄ N_B² ζ² a⁴_R2G a⁴_B2R m⁸ / σ0²` without the noise.
    pub fn reference_signal_power(&self) -> Result<f64> {
        let path = self.path_model();
        let g = &self.geometry;
        let d_b2r = (0..3).map(|k| (g.q_b[k] - g.q_irs[k]).powi(2)).sum::<f64>().sqrt();
        let a_b2r = path_gain(d_b2r, path.eps_b2r, &path)?;
        let a_r2g = path_gain(self.target.range_m, path.eps_r2g, &path)?;
        Ok(self.power_per_sc()
            * (self.array.n_b as f64).powi(2)
            * self.target.rcs_variance
            * a_r2g.powi(4)
            * a_b2r.powi(4)
            * (self.array.m as f64).powi(8))
    }

    /// `σ0²` in W after applying `noiseless` and `snr_db`.
    pub fn noise_power(&self) -> Result<f64> {
        let w = &self.waveform;
        if w.noiseless {
            return Ok(0.0);
        }
        match w.snr_db {
            Some(snr) => Ok(self.reference_signal_power()? / 10f64.powf(snr / 10.0)),
            None => Ok(dbm_to_watts(w.noise_power_dbm)),
        }
    }

    /// Reference SNR in dB; infinite when noiseless.
    pub fn reference_snr_db(&self) -> Result<f64> {
        let noise = self.noise_power()?;
        if noise == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(10.0 * (self.reference_signal_power()? / noise).log10())
    }

    pub fn waveform_config(&self) -> Result<WaveformConfig> {
        let w = &self.waveform;
        let mut cfg = WaveformConfig::new(
            w.f_c,
            w.delta_f,
            w.n_sc,
            w.t_cp,
            w.t_cg,
            w.t_fg,
            self.noise_power()?,
            self.power_per_sc(),
        )?;
        if let Some(t_o) = w.t_o {
            cfg.t_o = t_o;
            cfg.validate()?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wf = self.waveform_config()?;
        if wf.t_fg < 1 {
            return Err(Error::Config("FGS needs at least one symbol".into()));
        }
        self.array_config().validate()?;
        self.path_model().validate()?;
        let g = &self.geometry;
        if g.q_b == g.q_irs {
            return Err(Error::Config("DFBS and IRS positions coincide".into()));
        }
        let t = &self.target;
        for &[u, v] in &t.directions {
            if !(u * u + v * v < 1.0) {
                return Err(Error::Config(format!("direction ({u}, {v}) is not a forward direction")));
            }
        }
        if t.count == 0 {
            return Err(Error::Config("target count must be at least 1".into()));
        }
        if t.count > wf.t_fg {
            return Err(Error::Config(format!("{} targets cannot share {} FGS symbols", t.count, wf.t_fg)));
        }
        if !t.directions.is_empty() && t.directions.len() != t.count {
            return Err(Error::Config(format!("{} directions given for {} targets", t.directions.len(), t.count)));
        }
        if !t.ranges_m.is_empty() && t.ranges_m.len() != t.count {
            return Err(Error::Config(format!("{} ranges given for {} targets", t.ranges_m.len(), t.count)));
        }
        let max_range = SPEED_OF_LIGHT * wf.tau_max() / 2.0;
        let mut ranges: Vec<f64> = t.ranges_m.clone();
        ranges.push(t.range_m);
        if let Some(s) = t.range_span_m {
            if !(s[0] <= s[1]) {
                return Err(Error::Config(format!("range span {s:?} is not an interval")));
            }
            ranges.extend(s);
        }
        for d in ranges {
            if !(d > 0.0 && d < max_range) {
                return Err(Error::Config(format!(
                    "target range {d} m outside the unambiguous interval (0, {max_range}) m"
                )));
            }
        }
        let v_max = wf.doppler_max() * self.wavelength() / 2.0;
        let mut velocities = vec![t.velocity_mps];
        if let Some(s) = t.velocity_span_mps {
            if !(s[0] <= s[1]) {
                return Err(Error::Config(format!("velocity span {s:?} is not an interval")));
            }
            velocities.extend(s);
        }
        for v in velocities {
            if !(v.abs() < v_max) {
                return Err(Error::Config(format!("velocity {v} m/s outside the unambiguous interval ±{v_max} m/s")));
            }
        }
        for span in [t.u_span, t.v_span] {
            if !(span[0] <= span[1] && span[0] >= -1.0 && span[1] <= 1.0) {
                return Err(Error::Config(format!("direction span {span:?} must lie in [-1, 1]")));
            }
        }
        if !(t.rcs_variance > 0.0) {
            return Err(Error::Config(format!("RCS variance {} must be positive", t.rcs_variance)));
        }
        let d = &self.detector;
        if !(d.far_target > 0.0 && d.far_target < 1.0) {
            return Err(Error::Config(format!("false-alarm target {} must lie in (0, 1)", d.far_target)));
        }
        if self.n_q() == 0 || d.oversample == 0 {
            return Err(Error::Config("N_Q and the oversampling factor must be at least 1".into()));
        }
        if d.branch_cap == 0 {
            return Err(Error::Config("branch cap must be at least 1".into()));
        }
        self.hrve_params().validate()?;
        if !(0.0..=1.0).contains(&self.run.max_failure_rate) {
            return Err(Error::Config("max_failure_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn hrve_params(&self) -> crate::dd::HrveParams {
        crate::dd::HrveParams { n_r: self.grid.n_r, t_v: self.grid.t_v, iters: self.grid.iters }
    }

    /// Copy with one scalar parameter replaced.
    pub fn with_axis(&self, axis: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("axis {axis} needs a nonnegative integer, got {v}")))
            }
        };
        match axis {
            "n_sc" => {
                c.waveform.n_sc = count(value)?;
                c.detector.n_q = None;
            }
            "n_q" => c.detector.n_q = Some(count(value)?),
            "m" => c.array.m = count(value)?,
            "n_b" => c.array.n_b = count(value)?,
            "t_cg" => c.waveform.t_cg = count(value)?,
            "t_fg" => c.waveform.t_fg = count(value)?,
            "snr_db" => {
                c.waveform.snr_db = Some(value);
                c.waveform.noiseless = false;
            }
            "noise_power_dbm" => {
                c.waveform.noise_power_dbm = value;
                c.waveform.snr_db = None;
                c.waveform.noiseless = false;
            }
            "total_power_dbm" => c.waveform.total_power_dbm = value,
            "distance_m" => {
                c.target.range_m = value;
                c.target.range_span_m = None;
                c.target.ranges_m.clear();
            }
            "velocity_mps" => {
                c.target.velocity_mps = value;
                c.target.velocity_span_mps = None;
            }
            "far_target" => c.detector.far_target = value,
            "n_r" => c.grid.n_r = count(value)?,
            "t_v" => c.grid.t_v = count(value)?,
            "iters" => c.grid.iters = count(value)?,
            _ => return Err(Error::UnknownAxis(axis.to_string())),
        }
        c.validate()?;
        Ok(c)
    }
}

/// Names accepted by [`ScenarioConfig::with_axis`].
pub const SWEEP_AXES: &[&str] = &[
    "n_sc",
    "n_q",
    "m",
    "n_b",
    "t_cg",
    "t_fg",
    "snr_db",
    "noise_power_dbm",
    "total_power_dbm",
    "distance_m",
    "velocity_mps",
    "far_target",
    "n_r",
    "t_v",
    "iters",
];
