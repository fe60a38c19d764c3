//! Delay spectrum, DSP and RSS test statistics and the false-alarm threshold.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::geometry::{C64, SPEED_OF_LIGHT};

/// `Γ` over the quantized delays `τ_q = q / (N_Q Δf)`, `q = 0..N_Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySpectrum {
    pub values: Vec<f64>,
    pub delta_f: f64,
}

impl DelaySpectrum {
    pub fn n_q(&self) -> usize {
        self.values.len()
    }

    pub fn tau(&self, bin: usize) -> f64 {
        bin as f64 / (self.n_q() as f64 * self.delta_f)
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        (0..self.n_q()).map(|q| self.tau(q)).collect()
    }

    /// Bins at or beyond `τ_max = 1/(2Δf)` alias with negative delays.
    pub fn is_ambiguous(&self, bin: usize) -> bool {
        2 * bin >= self.n_q()
    }
}

/// Binary hypothesis decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Test statistic driving beam selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Dsp,
    Rss,
}

/// `[f]_n = e^{j2π n Δf τ0} y_n / s_n`.
fn aux_vector(row: &[C64], symbols: &[C64], tau0: f64, delta_f: f64) -> Result<Vec<C64>> {
    if row.len() != symbols.len() {
        return Err(Error::Shape(format!(
            "echo row has {} entries but {} symbols were given",
            row.len(),
            symbols.len()
        )));
    }
    let step = 2.0 * PI * delta_f * tau0;
    row.iter()
        .zip(symbols)
        .enumerate()
        .map(|(n, (y, s))| {
            if s.norm_sqr() == 0.0 {
                return Err(Error::Domain(format!("transmit symbol {n} is zero")));
            }
            Ok(C64::from_polar(1.0, step * n as f64) * y / s)
        })
        .collect()
}

/// Reference delay spectrum by direct summation, `O(N · N_Q)`:
/// `Γ[q] = (1/N) |Σ_n f_n e^{j2π n q / N_Q}|²`.
pub fn delay_spectrum(row: &[C64], symbols: &[C64], tau0: f64, delta_f: f64, n_q: usize) -> Result<DelaySpectrum> {
    if n_q == 0 {
        return Err(Error::Config("delay grid needs at least one bin".into()));
    }
    let f = aux_vector(row, symbols, tau0, delta_f)?;
    let n = f.len().max(1) as f64;
    let twiddle: Vec<C64> = (0..n_q)
        .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / n_q as f64))
        .collect();
    let values = (0..n_q)
        .map(|q| {
            let acc: C64 = f.iter().enumerate().map(|(k, x)| x * twiddle[(k * q) % n_q]).sum();
            acc.norm_sqr() / n
        })
        .collect();
    Ok(DelaySpectrum { values, delta_f })
}

/// FFT-based delay spectrum for a fixed `(N, N_Q)`.
///
/// Subcarriers are folded modulo `N_Q` (which is exact because the kernel is
/// `N_Q`-periodic in `n`) and transformed with a length-`N_Q` inverse FFT.
#[derive(Clone)]
pub struct DelayTransform {
    n_sc: usize,
    n_q: usize,
    delta_f: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DelayTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelayTransform")
            .field("n_sc", &self.n_sc)
            .field("n_q", &self.n_q)
            .field("delta_f", &self.delta_f)
            .finish()
    }
}

impl DelayTransform {
    pub fn new(n_sc: usize, n_q: usize, delta_f: f64) -> Result<Self> {
        if n_sc == 0 || n_q == 0 {
            return Err(Error::Config("delay transform needs N ≥ 1 and N_Q ≥ 1".into()));
        }
        let fft = FftPlanner::new().plan_fft_inverse(n_q);
        Ok(Self { n_sc, n_q, delta_f, fft })
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn apply(&self, row: &[C64], symbols: &[C64], tau0: f64) -> Result<DelaySpectrum> {
        if row.len() != self.n_sc {
            return Err(Error::Shape(format!("echo row has {} entries, expected {}", row.len(), self.n_sc)));
        }
        let f = aux_vector(row, symbols, tau0, self.delta_f)?;
        let mut buf = vec![C64::new(0.0, 0.0); self.n_q];
        for (k, x) in f.into_iter().enumerate() {
            buf[k % self.n_q] += x;
        }
        self.fft.process(&mut buf);
        let n = self.n_sc as f64;
        Ok(DelaySpectrum {
            values: buf.iter().map(|z| z.norm_sqr() / n).collect(),
            delta_f: self.delta_f,
        })
    }
}

/// Peak value and bin of a spectrum; ties go to the lowest bin.
pub fn dsp_statistic(spectrum: &DelaySpectrum) -> (f64, usize) {
    argmax(&spectrum.values)
}

pub(crate) fn argmax(values: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, &x) in values.iter().enumerate() {
        if x > best.0 {
            best = (x, k);
        }
    }
    best
}

/// `ℛ = Σ_n |y_n|²`.
pub fn rss_statistic(row: &[C64]) -> f64 {
    row.iter().map(|z| z.norm_sqr()).sum()
}

/// `δ = -σ0² ln(1 - (1 - p̄)^{1/N})`.
pub fn far_threshold(far_target: f64, noise_power: f64, n_cells: usize) -> Result<f64> {
    if !(far_target > 0.0 && far_target < 1.0) {
        return Err(Error::Config(format!("false-alarm target {far_target} must lie in (0, 1)")));
    }
    if n_cells == 0 {
        return Err(Error::Config("threshold needs at least one cell".into()));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::Config(format!("noise power {noise_power} must be nonnegative")));
    }
    let per_cell = 1.0 - (1.0 - far_target).powf(1.0 / n_cells as f64);
    Ok(-noise_power * per_cell.ln())
}

/// RSS threshold with false-alarm probability `p̄`: under `H0`,
/// `ℛ / σ0²` is Gamma-distributed with shape `N` and unit scale.
pub fn rss_threshold(far_target: f64, noise_power: f64, n_sc: usize) -> Result<f64> {
    if !(far_target > 0.0 && far_target < 1.0) {
        return Err(Error::Config(format!("false-alarm target {far_target} must lie in (0, 1)")));
    }
    if n_sc == 0 {
        return Err(Error::Config("threshold needs at least one subcarrier".into()));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::Config(format!("noise power {noise_power} must be nonnegative")));
    }
    let gamma = Gamma::new(n_sc as f64, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    Ok(noise_power * gamma.inverse_cdf(1.0 - far_target))
}

/// Per-bin false-alarm probability `e^{-δ/σ0²}` of an exponential bin.
pub fn per_bin_far(threshold: f64, noise_power: f64) -> f64 {
    (-threshold / noise_power).exp()
}

/// `H1` iff the statistic strictly exceeds the threshold.
pub fn detect(statistic: f64, threshold: f64) -> Hypothesis {
    if statistic > threshold {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// Calibrated DSP detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub far_target: f64,
    pub noise_power: f64,
    /// Number of spectrum cells entering the threshold (`N`, or `N_Q` when
    /// the two differ).
    pub n_cells: usize,
    pub threshold: f64,
}

impl DetectorConfig {
    pub fn new(far_target: f64, noise_power: f64, n_cells: usize) -> Result<Self> {
        Ok(Self {
            far_target,
            noise_power,
            n_cells,
            threshold: far_threshold(far_target, noise_power, n_cells)?,
        })
    }

    pub fn decide(&self, statistic: f64) -> Hypothesis {
        detect(statistic, self.threshold)
    }
}

/// Distance-normalized delay spectrum `Γ[q] · (c τ_q / 2)^{2ε}`.
pub fn normalized_delay_spectrum(spectrum: &DelaySpectrum, eps_r2g: f64) -> Vec<f64> {
    spectrum
        .values
        .iter()
        .enumerate()
        .map(|(q, &g)| {
            let d = SPEED_OF_LIGHT * spectrum.tau(q) / 2.0;
            if eps_r2g == 0.0 {
                g
            } else {
                g * d.powf(2.0 * eps_r2g)
            }
        })
        .collect()
}
