//! OFDM waveform, transmit symbols and echo synthesis.
//!
//! The echo model is written directly in the post-FFT frequency domain. With
//! DFBS transmit and receive beams matched to the IRS, the combined echo on
//! subcarrier `n` of symbol `l` is
//!
//! ```text
//! y[n, l] = √p · n_b · α_G · a²_R2G · a²_B2R · h_ξ(l)²
//!           · e^{-j2π f_c (τ0 + τ)} · e^{-j2π n Δf (τ0 + τ)} · e^{j2π l T_O f_D} · s[n, l] + n̄[n, l]
//! ```
//!
//! which is what [`echo_row_matrix_path`] produces from the explicit channel
//! matrices. The combiner is applied as `w^T ỹ` (plain transpose).

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    channel_b2r, channel_r2g, check_unit_modulus, irs_quadratic_form, path_gain, steering_ula, ArrayConfig,
    PathModel, ScenarioGeometry, TargetState, C64, SPEED_OF_LIGHT,
};
use crate::rng::{stream_rng, Stream};

/// OFDM numerology, CPI split, power and noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Carrier frequency `f_c` in Hz.
    pub f_c: f64,
    /// Subcarrier spacing `Δf` in Hz.
    pub delta_f: f64,
    /// Number of subcarriers `N`.
    pub n_sc: usize,
    /// Cyclic prefix duration in seconds.
    pub t_cp: f64,
    /// OFDM symbol duration `T_O` in seconds.
    pub t_o: f64,
    /// Symbols reserved for coarse-grained sensing.
    pub t_cg: usize,
    /// Symbols reserved for fine-grained sensing.
    pub t_fg: usize,
    /// `σ0²`, linear (W). Zero gives noiseless echoes.
    pub noise_power: f64,
    /// `p̄_T`, power per subcarrier, linear (W).
    pub power_per_sc: f64,
}

impl WaveformConfig {
    /// Build a configuration with `T_O = 1/Δf + T_cp`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f_c: f64,
        delta_f: f64,
        n_sc: usize,
        t_cp: f64,
        t_cg: usize,
        t_fg: usize,
        noise_power: f64,
        power_per_sc: f64,
    ) -> Result<Self> {
        let cfg = Self {
            f_c,
            delta_f,
            n_sc,
            t_cp,
            t_o: 1.0 / delta_f + t_cp,
            t_cg,
            t_fg,
            noise_power,
            power_per_sc,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::Config(format!("carrier frequency {} must be positive", self.f_c)));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::Config(format!("subcarrier spacing {} must be positive", self.delta_f)));
        }
        if self.n_sc == 0 {
            return Err(Error::Config("at least one subcarrier is required".into()));
        }
        if !(self.t_cp >= 0.0) {
            return Err(Error::Config(format!("cyclic prefix {} must be nonnegative", self.t_cp)));
        }
        if !(self.t_o > 0.0 && self.t_o.is_finite()) {
            return Err(Error::Config(format!("symbol duration {} must be positive", self.t_o)));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::Config(format!("noise power {} must be nonnegative", self.noise_power)));
        }
        if !(self.power_per_sc > 0.0 && self.power_per_sc.is_finite()) {
            return Err(Error::Config(format!("per-subcarrier power {} must be positive", self.power_per_sc)));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// `T_CPI = T_CG + T_FG`.
    pub fn t_cpi(&self) -> usize {
        self.t_cg + self.t_fg
    }

    /// Maximum unambiguous delay `1/(2Δf)`.
    pub fn tau_max(&self) -> f64 {
        0.5 / self.delta_f
    }

    /// Maximum unambiguous Doppler shift `1/(2T_O)`.
    pub fn doppler_max(&self) -> f64 {
        0.5 / self.t_o
    }
}

/// Unit-norm DFBS transmit and receive beams `a_B(u_B2R^D)/√n_b`.
pub fn dfbs_beamformers(geometry: &ScenarioGeometry, array: &ArrayConfig) -> (Vec<C64>, Vec<C64>) {
    let scale = 1.0 / (array.n_b as f64).sqrt();
    let w: Vec<C64> = steering_ula(array.n_b, geometry.u_b2r_d)
        .into_iter()
        .map(|z| z * scale)
        .collect();
    (w.clone(), w)
}

/// `N x T` grid of unit-modulus transmit symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    pub s: Array2<C64>,
}

/// Column `l` of the symbol grid for `seed`: independent uniform phases.
pub fn symbol_column(seed: u64, l: usize, n_sc: usize) -> Vec<C64> {
    let mut rng = stream_rng(seed, Stream::Symbols, l as u64);
    (0..n_sc)
        .map(|_| C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>()))
        .collect()
}

/// The full `N x T_CPI` symbol grid for `seed`.
pub fn gen_symbols(config: &WaveformConfig, seed: u64) -> SymbolGrid {
    let (n, t) = (config.n_sc, config.t_cpi());
    let mut s = Array2::zeros((n, t));
    for l in 0..t {
        for (k, z) in symbol_column(seed, l, n).into_iter().enumerate() {
            s[[k, l]] = z;
        }
    }
    SymbolGrid { s }
}

/// `n` draws of circularly-symmetric complex Gaussian noise with variance `σ²`.
pub fn complex_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> Vec<C64> {
    let scale = (variance / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * scale, im * scale)
        })
        .collect()
}

/// One reflecting target as seen through the IRS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub geometry: ScenarioGeometry,
    pub target: TargetState,
}

/// Ground truth attached to synthesized echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoTruth {
    pub tau0: f64,
    pub taus: Vec<f64>,
    pub dopplers: Vec<f64>,
    pub rcs: Vec<C64>,
    /// Index of the first symbol in the CPI.
    pub first_symbol: usize,
    /// Physical IRS phase vectors, one per symbol.
    #[serde(skip)]
    pub xi_schedule: Vec<Vec<C64>>,
}

/// Combined received symbols `Y` (`N x L`) with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoGrid {
    pub y: Array2<C64>,
    pub truth: EchoTruth,
}

#[derive(Debug, Clone)]
struct ReflectorTerm {
    /// `√p · n_b · α_G · a²_R2G · a²_B2R · e^{-j2π f_c (τ0 + τ)}`.
    amplitude: C64,
    delay: f64,
    doppler: f64,
    direction: (f64, f64),
}

/// Echo synthesizer for one CPI.
///
/// Rows are pure functions of `(seed, l, ξ)`: symbols and noise for symbol
/// `l` come from streams keyed by `(seed, l)`, so rows can be produced in any
/// order or in parallel with identical results.
#[derive(Debug, Clone)]
pub struct EchoSynth {
    pub waveform: WaveformConfig,
    pub array: ArrayConfig,
    pub seed: u64,
    tau0: f64,
    incident: (f64, f64),
    reflectors: Vec<Reflector>,
    terms: Vec<ReflectorTerm>,
}

impl EchoSynth {
    /// `reflectors` may be empty (target absent); `incident` and `τ0` then
    /// come from `q_b`, `q_irs` via `frame`.
    pub fn new(
        waveform: WaveformConfig,
        array: ArrayConfig,
        path: &PathModel,
        frame: &ScenarioGeometry,
        reflectors: Vec<Reflector>,
        seed: u64,
    ) -> Result<Self> {
        waveform.validate()?;
        array.validate()?;
        path.validate()?;
        let tau0 = frame.tau0();
        let a_b2r = path_gain(frame.d_b2r, path.eps_b2r, path)?;
        let mut terms = Vec::with_capacity(reflectors.len());
        for r in &reflectors {
            let g = &r.geometry;
            if (g.tau0() - tau0).abs() > 1e-15 || g.incident() != frame.incident() {
                return Err(Error::Config("reflectors must share the DFBS and IRS positions".into()));
            }
            let a_r2g = path_gain(g.d_r2g, path.eps_r2g, path)?;
            let delay = tau0 + g.tau();
            let amplitude = waveform.power_per_sc.sqrt()
                * array.n_b as f64
                * r.target.rcs_sample
                * (a_r2g * a_r2g * a_b2r * a_b2r)
                * C64::from_polar(1.0, -2.0 * PI * waveform.f_c * delay);
            terms.push(ReflectorTerm {
                amplitude,
                delay,
                doppler: r.target.doppler,
                direction: g.target_direction(),
            });
        }
        Ok(Self {
            waveform,
            array,
            seed,
            tau0,
            incident: frame.incident(),
            reflectors,
            terms,
        })
    }

    /// Single target scene (or target-absent when `present` is false).
    pub fn single(
        waveform: WaveformConfig,
        array: ArrayConfig,
        path: &PathModel,
        geometry: &ScenarioGeometry,
        target: TargetState,
        present: bool,
        seed: u64,
    ) -> Result<Self> {
        let reflectors = if present {
            vec![Reflector { geometry: *geometry, target }]
        } else {
            Vec::new()
        };
        Self::new(waveform, array, path, geometry, reflectors, seed)
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn incident(&self) -> (f64, f64) {
        self.incident
    }

    pub fn reflectors(&self) -> &[Reflector] {
        &self.reflectors
    }

    /// Transmit symbols of symbol `l`.
    pub fn symbols(&self, l: usize) -> Vec<C64> {
        symbol_column(self.seed, l, self.waveform.n_sc)
    }

    /// `√p α_CG e^{jβ_CG}` at `l = 0` for reflector `t` under physical phases `ξ`.
    pub fn cg_gain(&self, t: usize, xi: &[C64]) -> C64 {
        let term = &self.terms[t];
        let h = irs_quadratic_form(xi, self.array.m, term.direction, self.incident);
        term.amplitude * h * h
    }

    /// Noiseless combined echo of symbol `l` under physical phases `ξ`.
    pub fn signal_row(&self, l: usize, xi: &[C64]) -> Result<Vec<C64>> {
        if xi.len() != self.array.irs_elements() {
            return Err(Error::Shape(format!(
                "IRS phase vector has {} entries, expected {}",
                xi.len(),
                self.array.irs_elements()
            )));
        }
        check_unit_modulus(xi)?;
        let n_sc = self.waveform.n_sc;
        let s = self.symbols(l);
        let mut row = vec![C64::new(0.0, 0.0); n_sc];
        for (t, term) in self.terms.iter().enumerate() {
            let coeff = self.cg_gain(t, xi)
                * C64::from_polar(1.0, 2.0 * PI * l as f64 * self.waveform.t_o * term.doppler);
            let step = -2.0 * PI * self.waveform.delta_f * term.delay;
            for (n, y) in row.iter_mut().enumerate() {
                *y += coeff * C64::from_polar(1.0, step * n as f64) * s[n];
            }
        }
        Ok(row)
    }

    /// Combined noise of symbol `l`, variance `σ0²` per entry.
    pub fn noise_row(&self, l: usize) -> Vec<C64> {
        let mut rng = stream_rng(self.seed, Stream::Noise, l as u64);
        complex_noise(&mut rng, self.waveform.n_sc, self.waveform.noise_power)
    }

    /// Received combined echo of symbol `l` under physical phases `ξ`.
    pub fn row(&self, l: usize, xi: &[C64]) -> Result<Vec<C64>> {
        let mut row = self.signal_row(l, xi)?;
        if self.waveform.noise_power > 0.0 {
            for (y, w) in row.iter_mut().zip(self.noise_row(l)) {
                *y += w;
            }
        }
        Ok(row)
    }

    /// Echo grid for symbols `first_symbol ..` with one phase vector each.
    pub fn grid(&self, first_symbol: usize, xi_schedule: &[Vec<C64>]) -> Result<EchoGrid> {
        let n_sc = self.waveform.n_sc;
        let mut y = Array2::zeros((n_sc, xi_schedule.len()));
        for (k, xi) in xi_schedule.iter().enumerate() {
            let row = self.row(first_symbol + k, xi)?;
            for (n, z) in row.into_iter().enumerate() {
                y[[n, k]] = z;
            }
        }
        Ok(EchoGrid {
            y,
            truth: EchoTruth {
                tau0: self.tau0,
                taus: self.reflectors.iter().map(|r| r.geometry.tau()).collect(),
                dopplers: self.reflectors.iter().map(|r| r.target.doppler).collect(),
                rcs: self.reflectors.iter().map(|r| r.target.rcs_sample).collect(),
                first_symbol,
                xi_schedule: xi_schedule.to_vec(),
            },
        })
    }

    /// Symbols `first_symbol .. first_symbol + len` as an `N x len` matrix.
    pub fn symbol_block(&self, first_symbol: usize, len: usize) -> Array2<C64> {
        let mut s = Array2::zeros((self.waveform.n_sc, len));
        for k in 0..len {
            for (n, z) in self.symbols(first_symbol + k).into_iter().enumerate() {
                s[[n, k]] = z;
            }
        }
        s
    }
}

/// Echo synthesis with one physical IRS phase vector per symbol, starting at
/// symbol 0 of the CPI.
#[allow(clippy::too_many_arguments)]
pub fn simulate_echo(
    waveform: &WaveformConfig,
    array: &ArrayConfig,
    geometry: &ScenarioGeometry,
    path: &PathModel,
    target: &TargetState,
    present: bool,
    xi_schedule: &[Vec<C64>],
    seed: u64,
) -> Result<EchoGrid> {
    EchoSynth::single(*waveform, *array, path, geometry, *target, present, seed)?.grid(0, xi_schedule)
}

/// Noiseless echo of symbol `l` computed from the explicit channel matrices:
/// `√p α_G w^T G^T diag(ξ) g^T g diag(ξ) G w s e^{j2π l T_O f_D}` per
/// subcarrier. Reference path for [`EchoSynth::signal_row`].
#[allow(clippy::too_many_arguments)]
pub fn echo_row_matrix_path(
    waveform: &WaveformConfig,
    array: &ArrayConfig,
    geometry: &ScenarioGeometry,
    path: &PathModel,
    target: &TargetState,
    xi: &[C64],
    symbols: &[C64],
    l: usize,
) -> Result<Vec<C64>> {
    let (w_t, w_r) = dfbs_beamformers(geometry, array);
    let doppler = C64::from_polar(1.0, 2.0 * PI * l as f64 * waveform.t_o * target.doppler);
    let mut out = Vec::with_capacity(waveform.n_sc);
    for (n, s) in symbols.iter().enumerate().take(waveform.n_sc) {
        let f_n = waveform.f_c + n as f64 * waveform.delta_f;
        let g_b2r = channel_b2r(f_n, geometry, path, array)?;
        let g_r2g = channel_r2g(f_n, geometry, path, array)?;
        // Forward: G w (m²), then scalar g diag(ξ) G w.
        let gw = g_b2r.dot(&ndarray::arr1(&w_t));
        let forward: C64 = (0..xi.len()).map(|p| g_r2g[p] * xi[p] * gw[p]).sum();
        // Return: G^T diag(ξ) g^T (n_b), then w_r^T of it.
        let back: Vec<C64> = (0..array.n_b)
            .map(|q| (0..xi.len()).map(|p| g_b2r[[p, q]] * xi[p] * g_r2g[p]).sum())
            .collect();
        let wb: C64 = w_r.iter().zip(&back).map(|(a, b)| a * b).sum();
        out.push(waveform.power_per_sc.sqrt() * target.rcs_sample * wb * forward * s * doppler);
    }
    Ok(out)
}

/// Write an echo grid as CSV with header `n,l,re,im`.
pub fn write_echo_csv<W: std::io::Write>(grid: &EchoGrid, mut w: W) -> Result<()> {
    writeln!(w, "n,l,re,im")?;
    for ((n, k), z) in grid.y.indexed_iter() {
        writeln!(w, "{},{},{:e},{:e}", n, grid.truth.first_symbol + k, z.re, z.im)?;
    }
    Ok(())
}
