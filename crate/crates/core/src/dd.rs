//! Fine-grained sensing: delay-Doppler spectrum, hierarchical range and
//! velocity search, and localization.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Vec3, C64, SPEED_OF_LIGHT};

/// `[F]_{n,l} = e^{j2π n Δf τ0} [Y]_{n,l} / s_{n,l}`.
pub fn auxiliary_matrix(echo: &Array2<C64>, symbols: &Array2<C64>, tau0: f64, delta_f: f64) -> Result<Array2<C64>> {
    if echo.dim() != symbols.dim() {
        return Err(Error::Shape(format!(
            "echo is {:?} but symbols are {:?}",
            echo.dim(),
            symbols.dim()
        )));
    }
    let mut f = Array2::zeros(echo.dim());
    for ((n, l), y) in echo.indexed_iter() {
        let s = symbols[[n, l]];
        if s.norm_sqr() == 0.0 {
            return Err(Error::Domain(format!("transmit symbol ({n}, {l}) is zero")));
        }
        f[[n, l]] = C64::from_polar(1.0, 2.0 * PI * n as f64 * delta_f * tau0) * y / s;
    }
    Ok(f)
}

/// Delay and Doppler search grids of one H-R&VE level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdGrids {
    pub tau: Vec<f64>,
    pub doppler: Vec<f64>,
    pub level: usize,
    pub tau_step: f64,
    pub doppler_step: f64,
    pub tau_max: f64,
    pub doppler_max: f64,
}

impl DdGrids {
    /// Level 0: `τ = τ_max/N_R · [0, .., N_R - 1]` and
    /// `f_D = f_max/T_V · [-T_V, .., T_V - 1]`.
    pub fn initial(n_r: usize, t_v: usize, tau_max: f64, doppler_max: f64) -> Self {
        let tau_step = tau_max / n_r as f64;
        let doppler_step = doppler_max / t_v as f64;
        Self {
            tau: (0..n_r).map(|k| k as f64 * tau_step).collect(),
            doppler: (0..2 * t_v).map(|k| (k as f64 - t_v as f64) * doppler_step).collect(),
            level: 0,
            tau_step,
            doppler_step,
            tau_max,
            doppler_max,
        }
    }

    /// Next level centered at `(tau[n_hat], doppler[l_hat])`: spacings shrink
    /// by `N_R` and `T_V`, each axis spans `±N_R` (`±T_V`) new steps, and
    /// points outside `[0, τ_max) x [-f_max, f_max)` are dropped.
    pub fn refine(&self, n_hat: usize, l_hat: usize, n_r: usize, t_v: usize) -> Self {
        let tau_step = self.tau_step / n_r as f64;
        let doppler_step = self.doppler_step / t_v as f64;
        let (tc, fc) = (self.tau[n_hat], self.doppler[l_hat]);
        let tau = (-(n_r as isize)..=n_r as isize)
            .map(|k| tc + k as f64 * tau_step)
            .filter(|&t| t >= 0.0 && t < self.tau_max)
            .collect();
        let doppler = (-(t_v as isize)..=t_v as isize)
            .map(|k| fc + k as f64 * doppler_step)
            .filter(|&f| f >= -self.doppler_max && f < self.doppler_max)
            .collect();
        Self {
            tau,
            doppler,
            level: self.level + 1,
            tau_step,
            doppler_step,
            tau_max: self.tau_max,
            doppler_max: self.doppler_max,
        }
    }
}

/// `Λ` over a delay grid (rows) and a Doppler grid (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DdSpectrum {
    pub values: Array2<f64>,
}

impl DdSpectrum {
    /// Maximum and its `(delay, Doppler)` index; ties go to the lowest delay
    /// index, then the lowest Doppler index.
    pub fn argmax(&self) -> (f64, usize, usize) {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for ((a, b), &x) in self.values.indexed_iter() {
            if x > best.0 {
                best = (x, a, b);
            }
        }
        best
    }
}

/// `Λ[a, b] = |Σ_n e^{j2π n Δf τ_a} Σ_l F[n, l] e^{-j2π l T_O f_b}|² / (N T)`,
/// evaluated separably.
pub fn dd_spectrum(f: &Array2<C64>, tau: &[f64], doppler: &[f64], delta_f: f64, t_o: f64) -> DdSpectrum {
    let (n_sc, t) = f.dim();
    let doppler_kernel = Array2::from_shape_fn((t, doppler.len()), |(l, b)| {
        C64::from_polar(1.0, -2.0 * PI * l as f64 * t_o * doppler[b])
    });
    // g[n, b] = Σ_l F[n, l] e^{-j2π l T_O f_b}
    let g = f.dot(&doppler_kernel);
    let delay_kernel = Array2::from_shape_fn((tau.len(), n_sc), |(a, n)| {
        C64::from_polar(1.0, 2.0 * PI * n as f64 * delta_f * tau[a])
    });
    let scale = 1.0 / (n_sc * t).max(1) as f64;
    let values = delay_kernel.dot(&g).mapv(|z| z.norm_sqr() * scale);
    DdSpectrum { values }
}

/// Reference evaluation of the same spectrum by quadruple summation.
pub fn dd_spectrum_direct(f: &Array2<C64>, tau: &[f64], doppler: &[f64], delta_f: f64, t_o: f64) -> DdSpectrum {
    let (n_sc, t) = f.dim();
    let scale = 1.0 / (n_sc * t).max(1) as f64;
    let values = Array2::from_shape_fn((tau.len(), doppler.len()), |(a, b)| {
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..n_sc {
            for l in 0..t {
                let phase = 2.0 * PI * (n as f64 * delta_f * tau[a] - l as f64 * t_o * doppler[b]);
                acc += f[[n, l]] * C64::from_polar(1.0, phase);
            }
        }
        acc.norm_sqr() * scale
    });
    DdSpectrum { values }
}

/// H-R&VE search sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HrveParams {
    pub n_r: usize,
    pub t_v: usize,
    pub iters: usize,
}

impl HrveParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_r < 1 || self.t_v < 1 {
            return Err(Error::Config(format!(
                "H-R&VE grid sizes N_R = {}, T_V = {} must be at least 1",
                self.n_r, self.t_v
            )));
        }
        if self.iters < 1 {
            return Err(Error::Config("H-R&VE needs at least one refinement".into()));
        }
        Ok(())
    }
}

/// Output of the hierarchical search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrveResult {
    pub tau_hat: f64,
    pub doppler_hat: f64,
    /// Spacings of the last evaluated level.
    pub tau_step: f64,
    pub doppler_step: f64,
    /// Refinement levels actually evaluated after the initial one.
    pub levels: usize,
    /// Total spectrum cells evaluated.
    pub evaluations: usize,
}

/// Hierarchical delay-Doppler search: evaluate, take the argmax, zoom
/// `iters` times, evaluate once more and return the final argmax.
///
/// Zooming stops early if a further level would not be representable in
/// `f64` around the current center.
pub fn h_rve(f: &Array2<C64>, params: HrveParams, delta_f: f64, t_o: f64) -> Result<HrveResult> {
    params.validate()?;
    let mut grids = DdGrids::initial(params.n_r, params.t_v, 0.5 / delta_f, 0.5 / t_o);
    let mut evaluations = 0;
    let mut levels = 0;
    loop {
        let spectrum = dd_spectrum(f, &grids.tau, &grids.doppler, delta_f, t_o);
        evaluations += grids.tau.len() * grids.doppler.len();
        let (_, a, b) = spectrum.argmax();
        if levels == params.iters {
            return Ok(HrveResult {
                tau_hat: grids.tau[a],
                doppler_hat: grids.doppler[b],
                tau_step: grids.tau_step,
                doppler_step: grids.doppler_step,
                levels,
                evaluations,
            });
        }
        let next = grids.refine(a, b, params.n_r, params.t_v);
        let resolvable = |center: f64, span: f64, step: f64| center + step != center && span + step != span;
        if !resolvable(grids.tau[a], grids.tau_max, next.tau_step)
            || !resolvable(grids.doppler[b], grids.doppler_max, next.doppler_step)
        {
            log::warn!("H-R&VE stopped after {levels} refinements: grid spacing below f64 resolution");
            return Ok(HrveResult {
                tau_hat: grids.tau[a],
                doppler_hat: grids.doppler[b],
                tau_step: grids.tau_step,
                doppler_step: grids.doppler_step,
                levels,
                evaluations,
            });
        }
        grids = next;
        levels += 1;
    }
}

/// `d = c τ / 2`, `v = f_D λ / 2` with `λ = c / f_c`.
pub fn rv_convert(tau_hat: f64, doppler_hat: f64, f_c: f64) -> (f64, f64) {
    (SPEED_OF_LIGHT * tau_hat / 2.0, doppler_hat * SPEED_OF_LIGHT / f_c / 2.0)
}

/// Estimated delay, Doppler, range and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvEstimate {
    pub tau_hat: f64,
    pub doppler_hat: f64,
    pub range_hat: f64,
    pub velocity_hat: f64,
}

impl RvEstimate {
    pub fn new(tau_hat: f64, doppler_hat: f64, f_c: f64) -> Self {
        let (range_hat, velocity_hat) = rv_convert(tau_hat, doppler_hat, f_c);
        Self { tau_hat, doppler_hat, range_hat, velocity_hat }
    }
}

/// Target position from the IRS position, estimated direction and range:
/// `ŷ = y_IRS - û d̂`, `ẑ = z_IRS - v̂ d̂`, `x̂ = x_IRS + √(d̂² - (û d̂)² - (v̂ d̂)²)`.
pub fn localize(u_hat: f64, v_hat: f64, range_hat: f64, q_irs: Vec3) -> Result<Vec3> {
    let (dy, dz) = (u_hat * range_hat, v_hat * range_hat);
    let radicand = range_hat * range_hat - dy * dy - dz * dz;
    if !(radicand >= 0.0) {
        return Err(Error::InfeasibleLocation(radicand));
    }
    Ok([q_irs[0] + radicand.sqrt(), q_irs[1] - dy, q_irs[2] - dz])
}
