//! Cramér-Rao bounds for direction, range and velocity, and the FGS SNR.
//!
//! Direction bounds are in normalized-angle units. For `u = sin φ cos γ`
//! (half-wavelength spacing) a variance in `u` maps to azimuth radians through
//! `var(φ) ≈ var(u) / (cos φ cos γ)²`; the `ε_DR` metric instead multiplies
//! normalized-angle errors by `π`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    irs_quadratic_form, path_gain, steering_ula, ArrayConfig, PathModel, ScenarioGeometry, TargetState, C64,
    SPEED_OF_LIGHT,
};
use crate::ofdm::{symbol_column, WaveformConfig};

/// Signal model for the direction FIM.
///
/// The unknowns are `Ψ = (u, v, Re κ, Im κ)` with the common complex gain
/// `κ = α_G a²_R2G e^{-j2π f_c τ}`. Delays, Doppler, the DFBS-IRS link and the
/// transmitted symbols are known, so the noiseless echo of a beam sent at
/// symbol `l` is `r̄_l[n] = c_{n,l} κ h_l(u, v)²` with known `c_{n,l}`.
#[derive(Debug, Clone, Copy)]
pub struct DirectionModel {
    pub waveform: WaveformConfig,
    pub array: ArrayConfig,
    pub path: PathModel,
    pub geometry: ScenarioGeometry,
    pub target: TargetState,
    /// Seed selecting the transmitted symbols.
    pub seed: u64,
}

impl DirectionModel {
    pub fn kappa(&self) -> Result<C64> {
        let a_r2g = path_gain(self.geometry.d_r2g, self.path.eps_r2g, &self.path)?;
        Ok(self.target.rcs_sample
            * a_r2g
            * a_r2g
            * C64::from_polar(1.0, -2.0 * PI * self.waveform.f_c * self.geometry.tau()))
    }

    /// Known per-entry factors `c_{n,l}` for symbol `l`.
    fn known_factors(&self, l: usize) -> Result<Vec<C64>> {
        let wf = &self.waveform;
        let g = &self.geometry;
        let a_b2r = path_gain(g.d_b2r, self.path.eps_b2r, &self.path)?;
        let base = wf.power_per_sc.sqrt()
            * self.array.n_b as f64
            * a_b2r
            * a_b2r
            * C64::from_polar(1.0, -2.0 * PI * wf.f_c * g.tau0())
            * C64::from_polar(1.0, 2.0 * PI * l as f64 * wf.t_o * self.target.doppler);
        let delay = g.tau0() + g.tau();
        Ok(symbol_column(self.seed, l, wf.n_sc)
            .into_iter()
            .enumerate()
            .map(|(n, s)| base * C64::from_polar(1.0, -2.0 * PI * n as f64 * wf.delta_f * delay) * s)
            .collect())
    }

    /// `h(u, v)` and its partial derivatives for physical phases `ξ`.
    fn h_and_partials(&self, xi: &[C64]) -> (C64, C64, C64) {
        let m = self.array.m;
        let (u, v) = self.geometry.target_direction();
        let inc = self.geometry.incident();
        let h = irs_quadratic_form(xi, m, (u, v), inc);
        // ∂/∂u of conj(b_p(u, v)) is -jπ r conj(b_p); likewise with c for v.
        let out_r = steering_ula(m, -u);
        let out_c = steering_ula(m, -v);
        let in_r = steering_ula(m, inc.0);
        let in_c = steering_ula(m, inc.1);
        let (mut du, mut dv) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for r in 0..m {
            for c in 0..m {
                let term = out_r[r] * out_c[c] * xi[r * m + c] * in_r[r] * in_c[c];
                du += term * r as f64;
                dv += term * c as f64;
            }
        }
        let mj = C64::new(0.0, -PI);
        (h, mj * du, mj * dv)
    }

    /// Noiseless stacked echo over the given `(symbol, ξ)` beams.
    pub fn signal(&self, beams: &[(usize, Vec<C64>)]) -> Result<Vec<C64>> {
        let kappa = self.kappa()?;
        let mut out = Vec::with_capacity(beams.len() * self.waveform.n_sc);
        for (l, xi) in beams {
            let (h, _, _) = self.h_and_partials(xi);
            out.extend(self.known_factors(*l)?.into_iter().map(|c| c * kappa * h * h));
        }
        Ok(out)
    }

    /// Analytic `∂r̄/∂Ψ_i` for `Ψ = (u, v, Re κ, Im κ)`, stacked over beams.
    pub fn partials(&self, beams: &[(usize, Vec<C64>)]) -> Result<[Vec<C64>; 4]> {
        let kappa = self.kappa()?;
        let mut parts: [Vec<C64>; 4] = Default::default();
        for (l, xi) in beams {
            if xi.len() != self.array.irs_elements() {
                return Err(Error::Shape(format!("beam has {} entries", xi.len())));
            }
            let (h, dh_u, dh_v) = self.h_and_partials(xi);
            for c in self.known_factors(*l)? {
                parts[0].push(c * kappa * 2.0 * h * dh_u);
                parts[1].push(c * kappa * 2.0 * h * dh_v);
                parts[2].push(c * h * h);
                parts[3].push(C64::new(0.0, 1.0) * c * h * h);
            }
        }
        Ok(parts)
    }
}

/// `J[i, j] = (2/σ0²) Re{∂r̄^H/∂Ψ_i ∂r̄/∂Ψ_j}` over the stacked beams.
pub fn fim_direction(model: &DirectionModel, beams: &[(usize, Vec<C64>)]) -> Result<Matrix4<f64>> {
    let sigma2 = model.waveform.noise_power;
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("the FIM needs a positive noise power".into()));
    }
    let parts = model.partials(beams)?;
    let mut j = Matrix4::zeros();
    for a in 0..4 {
        for b in a..4 {
            let inner: C64 = parts[a].iter().zip(&parts[b]).map(|(x, y)| x.conj() * y).sum();
            let val = 2.0 / sigma2 * inner.re;
            j[(a, b)] = val;
            j[(b, a)] = val;
        }
    }
    Ok(j)
}

/// `CRLB(η) = (J_ηη - J_ηκ J_κκ⁻¹ J_κη)⁻¹`.
pub fn crlb_direction(j: &Matrix4<f64>) -> Result<Matrix2<f64>> {
    let j_ee: Matrix2<f64> = j.fixed_view::<2, 2>(0, 0).into();
    let j_ek: Matrix2<f64> = j.fixed_view::<2, 2>(0, 2).into();
    let j_ke: Matrix2<f64> = j.fixed_view::<2, 2>(2, 0).into();
    let j_kk: Matrix2<f64> = j.fixed_view::<2, 2>(2, 2).into();
    // Blocks are compared against their own scale: the gain and direction
    // partials can differ by many orders of magnitude.
    let well_posed = |m: &Matrix2<f64>, scale: f64| {
        let s = m.symmetric_eigenvalues();
        scale > 0.0 && s.min() > 1e-10 * scale
    };
    if !well_posed(&j_kk, j_kk.abs().max()) {
        return Err(Error::Degenerate("nuisance gain block is singular".into()));
    }
    let inv_kk = j_kk.try_inverse().ok_or_else(|| Error::Degenerate("nuisance block not invertible".into()))?;
    let schur = j_ee - j_ek * inv_kk * j_ke;
    let schur = (schur + schur.transpose()) * 0.5;
    if !well_posed(&schur, j_ee.abs().max()) {
        return Err(Error::Degenerate(
            "direction information vanishes after removing the gain (a single beam cannot separate direction from gain)".into(),
        ));
    }
    schur
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Schur complement not invertible".into()))
}

/// `snr_FG = p̄ n_b² ζ² a⁴_R2G a⁴_B2R |h|⁴ / σ0²` for physical phases `ξ_BR`.
pub fn snr_fg(
    waveform: &WaveformConfig,
    array: &ArrayConfig,
    path: &PathModel,
    geometry: &ScenarioGeometry,
    rcs_variance: f64,
    xi_br: &[C64],
) -> Result<f64> {
    let a_r2g = path_gain(geometry.d_r2g, path.eps_r2g, path)?;
    let a_b2r = path_gain(geometry.d_b2r, path.eps_b2r, path)?;
    let h = irs_quadratic_form(xi_br, array.m, geometry.target_direction(), geometry.incident()).norm();
    Ok(waveform.power_per_sc * (array.n_b as f64).powi(2) * rcs_variance * a_r2g.powi(4) * a_b2r.powi(4) * h.powi(4)
        / waveform.noise_power)
}

/// Range and velocity CRLBs:
/// `6 / (snr (N² - 1) N T) (c / 4πΔf)²` and
/// `6 / (snr (T² - 1) T N) (c / 4π T_O f_c)²`.
pub fn crlb_rv(snr: f64, n_sc: usize, t_fg: usize, delta_f: f64, t_o: f64, f_c: f64) -> Result<(f64, f64)> {
    if n_sc < 2 || t_fg < 2 {
        return Err(Error::Domain(format!("CRLB needs N ≥ 2 and T_FG ≥ 2, got {n_sc} and {t_fg}")));
    }
    if !(snr > 0.0) {
        return Err(Error::Domain(format!("CRLB needs a positive SNR, got {snr}")));
    }
    let (n, t) = (n_sc as f64, t_fg as f64);
    let range = 6.0 / (snr * (n * n - 1.0) * n * t) * (SPEED_OF_LIGHT / (4.0 * PI * delta_f)).powi(2);
    let vel = 6.0 / (snr * (t * t - 1.0) * t * n) * (SPEED_OF_LIGHT / (4.0 * PI * t_o * f_c)).powi(2);
    Ok((range, vel))
}

/// Bundle of bounds for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbReport {
    pub crlb_u: f64,
    pub crlb_v: f64,
    pub crlb_range: f64,
    pub crlb_velocity: f64,
    pub snr_fg: f64,
}
