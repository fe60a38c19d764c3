//! Array responses, path loss and the cascaded DFBS-IRS-target channel.
//!
//! Conventions used throughout the crate:
//!
//! * The DFBS is a ULA parallel to the y axis; the IRS is an `m x m` UPA in the
//!   y-o-z plane facing +x.
//! * IRS element `(r, c)` (row `r` along y, column `c` along z) sits at vector
//!   index `r * m + c`, so `b_I(u, v) = a(m, u) ⊗ a(m, v)` with the azimuth
//!   factor outermost.
//! * Normalized angles are projections of unit directions scaled by
//!   `2d/λ`. For the DFBS-IRS link `u = (2d_R/λ)(y_B - y_IRS)/d_B2R`; for the
//!   IRS-target link `u = (2d_R/λ)(y_IRS - y_G)/d_R2G`, which makes the
//!   localization formulas `ŷ = y_IRS - û d̂`, `ẑ = z_IRS - v̂ d̂` exact inverses.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Propagation speed used for every delay/range conversion (m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Tolerance on `|ξ_m| = 1` for IRS phase vectors.
pub const UNIT_MODULUS_TOL: f64 = 1e-9;

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// `a(n, ψ)`: element `k` is `exp(jπkψ)`.
pub fn steering_ula(n_elems: usize, psi: f64) -> Vec<C64> {
    (0..n_elems)
        .map(|k| C64::from_polar(1.0, PI * k as f64 * psi))
        .collect()
}

/// Kronecker product `a ⊗ b` with `a` outermost.
pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// IRS response `b_I(u, v) = a(m, u) ⊗ a(m, v)`.
pub fn steering_upa(m: usize, u: f64, v: f64) -> Vec<C64> {
    kron(&steering_ula(m, u), &steering_ula(m, v))
}

/// Check that every entry of an IRS phase vector has unit modulus.
pub fn check_unit_modulus(xi: &[C64]) -> Result<()> {
    for (index, z) in xi.iter().enumerate() {
        let modulus = z.norm();
        if !modulus.is_finite() || (modulus - 1.0).abs() > UNIT_MODULUS_TOL {
            return Err(Error::NotUnitModulus { index, modulus });
        }
    }
    Ok(())
}

/// `b_I^H(out) diag(ξ) b_I(inc)` for an `m x m` surface, evaluated without
/// materializing either steering vector.
pub fn irs_quadratic_form(xi: &[C64], m: usize, out: (f64, f64), inc: (f64, f64)) -> C64 {
    debug_assert_eq!(xi.len(), m * m);
    let row_step = C64::from_polar(1.0, PI * (inc.0 - out.0));
    let col_step = C64::from_polar(1.0, PI * (inc.1 - out.1));
    let col_phase: Vec<C64> = (0..m).map(|c| col_step.powu(c as u32)).collect();
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..m {
        let row = &xi[r * m..(r + 1) * m];
        let inner: C64 = row.iter().zip(&col_phase).map(|(x, p)| x * p).sum();
        acc += row_step.powu(r as u32) * inner;
    }
    acc
}

/// DFBS and IRS array dimensions and element spacings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// DFBS ULA antenna count.
    pub n_b: usize,
    /// IRS side length (the surface has `m * m` elements).
    pub m: usize,
    /// IRS element spacing in meters.
    pub d_r: f64,
    /// DFBS element spacing in meters.
    pub d_b: f64,
}

impl ArrayConfig {
    pub fn half_wavelength(n_b: usize, m: usize, wavelength: f64) -> Self {
        Self {
            n_b,
            m,
            d_r: wavelength / 2.0,
            d_b: wavelength / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 {
            return Err(Error::Config("n_b must be at least 1".into()));
        }
        if self.m < 2 || !self.m.is_power_of_two() {
            return Err(Error::Config(format!(
                "IRS side m = {} must be a power of two and at least 2",
                self.m
            )));
        }
        if !(self.d_r > 0.0 && self.d_b > 0.0) {
            return Err(Error::Config("element spacings must be positive".into()));
        }
        Ok(())
    }

    /// Number of IRS elements `m²`.
    pub fn irs_elements(&self) -> usize {
        self.m * self.m
    }
}

/// Log-distance path loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathModel {
    /// Reference path loss at `d0`, in dB.
    pub pl_d0_db: f64,
    /// Reference distance in meters.
    pub d0: f64,
    pub eps_b2r: f64,
    pub eps_r2g: f64,
}

impl PathModel {
    /// Free-space loss at `d0 = 1 m` for carrier `f_c`.
    pub fn free_space(f_c: f64, eps_b2r: f64, eps_r2g: f64) -> Self {
        Self {
            pl_d0_db: free_space_loss_db(1.0, f_c),
            d0: 1.0,
            eps_b2r,
            eps_r2g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) {
            return Err(Error::Config("reference distance d0 must be positive".into()));
        }
        if !(self.eps_b2r > 0.0 && self.eps_r2g > 0.0) {
            return Err(Error::Config("path loss exponents must be positive".into()));
        }
        if !self.pl_d0_db.is_finite() {
            return Err(Error::Config("PL(d0) must be finite".into()));
        }
        Ok(())
    }
}

/// `20 log10(4π d f / c)`.
pub fn free_space_loss_db(d: f64, f: f64) -> f64 {
    20.0 * (4.0 * PI * d * f / SPEED_OF_LIGHT).log10()
}

/// Amplitude gain `10^{-PL(d0)/20} (d/d0)^{-eps/2}`.
pub fn path_gain(d: f64, eps: f64, model: &PathModel) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("path distance must be positive, got {d}")));
    }
    Ok(10f64.powf(-model.pl_d0_db / 20.0) * (d / model.d0).powf(-eps / 2.0))
}

/// Positions and the derived distances and normalized angles of one
/// DFBS-IRS-target configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub q_b: Vec3,
    pub q_irs: Vec3,
    pub q_g: Vec3,
    pub d_b2r: f64,
    pub d_r2g: f64,
    /// Azimuth AoA at the IRS from the DFBS.
    pub u_b2r_a: f64,
    /// Elevation AoA at the IRS from the DFBS.
    pub v_b2r_a: f64,
    /// AoD at the DFBS towards the IRS.
    pub u_b2r_d: f64,
    /// Azimuth AoD at the IRS towards the target.
    pub u_r2g_d: f64,
    /// Elevation AoD at the IRS towards the target.
    pub v_r2g_d: f64,
}

impl ScenarioGeometry {
    pub fn new(q_b: Vec3, q_irs: Vec3, q_g: Vec3, array: &ArrayConfig, wavelength: f64) -> Result<Self> {
        let b2r = sub(q_b, q_irs);
        let r2g = sub(q_irs, q_g);
        let d_b2r = norm(b2r);
        let d_r2g = norm(r2g);
        if !(d_b2r > 0.0) {
            return Err(Error::Config("DFBS and IRS positions coincide".into()));
        }
        if !(d_r2g > 0.0) {
            return Err(Error::Config("IRS and target positions coincide".into()));
        }
        if !(q_g[0] > q_irs[0]) {
            return Err(Error::Config(
                "target must lie on the +x side of the IRS plane".into(),
            ));
        }
        let k_r = 2.0 * array.d_r / wavelength;
        let k_b = 2.0 * array.d_b / wavelength;
        Ok(Self {
            q_b,
            q_irs,
            q_g,
            d_b2r,
            d_r2g,
            u_b2r_a: k_r * b2r[1] / d_b2r,
            v_b2r_a: k_r * b2r[2] / d_b2r,
            u_b2r_d: k_b * b2r[1] / d_b2r,
            u_r2g_d: k_r * r2g[1] / d_r2g,
            v_r2g_d: k_r * r2g[2] / d_r2g,
        })
    }

    /// Place the target at normalized direction `(u, v)` and range `d` from the
    /// IRS (half-wavelength IRS spacing assumed for the inverse mapping).
    pub fn from_direction(
        q_b: Vec3,
        q_irs: Vec3,
        u: f64,
        v: f64,
        d: f64,
        array: &ArrayConfig,
        wavelength: f64,
    ) -> Result<Self> {
        let radicand = 1.0 - u * u - v * v;
        if !(radicand > 0.0) || !(d > 0.0) {
            return Err(Error::Domain(format!(
                "direction ({u}, {v}) at range {d} is not a forward direction"
            )));
        }
        let q_g = [
            q_irs[0] + d * radicand.sqrt(),
            q_irs[1] - u * d,
            q_irs[2] - v * d,
        ];
        Self::new(q_b, q_irs, q_g, array, wavelength)
    }

    /// Round-trip DFBS-IRS delay `τ0 = 2 d_B2R / c`.
    pub fn tau0(&self) -> f64 {
        2.0 * self.d_b2r / SPEED_OF_LIGHT
    }

    /// Round-trip IRS-target delay `τ = 2 d_R2G / c`.
    pub fn tau(&self) -> f64 {
        2.0 * self.d_r2g / SPEED_OF_LIGHT
    }

    pub fn incident(&self) -> (f64, f64) {
        (self.u_b2r_a, self.v_b2r_a)
    }

    pub fn target_direction(&self) -> (f64, f64) {
        (self.u_r2g_d, self.v_r2g_d)
    }
}

/// Kinematic and reflectivity state of a target during one CPI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    /// Radial velocity in m/s.
    pub velocity: f64,
    /// `ζ_G²`.
    pub rcs_variance: f64,
    /// `α_G` for this CPI.
    pub rcs_sample: C64,
    /// `f_D = 2 v / λ` in Hz.
    pub doppler: f64,
}

impl TargetState {
    /// Fixed-amplitude RCS `α_G = ζ_G e^{jφ}` with the given phase.
    pub fn with_phase(velocity: f64, rcs_variance: f64, phase: f64, wavelength: f64) -> Self {
        Self {
            velocity,
            rcs_variance,
            rcs_sample: C64::from_polar(rcs_variance.sqrt(), phase),
            doppler: 2.0 * velocity / wavelength,
        }
    }

    /// Draw `φ ~ U[0, 2π)` for the RCS phase.
    pub fn draw<R: Rng + ?Sized>(velocity: f64, rcs_variance: f64, wavelength: f64, rng: &mut R) -> Self {
        let phase = rng.random::<f64>() * 2.0 * PI;
        Self::with_phase(velocity, rcs_variance, phase, wavelength)
    }
}

/// DFBS-IRS channel `G_B2R` at carrier `freq` (`m² x n_b`).
pub fn channel_b2r(freq: f64, geometry: &ScenarioGeometry, path: &PathModel, array: &ArrayConfig) -> Result<Array2<C64>> {
    let a = path_gain(geometry.d_b2r, path.eps_b2r, path)?;
    let alpha = C64::from_polar(a, -2.0 * PI * freq * geometry.d_b2r / SPEED_OF_LIGHT);
    let b = steering_upa(array.m, geometry.u_b2r_a, geometry.v_b2r_a);
    let a_b = steering_ula(array.n_b, geometry.u_b2r_d);
    Ok(Array2::from_shape_fn((b.len(), a_b.len()), |(p, q)| {
        alpha * b[p] * a_b[q].conj()
    }))
}

/// IRS-target channel row `g_R2G` at carrier `freq` (length `m²`).
pub fn channel_r2g(freq: f64, geometry: &ScenarioGeometry, path: &PathModel, array: &ArrayConfig) -> Result<Vec<C64>> {
    let a = path_gain(geometry.d_r2g, path.eps_r2g, path)?;
    let alpha = C64::from_polar(a, -2.0 * PI * freq * geometry.d_r2g / SPEED_OF_LIGHT);
    Ok(steering_upa(array.m, geometry.u_r2g_d, geometry.v_r2g_d)
        .into_iter()
        .map(|b| alpha * b.conj())
        .collect())
}

/// Cascaded IRS gain `h_ξ = b_I^H(u_R2G, v_R2G) diag(ξ) b_I(u_B2R^A, v_B2R^A)`.
pub fn cascade_gain(xi: &[C64], geometry: &ScenarioGeometry) -> Result<C64> {
    check_unit_modulus(xi)?;
    let m = (xi.len() as f64).sqrt().round() as usize;
    if m * m != xi.len() {
        return Err(Error::Shape(format!("IRS vector length {} is not a square", xi.len())));
    }
    Ok(irs_quadratic_form(xi, m, geometry.target_direction(), geometry.incident()))
}
