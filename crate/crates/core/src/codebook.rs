//! Hierarchical IRS codebook.
//!
//! Layer `k` (1-based, `1..=K` with `K = log2 m`) holds `4^k` codewords. The
//! `(i, j)` codeword of layer `k` points at
//! `(ψ(k, i), ψ(k, j))` with `ψ(k, i) = -1 + (2i - 1)/2^k` and has nominal
//! width `2/2^k`.
//!
//! * Layer `K` uses narrow beams `b_I(ψ(K, i), ψ(K, j))`.
//! * For `l = K - k` even, each axis is split into `S = 2^{l/2}` sub-arrays of
//!   `m/S` elements whose sub-beams tile the layer's footprint; sub-array `s`
//!   (1-based) is rotated by `e^{-jsζ}` with `ζ = π(M_s - 1)/M_s`.
//! * For `l` odd the surface is split into four quadrants. The top-left
//!   quadrant (rows and columns `< m/2`) carries the broadened beam built the
//!   same way on an `m/2`-element aperture; the other three quadrants carry the
//!   edge beam `a(m/2, 1) ⊗ a(m/2, 1)`.
//!
//! Codeword phases are stored in physical row-major order (`r * m + c`, `r`
//! along the azimuth axis). Codewords are expressed in the target-direction
//! frame: they are loaded onto the surface after multiplying elementwise by
//! `b_I^*(u_B2R^A, v_B2R^A)` (see [`compensate_incident`]), which makes the
//! realized gain towards `(u, v)` equal to `|b_I^H(u, v) w|`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{irs_quadratic_form, kron, steering_ula, steering_upa, C64};

/// Beam center `ψ(k, i) = -1 + (2i - 1)/2^k`.
pub fn beam_center(k: usize, i: usize) -> f64 {
    -1.0 + (2.0 * i as f64 - 1.0) / (1u64 << k) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Narrow,
    Even,
    Odd,
}

/// One codeword of the hierarchical codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub phases: Vec<C64>,
    pub center: (f64, f64),
    pub width: f64,
}

impl Codeword {
    fn new(k: usize, i: usize, j: usize, phases: Vec<C64>) -> Self {
        Self {
            k,
            i,
            j,
            phases,
            center: (beam_center(k, i), beam_center(k, j)),
            width: 2.0 / (1u64 << k) as f64,
        }
    }

    /// Whether `(u, v)` lies in the codeword's nominal footprint.
    pub fn covers(&self, u: f64, v: f64) -> bool {
        covers(self.k, self.i, self.j, u, v)
    }
}

/// Whether `(u, v)` falls in the nominal footprint of codeword `(k, i, j)`.
/// Footprints are half-open `[lo, hi)` except at the `+1` edge.
pub fn covers(k: usize, i: usize, j: usize, u: f64, v: f64) -> bool {
    cell_index(k, u) == i && cell_index(k, v) == j
}

/// The 1-based layer-`k` index whose footprint contains `x ∈ [-1, 1]`.
pub fn cell_index(k: usize, x: f64) -> usize {
    let n = 1usize << k;
    let idx = ((x + 1.0) / 2.0 * n as f64).floor() as isize + 1;
    idx.clamp(1, n as isize) as usize
}

/// Layer-`k + 1` children of codeword `(k, i, j)`, in lexicographic order.
pub fn children(i: usize, j: usize) -> [(usize, usize); 4] {
    [
        (2 * i - 1, 2 * j - 1),
        (2 * i - 1, 2 * j),
        (2 * i, 2 * j - 1),
        (2 * i, 2 * j),
    ]
}

fn log2_side(m: usize) -> Result<usize> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::Config(format!(
            "IRS side m = {m} must be a power of two and at least 2"
        )));
    }
    Ok(m.trailing_zeros() as usize)
}

fn check_index(k: usize, idx: usize) -> Result<()> {
    let n = 1usize << k;
    if idx == 0 || idx > n {
        return Err(Error::Index(format!("index {idx} outside [1, {n}] on layer {k}")));
    }
    Ok(())
}

/// Broadened one-axis factor: `s_count` sub-ULAs of `sub_len` elements whose
/// sub-beams tile the layer-`k` footprint around `ψ(k, i)`, with BC phases.
fn broadened_factor(k: usize, i: usize, s_count: usize, sub_len: usize) -> Vec<C64> {
    let two_k = (1u64 << k) as f64;
    let psi = beam_center(k, i);
    let zeta = PI * (sub_len as f64 - 1.0) / sub_len as f64;
    let mut out = Vec::with_capacity(s_count * sub_len);
    // BC index s runs 1..=S.
    for s in 1..=s_count {
        let dir = (2.0 * s as f64 - 1.0) / (two_k * s_count as f64) + psi - 1.0 / two_k;
        let bc = C64::from_polar(1.0, -(s as f64) * zeta);
        out.extend(steering_ula(sub_len, dir).into_iter().map(|z| bc * z));
    }
    out
}

fn layer_kind(m: usize, k: usize) -> Result<LayerKind> {
    let big_k = log2_side(m)?;
    if k == 0 || k > big_k {
        return Err(Error::Index(format!("layer {k} outside [1, {big_k}]")));
    }
    let l = big_k - k;
    Ok(match l {
        0 => LayerKind::Narrow,
        l if l % 2 == 0 => LayerKind::Even,
        _ => LayerKind::Odd,
    })
}

fn narrow_factor(m: usize, i: usize) -> Vec<C64> {
    steering_ula(m, (2.0 * i as f64 - 1.0) / m as f64 - 1.0)
}

fn even_factor(m: usize, k: usize, i: usize) -> Vec<C64> {
    let l = m.trailing_zeros() as usize - k;
    let s = 1usize << (l / 2);
    broadened_factor(k, i, s, m / s)
}

fn odd_factor(m: usize, k: usize, i: usize) -> Vec<C64> {
    let l = m.trailing_zeros() as usize - k;
    let s = 1usize << ((l - 1) / 2);
    broadened_factor(k, i, s, m / (2 * s))
}

/// Assemble an odd-layer codeword: quadrant (0, 0) holds `first`, the other
/// three quadrants hold the edge beam.
fn assemble_odd(m: usize, az: &[C64], el: &[C64]) -> Vec<C64> {
    let h = m / 2;
    let edge = steering_ula(h, 1.0);
    let mut out = Vec::with_capacity(m * m);
    for r in 0..m {
        for c in 0..m {
            let z = match (r < h, c < h) {
                (true, true) => az[r] * el[c],
                _ => edge[r % h] * edge[c % h],
            };
            out.push(z);
        }
    }
    out
}

/// Narrow layer-`K` codeword `b_I((2i-1)/m - 1, (2j-1)/m - 1)`.
pub fn codeword_narrow(m: usize, i: usize, j: usize) -> Result<Codeword> {
    let k = log2_side(m)?;
    check_index(k, i)?;
    check_index(k, j)?;
    Ok(Codeword::new(k, i, j, kron(&narrow_factor(m, i), &narrow_factor(m, j))))
}

/// Broadened codeword for a layer with `K - k` even and at least 2.
pub fn codeword_even_layer(m: usize, k: usize, i: usize, j: usize) -> Result<Codeword> {
    if layer_kind(m, k)? != LayerKind::Even {
        return Err(Error::Domain(format!("layer {k} of m = {m} is not an even broadened layer")));
    }
    check_index(k, i)?;
    check_index(k, j)?;
    Ok(Codeword::new(k, i, j, kron(&even_factor(m, k, i), &even_factor(m, k, j))))
}

/// Four-group codeword for a layer with `K - k` odd.
pub fn codeword_odd_layer(m: usize, k: usize, i: usize, j: usize) -> Result<Codeword> {
    if layer_kind(m, k)? != LayerKind::Odd {
        return Err(Error::Domain(format!("layer {k} of m = {m} is not an odd layer")));
    }
    check_index(k, i)?;
    check_index(k, j)?;
    Ok(Codeword::new(
        k,
        i,
        j,
        assemble_odd(m, &odd_factor(m, k, i), &odd_factor(m, k, j)),
    ))
}

/// Per-layer storage: the `2^k` one-axis factors from which every codeword of
/// the layer is assembled.
#[derive(Debug, Clone)]
pub struct Layer {
    pub k: usize,
    pub kind: LayerKind,
    factors: Vec<Vec<C64>>,
}

impl Layer {
    /// Number of codewords, `4^k`.
    pub fn len(&self) -> usize {
        self.factors.len() * self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn side(&self) -> usize {
        self.factors.len()
    }
}

/// The `K`-layer codebook for an `m x m` IRS.
///
/// Only one-axis factors are kept (`O(2^k m)` per layer); full codewords are
/// assembled on request in `O(m²)`.
#[derive(Debug, Clone)]
pub struct HierarchicalCodebook {
    pub m: usize,
    pub layers: Vec<Layer>,
}

/// Build the codebook for side `m`.
pub fn build_codebook(m: usize) -> Result<HierarchicalCodebook> {
    HierarchicalCodebook::new(m)
}

impl HierarchicalCodebook {
    pub fn new(m: usize) -> Result<Self> {
        let big_k = log2_side(m)?;
        let layers = (1..=big_k)
            .map(|k| {
                let kind = layer_kind(m, k)?;
                let factors = (1..=(1usize << k))
                    .map(|i| match kind {
                        LayerKind::Narrow => narrow_factor(m, i),
                        LayerKind::Even => even_factor(m, k, i),
                        LayerKind::Odd => odd_factor(m, k, i),
                    })
                    .collect();
                Ok(Layer { k, kind, factors })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { m, layers })
    }

    /// Number of layers `K = log2 m`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, k: usize) -> Result<&Layer> {
        if k == 0 || k > self.layers.len() {
            return Err(Error::Index(format!("layer {k} outside [1, {}]", self.layers.len())));
        }
        Ok(&self.layers[k - 1])
    }

    pub fn codeword(&self, k: usize, i: usize, j: usize) -> Result<Codeword> {
        let layer = self.layer(k)?;
        check_index(k, i)?;
        check_index(k, j)?;
        let (az, el) = (&layer.factors[i - 1], &layer.factors[j - 1]);
        let phases = match layer.kind {
            LayerKind::Narrow | LayerKind::Even => kron(az, el),
            LayerKind::Odd => assemble_odd(self.m, az, el),
        };
        Ok(Codeword::new(k, i, j, phases))
    }

    /// All codewords of layer `k`, `i` outer and `j` inner.
    pub fn layer_codewords(&self, k: usize) -> Result<impl Iterator<Item = Codeword> + '_> {
        let n = self.layer(k)?.side();
        Ok((1..=n).flat_map(move |i| (1..=n).map(move |j| self.codeword(k, i, j).expect("in range"))))
    }

    /// Write every layer in the little-endian binary layout:
    ///
    /// ```text
    /// u32 m, u32 K
    /// repeat for k = 1..=K, i = 1..=2^k, j = 1..=2^k:
    ///     u32 k, u32 i, u32 j, m² x (f32 re, f32 im)   // row-major surface order
    /// ```
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.m as u32).to_le_bytes())?;
        w.write_all(&(self.depth() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.m * self.m * 8 + 12);
        for k in 1..=self.depth() {
            for cw in self.layer_codewords(k)? {
                buf.clear();
                for x in [cw.k, cw.i, cw.j] {
                    buf.extend_from_slice(&(x as u32).to_le_bytes());
                }
                for z in &cw.phases {
                    buf.extend_from_slice(&(z.re as f32).to_le_bytes());
                    buf.extend_from_slice(&(z.im as f32).to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        Ok(())
    }
}

/// Decoded codeword record from the binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct CodewordRecord {
    pub k: u32,
    pub i: u32,
    pub j: u32,
    pub phases: Vec<(f32, f32)>,
}

/// Read a codebook dump written by [`HierarchicalCodebook::write_binary`].
pub fn read_binary<R: Read>(mut r: R) -> Result<(u32, u32, Vec<CodewordRecord>)> {
    fn u32_of<R: Read>(r: &mut R) -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn f32_of<R: Read>(r: &mut R) -> Result<f32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }
    let m = u32_of(&mut r)?;
    let depth = u32_of(&mut r)?;
    let total: usize = (1..=depth).map(|k| 1usize << (2 * k)).sum();
    let mut records = Vec::with_capacity(total);
    for _ in 0..total {
        let (k, i, j) = (u32_of(&mut r)?, u32_of(&mut r)?, u32_of(&mut r)?);
        let phases = (0..(m * m))
            .map(|_| Ok((f32_of(&mut r)?, f32_of(&mut r)?)))
            .collect::<Result<Vec<_>>>()?;
        records.push(CodewordRecord { k, i, j, phases });
    }
    Ok((m, depth, records))
}

/// `A_R(ξ, u, v) = |b_I^H(u, v) diag(ξ) b_I(u_inc, v_inc)|`.
pub fn beam_gain(xi: &[C64], u: f64, v: f64, incident: (f64, f64)) -> f64 {
    let m = (xi.len() as f64).sqrt().round() as usize;
    irs_quadratic_form(xi, m, (u, v), incident).norm()
}

/// Gain of a target-frame codeword towards `(u, v)`, i.e. `|b_I^H(u, v) w|`.
pub fn frame_gain(w: &[C64], u: f64, v: f64) -> f64 {
    beam_gain(w, u, v, (0.0, 0.0))
}

/// `ξ^opt(u, v) = b_I(u - u_inc, v - v_inc)`.
pub fn optimal_beam(m: usize, u: f64, v: f64, incident: (f64, f64)) -> Vec<C64> {
    steering_upa(m, u - incident.0, v - incident.1)
}

/// Map a target-frame codeword to surface phases: `b_I^*(incident) ∘ w`.
pub fn compensate_incident(w: &[C64], incident: (f64, f64)) -> Vec<C64> {
    let m = (w.len() as f64).sqrt().round() as usize;
    let row = steering_ula(m, -incident.0);
    let col = steering_ula(m, -incident.1);
    w.iter()
        .enumerate()
        .map(|(p, z)| z * row[p / m] * col[p % m])
        .collect()
}
