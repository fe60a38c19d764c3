//! 3D hierarchical beam training and beam refinement.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::codebook::{children, compensate_incident, HierarchicalCodebook};
use crate::detection::{dsp_statistic, rss_statistic, DelaySpectrum, DelayTransform, Statistic};
use crate::error::{Error, Result};
use crate::geometry::{steering_upa, C64};
use crate::ofdm::EchoSynth;

/// Statistics of one transmitted training symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Sounding {
    pub symbol: usize,
    pub dsp: f64,
    pub bin: usize,
    pub rss: f64,
    pub spectrum: DelaySpectrum,
}

impl Sounding {
    pub fn value(&self, statistic: Statistic) -> f64 {
        match statistic {
            Statistic::Dsp => self.dsp,
            Statistic::Rss => self.rss,
        }
    }
}

/// Something that can transmit one OFDM symbol with a given IRS codeword and
/// report the resulting echo statistics.
pub trait Sounder {
    /// `w` is a target-frame codeword; the sounder maps it to surface phases.
    fn sound(&mut self, w: &[C64]) -> Result<Sounding>;
}

/// Sounder backed by an [`EchoSynth`]: each call consumes the next symbol.
#[derive(Debug, Clone)]
pub struct EchoSounder<'a> {
    synth: &'a EchoSynth,
    transform: DelayTransform,
    next: usize,
    keep_rows: bool,
    rows: Vec<(usize, Vec<C64>)>,
}

impl<'a> EchoSounder<'a> {
    pub fn new(synth: &'a EchoSynth, n_q: usize, first_symbol: usize) -> Result<Self> {
        Ok(Self {
            synth,
            transform: DelayTransform::new(synth.waveform.n_sc, n_q, synth.waveform.delta_f)?,
            next: first_symbol,
            keep_rows: false,
            rows: Vec::new(),
        })
    }

    /// Keep every received row (for echo dumps).
    pub fn keep_rows(mut self, keep: bool) -> Self {
        self.keep_rows = keep;
        self
    }

    /// Index of the next symbol to be transmitted.
    pub fn next_symbol(&self) -> usize {
        self.next
    }

    pub fn rows(&self) -> &[(usize, Vec<C64>)] {
        &self.rows
    }
}

impl Sounder for EchoSounder<'_> {
    fn sound(&mut self, w: &[C64]) -> Result<Sounding> {
        let l = self.next;
        self.next += 1;
        let xi = compensate_incident(w, self.synth.incident());
        let row = self.synth.row(l, &xi)?;
        let spectrum = self.transform.apply(&row, &self.synth.symbols(l), self.synth.tau0())?;
        let (dsp, bin) = dsp_statistic(&spectrum);
        let rss = rss_statistic(&row);
        if self.keep_rows {
            self.rows.push((l, row));
        }
        Ok(Sounding { symbol: l, dsp, bin, rss, spectrum })
    }
}

/// One tested beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub symbol: usize,
    pub dsp: f64,
    pub dsp_bin: usize,
    pub rss: f64,
}

impl ProbeRecord {
    pub fn new(k: usize, i: usize, j: usize, s: &Sounding) -> Self {
        Self { k, i, j, symbol: s.symbol, dsp: s.dsp, dsp_bin: s.bin, rss: s.rss }
    }

    pub fn value(&self, statistic: Statistic) -> f64 {
        match statistic {
            Statistic::Dsp => self.dsp,
            Statistic::Rss => self.rss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub layer: usize,
    pub probes: Vec<ProbeRecord>,
    pub winner: (usize, usize),
}

/// Which neighbors enter the refinement weighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationRule {
    /// Winner and both neighbors along each axis (`Δ ∈ {-1, 0, 1}`).
    #[default]
    ThreePoint,
    /// Both neighbors only (`Δ ∈ {-1, 1}`).
    Neighbors,
}

/// Result of beam refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub rule: InterpolationRule,
    pub probes: Vec<ProbeRecord>,
    pub i_br: f64,
    pub j_br: f64,
    /// A neighbor fell off the grid and one-sided interpolation was used.
    pub boundary: bool,
}

/// Full record of one training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub m: usize,
    pub statistic: Statistic,
    pub threshold: f64,
    pub stages: Vec<StageRecord>,
    /// Winning layer-K indices `(ĩ_K, j̃_K)`.
    pub final_index: (usize, usize),
    pub final_value: f64,
    pub detected: bool,
    pub refinement: Option<Refinement>,
    /// Training symbols used so far.
    pub budget: usize,
}

impl TrainingTrace {
    /// Direction of the winning narrow beam's center.
    pub fn coarse_direction(&self) -> DirectionEstimate {
        direction_from_beam(self.final_index.0 as f64, self.final_index.1 as f64, self.m)
    }

    /// Refined direction, or the coarse one if refinement has not run.
    pub fn direction(&self) -> DirectionEstimate {
        match &self.refinement {
            Some(r) => direction_from_beam(r.i_br, r.j_br, self.m),
            None => self.coarse_direction(),
        }
    }

    /// Refined beam `ξ_BR` in the target frame.
    pub fn refined_beam(&self) -> Vec<C64> {
        let d = self.direction();
        steering_upa(self.m, d.u_hat, d.v_hat)
    }
}

/// Symbols needed by single-target training on an `m x m` IRS: `2 + 4 log2 m`.
pub fn training_budget(m: usize) -> usize {
    2 + 4 * m.trailing_zeros() as usize
}

/// Probe the given layer-`k` cells in order and return records plus the
/// winner (first maximum in the given order).
fn run_stage(
    codebook: &HierarchicalCodebook,
    sounder: &mut dyn Sounder,
    k: usize,
    cells: &[(usize, usize)],
    statistic: Statistic,
) -> Result<StageRecord> {
    let mut probes = Vec::with_capacity(cells.len());
    let mut best = (f64::NEG_INFINITY, cells[0]);
    for &(i, j) in cells {
        let cw = codebook.codeword(k, i, j)?;
        let s = sounder.sound(&cw.phases)?;
        let rec = ProbeRecord::new(k, i, j, &s);
        if rec.value(statistic) > best.0 {
            best = (rec.value(statistic), (i, j));
        }
        probes.push(rec);
    }
    Ok(StageRecord { layer: k, probes, winner: best.1 })
}

/// K-stage quad-tree descent. Stage 1 probes the four layer-1 codewords and
/// stage `k` the four children of the previous winner; the target is declared
/// present if the final winner's statistic exceeds `threshold`.
pub fn hbt_3d(
    codebook: &HierarchicalCodebook,
    sounder: &mut dyn Sounder,
    statistic: Statistic,
    threshold: f64,
) -> Result<TrainingTrace> {
    let mut stages: Vec<StageRecord> = Vec::with_capacity(codebook.depth());
    let mut winner = (1, 1);
    for k in 1..=codebook.depth() {
        // children(1, 1) is the lexicographic layer-1 set.
        let cells = if k == 1 { children(1, 1) } else { children(winner.0, winner.1) };
        let stage = run_stage(codebook, sounder, k, &cells, statistic)?;
        winner = stage.winner;
        stages.push(stage);
    }
    let last = stages.last().expect("codebook has at least one layer");
    let final_value = last
        .probes
        .iter()
        .find(|p| (p.i, p.j) == winner)
        .map(|p| p.value(statistic))
        .unwrap_or(0.0);
    Ok(TrainingTrace {
        m: codebook.m,
        statistic,
        threshold,
        budget: 4 * stages.len(),
        stages,
        final_index: winner,
        final_value,
        detected: final_value > threshold,
        refinement: None,
    })
}

/// Weighted index mean over the available `(index, value)` points.
fn weighted_index(points: &[(f64, f64)], fallback: f64) -> f64 {
    let total: f64 = points.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return fallback;
    }
    points.iter().map(|p| p.0 * p.1).sum::<f64>() / total
}

/// Interpolate the winning narrow beam with its axis neighbors, probing the
/// two neighbors not tested during the last stage.
pub fn beam_refinement(
    trace: &mut TrainingTrace,
    codebook: &HierarchicalCodebook,
    sounder: &mut dyn Sounder,
    rule: InterpolationRule,
) -> Result<Refinement> {
    let big_k = codebook.depth();
    let last = trace
        .stages
        .last()
        .filter(|s| s.layer == big_k)
        .ok_or_else(|| Error::Domain("training trace has no final-layer stage".into()))?;
    let (ci, cj) = trace.final_index;
    let statistic = trace.statistic;
    let mut known: HashMap<(usize, usize), f64> =
        last.probes.iter().map(|p| ((p.i, p.j), p.value(statistic))).collect();

    let m = codebook.m as isize;
    let mut probes = Vec::new();
    let mut boundary = false;
    let axis_cells = [
        (ci as isize - 1, cj as isize),
        (ci as isize + 1, cj as isize),
        (ci as isize, cj as isize - 1),
        (ci as isize, cj as isize + 1),
    ];
    for (i, j) in axis_cells {
        if i < 1 || j < 1 || i > m || j > m {
            boundary = true;
            continue;
        }
        let key = (i as usize, j as usize);
        if let std::collections::hash_map::Entry::Vacant(e) = known.entry(key) {
            let cw = codebook.codeword(big_k, key.0, key.1)?;
            let s = sounder.sound(&cw.phases)?;
            let rec = ProbeRecord::new(big_k, key.0, key.1, &s);
            e.insert(rec.value(statistic));
            probes.push(rec);
        }
    }

    let center = known[&(ci, cj)];
    let axis = |cells: [(isize, isize); 2], idx: fn((isize, isize)) -> isize, c: usize| -> f64 {
        let mut pts: Vec<(f64, f64)> = cells
            .iter()
            .filter_map(|&cell| {
                let key = (usize::try_from(cell.0).ok()?, usize::try_from(cell.1).ok()?);
                known.get(&key).map(|&val| (idx(cell) as f64, val))
            })
            .collect();
        if rule == InterpolationRule::ThreePoint || pts.len() < 2 {
            pts.push((c as f64, center));
        }
        weighted_index(&pts, c as f64)
    };
    let i_br = axis([axis_cells[0], axis_cells[1]], |c| c.0, ci);
    let j_br = axis([axis_cells[2], axis_cells[3]], |c| c.1, cj);

    let refinement = Refinement { rule, probes, i_br, j_br, boundary };
    trace.budget += refinement.probes.len();
    trace.refinement = Some(refinement.clone());
    Ok(refinement)
}

/// Estimated normalized direction of the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    pub u_hat: f64,
    pub v_hat: f64,
}

impl DirectionEstimate {
    /// `ε_DR = π √((u - û)² + (v - v̂)²)`.
    pub fn eps_dr(&self, u: f64, v: f64) -> f64 {
        PI * ((u - self.u_hat).powi(2) + (v - self.v_hat).powi(2)).sqrt()
    }
}

/// `û = (2 i_BR - 1)/m - 1`, `v̂ = (2 j_BR - 1)/m - 1`.
pub fn direction_from_beam(i_br: f64, j_br: f64, m: usize) -> DirectionEstimate {
    DirectionEstimate {
        u_hat: (2.0 * i_br - 1.0) / m as f64 - 1.0,
        v_hat: (2.0 * j_br - 1.0) / m as f64 - 1.0,
    }
}
