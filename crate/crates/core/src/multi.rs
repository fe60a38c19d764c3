//! Multi-target training: thresholded multi-branch descent, distance-normalized
//! ranking of the final cells, per-area refinement and FGS scheduling.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codebook::{children, HierarchicalCodebook};
use crate::error::{Error, Result};
use crate::detection::{normalized_delay_spectrum, Statistic};
use crate::training::{
    beam_refinement, direction_from_beam, DirectionEstimate, InterpolationRule, ProbeRecord, Refinement, Sounder,
    StageRecord, TrainingTrace,
};

/// Default maximum number of branches kept per stage.
pub const DEFAULT_BRANCH_CAP: usize = 16;

/// One probe of the multi-branch descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiProbe {
    pub record: ProbeRecord,
    /// Distance-normalized DSP read at the raw DSP's peak bin.
    pub normalized_dsp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStage {
    pub layer: usize,
    pub probes: Vec<MultiProbe>,
    /// Cells kept for the next stage, strongest first.
    pub survivors: Vec<(usize, usize)>,
}

/// A final-layer cell declared to hold a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub index: (usize, usize),
    pub dsp: f64,
    pub normalized_dsp: f64,
    pub refinement: Option<Refinement>,
}

impl Area {
    pub fn direction(&self, m: usize) -> DirectionEstimate {
        match &self.refinement {
            Some(r) => direction_from_beam(r.i_br, r.j_br, m),
            None => direction_from_beam(self.index.0 as f64, self.index.1 as f64, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTrace {
    pub m: usize,
    pub threshold: f64,
    pub stages: Vec<MultiStage>,
    pub areas: Vec<Area>,
    /// Fewer than the requested number of areas survived.
    pub shortfall: bool,
    pub budget: usize,
}

/// Options for [`multi_hbt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiOptions {
    pub targets: usize,
    pub threshold: f64,
    pub eps_r2g: f64,
    pub branch_cap: usize,
    pub rule: InterpolationRule,
}

/// Multi-branch descent. Every stage probes the children of all surviving
/// cells (the four layer-1 cells at stage 1) and keeps those whose DSP
/// exceeds the threshold, at most `branch_cap` of them by DSP. Final cells
/// that are not local maxima of the normalized DSP among their surviving
/// 8-neighbors are merged into the neighbor; the `targets` strongest
/// remaining cells by normalized DSP are refined.
pub fn multi_hbt(codebook: &HierarchicalCodebook, sounder: &mut dyn Sounder, opts: &MultiOptions) -> Result<MultiTrace> {
    if opts.targets == 0 {
        return Err(Error::Config("target count must be at least 1".into()));
    }
    if opts.branch_cap == 0 {
        return Err(Error::Config("branch cap must be at least 1".into()));
    }
    let big_k = codebook.depth();
    let mut stages = Vec::with_capacity(big_k);
    let mut parents: Vec<(usize, usize)> = Vec::new();
    let mut budget = 0;
    for k in 1..=big_k {
        let cells: Vec<(usize, usize)> = if k == 1 {
            children(1, 1).to_vec()
        } else {
            parents.iter().flat_map(|&(i, j)| children(i, j)).collect()
        };
        let mut probes = Vec::with_capacity(cells.len());
        for (i, j) in cells {
            let cw = codebook.codeword(k, i, j)?;
            let s = sounder.sound(&cw.phases)?;
            budget += 1;
            let normalized_dsp = normalized_delay_spectrum(&s.spectrum, opts.eps_r2g)[s.bin];
            probes.push(MultiProbe { record: ProbeRecord::new(k, i, j, &s), normalized_dsp });
        }
        let mut kept: Vec<&MultiProbe> = probes.iter().filter(|p| p.record.dsp > opts.threshold).collect();
        // Stable sort keeps probe order among equal DSPs.
        kept.sort_by(|a, b| b.record.dsp.total_cmp(&a.record.dsp));
        kept.truncate(opts.branch_cap);
        let survivors: Vec<(usize, usize)> = kept.iter().map(|p| (p.record.i, p.record.j)).collect();
        parents = survivors.clone();
        stages.push(MultiStage { layer: k, probes, survivors });
        if parents.is_empty() {
            break;
        }
    }

    let mut areas = Vec::new();
    if let Some(last) = stages.last().filter(|s| s.layer == big_k) {
        let by_cell: HashMap<(usize, usize), &MultiProbe> =
            last.probes.iter().map(|p| ((p.record.i, p.record.j), p)).collect();
        let survivors: Vec<&MultiProbe> = last.survivors.iter().map(|c| by_cell[c]).collect();
        let is_peak = |p: &MultiProbe| {
            let (i, j) = (p.record.i as isize, p.record.j as isize);
            survivors.iter().all(|q| {
                let (a, b) = (q.record.i as isize, q.record.j as isize);
                let adjacent = (a - i).abs() <= 1 && (b - j).abs() <= 1 && (a, b) != (i, j);
                !adjacent
                    || q.normalized_dsp < p.normalized_dsp
                    || (q.normalized_dsp == p.normalized_dsp && (a, b) > (i, j))
            })
        };
        let mut peaks: Vec<&MultiProbe> = survivors.iter().copied().filter(|p| is_peak(p)).collect();
        peaks.sort_by(|a, b| b.normalized_dsp.total_cmp(&a.normalized_dsp));
        peaks.truncate(opts.targets);
        areas = peaks
            .iter()
            .map(|p| Area {
                index: (p.record.i, p.record.j),
                dsp: p.record.dsp,
                normalized_dsp: p.normalized_dsp,
                refinement: None,
            })
            .collect();

        let final_probes: Vec<ProbeRecord> = last.probes.iter().map(|p| p.record.clone()).collect();
        for area in &mut areas {
            let mut trace = TrainingTrace {
                m: codebook.m,
                statistic: Statistic::Dsp,
                threshold: opts.threshold,
                stages: vec![StageRecord { layer: big_k, probes: final_probes.clone(), winner: area.index }],
                final_index: area.index,
                final_value: area.dsp,
                detected: true,
                refinement: None,
                budget: 0,
            };
            let r = beam_refinement(&mut trace, codebook, sounder, opts.rule)?;
            budget += r.probes.len();
            area.refinement = Some(r);
        }
    }
    let shortfall = areas.len() < opts.targets;
    Ok(MultiTrace { m: codebook.m, threshold: opts.threshold, stages, areas, shortfall, budget })
}

/// Contiguous FGS blocks `(offset, length)`: `floor(T_FG / A)` symbols per
/// beam with the remainder added to the last block.
pub fn multi_fgs_schedule(t_fg: usize, a: usize) -> Result<Vec<(usize, usize)>> {
    if a == 0 || t_fg < a {
        return Err(Error::Config(format!("cannot split {t_fg} FGS symbols across {a} beams")));
    }
    let base = t_fg / a;
    Ok((0..a)
        .map(|b| {
            let len = if b + 1 == a { t_fg - base * (a - 1) } else { base };
            (b * base, len)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::crlb_rv;
    use crate::codebook::{beam_center, build_codebook, frame_gain};
    use crate::detection::DelaySpectrum;
    use crate::geometry::{C64, SPEED_OF_LIGHT};
    use crate::training::{hbt_3d, Sounding};

    /// Noiseless sounder with point targets `(u, v, range, amplitude)`: each
    /// target contributes `amp · |b^H w|⁴` at its delay bin.
    struct Points {
        targets: Vec<(f64, f64, f64, f64)>,
        n_q: usize,
        delta_f: f64,
        count: usize,
    }

    impl Sounder for Points {
        fn sound(&mut self, w: &[C64]) -> Result<Sounding> {
            let mut values = vec![0.0; self.n_q];
            for &(u, v, d, amp) in &self.targets {
                let tau = 2.0 * d / SPEED_OF_LIGHT;
                let bin = (tau * self.delta_f * self.n_q as f64).round() as usize;
                values[bin] += amp * frame_gain(w, u, v).powi(4);
            }
            let spectrum = DelaySpectrum { values, delta_f: self.delta_f };
            let (dsp, bin) = crate::detection::dsp_statistic(&spectrum);
            self.count += 1;
            Ok(Sounding { symbol: self.count - 1, dsp, bin, rss: dsp, spectrum })
        }
    }

    fn opts(targets: usize, threshold: f64, eps: f64) -> MultiOptions {
        MultiOptions { targets, threshold, eps_r2g: eps, branch_cap: DEFAULT_BRANCH_CAP, rule: InterpolationRule::ThreePoint }
    }

    #[test]
    fn schedule_blocks() {
        assert_eq!(multi_fgs_schedule(42, 2).unwrap(), vec![(0, 21), (21, 21)]);
        assert_eq!(multi_fgs_schedule(43, 2).unwrap(), vec![(0, 21), (21, 22)]);
        assert_eq!(multi_fgs_schedule(5, 5).unwrap().len(), 5);
        assert!(multi_fgs_schedule(1, 2).is_err());
        assert!(multi_fgs_schedule(4, 0).is_err());
    }

    #[test]
    fn block_length_velocity_penalty() {
        let (_, v_full) = crlb_rv(1.0, 64, 42, 120e3, 8.9e-6, 28.5e9).unwrap();
        let (_, v_half) = crlb_rv(1.0, 64, 21, 120e3, 8.9e-6, 28.5e9).unwrap();
        let want = (42.0 * (42.0f64 * 42.0 - 1.0)) / (21.0 * (21.0f64 * 21.0 - 1.0));
        assert!((v_half / v_full / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_target_matches_hbt() {
        let cb = build_codebook(16).unwrap();
        for (u, v) in [(0.11, -0.23), (-0.4, 0.31), (0.02, 0.45)] {
            let mk = || Points { targets: vec![(u, v, 10.0, 1.0)], n_q: 200, delta_f: 120e3, count: 0 };
            let single = hbt_3d(&cb, &mut mk(), Statistic::Dsp, 0.0).unwrap();
            let multi = multi_hbt(&cb, &mut mk(), &opts(1, 0.0, 2.2)).unwrap();
            assert_eq!(multi.areas.len(), 1);
            assert_eq!(multi.areas[0].index, single.final_index);
            assert!(!multi.shortfall);
        }
    }

    #[test]
    fn two_targets_recovered_with_distance_normalization() {
        let m = 16;
        let cb = build_codebook(m).unwrap();
        let eps = 2.2;
        let (c1, c2) = ((5, 6), (12, 10));
        // Amplitudes follow d^{-2ε}: raw DSPs differ by 2^{2ε}.
        let targets = vec![
            (beam_center(4, c1.0), beam_center(4, c1.1), 5.0, 5f64.powf(-2.0 * eps)),
            (beam_center(4, c2.0), beam_center(4, c2.1), 10.0, 10f64.powf(-2.0 * eps)),
        ];
        let mut s = Points { targets, n_q: 500, delta_f: 120e3, count: 0 };
        let trace = multi_hbt(&cb, &mut s, &opts(2, 0.0, eps)).unwrap();
        let mut got: Vec<_> = trace.areas.iter().map(|a| a.index).collect();
        got.sort();
        assert_eq!(got, vec![c1, c2]);
        let (a, b) = (trace.areas[0].normalized_dsp, trace.areas[1].normalized_dsp);
        assert!((a / b - 1.0).abs() < 0.01, "{a} vs {b}");
        let (ra, rb) = (trace.areas[0].dsp, trace.areas[1].dsp);
        assert!((ra.max(rb) / ra.min(rb) / 2f64.powf(2.0 * eps) - 1.0).abs() < 0.01);
        assert!(trace.stages.iter().all(|st| st.survivors.len() <= DEFAULT_BRANCH_CAP));
    }

    #[test]
    fn branch_growth_bounded() {
        let cb = build_codebook(16).unwrap();
        let mut s = Points { targets: vec![(0.1, 0.1, 10.0, 1.0)], n_q: 200, delta_f: 120e3, count: 0 };
        let trace = multi_hbt(&cb, &mut s, &opts(1, 0.0, 0.0)).unwrap();
        for w in trace.stages.windows(2) {
            assert!(w[1].probes.len() <= 4 * w[0].survivors.len());
        }
    }

    #[test]
    fn shortfall_when_nothing_survives() {
        let cb = build_codebook(8).unwrap();
        let mut s = Points { targets: vec![(0.1, 0.1, 10.0, 1.0)], n_q: 200, delta_f: 120e3, count: 0 };
        let trace = multi_hbt(&cb, &mut s, &opts(2, f64::INFINITY, 0.0)).unwrap();
        assert!(trace.shortfall);
        assert!(trace.areas.is_empty());
        assert_eq!(trace.stages.len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fgs_blocks_tile_the_budget(t_fg in 1usize..200, a in 1usize..8) {
                prop_assume!(a <= t_fg);
                let blocks = multi_fgs_schedule(t_fg, a).unwrap();
                prop_assert_eq!(blocks.len(), a);
                let mut next = 0;
                for &(offset, len) in &blocks {
                    prop_assert_eq!(offset, next);
                    prop_assert!(len >= t_fg / a);
                    next += len;
                }
                prop_assert_eq!(next, t_fg);
            }
        }
    }
}
