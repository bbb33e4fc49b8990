//! From coefficients to conditional causal effects.
//!
//! Every model implies, for each friend count `f` and treated-friend count
//! `t`, four functions:
//!
//! * `baseline(f)   = E(Y^{00} | F=f)`
//! * `delta0(f)     = E(Y^{10} - Y^{00} | F=f)`
//! * `tau0(f, t)    = E(Y^{0t} - Y^{00} | F=f)`
//! * `tau_pm(f, t)  = E(Y^{1t} - Y^{10} - Y^{0t} + Y^{00} | F=f)`
//!
//! Each is a fixed linear combination of the fitted coefficients (see
//! [`effect_weights`]). The remaining two effects follow from the identities
//! `tau1 = tau0 + tau_pm` and `delta_t = delta0 + tau_pm`.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::design::{ColumnLabel, FFactor, ModelSpec, TFactor};
use crate::dgp::{PotentialOutcomeGrid, SampleFrame};
use crate::lsq::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Baseline,
    Delta0,
    Tau0,
    TauPm,
}

/// Coefficient weights of `effect` at `(f, t)` under `spec`, or `None`
/// when `(f, t)` lies outside the model's support.
pub fn effect_weights(spec: &ModelSpec, effect: Effect, f: u32, t: u32) -> Option<Vec<(ColumnLabel, f64)>> {
    use FFactor::{Level as FL, Power as FP};
    use TFactor::Power as TP;
    if f < 1 || t > f {
        return None;
    }
    let col = |treated, tf, ff| ColumnLabel { treated, t: tf, f: ff };
    let (fv, tv) = (f as f64, t as f64);

    let w = match (*spec, effect) {
        (ModelSpec::TModel | ModelSpec::RModel, Effect::Baseline) => {
            vec![(col(false, TP(0), FP(0)), 1.0), (col(false, TP(0), FP(1)), fv)]
        }
        (ModelSpec::TModel, Effect::Delta0)
        | (ModelSpec::RModel, Effect::Delta0)
        | (ModelSpec::TrModel, Effect::Delta0) => vec![(col(true, TP(0), FP(0)), 1.0)],
        (ModelSpec::TModel, Effect::Tau0) => vec![(col(false, TP(1), FP(0)), tv)],
        (ModelSpec::TModel | ModelSpec::RModel, Effect::TauPm) => vec![],
        (ModelSpec::RModel, Effect::Tau0) => vec![(col(false, TP(1), FP(-1)), tv / fv)],
        (ModelSpec::TrModel, Effect::Baseline) => {
            vec![(col(false, TP(0), FP(0)), 1.0), (col(false, TP(0), FP(1)), fv)]
        }
        (ModelSpec::TrModel, Effect::Tau0) => vec![
            (col(false, TP(1), FP(0)), tv),
            (col(false, TP(1), FP(-1)), tv / fv),
        ],
        (ModelSpec::TrModel, Effect::TauPm) => vec![
            (col(true, TP(1), FP(0)), tv),
            (col(true, TP(1), FP(-1)), tv / fv),
        ],
        (ModelSpec::Crf2 { j, t_order }, e) => {
            let powers = move |treated: bool, tp: u32, scale: f64| {
                (0..=j as i32).map(move |p| (col(treated, TP(tp), FP(p)), scale * fv.powi(p)))
            };
            match e {
                Effect::Baseline => powers(false, 0, 1.0).collect(),
                Effect::Delta0 => powers(true, 0, 1.0).collect(),
                Effect::Tau0 | Effect::TauPm => {
                    let treated = e == Effect::TauPm;
                    let mut w: Vec<_> = powers(treated, 1, tv).collect();
                    if t_order >= 2 {
                        w.extend(powers(treated, 2, tv * tv));
                    }
                    w
                }
            }
        }
        (ModelSpec::Crf1Long { f_max, t_max }, e) => {
            if f > f_max || t > t_max {
                return None;
            }
            cell_weights(e, t, FL(f))
        }
        (ModelSpec::Crf1Short { f: f0 }, e) => {
            if f != f0 {
                return None;
            }
            cell_weights(e, t, FP(0))
        }
    };
    Some(w)
}

fn cell_weights(effect: Effect, t: u32, ff: FFactor) -> Vec<(ColumnLabel, f64)> {
    let col = |treated, tf| ColumnLabel { treated, t: tf, f: ff };
    match effect {
        Effect::Baseline => vec![(col(false, TFactor::Power(0)), 1.0)],
        Effect::Delta0 => vec![(col(true, TFactor::Power(0)), 1.0)],
        Effect::Tau0 if t == 0 => vec![],
        Effect::TauPm if t == 0 => vec![],
        Effect::Tau0 => vec![(col(false, TFactor::Level(t)), 1.0)],
        Effect::TauPm => vec![(col(true, TFactor::Level(t)), 1.0)],
    }
}

/// `sum_k w_k beta_k`; `None` if any coefficient needed is absent.
fn combine(fit: &FitResult, weights: &[(ColumnLabel, f64)]) -> Option<f64> {
    weights
        .iter()
        .try_fold(0.0, |acc, (label, w)| fit.coefficient(label).map(|b| acc + w * b))
}

pub fn evaluate_effect(fit: &FitResult, spec: &ModelSpec, effect: Effect, f: u32, t: u32) -> Option<f64> {
    effect_weights(spec, effect, f, t).and_then(|w| combine(fit, &w))
}

/// `(tau1, delta_t)` from `(delta0, tau0, tau_pm)`.
pub fn complete_effects(delta0: f64, tau0: f64, tau_pm: f64) -> (f64, f64) {
    (tau0 + tau_pm, delta0 + tau_pm)
}

/// Level interaction effect at `t* = changes.len()` from the per-step
/// change effects `E(Y^{1s} - Y^{1,s-1} - Y^{0s} + Y^{0,s-1} | F)`,
/// `s = 1..=t*`. The sum telescopes; an empty list gives 0.
pub fn telescope_level_from_changes(changes: &[f64]) -> f64 {
    changes.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEntry {
    pub f: u32,
    pub t: u32,
    pub delta0: Option<f64>,
    pub tau0: Option<f64>,
    pub tau_pm: Option<f64>,
    pub tau1: Option<f64>,
    pub delta_t: Option<f64>,
    pub baseline: Option<f64>,
}

impl EffectEntry {
    fn from_parts(f: u32, t: u32, baseline: Option<f64>, delta0: Option<f64>, tau0: Option<f64>, tau_pm: Option<f64>) -> Self {
        let tau1 = tau0.zip(tau_pm).map(|(a, b)| a + b);
        let delta_t = delta0.zip(tau_pm).map(|(a, b)| a + b);
        Self {
            f,
            t,
            delta0,
            tau0,
            tau_pm,
            tau1,
            delta_t,
            baseline,
        }
    }
}

/// Frame-level averages of the per-friend effects.
///
/// * `direct`: mean of `delta0(F_i)` over units.
/// * `network`: mean over units of `m0(F_i)`, where `m0(f)` is the average of
///   `tau0(f, t) / t` over `t = 1..=f`.
/// * `interaction`: the same with `tau_pm`.
///
/// For models linear in `t`, `m0(f)` is the slope of `tau0` in `t`.
/// Units whose effects are absent are skipped and counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub direct: Option<f64>,
    pub network: Option<f64>,
    pub interaction: Option<f64>,
    pub skipped_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub spec: ModelSpec,
    pub entries: Vec<EffectEntry>,
    /// Requested `(f, t)` pairs outside the model's support.
    pub flagged: Vec<(u32, u32)>,
    pub aggregates: Option<Aggregates>,
}

impl EffectTable {
    pub fn get(&self, f: u32, t: u32) -> Option<&EffectEntry> {
        self.entries.iter().find(|e| e.f == f && e.t == t)
    }
}

/// Effects at every `(f, t)` of the grids with `1 <= t <= f`.
pub fn recover_effect_table(fit: &FitResult, spec: &ModelSpec, f_grid: &[u32], t_grid: &[u32]) -> EffectTable {
    let mut entries = Vec::new();
    let mut flagged = Vec::new();
    for &f in f_grid {
        for &t in t_grid {
            if t < 1 || t > f {
                continue;
            }
            let get = |e| evaluate_effect(fit, spec, e, f, t);
            if effect_weights(spec, Effect::Delta0, f, t).is_none() {
                flagged.push((f, t));
                continue;
            }
            entries.push(EffectEntry::from_parts(
                f,
                t,
                get(Effect::Baseline),
                get(Effect::Delta0),
                get(Effect::Tau0),
                get(Effect::TauPm),
            ));
        }
    }
    EffectTable {
        spec: *spec,
        entries,
        flagged,
        aggregates: None,
    }
}

/// Effect table over the frame's friend counts (`t = 1..=max F`) with
/// frame-level [`Aggregates`].
pub fn recover_effect_table_for_frame(fit: &FitResult, spec: &ModelSpec, frame: &SampleFrame) -> EffectTable {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for r in &frame.rows {
        *counts.entry(r.f).or_default() += 1;
    }
    let f_grid: Vec<u32> = counts.keys().copied().collect();
    let t_grid: Vec<u32> = (1..=frame.max_f()).collect();
    let mut table = recover_effect_table(fit, spec, &f_grid, &t_grid);
    table.aggregates = Some(aggregate_effects(fit, spec, &counts));
    table
}

fn aggregate_effects(fit: &FitResult, spec: &ModelSpec, counts: &BTreeMap<u32, usize>) -> Aggregates {
    let per_friend = |effect: Effect, f: u32| -> Option<f64> {
        let vals: Vec<f64> = (1..=f)
            .filter_map(|t| evaluate_effect(fit, spec, effect, f, t).map(|v| v / t as f64))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };

    let avg = |g: &dyn Fn(u32) -> Option<f64>| -> (Option<f64>, usize) {
        let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
        for (&f, &c) in counts {
            match g(f) {
                Some(v) => {
                    sum += v * c as f64;
                    n += c;
                }
                None => skipped += c,
            }
        }
        ((n > 0).then(|| sum / n as f64), skipped)
    };

    let (direct, s1) = avg(&|f| evaluate_effect(fit, spec, Effect::Delta0, f, 0));
    let (network, s2) = avg(&|f| per_friend(Effect::Tau0, f));
    let (interaction, s3) = avg(&|f| per_friend(Effect::TauPm, f));
    let skipped = s1.max(s2).max(s3);
    if skipped > 0 {
        warn!("{spec}: {skipped} units lack some effect values and were skipped in aggregates");
    }
    Aggregates {
        direct,
        network,
        interaction,
        skipped_units: skipped,
    }
}

/// Mean and count of `y` in one `(d, t, f)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub mean: f64,
    pub count: usize,
}

/// Cell means keyed by `(d, t, f)`.
pub fn cell_means(frame: &SampleFrame) -> BTreeMap<(u8, u32, u32), CellMean> {
    let mut acc: BTreeMap<(u8, u32, u32), (f64, usize)> = BTreeMap::new();
    for r in &frame.rows {
        let e = acc.entry((r.d, r.t, r.f)).or_default();
        e.0 += r.y;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, c))| (k, CellMean { mean: s / c as f64, count: c }))
        .collect()
}

/// Sample means of potential-outcome contrasts over the units with `F = f`,
/// computed straight from the tracked grid. `None` when no unit has `F = f`
/// or `t > f`.
pub fn grid_effect_entry(grid: &PotentialOutcomeGrid, f: u32, t: u32) -> Option<EffectEntry> {
    if t > f {
        return None;
    }
    let units: Vec<_> = grid.units.iter().filter(|u| u.f == f).collect();
    if units.is_empty() {
        return None;
    }
    let n = units.len() as f64;
    let mean = |g: &dyn Fn(&crate::dgp::UnitGrid) -> f64| units.iter().map(|u| g(u)).sum::<f64>() / n;
    Some(EffectEntry {
        f,
        t,
        baseline: Some(mean(&|u| u.y(0, 0))),
        delta0: Some(mean(&|u| u.y(1, 0) - u.y(0, 0))),
        tau0: Some(mean(&|u| u.y(0, t) - u.y(0, 0))),
        tau_pm: Some(mean(&|u| u.interaction(t))),
        tau1: Some(mean(&|u| u.y(1, t) - u.y(1, 0))),
        delta_t: Some(mean(&|u| u.y(1, t) - u.y(0, t))),
    })
}

/// Per-step change interaction effects at `F = f`, `s = 1..=f`, as sample
/// means over the grid. Empty when no unit has `F = f`.
pub fn grid_change_effects(grid: &PotentialOutcomeGrid, f: u32) -> Vec<f64> {
    let units: Vec<_> = grid.units.iter().filter(|u| u.f == f).collect();
    if units.is_empty() {
        return Vec::new();
    }
    let n = units.len() as f64;
    (1..=f)
        .map(|s| {
            units
                .iter()
                .map(|u| u.y(1, s) - u.y(1, s - 1) - u.y(0, s) + u.y(0, s - 1))
                .sum::<f64>()
                / n
        })
        .collect()
}
