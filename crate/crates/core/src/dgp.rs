//! The simulation design: randomized treatment, treated-friend counts and
//! outcomes generated from potential outcomes `Y^{dt}`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::rng::{child_seed, rng_from_seed, Stream};

/// Coefficients of the outcome equation
///
/// ```text
/// Y = b0 + bf F + (bd + bf2 ln F) D + (btau + br/F + bf2 ln F) T
///       + (bdtau + bdr/F + bf2 ln F) D T + U,   U ~ N(0, noise_sd^2)
/// ```
///
/// with `D ~ Bernoulli(p_treat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpParams {
    pub beta0: f64,
    pub beta_f: f64,
    pub beta_d: f64,
    pub beta_f2: f64,
    pub beta_tau: f64,
    pub beta_r: f64,
    pub beta_dtau: f64,
    pub beta_dr: f64,
    pub noise_sd: f64,
    pub p_treat: f64,
}

impl DgpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0) {
            return Err(Error::invalid(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(Error::invalid(format!(
                "p_treat must lie in (0, 1), got {}",
                self.p_treat
            )));
        }
        Ok(())
    }

    /// Per-friend effect on control units at friend count `f`.
    pub fn network_slope(&self, f: u32) -> f64 {
        let f = f as f64;
        self.beta_tau + self.beta_r / f + self.beta_f2 * f.ln()
    }

    /// Per-friend interaction effect at friend count `f`.
    pub fn interaction_slope(&self, f: u32) -> f64 {
        let f = f as f64;
        self.beta_dtau + self.beta_dr / f + self.beta_f2 * f.ln()
    }

    /// Direct effect of own treatment with no treated friends.
    pub fn direct_effect(&self, f: u32) -> f64 {
        self.beta_d + self.beta_f2 * (f as f64).ln()
    }
}

/// The four designs that switch individual coefficients on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// T-model (and TR-model) holds.
    #[serde(rename = "i")]
    I,
    /// R-model (and TR-model) holds.
    #[serde(rename = "ii")]
    II,
    /// Only the TR-model holds.
    #[serde(rename = "iii")]
    III,
    /// No linear model holds.
    #[serde(rename = "iv")]
    IV,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::I, Scenario::II, Scenario::III, Scenario::IV];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::I => "i",
            Scenario::II => "ii",
            Scenario::III => "iii",
            Scenario::IV => "iv",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" => Ok(Scenario::I),
            "ii" => Ok(Scenario::II),
            "iii" => Ok(Scenario::III),
            "iv" => Ok(Scenario::IV),
            other => Err(Error::invalid(format!(
                "unknown scenario `{other}` (expected i, ii, iii or iv)"
            ))),
        }
    }
}

pub fn dgp_scenario(id: Scenario) -> DgpParams {
    let base = DgpParams {
        beta0: 0.0,
        beta_f: -2.0,
        beta_d: 2.0,
        beta_f2: 0.0,
        beta_tau: 0.0,
        beta_r: 0.0,
        beta_dtau: 0.0,
        beta_dr: 0.0,
        noise_sd: 1.0,
        p_treat: 0.5,
    };
    match id {
        Scenario::I => DgpParams {
            beta_tau: 0.2,
            ..base
        },
        Scenario::II => DgpParams { beta_r: 2.0, ..base },
        Scenario::III => DgpParams {
            beta_tau: 0.2,
            beta_r: 2.0,
            beta_dtau: 0.2,
            beta_dr: 2.0,
            ..base
        },
        Scenario::IV => DgpParams {
            beta_f2: 0.4,
            beta_tau: 0.2,
            beta_r: 2.0,
            beta_dtau: 0.2,
            beta_dr: 2.0,
            ..base
        },
    }
}

/// I.i.d. Bernoulli(`p_treat`) treatment indicators.
pub fn assign_treatment(n: usize, p_treat: f64, seed: u64) -> Result<Vec<u8>> {
    if !(p_treat > 0.0 && p_treat < 1.0) {
        return Err(Error::invalid(format!("p_treat must lie in (0, 1), got {p_treat}")));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| u8::from(rng.random::<f64>() < p_treat)).collect())
}

/// `T_i`: the number of treated friends of each unit.
pub fn count_treated_neighbors(network: &Network, d: &[u8]) -> Result<Vec<u32>> {
    if d.len() != network.n() {
        return Err(Error::invalid(format!(
            "treatment vector has length {}, network has {} nodes",
            d.len(),
            network.n()
        )));
    }
    if let Some(bad) = d.iter().find(|&&v| v > 1) {
        return Err(Error::invalid(format!("treatment values must be 0 or 1, found {bad}")));
    }
    Ok((0..network.n())
        .map(|i| network.neighbors(i).iter().map(|&j| d[j as usize] as u32).sum())
        .collect())
}

/// `Y^{dt}` for a unit with `f` friends and noise draw `u`.
pub fn potential_outcome(params: &DgpParams, f: u32, d: u8, t: u32, u: f64) -> Result<f64> {
    if f < 1 {
        return Err(Error::invalid("friend count must be at least 1"));
    }
    if t > f {
        return Err(Error::invalid(format!("treated friends {t} exceed friend count {f}")));
    }
    if d > 1 {
        return Err(Error::invalid(format!("own treatment must be 0 or 1, got {d}")));
    }
    Ok(outcome_unchecked(params, f, d, t, u))
}

#[inline]
fn outcome_unchecked(p: &DgpParams, f: u32, d: u8, t: u32, u: f64) -> f64 {
    let (ff, dd, tt) = (f as f64, d as f64, t as f64);
    p.beta0
        + p.beta_f * ff
        + p.direct_effect(f) * dd
        + p.network_slope(f) * tt
        + p.interaction_slope(f) * dd * tt
        + u
}

/// One analysed unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub id: i64,
    pub y: f64,
    pub d: u8,
    pub t: u32,
    pub f: u32,
}

/// Units with at least one friend, ready for estimation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleFrame {
    pub rows: Vec<FrameRow>,
    /// Number of units before the `F > 0` selection.
    pub n_total: usize,
}

impl SampleFrame {
    /// Validates `t <= f`, `f >= 1` and `d` binary for every row.
    pub fn new(rows: Vec<FrameRow>, n_total: usize) -> Result<Self> {
        for (k, r) in rows.iter().enumerate() {
            if r.f < 1 || r.t > r.f || r.d > 1 {
                return Err(Error::invalid(format!(
                    "row {} (id {}) violates f >= 1, t <= f, d in {{0,1}}: d={}, t={}, f={}",
                    k + 1,
                    r.id,
                    r.d,
                    r.t,
                    r.f
                )));
            }
        }
        if rows.len() > n_total {
            return Err(Error::invalid("n_total is smaller than the number of rows"));
        }
        Ok(Self { rows, n_total })
    }

    pub fn n_selected(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn y(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn f_values(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.f).collect()
    }

    pub fn max_f(&self) -> u32 {
        self.rows.iter().map(|r| r.f).max().unwrap_or(0)
    }

    pub fn max_t(&self) -> u32 {
        self.rows.iter().map(|r| r.t).max().unwrap_or(0)
    }

    /// Rows with `F = f`, keeping `n_total`.
    pub fn filter_f(&self, f: u32) -> SampleFrame {
        SampleFrame {
            rows: self.rows.iter().filter(|r| r.f == f).copied().collect(),
            n_total: self.n_total,
        }
    }
}

/// Builds a frame from observed outcomes and treatments on a network,
/// keeping units with at least one friend.
pub fn frame_from_observations(
    network: &Network,
    ids: &[i64],
    y: &[f64],
    d: &[u8],
) -> Result<SampleFrame> {
    if ids.len() != network.n() || y.len() != network.n() {
        return Err(Error::invalid("ids, outcomes and network size disagree"));
    }
    let t = count_treated_neighbors(network, d)?;
    let rows = (0..network.n())
        .filter(|&i| network.degree(i) > 0)
        .map(|i| FrameRow {
            id: ids[i],
            y: y[i],
            d: d[i],
            t: t[i],
            f: network.degree(i),
        })
        .collect();
    SampleFrame::new(rows, network.n())
}

/// Potential outcomes of one retained unit: `y0[t] = Y^{0t}`, `y1[t] = Y^{1t}`
/// for `t = 0..=f`, all sharing the unit's noise draw `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitGrid {
    pub id: i64,
    pub f: u32,
    pub d: u8,
    pub t: u32,
    pub u: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl UnitGrid {
    pub fn y(&self, d: u8, t: u32) -> f64 {
        if d == 0 {
            self.y0[t as usize]
        } else {
            self.y1[t as usize]
        }
    }

    /// `Y^{1t} - Y^{10} - Y^{0t} + Y^{00}`.
    pub fn interaction(&self, t: u32) -> f64 {
        self.y(1, t) - self.y(1, 0) - self.y(0, t) + self.y(0, 0)
    }
}

/// Grids for the retained units, in frame order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialOutcomeGrid {
    pub units: Vec<UnitGrid>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub frame: SampleFrame,
    pub grid: Option<PotentialOutcomeGrid>,
    /// Treatment for all `n_total` units, before selection.
    pub treatment: Vec<u8>,
}

/// Draws treatments and noise for every unit of `network`, evaluates the
/// realized outcomes and keeps the units with `F > 0`.
pub fn simulate_frame(
    network: &Network,
    params: &DgpParams,
    seed: u64,
    track_grid: bool,
) -> Result<Simulation> {
    params.validate()?;
    let n = network.n();
    let treatment = assign_treatment(n, params.p_treat, child_seed(seed, Stream::Treatment))?;
    let t = count_treated_neighbors(network, &treatment)?;

    let mut rng = rng_from_seed(child_seed(seed, Stream::Noise));
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.noise_sd * z
        })
        .collect();

    let mut rows = Vec::new();
    let mut units = Vec::new();
    for i in 0..n {
        let f = network.degree(i);
        if f == 0 {
            continue;
        }
        let (d, ti, u) = (treatment[i], t[i], noise[i]);
        rows.push(FrameRow {
            id: i as i64,
            y: outcome_unchecked(params, f, d, ti, u),
            d,
            t: ti,
            f,
        });
        if track_grid {
            units.push(UnitGrid {
                id: i as i64,
                f,
                d,
                t: ti,
                u,
                y0: (0..=f).map(|s| outcome_unchecked(params, f, 0, s, u)).collect(),
                y1: (0..=f).map(|s| outcome_unchecked(params, f, 1, s, u)).collect(),
            });
        }
    }

    Ok(Simulation {
        frame: SampleFrame { rows, n_total: n },
        grid: track_grid.then_some(PotentialOutcomeGrid { units }),
        treatment,
    })
}

/// Average effects of own treatment, of one more treated friend, and of the
/// interaction, over a friend-count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub direct: f64,
    pub network: f64,
    pub interaction: f64,
}

pub fn true_aggregate_effects(params: &DgpParams, f_values: &[u32]) -> Result<TrueEffects> {
    if f_values.is_empty() {
        return Err(Error::invalid("f_values must be nonempty"));
    }
    if f_values.contains(&0) {
        return Err(Error::invalid("f_values must all be >= 1"));
    }
    let n = f_values.len() as f64;
    let mean = |g: &dyn Fn(u32) -> f64| f_values.iter().map(|&f| g(f)).sum::<f64>() / n;
    Ok(TrueEffects {
        direct: mean(&|f| params.direct_effect(f)),
        network: mean(&|f| params.network_slope(f)),
        interaction: mean(&|f| params.interaction_slope(f)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treatment_is_deterministic() {
        assert_eq!(assign_treatment(4, 0.5, 8).unwrap(), assign_treatment(4, 0.5, 8).unwrap());
    }

    #[test]
    fn treatment_rate_matches_probability() {
        // Binomial(1e5, 0.5)/1e5 has sd 0.0016; 0.005 is ~3 sd.
        let d = assign_treatment(100_000, 0.5, 77).unwrap();
        let mean = d.iter().map(|&v| v as f64).sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn treatment_probability_bounds() {
        assert!(assign_treatment(3, 1.0, 0).is_err());
        assert!(assign_treatment(3, 0.0, 0).is_err());
    }

    #[test]
    fn star_center_counts_treated_leaves() {
        let net = Network::from_edges(4, vec![(0, 1), (0, 2), (0, 3)], None).unwrap();
        let t = count_treated_neighbors(&net, &[0, 1, 1, 0]).unwrap();
        assert_eq!(t, vec![2, 0, 0, 0]);
        assert_eq!(count_treated_neighbors(&net, &[0; 4]).unwrap(), vec![0; 4]);
        assert!(count_treated_neighbors(&net, &[0; 3]).is_err());
    }

    #[test]
    fn outcome_hand_values() {
        let p1 = dgp_scenario(Scenario::I);
        assert_eq!(potential_outcome(&p1, 3, 1, 0, 0.0).unwrap(), -4.0);

        let p4 = dgp_scenario(Scenario::IV);
        let l2 = 2f64.ln();
        let expected = -4.0 + (2.0 + 0.4 * l2) + (0.2 + 1.0 + 0.4 * l2) + (0.2 + 1.0 + 0.4 * l2);
        let got = potential_outcome(&p4, 2, 1, 1, 0.0).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - 1.2318).abs() < 1e-4);
    }

    #[test]
    fn noise_is_additive() {
        let p = dgp_scenario(Scenario::III);
        let a = potential_outcome(&p, 4, 1, 3, 0.0).unwrap();
        let b = potential_outcome(&p, 4, 1, 3, 5.0).unwrap();
        assert_eq!(b - a, 5.0);
    }

    #[test]
    fn outcome_domain_errors() {
        let p = dgp_scenario(Scenario::I);
        assert!(potential_outcome(&p, 2, 0, 3, 0.0).is_err());
        assert!(potential_outcome(&p, 0, 0, 0, 0.0).is_err());
    }

    #[test]
    fn scenario_presets() {
        let s1 = dgp_scenario(Scenario::I);
        assert_eq!(s1.beta_tau, 0.2);
        assert_eq!((s1.beta_f2, s1.beta_r, s1.beta_dtau, s1.beta_dr), (0.0, 0.0, 0.0, 0.0));
        let s2 = dgp_scenario(Scenario::II);
        assert_eq!((s2.beta_r, s2.beta_tau), (2.0, 0.0));
        let s4 = dgp_scenario(Scenario::IV);
        for v in [s4.beta_f2, s4.beta_tau, s4.beta_r, s4.beta_dtau, s4.beta_dr] {
            assert!(v != 0.0);
        }
        for s in Scenario::ALL {
            let p = dgp_scenario(s);
            assert_eq!((p.beta0, p.beta_f, p.beta_d, p.noise_sd, p.p_treat), (0.0, -2.0, 2.0, 1.0, 0.5));
        }
        assert!("v".parse::<Scenario>().is_err());
        assert_eq!("IV".parse::<Scenario>().unwrap(), Scenario::IV);
    }

    #[test]
    fn true_effects_reduce_without_heterogeneity() {
        let te = true_aggregate_effects(&dgp_scenario(Scenario::I), &[1, 4, 9, 2]).unwrap();
        assert!((te.direct - 2.0).abs() < 1e-15);
        assert!((te.network - 0.2).abs() < 1e-15);
        assert_eq!(te.interaction, 0.0);
        assert!(true_aggregate_effects(&dgp_scenario(Scenario::I), &[]).is_err());
    }

    #[test]
    fn empty_network_gives_empty_frame() {
        let net = Network::from_edges(5, vec![], None).unwrap();
        let sim = simulate_frame(&net, &dgp_scenario(Scenario::I), 1, true).unwrap();
        assert_eq!(sim.frame.n_selected(), 0);
        assert_eq!(sim.frame.n_total, 5);
    }

    #[test]
    fn realized_outcome_sits_on_grid() {
        let pos = crate::graph::generate_positions(400, 3).unwrap();
        let net = crate::graph::build_geometric_network(&pos, 0.08).unwrap();
        let sim = simulate_frame(&net, &dgp_scenario(Scenario::IV), 9, true).unwrap();
        let grid = sim.grid.unwrap();
        assert_eq!(grid.units.len(), sim.frame.n_selected());
        for (row, g) in sim.frame.rows.iter().zip(&grid.units) {
            assert_eq!(row.y, g.y(row.d, row.t));
            assert_eq!(g.y0.len(), row.f as usize + 1);
            assert_eq!(
                row.y,
                potential_outcome(&dgp_scenario(Scenario::IV), row.f, row.d, row.t, g.u).unwrap()
            );
        }
    }
}
