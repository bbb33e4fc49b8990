//! Design matrices for the linear network-effect models and the causal
//! reduced forms.
//!
//! Column order is fixed per model:
//!
//! | spec | columns |
//! |------|---------|
//! | `t` | `1, D, T, F` |
//! | `r` | `1, D, T/F, F` |
//! | `tr` | `1, F, D, T, T/F, D*T, D*T/F` |
//! | `crf2:J,t_order` | `F^j`, `D*F^j`, `T*F^j`, `D*T*F^j` (then `T^2*F^j`, `D*T^2*F^j`), `j = 0..=J` |
//! | `crf1long:f_max,t_max` | per `f = 1..=f_max`: `1[F=f]`, `D*1[F=f]`, `1[T=t]*1[F=f]`, `D*1[T=t]*1[F=f]` for `t = 1..=min(f, t_max)` |
//! | `crf1short:f` | `1, D, 1[T=t]`, `D*1[T=t]` for `t = 1..=f` |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgp::SampleFrame;
use crate::error::{Error, Result};
use crate::lsq::RankPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelSpec {
    TModel,
    RModel,
    TrModel,
    /// Power series of order `j` in `F`, order `t_order` (1 or 2) in `T`.
    Crf2 { j: u32, t_order: u32 },
    /// Saturated dummies for every `(F, T)` cell, pooled over `F`.
    Crf1Long { f_max: u32, t_max: u32 },
    /// Saturated dummies within the `F = f` subsample.
    Crf1Short { f: u32 },
}

impl ModelSpec {
    /// The CRF2 estimator of the simulation study (quadratic in `F`).
    pub const CRF2_QUADRATIC: ModelSpec = ModelSpec::Crf2 { j: 2, t_order: 1 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Crf2 { t_order, .. } if !(1..=2).contains(&t_order) => {
                Err(Error::invalid(format!("t_order must be 1 or 2, got {t_order}")))
            }
            ModelSpec::Crf1Long { f_max, t_max } if f_max < 1 || t_max < 1 => {
                Err(Error::invalid("crf1long needs f_max >= 1 and t_max >= 1"))
            }
            ModelSpec::Crf1Short { f } if f < 1 => Err(Error::invalid("crf1short needs f >= 1")),
            _ => Ok(()),
        }
    }

    /// Linear models must not be silently altered; saturated designs
    /// legitimately contain empty cells.
    pub fn default_rank_policy(&self) -> RankPolicy {
        match self {
            ModelSpec::Crf1Long { .. } | ModelSpec::Crf1Short { .. } => RankPolicy::Drop,
            _ => RankPolicy::Error,
        }
    }

    /// Short name used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelSpec::TModel => "T-OLS",
            ModelSpec::RModel => "R-OLS",
            ModelSpec::TrModel => "TR-OLS",
            ModelSpec::Crf2 { .. } => "CRF-OLS",
            ModelSpec::Crf1Long { .. } => "CRF1-long",
            ModelSpec::Crf1Short { .. } => "CRF1-short",
        }
    }

    pub fn columns(&self) -> Vec<ColumnLabel> {
        use FFactor::{Level as FL, Power as FP};
        use TFactor::{Level as TL, Power as TP};
        let col = |treated, t, f| ColumnLabel { treated, t, f };
        match *self {
            ModelSpec::TModel => vec![
                col(false, TP(0), FP(0)),
                col(true, TP(0), FP(0)),
                col(false, TP(1), FP(0)),
                col(false, TP(0), FP(1)),
            ],
            // F enters as a control, as in the T model.
            ModelSpec::RModel => vec![
                col(false, TP(0), FP(0)),
                col(true, TP(0), FP(0)),
                col(false, TP(1), FP(-1)),
                col(false, TP(0), FP(1)),
            ],
            ModelSpec::TrModel => vec![
                col(false, TP(0), FP(0)),
                col(false, TP(0), FP(1)),
                col(true, TP(0), FP(0)),
                col(false, TP(1), FP(0)),
                col(false, TP(1), FP(-1)),
                col(true, TP(1), FP(0)),
                col(true, TP(1), FP(-1)),
            ],
            ModelSpec::Crf2 { j, t_order } => {
                let mut blocks = vec![(false, 0), (true, 0), (false, 1), (true, 1)];
                if t_order >= 2 {
                    blocks.extend([(false, 2), (true, 2)]);
                }
                blocks
                    .into_iter()
                    .flat_map(|(treated, tp)| {
                        (0..=j as i32).map(move |p| col(treated, TP(tp), FP(p)))
                    })
                    .collect()
            }
            ModelSpec::Crf1Long { f_max, t_max } => (1..=f_max)
                .flat_map(|f| {
                    let ts = 1..=f.min(t_max);
                    [col(false, TP(0), FL(f)), col(true, TP(0), FL(f))]
                        .into_iter()
                        .chain(ts.clone().map(move |t| col(false, TL(t), FL(f))))
                        .chain(ts.map(move |t| col(true, TL(t), FL(f))))
                })
                .collect(),
            ModelSpec::Crf1Short { f } => [col(false, TP(0), FP(0)), col(true, TP(0), FP(0))]
                .into_iter()
                .chain((1..=f).map(|t| col(false, TL(t), FP(0))))
                .chain((1..=f).map(|t| col(true, TL(t), FP(0))))
                .collect(),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::TModel => write!(f, "t"),
            ModelSpec::RModel => write!(f, "r"),
            ModelSpec::TrModel => write!(f, "tr"),
            ModelSpec::Crf2 { j, t_order } => write!(f, "crf2:J={j},t_order={t_order}"),
            ModelSpec::Crf1Long { f_max, t_max } => {
                write!(f, "crf1long:f_max={f_max},t_max={t_max}")
            }
            ModelSpec::Crf1Short { f: ff } => write!(f, "crf1short:f={ff}"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let unknown = || Error::UnknownSpec(s.to_string());
        let (head, args) = match s.split_once(':') {
            Some((h, a)) => (h, a),
            None => (s, ""),
        };
        let mut kv = BTreeMap::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(unknown)?;
            let v: u32 = v.trim().parse().map_err(|_| unknown())?;
            if kv.insert(k.trim().to_ascii_lowercase(), v).is_some() {
                return Err(unknown());
            }
        }
        let take = |kv: &mut BTreeMap<String, u32>, key: &str| kv.remove(key);

        let spec = match head.to_ascii_lowercase().as_str() {
            "t" => ModelSpec::TModel,
            "r" => ModelSpec::RModel,
            "tr" => ModelSpec::TrModel,
            "crf2" => ModelSpec::Crf2 {
                j: take(&mut kv, "j").unwrap_or(2),
                t_order: take(&mut kv, "t_order").unwrap_or(1),
            },
            "crf1long" => ModelSpec::Crf1Long {
                f_max: take(&mut kv, "f_max").ok_or_else(unknown)?,
                t_max: take(&mut kv, "t_max").ok_or_else(unknown)?,
            },
            "crf1short" => ModelSpec::Crf1Short {
                f: take(&mut kv, "f").ok_or_else(unknown)?,
            },
            _ => return Err(unknown()),
        };
        if !kv.is_empty() {
            return Err(unknown());
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a column depends on `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TFactor {
    Power(u32),
    Level(u32),
}

/// How a column depends on `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FFactor {
    Power(i32),
    Level(u32),
}

/// A column is `D^treated * g(T) * h(F)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColumnLabel {
    pub treated: bool,
    pub t: TFactor,
    pub f: FFactor,
}

impl ColumnLabel {
    pub fn eval(&self, d: u8, t: u32, f: u32) -> f64 {
        let dv = if self.treated { d as f64 } else { 1.0 };
        let tv = match self.t {
            TFactor::Power(k) => (t as f64).powi(k as i32),
            TFactor::Level(s) => f64::from(u8::from(t == s)),
        };
        let fv = match self.f {
            FFactor::Power(k) => (f as f64).powi(k),
            FFactor::Level(g) => f64::from(u8::from(f == g)),
        };
        dv * tv * fv
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.treated {
            parts.push("D".to_string());
        }
        match self.t {
            TFactor::Power(0) => {}
            TFactor::Power(1) => parts.push("T".into()),
            TFactor::Power(k) => parts.push(format!("T^{k}")),
            TFactor::Level(s) => parts.push(format!("1[T={s}]")),
        }
        let mut name = match self.f {
            FFactor::Power(0) => parts.join("*"),
            FFactor::Power(-1) => {
                let num = if parts.is_empty() { "1".to_string() } else { parts.join("*") };
                return format!("{num}/F");
            }
            FFactor::Power(1) => {
                parts.push("F".into());
                parts.join("*")
            }
            FFactor::Power(k) => {
                parts.push(format!("F^{k}"));
                parts.join("*")
            }
            FFactor::Level(g) => {
                parts.push(format!("1[F={g}]"));
                parts.join("*")
            }
        };
        if name.is_empty() {
            name.push('1');
        }
        name
    }
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    /// Structured descriptors; empty for designs built from raw columns.
    pub labels: Vec<ColumnLabel>,
    names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<ColumnLabel>) -> Result<Self> {
        if values.ncols() != labels.len() {
            return Err(Error::invalid("label count does not match column count"));
        }
        let names = labels.iter().map(ColumnLabel::name).collect();
        Ok(Self { values, labels, names })
    }

    /// A design over raw columns named `x0, x1, ...`.
    pub fn from_columns(values: DMatrix<f64>) -> Self {
        let names = (0..values.ncols()).map(|k| format!("x{k}")).collect();
        Self {
            values,
            labels: Vec::new(),
            names,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, label: &ColumnLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

pub fn build_design(frame: &SampleFrame, spec: &ModelSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    if frame.is_empty() {
        return Err(Error::invalid("cannot build a design from an empty frame"));
    }
    for (k, r) in frame.rows.iter().enumerate() {
        if r.f < 1 {
            return Err(Error::invalid(format!("row {} has F = 0", k + 1)));
        }
        match *spec {
            ModelSpec::Crf1Long { f_max, t_max } if r.f > f_max || r.t > t_max => {
                return Err(Error::OutOfSupport(format!(
                    "row {} (id {}) has F = {}, T = {} outside f_max = {f_max}, t_max = {t_max}",
                    k + 1,
                    r.id,
                    r.f,
                    r.t
                )));
            }
            ModelSpec::Crf1Short { f } if r.f != f => {
                return Err(Error::OutOfSupport(format!(
                    "row {} (id {}) has F = {}; crf1short expects only F = {f}",
                    k + 1,
                    r.id,
                    r.f
                )));
            }
            _ => {}
        }
    }

    let labels = spec.columns();
    let values = DMatrix::from_fn(frame.rows.len(), labels.len(), |i, c| {
        let r = &frame.rows[i];
        labels[c].eval(r.d, r.t, r.f)
    });
    DesignMatrix::new(values, labels)
}

/// Partition of the frame by friend count, ascending in `f`.
pub fn split_by_f(frame: &SampleFrame) -> Vec<(u32, SampleFrame)> {
    let mut groups: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for r in &frame.rows {
        groups.entry(r.f).or_default().push(*r);
    }
    groups
        .into_iter()
        .map(|(f, rows)| {
            (
                f,
                SampleFrame {
                    rows,
                    n_total: frame.n_total,
                },
            )
        })
        .collect()
}
