//! Ordinary least squares via Householder QR with column pivoting.
//!
//! Rank is decided by the pivot sequence: once the largest remaining
//! column norm falls to `tolerance * |R[0,0]|` or below, the remaining
//! columns are treated as linearly dependent. Depending on [`RankPolicy`]
//! that is either an error or the columns are dropped (coefficient absent).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::design::{ColumnLabel, DesignMatrix};
use crate::error::{Error, Result};

/// Relative pivot threshold for rank detection.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankPolicy {
    Error,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VcovKind {
    /// `s^2 (X'X)^-1`.
    Classical,
    /// HC0 sandwich `(X'X)^-1 X' diag(e^2) X (X'X)^-1`.
    Robust,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    /// Column descriptors copied from the design (empty for raw designs).
    pub labels: Vec<ColumnLabel>,
    /// One entry per design column; `None` for dropped columns.
    pub coefficients: Vec<Option<f64>>,
    pub rank: usize,
    pub dropped_columns: Vec<String>,
    /// Design column indices that were kept, ascending. The covariance
    /// matrices are indexed in this order.
    pub retained: Vec<usize>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub n: usize,
    vcov_classical: Option<DMatrix<f64>>,
    vcov_robust: DMatrix<f64>,
}

impl FitResult {
    pub fn coefficient(&self, label: &ColumnLabel) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .and_then(|k| self.coefficients[k])
    }

    pub fn coefficient_by_name(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|l| l == name)
            .and_then(|k| self.coefficients[k])
    }

    pub fn vcov(&self, kind: VcovKind) -> Result<&DMatrix<f64>> {
        match kind {
            VcovKind::Classical => self.vcov_classical.as_ref().ok_or(Error::DegreesOfFreedom {
                n: self.n,
                rank: self.rank,
            }),
            VcovKind::Robust => Ok(&self.vcov_robust),
        }
    }

    /// Standard errors aligned with `coefficients`.
    pub fn standard_errors(&self, kind: VcovKind) -> Result<Vec<Option<f64>>> {
        let v = self.vcov(kind)?;
        let mut out = vec![None; self.coefficients.len()];
        for (k, &col) in self.retained.iter().enumerate() {
            out[col] = Some(v[(k, k)].max(0.0).sqrt());
        }
        Ok(out)
    }

    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum()
    }

    /// JSON summary: coefficients, standard errors and covariance matrices
    /// over the retained columns. Residuals are omitted.
    pub fn to_json(&self) -> serde_json::Value {
        let se_c = self.standard_errors(VcovKind::Classical).ok();
        let se_r = self.standard_errors(VcovKind::Robust).unwrap_or_default();
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        let coefs: Vec<_> = self
            .names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                json!({
                    "name": name,
                    "estimate": self.coefficients[k],
                    "se_classical": se_c.as_ref().and_then(|s| s[k]),
                    "se_robust": se_r.get(k).copied().flatten(),
                })
            })
            .collect();
        json!({
            "n": self.n,
            "rank": self.rank,
            "rss": self.rss(),
            "coefficients": coefs,
            "dropped_columns": self.dropped_columns,
            "vcov_columns": self.retained.iter().map(|&k| &self.names[k]).collect::<Vec<_>>(),
            "vcov_classical": self.vcov_classical.as_ref().map(rows),
            "vcov_robust": rows(&self.vcov_robust),
        })
    }
}

pub fn fit(x: &DesignMatrix, y: &[f64], policy: RankPolicy) -> Result<FitResult> {
    fit_with_tolerance(x, y, policy, DEFAULT_RANK_TOLERANCE)
}

pub fn fit_with_tolerance(
    x: &DesignMatrix,
    y: &[f64],
    policy: RankPolicy,
    tolerance: f64,
) -> Result<FitResult> {
    let (n, p) = (x.nrows(), x.ncols());
    if n != y.len() {
        return Err(Error::invalid(format!(
            "design has {n} rows but the response has {} entries",
            y.len()
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::invalid("design must have at least one row and one column"));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("rank tolerance must be nonnegative"));
    }

    let qr = PivotedQr::new(&x.values, y, tolerance);
    let rank = qr.rank;
    let names = x.names().to_vec();
    let dropped: Vec<usize> = {
        let mut d = qr.perm[rank..].to_vec();
        d.sort_unstable();
        d
    };
    let dropped_columns: Vec<String> = dropped.iter().map(|&k| names[k].clone()).collect();
    if policy == RankPolicy::Error && !dropped.is_empty() {
        return Err(Error::RankDeficient {
            columns: dropped_columns,
        });
    }

    let beta_pivoted = qr.solve();
    let mut coefficients = vec![None; p];
    for (k, &col) in qr.perm[..rank].iter().enumerate() {
        coefficients[col] = Some(beta_pivoted[k]);
    }

    let mut fitted = vec![0.0; n];
    for (col, b) in coefficients.iter().enumerate() {
        if let Some(b) = b {
            for (i, v) in fitted.iter_mut().enumerate() {
                *v += x.values[(i, col)] * b;
            }
        }
    }
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();

    let mut retained = qr.perm[..rank].to_vec();
    retained.sort_unstable();
    let bread = qr.xtx_inverse(&retained);

    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let vcov_classical = (n > rank).then(|| &bread * (rss / (n - rank) as f64));

    let mut meat = DMatrix::zeros(rank, rank);
    for i in 0..n {
        let e2 = residuals[i] * residuals[i];
        if e2 == 0.0 {
            continue;
        }
        for a in 0..rank {
            let xa = x.values[(i, retained[a])] * e2;
            if xa == 0.0 {
                continue;
            }
            for b in a..rank {
                meat[(a, b)] += xa * x.values[(i, retained[b])];
            }
        }
    }
    for a in 0..rank {
        for b in 0..a {
            meat[(a, b)] = meat[(b, a)];
        }
    }
    let vcov_robust = symmetrize(&bread * meat * &bread);

    Ok(FitResult {
        names,
        labels: x.labels.clone(),
        coefficients,
        rank,
        dropped_columns,
        retained,
        residuals,
        fitted,
        n,
        vcov_classical: vcov_classical.map(symmetrize),
        vcov_robust,
    })
}

/// Free-function form of [`FitResult::vcov`].
pub fn vcov(fit: &FitResult, kind: VcovKind) -> Result<DMatrix<f64>> {
    fit.vcov(kind).cloned()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Householder QR of `A P = Q R` with `Q' y` accumulated alongside.
struct PivotedQr {
    /// Upper triangle holds `R`; below the diagonal is scratch.
    a: DMatrix<f64>,
    qty: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    fn new(x: &DMatrix<f64>, y: &[f64], tolerance: f64) -> Self {
        let (n, p) = (x.nrows(), x.ncols());
        let mut a = x.clone();
        let mut qty = y.to_vec();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut rank = 0;
        let mut largest = 0.0_f64;

        // Column-major storage: column j occupies data[j * n..(j + 1) * n].
        let mut norms2: Vec<f64> = (0..p).map(|j| a.column(j).norm_squared()).collect();
        for k in 0..n.min(p) {
            // Squared norms of the trailing parts, downdated and refreshed
            // when cancellation makes the downdate unreliable.
            let (mut best, mut best_norm2) = (k, -1.0);
            for (j, nj) in norms2.iter().enumerate().skip(k) {
                if *nj > best_norm2 {
                    best = j;
                    best_norm2 = *nj;
                }
            }
            let best_norm = a.view((k, best), (n - k, 1)).norm();
            if k == 0 {
                largest = best_norm;
            }
            if best_norm <= 0.0 || best_norm <= tolerance * largest {
                break;
            }
            if best != k {
                a.swap_columns(k, best);
                perm.swap(k, best);
                norms2.swap(k, best);
            }

            let data = a.as_mut_slice();
            let x0 = data[k * n + k];
            let alpha = if x0 >= 0.0 { -best_norm } else { best_norm };
            let mut v: Vec<f64> = data[k * n + k..(k + 1) * n].to_vec();
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|t| t * t).sum();
            if vtv > 0.0 {
                let reflect = |col: &mut [f64]| {
                    let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                    let s = 2.0 * dot / vtv;
                    for (c, vi) in col.iter_mut().zip(&v) {
                        *c -= s * vi;
                    }
                };
                for j in (k + 1)..p {
                    reflect(&mut data[j * n + k..(j + 1) * n]);
                }
                reflect(&mut qty[k..]);
            }
            data[k * n + k] = alpha;
            for x in &mut data[k * n + k + 1..(k + 1) * n] {
                *x = 0.0;
            }
            for j in (k + 1)..p {
                let top = data[j * n + k];
                let prev = norms2[j];
                norms2[j] = prev - top * top;
                if norms2[j] <= 1e-4 * prev {
                    norms2[j] = data[j * n + k + 1..(j + 1) * n].iter().map(|x| x * x).sum();
                }
            }
            rank = k + 1;
        }

        Self { a, qty, perm, rank }
    }

    fn solve(&self) -> Vec<f64> {
        let r = self.rank;
        let mut b = vec![0.0; r];
        for i in (0..r).rev() {
            let mut s = self.qty[i];
            for j in (i + 1)..r {
                s -= self.a[(i, j)] * b[j];
            }
            b[i] = s / self.a[(i, i)];
        }
        b
    }

    /// `(X_r' X_r)^-1` for the retained columns, in the order of `retained`.
    fn xtx_inverse(&self, retained: &[usize]) -> DMatrix<f64> {
        let r = self.rank;
        // Inverse of the leading r x r block of R by back substitution.
        let mut rinv = DMatrix::zeros(r, r);
        for c in 0..r {
            rinv[(c, c)] = 1.0 / self.a[(c, c)];
            for i in (0..c).rev() {
                let mut s = 0.0;
                for j in (i + 1)..=c {
                    s += self.a[(i, j)] * rinv[(j, c)];
                }
                rinv[(i, c)] = -s / self.a[(i, i)];
            }
        }
        let pivoted = &rinv * rinv.transpose();
        let pos: Vec<usize> = retained
            .iter()
            .map(|col| self.perm[..r].iter().position(|p| p == col).unwrap())
            .collect();
        DMatrix::from_fn(r, r, |i, j| pivoted[(pos[i], pos[j])])
    }
}
