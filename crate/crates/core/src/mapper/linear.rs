use std::path::{Path, PathBuf};

use nalgebra::{ColPivQR, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnchorSet;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::lm::{read_f32_file, write_f32_file};

/// Space name of tables produced by [`apply_map`].
pub const INPUT_SPACE: &str = "input";

/// Above this condition number of the normal matrix, `Auto` switches from
/// Cholesky on the normal equations to a column-pivoted QR of the
/// (ridge-augmented) design matrix.
pub const QR_CONDITION_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Auto,
    Normal,
    Qr,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fit an unpenalized intercept row as well.
    pub bias: bool,
    pub solver: Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInfo {
    pub d_src: usize,
    pub d_tgt: usize,
    pub ridge_lambda: f64,
    pub fit_residual: f64,
    pub anchor_count: usize,
    #[serde(default)]
    pub bias: bool,
    /// Factorization actually used: `normal` or `qr`.
    #[serde(default)]
    pub solver: Option<Solver>,
    #[serde(default)]
    pub condition_number: Option<f64>,
}

/// `v ↦ vW (+ b)` from the pooled space into the input space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    w: DMatrix<f64>,
    bias: Option<Vec<f64>>,
    info: MapInfo,
}

impl LinearMap {
    /// Wraps a given `d_src x d_tgt` matrix.
    pub fn from_matrix(w: DMatrix<f64>, bias: Option<Vec<f64>>) -> Result<LinearMap> {
        if w.iter().any(|x| !x.is_finite()) || bias.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("map has non-finite entries".into()));
        }
        if let Some(b) = &bias {
            if b.len() != w.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: w.ncols(),
                    found: b.len(),
                });
            }
        }
        let info = MapInfo {
            d_src: w.nrows(),
            d_tgt: w.ncols(),
            ridge_lambda: 0.0,
            fit_residual: 0.0,
            anchor_count: 0,
            bias: bias.is_some(),
            solver: None,
            condition_number: None,
        };
        Ok(LinearMap { w, bias, info })
    }

    pub fn identity(d: usize) -> LinearMap {
        LinearMap::from_matrix(DMatrix::identity(d, d), None).expect("finite")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn info(&self) -> &MapInfo {
        &self.info
    }

    pub fn d_src(&self) -> usize {
        self.w.nrows()
    }

    pub fn d_tgt(&self) -> usize {
        self.w.ncols()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d_src() {
            return Err(Error::DimensionMismatch {
                expected: self.d_src(),
                found: v.len(),
            });
        }
        Ok((0..self.d_tgt())
            .map(|j| {
                let dot: f64 = v.iter().enumerate().map(|(i, x)| x * self.w[(i, j)]).sum();
                dot + self.bias.as_ref().map_or(0.0, |b| b[j])
            })
            .collect())
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes `W` row-major as little-endian f32 (then the bias row, if any)
    /// and the metadata to `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut values: Vec<f32> = Vec::with_capacity(self.w.len() + self.d_tgt());
        for i in 0..self.d_src() {
            values.extend(self.w.row(i).iter().map(|&x| x as f32));
        }
        values.extend(self.bias.iter().flatten().map(|&x| x as f32));
        write_f32_file(path, values)?;
        let side = LinearMap::sidecar(path);
        let json = serde_json::to_string_pretty(&self.info)?;
        std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<LinearMap> {
        let side = LinearMap::sidecar(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let info: MapInfo = serde_json::from_str(&text)?;
        let rows = info.d_src + usize::from(info.bias);
        let values = read_f32_file(path, rows * info.d_tgt)?;
        let w = DMatrix::from_fn(info.d_src, info.d_tgt, |i, j| f64::from(values[i * info.d_tgt + j]));
        let bias = info
            .bias
            .then(|| values[info.d_src * info.d_tgt..].iter().map(|&x| f64::from(x)).collect());
        let mut m = LinearMap::from_matrix(w, bias)?;
        m.info = info;
        Ok(m)
    }
}

fn design(anchors: &AnchorSet, bias: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = anchors.pairs();
    let d = anchors.d_src();
    let a = DMatrix::from_fn(p.len(), d + usize::from(bias), |i, j| if j < d { p[i].source[j] } else { 1.0 });
    let b = DMatrix::from_fn(p.len(), anchors.d_tgt(), |i, j| p[i].target[j]);
    (a, b)
}

/// `argmin ‖AW − B‖²_F + λ‖W‖²_F` with rows of A the anchor sources and rows
/// of B the anchor targets.
pub fn fit_linear_map(anchors: &AnchorSet, ridge_lambda: f64, opts: FitOptions) -> Result<LinearMap> {
    if anchors.is_empty() {
        return Err(Error::Invalid("no anchors to fit".into()));
    }
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(Error::Invalid(format!("ridge penalty must be finite and >= 0, got {ridge_lambda}")));
    }
    let d = anchors.d_src();
    let (a, b) = design(anchors, opts.bias);
    let k = a.ncols();
    let mut g = a.tr_mul(&a);
    for j in 0..d {
        g[(j, j)] += ridge_lambda;
    }
    let eig = g.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if !(min > k as f64 * f64::EPSILON * max) {
        return Err(Error::Singular);
    }
    let condition = max / min;
    let use_qr = match opts.solver {
        Solver::Qr => true,
        Solver::Normal => false,
        Solver::Auto => condition > QR_CONDITION_THRESHOLD,
    };
    let x = if use_qr {
        solve_qr(&a, &b, d, ridge_lambda)?
    } else {
        let rhs = a.tr_mul(&b);
        g.cholesky().ok_or(Error::Singular)?.solve(&rhs)
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let fit_residual = (&a * &x - &b).norm();
    let w = x.rows(0, d).into_owned();
    let bias = opts.bias.then(|| x.row(d).iter().copied().collect());
    let mut m = LinearMap::from_matrix(w, bias)?;
    m.info = MapInfo {
        d_src: d,
        d_tgt: anchors.d_tgt(),
        ridge_lambda,
        fit_residual,
        anchor_count: anchors.len(),
        bias: opts.bias,
        solver: Some(if use_qr { Solver::Qr } else { Solver::Normal }),
        condition_number: Some(condition),
    };
    Ok(m)
}

/// Least squares on `[A; √λ I] X = [B; 0]` via column-pivoted Householder QR.
fn solve_qr(a: &DMatrix<f64>, b: &DMatrix<f64>, d: usize, lambda: f64) -> Result<DMatrix<f64>> {
    let (n, k) = a.shape();
    let extra = if lambda > 0.0 { d } else { 0 };
    let mut aug = DMatrix::zeros(n + extra, k);
    aug.rows_mut(0, n).copy_from(a);
    for j in 0..extra {
        aug[(n + j, j)] = lambda.sqrt();
    }
    let mut rhs = DMatrix::zeros(n + extra, b.ncols());
    rhs.rows_mut(0, n).copy_from(b);
    if aug.nrows() < k {
        return Err(Error::Singular);
    }
    let qr = ColPivQR::new(aug);
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let top = r.diagonal().amax();
    if r.diagonal().iter().any(|x| x.abs() <= top * f64::EPSILON * (n + extra) as f64) {
        return Err(Error::Singular);
    }
    let mut x = r
        .solve_upper_triangular(&rhs.rows(0, k).into_owned())
        .ok_or(Error::Singular)?;
    qr.p().inv_permute_rows(&mut x);
    Ok(x)
}

/// Maps every vector of a pooled-space table into the input space; keys and
/// order are preserved.
pub fn apply_map(m: &LinearMap, t: &EmbeddingTable) -> Result<EmbeddingTable> {
    if t.dim() != m.d_src() {
        return Err(Error::DimensionMismatch {
            expected: m.d_src(),
            found: t.dim(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..t.len())
        .into_par_iter()
        .map(|i| m.apply(t.row(i)))
        .collect::<Result<_>>()?;
    let mut out = EmbeddingTable::new(INPUT_SPACE, m.d_tgt(), t.order())?;
    for (key, v) in t.keys().iter().zip(rows) {
        out.push(key.clone(), v)?;
    }
    Ok(out)
}
