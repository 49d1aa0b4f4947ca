use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::valid_xy;
use crate::error::{Error, Result};
use crate::space::{DesignMatrix, Matrix, Method, OutputMatrix, SensitivityResult};

/// R² below this is flagged as a poor linear fit.
pub const R2_RULE_OF_THUMB: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Intercept first.
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t_abs: Vec<f64>,
    pub r2: f64,
    pub r2_adj: f64,
    pub low_r2: bool,
    /// R² of the full quadratic model with pairwise interactions, if requested.
    pub r2_quadratic: Option<f64>,
    pub residuals: Vec<f64>,
}

struct LinearFit {
    beta: DVector<f64>,
    xtx_inv_diag: Vec<f64>,
    residuals: DVector<f64>,
}

fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearFit> {
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * diag_max) || diag_max == 0.0 {
        return Err(Error::Singular("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let p = x.ncols();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let xtx_inv_diag = (0..p).map(|i| r_inv.row(i).norm_squared()).collect();
    let residuals = y - x * &beta;
    Ok(LinearFit {
        beta,
        xtx_inv_diag,
        residuals,
    })
}

fn r_squared(y: &DVector<f64>, resid: &DVector<f64>) -> f64 {
    let m = y.mean();
    let sst: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    if sst == 0.0 {
        return 1.0;
    }
    (1.0 - resid.norm_squared() / sst).clamp(0.0, 1.0)
}

fn with_intercept(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) })
}

fn quadratic_terms(x: &Matrix) -> DMatrix<f64> {
    let k = x.ncols();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; x.nrows()]];
    for a in 0..k {
        cols.push(x.column(a));
    }
    for a in 0..k {
        for b in a..k {
            cols.push(x.rows_iter().map(|r| r[a] * r[b]).collect());
        }
    }
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| cols[j][i])
}

/// Least squares of the output on the mapped parameters plus intercept.
/// The measure for parameter `k` is `|beta_k / se_k|`.
pub fn ols_src(design: &DesignMatrix, out: &OutputMatrix, column: usize, quadratic: bool) -> Result<OlsFit> {
    let (x, y, _) = valid_xy(design, out, column, false)?;
    let (n, k) = (x.nrows(), x.ncols());
    if n < k + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} valid runs, OLS with {k} parameters needs at least {}",
            k + 2
        )));
    }
    let yv = DVector::from_vec(y);
    let lf = fit(&with_intercept(&x), &yv)?;
    let dof = (n - k - 1) as f64;
    let ssr = lf.residuals.norm_squared();
    // exact fits would give infinite t; keep them finite but very large
    let scale = yv.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let sigma2 = (ssr / dof).max(1e-30 * scale.max(f64::MIN_POSITIVE));
    let se: Vec<f64> = lf.xtx_inv_diag.iter().map(|d| (sigma2 * d).sqrt()).collect();
    let beta: Vec<f64> = lf.beta.iter().copied().collect();
    let t_abs = (1..=k).map(|j| (beta[j] / se[j]).abs()).collect();
    let r2 = r_squared(&yv, &lf.residuals);
    let r2_adj = 1.0 - (1.0 - r2) * (n - 1) as f64 / dof;
    let low_r2 = r2 < R2_RULE_OF_THUMB;
    if low_r2 {
        log::warn!("OLS R² = {r2:.3} is below {R2_RULE_OF_THUMB}; SRC ranking may be unreliable");
    }
    let r2_quadratic = if quadratic {
        let xq = quadratic_terms(&x);
        if xq.ncols() >= n {
            log::warn!("too few runs for the quadratic model ({n} runs, {} terms)", xq.ncols());
            None
        } else {
            Some(r_squared(&yv, &fit(&xq, &yv)?.residuals))
        }
    } else {
        None
    };
    Ok(OlsFit {
        beta,
        se,
        t_abs,
        r2,
        r2_adj,
        low_r2,
        r2_quadratic,
        residuals: lf.residuals.iter().copied().collect(),
    })
}

impl OlsFit {
    pub fn to_result(&self) -> Result<SensitivityResult> {
        let mut r = SensitivityResult::new(Method::RegSrc, self.t_abs.clone(), None)?
            .with_extra("beta", self.beta[1..].to_vec())
            .with_extra("r2", vec![self.r2]);
        if let Some(q) = self.r2_quadratic {
            r = r.with_extra("r2_quadratic", vec![q]);
        }
        Ok(r)
    }
}
