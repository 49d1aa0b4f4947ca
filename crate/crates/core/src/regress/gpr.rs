//! Gaussian-process emulator with a linear trend and power-exponential
//! correlation `exp(-sum_k |d_k|^alpha / gamma_k)` on unit-cube inputs.
//!
//! The range parameters are fitted by maximising the profile likelihood
//!
//! ```text
//! l(gamma) = -n/2 log(sigma2_hat) - 1/2 log|R|
//! ```
//!
//! with Nelder-Mead in `log gamma` over a box, restarted from seeded
//! random points.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::valid_xy;
use crate::error::{Error, Result};
use crate::space::{DesignMatrix, Matrix, Method, OutputMatrix, SensitivityResult};
use crate::stats::{pop_variance, stream_rng};

const JITTERS: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    /// Larger designs are subsampled to this many runs.
    pub max_n: usize,
    pub alpha: f64,
    pub restarts: usize,
    /// Relative tolerance on the likelihood spread of the simplex.
    pub tol: f64,
    /// Likelihood evaluations per restart; `None` uses `200 * (K + 1)`.
    pub max_evals: Option<usize>,
    /// Search box for the range parameters.
    pub range_bounds: (f64, f64),
    pub seed: u64,
}

impl GprConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            max_n: 500,
            alpha: 1.9,
            restarts: 8,
            tol: 1e-6,
            max_evals: None,
            range_bounds: (1e-3, 1e3),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprFit {
    /// Intercept first, slopes on unit-cube inputs.
    pub trend_beta: Vec<f64>,
    pub trend_src_abs: Vec<f64>,
    pub ranges: Vec<f64>,
    pub inv_range_norm: Vec<f64>,
    pub alpha_exp: f64,
    pub log_lik: f64,
    pub sigma2: f64,
    /// Diagonal jitter needed to factor the correlation matrix.
    pub jitter: f64,
    /// Design rows used for the fit.
    pub subsample_idx: Vec<usize>,
}

/// Pairwise `|d|^alpha` per dimension for the upper triangle.
struct Distances {
    n: usize,
    k: usize,
    /// `pairs[(i, j) index][k]`, upper triangle row by row
    pow: Vec<f64>,
}

impl Distances {
    fn new(x: &Matrix, alpha: f64) -> Self {
        let (n, k) = (x.nrows(), x.ncols());
        let mut pow = Vec::with_capacity(n * (n - 1) / 2 * k);
        for i in 0..n {
            for j in i + 1..n {
                for d in 0..k {
                    pow.push((x.get(i, d) - x.get(j, d)).abs().powf(alpha));
                }
            }
        }
        Self { n, k, pow }
    }

    fn correlation(&self, inv_ranges: &[f64]) -> DMatrix<f64> {
        let mut r = DMatrix::identity(self.n, self.n);
        let mut p = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let s: f64 = self.pow[p..p + self.k].iter().zip(inv_ranges).map(|(a, b)| a * b).sum();
                let v = (-s).exp();
                r[(i, j)] = v;
                r[(j, i)] = v;
                p += self.k;
            }
        }
        r
    }
}

fn factor(r: DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    for &j in &JITTERS {
        let mut m = r.clone();
        if j > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += j;
            }
        }
        if let Some(c) = Cholesky::new(m) {
            return Some((c, j));
        }
    }
    None
}

struct Profile {
    log_lik: f64,
    beta: DVector<f64>,
    sigma2: f64,
    jitter: f64,
}

struct Problem {
    dist: Distances,
    f: DMatrix<f64>,
    y: DVector<f64>,
    sigma2_floor: f64,
}

impl Problem {
    fn new(x: &Matrix, y: &[f64], alpha: f64) -> Self {
        let (n, k) = (x.nrows(), x.ncols());
        let f = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
        let v = pop_variance(y);
        Self {
            dist: Distances::new(x, alpha),
            f,
            y: DVector::from_column_slice(y),
            sigma2_floor: 1e-14 * v.max(f64::MIN_POSITIVE),
        }
    }

    fn profile(&self, ranges: &[f64]) -> Option<Profile> {
        let inv: Vec<f64> = ranges.iter().map(|g| 1.0 / g).collect();
        let (chol, jitter) = factor(self.dist.correlation(&inv))?;
        let n = self.y.len() as f64;
        let rif = chol.solve(&self.f);
        let riy = chol.solve(&self.y);
        let a = self.f.transpose() * &rif;
        let b = self.f.transpose() * &riy;
        let beta = a.lu().solve(&b)?;
        let resid = &self.y - &self.f * &beta;
        let rir = chol.solve(&resid);
        let sigma2 = (resid.dot(&rir) / n).max(self.sigma2_floor);
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_lik = -0.5 * n * sigma2.ln() - 0.5 * log_det;
        log_lik.is_finite().then_some(Profile {
            log_lik,
            beta,
            sigma2,
            jitter,
        })
    }
}

/// Profile log-likelihood of a range vector on unit-cube inputs, `None`
/// when the correlation matrix cannot be factored even with jitter.
pub fn profile_log_likelihood(x_unit: &Matrix, y: &[f64], alpha: f64, ranges: &[f64]) -> Option<f64> {
    Problem::new(x_unit, y, alpha).profile(ranges).map(|p| p.log_lik)
}

/// Correlation matrix at the given ranges, without jitter.
pub fn correlation_matrix(x_unit: &Matrix, alpha: f64, ranges: &[f64]) -> DMatrix<f64> {
    let inv: Vec<f64> = ranges.iter().map(|g| 1.0 / g).collect();
    Distances::new(x_unit, alpha).correlation(&inv)
}

struct NmResult {
    x: Vec<f64>,
    f: f64,
    converged: bool,
}

/// Nelder-Mead minimisation with trial points projected onto the box.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], lo: f64, hi: f64, step: f64, tol: f64, max_evals: usize) -> NmResult {
    let d = start.len();
    let clamp = |v: Vec<f64>| v.into_iter().map(|x| x.clamp(lo, hi)).collect::<Vec<_>>();
    let mut simplex: Vec<Vec<f64>> = vec![clamp(start.to_vec())];
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] += if p[i] + step <= hi { step } else { -step };
        simplex.push(clamp(p));
    }
    let mut fv: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut evals = d + 1;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();
        let (best, worst) = (fv[0], fv[d]);
        if worst.is_finite() && (worst - best).abs() <= tol * (best.abs() + tol) {
            return NmResult {
                x: simplex.swap_remove(0),
                f: best,
                converged: true,
            };
        }
        if evals >= max_evals {
            return NmResult {
                x: simplex.swap_remove(0),
                f: best,
                converged: false,
            };
        }
        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64).collect();
        let toward = |t: f64| -> Vec<f64> {
            clamp(centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (w - c)).collect())
        };
        let xr = toward(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < fv[0] {
            let xe = toward(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
        } else if fr < fv[d - 1] {
            simplex[d] = xr;
            fv[d] = fr;
        } else {
            let (xc, fc) = if fr < fv[d] {
                let xc = toward(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = toward(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < fv[d].min(fr) {
                simplex[d] = xc;
                fv[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = clamp(simplex[0].iter().zip(&simplex[i]).map(|(b, p)| b + 0.5 * (p - b)).collect());
                    fv[i] = f(&simplex[i]);
                }
                evals += d;
            }
        }
    }
}

/// Fits the emulator and reports absolute trend slopes and normalised
/// inverse ranges. Slopes are per unit of the scaled input, so they are
/// comparable across parameters.
pub fn fit_gpr(design: &DesignMatrix, out: &OutputMatrix, column: usize, cfg: &GprConfig) -> Result<GprFit> {
    if !(cfg.alpha > 0.0 && cfg.alpha <= 2.0) {
        return Err(Error::Config(format!("power exponent {} not in (0, 2]", cfg.alpha)));
    }
    let (lo_r, hi_r) = cfg.range_bounds;
    if !(lo_r > 0.0 && hi_r > lo_r) {
        return Err(Error::Config("invalid range bounds".into()));
    }
    let (x_all, y_all, idx_all) = valid_xy(design, out, column, true)?;
    let k = x_all.ncols();
    if y_all.len() < k + 2 {
        return Err(Error::InsufficientData(format!(
            "{} valid runs, the GP trend with {k} parameters needs {}",
            y_all.len(),
            k + 2
        )));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let pick: Vec<usize> = if y_all.len() > cfg.max_n {
        let mut v = sample(&mut rng, y_all.len(), cfg.max_n).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..y_all.len()).collect()
    };
    let x = x_all.select_rows(&pick);
    let y: Vec<f64> = pick.iter().map(|&i| y_all[i]).collect();
    let subsample_idx: Vec<usize> = pick.iter().map(|&i| idx_all[i]).collect();

    let problem = Problem::new(&x, &y, cfg.alpha);
    let (lo, hi) = (lo_r.ln(), hi_r.ln());
    let objective = |t: &[f64]| {
        let ranges: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        problem.profile(&ranges).map_or(f64::INFINITY, |p| -p.log_lik)
    };
    let max_evals = cfg.max_evals.unwrap_or(200 * (k + 1));
    let step = 0.1 * (hi - lo);
    let mut best: Option<NmResult> = None;
    let mut any_converged = false;
    for r in 0..cfg.restarts.max(1) {
        let start: Vec<f64> = if r == 0 {
            vec![0.5 * (lo + hi); k]
        } else {
            (0..k).map(|_| rng.random_range(lo..hi)).collect()
        };
        let res = nelder_mead(&objective, &start, lo, hi, step, cfg.tol, max_evals);
        any_converged |= res.converged;
        if best.as_ref().is_none_or(|b| res.f < b.f) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one restart");
    let ranges: Vec<f64> = best.x.iter().map(|v| v.exp()).collect();
    let prof = problem
        .profile(&ranges)
        .ok_or_else(|| Error::Conditioning("correlation matrix is singular even with jitter".into()))?;
    if !any_converged {
        return Err(Error::MaxIterations {
            iterations: max_evals,
            best_log_lik: prof.log_lik,
            best_ranges: ranges,
        });
    }
    if prof.jitter > 0.0 {
        log::debug!("GP correlation matrix needed jitter {}", prof.jitter);
    }
    let inv: Vec<f64> = ranges.iter().map(|g| 1.0 / g).collect();
    let total: f64 = inv.iter().sum();
    let trend_beta: Vec<f64> = prof.beta.iter().copied().collect();
    Ok(GprFit {
        trend_src_abs: trend_beta[1..].iter().map(|b| b.abs()).collect(),
        trend_beta,
        inv_range_norm: inv.iter().map(|v| v / total).collect(),
        ranges,
        alpha_exp: cfg.alpha,
        log_lik: prof.log_lik,
        sigma2: prof.sigma2,
        jitter: prof.jitter,
        subsample_idx,
    })
}

impl GprFit {
    pub fn to_results(&self) -> Result<(SensitivityResult, SensitivityResult)> {
        let slope = SensitivityResult::new(Method::GprSlope, self.trend_src_abs.clone(), None)?
            .with_extra("beta", self.trend_beta[1..].to_vec());
        let inv = SensitivityResult::new(Method::GprInvRange, self.inv_range_norm.clone(), None)?
            .with_extra("ranges", self.ranges.clone());
        Ok((slope, inv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{lhs_maximin, LhsConfig};
    use crate::space::ParameterSpace;

    fn data<F: Fn(&[f64]) -> f64>(k: usize, n: usize, f: F) -> (DesignMatrix, OutputMatrix) {
        let d = lhs_maximin(&ParameterSpace::unit(k).unwrap(), &LhsConfig::new(n, 21)).unwrap();
        let y = d.unit.rows_iter().map(f).collect();
        (d, OutputMatrix::single("y", y).unwrap())
    }

    #[test]
    fn linear_trend_recovered() {
        let a = [2.0, -1.0, 0.5];
        let (d, o) = data(3, 120, |x| 1.0 + a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>());
        let mut cfg = GprConfig::new(3);
        cfg.restarts = 2;
        let g = fit_gpr(&d, &o, 0, &cfg).unwrap();
        for (b, a) in g.trend_beta[1..].iter().zip(a) {
            assert!((b - a).abs() < 1e-3);
        }
        assert!((g.inv_range_norm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // flat residual field pushes every range to the large end
        assert!(g.ranges.iter().all(|r| *r > 10.0), "{:?}", g.ranges);
    }

    #[test]
    fn inert_input_has_smallest_inverse_range() {
        let (d, o) = data(3, 80, |x| (4.0 * x[0]).sin() + x[1] * x[1]);
        let mut cfg = GprConfig::new(1);
        cfg.restarts = 3;
        let g = fit_gpr(&d, &o, 0, &cfg).unwrap();
        let min = g.inv_range_norm.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(g.inv_range_norm[2], min);
        assert!((g.inv_range_norm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimum_beats_random_starts() {
        let (d, o) = data(2, 60, |x| (3.0 * x[0]).cos() * x[1] + x[0]);
        let cfg = GprConfig::new(7);
        let g = fit_gpr(&d, &o, 0, &cfg).unwrap();
        let y = o.column(0).unwrap();
        let mut rng = stream_rng(99, 0);
        let (lo, hi) = (cfg.range_bounds.0.ln(), cfg.range_bounds.1.ln());
        for _ in 0..32 {
            let r: Vec<f64> = (0..2).map(|_| rng.random_range(lo..hi).exp()).collect();
            if let Some(ll) = profile_log_likelihood(&d.unit, &y, cfg.alpha, &r) {
                assert!(g.log_lik >= ll - 1e-9, "{} < {ll}", g.log_lik);
            }
        }
        let mut r = correlation_matrix(&d.unit, cfg.alpha, &g.ranges);
        assert_eq!(r, r.transpose());
        for i in 0..r.nrows() {
            r[(i, i)] += g.jitter;
        }
        assert!(Cholesky::new(r).is_some());
    }

    #[test]
    fn subsampling_and_errors() {
        let (d, o) = data(2, 90, |x| x[0] + x[1] * x[1]);
        let mut cfg = GprConfig::new(4);
        cfg.max_n = 40;
        cfg.restarts = 1;
        let g = fit_gpr(&d, &o, 0, &cfg).unwrap();
        assert_eq!(g.subsample_idx.len(), 40);
        assert!(g.subsample_idx.windows(2).all(|w| w[0] < w[1]));
        cfg.alpha = 2.5;
        assert!(matches!(fit_gpr(&d, &o, 0, &cfg), Err(Error::Config(_))));
        let (d, o) = data(3, 4, |x| x[0]);
        assert!(matches!(fit_gpr(&d, &o, 0, &GprConfig::new(0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn nelder_mead_quadratic() {
        let r = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 1.0, &[0.0, 0.0], -5.0, 5.0, 0.5, 1e-12, 5000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] + 2.0).abs() < 1e-4);
        let r = nelder_mead(|x| x[0], &[0.0], -1.0, 1.0, 0.5, 1e-10, 500);
        assert!((r.x[0] + 1.0).abs() < 1e-12);
    }
}
