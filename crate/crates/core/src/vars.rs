//! Variogram analysis on star samples: directional variograms, VARS-TO and
//! integrated variograms (IVARS).
//!
//! VARS-TO is built from the cross-sections of each star. Along dimension
//! `k` a cross-section holds every grid value of `x_k` with the other
//! coordinates fixed at the centre, so its spread estimates `V(Y | x_~k)`.
//! For pairs at lag `h` that spread splits into the semivariogram plus the
//! covariance of the paired values, which gives
//!
//! ```text
//! VARS-TO_k = (gamma_k(h) + mean_stars Cov(y_a, y_b | lag h)) / V(Y)
//! ```
//!
//! The covariance term uses the `n - 1` denominator per star and is
//! averaged over stars with at least two valid pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{DesignKind, DesignMatrix, Method, OutputMatrix, SensitivityResult};
use crate::stats::{sample_covariance, sample_variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarsResult {
    /// Per parameter, `(lag, gamma)` for every lag multiple of `h`.
    pub gamma_by_lag: Vec<Vec<(f64, f64)>>,
    pub vars_to: Vec<f64>,
    /// IVARS keyed by the integration fraction, formatted like `"0.3"`.
    pub ivars: BTreeMap<String, Vec<f64>>,
    pub v_y_hat: f64,
}

/// Star cross-sections: `sections[star][dim][grid]`, `None` where the run
/// is masked.
struct Sections {
    h: f64,
    m: usize,
    sections: Vec<Vec<Vec<Option<f64>>>>,
    all_values: Vec<f64>,
}

impl Sections {
    fn build(design: &DesignMatrix, out: &OutputMatrix, column: usize) -> Result<Self> {
        let (centers, h, points) = match &design.kind {
            DesignKind::VarsStars { centers, h, points } => (*centers, *h, points),
            other => {
                return Err(Error::UnsupportedDesign(format!(
                    "VARS needs a star design, got {}",
                    other.label()
                )))
            }
        };
        if out.nrows() != design.nrows() || points.len() != design.nrows() {
            return Err(Error::Structural("star metadata, design and outputs disagree in length".into()));
        }
        let m = (1.0 / h).round() as usize;
        let k = design.ncols();
        let y = out.column(column)?;
        let mut sections = vec![vec![vec![None; m + 1]; k]; centers];
        let mut all_values = Vec::with_capacity(y.len());
        for (i, p) in points.iter().enumerate() {
            let v = out.valid[i].then_some(y[i]);
            if let Some(v) = v {
                all_values.push(v);
            }
            match p.dim {
                Some(d) => sections[p.star][d][p.grid] = v,
                None => {
                    for (d, sec) in sections[p.star].iter_mut().enumerate() {
                        let g = (design.unit.get(i, d) * m as f64).round() as usize;
                        sec[g] = v;
                    }
                }
            }
        }
        Ok(Self {
            h,
            m,
            sections,
            all_values,
        })
    }

    fn pairs(&self, star: usize, dim: usize, lag: usize) -> (Vec<f64>, Vec<f64>) {
        let sec = &self.sections[star][dim];
        let mut a = Vec::new();
        let mut b = Vec::new();
        for g in 0..=self.m.saturating_sub(lag) {
            if g + lag > self.m {
                break;
            }
            if let (Some(x), Some(y)) = (sec[g], sec[g + lag]) {
                a.push(x);
                b.push(y);
            }
        }
        (a, b)
    }

    fn gamma(&self, dim: usize, lag: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in 0..self.sections.len() {
            let (a, b) = self.pairs(s, dim, lag);
            sum += a.iter().zip(&b).map(|(x, y)| 0.5 * (x - y).powi(2)).sum::<f64>();
            count += a.len();
        }
        (count > 0).then(|| sum / count as f64)
    }

    fn k(&self) -> usize {
        self.sections.first().map_or(0, Vec::len)
    }

    fn lag_steps(&self, lag: f64) -> Result<usize> {
        let steps = lag / self.h;
        if lag < 0.0 || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("lag {lag} is not a multiple of h = {}", self.h)));
        }
        Ok(steps.round() as usize)
    }
}

/// Semivariogram along every dimension at `lag` (a multiple of `h`).
pub fn directional_variogram(design: &DesignMatrix, out: &OutputMatrix, column: usize, lag: f64) -> Result<Vec<f64>> {
    let sec = Sections::build(design, out, column)?;
    let steps = sec.lag_steps(lag)?;
    if steps == 0 {
        return Ok(vec![0.0; sec.k()]);
    }
    (0..sec.k())
        .map(|d| {
            sec.gamma(d, steps)
                .ok_or_else(|| Error::NoData(format!("no valid pairs at lag {lag} along dimension {d}")))
        })
        .collect()
}

fn vars_to_from(sec: &Sections) -> Result<(Vec<f64>, f64)> {
    if sec.all_values.len() < 2 {
        return Err(Error::NoData("fewer than two valid star points".into()));
    }
    let v = sample_variance(&sec.all_values);
    if !(v > 0.0) {
        return Err(Error::Degenerate("output variance over the star points is zero".into()));
    }
    let mut out = Vec::with_capacity(sec.k());
    for d in 0..sec.k() {
        let gamma = sec
            .gamma(d, 1)
            .ok_or_else(|| Error::NoData(format!("no valid pairs along dimension {d}")))?;
        let covs: Vec<f64> = (0..sec.sections.len())
            .filter_map(|s| {
                let (a, b) = sec.pairs(s, d, 1);
                (a.len() >= 2).then(|| sample_covariance(&a, &b))
            })
            .collect();
        let cov = if covs.is_empty() { 0.0 } else { covs.iter().sum::<f64>() / covs.len() as f64 };
        out.push((gamma + cov) / v);
    }
    Ok((out, v))
}

pub fn vars_to(design: &DesignMatrix, out: &OutputMatrix, column: usize) -> Result<Vec<f64>> {
    Ok(vars_to_from(&Sections::build(design, out, column)?)?.0)
}

fn ivars_from(sec: &Sections, p: f64) -> Result<Vec<f64>> {
    let steps = sec.lag_steps(p)?;
    if p > 0.5 + 1e-12 {
        return Err(Error::Config(format!("IVARS fraction {p} exceeds 0.5")));
    }
    (0..sec.k())
        .map(|d| {
            let mut total = 0.0;
            let mut prev = 0.0;
            for l in 1..=steps {
                let g = sec
                    .gamma(d, l)
                    .ok_or_else(|| Error::NoData(format!("no valid pairs at lag step {l}")))?;
                total += 0.5 * sec.h * (prev + g);
                prev = g;
            }
            Ok(total)
        })
        .collect()
}

/// Trapezoidal integral of the semivariogram from 0 to `p`.
pub fn ivars(design: &DesignMatrix, out: &OutputMatrix, column: usize, p: f64) -> Result<Vec<f64>> {
    ivars_from(&Sections::build(design, out, column)?, p)
}

/// Default IVARS fractions.
pub const IVARS_FRACTIONS: [f64; 3] = [0.1, 0.3, 0.5];

/// Full VARS summary: variogram by lag, VARS-TO, and IVARS for every
/// default fraction that is a multiple of `h`.
pub fn analyze(design: &DesignMatrix, out: &OutputMatrix, column: usize) -> Result<VarsResult> {
    let sec = Sections::build(design, out, column)?;
    let (vto, v) = vars_to_from(&sec)?;
    let gamma_by_lag = (0..sec.k())
        .map(|d| {
            (1..=sec.m)
                .filter_map(|l| sec.gamma(d, l).map(|g| (l as f64 * sec.h, g)))
                .collect()
        })
        .collect();
    let mut iv = BTreeMap::new();
    for p in IVARS_FRACTIONS {
        if sec.lag_steps(p).is_ok() {
            iv.insert(format!("{p}"), ivars_from(&sec, p)?);
        }
    }
    Ok(VarsResult {
        gamma_by_lag,
        vars_to: vto,
        ivars: iv,
        v_y_hat: v,
    })
}

impl VarsResult {
    pub fn to_result(&self) -> Result<SensitivityResult> {
        let raw = self.vars_to.iter().map(|v| v.max(0.0)).collect();
        let mut r = SensitivityResult::new(Method::VarsTo, raw, None)?.with_extra("v_y_hat", vec![self.v_y_hat]);
        for (p, v) in &self.ivars {
            r = r.with_extra(&format!("ivars_{p}"), v.clone());
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{vars_stars, VarsStarConfig};
    use crate::space::ParameterSpace;

    fn setup<F: Fn(&[f64]) -> f64>(k: usize, centers: usize, f: F) -> (DesignMatrix, OutputMatrix) {
        let space = ParameterSpace::unit(k).unwrap();
        let d = vars_stars(&space, &VarsStarConfig::new(centers), 4).unwrap();
        let y = d.unit.rows_iter().map(f).collect();
        (d, OutputMatrix::single("y", y).unwrap())
    }

    #[test]
    fn constant_output() {
        let (d, o) = setup(2, 5, |_| 2.0);
        assert_eq!(directional_variogram(&d, &o, 0, 0.3).unwrap(), vec![0.0, 0.0]);
        assert_eq!(ivars(&d, &o, 0, 0.5).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(vars_to(&d, &o, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn linear_variogram_is_exact() {
        let (d, o) = setup(2, 8, |x| x[0]);
        for l in 1..=5 {
            let lag = l as f64 * 0.1;
            let g = directional_variogram(&d, &o, 0, lag).unwrap();
            assert!((g[0] - lag * lag / 2.0).abs() < 1e-12);
            assert_eq!(g[1], 0.0);
        }
        let v = vars_to(&d, &o, 0).unwrap();
        let s = crate::space::scale_to_unit_sum(&v).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] < 1e-20, "{v:?}");
        for p in IVARS_FRACTIONS {
            let iv = ivars(&d, &o, 0, p).unwrap();
            // trapezoid error for h^2 x^2 / 2 is p h^2 / 12
            assert!((iv[0] - p.powi(3) / 6.0).abs() <= p * 0.01 / 12.0 + 1e-12);
        }
    }

    #[test]
    fn sine_variogram_matches_pair_enumeration() {
        let f = |x: &[f64]| (2.0 * std::f64::consts::PI * x[0]).sin() + x[1];
        let (d, o) = setup(2, 6, f);
        // brute force: any two rows of the same star that differ only in x1
        let DesignKind::VarsStars { points, .. } = &d.kind else { panic!() };
        for l in [1usize, 2, 4] {
            let lag = l as f64 / 10.0;
            let (mut sum, mut cnt) = (0.0, 0);
            for i in 0..d.nrows() {
                for j in i + 1..d.nrows() {
                    if points[i].star != points[j].star {
                        continue;
                    }
                    let (a, b) = (d.unit.row(i), d.unit.row(j));
                    if a[1] == b[1] && ((a[0] - b[0]).abs() - lag).abs() < 1e-9 {
                        sum += 0.5 * (o.values.get(i, 0) - o.values.get(j, 0)).powi(2);
                        cnt += 1;
                    }
                }
            }
            let g = directional_variogram(&d, &o, 0, lag).unwrap();
            assert!((g[0] - sum / cnt as f64).abs() < 1e-12, "lag {lag}");
        }
    }

    #[test]
    fn masked_rows_drop_pairs_only() {
        let (d, mut o) = setup(2, 3, |x| x[0] + x[1]);
        o.valid[2] = false;
        let g = directional_variogram(&d, &o, 0, 0.1).unwrap();
        assert!((g[0] - 0.005).abs() < 1e-12);
        assert!(directional_variogram(&d, &o, 0, 0.15).is_err());
        assert!(ivars(&d, &o, 0, 0.25).is_err());
    }

    #[test]
    fn ivars_nondecreasing_in_fraction() {
        let (d, o) = setup(3, 10, |x| x[0] * x[1] + (5.0 * x[2]).cos());
        let r = analyze(&d, &o, 0).unwrap();
        let (a, b, c) = (&r.ivars["0.1"], &r.ivars["0.3"], &r.ivars["0.5"]);
        for k in 0..3 {
            assert!(a[k] <= b[k] && b[k] <= c[k]);
        }
        assert!(r.gamma_by_lag.iter().flatten().all(|(_, g)| *g >= 0.0));
    }
}
