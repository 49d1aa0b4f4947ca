use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Matrix;

/// Benchmark functions on the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AnalyticFn {
    /// `sum w_k u_k`.
    Linear { weights: Vec<f64> },
    /// Inputs are mapped to `[-pi, pi]`.
    Ishigami { a: f64, b: f64 },
    SobolG { a: Vec<f64> },
    /// `sum w_k u_k + sum c_ij u_i u_j`.
    Polynomial {
        linear: Vec<f64>,
        #[serde(default)]
        interactions: Vec<(usize, usize, f64)>,
    },
}

impl AnalyticFn {
    pub fn ishigami() -> Self {
        AnalyticFn::Ishigami { a: 7.0, b: 0.1 }
    }

    pub fn k(&self) -> usize {
        match self {
            AnalyticFn::Linear { weights } => weights.len(),
            AnalyticFn::Ishigami { .. } => 3,
            AnalyticFn::SobolG { a } => a.len(),
            AnalyticFn::Polynomial { linear, .. } => linear.len(),
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            AnalyticFn::Linear { weights } => weights.iter().zip(u).map(|(w, x)| w * x).sum(),
            AnalyticFn::Ishigami { a, b } => {
                let x: Vec<f64> = u.iter().map(|v| -PI + 2.0 * PI * v).collect();
                x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
            }
            AnalyticFn::SobolG { a } => a
                .iter()
                .zip(u)
                .map(|(a, x)| ((4.0 * x - 2.0).abs() + a) / (1.0 + a))
                .product(),
            AnalyticFn::Polynomial { linear, interactions } => {
                linear.iter().zip(u).map(|(w, x)| w * x).sum::<f64>()
                    + interactions.iter().map(|&(i, j, c)| c * u[i] * u[j]).sum::<f64>()
            }
        }
    }

    /// Closed-form `(S1, T)` where available.
    pub fn analytic_sobol(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            AnalyticFn::Linear { weights } => {
                let total: f64 = weights.iter().map(|w| w * w).sum();
                if total == 0.0 {
                    return None;
                }
                let s: Vec<f64> = weights.iter().map(|w| w * w / total).collect();
                Some((s.clone(), s))
            }
            AnalyticFn::Ishigami { a, b } => {
                let pi4 = PI.powi(4);
                let pi8 = PI.powi(8);
                let v = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
                let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
                let v2 = a * a / 8.0;
                let v13 = v - v1 - v2;
                Some((vec![v1 / v, v2 / v, 0.0], vec![(v1 + v13) / v, v2 / v, v13 / v]))
            }
            AnalyticFn::SobolG { a } => {
                let vi: Vec<f64> = a.iter().map(|a| 1.0 / (3.0 * (1.0 + a).powi(2))).collect();
                let prod: f64 = vi.iter().map(|v| 1.0 + v).product();
                let v = prod - 1.0;
                let s1 = vi.iter().map(|x| x / v).collect();
                let t = vi.iter().map(|x| x * prod / (1.0 + x) / v).collect();
                Some((s1, t))
            }
            AnalyticFn::Polynomial { .. } => None,
        }
    }
}

pub fn eval_analytic(f: &AnalyticFn, points: &Matrix) -> Result<Vec<f64>> {
    if points.ncols() != f.k() {
        return Err(Error::Structural(format!(
            "function takes {} inputs, points have {}",
            f.k(),
            points.ncols()
        )));
    }
    if points.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain("analytic functions are defined on the unit cube".into()));
    }
    Ok(points.rows_iter().map(|u| f.eval(u)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ishigami_reference_values() {
        let (s1, t) = AnalyticFn::ishigami().analytic_sobol().unwrap();
        let s1_ref = [0.3139, 0.4424, 0.0];
        let t_ref = [0.5576, 0.4424, 0.2437];
        for i in 0..3 {
            assert!((s1[i] - s1_ref[i]).abs() < 1e-4);
            assert!((t[i] - t_ref[i]).abs() < 1e-4);
        }
        assert_eq!(s1[2], 0.0);
    }

    fn mc_variance(f: &AnalyticFn, n: usize) -> f64 {
        // midpoint grid in each coordinate, crude but deterministic
        let k = f.k();
        let mut ys = Vec::new();
        let mut idx = vec![0usize; k];
        loop {
            let u: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) / n as f64).collect();
            ys.push(f.eval(&u));
            let mut d = 0;
            while d < k {
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == k {
                break;
            }
        }
        crate::stats::pop_variance(&ys)
    }

    #[test]
    fn ishigami_total_variance_by_quadrature() {
        let (a, b) = (7.0, 0.1);
        let v = a * a / 8.0 + b * PI.powi(4) / 5.0 + b * b * PI.powi(8) / 18.0 + 0.5;
        let q = mc_variance(&AnalyticFn::Ishigami { a, b }, 120);
        assert!((q - v).abs() / v < 1e-3, "{q} vs {v}");
    }

    #[test]
    fn sobol_g_properties() {
        let g = AnalyticFn::SobolG { a: vec![0.0; 3] };
        let (s1, t) = g.analytic_sobol().unwrap();
        assert!((s1[0] - s1[1]).abs() < 1e-15 && (s1[1] - s1[2]).abs() < 1e-15);
        assert!(t.iter().zip(&s1).all(|(t, s)| t > s));
        let g = AnalyticFn::SobolG { a: vec![0.0, 1.0, 9.0] };
        let v = mc_variance(&g, 200);
        let vi: Vec<f64> = [0.0f64, 1.0, 9.0].iter().map(|a| 1.0 / (3.0 * (1.0 + a).powi(2))).collect();
        let exact = vi.iter().map(|v| 1.0 + v).product::<f64>() - 1.0;
        assert!((v - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn linear_indices() {
        let (s1, t) = AnalyticFn::Linear { weights: vec![1.0, 0.0] }.analytic_sobol().unwrap();
        assert_eq!(s1, vec![1.0, 0.0]);
        assert_eq!(t, vec![1.0, 0.0]);
    }

    #[test]
    fn eval_checks() {
        let f = AnalyticFn::Polynomial {
            linear: vec![3.0, 1.0, 0.0, 0.0],
            interactions: vec![(0, 1, 1.0)],
        };
        let p = Matrix::from_rows(&[vec![1.0, 0.5, 0.2, 0.9]]).unwrap();
        assert_eq!(eval_analytic(&f, &p).unwrap(), vec![4.0]);
        assert!(eval_analytic(&AnalyticFn::ishigami(), &p).is_err());
        let bad = Matrix::from_rows(&[vec![1.5, 0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(eval_analytic(&f, &bad), Err(Error::Domain(_))));
    }
}
