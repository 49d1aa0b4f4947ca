//! Variance-based first-order and total indices from A/B/AB block designs,
//! with tuple-bootstrap confidence intervals and a dummy-parameter noise
//! cutoff.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{DesignKind, DesignMatrix, Method, OutputMatrix, SensitivityResult};
use crate::stats::{percentile_interval, stream_rng};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstOrderEstimator {
    /// `mean(f_B (f_ABk - f_A)) / V`
    #[default]
    Saltelli2010,
    /// `(V - mean((f_B - f_ABk)^2) / 2) / V`
    Jansen1999,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalEstimator {
    /// `mean((f_A - f_ABk)^2) / (2 V)`
    #[default]
    Jansen1999,
    /// `(V - mean(f_A f_ABk) + f0^2) / V`
    Homma1996,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolConfig {
    pub boot_reps: usize,
    pub seed: u64,
    pub conf_level: f64,
    pub first_order: FirstOrderEstimator,
    pub total: TotalEstimator,
    /// Estimate the noise cutoff from a virtual inert parameter.
    pub dummy: bool,
}

impl Default for SobolConfig {
    fn default() -> Self {
        Self {
            boot_reps: 1000,
            seed: 0,
            conf_level: 0.95,
            first_order: FirstOrderEstimator::default(),
            total: TotalEstimator::default(),
            dummy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub s1: Vec<f64>,
    pub t: Vec<f64>,
    pub v_y: f64,
    pub ci_s1: Option<Vec<(f64, f64)>>,
    pub ci_t: Option<Vec<(f64, f64)>>,
    pub dummy_s1: Option<f64>,
    pub dummy_t: Option<f64>,
    pub boot_reps: usize,
    pub n_tuples: usize,
}

struct Blocks {
    f_a: Vec<f64>,
    f_b: Vec<f64>,
    f_ab: Vec<Vec<f64>>,
}

struct Estimate {
    s1: Vec<f64>,
    t: Vec<f64>,
    v: f64,
    dummy_s1: f64,
    dummy_t: f64,
}

fn estimate(blocks: &Blocks, idx: &[usize], cfg: &SobolConfig) -> Estimate {
    let n = idx.len() as f64;
    let (mut sum, mut sum2, mut sum_a2, mut sum_ab) = (0.0, 0.0, 0.0, 0.0);
    for &i in idx {
        let (a, b) = (blocks.f_a[i], blocks.f_b[i]);
        sum += a + b;
        sum2 += a * a + b * b;
        sum_a2 += a * a;
        sum_ab += a * b;
    }
    let f0 = sum / (2.0 * n);
    let v = sum2 / (2.0 * n) - f0 * f0;
    let k = blocks.f_ab.len();
    let mut s1 = Vec::with_capacity(k);
    let mut t = Vec::with_capacity(k);
    for f_ab in &blocks.f_ab {
        let (mut num_s, mut num_t) = (0.0, 0.0);
        for &i in idx {
            let (a, b, ab) = (blocks.f_a[i], blocks.f_b[i], f_ab[i]);
            num_s += match cfg.first_order {
                FirstOrderEstimator::Saltelli2010 => b * (ab - a),
                FirstOrderEstimator::Jansen1999 => (b - ab).powi(2),
            };
            num_t += match cfg.total {
                TotalEstimator::Jansen1999 => (a - ab).powi(2),
                TotalEstimator::Homma1996 => a * ab,
            };
        }
        s1.push(match cfg.first_order {
            FirstOrderEstimator::Saltelli2010 => num_s / n / v,
            FirstOrderEstimator::Jansen1999 => (v - num_s / (2.0 * n)) / v,
        });
        t.push(match cfg.total {
            TotalEstimator::Jansen1999 => num_t / (2.0 * n) / v,
            TotalEstimator::Homma1996 => (v - num_t / n + f0 * f0) / v,
        });
    }
    // A virtual parameter the model ignores: rows of A and B share only that
    // coordinate, so its first-order estimate is the A/B cross moment, and
    // varying it alone reproduces A, so its total effect is 1 - V_A / V.
    let dummy_s1 = (sum_ab / n - f0 * f0) / v;
    let dummy_t = 1.0 - (sum_a2 / n - f0 * f0) / v;
    Estimate {
        s1,
        t,
        v,
        dummy_s1,
        dummy_t,
    }
}

fn collect_blocks(design: &DesignMatrix, out: &OutputMatrix, column: usize) -> Result<(Blocks, Vec<usize>)> {
    let base = match design.kind {
        DesignKind::SobolBlocks { base_n } => base_n,
        ref other => {
            return Err(Error::UnsupportedDesign(format!(
                "Sobol' indices need a block design, got {}",
                other.label()
            )))
        }
    };
    let k = design.ncols();
    if design.nrows() != base * (k + 2) || out.nrows() != design.nrows() {
        return Err(Error::Structural(format!(
            "expected {} rows for base {base} and {k} parameters, got design {} / outputs {}",
            base * (k + 2),
            design.nrows(),
            out.nrows()
        )));
    }
    let y = out.column(column)?;
    let tuples: Vec<usize> = (0..base)
        .filter(|&i| (0..k + 2).all(|blk| out.valid[blk * base + i]))
        .collect();
    let dropped = base - tuples.len();
    if dropped > 0 {
        log::warn!("{dropped} Sobol' row tuples contain masked runs and are dropped");
    }
    if tuples.is_empty() {
        return Err(Error::NoData("no complete Sobol' row tuple".into()));
    }
    let pick = |blk: usize| tuples.iter().map(|&i| y[blk * base + i]).collect::<Vec<_>>();
    let blocks = Blocks {
        f_a: pick(0),
        f_b: pick(1),
        f_ab: (0..k).map(|c| pick(2 + c)).collect(),
    };
    let idx = (0..tuples.len()).collect();
    Ok((blocks, idx))
}

pub fn sobol_indices(design: &DesignMatrix, out: &OutputMatrix, column: usize, cfg: &SobolConfig) -> Result<SobolIndices> {
    let (blocks, idx) = collect_blocks(design, out, column)?;
    let point = estimate(&blocks, &idx, cfg);
    if !(point.v > 0.0) || point.v <= 1e-300 {
        return Err(Error::Degenerate("output variance is zero".into()));
    }
    let n = idx.len();
    let k = blocks.f_ab.len();
    let mut res = SobolIndices {
        s1: point.s1,
        t: point.t,
        v_y: point.v,
        ci_s1: None,
        ci_t: None,
        dummy_s1: None,
        dummy_t: None,
        boot_reps: cfg.boot_reps,
        n_tuples: n,
    };
    if cfg.boot_reps == 0 {
        if cfg.dummy {
            res.dummy_s1 = Some(point.dummy_s1.max(0.0));
            res.dummy_t = Some(point.dummy_t.max(0.0));
        }
        return Ok(res);
    }
    // replicate r always uses stream r, so results do not depend on threads
    let reps: Vec<Estimate> = (0..cfg.boot_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, 1000 + r as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            estimate(&blocks, &sample, cfg)
        })
        .filter(|e| e.v > 0.0)
        .collect();
    if reps.is_empty() {
        return Err(Error::Degenerate("every bootstrap replicate had zero variance".into()));
    }
    let interval = |f: &dyn Fn(&Estimate) -> f64| percentile_interval(reps.iter().map(f).collect(), cfg.conf_level);
    res.ci_s1 = Some((0..k).map(|c| interval(&|e| e.s1[c])).collect());
    res.ci_t = Some((0..k).map(|c| interval(&|e| e.t[c])).collect());
    if cfg.dummy {
        res.dummy_s1 = Some(interval(&|e| e.dummy_s1).1);
        res.dummy_t = Some(interval(&|e| e.dummy_t).1);
    }
    Ok(res)
}

/// Upper confidence bounds of the dummy parameter's (S1, T).
pub fn dummy_cutoffs(design: &DesignMatrix, out: &OutputMatrix, column: usize, cfg: &SobolConfig) -> Result<(f64, f64)> {
    let cfg = SobolConfig { dummy: true, ..*cfg };
    let idx = sobol_indices(design, out, column, &cfg)?;
    Ok((idx.dummy_s1.unwrap_or(0.0), idx.dummy_t.unwrap_or(0.0)))
}

impl SobolIndices {
    /// Parameters whose `T - S1` gap exceeds `threshold`.
    pub fn interaction_flags(&self, threshold: f64) -> Vec<bool> {
        self.t.iter().zip(&self.s1).map(|(t, s)| t - s > threshold).collect()
    }

    /// Parameters whose total index does not exceed the dummy cutoff.
    pub fn below_noise(&self) -> Option<Vec<bool>> {
        let cut = self.dummy_t?;
        Some(self.t.iter().map(|t| t.abs() <= cut).collect())
    }

    /// (S1, T) as result records. Negative estimates are Monte Carlo noise
    /// and are clipped to zero; the unclipped values stay in `extra`.
    pub fn to_results(&self) -> Result<(SensitivityResult, SensitivityResult)> {
        let clip = |v: &[f64]| v.iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
        let clip_ci = |c: &Option<Vec<(f64, f64)>>| {
            c.as_ref()
                .map(|c| c.iter().map(|(l, h)| (l.max(0.0), h.max(0.0))).collect())
        };
        let mut s1 = SensitivityResult::new(Method::SobolS1, clip(&self.s1), clip_ci(&self.ci_s1))?
            .with_extra("estimate", self.s1.clone())
            .with_extra("v_y", vec![self.v_y]);
        let mut t = SensitivityResult::new(Method::SobolT, clip(&self.t), clip_ci(&self.ci_t))?
            .with_extra("estimate", self.t.clone())
            .with_extra("v_y", vec![self.v_y]);
        if let Some(c) = self.dummy_s1 {
            s1 = s1.with_extra("dummy_cutoff", vec![c]);
        }
        if let Some(c) = self.dummy_t {
            t = t.with_extra("dummy_cutoff", vec![c]);
        }
        Ok((s1, t))
    }
}
