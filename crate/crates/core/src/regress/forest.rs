use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Grower, RegTree};
use super::valid_xy;
use crate::error::{Error, Result};
use crate::space::{DesignMatrix, Matrix, Method, OutputMatrix, SensitivityResult};
use crate::stats::{average_ranks, pop_variance, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Parameters tried per split; `None` uses `max(1, floor(K / 3))`.
    pub mtry: Option<usize>,
    /// Nodes smaller than this are not split.
    pub min_node_size: usize,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            trees: 500,
            mtry: None,
            min_node_size: 5,
            seed,
        }
    }

    pub fn mtry_for(&self, k: usize) -> usize {
        self.mtry.unwrap_or(k / 3).clamp(1, k.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFit {
    #[serde(skip)]
    pub trees: Vec<RegTree>,
    /// Mean increase of out-of-bag MSE after permuting each parameter.
    /// Can be slightly negative for parameters the forest does not use.
    pub oob_perm_importance: Vec<f64>,
    /// Summed split improvements per parameter, averaged over trees.
    pub impurity_importance: Vec<f64>,
    pub oob_r2: f64,
}

struct TreeOutcome {
    tree: RegTree,
    oob: Vec<(usize, f64)>,
    perm_increase: Option<Vec<f64>>,
}

fn mse(pred: impl Iterator<Item = f64>, y: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.zip(y) {
        s += (p - t).powi(2);
        n += 1;
    }
    s / n as f64
}

fn grow_one(x: &Matrix, y: &[f64], cfg: &ForestConfig, mtry: usize, t: usize) -> TreeOutcome {
    let n = y.len();
    let k = x.ncols();
    let mut rng = stream_rng(cfg.seed, t as u64);
    let mut in_bag = vec![false; n];
    let rows: Vec<usize> = (0..n)
        .map(|_| {
            let r = rng.random_range(0..n);
            in_bag[r] = true;
            r
        })
        .collect();
    let g = Grower {
        x,
        y,
        min_split: cfg.min_node_size.max(2),
        min_leaf: 1,
        min_improve_abs: 0.0,
        mtry: Some(mtry),
    };
    let mut tree = g.grow(rows, Some(&mut rng));
    tree.leaf_table = Vec::new();
    let oob_rows: Vec<usize> = (0..n).filter(|&i| !in_bag[i]).collect();
    let oob: Vec<(usize, f64)> = oob_rows.iter().map(|&i| (i, tree.predict(x.row(i)))).collect();
    let perm_increase = (!oob_rows.is_empty()).then(|| {
        let base = mse(oob.iter().map(|p| p.1), oob_rows.iter().map(|&i| y[i]));
        let mut xi = vec![0.0; k];
        (0..k)
            .map(|p| {
                let mut perm = oob_rows.clone();
                perm.shuffle(&mut rng);
                let permuted = oob_rows.iter().zip(&perm).map(|(&i, &j)| {
                    xi.copy_from_slice(x.row(i));
                    xi[p] = x.get(j, p);
                    tree.predict(&xi)
                });
                let permuted: Vec<f64> = permuted.collect();
                mse(permuted.into_iter(), oob_rows.iter().map(|&i| y[i])) - base
            })
            .collect()
    });
    TreeOutcome {
        tree,
        oob,
        perm_increase,
    }
}

/// Bagged CART ensemble with out-of-bag permutation and impurity
/// importances. Trees use independent seeded streams and are reduced in
/// index order, so the result does not depend on the thread count.
pub fn fit_random_forest(design: &DesignMatrix, out: &OutputMatrix, column: usize, cfg: &ForestConfig) -> Result<ForestFit> {
    if cfg.trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    if cfg.trees < 30 {
        log::warn!("{} trees give unstable out-of-bag estimates", cfg.trees);
    }
    let (x, y, _) = valid_xy(design, out, column, false)?;
    let n = y.len();
    if n < 2 * cfg.min_node_size.max(1) {
        return Err(Error::InsufficientData(format!("{n} valid runs are too few for a forest")));
    }
    let k = x.ncols();
    let mtry = cfg.mtry_for(k);
    let outcomes: Vec<TreeOutcome> = (0..cfg.trees)
        .into_par_iter()
        .map(|t| grow_one(&x, &y, cfg, mtry, t))
        .collect();

    let mut impurity = vec![0.0; k];
    let mut perm = vec![0.0; k];
    let mut perm_trees = 0usize;
    let mut oob_sum = vec![0.0; n];
    let mut oob_cnt = vec![0usize; n];
    for o in &outcomes {
        for (a, b) in impurity.iter_mut().zip(&o.tree.importance) {
            *a += b;
        }
        if let Some(pi) = &o.perm_increase {
            perm_trees += 1;
            for (a, b) in perm.iter_mut().zip(pi) {
                *a += b;
            }
        }
        for &(i, p) in &o.oob {
            oob_sum[i] += p;
            oob_cnt[i] += 1;
        }
    }
    impurity.iter_mut().for_each(|v| *v /= cfg.trees as f64);
    if perm_trees > 0 {
        perm.iter_mut().for_each(|v| *v /= perm_trees as f64);
    }
    let scored: Vec<usize> = (0..n).filter(|&i| oob_cnt[i] > 0).collect();
    let oob_r2 = if scored.is_empty() {
        f64::NAN
    } else {
        let ys: Vec<f64> = scored.iter().map(|&i| y[i]).collect();
        let v = pop_variance(&ys);
        let e = mse(scored.iter().map(|&i| oob_sum[i] / oob_cnt[i] as f64), ys.iter().copied());
        if v > 0.0 {
            1.0 - e / v
        } else {
            f64::NAN
        }
    };
    if average_ranks(&perm) != average_ranks(&impurity) {
        log::warn!("permutation and impurity importances order the parameters differently");
    }
    Ok(ForestFit {
        trees: outcomes.into_iter().map(|o| o.tree).collect(),
        oob_perm_importance: perm,
        impurity_importance: impurity,
        oob_r2,
    })
}

impl ForestFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Permutation importance clipped at zero, and impurity importance.
    pub fn to_results(&self) -> Result<(SensitivityResult, SensitivityResult)> {
        let clipped = self.oob_perm_importance.iter().map(|v| v.max(0.0)).collect();
        let perm = SensitivityResult::new(Method::ForestPermutation, clipped, None)?
            .with_extra("oob_r2", vec![self.oob_r2])
            .with_extra("estimate", self.oob_perm_importance.clone());
        let imp = SensitivityResult::new(Method::ForestImpurity, self.impurity_importance.clone(), None)?;
        Ok((perm, imp))
    }
}
