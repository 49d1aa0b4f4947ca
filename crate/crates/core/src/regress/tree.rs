use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::valid_xy;
use crate::error::{Error, Result};
use crate::space::{DesignMatrix, Matrix, Method, OutputMatrix, SensitivityResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Nodes smaller than this are not split.
    pub min_node_size: usize,
    /// Smallest child allowed; `None` uses `round(min_node_size / 3)`.
    pub min_leaf: Option<usize>,
    /// A split must remove at least this fraction of the root SSE.
    pub min_improve: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            min_node_size: 20,
            min_leaf: None,
            min_improve: 0.01,
        }
    }
}

impl TreeConfig {
    fn min_leaf(&self) -> usize {
        self.min_leaf
            .unwrap_or_else(|| (self.min_node_size as f64 / 3.0).round() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// `None` for leaves.
    pub split_param: Option<usize>,
    /// Samples with `x[split_param] <= split_value` go left.
    pub split_value: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Mean of the node members.
    pub leaf_value: f64,
    pub n_samples: usize,
    /// SSE removed by this node's split (0 for leaves).
    pub improvement: f64,
    pub sse: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split_param.is_none()
    }
}

/// Leaf assignment of one valid design row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafRow {
    pub row: usize,
    pub leaf_id: usize,
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<TreeNode>,
    pub importance: Vec<f64>,
    pub leaf_table: Vec<LeafRow>,
}

impl RegTree {
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let TreeNode {
            split_param: Some(p),
            split_value,
            left: Some(l),
            right: Some(r),
            ..
        } = self.nodes[i]
        {
            i = if x[p] <= split_value { l } else { r };
        }
        i
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_of(x)].leaf_value
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn to_result(&self) -> Result<SensitivityResult> {
        SensitivityResult::new(Method::TreeImportance, self.importance.clone(), None)
    }
}

/// Shared CART grower. `mtry` restricts each split search to a random
/// subset of parameters (forests); `None` searches all of them.
pub(crate) struct Grower<'a> {
    pub x: &'a Matrix,
    pub y: &'a [f64],
    pub min_split: usize,
    pub min_leaf: usize,
    pub min_improve_abs: f64,
    pub mtry: Option<usize>,
}

struct Split {
    param: usize,
    value: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn sse(y: &[f64], rows: &[usize]) -> (f64, f64) {
    let n = rows.len() as f64;
    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    (m, rows.iter().map(|&i| (y[i] - m).powi(2)).sum())
}

impl Grower<'_> {
    fn best_split<R: Rng + ?Sized>(&self, rows: &[usize], mean: f64, node_sse: f64, rng: Option<&mut R>) -> Option<Split> {
        let k = self.x.ncols();
        let params: Vec<usize> = match (self.mtry, rng) {
            (Some(m), Some(rng)) if m < k => {
                let mut v = sample(rng, k, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..k).collect(),
        };
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i] - mean).sum();
        let mut best: Option<(usize, usize, f64)> = None;
        let mut sorted = rows.to_vec();
        for &p in &params {
            sorted.sort_by(|&a, &b| self.x.get(a, p).total_cmp(&self.x.get(b, p)));
            let (mut sl, mut ql) = (0.0, 0.0);
            let qt: f64 = node_sse;
            for i in 0..n - 1 {
                let v = self.y[sorted[i]] - mean;
                sl += v;
                ql += v * v;
                let nl = i + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                if self.x.get(sorted[i], p) == self.x.get(sorted[i + 1], p) {
                    continue;
                }
                let sr = total - sl;
                let qr = qt - ql;
                let left_sse = ql - sl * sl / nl as f64;
                let right_sse = qr - sr * sr / nr as f64;
                let gain = node_sse - left_sse - right_sse;
                if best.as_ref().is_none_or(|b| gain > b.2) {
                    best = Some((p, i, gain));
                }
            }
        }
        let (p, i, gain) = best?;
        if !(gain > 1e-12 * node_sse) || gain < self.min_improve_abs {
            return None;
        }
        let mut order = rows.to_vec();
        order.sort_by(|&a, &b| self.x.get(a, p).total_cmp(&self.x.get(b, p)));
        let value = 0.5 * (self.x.get(order[i], p) + self.x.get(order[i + 1], p));
        Some(Split {
            param: p,
            value,
            gain,
            left: order[..=i].to_vec(),
            right: order[i + 1..].to_vec(),
        })
    }

    pub fn grow<R: Rng + ?Sized>(&self, rows: Vec<usize>, mut rng: Option<&mut R>) -> RegTree {
        let k = self.x.ncols();
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut importance = vec![0.0; k];
        let mut leaf_table = Vec::new();
        // (rows, parent index, is_left)
        let mut stack = vec![(rows, None::<(usize, bool)>)];
        while let Some((rows, parent)) = stack.pop() {
            let (mean, node_sse) = sse(self.y, &rows);
            let id = nodes.len();
            nodes.push(TreeNode {
                split_param: None,
                split_value: f64::NAN,
                left: None,
                right: None,
                leaf_value: mean,
                n_samples: rows.len(),
                improvement: 0.0,
                sse: node_sse,
            });
            if let Some((pi, is_left)) = parent {
                if is_left {
                    nodes[pi].left = Some(id);
                } else {
                    nodes[pi].right = Some(id);
                }
            }
            let split = if rows.len() >= self.min_split && node_sse > 0.0 {
                self.best_split(&rows, mean, node_sse, rng.as_deref_mut())
            } else {
                None
            };
            match split {
                Some(s) => {
                    nodes[id].split_param = Some(s.param);
                    nodes[id].split_value = s.value;
                    nodes[id].improvement = s.gain;
                    importance[s.param] += s.gain;
                    stack.push((s.right, Some((id, false))));
                    stack.push((s.left, Some((id, true))));
                }
                None => {
                    // member mean in row order, so it can be reproduced exactly
                    let mut rows = rows;
                    rows.sort_unstable();
                    let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
                    nodes[id].leaf_value = mean;
                    leaf_table.extend(rows.iter().map(|&r| LeafRow {
                        row: r,
                        leaf_id: id,
                        fitted: mean,
                    }));
                }
            }
        }
        leaf_table.sort_by_key(|l| l.row);
        RegTree {
            nodes,
            importance,
            leaf_table,
        }
    }
}

/// Variance-reduction regression tree without pruning. Importance is the
/// summed SSE reduction of the primary splits on each parameter.
pub fn fit_regression_tree(design: &DesignMatrix, out: &OutputMatrix, column: usize, cfg: &TreeConfig) -> Result<RegTree> {
    let (x, y, idx) = valid_xy(design, out, column, false)?;
    if y.len() < 2 * cfg.min_node_size || y.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} valid runs, a tree with minimum node size {} needs {}",
            y.len(),
            cfg.min_node_size,
            2 * cfg.min_node_size
        )));
    }
    let (_, root_sse) = sse(&y, &(0..y.len()).collect::<Vec<_>>());
    let g = Grower {
        x: &x,
        y: &y,
        min_split: cfg.min_node_size,
        min_leaf: cfg.min_leaf(),
        min_improve_abs: cfg.min_improve * root_sse,
        mtry: None,
    };
    let mut tree = g.grow::<rand_chacha::ChaCha8Rng>((0..y.len()).collect(), None);
    for l in &mut tree.leaf_table {
        l.row = idx[l.row];
    }
    Ok(tree)
}
