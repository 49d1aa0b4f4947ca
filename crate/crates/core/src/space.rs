//! Parameter spaces, design and output matrices, and the per-method result
//! record shared by every estimator.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Structural(format!(
                "{} values cannot fill a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Structural(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stack `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Structural(format!(
                "cannot stack {} columns onto {}",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl ParameterDef {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::Config("parameter name must be nonempty".into()));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Config(format!(
                "parameter {name}: need finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { name, lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Ordered list of parameters; position in the list is the design column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParameterDef>", into = "Vec<ParameterDef>")]
pub struct ParameterSpace {
    params: Vec<ParameterDef>,
}

impl ParameterSpace {
    pub fn new(params: Vec<ParameterDef>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Config("parameter space needs at least one parameter".into()));
        }
        let mut seen = HashSet::new();
        for p in &params {
            // re-validate, the defs may have been built by hand
            ParameterDef::new(p.name.clone(), p.lower, p.upper)?;
            if !seen.insert(p.name.as_str()) {
                return Err(Error::Config(format!("duplicate parameter name {}", p.name)));
            }
        }
        Ok(Self { params })
    }

    /// `k` parameters named `x1..xk` on the unit interval.
    pub fn unit(k: usize) -> Result<Self> {
        Self::new(
            (1..=k)
                .map(|i| ParameterDef::new(format!("x{i}"), 0.0, 1.0))
                .collect::<Result<_>>()?,
        )
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[ParameterDef] {
        &self.params
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }
}

impl TryFrom<Vec<ParameterDef>> for ParameterSpace {
    type Error = Error;
    fn try_from(v: Vec<ParameterDef>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParameterSpace> for Vec<ParameterDef> {
    fn from(s: ParameterSpace) -> Self {
        s.params
    }
}

/// Map unit-cube samples onto the parameter ranges.
pub fn map_unit_to_range(space: &ParameterSpace, unit: &Matrix) -> Result<Matrix> {
    if unit.ncols() != space.len() {
        return Err(Error::Structural(format!(
            "design has {} columns but the space has {} parameters",
            unit.ncols(),
            space.len()
        )));
    }
    let mut out = Matrix::zeros(unit.nrows(), unit.ncols());
    for i in 0..unit.nrows() {
        for (k, p) in space.params().iter().enumerate() {
            let u = unit.get(i, k);
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::Domain(format!(
                    "unit value {u} at row {i}, column {k} is outside [0, 1]"
                )));
            }
            out.set(i, k, p.lower + p.width() * u);
        }
    }
    Ok(out)
}

/// Position of one row inside a VARS star.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarPoint {
    pub star: usize,
    /// `None` for the star centre.
    pub dim: Option<usize>,
    /// Grid index along `dim` (the centre stores 0).
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignKind {
    Lhs {
        /// Set when batches were concatenated and the stratification no
        /// longer holds exactly.
        approximate: bool,
        /// Size of the seeded oversample this design is a prefix of.
        #[serde(default)]
        oversample: Option<usize>,
        #[serde(default)]
        sweeps: usize,
    },
    MorrisOat {
        r: usize,
        levels: usize,
        delta: f64,
    },
    SobolBlocks {
        base_n: usize,
    },
    VarsStars {
        centers: usize,
        h: f64,
        points: Vec<StarPoint>,
    },
}

impl DesignKind {
    pub fn label(&self) -> &'static str {
        match self {
            DesignKind::Lhs { .. } => "lhs",
            DesignKind::MorrisOat { .. } => "morris",
            DesignKind::SobolBlocks { .. } => "sobol",
            DesignKind::VarsStars { .. } => "vars",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub unit: Matrix,
    pub mapped: Matrix,
    pub kind: DesignKind,
    pub seed: u64,
}

impl DesignMatrix {
    pub fn new(space: &ParameterSpace, unit: Matrix, kind: DesignKind, seed: u64) -> Result<Self> {
        if unit.nrows() == 0 {
            return Err(Error::Structural("design needs at least one row".into()));
        }
        let mapped = map_unit_to_range(space, &unit)?;
        Ok(Self {
            unit,
            mapped,
            kind,
            seed,
        })
    }

    pub fn nrows(&self) -> usize {
        self.unit.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.unit.ncols()
    }

    /// Rows that make up a smaller design of the same kind, keeping a
    /// `fraction` of the base count (LHS rows, Morris trajectories, Sobol'
    /// base rows, VARS stars). Used for robustness ladders.
    pub fn ladder_rows(&self, fraction: f64) -> Result<(Vec<usize>, DesignKind)> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!("ladder fraction {fraction} not in (0, 1]")));
        }
        let keep = |n: usize| ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        let k = self.ncols();
        Ok(match &self.kind {
            DesignKind::Lhs { .. } => {
                let n = keep(self.nrows());
                ((0..n).collect(), self.kind.clone())
            }
            DesignKind::MorrisOat { r, levels, delta } => {
                let r2 = keep(*r);
                (
                    (0..r2 * (k + 1)).collect(),
                    DesignKind::MorrisOat {
                        r: r2,
                        levels: *levels,
                        delta: *delta,
                    },
                )
            }
            DesignKind::SobolBlocks { base_n } => {
                let b2 = keep(*base_n).max(2.min(*base_n));
                let idx = (0..k + 2)
                    .flat_map(|blk| (0..b2).map(move |i| blk * base_n + i))
                    .collect();
                (idx, DesignKind::SobolBlocks { base_n: b2 })
            }
            DesignKind::VarsStars { centers, h, points } => {
                let c2 = keep(*centers);
                let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].star < c2).collect();
                let pts = idx.iter().map(|&i| points[i]).collect();
                (
                    idx,
                    DesignKind::VarsStars {
                        centers: c2,
                        h: *h,
                        points: pts,
                    },
                )
            }
        })
    }

    pub fn select(&self, rows: &[usize], kind: DesignKind) -> DesignMatrix {
        DesignMatrix {
            unit: self.unit.select_rows(rows),
            mapped: self.mapped.select_rows(rows),
            kind,
            seed: self.seed,
        }
    }
}

/// Simulator outputs with a per-row validity mask. Rows are never removed,
/// so indices stay aligned with the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMatrix {
    pub values: Matrix,
    pub output_names: Vec<String>,
    pub valid: Vec<bool>,
}

impl OutputMatrix {
    /// Rows containing a non-finite value start out masked.
    pub fn new(values: Matrix, output_names: Vec<String>) -> Result<Self> {
        let valid = vec![true; values.nrows()];
        Self::with_mask(values, output_names, valid)
    }

    pub fn with_mask(values: Matrix, output_names: Vec<String>, mut valid: Vec<bool>) -> Result<Self> {
        if output_names.len() != values.ncols() {
            return Err(Error::Structural(format!(
                "{} output names for {} columns",
                output_names.len(),
                values.ncols()
            )));
        }
        if valid.len() != values.nrows() {
            return Err(Error::Structural("mask length differs from row count".into()));
        }
        for (i, v) in valid.iter_mut().enumerate() {
            if values.row(i).iter().any(|x| !x.is_finite()) {
                *v = false;
            }
        }
        Ok(Self {
            values,
            output_names,
            valid,
        })
    }

    pub fn single(name: &str, ys: Vec<f64>) -> Result<Self> {
        let n = ys.len();
        Self::new(Matrix::from_vec(n, 1, ys)?, vec![name.to_string()])
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.output_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.values.ncols() {
            return Err(Error::Structural(format!(
                "output column {j} requested, only {} present",
                self.values.ncols()
            )));
        }
        Ok(self.values.column(j))
    }

    /// Copy with the mask narrowed by `predicate`; returns the number of
    /// newly rejected rows.
    pub fn filter<F: Fn(&[f64]) -> bool>(&self, predicate: F) -> (OutputMatrix, usize) {
        let mut out = self.clone();
        let mut rejected = 0;
        for i in 0..self.nrows() {
            if out.valid[i] && !predicate(self.values.row(i)) {
                out.valid[i] = false;
                rejected += 1;
                log::debug!("row {i} rejected by output filter");
            }
        }
        (out, rejected)
    }

    /// Replace column `j` by its natural log; rows with non-positive values
    /// are masked. Returns the number of rows masked by the transform.
    pub fn log_column(&self, j: usize) -> Result<(OutputMatrix, usize)> {
        self.column(j)?;
        let mut out = self.clone();
        let mut masked = 0;
        for i in 0..self.nrows() {
            let v = self.values.get(i, j);
            if v > 0.0 {
                out.values.set(i, j, v.ln());
            } else {
                out.values.set(i, j, f64::NAN);
                if out.valid[i] {
                    masked += 1;
                }
                out.valid[i] = false;
            }
        }
        if masked > 0 {
            log::warn!(
                "log transform of {}: {masked} rows with non-positive values masked",
                self.output_names[j]
            );
        }
        Ok((out, masked))
    }

    pub fn select_rows(&self, rows: &[usize]) -> OutputMatrix {
        OutputMatrix {
            values: self.values.select_rows(rows),
            output_names: self.output_names.clone(),
            valid: rows.iter().map(|&i| self.valid[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MorrisDgsm,
    SobolS1,
    SobolT,
    VarsTo,
    RegSrc,
    TreeImportance,
    ForestPermutation,
    ForestImpurity,
    GprSlope,
    GprInvRange,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::MorrisDgsm,
        Method::SobolS1,
        Method::SobolT,
        Method::VarsTo,
        Method::RegSrc,
        Method::TreeImportance,
        Method::ForestPermutation,
        Method::ForestImpurity,
        Method::GprSlope,
        Method::GprInvRange,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MorrisDgsm => "morris_dgsm",
            Method::SobolS1 => "sobol_s1",
            Method::SobolT => "sobol_t",
            Method::VarsTo => "vars_to",
            Method::RegSrc => "reg_src",
            Method::TreeImportance => "tree_importance",
            Method::ForestPermutation => "forest_permutation",
            Method::ForestImpurity => "forest_impurity",
            Method::GprSlope => "gpr_slope",
            Method::GprInvRange => "gpr_inv_range",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Divide by the total so the entries sum to one.
pub fn scale_to_unit_sum(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(format!(
            "scaling needs finite nonnegative measures, got {bad}"
        )));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all measures are zero".into()));
    }
    Ok(raw.iter().map(|v| v / total).collect())
}

/// Per-parameter importance for one method and one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub method: Method,
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub ci: Option<Vec<(f64, f64)>>,
    /// Method-specific attachments keyed by name (e.g. `mu_star`, `r2`).
    pub extra: BTreeMap<String, Vec<f64>>,
}

impl SensitivityResult {
    /// `raw` must be nonnegative. When every entry is zero the scaled vector
    /// is all zeros as well.
    pub fn new(method: Method, raw: Vec<f64>, ci: Option<Vec<(f64, f64)>>) -> Result<Self> {
        if let Some(bad) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "{method}: raw measures must be finite and nonnegative, got {bad}"
            )));
        }
        let scaled = match scale_to_unit_sum(&raw) {
            Ok(s) => s,
            Err(Error::Degenerate(_)) => vec![0.0; raw.len()],
            Err(e) => return Err(e),
        };
        let ci = match ci {
            Some(c) => {
                if c.len() != raw.len() {
                    return Err(Error::Structural("one interval per parameter required".into()));
                }
                Some(
                    c.into_iter()
                        .zip(&raw)
                        .map(|((lo, hi), &r)| (lo.min(r), hi.max(r)))
                        .collect(),
                )
            }
            None => None,
        };
        Ok(Self {
            method,
            raw,
            scaled,
            ci,
            extra: BTreeMap::new(),
        })
    }

    pub fn with_extra(mut self, key: &str, values: Vec<f64>) -> Self {
        self.extra.insert(key.to_string(), values);
        self
    }

    pub fn argmax(&self) -> usize {
        crate::stats::argmax(&self.raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn affine_map_values() {
        let space = ParameterSpace::new(vec![
            ParameterDef::new("a", -3.0, 2.0).unwrap(),
            ParameterDef::new("b", 10.0, 30.0).unwrap(),
        ])
        .unwrap();
        let unit = Matrix::from_rows(&[vec![0.37, 0.25], vec![0.0, 1.0]]).unwrap();
        let m = map_unit_to_range(&space, &unit).unwrap();
        assert!((m.get(0, 0) + 1.15).abs() < 1e-12);
        assert_eq!(m.get(0, 1), 15.0);
        assert_eq!(m.get(1, 0), -3.0);
        assert_eq!(m.get(1, 1), 30.0);
    }

    #[test]
    fn map_rejects_bad_input() {
        let space = ParameterSpace::unit(2).unwrap();
        let wrong = Matrix::from_rows(&[vec![0.5]]).unwrap();
        assert!(matches!(map_unit_to_range(&space, &wrong), Err(Error::Structural(_))));
        let outside = Matrix::from_rows(&[vec![0.5, 1.2]]).unwrap();
        assert!(matches!(map_unit_to_range(&space, &outside), Err(Error::Domain(_))));
    }

    #[test]
    fn space_validation() {
        assert!(ParameterDef::new("a", 1.0, 1.0).is_err());
        assert!(ParameterDef::new("", 0.0, 1.0).is_err());
        let dup = vec![
            ParameterDef::new("a", 0.0, 1.0).unwrap(),
            ParameterDef::new("a", 0.0, 2.0).unwrap(),
        ];
        assert!(ParameterSpace::new(dup).is_err());
        assert!(ParameterSpace::new(vec![]).is_err());
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_to_unit_sum(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(scale_to_unit_sum(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        let s = scale_to_unit_sum(&[0.29, 0.69, 0.02]).unwrap();
        for (a, b) in s.iter().zip([0.29, 0.69, 0.02]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(scale_to_unit_sum(&[0.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(scale_to_unit_sum(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn nan_rows_are_masked() {
        let mut ys: Vec<f64> = (0..10).map(|i| i as f64).collect();
        ys[4] = f64::NAN;
        let out = OutputMatrix::single("y", ys).unwrap();
        let masked: Vec<usize> = (0..10).filter(|&i| !out.valid[i]).collect();
        assert_eq!(masked, vec![4]);
    }

    #[test]
    fn filter_examples() {
        let out = OutputMatrix::single("lai", vec![1.0, 2.0, 5.5]).unwrap();
        let (f, rejected) = out.filter(|r| r[0] <= 6.0);
        assert_eq!(rejected, 0);
        assert_eq!(f.valid, out.valid);
        let (none, rejected) = out.filter(|_| false);
        assert_eq!(rejected, 3);
        assert_eq!(none.n_valid(), 0);
    }

    #[test]
    fn log_column_masks_nonpositive() {
        let out = OutputMatrix::single("q", vec![1.0, 0.0, -2.0, std::f64::consts::E]).unwrap();
        let (l, masked) = out.log_column(0).unwrap();
        assert_eq!(masked, 2);
        assert_eq!(l.valid, vec![true, false, false, true]);
        assert!((l.values.get(3, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn result_zero_raw_gives_zero_scaled() {
        let r = SensitivityResult::new(Method::TreeImportance, vec![0.0, 0.0], None).unwrap();
        assert_eq!(r.scaled, vec![0.0, 0.0]);
        assert!(SensitivityResult::new(Method::RegSrc, vec![-0.1, 1.0], None).is_err());
    }

    proptest! {
        #[test]
        fn map_round_trip(lo in -1e3f64..1e3, w in 1e-3f64..1e3, u in 0.0f64..=1.0) {
            let space = ParameterSpace::new(vec![ParameterDef::new("p", lo, lo + w).unwrap()]).unwrap();
            let m = map_unit_to_range(&space, &Matrix::from_rows(&[vec![u]]).unwrap()).unwrap();
            let back = (m.get(0, 0) - lo) / w;
            prop_assert!((back - u).abs() <= 1e-12 * (1.0 + lo.abs() / w));
        }

        #[test]
        fn filter_is_idempotent(ys in proptest::collection::vec(-10.0f64..10.0, 1..40), cut in -5.0f64..5.0) {
            let out = OutputMatrix::single("y", ys).unwrap();
            let pred = |r: &[f64]| r[0] < cut;
            let (once, _) = out.filter(pred);
            let (twice, again) = once.filter(pred);
            prop_assert_eq!(once, twice);
            prop_assert_eq!(again, 0);
        }

        #[test]
        fn scaling_is_scale_invariant(raw in proptest::collection::vec(0.0f64..100.0, 1..12), c in 1e-3f64..1e3) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let a = scale_to_unit_sum(&raw).unwrap();
            let scaled: Vec<f64> = raw.iter().map(|v| v * c).collect();
            let b = scale_to_unit_sum(&scaled).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert_eq!(crate::stats::argmax(&a), crate::stats::argmax(&raw));
        }
    }
}
