//! Regression-based sensitivity measures: OLS t-statistics, CART and
//! random-forest importances, and Gaussian-process trend slopes and ranges.

pub mod forest;
pub mod gpr;
pub mod ols;
pub mod tree;

pub use forest::{fit_random_forest, ForestConfig, ForestFit};
pub use gpr::{fit_gpr, GprConfig, GprFit};
pub use ols::{ols_src, OlsFit};
pub use tree::{fit_regression_tree, LeafRow, RegTree, TreeConfig, TreeNode};

use crate::error::{Error, Result};
use crate::space::{DesignMatrix, Matrix, OutputMatrix};

/// Valid rows as `(x, y, original row indices)`. `unit` selects unit-cube
/// coordinates instead of the mapped ones.
pub(crate) fn valid_xy(
    design: &DesignMatrix,
    out: &OutputMatrix,
    column: usize,
    unit: bool,
) -> Result<(Matrix, Vec<f64>, Vec<usize>)> {
    if out.nrows() != design.nrows() {
        return Err(Error::Structural(format!(
            "{} output rows for {} design rows",
            out.nrows(),
            design.nrows()
        )));
    }
    let y = out.column(column)?;
    let idx: Vec<usize> = (0..y.len()).filter(|&i| out.valid[i]).collect();
    let src = if unit { &design.unit } else { &design.mapped };
    let x = src.select_rows(&idx);
    let ys = idx.iter().map(|&i| y[i]).collect();
    Ok((x, ys, idx))
}
