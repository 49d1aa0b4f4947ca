//! Fixtures shared by the benchmarks in `benches/`.

use sensa_core::testbed::{eval_analytic, AnalyticFn};
use sensa_core::{DesignMatrix, Matrix, OutputMatrix, ParameterSpace};

/// Evaluate Ishigami on the unit coordinates of `design`.
pub fn ishigami_outputs(design: &DesignMatrix) -> OutputMatrix {
    let y = eval_analytic(&AnalyticFn::ishigami(), &design.unit).expect("three columns");
    let values = Matrix::from_vec(y.len(), 1, y).expect("column");
    OutputMatrix::new(values, vec!["y".into()]).expect("finite outputs")
}

pub fn unit_space(k: usize) -> ParameterSpace {
    ParameterSpace::unit(k).expect("k > 0")
}
