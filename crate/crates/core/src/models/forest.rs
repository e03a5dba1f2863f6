use rand::Rng;

use crate::num::Real;
use crate::seed::rng_for;

use super::tree::{fit_tree, RegressionTree};
use super::{ForestParams, ModelError};

/// Bagged regression trees; the prediction is the mean of the trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest<T> {
    pub trees: Vec<RegressionTree<T>>,
}

impl<T: Real> Forest<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let sum: T = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / T::from_usize_lossy(self.trees.len())
    }
}

/// Label of tree `i`'s random stream. Tree `i` depends only on this, so
/// growing more trees never changes the earlier ones.
pub fn tree_label(i: usize) -> String {
    format!("rf/tree/{i}")
}

/// Fits `params.n_trees` trees, each on its own bootstrap resample of `rows`.
pub fn fit_forest<T: Real>(
    x: &[Vec<T>],
    y: &[T],
    rows: &[usize],
    params: &ForestParams,
    seed: u64,
) -> Result<Forest<T>, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::InsufficientData("cannot fit a forest on zero rows".into()));
    }
    let n = rows.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    for i in 0..params.n_trees {
        let mut rng = rng_for(seed, &tree_label(i));
        let boot: Vec<usize> = (0..n).map(|_| rows[rng.random_range(0..n)]).collect();
        trees.push(fit_tree(x, y, &boot, params, &mut rng)?);
    }
    Ok(Forest { trees })
}
