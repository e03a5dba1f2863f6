//! CART regression trees with sum-of-squares splits.

use rand::seq::index::sample;
use rand::Rng;

use crate::num::Real;

use super::{ForestParams, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Leaf { value: T },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: T, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree<T> {
    /// Root at index 0.
    pub nodes: Vec<Node<T>>,
}

impl<T: Real> RegressionTree<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Grows a tree on `rows` of `(x, y)`; rows may repeat (bootstrap).
///
/// Each node samples `m` features without replacement and takes the split
/// with the smallest children SSE. Ties go to the lowest feature index, then
/// the lowest threshold.
pub fn fit_tree<T: Real, R: Rng>(
    x: &[Vec<T>],
    y: &[T],
    rows: &[usize],
    params: &ForestParams,
    rng: &mut R,
) -> Result<RegressionTree<T>, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::InsufficientData("cannot fit a tree on zero rows".into()));
    }
    let p = x[rows[0]].len();
    params.validate(p).map_err(ModelError::Params)?;
    let m = params.resolved_m(p);
    let mut tree = RegressionTree { nodes: Vec::new() };
    let mut idx = rows.to_vec();
    grow(&mut tree, x, y, &mut idx, 0, params, m, rng);
    Ok(tree)
}

fn mean<T: Real>(y: &[T], rows: &[usize]) -> T {
    rows.iter().map(|&r| y[r]).sum::<T>() / T::from_usize_lossy(rows.len())
}

#[allow(clippy::too_many_arguments)]
fn grow<T: Real, R: Rng>(
    tree: &mut RegressionTree<T>,
    x: &[Vec<T>],
    y: &[T],
    rows: &mut [usize],
    depth: usize,
    params: &ForestParams,
    m: usize,
    rng: &mut R,
) -> usize {
    let at = tree.nodes.len();
    tree.nodes.push(Node::Leaf { value: mean(y, rows) });
    let constant = rows.iter().all(|&r| y[r] == y[rows[0]]);
    if depth >= params.max_depth || rows.len() < 2 * params.min_leaf_size || constant {
        return at;
    }
    let p = x[rows[0]].len();
    let mut features: Vec<usize> = sample(rng, p, m).into_vec();
    features.sort_unstable();

    let Some((feature, threshold)) = best_split(x, y, rows, &features, params.min_leaf_size) else {
        return at;
    };
    // partition in place, left rows first, keeping relative order
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r][feature] <= threshold);
    let n_left = left.len();
    rows[..n_left].copy_from_slice(&left);
    rows[n_left..].copy_from_slice(&right);
    let (lrows, rrows) = rows.split_at_mut(n_left);
    let l = grow(tree, x, y, lrows, depth + 1, params, m, rng);
    let r = grow(tree, x, y, rrows, depth + 1, params, m, rng);
    tree.nodes[at] = Node::Split { feature, threshold, left: l, right: r };
    at
}

fn best_split<T: Real>(
    x: &[Vec<T>],
    y: &[T],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<(usize, T)> {
    let n = rows.len();
    let total: T = rows.iter().map(|&r| y[r]).sum();
    let total_sq: T = rows.iter().map(|&r| y[r] * y[r]).sum();
    let parent = total_sq - total * total / T::from_usize_lossy(n);
    let mut best: Option<(T, usize, T)> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).expect("finite features"));
        let mut s = T::zero();
        let mut sq = T::zero();
        for k in 0..n - 1 {
            let r = order[k];
            s += y[r];
            sq += y[r] * y[r];
            let nl = k + 1;
            let (xa, xb) = (x[r][f], x[order[k + 1]][f]);
            if xa == xb || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let (fl, fr) = (T::from_usize_lossy(nl), T::from_usize_lossy(n - nl));
            let sse = (sq - s * s / fl) + ((total_sq - sq) - (total - s) * (total - s) / fr);
            let threshold = xa + (xb - xa) / T::lit(2.0);
            if best.is_none_or(|(b, _, _)| sse < b) {
                best = Some((sse, f, threshold));
            }
        }
    }
    // a split must reduce the error
    best.filter(|&(sse, _, _)| sse < parent).map(|(_, f, t)| (f, t))
}
