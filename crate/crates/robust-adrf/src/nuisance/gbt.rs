//! Gradient-boosted regression trees with squared or absolute loss.

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::scalar::{total_cmp, Scalar};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GbtLoss {
    Squared,
    Absolute,
}

/// Boosting hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub loss: GbtLoss,
    pub trees: usize,
    pub depth: usize,
    pub rate: f64,
    /// Minimum number of training samples per leaf.
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { loss: GbtLoss::Squared, trees: 100, depth: 3, rate: 0.1, min_leaf: 20 }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.depth == 0 || self.min_leaf == 0 {
            return Err(invalid("gbt needs trees >= 1, depth >= 1, min_leaf >= 1"));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(invalid("gbt rate must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node<S> {
    Leaf(S),
    Split { feature: usize, threshold: S, left: usize, right: usize },
}

/// A single regression tree stored as a flat node arena (root at index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tree<S> {
    pub fn predict_row(&self, row: &[S]) -> S {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Fitted boosting ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel<S> {
    pub init: S,
    pub rate: S,
    pub trees: Vec<Tree<S>>,
    /// In-sample loss after the initial constant and after each stage.
    pub loss_path: Vec<S>,
}

struct Grower<'a, S> {
    x: &'a Matrix<S>,
    order: &'a [Vec<usize>],
    params: &'a GbtParams,
}

impl<S: Scalar> GbtModel<S> {
    pub fn fit(x: &Matrix<S>, y: &[S], params: &GbtParams) -> Result<Self> {
        params.validate()?;
        if x.nrows() != y.len() || y.len() < 2 {
            return Err(invalid("gbt needs matching x/y with at least two rows"));
        }
        let n = y.len();
        let order: Vec<Vec<usize>> = (0..x.ncols())
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| total_cmp(&x.get(a, j), &x.get(b, j)));
                idx
            })
            .collect();
        let init = match params.loss {
            GbtLoss::Squared => stats::mean(y),
            GbtLoss::Absolute => stats::median(y)?,
        };
        let rate = S::lit(params.rate);
        let mut f = vec![init; n];
        let mut loss_path = vec![loss(params.loss, y, &f)];
        let grower = Grower { x, order: &order, params };
        let mut trees = Vec::with_capacity(params.trees);
        let mut node_of = vec![0usize; n];
        for _ in 0..params.trees {
            let resid: Vec<S> = y.iter().zip(&f).map(|(&a, &b)| a - b).collect();
            let grad: Vec<S> = match params.loss {
                GbtLoss::Squared => resid.clone(),
                GbtLoss::Absolute => resid.iter().map(|&r| sign(r)).collect(),
            };
            let tree = grower.grow(&grad, &resid, &mut node_of)?;
            for i in 0..n {
                f[i] = f[i] + rate * tree.predict_row(x.row(i));
            }
            loss_path.push(loss(params.loss, y, &f));
            trees.push(tree);
        }
        Ok(Self { init, rate, trees, loss_path })
    }

    pub fn predict(&self, x: &Matrix<S>) -> Vec<S> {
        (0..x.nrows())
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().fold(self.init, |acc, t| acc + self.rate * t.predict_row(row))
            })
            .collect()
    }
}

fn sign<S: Scalar>(r: S) -> S {
    if r > S::zero() {
        S::one()
    } else if r < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

fn loss<S: Scalar>(kind: GbtLoss, y: &[S], f: &[S]) -> S {
    let n = S::from_count(y.len());
    match kind {
        GbtLoss::Squared => y.iter().zip(f).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>() / n,
        GbtLoss::Absolute => y.iter().zip(f).map(|(&a, &b)| (a - b).abs()).sum::<S>() / n,
    }
}

struct SplitChoice<S> {
    feature: usize,
    threshold: S,
    gain: S,
}

impl<S: Scalar> Grower<'_, S> {
    /// Grows one tree on gradient `grad`; leaves take the mean gradient (squared loss)
    /// or the median residual (absolute loss).
    fn grow(&self, grad: &[S], resid: &[S], node_of: &mut [usize]) -> Result<Tree<S>> {
        node_of.iter_mut().for_each(|v| *v = 0);
        let mut nodes: Vec<Node<S>> = vec![Node::Leaf(S::zero())];
        let mut frontier = vec![(0usize, 0usize)];
        while let Some((id, depth)) = frontier.pop() {
            let members: Vec<usize> = (0..grad.len()).filter(|&i| node_of[i] == id).collect();
            let split = if depth < self.params.depth { self.best_split(id, grad, node_of, members.len()) } else { None };
            match split {
                Some(s) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf(S::zero()));
                    nodes.push(Node::Leaf(S::zero()));
                    for &i in &members {
                        node_of[i] = if self.x.get(i, s.feature) <= s.threshold { left } else { right };
                    }
                    nodes[id] = Node::Split { feature: s.feature, threshold: s.threshold, left, right };
                    frontier.push((right, depth + 1));
                    frontier.push((left, depth + 1));
                }
                None => {
                    let value = match self.params.loss {
                        GbtLoss::Squared => stats::mean(&members.iter().map(|&i| grad[i]).collect::<Vec<_>>()),
                        GbtLoss::Absolute => stats::median(&members.iter().map(|&i| resid[i]).collect::<Vec<_>>())?,
                    };
                    nodes[id] = Node::Leaf(value);
                }
            }
        }
        Ok(Tree { nodes })
    }

    fn best_split(&self, id: usize, grad: &[S], node_of: &[usize], count: usize) -> Option<SplitChoice<S>> {
        let min_leaf = self.params.min_leaf;
        if count < 2 * min_leaf {
            return None;
        }
        let total: S = (0..grad.len()).filter(|&i| node_of[i] == id).map(|i| grad[i]).sum();
        let nf = S::from_count(count);
        let parent = total * total / nf;
        let mut best: Option<SplitChoice<S>> = None;
        for (feature, order) in self.order.iter().enumerate() {
            let mut left_n = 0usize;
            let mut left_sum = S::zero();
            let mut prev: Option<usize> = None;
            for &i in order {
                if node_of[i] != id {
                    continue;
                }
                if let Some(p) = prev {
                    let (xp, xi) = (self.x.get(p, feature), self.x.get(i, feature));
                    if left_n >= min_leaf && count - left_n >= min_leaf && xi > xp {
                        let right_sum = total - left_sum;
                        let ln = S::from_count(left_n);
                        let rn = S::from_count(count - left_n);
                        let gain = left_sum * left_sum / ln + right_sum * right_sum / rn - parent;
                        if best.as_ref().map_or(true, |b| gain > b.gain) {
                            best = Some(SplitChoice { feature, threshold: (xp + xi) / S::lit(2.0), gain });
                        }
                    }
                }
                left_n += 1;
                left_sum = left_sum + grad[i];
                prev = Some(i);
            }
        }
        best.filter(|b| b.gain > S::epsilon() * (parent.abs() + S::one()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> (Matrix<f64>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 200.0, ((i * 37) % 101) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] < 0.5 { 1.0 } else { 3.0 }).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn squared_loss_learns_a_step() {
        let (x, y) = step_data();
        let m = GbtModel::fit(&x, &y, &GbtParams::default()).unwrap();
        let pred = m.predict(&x);
        let err: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t).abs()).sum::<f64>() / 200.0;
        assert!(err < 0.01, "mean abs error {err}");
        assert!(m.loss_path.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn absolute_loss_resists_a_gross_outlier() {
        let (x, mut y) = step_data();
        y[10] = 1e4;
        let params = GbtParams { loss: GbtLoss::Absolute, ..GbtParams::default() };
        let m = GbtModel::fit(&x, &y, &params).unwrap();
        let pred = m.predict(&x);
        assert!((pred[20] - 1.0).abs() < 0.1, "prediction {}", pred[20]);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let (x, y) = step_data();
        let bad = GbtParams { rate: 0.0, ..GbtParams::default() };
        assert!(GbtModel::fit(&x, &y, &bad).is_err());
    }
}
