//! k-fold cross-validated grid search over iterations, learning rate and depth.
//!
//! Boosting rounds are sequential and a round does not depend on the total
//! round count, so the first `k` trees of a longer run are exactly the model
//! trained for `k` rounds. Each (fold, learning rate, depth) is therefore
//! trained once, to the largest iteration count, and scored at every
//! iteration count of the grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{kfold_indices, Dataset};
use crate::error::{ModelError, Result};
use crate::gbm::{train, Hyperparams};
use crate::metrics::rmse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub iterations: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub depths: Vec<usize>,
}

impl Default for ParamGrid {
    /// 7 × 3 × 6 = 126 combinations.
    fn default() -> Self {
        ParamGrid { iterations: (2000..=5000).step_by(500).collect(), learning_rates: vec![0.005, 0.01, 0.05], depths: (3..=8).collect() }
    }
}

impl ParamGrid {
    pub fn len(&self) -> usize {
        self.iterations.len() * self.learning_rates.len() * self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (iterations, learning rate, depth) in enumeration order.
    pub fn combinations(&self) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for &it in &self.iterations {
            for &lr in &self.learning_rates {
                for &d in &self.depths {
                    out.push((it, lr, d));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub iterations: usize,
    pub learning_rate: f64,
    pub depth: usize,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    /// One row per combination, in enumeration order.
    pub rows: Vec<CvRow>,
    pub best_index: usize,
    pub best: Hyperparams,
}

/// Scores every grid combination by mean validation RMSE over `folds` folds
/// (fixed by `seed` for all combinations). The best has the lowest mean RMSE;
/// ties go to fewer iterations, then smaller depth, then lower learning rate.
/// `base` supplies the hyperparameters the grid does not vary.
pub fn grid_search_cv(data: &Dataset, grid: &ParamGrid, base: &Hyperparams, folds: usize, seed: u64) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(ModelError::InvalidInput("empty hyperparameter grid".into()));
    }
    for (it, lr, d) in grid.combinations() {
        Hyperparams { iterations: it, learning_rate: lr, depth: d, ..base.clone() }.validate()?;
    }
    let fold_rows = kfold_indices(data.n_rows(), folds, seed)?;
    let max_iter = *grid.iterations.iter().max().expect("non-empty grid");

    let tasks: Vec<(usize, f64, usize)> =
        (0..folds).flat_map(|f| grid.learning_rates.iter().flat_map(move |&lr| grid.depths.iter().map(move |&d| (f, lr, d)))).collect();
    // rmse at every grid iteration count, per task
    let scores: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(f, lr, depth)| {
            let valid = data.subset(&fold_rows[f]);
            let train_idx: Vec<usize> =
                fold_rows.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, r)| r.iter().copied()).collect();
            let hp = Hyperparams { iterations: max_iter, learning_rate: lr, depth, ..base.clone() };
            let model = train(&data.subset(&train_idx), &hp)?;
            let mut pred = vec![model.base_score; valid.n_rows()];
            let mut at = vec![f64::NAN; grid.iterations.len()];
            for (round, tree) in model.trees.iter().enumerate() {
                for (p, r) in pred.iter_mut().zip(valid.rows()) {
                    *p += lr * tree.predict(r);
                }
                for (k, &it) in grid.iterations.iter().enumerate() {
                    if it == round + 1 {
                        at[k] = rmse(&pred, valid.target());
                    }
                }
            }
            Ok(at)
        })
        .collect::<Result<_>>()?;

    let task_of = |f: usize, lr_i: usize, d_i: usize| (f * grid.learning_rates.len() + lr_i) * grid.depths.len() + d_i;
    let mut rows = Vec::with_capacity(grid.len());
    for (k, &it) in grid.iterations.iter().enumerate() {
        for (lr_i, &lr) in grid.learning_rates.iter().enumerate() {
            for (d_i, &depth) in grid.depths.iter().enumerate() {
                let fold_rmse: Vec<f64> = (0..folds).map(|f| scores[task_of(f, lr_i, d_i)][k]).collect();
                let mean_rmse = fold_rmse.iter().sum::<f64>() / folds as f64;
                rows.push(CvRow { iterations: it, learning_rate: lr, depth, fold_rmse, mean_rmse });
            }
        }
    }
    let best_index = (0..rows.len())
        .min_by(|&a, &b| {
            let (x, y) = (&rows[a], &rows[b]);
            x.mean_rmse
                .total_cmp(&y.mean_rmse)
                .then(x.iterations.cmp(&y.iterations))
                .then(x.depth.cmp(&y.depth))
                .then(x.learning_rate.total_cmp(&y.learning_rate))
        })
        .expect("non-empty grid");
    let b = &rows[best_index];
    let best = Hyperparams { iterations: b.iterations, learning_rate: b.learning_rate, depth: b.depth, ..base.clone() };
    Ok(CvOutcome { rows, best_index, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y = rows.iter().map(|r| (6.0 * r[0]).sin() + r[1] + 0.1 * rng.random::<f64>()).collect();
        Dataset::new(vec!["a".into(), "b".into()], &rows, y).unwrap()
    }

    fn base() -> Hyperparams {
        Hyperparams { min_samples_leaf: 5, ..Default::default() }
    }

    #[test]
    fn paper_grid_size() {
        let g = ParamGrid::default();
        assert_eq!(g.len(), 126);
        assert_eq!(g.iterations, vec![2000, 2500, 3000, 3500, 4000, 4500, 5000]);
        assert_eq!(g.combinations().len(), 126);
    }

    #[test]
    fn single_combination() {
        let g = ParamGrid { iterations: vec![7], learning_rates: vec![0.2], depths: vec![2] };
        let out = grid_search_cv(&data(100), &g, &base(), 5, 1).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!((out.best.iterations, out.best.learning_rate, out.best.depth), (7, 0.2, 2));
    }

    #[test]
    fn staged_scores_equal_separate_training() {
        let d = data(150);
        let g = ParamGrid { iterations: vec![4, 9], learning_rates: vec![0.1, 0.3], depths: vec![1, 3] };
        let out = grid_search_cv(&d, &g, &base(), 3, 11).unwrap();
        let folds = kfold_indices(150, 3, 11).unwrap();
        for row in &out.rows {
            for (f, &score) in row.fold_rmse.iter().enumerate() {
                let train_idx: Vec<usize> = (0..3).filter(|&g| g != f).flat_map(|g| folds[g].clone()).collect();
                let hp = Hyperparams { iterations: row.iterations, learning_rate: row.learning_rate, depth: row.depth, ..base() };
                let m = train(&d.subset(&train_idx), &hp).unwrap();
                let valid = d.subset(&folds[f]);
                let expected = evaluate(&m.predict(&valid).unwrap(), valid.target()).unwrap().rmse;
                assert!((score - expected).abs() <= 1e-12 * expected, "{row:?}");
            }
        }
        let best = &out.rows[out.best_index];
        assert!(out.rows.iter().all(|r| r.mean_rmse >= best.mean_rmse));
    }

    #[test]
    fn dominant_combination_wins() {
        // depth 3 with more rounds fits this signal better on every fold
        let g = ParamGrid { iterations: vec![1, 60], learning_rates: vec![0.3], depths: vec![3] };
        let out = grid_search_cv(&data(300), &g, &base(), 5, 2).unwrap();
        let (a, b) = (&out.rows[0], &out.rows[1]);
        assert!(a.fold_rmse.iter().zip(&b.fold_rmse).all(|(x, y)| y < x));
        assert_eq!(out.best.iterations, 60);
    }

    #[test]
    fn ties_prefer_fewer_iterations_then_shallower() {
        // a constant target scores identically everywhere
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![f64::from(i)]).collect();
        let d = Dataset::new(vec!["a".into()], &rows, vec![2.0; 50]).unwrap();
        let g = ParamGrid { iterations: vec![5, 3], learning_rates: vec![0.5, 0.1], depths: vec![4, 2] };
        let out = grid_search_cv(&d, &g, &base(), 5, 0).unwrap();
        assert_eq!((out.best.iterations, out.best.depth, out.best.learning_rate), (3, 2, 0.1));
    }
}
