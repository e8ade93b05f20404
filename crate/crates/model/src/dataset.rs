//! Feature matrices with named columns, and the seeded partitions used for
//! testing and cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ridesplit_core::features::{Column, HasColumns, TripRecord};

use crate::error::{ModelError, Result};

/// Row-major feature matrix and target vector. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(names: Vec<String>, rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(ModelError::Shape { expected: p, got: r.len() });
        }
        Self::from_flat(names, rows.concat(), y)
    }

    pub fn from_flat(names: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(ModelError::InvalidInput("a dataset needs at least one feature".into()));
        }
        if x.len() != p * y.len() {
            return Err(ModelError::InvalidInput(format!("{} values do not form {} rows of {p} features", x.len(), y.len())));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidInput("missing or non-finite values".into()));
        }
        Ok(Dataset { names, x, y })
    }

    /// The given columns of each record as features, ERR as the target.
    pub fn from_records(records: &[TripRecord], columns: &[Column]) -> Result<Self> {
        let names = columns.iter().map(|c| c.name().to_owned()).collect();
        let x = records.iter().flat_map(|r| columns.iter().map(|&c| r.column(c))).collect();
        let y = records.iter().map(|r| r.err_g_per_km).collect();
        Self::from_flat(names, x, y)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.n_features())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.n_features() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn target(&self) -> &[f64] {
        &self.y
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            x: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle, then the first `round(n · ratio)` rows train.
pub fn train_test_split(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n_rows();
    if n < 5 {
        return Err(ModelError::InvalidInput(format!("need at least 5 rows to split, got {n}")));
    }
    let n_train = (n as f64 * ratio).round();
    if !(ratio > 0.0 && ratio < 1.0) || n_train < 1.0 || n_train >= n as f64 {
        return Err(ModelError::InvalidRatio(ratio));
    }
    let idx = shuffled(n, seed);
    let (a, b) = idx.split_at(n_train as usize);
    Ok((data.subset(a), data.subset(b)))
}

/// `k` disjoint validation folds covering all rows: a seeded shuffle cut into
/// contiguous chunks whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(ModelError::InvalidInput(format!("cannot make {k} folds from {n} rows")));
    }
    let idx = shuffled(n, seed);
    let (q, r) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = q + usize::from(f < r);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        Dataset::new(vec!["a".into(), "b".into()], &rows, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn shape_checks() {
        assert!(Dataset::new(vec!["a".into()], &[vec![1.0, 2.0]], vec![0.0]).is_err());
        assert!(Dataset::new(vec!["a".into()], &[vec![f64::NAN]], vec![0.0]).is_err());
        let d = toy(3);
        assert_eq!(d.row(2), &[2.0, 4.0]);
        assert_eq!(d.column(1), vec![0.0, 1.0, 4.0]);
        assert_eq!(d.subset(&[2, 0]).target(), &[2.0, 0.0]);
    }

    #[test]
    fn eight_two_split() {
        let (a, b) = train_test_split(&toy(10), 0.8, 1).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (8, 2));
        let (c, _) = train_test_split(&toy(10), 0.8, 1).unwrap();
        assert_eq!(a, c);
        assert!(matches!(train_test_split(&toy(10), 1.0, 1), Err(ModelError::InvalidRatio(_))));
        assert!(matches!(train_test_split(&toy(10), 0.0, 1), Err(ModelError::InvalidRatio(_))));
        assert!(train_test_split(&toy(4), 0.5, 1).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 5usize..200, ratio in 0.1f64..0.9, seed in any::<u64>()) {
            let d = toy(n);
            if let Ok((a, b)) = train_test_split(&d, ratio, seed) {
                let mut all: Vec<f64> = a.target().iter().chain(b.target()).copied().collect();
                all.sort_by(f64::total_cmp);
                prop_assert_eq!(all, d.target().to_vec());
            }
        }

        #[test]
        fn folds_partition_rows(n in 5usize..300, k in 2usize..6, seed in any::<u64>()) {
            let folds = kfold_indices(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
