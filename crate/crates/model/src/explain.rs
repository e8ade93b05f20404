//! Exact Shapley attributions, SHAP importance and dependence rows, and
//! partial dependence.
//!
//! The value of a coalition `S` is the mean prediction over background rows
//! `z` of the hybrid row taking `x` on `S` and `z` elsewhere:
//!
//! ```text
//! v(S) = (1/|B|) Σ_z f(x_S, z_{F∖S})
//! φ_j  = Σ_{S ⊆ F∖{j}} |S|! (|F| − |S| − 1)! / |F|! · (v(S ∪ {j}) − v(S))
//! φ_0  = v(∅)
//! ```
//!
//! Every coalition is enumerated, so `φ_0 + Σ φ_j = v(F) = f(x)` holds up to
//! rounding. For tree ensembles the `2^|F|` values come from one pass per
//! (tree, background row): a hybrid row reaches a leaf iff the features where
//! `x` and `z` disagree along the path are in `S` (when the path follows `x`)
//! or not in `S` (when it follows `z`), so each leaf contributes to the
//! coalitions satisfying those constraints.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{ModelError, Result};
use crate::gbm::{BoostedModel, Tree};
use crate::ols::OlsModel;

pub const MAX_FEATURES: usize = 16;

/// Anything that maps a feature row to a prediction.
pub trait Predictor: Sync {
    fn predict_one(&self, x: &[f64]) -> f64;
}

impl Predictor for BoostedModel {
    fn predict_one(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

impl Predictor for OlsModel {
    fn predict_one(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for F {
    fn predict_one(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub phi0: f64,
    pub phi: Vec<f64>,
    pub prediction: f64,
    /// The explained row's feature values.
    pub row: Vec<f64>,
}

fn check(row: &[f64], background: &Dataset) -> Result<()> {
    let p = background.n_features();
    if background.n_rows() == 0 {
        return Err(ModelError::InvalidInput("empty background set".into()));
    }
    if p > MAX_FEATURES {
        return Err(ModelError::Intractable { max: MAX_FEATURES, got: p });
    }
    if row.len() != p {
        return Err(ModelError::Shape { expected: p, got: row.len() });
    }
    Ok(())
}

/// Shapley values from the coalition values `v[S]`, `S` as a bit set.
fn shapley_from_values(v: &[f64], p: usize, row: &[f64], prediction: f64) -> Explanation {
    let mut fact = vec![1.0f64; p + 1];
    for k in 1..=p {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..p).map(|s| fact[s] * fact[p - s - 1] / fact[p]).collect();
    let phi = (0..p)
        .map(|j| {
            let bit = 1usize << j;
            (0..v.len()).filter(|s| s & bit == 0).map(|s| weight[s.count_ones() as usize] * (v[s | bit] - v[s])).sum()
        })
        .collect();
    Explanation { phi0: v[0], phi, prediction, row: row.to_vec() }
}

/// Exact Shapley values for any model, by evaluating every hybrid row.
pub fn shapley_exact_generic<P: Predictor + ?Sized>(model: &P, row: &[f64], background: &Dataset) -> Result<Explanation> {
    check(row, background)?;
    let p = row.len();
    let m = background.n_rows() as f64;
    let mut hybrid = vec![0.0; p];
    let v: Vec<f64> = (0..1usize << p)
        .map(|s| {
            background
                .rows()
                .map(|z| {
                    for j in 0..p {
                        hybrid[j] = if s >> j & 1 == 1 { row[j] } else { z[j] };
                    }
                    model.predict_one(&hybrid)
                })
                .sum::<f64>()
                / m
        })
        .collect();
    Ok(shapley_from_values(&v, p, row, model.predict_one(row)))
}

/// Weights of leaf constraint pairs (A must be in S, N must not be).
enum Table {
    Dense { w: Vec<f64>, touched: Vec<usize> },
    Sparse(HashMap<usize, f64>),
}

impl Table {
    fn new(p: usize) -> Table {
        if p <= 8 {
            Table::Dense { w: vec![0.0; 1 << (2 * p)], touched: Vec::new() }
        } else {
            Table::Sparse(HashMap::new())
        }
    }

    fn add(&mut self, key: usize, value: f64) {
        match self {
            Table::Dense { w, touched } => {
                if w[key] == 0.0 {
                    touched.push(key);
                }
                w[key] += value;
            }
            Table::Sparse(map) => *map.entry(key).or_insert(0.0) += value,
        }
    }

    fn entries(&self) -> Vec<(usize, f64)> {
        let mut e: Vec<(usize, f64)> = match self {
            Table::Dense { w, touched } => {
                let mut t = touched.clone();
                t.sort_unstable();
                t.dedup();
                t.into_iter().map(|k| (k, w[k])).collect()
            }
            Table::Sparse(map) => map.iter().map(|(&k, &v)| (k, v)).collect(),
        };
        e.sort_unstable_by_key(|&(k, _)| k);
        e
    }
}

#[allow(clippy::too_many_arguments)]
fn descend(tree: &Tree, node: usize, x: &[f64], z: &[f64], a: usize, n: usize, p: usize, scale: f64, table: &mut Table) {
    let nd = &tree.nodes[node];
    let Some(f) = nd.feature else {
        table.add(a | n << p, scale * nd.value);
        return;
    };
    let bit = 1 << f;
    let child = |left: bool| if left { nd.left } else { nd.right };
    let (xl, zl) = (x[f] <= nd.threshold, z[f] <= nd.threshold);
    if a & bit != 0 {
        descend(tree, child(xl), x, z, a, n, p, scale, table);
    } else if n & bit != 0 || xl == zl {
        descend(tree, child(zl), x, z, a, n, p, scale, table);
    } else {
        descend(tree, child(xl), x, z, a | bit, n, p, scale, table);
        descend(tree, child(zl), x, z, a, n | bit, p, scale, table);
    }
}

/// Exact Shapley values for a boosted tree ensemble.
pub fn shapley_exact(model: &BoostedModel, row: &[f64], background: &Dataset) -> Result<Explanation> {
    check(row, background)?;
    if background.n_features() != model.n_features() {
        return Err(ModelError::Shape { expected: model.n_features(), got: background.n_features() });
    }
    let p = row.len();
    let scale = model.learning_rate / background.n_rows() as f64;
    let mut table = Table::new(p);
    for tree in &model.trees {
        for z in background.rows() {
            descend(tree, 0, row, z, 0, 0, p, scale, &mut table);
        }
    }
    let full = (1usize << p) - 1;
    let mut v = vec![model.base_score; 1 << p];
    for (key, w) in table.entries() {
        let (a, n) = (key & full, key >> p);
        let free = full & !(a | n);
        // every subset t of `free`, including the empty set
        let mut t = free;
        loop {
            v[a | t] += w;
            if t == 0 {
                break;
            }
            t = (t - 1) & free;
        }
    }
    Ok(shapley_from_values(&v, p, row, model.eval(row)))
}

/// Explanations of every row of `rows`, in order.
pub fn explain_rows(model: &BoostedModel, rows: &Dataset, background: &Dataset) -> Result<Vec<Explanation>> {
    (0..rows.n_rows()).into_par_iter().map(|i| shapley_exact(model, rows.row(i), background)).collect()
}

/// Up to `size` distinct rows of `data`, chosen by a seeded shuffle and kept
/// in their original order.
pub fn sample_rows(data: &Dataset, size: usize, seed: u64) -> Dataset {
    let mut idx: Vec<usize> = (0..data.n_rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(size);
    idx.sort_unstable();
    data.subset(&idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: usize,
    pub name: String,
    /// Mean |φ_j| over the explanations.
    pub value: f64,
}

/// Mean absolute Shapley value per feature, largest first; equal values keep
/// feature order.
pub fn shap_importance(explanations: &[Explanation], names: &[String]) -> Result<Vec<Importance>> {
    if explanations.is_empty() {
        return Err(ModelError::InvalidInput("no explanations".into()));
    }
    let m = explanations.len() as f64;
    let mut out: Vec<Importance> = names
        .iter()
        .enumerate()
        .map(|(j, name)| Importance { feature: j, name: name.clone(), value: explanations.iter().map(|e| e.phi[j].abs()).sum::<f64>() / m })
        .collect();
    out.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceRow {
    pub x: f64,
    pub phi: f64,
    /// Value of the interaction (colouring) feature.
    pub interaction: f64,
}

/// One row per explanation: feature `j`'s value and attribution, and the value
/// of feature `h`.
pub fn shap_dependence(explanations: &[Explanation], j: usize, h: usize) -> Vec<DependenceRow> {
    explanations.iter().map(|e| DependenceRow { x: e.row[j], phi: e.phi[j], interaction: e.row[h] }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PdpGrid {
    Values(Vec<f64>),
    /// This many evenly spaced quantiles of the reference values (fewer when
    /// the feature has fewer distinct values).
    Quantiles(usize),
}

/// Evenly spaced quantiles (linear interpolation), deduplicated.
pub fn quantile_grid(values: &[f64], g: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() || g == 0 {
        return Vec::new();
    }
    if g == 1 {
        return vec![ridesplit_core::stats::quantile_sorted(&v, 0.5)];
    }
    let mut out: Vec<f64> = (0..g).map(|k| ridesplit_core::stats::quantile_sorted(&v, k as f64 / (g - 1) as f64)).collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpResult {
    pub features: Vec<usize>,
    pub grids: Vec<Vec<f64>>,
    /// Mean prediction per grid point; for two features, row-major with the
    /// first feature's grid as rows.
    pub values: Vec<f64>,
    /// Reference rows nearest to each grid point (or cell), same layout.
    pub counts: Vec<usize>,
}

fn nearest(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (k, g) in grid.iter().enumerate() {
        if (g - x).abs() < (grid[best] - x).abs() {
            best = k;
        }
    }
    best
}

/// Resolved grids and grid points (row-major for two features).
fn prepare(reference: &Dataset, features: &[usize], grids: &[PdpGrid]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if reference.n_rows() == 0 {
        return Err(ModelError::InvalidInput("empty reference set".into()));
    }
    if !(1..=2).contains(&features.len()) || grids.len() != features.len() {
        return Err(ModelError::InvalidInput("partial dependence takes one or two features, each with a grid".into()));
    }
    if features.iter().any(|&f| f >= reference.n_features()) || (features.len() == 2 && features[0] == features[1]) {
        return Err(ModelError::InvalidInput(format!("bad feature indices {features:?}")));
    }
    let grids: Vec<Vec<f64>> = features
        .iter()
        .zip(grids)
        .map(|(&f, g)| match g {
            PdpGrid::Values(v) => v.clone(),
            PdpGrid::Quantiles(k) => quantile_grid(&reference.column(f), *k),
        })
        .collect();
    let points: Vec<Vec<f64>> = match grids.as_slice() {
        [g] => g.iter().map(|&a| vec![a]).collect(),
        [g1, g2] => g1.iter().flat_map(|&a| g2.iter().map(move |&b| vec![a, b])).collect(),
        _ => unreachable!(),
    };
    Ok((grids, points))
}

/// Reference rows nearest to each grid point (or cell).
fn histogram(reference: &Dataset, features: &[usize], grids: &[Vec<f64>]) -> Vec<usize> {
    let mut counts = vec![0; grids.iter().map(Vec::len).product()];
    for r in reference.rows() {
        let k = match grids {
            [g] => nearest(g, r[features[0]]),
            [g1, g2] => nearest(g1, r[features[0]]) * g2.len() + nearest(g2, r[features[1]]),
            _ => unreachable!(),
        };
        if let Some(c) = counts.get_mut(k) {
            *c += 1;
        }
    }
    counts
}

/// Partial dependence of one or two features:
/// `f̂(x_s) = (1/M) Σ_m f(x_s, x_c^{(m)})` over the reference rows.
pub fn pdp<P: Predictor + ?Sized>(model: &P, reference: &Dataset, features: &[usize], grids: &[PdpGrid]) -> Result<PdpResult> {
    let (grids, points) = prepare(reference, features, grids)?;
    let m = reference.n_rows() as f64;
    let values = points
        .par_iter()
        .map(|pt| {
            let mut row = vec![0.0; reference.n_features()];
            reference
                .rows()
                .map(|r| {
                    row.copy_from_slice(r);
                    for (&f, &v) in features.iter().zip(pt) {
                        row[f] = v;
                    }
                    model.predict_one(&row)
                })
                .sum::<f64>()
                / m
        })
        .collect();
    let counts = histogram(reference, features, &grids);
    Ok(PdpResult { features: features.to_vec(), grids, values, counts })
}

/// In-place partition; returns the number of elements satisfying `left`.
fn partition(items: &mut [u32], left: impl Fn(u32) -> bool) -> usize {
    let mut k = 0;
    for i in 0..items.len() {
        if left(items[i]) {
            items.swap(i, k);
            k += 1;
        }
    }
    k
}

struct PdWalk<'a> {
    tree: &'a Tree,
    reference: &'a Dataset,
    features: &'a [usize],
    points: &'a [Vec<f64>],
}

impl PdWalk<'_> {
    /// Sends every (reference row, grid point) pair down the tree at once:
    /// splits on a grid feature divide the points, other splits divide the rows.
    fn walk(&self, node: usize, rows: &mut [u32], pts: &mut [u32], acc: &mut [f64]) {
        let nd = &self.tree.nodes[node];
        let Some(f) = nd.feature else {
            let c = rows.len() as f64;
            for &p in pts.iter() {
                acc[p as usize] += nd.value * c;
            }
            return;
        };
        if let Some(a) = self.features.iter().position(|&s| s == f) {
            let k = partition(pts, |p| self.points[p as usize][a] <= nd.threshold);
            let (l, r) = pts.split_at_mut(k);
            if !l.is_empty() {
                self.walk(nd.left, rows, l, acc);
            }
            if !r.is_empty() {
                self.walk(nd.right, rows, r, acc);
            }
        } else {
            let k = partition(rows, |i| self.reference.value(i as usize, f) <= nd.threshold);
            let (l, r) = rows.split_at_mut(k);
            if !l.is_empty() {
                self.walk(nd.left, l, pts, acc);
            }
            if !r.is_empty() {
                self.walk(nd.right, r, pts, acc);
            }
        }
    }
}

/// [`pdp`] for a tree ensemble, walking each tree once instead of once per
/// (grid point, reference row). Equal to [`pdp`] up to summation order.
pub fn pdp_trees(model: &BoostedModel, reference: &Dataset, features: &[usize], grids: &[PdpGrid]) -> Result<PdpResult> {
    let (grids, points) = prepare(reference, features, grids)?;
    if reference.n_features() != model.n_features() {
        return Err(ModelError::Shape { expected: model.n_features(), got: reference.n_features() });
    }
    let m = reference.n_rows();
    let mut total = vec![0.0; points.len()];
    let mut per_tree = vec![0.0; points.len()];
    let mut rows: Vec<u32> = (0..m as u32).collect();
    let mut pts: Vec<u32> = (0..points.len() as u32).collect();
    for tree in &model.trees {
        per_tree.fill(0.0);
        PdWalk { tree, reference, features, points: &points }.walk(0, &mut rows, &mut pts, &mut per_tree);
        for (t, v) in total.iter_mut().zip(&per_tree) {
            *t += model.learning_rate * v;
        }
    }
    let values = total.iter().map(|t| model.base_score + t / m as f64).collect();
    let counts = histogram(reference, features, &grids);
    Ok(PdpResult { features: features.to_vec(), grids, values, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbm::{train, Hyperparams, Node};
    use rand::{Rng, SeedableRng};

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    fn stump_model(p: usize) -> BoostedModel {
        let tree = Tree {
            nodes: vec![
                Node { feature: Some(0), threshold: 0.0, left: 1, right: 2, value: 0.0 },
                Node { feature: None, threshold: 0.0, left: 0, right: 0, value: 0.0 },
                Node { feature: None, threshold: 0.0, left: 0, right: 0, value: 10.0 },
            ],
        };
        BoostedModel {
            feature_names: names(p),
            base_score: 0.0,
            learning_rate: 1.0,
            hyperparams: Hyperparams::default(),
            bin_edges: vec![vec![]; p],
            trees: vec![tree],
            loss_trace: vec![],
        }
    }

    #[test]
    fn single_split_by_hand() {
        let bg = Dataset::new(names(2), &[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        let m = stump_model(2);
        for e in [shapley_exact(&m, &[1.0, 3.0], &bg).unwrap(), shapley_exact_generic(&m, &[1.0, 3.0], &bg).unwrap()] {
            assert_eq!(e.phi0, 5.0);
            assert_eq!(e.phi, vec![5.0, 0.0]);
            assert_eq!(e.prediction, 10.0);
        }
    }

    #[test]
    fn constant_model() {
        let bg = Dataset::new(names(3), &[vec![1.0, 2.0, 3.0]], vec![0.0]).unwrap();
        let e = shapley_exact_generic(&|_: &[f64]| 4.0, &[0.0, 0.0, 0.0], &bg).unwrap();
        assert_eq!((e.phi0, e.phi.clone()), (4.0, vec![0.0; 3]));
        let r = pdp(&|_: &[f64]| 4.0, &bg, &[1], &[PdpGrid::Values(vec![0.0, 1.0, 2.0])]).unwrap();
        assert_eq!(r.values, vec![4.0; 3]);
        let rows = shap_dependence(&[e], 0, 2);
        assert_eq!(rows, vec![DependenceRow { x: 0.0, phi: 0.0, interaction: 0.0 }]);
    }

    #[test]
    fn errors() {
        let m = stump_model(2);
        let bg = Dataset::new(names(2), &[vec![1.0, 0.0]], vec![0.0]).unwrap();
        assert!(matches!(shapley_exact(&m, &[1.0], &bg), Err(ModelError::Shape { .. })));
        let empty = bg.subset(&[]);
        assert!(shapley_exact(&m, &[1.0, 0.0], &empty).is_err());
        let wide = Dataset::new(names(17), &[vec![0.0; 17]], vec![0.0]).unwrap();
        assert!(matches!(shapley_exact_generic(&|_: &[f64]| 0.0, &[0.0; 17], &wide), Err(ModelError::Intractable { max: 16, got: 17 })));
    }

    fn trained(seed: u64) -> (BoostedModel, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let y = rows.iter().map(|r| 4.0 * r[0] * r[1] + (3.0 * r[2]).sin() + r[3]).collect();
        let d = Dataset::new(names(5), &rows, y).unwrap();
        let m =
            train(&d, &Hyperparams { iterations: 40, learning_rate: 0.2, depth: 4, min_samples_leaf: 5, ..Default::default() }).unwrap();
        (m, d)
    }

    #[test]
    fn tree_and_generic_routes_agree() {
        let (m, d) = trained(1);
        let bg = sample_rows(&d, 30, 2);
        for i in 0..10 {
            let a = shapley_exact(&m, d.row(i), &bg).unwrap();
            let b = shapley_exact_generic(&m, d.row(i), &bg).unwrap();
            assert!((a.phi0 - b.phi0).abs() < 1e-10);
            for (x, y) in a.phi.iter().zip(&b.phi) {
                assert!((x - y).abs() < 1e-10);
            }
            assert!((a.phi0 + a.phi.iter().sum::<f64>() - a.prediction).abs() < 1e-8);
            // x4 never affects the target and is unlikely to be used; if unused, φ = 0
            if m.trees.iter().all(|t| t.nodes.iter().all(|n| n.feature != Some(4))) {
                assert_eq!(a.phi[4], 0.0);
            }
        }
    }

    #[test]
    fn symmetric_features_share_credit() {
        let f = |x: &[f64]| if x[0] > 0.5 && x[1] > 0.5 { 1.0 } else { 0.0 };
        let bg = Dataset::new(names(2), &[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0; 4]).unwrap();
        let e = shapley_exact_generic(&f, &[1.0, 1.0], &bg).unwrap();
        assert!((e.phi[0] - e.phi[1]).abs() < 1e-10);
    }

    #[test]
    fn importance_order_and_ties() {
        let e = |phi: Vec<f64>| Explanation { phi0: 0.0, phi, prediction: 0.0, row: vec![0.0; 3] };
        let imp = shap_importance(&[e(vec![1.0, -3.0, 1.0])], &names(3)).unwrap();
        let order: Vec<usize> = imp.iter().map(|i| i.feature).collect();
        assert_eq!(order, vec![1, 0, 2]);
        assert_eq!(imp[0].value, 3.0);
        assert!(shap_importance(&[], &names(3)).is_err());
    }

    #[test]
    fn pdp_matches_double_loop() {
        let (m, d) = trained(3);
        let r = pdp(&m, &d, &[0, 2], &[PdpGrid::Quantiles(5), PdpGrid::Quantiles(4)]).unwrap();
        assert_eq!(r.values.len(), r.grids[0].len() * r.grids[1].len());
        assert_eq!(r.counts.iter().sum::<usize>(), d.n_rows());
        for (a, &ga) in r.grids[0].iter().enumerate() {
            for (b, &gb) in r.grids[1].iter().enumerate() {
                let mut s = 0.0;
                for row in d.rows() {
                    let mut x = row.to_vec();
                    x[0] = ga;
                    x[2] = gb;
                    s += m.predict_row(&x).unwrap();
                }
                assert!((r.values[a * r.grids[1].len() + b] - s / d.n_rows() as f64).abs() < 1e-12);
            }
        }
        let lin = pdp(&|x: &[f64]| 2.0 * x[0], &d, &[0], &[PdpGrid::Quantiles(20)]).unwrap();
        for (g, v) in lin.grids[0].iter().zip(&lin.values) {
            assert!((v - 2.0 * g).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_walk_pdp_matches_brute_force() {
        let (m, d) = trained(4);
        for (features, grids) in [
            (vec![1], vec![PdpGrid::Quantiles(20)]),
            (vec![4], vec![PdpGrid::Values(vec![-1.0, 0.5, 2.0])]),
            (vec![0, 1], vec![PdpGrid::Quantiles(20), PdpGrid::Quantiles(20)]),
        ] {
            let fast = pdp_trees(&m, &d, &features, &grids).unwrap();
            let slow = pdp(&m, &d, &features, &grids).unwrap();
            assert_eq!((&fast.grids, &fast.counts), (&slow.grids, &slow.counts));
            for (a, b) in fast.values.iter().zip(&slow.values) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn quantile_grids() {
        assert_eq!(quantile_grid(&[3.0; 7], 20), vec![3.0]);
        assert_eq!(quantile_grid(&[0.0, 1.0, 0.0, 0.0, 0.0], 3), vec![0.0, 1.0]);
        let g = quantile_grid(&(0..=100).map(f64::from).collect::<Vec<_>>(), 5);
        assert_eq!(g, vec![0.0, 25.0, 50.0, 75.0, 100.0]);
    }
}
