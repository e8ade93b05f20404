//! Gradient-boosted regression trees with squared loss and histogram split
//! search.
//!
//! Each feature is cut into at most `n_bins` bins. The cut points are
//! midpoints between consecutive distinct training values, so when a feature
//! has no more distinct values than bins the histogram search sees every
//! possible split. A row goes left at a node iff `x[feature] <= threshold`.
//!
//! Every round fits one tree to the current residuals. A node's split maximizes
//! `S_L²/n_L + S_R²/n_R − S²/n` (the squared-error reduction), subject to
//! `min_samples_leaf` rows on each side; ties keep the lowest feature index,
//! then the lowest threshold. Leaves hold the mean residual of their rows and
//! predictions are `base_score + learning_rate · Σ leaf values`.
//!
//! Training sorts the rows into a canonical order first, so the fitted model
//! does not depend on the order of the input rows.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{ModelError, Result};

/// A split is refused unless its gain exceeds this fraction of the node's Σr².
const MIN_RELATIVE_GAIN: f64 = 1e-10;
const FORMAT: &str = "ridesplit-gbm";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Split every splittable node of a level before the next, up to `depth`.
    #[default]
    LevelWise,
    /// Split the open leaf with the largest gain, up to `max_leaves` and `depth`.
    LeafWise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub iterations: usize,
    pub learning_rate: f64,
    pub depth: usize,
    pub n_bins: usize,
    pub min_samples_leaf: usize,
    pub growth: Growth,
    /// Only used by leaf-wise growth.
    pub max_leaves: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            iterations: 500,
            learning_rate: 0.05,
            depth: 6,
            n_bins: 255,
            min_samples_leaf: 20,
            growth: Growth::LevelWise,
            max_leaves: 31,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Hyperparams(m.to_owned()));
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning rate must lie in (0, 1]");
        }
        if self.depth < 1 {
            return bad("depth must be at least 1");
        }
        if !(2..=1 << 16).contains(&self.n_bins) {
            return bad("n_bins must lie in [2, 65536]");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        if self.growth == Growth::LeafWise && self.max_leaves < 2 {
            return bad("max_leaves must be at least 2");
        }
        Ok(())
    }
}

fn cut_between(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

/// Sorted cut points for one feature.
fn feature_edges(mut values: Vec<f64>, n_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() <= n_bins {
        return distinct.windows(2).map(|w| cut_between(w[0], w[1])).collect();
    }
    let n = values.len();
    let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
    for k in 1..n_bins {
        let v = values[k * n / n_bins - 1];
        let next = distinct.partition_point(|&d| d <= v);
        if next == distinct.len() {
            continue;
        }
        let e = cut_between(v, distinct[next]);
        if edges.last().is_none_or(|&l| e > l) {
            edges.push(e);
        }
    }
    edges
}

/// Column-major bin indices.
struct Binned {
    n: usize,
    cols: Vec<u16>,
    offsets: Vec<usize>,
    n_bins: Vec<usize>,
    total: usize,
}

impl Binned {
    fn new(data: &Dataset, edges: &[Vec<f64>]) -> Self {
        let n = data.n_rows();
        let mut cols = Vec::with_capacity(n * edges.len());
        for (j, e) in edges.iter().enumerate() {
            cols.extend(data.rows().map(|r| e.partition_point(|&c| c < r[j]) as u16));
        }
        let n_bins: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
        let mut offsets = Vec::with_capacity(n_bins.len());
        let mut total = 0;
        for &b in &n_bins {
            offsets.push(total);
            total += b;
        }
        Binned { n, cols, offsets, n_bins, total }
    }

    fn col(&self, j: usize) -> &[u16] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }
}

struct Hist {
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl Hist {
    fn build(b: &Binned, r: &[f64], rows: &[u32]) -> Hist {
        let mut h = Hist { sum: vec![0.0; b.total], count: vec![0; b.total] };
        for j in 0..b.n_bins.len() {
            let col = b.col(j);
            let off = b.offsets[j];
            let (sum, count) = (&mut h.sum[off..off + b.n_bins[j]], &mut h.count[off..off + b.n_bins[j]]);
            for &i in rows {
                let k = col[i as usize] as usize;
                sum[k] += r[i as usize];
                count[k] += 1;
            }
        }
        h
    }

    fn subtract(&mut self, other: &Hist) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a -= b;
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a -= b;
        }
    }
}

/// The best split of a node: go left iff `x[feature] <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitInfo {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left_count: usize,
    bin: usize,
}

fn search(b: &Binned, edges: &[Vec<f64>], h: &Hist, s: f64, n: usize, min_leaf: usize) -> Option<SplitInfo> {
    let parent = s * s / n as f64;
    let mut best: Option<SplitInfo> = None;
    for j in 0..b.n_bins.len() {
        let off = b.offsets[j];
        let (mut sl, mut nl) = (0.0, 0usize);
        for k in 0..b.n_bins[j] - 1 {
            sl += h.sum[off + k];
            nl += h.count[off + k] as usize;
            if nl < min_leaf {
                continue;
            }
            let nr = n - nl;
            if nr < min_leaf {
                break;
            }
            let sr = s - sl;
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
            if best.is_none_or(|bs| gain > bs.gain) {
                best = Some(SplitInfo { feature: j, threshold: edges[j][k], gain, left_count: nl, bin: k });
            }
        }
    }
    best
}

/// The same search over the occupied bins only, found by sorting the node's
/// rows by bin. Per-bin sums accumulate in row order, as `Hist::build` does,
/// and empty bins contribute exact zeros, so this matches `search` on a
/// directly built histogram.
fn search_sparse(
    b: &Binned,
    edges: &[Vec<f64>],
    r: &[f64],
    rows: &[u32],
    s: f64,
    min_leaf: usize,
    keys: &mut Vec<u64>,
) -> Option<SplitInfo> {
    let n = rows.len();
    let parent = s * s / n as f64;
    let mut best: Option<SplitInfo> = None;
    for j in 0..b.n_bins.len() {
        let col = b.col(j);
        keys.clear();
        keys.extend(rows.iter().enumerate().map(|(pos, &i)| u64::from(col[i as usize]) << 32 | pos as u64));
        keys.sort_unstable();
        let (mut sl, mut nl) = (0.0, 0usize);
        let mut g = 0;
        while g < n {
            let bin = (keys[g] >> 32) as usize;
            let mut bin_sum = 0.0;
            while g < n && (keys[g] >> 32) as usize == bin {
                bin_sum += r[rows[(keys[g] & 0xffff_ffff) as usize] as usize];
                nl += 1;
                g += 1;
            }
            sl += bin_sum;
            if nl < min_leaf {
                continue;
            }
            let nr = n - nl;
            if nr < min_leaf {
                break;
            }
            let sr = s - sl;
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
            if best.is_none_or(|bs| gain > bs.gain) {
                best = Some(SplitInfo { feature: j, threshold: edges[j][bin], gain, left_count: nl, bin });
            }
        }
    }
    best
}

struct Open {
    node: usize,
    begin: usize,
    end: usize,
    depth: usize,
    /// Present iff the node is searched densely.
    hist: Option<Hist>,
    split: Option<SplitInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// `None` for a leaf.
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Leaf value (mean residual); zero on internal nodes.
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Node {
        Node { feature: None, threshold: 0.0, left: 0, right: 0, value }
    }
}

/// A regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return n.value,
                Some(f) => i = if x[f] <= n.threshold { n.left } else { n.right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].feature {
                None => 0,
                Some(_) => 1 + go(t, t.nodes[i].left).max(go(t, t.nodes[i].right)),
            }
        }
        go(self, 0)
    }
}

struct Grower<'a> {
    b: &'a Binned,
    edges: &'a [Vec<f64>],
    r: &'a [f64],
    hp: &'a Hyperparams,
    idx: &'a mut [u32],
    scratch: Vec<u32>,
    keys: Vec<u64>,
    nodes: Vec<Node>,
    /// (begin, end, value) of every finished leaf.
    leaves: Vec<(usize, usize, f64)>,
}

impl Grower<'_> {
    /// Nodes this small skip histograms and use the sparse search.
    fn dense(&self, rows: usize) -> bool {
        rows * 32 >= self.b.total
    }

    fn evaluate(&mut self, o: &mut Open) {
        o.split = None;
        let n = o.end - o.begin;
        if o.depth >= self.hp.depth || n < 2 * self.hp.min_samples_leaf {
            return;
        }
        let (mut s, mut ss) = (0.0, 0.0);
        for &i in &self.idx[o.begin..o.end] {
            let v = self.r[i as usize];
            s += v;
            ss += v * v;
        }
        let min_leaf = self.hp.min_samples_leaf;
        let found = match &o.hist {
            Some(h) => search(self.b, self.edges, h, s, n, min_leaf),
            None => search_sparse(self.b, self.edges, self.r, &self.idx[o.begin..o.end], s, min_leaf, &mut self.keys),
        };
        o.split = found.filter(|sp| sp.gain > MIN_RELATIVE_GAIN * ss);
    }

    fn finish(&mut self, o: Open) {
        let rows = &self.idx[o.begin..o.end];
        let value = rows.iter().map(|&i| self.r[i as usize]).sum::<f64>() / rows.len() as f64;
        self.nodes[o.node] = Node::leaf(value);
        self.leaves.push((o.begin, o.end, value));
    }

    fn split(&mut self, mut o: Open) -> (Open, Open) {
        let sp = o.split.expect("only evaluated splits are applied");
        let col = self.b.col(sp.feature);
        let rows = &mut self.idx[o.begin..o.end];
        self.scratch.clear();
        let mut w = 0;
        for k in 0..rows.len() {
            let i = rows[k];
            if (col[i as usize] as usize) <= sp.bin {
                rows[w] = i;
                w += 1;
            } else {
                self.scratch.push(i);
            }
        }
        rows[w..].copy_from_slice(&self.scratch);
        let mid = o.begin + w;

        let (l, r) = (self.nodes.len(), self.nodes.len() + 1);
        self.nodes[o.node] = Node { feature: Some(sp.feature), threshold: sp.threshold, left: l, right: r, value: 0.0 };
        self.nodes.push(Node::leaf(0.0));
        self.nodes.push(Node::leaf(0.0));

        // children that will not be searched need no histogram
        let wanted = |rows: usize| o.depth + 1 < self.hp.depth && rows >= 2 * self.hp.min_samples_leaf && self.dense(rows);
        let (dense_l, dense_r) = (wanted(mid - o.begin), wanted(o.end - mid));
        let (lh, rh) = match o.hist.take() {
            // children are smaller than the parent, so a sparse parent has sparse children
            Some(mut h) if dense_l || dense_r => {
                let left_smaller = mid - o.begin <= o.end - mid;
                let small_rows = if left_smaller { &self.idx[o.begin..mid] } else { &self.idx[mid..o.end] };
                let small = Hist::build(self.b, self.r, small_rows);
                h.subtract(&small);
                let (lh, rh) = if left_smaller { (small, h) } else { (h, small) };
                (Some(lh).filter(|_| dense_l), Some(rh).filter(|_| dense_r))
            }
            _ => (None, None),
        };
        let depth = o.depth + 1;
        let mut left = Open { node: l, begin: o.begin, end: mid, depth, hist: lh, split: None };
        let mut right = Open { node: r, begin: mid, end: o.end, depth, hist: rh, split: None };
        self.evaluate(&mut left);
        self.evaluate(&mut right);
        (left, right)
    }

    fn grow(mut self) -> (Tree, Vec<(usize, usize, f64)>) {
        let n = self.idx.len();
        self.nodes.push(Node::leaf(0.0));
        let hist = self.dense(n).then(|| Hist::build(self.b, self.r, self.idx));
        let mut root = Open { node: 0, begin: 0, end: n, depth: 0, hist, split: None };
        self.evaluate(&mut root);
        match self.hp.growth {
            Growth::LevelWise => {
                let mut level = vec![root];
                while !level.is_empty() {
                    let mut next = Vec::new();
                    for o in level {
                        if o.split.is_some() {
                            let (l, r) = self.split(o);
                            next.push(l);
                            next.push(r);
                        } else {
                            self.finish(o);
                        }
                    }
                    level = next;
                }
            }
            Growth::LeafWise => {
                let mut open = vec![root];
                let mut n_leaves = 1;
                while n_leaves < self.hp.max_leaves {
                    let best = open.iter().enumerate().filter_map(|(k, o)| o.split.map(|s| (k, s.gain))).fold(
                        None,
                        |acc: Option<(usize, f64)>, (k, g)| match acc {
                            Some((_, bg)) if bg >= g => acc,
                            _ => Some((k, g)),
                        },
                    );
                    let Some((k, _)) = best else { break };
                    let o = open.remove(k);
                    let (l, r) = self.split(o);
                    open.push(l);
                    open.push(r);
                    n_leaves += 1;
                }
                for o in open {
                    self.finish(o);
                }
            }
        }
        (Tree { nodes: self.nodes }, self.leaves)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub hyperparams: Hyperparams,
    pub bin_edges: Vec<Vec<f64>>,
    pub trees: Vec<Tree>,
    /// Training MSE before the first tree, then after each round.
    pub loss_trace: Vec<f64>,
}

/// Row permutation sorting rows by features, then target (total order).
fn canonical_order(data: &Dataset) -> Vec<usize> {
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    order.sort_by(|&a, &b| {
        data.row(a)
            .iter()
            .zip(data.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| data.target()[a].total_cmp(&data.target()[b]))
    });
    order
}

fn check_trainable(data: &Dataset, hp: &Hyperparams) -> Result<()> {
    hp.validate()?;
    if data.n_rows() < data.n_features().max(1) {
        return Err(ModelError::InvalidInput(format!("{} rows for {} features", data.n_rows(), data.n_features())));
    }
    Ok(())
}

pub fn train(data: &Dataset, hp: &Hyperparams) -> Result<BoostedModel> {
    train_with_fitted(data, hp).map(|(m, _)| m)
}

/// The model and its fitted values on the training rows, in input order.
pub fn train_with_fitted(data: &Dataset, hp: &Hyperparams) -> Result<(BoostedModel, Vec<f64>)> {
    check_trainable(data, hp)?;
    let order = canonical_order(data);
    let sorted = data.subset(&order);
    let y = sorted.target();
    let n = y.len();
    let bin_edges: Vec<Vec<f64>> = (0..data.n_features()).map(|j| feature_edges(sorted.column(j), hp.n_bins)).collect();
    let binned = Binned::new(&sorted, &bin_edges);

    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base_score; n];
    let mse = |f: &[f64]| y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let mut loss_trace = Vec::with_capacity(hp.iterations + 1);
    loss_trace.push(mse(&fitted));
    let mut residual = vec![0.0; n];
    let mut idx: Vec<u32> = Vec::with_capacity(n);
    let mut trees = Vec::with_capacity(hp.iterations);
    for _ in 0..hp.iterations {
        for i in 0..n {
            residual[i] = y[i] - fitted[i];
        }
        idx.clear();
        idx.extend(0..n as u32);
        let grower = Grower {
            b: &binned,
            edges: &bin_edges,
            r: &residual,
            hp,
            idx: &mut idx,
            scratch: Vec::with_capacity(n),
            keys: Vec::with_capacity(n),
            nodes: Vec::new(),
            leaves: Vec::new(),
        };
        let (tree, leaves) = grower.grow();
        for (begin, end, value) in leaves {
            for &i in &idx[begin..end] {
                fitted[i as usize] += hp.learning_rate * value;
            }
        }
        loss_trace.push(mse(&fitted));
        trees.push(tree);
    }
    let mut fitted_in_input_order = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        fitted_in_input_order[i] = fitted[k];
    }
    let model = BoostedModel {
        feature_names: data.names().to_vec(),
        base_score,
        learning_rate: hp.learning_rate,
        hyperparams: hp.clone(),
        bin_edges,
        trees,
        loss_trace,
    };
    Ok((model, fitted_in_input_order))
}

/// Best split of a single node holding all rows of `data` with the given
/// residuals, found by the same histogram search training uses.
pub fn best_split(data: &Dataset, residuals: &[f64], hp: &Hyperparams) -> Result<Option<SplitInfo>> {
    check_trainable(data, hp)?;
    if residuals.len() != data.n_rows() {
        return Err(ModelError::InvalidInput("one residual per row required".into()));
    }
    let edges: Vec<Vec<f64>> = (0..data.n_features()).map(|j| feature_edges(data.column(j), hp.n_bins)).collect();
    let binned = Binned::new(data, &edges);
    let mut idx: Vec<u32> = (0..data.n_rows() as u32).collect();
    let hist = Some(Hist::build(&binned, residuals, &idx));
    let mut grower = Grower {
        b: &binned,
        edges: &edges,
        r: residuals,
        hp,
        idx: &mut idx,
        scratch: Vec::new(),
        keys: Vec::new(),
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    let mut root = Open { node: 0, begin: 0, end: data.n_rows(), depth: 0, hist, split: None };
    grower.evaluate(&mut root);
    Ok(root.split)
}

impl BoostedModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Prediction of a row whose length has been checked.
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        self.eval_staged(x, self.trees.len())
    }

    fn eval_staged(&self, x: &[f64], k: usize) -> f64 {
        let mut p = self.base_score;
        for t in &self.trees[..k] {
            p += self.learning_rate * t.predict(x);
        }
        p
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(ModelError::Shape { expected: self.n_features(), got: x.len() });
        }
        Ok(())
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.eval(x))
    }

    /// Prediction using only the first `k` trees.
    pub fn predict_row_staged(&self, x: &[f64], k: usize) -> Result<f64> {
        self.check(x)?;
        Ok(self.eval_staged(x, k.min(self.trees.len())))
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n_features() != self.n_features() {
            return Err(ModelError::Shape { expected: self.n_features(), got: data.n_features() });
        }
        Ok(data.rows().map(|r| self.eval(r)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format: FORMAT.into(),
            version: VERSION,
            feature_names: self.feature_names.clone(),
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            hyperparams: self.hyperparams.clone(),
            bin_edges: self.bin_edges.clone(),
            trees: self.trees.iter().map(TreeDoc::from).collect(),
            loss_trace: self.loss_trace.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(ModelError::Format(format!("{} version {}", doc.format, doc.version)));
        }
        let p = doc.feature_names.len();
        let trees = doc.trees.into_iter().map(|t| t.into_tree(p)).collect::<Result<_>>()?;
        Ok(BoostedModel {
            feature_names: doc.feature_names,
            base_score: doc.base_score,
            learning_rate: doc.learning_rate,
            hyperparams: doc.hyperparams,
            bin_edges: doc.bin_edges,
            trees,
            loss_trace: doc.loss_trace,
        })
    }
}

/// Serialized model, schema version 1. Trees are parallel arrays indexed by
/// node; `feature = -1` marks a leaf, whose `threshold`, `left` and `right`
/// are unused.
#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    feature_names: Vec<String>,
    base_score: f64,
    learning_rate: f64,
    hyperparams: Hyperparams,
    bin_edges: Vec<Vec<f64>>,
    trees: Vec<TreeDoc>,
    loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<usize>,
    right: Vec<usize>,
    value: Vec<f64>,
}

impl From<&Tree> for TreeDoc {
    fn from(t: &Tree) -> Self {
        TreeDoc {
            feature: t.nodes.iter().map(|n| n.feature.map_or(-1, |f| f as i64)).collect(),
            threshold: t.nodes.iter().map(|n| n.threshold).collect(),
            left: t.nodes.iter().map(|n| n.left).collect(),
            right: t.nodes.iter().map(|n| n.right).collect(),
            value: t.nodes.iter().map(|n| n.value).collect(),
        }
    }
}

impl TreeDoc {
    fn into_tree(self, n_features: usize) -> Result<Tree> {
        let m = self.feature.len();
        let bad = |what: &str| Err(ModelError::Format(format!("malformed tree: {what}")));
        if m == 0 || [self.threshold.len(), self.left.len(), self.right.len(), self.value.len()] != [m; 4] {
            return bad("array lengths differ");
        }
        let mut nodes = Vec::with_capacity(m);
        for k in 0..m {
            let feature = match self.feature[k] {
                -1 => None,
                f if f >= 0 && (f as usize) < n_features => Some(f as usize),
                _ => return bad("feature index out of range"),
            };
            // children come after their parent, so traversal terminates
            if feature.is_some() && !(k < self.left[k] && self.left[k] < m && k < self.right[k] && self.right[k] < m) {
                return bad("child index out of range");
            }
            nodes.push(Node { feature, threshold: self.threshold[k], left: self.left[k], right: self.right[k], value: self.value[k] });
        }
        Ok(Tree { nodes })
    }
}
