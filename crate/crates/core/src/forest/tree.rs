//! CART regression trees grown greedily on squared error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Matrix;
use crate::model::{Hyperparameters, MaxFeatures};

pub const LEAF: u32 = u32::MAX;

/// Flattened tree. Node 0 is the root; for internal nodes rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Mean target of the training samples reaching the node.
    pub value: Vec<f64>,
    pub n_samples: Vec<u32>,
}

impl RegressionTree {
    fn with_capacity(n: usize) -> Self {
        RegressionTree {
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
            n_samples: Vec::with_capacity(n),
        }
    }

    fn push_node(&mut self, value: f64, n: usize) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(LEAF);
        self.right.push(LEAF);
        self.value.push(value);
        self.n_samples.push(n as u32);
        self.feature.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.feature[node] == LEAF
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&i| self.is_leaf(i))
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((n, d)) = stack.pop() {
            if self.is_leaf(n) {
                best = best.max(d);
            } else {
                stack.push((self.left[n] as usize, d + 1));
                stack.push((self.right[n] as usize, d + 1));
            }
        }
        best
    }

    pub fn predict_row(&self, x: &Matrix, row: usize) -> f64 {
        let mut n = 0;
        while !self.is_leaf(n) {
            let v = x.value(row, self.feature[n] as usize);
            n = if v <= self.threshold[n] { self.left[n] } else { self.right[n] } as usize;
        }
        self.value[n]
    }

    pub fn predict_dense(&self, row: &[f64]) -> f64 {
        let mut n = 0;
        while !self.is_leaf(n) {
            let v = row[self.feature[n] as usize];
            n = if v <= self.threshold[n] { self.left[n] } else { self.right[n] } as usize;
        }
        self.value[n]
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    proxy: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a Hyperparameters,
    rng: &'a mut R,
    perm: Vec<usize>,
    pairs: Vec<(f64, f64)>,
    cat_count: Vec<Vec<u32>>,
    cat_sum: Vec<Vec<f64>>,
    touched: Vec<Vec<u32>>,
}

impl<'a, R: Rng> Builder<'a, R> {
    fn new(x: &'a Matrix, y: &'a [f64], params: &'a Hyperparameters, rng: &'a mut R) -> Self {
        let nb = x.n_blocks();
        Builder {
            x,
            y,
            params,
            rng,
            perm: (0..x.width()).collect(),
            pairs: Vec::new(),
            cat_count: (0..nb).map(|b| vec![0; x.block_levels(b)]).collect(),
            cat_sum: (0..nb).map(|b| vec![0.0; x.block_levels(b)]).collect(),
            touched: vec![Vec::new(); nb],
        }
    }

    fn gather_categories(&mut self, samples: &[usize]) {
        for b in 0..self.x.n_blocks() {
            for &s in samples {
                let l = self.x.level(s, b);
                if l == u32::MAX {
                    continue;
                }
                let li = l as usize;
                if self.cat_count[b][li] == 0 {
                    self.touched[b].push(l);
                }
                self.cat_count[b][li] += 1;
                self.cat_sum[b][li] += self.y[s];
            }
            self.touched[b].sort_unstable();
        }
    }

    fn reset_categories(&mut self) {
        for b in 0..self.touched.len() {
            for &l in &self.touched[b] {
                self.cat_count[b][l as usize] = 0;
                self.cat_sum[b][l as usize] = 0.0;
            }
            self.touched[b].clear();
        }
    }

    fn varies(&self, samples: &[usize], col: usize) -> bool {
        let n = samples.len() as u32;
        match self.x.locate(col) {
            None => {
                let first = self.x.cont(samples[0], col);
                samples.iter().any(|&s| self.x.cont(s, col) != first)
            }
            Some((b, l)) => {
                let c = self.cat_count[b][l as usize];
                c > 0 && c < n
            }
        }
    }

    /// Columns examined at this node, ascending.
    fn candidate_columns(&mut self, samples: &[usize]) -> Vec<usize> {
        let width = self.x.width();
        let k = self.params.max_features.count(width);
        let mut cols = Vec::new();
        if k >= width || self.params.max_features == MaxFeatures::All {
            cols.extend(0..self.x.n_cont());
            for b in 0..self.x.n_blocks() {
                let off = self.x.block_offset(b);
                cols.extend(self.touched[b].iter().map(|&l| off + l as usize));
            }
            return cols;
        }
        // partial Fisher-Yates; columns constant within the node do not count
        for i in 0..width {
            let j = self.rng.random_range(i..width);
            self.perm.swap(i, j);
            let col = self.perm[i];
            if self.varies(samples, col) {
                cols.push(col);
                if cols.len() == k {
                    break;
                }
            }
        }
        cols.sort_unstable();
        cols
    }

    fn best_split(&mut self, samples: &[usize], sum: f64) -> Option<Candidate> {
        let n = samples.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Candidate> = None;
        let consider = |best: &mut Option<Candidate>, c: Candidate| {
            if best.is_none_or(|b| c.proxy > b.proxy) {
                *best = Some(c);
            }
        };
        for col in self.candidate_columns(samples) {
            match self.x.locate(col) {
                None => {
                    self.pairs.clear();
                    self.pairs.extend(samples.iter().map(|&s| (self.x.cont(s, col), self.y[s])));
                    self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut sum_left = 0.0;
                    for i in 0..n - 1 {
                        sum_left += self.pairs[i].1;
                        let (xi, xn) = (self.pairs[i].0, self.pairs[i + 1].0);
                        if xi >= xn {
                            continue;
                        }
                        let n_left = i + 1;
                        let n_right = n - n_left;
                        if n_left < min_leaf || n_right < min_leaf {
                            continue;
                        }
                        let sum_right = sum - sum_left;
                        let proxy = sum_left * sum_left / n_left as f64 + sum_right * sum_right / n_right as f64;
                        let mut threshold = 0.5 * (xi + xn);
                        if threshold >= xn {
                            threshold = xi;
                        }
                        consider(&mut best, Candidate { proxy, feature: col, threshold });
                    }
                }
                Some((b, l)) => {
                    let n_right = self.cat_count[b][l as usize] as usize;
                    let n_left = n - n_right;
                    if n_right == 0 || n_left == 0 || n_left < min_leaf || n_right < min_leaf {
                        continue;
                    }
                    let sum_right = self.cat_sum[b][l as usize];
                    let sum_left = sum - sum_right;
                    let proxy = sum_left * sum_left / n_left as f64 + sum_right * sum_right / n_right as f64;
                    consider(&mut best, Candidate { proxy, feature: col, threshold: 0.5 });
                }
            }
        }
        best
    }

    fn build(mut self, mut samples: Vec<usize>) -> RegressionTree {
        let mut tree = RegressionTree::with_capacity(2 * samples.len() / self.params.min_samples_leaf.max(1) + 1);
        let root_n = samples.len();
        let root_mean = samples.iter().map(|&s| self.y[s]).sum::<f64>() / root_n.max(1) as f64;
        tree.push_node(root_mean, root_n);
        let mut stack = vec![(0usize, 0usize, root_n, 0usize)];

        while let Some((node, start, end, depth)) = stack.pop() {
            let idx = &samples[start..end];
            let n = idx.len();
            if n < self.params.min_samples_split || self.params.max_depth.is_some_and(|d| depth >= d) {
                continue;
            }
            let first = self.y[idx[0]];
            if idx.iter().all(|&s| self.y[s] == first) {
                continue;
            }
            let (mut sum, mut sumsq) = (0.0, 0.0);
            for &s in idx {
                sum += self.y[s];
                sumsq += self.y[s] * self.y[s];
            }
            self.gather_categories(idx);
            let best = self.best_split(idx, sum);
            self.reset_categories();
            let Some(best) = best else { continue };
            let parent_proxy = sum * sum / n as f64;
            if best.proxy - parent_proxy <= 1e-12 * sumsq {
                continue;
            }

            // stable partition: left block first
            let (x, f, t) = (self.x, best.feature, best.threshold);
            let slice = &mut samples[start..end];
            let (mut l, mut r): (Vec<usize>, Vec<usize>) = slice.iter().partition(|&&s| x.value(s, f) <= t);
            let n_left = l.len();
            l.append(&mut r);
            slice.copy_from_slice(&l);

            let mean = |ids: &[usize]| ids.iter().map(|&s| self.y[s]).sum::<f64>() / ids.len() as f64;
            let mid = start + n_left;
            let left = tree.push_node(mean(&samples[start..mid]), n_left);
            let right = tree.push_node(mean(&samples[mid..end]), end - mid);
            tree.feature[node] = f as u32;
            tree.threshold[node] = t;
            tree.left[node] = left as u32;
            tree.right[node] = right as u32;
            stack.push((right, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
        tree
    }
}

/// Grows one tree on all rows of `x`.
pub fn fit_tree<R: Rng>(x: &Matrix, y: &[f64], params: &Hyperparameters, rng: &mut R) -> RegressionTree {
    fit_tree_on(x, y, (0..x.n_rows()).collect(), params, rng)
}

/// Grows one tree on `samples` (row indices, repeats allowed).
pub fn fit_tree_on<R: Rng>(
    x: &Matrix,
    y: &[f64],
    samples: Vec<usize>,
    params: &Hyperparameters,
    rng: &mut R,
) -> RegressionTree {
    assert_eq!(x.n_rows(), y.len());
    assert!(!samples.is_empty(), "cannot grow a tree on zero samples");
    Builder::new(x, y, params, rng).build(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all(min_split: usize, min_leaf: usize, depth: Option<usize>) -> Hyperparameters {
        Hyperparameters::new(1, depth, min_split, min_leaf, MaxFeatures::All).unwrap()
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let x = Matrix::dense(&[vec![1.0], vec![2.0], vec![3.0]]);
        let t = fit_tree(&x, &[7.0, 7.0, 7.0], &all(2, 1, None), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.value[0], 7.0);
    }

    #[test]
    fn two_point_split() {
        let x = Matrix::dense(&[vec![0.0], vec![1.0]]);
        let t = fit_tree(&x, &[0.0, 10.0], &all(2, 1, None), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.n_nodes(), 3);
        assert!(t.threshold[0] > 0.0 && t.threshold[0] < 1.0);
        assert_eq!(t.value[t.left[0] as usize], 0.0);
        assert_eq!(t.value[t.right[0] as usize], 10.0);
    }

    #[test]
    fn stopping_rules() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let x = Matrix::dense(&rows);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = fit_tree(&x, &y, &all(10, 5, Some(3)), &mut rng);
        assert!(t.depth() <= 3);
        for leaf in t.leaves() {
            assert!(t.n_samples[leaf] >= 5);
        }
        let t = fit_tree(&x, &y, &all(65, 1, None), &mut rng);
        assert_eq!(t.n_nodes(), 1);
    }

    #[test]
    fn one_hot_split() {
        // block of 3 levels; level 1 carries all the signal
        let mut x = Matrix::new(1, vec![3]);
        let mut y = Vec::new();
        for i in 0..30 {
            let level = (i % 3) as u32;
            x.push_row(&[(i % 5) as f64], &[Some(level)]);
            y.push(if level == 1 { 100.0 } else { 1.0 });
        }
        let t = fit_tree(&x, &y, &all(2, 1, None), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.feature[0], 2);
        assert_eq!(t.threshold[0], 0.5);
        assert_eq!(t.n_nodes(), 3);
    }

    #[test]
    fn sampled_features_still_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..9).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 10.0 * r[3] + r[7]).collect();
        let x = Matrix::dense(&rows);
        for mf in [MaxFeatures::Sqrt, MaxFeatures::Fraction(0.5)] {
            let p = Hyperparameters::new(1, None, 2, 1, mf).unwrap();
            let t = fit_tree(&x, &y, &p, &mut rng);
            // fully grown on unique rows: memorizes
            for i in 0..rows.len() {
                assert_eq!(t.predict_row(&x, i), y[i]);
            }
        }
    }
}
