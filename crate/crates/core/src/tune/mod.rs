//! Cross-validated hyperparameter search: a Gaussian-process surrogate with
//! expected improvement, plus the random-search baseline it is judged against.

mod gp;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use gp::{expected_improvement, Gp};

use crate::error::{Error, Result};
use crate::forest::{fit_trees, predict_matrix, FeatureSchema, FitOptions, Matrix};
use crate::model::{FunctionalClass, Hyperparameters, MaxFeatures, RoadLink, VehicleClass};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_estimators: (usize, usize),
    /// Bounded depths; `None` means no bounded depth is searched.
    pub max_depth: Option<(usize, usize)>,
    /// Whether unlimited depth is a candidate.
    pub unbounded_depth: bool,
    pub min_samples_split: (usize, usize),
    /// Upper end is further capped by the sampled `min_samples_split`.
    pub min_samples_leaf: (usize, usize),
    pub max_features: Vec<MaxFeatures>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_estimators: (50, 200),
            max_depth: Some((10, 60)),
            unbounded_depth: true,
            min_samples_split: (2, 10),
            min_samples_leaf: (1, 10),
            max_features: vec![MaxFeatures::All, MaxFeatures::Sqrt, MaxFeatures::Fraction(0.5)],
        }
    }
}

type Key = (usize, usize, usize, usize, usize);

fn unit(v: usize, (lo, hi): (usize, usize)) -> f64 {
    if hi == lo {
        0.0
    } else {
        (v - lo) as f64 / (hi - lo) as f64
    }
}

fn from_unit(u: f64, (lo, hi): (usize, usize)) -> usize {
    let v = lo as f64 + u.clamp(0.0, 1.0) * (hi - lo) as f64;
    (v.round() as usize).clamp(lo, hi)
}

impl SearchSpace {
    /// Space containing exactly `p`.
    pub fn point(p: &Hyperparameters) -> Self {
        SearchSpace {
            n_estimators: (p.n_estimators, p.n_estimators),
            max_depth: p.max_depth.map(|d| (d, d)),
            unbounded_depth: p.max_depth.is_none(),
            min_samples_split: (p.min_samples_split, p.min_samples_split),
            min_samples_leaf: (p.min_samples_leaf, p.min_samples_leaf),
            max_features: vec![p.max_features],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(format!("search space: {m}")));
        let ordered = |r: (usize, usize)| r.0 <= r.1;
        if self.max_features.is_empty() {
            return fail("no max_features options");
        }
        if self.max_depth.is_none() && !self.unbounded_depth {
            return fail("no max_depth options");
        }
        if !ordered(self.n_estimators)
            || !ordered(self.min_samples_split)
            || !ordered(self.min_samples_leaf)
            || self.max_depth.is_some_and(|r| !ordered(r))
        {
            return fail("range with lower bound above upper bound");
        }
        if self.n_estimators.0 == 0 || self.max_depth.is_some_and(|r| r.0 == 0) {
            return fail("n_estimators and max_depth must be positive");
        }
        if self.min_samples_split.0 < 2 || self.min_samples_leaf.0 < 1 {
            return fail("min_samples_split must be ≥ 2 and min_samples_leaf ≥ 1");
        }
        if self.min_samples_leaf.0 > self.min_samples_split.0 {
            return fail("smallest min_samples_leaf exceeds smallest min_samples_split");
        }
        for mf in &self.max_features {
            Hyperparameters::new(1, None, 2, 1, *mf)?;
        }
        Ok(())
    }

    fn depth_range(&self) -> (usize, usize) {
        match (self.max_depth, self.unbounded_depth) {
            (Some((lo, hi)), true) => (lo, hi + 1),
            (Some(r), false) => r,
            (None, _) => (0, 0),
        }
    }

    fn depth_value(&self, code: usize) -> Option<usize> {
        match self.max_depth {
            Some((_, hi)) if code <= hi => Some(code),
            _ => None,
        }
    }

    fn leaf_range(&self, split: usize) -> (usize, usize) {
        (self.min_samples_leaf.0, self.min_samples_leaf.1.min(split))
    }

    /// Number of distinct points.
    pub fn cardinality(&self) -> usize {
        let span = |r: (usize, usize)| r.1 - r.0 + 1;
        let leaves: usize = (self.min_samples_split.0..=self.min_samples_split.1)
            .map(|s| {
                let r = self.leaf_range(s);
                if r.1 >= r.0 {
                    span(r)
                } else {
                    0
                }
            })
            .sum();
        span(self.n_estimators) * span(self.depth_range()) * leaves * self.max_features.len()
    }

    fn mf_index(&self, mf: MaxFeatures) -> usize {
        self.max_features.iter().position(|m| *m == mf).unwrap_or(0)
    }

    fn key(&self, p: &Hyperparameters) -> Key {
        let depth = p.max_depth.unwrap_or(self.depth_range().1);
        (p.n_estimators, depth, p.min_samples_split, p.min_samples_leaf, self.mf_index(p.max_features))
    }

    pub fn contains(&self, p: &Hyperparameters) -> bool {
        let within = |v: usize, r: (usize, usize)| v >= r.0 && v <= r.1;
        let depth_ok = match p.max_depth {
            None => self.unbounded_depth,
            Some(d) => self.max_depth.is_some_and(|r| within(d, r)),
        };
        within(p.n_estimators, self.n_estimators)
            && depth_ok
            && within(p.min_samples_split, self.min_samples_split)
            && within(p.min_samples_leaf, self.leaf_range(p.min_samples_split))
            && self.max_features.contains(&p.max_features)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Hyperparameters {
        let dr = self.depth_range();
        let split = rng.random_range(self.min_samples_split.0..=self.min_samples_split.1);
        let lr = self.leaf_range(split);
        Hyperparameters {
            n_estimators: rng.random_range(self.n_estimators.0..=self.n_estimators.1),
            max_depth: self.depth_value(rng.random_range(dr.0..=dr.1)),
            min_samples_split: split,
            min_samples_leaf: rng.random_range(lr.0..=lr.1),
            max_features: *self.max_features.choose(rng).unwrap(),
        }
    }

    /// Point in the unit cube: four numeric coordinates, then a one-hot
    /// block for `max_features`.
    pub fn encode(&self, p: &Hyperparameters) -> Vec<f64> {
        let dr = self.depth_range();
        let mut v = vec![
            unit(p.n_estimators, self.n_estimators),
            unit(p.max_depth.unwrap_or(dr.1), dr),
            unit(p.min_samples_split, self.min_samples_split),
            unit(p.min_samples_leaf, self.min_samples_leaf),
        ];
        let k = self.mf_index(p.max_features);
        v.extend((0..self.max_features.len()).map(|i| if i == k { 1.0 } else { 0.0 }));
        v
    }

    /// Nearest valid point to a unit-cube vector (rounded, clamped).
    pub fn decode(&self, u: &[f64]) -> Hyperparameters {
        let split = from_unit(u[2], self.min_samples_split);
        let lr = self.leaf_range(split);
        let leaf = from_unit(u[3], self.min_samples_leaf).clamp(lr.0, lr.1);
        let mf = (0..self.max_features.len()).max_by(|&a, &b| u[4 + a].total_cmp(&u[4 + b]).then(b.cmp(&a))).unwrap();
        Hyperparameters {
            n_estimators: from_unit(u[0], self.n_estimators),
            max_depth: self.depth_value(from_unit(u[1], self.depth_range())),
            min_samples_split: split,
            min_samples_leaf: leaf,
            max_features: self.max_features[mf],
        }
    }

    fn enumerate_first_unseen(&self, seen: &HashSet<Key>) -> Option<Hyperparameters> {
        let dr = self.depth_range();
        for n in self.n_estimators.0..=self.n_estimators.1 {
            for d in dr.0..=dr.1 {
                for s in self.min_samples_split.0..=self.min_samples_split.1 {
                    let lr = self.leaf_range(s);
                    for l in lr.0..=lr.1 {
                        for &mf in &self.max_features {
                            let p = Hyperparameters {
                                n_estimators: n,
                                max_depth: self.depth_value(d),
                                min_samples_split: s,
                                min_samples_leaf: l,
                                max_features: mf,
                            };
                            if !seen.contains(&self.key(&p)) {
                                return Some(p);
                            }
                        }
                    }
                }
            }
        }
        None
    }
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at most
/// one. Depends only on `(n, k, seed)`.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Folds { folds: k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seed::rng(seed, "folds", n as u64));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = order[at..at + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        at += size;
    }
    Ok(out)
}

/// Per-functional-class random subsample keeping about `frac` of each class,
/// in input order.
pub fn stratified_sample(links: &[RoadLink], frac: f64, seed: u64) -> Result<Vec<RoadLink>> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidArgument(format!("sample fraction {frac} not in (0, 1]")));
    }
    if frac == 1.0 {
        return Ok(links.to_vec());
    }
    let mut keep = vec![false; links.len()];
    for fc in 1..=7u8 {
        let class = FunctionalClass::new(fc as i64).unwrap();
        let mut idx: Vec<usize> = (0..links.len()).filter(|&i| links[i].functional_class == class).collect();
        if idx.is_empty() {
            continue;
        }
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut seed::rng(seed, "tune-sample", fc as u64));
        let take = ((idx.len() as f64 * frac).round() as usize).max(1);
        for &i in &idx[..take] {
            keep[i] = true;
        }
    }
    Ok(links.iter().zip(keep).filter(|(_, k)| *k).map(|(l, _)| l.clone()).collect())
}

fn rmse(y: &[f64], p: &[f64]) -> f64 {
    (y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt()
}

/// Encoded train/test matrices for every fold, reused across trials.
struct CvData {
    folds: Vec<(Matrix, Vec<f64>, Matrix, Vec<f64>)>,
    seed: u64,
}

impl CvData {
    fn new(links: &[RoadLink], target: VehicleClass, k: usize, seed: u64) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::EmptyTrainingSet(target.as_str().into()));
        }
        let y: Vec<f64> = links
            .iter()
            .map(|l| {
                l.class_aadt(target).ok_or_else(|| {
                    Error::InvalidArgument(format!("link {} has no observed {}", l.link_id, target.as_str()))
                })
            })
            .collect::<Result<_>>()?;
        let folds = fold_indices(links.len(), k, seed)?;
        let mut out = Vec::with_capacity(k);
        for test in &folds {
            let mut in_test = vec![false; links.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<RoadLink> =
                links.iter().zip(&in_test).filter(|(_, t)| !**t).map(|(l, _)| l.clone()).collect();
            let y_train: Vec<f64> = y.iter().zip(&in_test).filter(|(_, t)| !**t).map(|(v, _)| *v).collect();
            let schema = FeatureSchema::build(&train)?;
            let test_links: Vec<RoadLink> = test.iter().map(|&i| links[i].clone()).collect();
            out.push((
                schema.encode(&train),
                y_train,
                schema.encode(&test_links),
                test.iter().map(|&i| y[i]).collect(),
            ));
        }
        Ok(CvData { folds: out, seed })
    }

    fn evaluate(&self, params: &Hyperparameters) -> Result<Vec<f64>> {
        self.folds
            .iter()
            .enumerate()
            .map(|(f, (xt, yt, xv, yv))| {
                let trees = fit_trees(xt, yt, params, seed::derive(self.seed, "cv-forest", f as u64), FitOptions::default())?;
                Ok(rmse(yv, &predict_matrix(&trees, xv)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// Fit on all folds but one, score RMSE on the held-out fold, for every fold.
pub fn cv_rmse(
    links: &[RoadLink],
    target: VehicleClass,
    params: &Hyperparameters,
    folds: usize,
    seed: u64,
) -> Result<CvScore> {
    params.validate()?;
    let fold_rmse = CvData::new(links, target, folds, seed)?.evaluate(params)?;
    let mean_rmse = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
    Ok(CvScore { fold_rmse, mean_rmse })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub iter: usize,
    pub params: Hyperparameters,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub trials: Vec<Trial>,
}

impl TrialLog {
    /// Lowest mean RMSE; the earliest trial wins ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials.iter().fold(None, |b: Option<&Trial>, t| match b {
            Some(b) if b.mean_rmse <= t.mean_rmse => Some(b),
            _ => Some(t),
        })
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iter",
            "n_estimators",
            "max_depth",
            "min_samples_split",
            "min_samples_leaf",
            "max_features",
            "fold_rmses",
            "mean_rmse",
            "seconds",
        ])?;
        for t in &self.trials {
            let folds: Vec<String> = t.fold_rmse.iter().map(|r| r.to_string()).collect();
            w.write_record([
                t.iter.to_string(),
                t.params.n_estimators.to_string(),
                t.params.max_depth.map_or("none".into(), |d| d.to_string()),
                t.params.min_samples_split.to_string(),
                t.params.min_samples_leaf.to_string(),
                t.params.max_features.to_string(),
                folds.join(";"),
                t.mean_rmse.to_string(),
                format!("{:.3}", t.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub n_iter: usize,
    pub folds: usize,
    pub n_initial: usize,
    /// Random candidates scored by the acquisition function per step.
    pub n_candidates: usize,
    pub seed: u64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { n_iter: 48, folds: 3, n_initial: 10, n_candidates: 512, seed: 0 }
    }
}

struct Search<'a> {
    space: &'a SearchSpace,
    data: CvData,
    log: TrialLog,
    seen: HashSet<Key>,
    cardinality: usize,
}

impl<'a> Search<'a> {
    fn new(links: &[RoadLink], target: VehicleClass, space: &'a SearchSpace, opts: &TuneOptions) -> Result<Self> {
        space.validate()?;
        if opts.n_iter == 0 {
            return Err(Error::InvalidArgument("n_iter must be positive".into()));
        }
        let need = opts.folds * space.min_samples_split.0;
        if links.len() < need {
            return Err(Error::InvalidArgument(format!(
                "{} training rows, need at least folds × min_samples_split = {need}",
                links.len()
            )));
        }
        Ok(Search {
            space,
            data: CvData::new(links, target, opts.folds, opts.seed)?,
            log: TrialLog::default(),
            seen: HashSet::new(),
            cardinality: space.cardinality(),
        })
    }

    fn exhausted(&self) -> bool {
        self.seen.len() >= self.cardinality
    }

    fn run(&mut self, params: Hyperparameters) -> Result<()> {
        let start = Instant::now();
        let fold_rmse = self.data.evaluate(&params)?;
        let mean_rmse = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
        self.seen.insert(self.space.key(&params));
        self.log.trials.push(Trial {
            iter: self.log.trials.len() + 1,
            params,
            fold_rmse,
            mean_rmse,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    /// Unevaluated random point; falls back to enumeration when sampling
    /// keeps hitting evaluated points.
    fn fresh_random(&self, rng: &mut ChaCha8Rng) -> Option<Hyperparameters> {
        for _ in 0..1000 {
            let p = self.space.sample(rng);
            if !self.seen.contains(&self.space.key(&p)) {
                return Some(p);
            }
        }
        self.space.enumerate_first_unseen(&self.seen)
    }

    fn finish(self) -> (Hyperparameters, TrialLog) {
        let best = self.log.best().expect("at least one trial").params;
        (best, self.log)
    }
}

/// Sequential model-based search minimizing mean CV RMSE.
pub fn bayes_search(
    links: &[RoadLink],
    target: VehicleClass,
    space: &SearchSpace,
    opts: &TuneOptions,
) -> Result<(Hyperparameters, TrialLog)> {
    let mut s = Search::new(links, target, space, opts)?;
    let mut design = seed::rng(opts.seed, "tune-design", 0);
    let mut propose = seed::rng(opts.seed, "tune-propose", 0);

    while s.log.trials.len() < opts.n_iter && !s.exhausted() {
        let next = if s.log.trials.len() < opts.n_initial.max(1) {
            s.fresh_random(&mut design)
        } else {
            propose_ei(&s, &mut propose, opts.n_candidates).or_else(|| s.fresh_random(&mut propose))
        };
        match next {
            Some(p) => s.run(p)?,
            None => break,
        }
    }
    Ok(s.finish())
}

fn propose_ei(s: &Search, rng: &mut ChaCha8Rng, n_candidates: usize) -> Option<Hyperparameters> {
    let space = s.space;
    let xs: Vec<Vec<f64>> = s.log.trials.iter().map(|t| space.encode(&t.params)).collect();
    let ys: Vec<f64> = s.log.trials.iter().map(|t| t.mean_rmse).collect();
    let gp = Gp::fit(&xs, &ys);
    let best = ys.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut candidates: Vec<Hyperparameters> = (0..n_candidates).map(|_| space.sample(rng)).collect();
    // local moves around the incumbents
    let mut ranked: Vec<&Trial> = s.log.trials.iter().collect();
    ranked.sort_by(|a, b| a.mean_rmse.total_cmp(&b.mean_rmse).then(a.iter.cmp(&b.iter)));
    let step = Normal::new(0.0, 0.08).unwrap();
    for t in ranked.iter().take(3) {
        let base = space.encode(&t.params);
        for _ in 0..n_candidates / 4 {
            let mut u = base.clone();
            for v in u.iter_mut().take(4) {
                if rng.random_bool(0.5) {
                    *v += step.sample(rng);
                }
            }
            if rng.random_bool(0.15) {
                let k = rng.random_range(0..space.max_features.len());
                for (i, v) in u[4..].iter_mut().enumerate() {
                    *v = if i == k { 1.0 } else { 0.0 };
                }
            }
            candidates.push(space.decode(&u));
        }
    }

    let mut best_cand: Option<(f64, Hyperparameters)> = None;
    let mut scored = HashSet::new();
    for c in candidates {
        let key = space.key(&c);
        if s.seen.contains(&key) || !scored.insert(key) {
            continue;
        }
        let (mu, sigma) = gp.predict(&space.encode(&c));
        let ei = expected_improvement(mu, sigma, best);
        if best_cand.as_ref().is_none_or(|b| ei > b.0) {
            best_cand = Some((ei, c));
        }
    }
    best_cand.map(|b| b.1)
}

/// Uniform random search with the same budget, sharing the initial design
/// of [`bayes_search`] for the same seed.
pub fn random_search(
    links: &[RoadLink],
    target: VehicleClass,
    space: &SearchSpace,
    opts: &TuneOptions,
) -> Result<(Hyperparameters, TrialLog)> {
    let mut s = Search::new(links, target, space, opts)?;
    let mut design = seed::rng(opts.seed, "tune-design", 0);
    while s.log.trials.len() < opts.n_iter && !s.exhausted() {
        match s.fresh_random(&mut design) {
            Some(p) => s.run(p)?,
            None => break,
        }
    }
    Ok(s.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_link, RawLink};
    use rand::SeedableRng;

    fn links(n: usize) -> Vec<RoadLink> {
        (0..n)
            .map(|i| {
                let total = 200.0 + 13.0 * i as f64;
                validate_link(&RawLink {
                    link_id: format!("L{i:04}"),
                    state_fips: "50".into(),
                    county_fips: format!("500{:02}", i % 4),
                    functional_class: Some((i % 6 + 1) as i64),
                    urban_code: Some(0),
                    through_lanes: Some(2),
                    aadt_total: Some(total),
                    aadt_mdv: Some(total * 0.04),
                    aadt_hdv: Some(total * (0.02 + 0.01 * (i % 6) as f64)),
                    geometry_wkt: format!("LINESTRING({i} 0,{i} 10)"),
                    ..Default::default()
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn folds_partition() {
        for (n, k) in [(10, 3), (5, 5), (100, 7), (3, 2)] {
            let f = fold_indices(n, k, 4).unwrap();
            assert_eq!(f.len(), k);
            let mut all: Vec<usize> = f.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = f.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            assert_eq!(f, fold_indices(n, k, 4).unwrap());
        }
        assert!(matches!(fold_indices(3, 4, 0), Err(Error::Folds { folds: 4, n: 3 })));
        assert!(fold_indices(3, 1, 0).is_err());
    }

    #[test]
    fn leave_one_out() {
        let p = Hyperparameters::new(5, None, 2, 1, MaxFeatures::All).unwrap();
        let s = cv_rmse(&links(5), VehicleClass::Mdv, &p, 5, 1).unwrap();
        assert_eq!(s.fold_rmse.len(), 5);
        assert!(cv_rmse(&links(5), VehicleClass::Mdv, &p, 6, 1).is_err());
    }

    #[test]
    fn cv_on_noiseless_linear_data_is_small() {
        let p = Hyperparameters::new(30, None, 2, 1, MaxFeatures::All).unwrap();
        let s = cv_rmse(&links(300), VehicleClass::Mdv, &p, 3, 1).unwrap();
        let scale = 0.04 * 13.0;
        for r in &s.fold_rmse {
            assert!(*r < 3.0 * scale, "fold rmse {r}");
        }
    }

    #[test]
    fn space_sampling_and_codec() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut saw_none = false;
        for _ in 0..2000 {
            let p = space.sample(&mut rng);
            p.validate().unwrap();
            assert!(space.contains(&p));
            saw_none |= p.max_depth.is_none();
            let u = space.encode(&p);
            assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(space.decode(&u), p);
        }
        assert!(saw_none);
        // out-of-cube vectors are projected into the space
        let p = space.decode(&[-3.0, 7.0, 0.0, 1.0, 0.2, 0.9, 0.1]);
        assert!(space.contains(&p));
        assert_eq!(p.n_estimators, 50);
        assert_eq!(p.max_depth, None);
        assert_eq!(p.min_samples_leaf, 2);
        assert_eq!(p.max_features, MaxFeatures::Sqrt);
        assert_eq!(SearchSpace::point(&Hyperparameters::hdv_default()).cardinality(), 1);
    }

    #[test]
    fn single_point_space_short_circuits() {
        let p = Hyperparameters::new(5, Some(4), 2, 1, MaxFeatures::All).unwrap();
        let space = SearchSpace::point(&p);
        let opts = TuneOptions { n_iter: 48, seed: 2, ..Default::default() };
        let (best, log) = bayes_search(&links(60), VehicleClass::Hdv, &space, &opts).unwrap();
        assert_eq!(best, p);
        assert_eq!(log.trials.len(), 1);
    }

    #[test]
    fn small_space_exhausts() {
        let space = SearchSpace {
            n_estimators: (3, 4),
            max_depth: Some((2, 3)),
            unbounded_depth: false,
            min_samples_split: (2, 2),
            min_samples_leaf: (1, 10),
            max_features: vec![MaxFeatures::All],
        };
        assert_eq!(space.cardinality(), 8);
        let opts = TuneOptions { n_iter: 20, n_initial: 3, seed: 1, ..Default::default() };
        let (_, log) = bayes_search(&links(40), VehicleClass::Hdv, &space, &opts).unwrap();
        assert_eq!(log.trials.len(), 8);
        let keys: HashSet<Key> = log.trials.iter().map(|t| space.key(&t.params)).collect();
        assert_eq!(keys.len(), 8);
    }

    #[test]
    fn search_is_deterministic_and_consistent() {
        let space = SearchSpace { n_estimators: (3, 10), ..Default::default() };
        let opts = TuneOptions { n_iter: 14, n_initial: 5, seed: 9, ..Default::default() };
        let ls = links(90);
        let (b1, l1) = bayes_search(&ls, VehicleClass::Hdv, &space, &opts).unwrap();
        let (b2, l2) = bayes_search(&ls, VehicleClass::Hdv, &space, &opts).unwrap();
        assert_eq!(b1, b2);
        let strip = |l: &TrialLog| l.trials.iter().map(|t| (t.params, t.fold_rmse.clone())).collect::<Vec<_>>();
        assert_eq!(strip(&l1), strip(&l2));
        assert_eq!(l1.trials.len(), 14);
        let min = l1.trials.iter().map(|t| t.mean_rmse).fold(f64::INFINITY, f64::min);
        assert_eq!(l1.best().unwrap().mean_rmse, min);
        assert_eq!(l1.best().unwrap().params, b1);

        let (_, lr) = random_search(&ls, VehicleClass::Hdv, &space, &opts).unwrap();
        assert_eq!(strip(&lr)[..5], strip(&l1)[..5]);

        let mut buf = Vec::new();
        l1.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,n_estimators,max_depth,"));
        assert_eq!(text.lines().count(), 15);
    }

    #[test]
    fn stratified_sample_keeps_every_class() {
        let ls = links(600);
        let s = stratified_sample(&ls, 0.1, 3).unwrap();
        assert_eq!(s.len(), 60);
        for fc in 1..=6 {
            assert_eq!(s.iter().filter(|l| l.functional_class.code() == fc).count(), 10);
        }
        assert_eq!(stratified_sample(&ls, 1.0, 3).unwrap().len(), 600);
        assert!(stratified_sample(&ls, 0.0, 3).is_err());
    }

    #[test]
    fn rejects_bad_setup() {
        let opts = TuneOptions::default();
        let empty = SearchSpace { max_features: vec![], ..Default::default() };
        assert!(bayes_search(&links(60), VehicleClass::Mdv, &empty, &opts).is_err());
        assert!(bayes_search(&links(5), VehicleClass::Mdv, &SearchSpace::default(), &opts).is_err());
    }
}
