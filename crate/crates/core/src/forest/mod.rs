//! Random-forest regression over link attributes.

mod data;
mod tree;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{FeatureSchema, Matrix};
pub use tree::{fit_tree, fit_tree_on, RegressionTree, LEAF};

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, RoadLink, VehicleClass};

pub const MODEL_VERSION: u32 = 1;

/// Sampling of training rows for each tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Draw with replacement; when false every tree sees every row once.
    pub bootstrap: bool,
    /// Bootstrap sample size as a fraction of the training rows.
    pub sample_fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { bootstrap: true, sample_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub target: VehicleClass,
    pub params: Hyperparameters,
    pub seed: u64,
    pub schema: FeatureSchema,
    pub trees: Vec<RegressionTree>,
}

/// RNG for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Trains `params.n_estimators` trees on a prepared matrix.
pub fn fit_trees(
    x: &Matrix,
    y: &[f64],
    params: &Hyperparameters,
    seed: u64,
    opts: FitOptions,
) -> Result<Vec<RegressionTree>> {
    params.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch(x.n_rows(), y.len()));
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyTrainingSet("no training rows".into()));
    }
    if !(opts.sample_fraction > 0.0 && opts.sample_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("sample_fraction {} not in (0, 1]", opts.sample_fraction)));
    }
    let m = ((n as f64 * opts.sample_fraction).round() as usize).max(1);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let samples: Vec<usize> =
                if opts.bootstrap { (0..m).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            fit_tree_on(x, y, samples, params, &mut rng)
        })
        .collect();
    Ok(trees)
}

fn targets(links: &[RoadLink], target: VehicleClass) -> Result<Vec<f64>> {
    if !matches!(target, VehicleClass::Mdv | VehicleClass::Hdv) {
        return Err(Error::InvalidArgument(format!("{} is not a prediction target", target.as_str())));
    }
    links
        .iter()
        .map(|l| {
            l.class_aadt(target).ok_or_else(|| {
                Error::InvalidArgument(format!("link {} has no observed {}", l.link_id, target.as_str()))
            })
        })
        .collect()
}

pub fn fit_forest(links: &[RoadLink], target: VehicleClass, params: &Hyperparameters, seed: u64) -> Result<ForestModel> {
    fit_forest_with(links, target, params, seed, FitOptions::default())
}

pub fn fit_forest_with(
    links: &[RoadLink],
    target: VehicleClass,
    params: &Hyperparameters,
    seed: u64,
    opts: FitOptions,
) -> Result<ForestModel> {
    if links.is_empty() {
        return Err(Error::EmptyTrainingSet(format!("no observed {} links", target.as_str())));
    }
    let y = targets(links, target)?;
    let schema = FeatureSchema::build(links)?;
    let x = schema.encode(links);
    let trees = fit_trees(&x, &y, params, seed, opts)?;
    Ok(ForestModel { version: MODEL_VERSION, target, params: *params, seed, schema, trees })
}

/// Mean over trees, clamped at zero.
pub fn predict_matrix(trees: &[RegressionTree], x: &Matrix) -> Vec<f64> {
    (0..x.n_rows())
        .into_par_iter()
        .map(|r| {
            let s: f64 = trees.iter().map(|t| t.predict_row(x, r)).sum();
            (s / trees.len() as f64).max(0.0)
        })
        .collect()
}

pub fn predict(model: &ForestModel, links: &[RoadLink]) -> Vec<f64> {
    predict_matrix(&model.trees, &model.schema.encode(links))
}

impl ForestModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Head {
            version: u32,
        }
        let head: Head = serde_json::from_str(s)?;
        if head.version != MODEL_VERSION {
            return Err(Error::ModelVersion(head.version));
        }
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
