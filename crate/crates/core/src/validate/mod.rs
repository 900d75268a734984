//! Model evaluation: hold-out metrics, residual smoothing, county MAPE,
//! k-fold cross-validation and noise sensitivity.

mod lowess;
mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lowess::lowess;
pub use report::*;

use crate::error::{Error, Result};
use crate::forest::{fit_forest, predict};
use crate::model::{Hyperparameters, MetricsReport, RoadLink, VehicleClass};
use crate::seed;
use crate::tune::fold_indices;

/// Seeded shuffle split; the test set holds `round(n * test_frac)` rows,
/// at least one and at most `n - 1`. Both halves keep input order.
pub fn train_test_indices(n: usize, test_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} rows")));
    }
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction {test_frac} not in (0, 1)")));
    }
    let n_test = ((n as f64 * test_frac).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, "train-test", n as u64));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split(links: &[RoadLink], test_frac: f64, seed: u64) -> Result<(Vec<RoadLink>, Vec<RoadLink>)> {
    let (train, test) = train_test_indices(links.len(), test_frac, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| links[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

pub fn score(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("cannot score zero rows".into()));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let (mut sse, mut sst, mut sae) = (0.0, 0.0, 0.0);
    let (mut ape, mut n_ape) = (0.0, 0usize);
    for (&y, &p) in y_true.iter().zip(y_pred) {
        let e = y - p;
        sse += e * e;
        sae += e.abs();
        sst += (y - mean) * (y - mean);
        if y > 0.0 {
            ape += e.abs() / y;
            n_ape += 1;
        }
    }
    Ok(MetricsReport {
        r2: if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN },
        mae: sae / n,
        rmse: (sse / n).sqrt(),
        mape: (n_ape > 0).then(|| 100.0 * ape / n_ape as f64),
        n: y_true.len(),
        mape_excluded: y_true.len() - n_ape,
    })
}

fn observed(links: &[RoadLink], target: VehicleClass) -> Result<Vec<f64>> {
    links
        .iter()
        .map(|l| {
            l.class_aadt(target).ok_or_else(|| {
                Error::InvalidArgument(format!("link {} has no observed {}", l.link_id, target.as_str()))
            })
        })
        .collect()
}

/// One link's contribution to its county's MAPE.
#[derive(Debug, Clone, PartialEq)]
pub struct MapeRow {
    pub county_fips: String,
    pub observed: f64,
    pub predicted: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyMape {
    pub county_fips: String,
    pub mape_pct: f64,
    pub total_vkt: f64,
    pub n_links: usize,
    /// Links left out because their observed value is zero.
    pub zero_excluded: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountyMapeReport {
    /// Sorted by county.
    pub counties: Vec<CountyMape>,
    /// Counties whose usable links carry no weight.
    pub excluded_counties: Vec<String>,
}

/// Weighted mean absolute percentage error per county.
pub fn weighted_mape_by_county(rows: &[MapeRow]) -> CountyMapeReport {
    #[derive(Default)]
    struct Acc {
        num: f64,
        den: f64,
        n: usize,
        zero: usize,
    }
    let mut by: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in rows {
        let a = by.entry(r.county_fips.as_str()).or_default();
        if r.observed == 0.0 {
            a.zero += 1;
            continue;
        }
        a.num += r.weight * (r.observed - r.predicted).abs() / r.observed;
        a.den += r.weight;
        a.n += 1;
    }
    let mut out = CountyMapeReport::default();
    for (c, a) in by {
        if a.den > 0.0 {
            out.counties.push(CountyMape {
                county_fips: c.to_string(),
                mape_pct: 100.0 * a.num / a.den,
                total_vkt: a.den,
                n_links: a.n,
                zero_excluded: a.zero,
            });
        } else {
            out.excluded_counties.push(c.to_string());
        }
    }
    out
}

/// County MAPE weighted by each link's observed VKT for `target`.
pub fn county_weighted_mape(
    test_links: &[RoadLink],
    predictions: &[f64],
    target: VehicleClass,
) -> Result<CountyMapeReport> {
    if test_links.len() != predictions.len() {
        return Err(Error::LengthMismatch(test_links.len(), predictions.len()));
    }
    let y = observed(test_links, target)?;
    let rows: Vec<MapeRow> = test_links
        .iter()
        .zip(y.iter().zip(predictions))
        .map(|(l, (&obs, &p))| MapeRow {
            county_fips: l.county_fips.clone(),
            observed: obs,
            predicted: p,
            weight: obs * l.length_km,
        })
        .collect();
    Ok(weighted_mape_by_county(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub observed: f64,
    pub predicted: f64,
    pub residual: f64,
    pub lowess: f64,
}

/// Residuals (observed minus predicted) with a smooth of residual against
/// observed value, in input order.
pub fn residual_analysis(observed: &[f64], predicted: &[f64], frac: f64) -> Result<Vec<ResidualRow>> {
    if observed.len() != predicted.len() {
        return Err(Error::LengthMismatch(observed.len(), predicted.len()));
    }
    let residual: Vec<f64> = observed.iter().zip(predicted).map(|(o, p)| o - p).collect();
    let fit = if observed.len() >= 2 { lowess(observed, &residual, frac, 0)? } else { residual.clone() };
    Ok((0..observed.len())
        .map(|i| ResidualRow { observed: observed[i], predicted: predicted[i], residual: residual[i], lowess: fit[i] })
        .collect())
}

/// Mean and sample variance of each metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpread {
    pub mean: f64,
    pub variance: f64,
}

fn spread(v: &[f64]) -> MetricSpread {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let variance = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    MetricSpread { mean, variance }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<MetricsReport>,
    pub r2: MetricSpread,
    pub mae: MetricSpread,
    pub rmse: MetricSpread,
    /// Over folds where MAPE is defined.
    pub mape: Option<MetricSpread>,
}

pub fn kfold_cv(
    links: &[RoadLink],
    target: VehicleClass,
    params: &Hyperparameters,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    let y = observed(links, target)?;
    let folds = fold_indices(links.len(), k, seed)?;
    let reports: Vec<MetricsReport> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; links.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<RoadLink> =
                links.iter().zip(&in_test).filter(|(_, t)| !**t).map(|(l, _)| l.clone()).collect();
            let held: Vec<RoadLink> = test.iter().map(|&i| links[i].clone()).collect();
            let model = fit_forest(&train, target, params, seed::derive(seed, "kfold-forest", f as u64))?;
            let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            score(&truth, &predict(&model, &held))
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).collect::<Vec<f64>>();
    let mapes: Vec<f64> = reports.iter().filter_map(|r| r.mape).collect();
    Ok(CvReport {
        r2: spread(&col(|r| r.r2)),
        mae: spread(&col(|r| r.mae)),
        rmse: spread(&col(|r| r.rmse)),
        mape: (!mapes.is_empty()).then(|| spread(&mapes)),
        folds: reports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    /// Noise on the total-AADT predictor.
    Predictor,
    /// Noise on the class AADT being modelled.
    Response,
}

impl NoiseTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseTarget::Predictor => "predictor",
            NoiseTarget::Response => "response",
        }
    }
}

impl std::str::FromStr for NoiseTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "predictor" | "aadt_total" => Ok(NoiseTarget::Predictor),
            "response" => Ok(NoiseTarget::Response),
            _ => Err(Error::InvalidArgument(format!("unknown noise target `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub noise_target: NoiseTarget,
    /// `(noise percent, test R²)`, ascending, starting at 0.
    pub levels: Vec<(f64, f64)>,
}

pub const DEFAULT_NOISE_LEVELS: [f64; 7] = [0.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityOptions {
    pub test_frac: f64,
    pub seed: u64,
}

/// Multiplies the chosen quantity of each training link by `1 + ε` with
/// `ε ~ N(0, pct/100)`, clamped at zero. The standard-normal draws are the
/// same for every level, so levels differ only in scale.
pub fn perturb(links: &[RoadLink], target: VehicleClass, noise: NoiseTarget, pct: f64, seed: u64) -> Vec<RoadLink> {
    let mut out = links.to_vec();
    if pct == 0.0 {
        return out;
    }
    let mut rng = seed::rng(seed, "noise", 0);
    let sigma = pct / 100.0;
    for l in &mut out {
        let z: f64 = StandardNormal.sample(&mut rng);
        let k = 1.0 + sigma * z;
        match noise {
            NoiseTarget::Predictor => l.aadt_total = (l.aadt_total * k).max(0.0),
            NoiseTarget::Response => {
                if let Some(c) = l.class_slot(target).as_mut() {
                    c.value = (c.value * k).max(0.0);
                }
            }
        }
    }
    out
}

/// Retrains at each noise level and scores on a clean held-out set. Level 0
/// is always evaluated and equals the unperturbed baseline.
pub fn sensitivity(
    links: &[RoadLink],
    target: VehicleClass,
    params: &Hyperparameters,
    levels: &[f64],
    noise: NoiseTarget,
    opts: SensitivityOptions,
) -> Result<SensitivityCurve> {
    if levels.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidArgument("noise levels must be non-negative".into()));
    }
    let mut lv: Vec<f64> = levels.to_vec();
    lv.push(0.0);
    lv.sort_by(f64::total_cmp);
    lv.dedup();

    let (train, test) = train_test_split(links, opts.test_frac, opts.seed)?;
    let truth = observed(&test, target)?;
    let forest_seed = seed::derive(opts.seed, "sensitivity-forest", 0);
    let curve = lv
        .par_iter()
        .map(|&p| {
            let noisy = perturb(&train, target, noise, p, opts.seed);
            let model = fit_forest(&noisy, target, params, forest_seed)?;
            Ok((p, score(&truth, &predict(&model, &test))?.r2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityCurve { noise_target: noise, levels: curve })
}

/// Hold-out fit used by the split evaluation: trains on `train`, returns
/// predictions for `test` and their metrics.
pub fn holdout(
    train: &[RoadLink],
    test: &[RoadLink],
    target: VehicleClass,
    params: &Hyperparameters,
    seed: u64,
) -> Result<(Vec<f64>, MetricsReport)> {
    let model = fit_forest(train, target, params, seed::derive(seed, "holdout-forest", 0))?;
    let pred = predict(&model, test);
    let m = score(&observed(test, target)?, &pred)?;
    Ok((pred, m))
}

/// Quartiles by linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> [f64; 3] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        if v.is_empty() {
            return f64::NAN;
        }
        let h = p * (v.len() - 1) as f64;
        let (i, frac) = (h.floor() as usize, h - h.floor());
        if i + 1 < v.len() {
            v[i] + frac * (v[i + 1] - v[i])
        } else {
            v[i]
        }
    };
    [q(0.25), q(0.5), q(0.75)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub predictor: String,
    pub group: String,
    pub n: usize,
    pub observed: [f64; 3],
    pub predicted: [f64; 3],
}

/// Observed and predicted quartiles grouped by functional class, lane count
/// and decile of total AADT.
pub fn predictor_summaries(
    test_links: &[RoadLink],
    predictions: &[f64],
    target: VehicleClass,
) -> Result<Vec<GroupSummary>> {
    if test_links.len() != predictions.len() {
        return Err(Error::LengthMismatch(test_links.len(), predictions.len()));
    }
    let y = observed(test_links, target)?;
    let n = test_links.len();
    let mut by_total: Vec<usize> = (0..n).collect();
    by_total.sort_by(|&a, &b| test_links[a].aadt_total.total_cmp(&test_links[b].aadt_total).then(a.cmp(&b)));
    let mut decile = vec![0usize; n];
    for (rank, &i) in by_total.iter().enumerate() {
        decile[i] = rank * 10 / n.max(1);
    }

    let mut groups: BTreeMap<(u8, String), Vec<usize>> = BTreeMap::new();
    for (i, l) in test_links.iter().enumerate() {
        groups.entry((0, format!("{}", l.functional_class.code()))).or_default().push(i);
        groups.entry((1, format!("{:03}", l.through_lanes))).or_default().push(i);
        groups.entry((2, format!("{}", decile[i] + 1))).or_default().push(i);
    }
    let names = ["functional_class", "through_lanes", "aadt_total_decile"];
    let mut out: Vec<GroupSummary> = groups
        .into_iter()
        .map(|((k, g), ix)| {
            let obs: Vec<f64> = ix.iter().map(|&i| y[i]).collect();
            let pred: Vec<f64> = ix.iter().map(|&i| predictions[i]).collect();
            let group = if k == 1 { g.trim_start_matches('0').to_string() } else { g };
            GroupSummary {
                predictor: names[k as usize].to_string(),
                group,
                n: ix.len(),
                observed: quartiles(&obs),
                predicted: quartiles(&pred),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        let key = |s: &GroupSummary| (names.iter().position(|n| *n == s.predictor), s.group.parse::<u32>().ok());
        key(a).cmp(&key(b))
    });
    Ok(out)
}
