//! Filling missing medium- and heavy-duty AADT with forest predictions and
//! deriving light-duty AADT as the remainder.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{fit_forest, predict, ForestModel};
use crate::ingest::{column_index, fmt_opt, link_row, parse_links, LINK_COLUMNS};
use crate::model::{validate_link, ClassAadt, Hyperparameters, Provenance, RoadLink, VehicleClass};
use crate::seed;

pub const IMPUTED_EXTRA_COLUMNS: [&str; 6] =
    ["aadt_mdv_est", "aadt_hdv_est", "aadt_ldv_est", "mdv_provenance", "hdv_provenance", "rescaled"];

/// Observed and missing subsets for `target`, each in input order.
pub fn split_observed_missing(links: &[RoadLink], target: VehicleClass) -> (Vec<RoadLink>, Vec<RoadLink>) {
    links.iter().cloned().partition(|l| l.class_aadt(target).is_some())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdvSplit {
    pub ldv: f64,
    pub mdv: f64,
    pub hdv: f64,
    pub rescaled: bool,
}

/// LDV as total minus trucks. When trucks exceed the total both truck
/// classes are scaled down proportionally and LDV is zero.
pub fn derive_ldv(total: f64, mdv: f64, hdv: f64) -> LdvSplit {
    let trucks = mdv + hdv;
    if trucks <= total {
        return LdvSplit { ldv: total - trucks, mdv, hdv, rescaled: false };
    }
    let k = total / trucks;
    let mdv = mdv * k;
    LdvSplit { ldv: 0.0, mdv, hdv: total - mdv, rescaled: true }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationStats {
    pub links: usize,
    pub predicted_mdv: usize,
    pub predicted_hdv: usize,
    pub rescaled: usize,
    /// Functional class 7 links, passed through without class values.
    pub passthrough: usize,
    pub vkt_total: f64,
    pub vkt_ldv: f64,
    pub vkt_mdv: f64,
    pub vkt_hdv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    /// Same order as the input.
    pub links: Vec<RoadLink>,
    pub rescaled: Vec<bool>,
    pub stats: ImputationStats,
}

/// Trains one forest per truck class on the modelable links that carry an
/// observed value for it.
pub fn train_models(
    links: &[RoadLink],
    mdv_params: &Hyperparameters,
    hdv_params: &Hyperparameters,
    seed: u64,
) -> Result<(ForestModel, ForestModel)> {
    let modelable: Vec<RoadLink> = links.iter().filter(|l| l.functional_class.is_modelable()).cloned().collect();
    let fit = |target: VehicleClass, params: &Hyperparameters, stream: u64| {
        let (observed, _) = split_observed_missing(&modelable, target);
        if observed.is_empty() {
            return Err(Error::EmptyTrainingSet(format!("no observed {} values", target.as_str())));
        }
        fit_forest(&observed, target, params, seed::derive(seed, "impute-forest", stream))
    };
    let (mdv, hdv) = rayon::join(|| fit(VehicleClass::Mdv, mdv_params, 0), || fit(VehicleClass::Hdv, hdv_params, 1));
    Ok((mdv?, hdv?))
}

/// Fills missing truck values from the models and derives LDV. Observed
/// values are never changed; when one class is observed and the other
/// predicted, only the predicted value is reduced to keep the class sum.
pub fn apply_models(links: &[RoadLink], mdv_model: &ForestModel, hdv_model: &ForestModel) -> ImputationResult {
    let mut out = links.to_vec();
    let mut stats = ImputationStats { links: links.len(), ..Default::default() };
    let mut rescaled = vec![false; links.len()];

    for (model, class) in [(mdv_model, VehicleClass::Mdv), (hdv_model, VehicleClass::Hdv)] {
        let idx: Vec<usize> = (0..out.len())
            .filter(|&i| out[i].functional_class.is_modelable() && out[i].class_aadt(class).is_none())
            .collect();
        let subset: Vec<RoadLink> = idx.iter().map(|&i| out[i].clone()).collect();
        for (&i, v) in idx.iter().zip(predict(model, &subset)) {
            *out[i].class_slot(class) = Some(ClassAadt { value: v, provenance: Provenance::Predicted });
        }
        match class {
            VehicleClass::Mdv => stats.predicted_mdv = idx.len(),
            _ => stats.predicted_hdv = idx.len(),
        }
    }

    for (l, flag) in out.iter_mut().zip(rescaled.iter_mut()) {
        if !l.functional_class.is_modelable() {
            stats.passthrough += 1;
            continue;
        }
        let (m, h) = (l.aadt_mdv.unwrap(), l.aadt_hdv.unwrap());
        let split = match (m.provenance, h.provenance) {
            (Provenance::Predicted, Provenance::Predicted) => derive_ldv(l.aadt_total, m.value, h.value),
            _ if m.value + h.value <= l.aadt_total => derive_ldv(l.aadt_total, m.value, h.value),
            (Provenance::Predicted, _) => {
                LdvSplit { ldv: 0.0, mdv: l.aadt_total - h.value, hdv: h.value, rescaled: true }
            }
            _ => LdvSplit { ldv: 0.0, mdv: m.value, hdv: l.aadt_total - m.value, rescaled: true },
        };
        l.aadt_mdv = Some(ClassAadt { value: split.mdv, provenance: m.provenance });
        l.aadt_hdv = Some(ClassAadt { value: split.hdv, provenance: h.provenance });
        l.aadt_ldv = Some(ClassAadt { value: split.ldv, provenance: Provenance::Derived });
        *flag = split.rescaled;
        stats.rescaled += usize::from(split.rescaled);
        stats.vkt_total += l.aadt_total * l.length_km;
        stats.vkt_ldv += split.ldv * l.length_km;
        stats.vkt_mdv += split.mdv * l.length_km;
        stats.vkt_hdv += split.hdv * l.length_km;
    }
    ImputationResult { links: out, rescaled, stats }
}

pub fn run_imputation(
    links: &[RoadLink],
    mdv_params: &Hyperparameters,
    hdv_params: &Hyperparameters,
    seed: u64,
) -> Result<ImputationResult> {
    let (m, h) = train_models(links, mdv_params, hdv_params, seed)?;
    Ok(apply_models(links, &m, &h))
}

/// Checks the output contract: complete non-negative classes summing to the
/// total on every modelable link.
pub fn check_identities(result: &ImputationResult) -> Result<()> {
    for l in &result.links {
        if !l.functional_class.is_modelable() {
            continue;
        }
        let get = |c| l.class_aadt(c).ok_or_else(|| Error::Invariant(format!("link {} lacks {}", l.link_id, c.as_str())));
        let (m, h, d) = (get(VehicleClass::Mdv)?, get(VehicleClass::Hdv)?, get(VehicleClass::Ldv)?);
        if m < 0.0 || h < 0.0 || d < 0.0 {
            return Err(Error::Invariant(format!("link {} has a negative class value", l.link_id)));
        }
        if (m + h + d - l.aadt_total).abs() > 1e-6 * l.aadt_total.abs().max(1.0) {
            return Err(Error::Invariant(format!("link {} classes do not sum to total", l.link_id)));
        }
    }
    Ok(())
}

/// Writes the input columns plus estimates, sorted by link id.
pub fn write_imputed_to<W: Write>(out: W, result: &ImputationResult) -> Result<()> {
    let mut order: Vec<usize> = (0..result.links.len()).collect();
    order.sort_by(|&a, &b| result.links[a].link_id.cmp(&result.links[b].link_id));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LINK_COLUMNS.iter().chain(IMPUTED_EXTRA_COLUMNS.iter()))?;
    for i in order {
        let l = &result.links[i];
        let prov = |c: Option<ClassAadt>| c.map(|c| c.provenance.as_str().to_string()).unwrap_or_default();
        let mut row = link_row(l);
        row.extend([
            fmt_opt(l.class_aadt(VehicleClass::Mdv)),
            fmt_opt(l.class_aadt(VehicleClass::Hdv)),
            fmt_opt(l.class_aadt(VehicleClass::Ldv)),
            prov(l.aadt_mdv),
            prov(l.aadt_hdv),
            if result.rescaled[i] { "1" } else { "0" }.to_string(),
        ]);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_imputed(path: &Path, result: &ImputationResult) -> Result<()> {
    write_imputed_to(std::io::BufWriter::new(File::create(path)?), result)
}

/// Reads a file written by [`write_imputed`].
pub fn read_imputed(path: &Path) -> Result<ImputationResult> {
    let schema_err = |message: String| Error::Schema { path: path.to_path_buf(), message };
    let (raws, errors) = parse_links(path)?;
    if let Some(e) = errors.first() {
        return Err(schema_err(e.to_string()));
    }
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let idx = column_index(&rdr.headers()?.clone(), path, &IMPUTED_EXTRA_COLUMNS)?;
    let mut links = Vec::with_capacity(raws.len());
    let mut rescaled = Vec::with_capacity(raws.len());
    for (raw, rec) in raws.iter().zip(rdr.records()) {
        let rec = rec?;
        let mut l = validate_link(raw).map_err(|v| {
            schema_err(format!("line {}: {} violates {}", raw.line, v[0].field, v[0].rule))
        })?;
        let num = |k: usize| -> Result<Option<f64>> {
            let s = rec.get(idx[k]).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| schema_err(format!("line {}: bad number `{s}`", raw.line)))
        };
        let prov = |k: usize| -> Result<Option<Provenance>> {
            let s = rec.get(idx[k]).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some)
        };
        let slot = |v: Option<f64>, p: Option<Provenance>| v.zip(p).map(|(value, provenance)| ClassAadt { value, provenance });
        l.aadt_mdv = slot(num(0)?, prov(3)?);
        l.aadt_hdv = slot(num(1)?, prov(4)?);
        l.aadt_ldv = num(2)?.map(|value| ClassAadt { value, provenance: Provenance::Derived });
        links.push(l);
        rescaled.push(rec.get(idx[5]).unwrap_or("").trim() == "1");
    }
    let mut stats = ImputationStats { links: links.len(), ..Default::default() };
    for (l, r) in links.iter().zip(&rescaled) {
        let predicted = |c: Option<ClassAadt>| c.is_some_and(|c| c.provenance == Provenance::Predicted);
        stats.predicted_mdv += usize::from(predicted(l.aadt_mdv));
        stats.predicted_hdv += usize::from(predicted(l.aadt_hdv));
        stats.rescaled += usize::from(*r);
        if !l.functional_class.is_modelable() {
            stats.passthrough += 1;
            continue;
        }
        for (c, acc) in [
            (VehicleClass::Total, &mut stats.vkt_total),
            (VehicleClass::Ldv, &mut stats.vkt_ldv),
            (VehicleClass::Mdv, &mut stats.vkt_mdv),
            (VehicleClass::Hdv, &mut stats.vkt_hdv),
        ] {
            *acc += l.vkt(c).unwrap_or(0.0);
        }
    }
    Ok(ImputationResult { links, rescaled, stats })
}
