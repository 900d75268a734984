//! File-level round trips through the pipeline stages.

use truckvol_core::density::{compute_density, write_density, DensityOptions, DENSITY_COLUMNS};
use truckvol_core::forest::{fit_forest, predict, ForestModel};
use truckvol_core::impute::{check_identities, read_imputed, run_imputation, write_imputed};
use truckvol_core::ingest::{
    assign_counties, clean_links, parse_blocks, parse_links, parse_polygon_layer, parse_urban_areas, reclassify_urban,
    write_links,
};
use truckvol_core::model::{Hyperparameters, Provenance, VehicleClass};
use truckvol_core::synth::{generate, write_corpus, SynthConfig};

fn small_params() -> (Hyperparameters, Hyperparameters) {
    let mut m = Hyperparameters::mdv_default();
    let mut h = Hyperparameters::hdv_default();
    m.n_estimators = 20;
    h.n_estimators = 20;
    (m, h)
}

#[test]
fn corpus_files_flow_through_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = SynthConfig { n_links: 1500, n_blocks: 40, dirty_frac: 0.04, seed: 21, ..Default::default() };
    let corpus = generate(&cfg).unwrap();
    write_corpus(d, &corpus).unwrap();

    let (raw, errors) = parse_links(&d.join("links.csv")).unwrap();
    assert!(errors.is_empty());
    let (mut links, report) = clean_links(&raw);
    assert!(report.reconciles());
    assert!(report.dropped() > 0);

    let (counties, _) = parse_polygon_layer(&d.join("counties.csv"), &["county_fips"]).unwrap();
    let assignment = assign_counties(&mut links, &counties);
    // synthetic links are generated inside the county they are labelled with
    assert_eq!(assignment.reassigned, 0);
    assert!(assignment.unmatched.is_empty());
    let (areas, _) = parse_urban_areas(&d.join("urban_areas.csv")).unwrap();
    let before: Vec<_> = links.iter().map(|l| l.urban_code).collect();
    reclassify_urban(&mut links, &areas);
    let changed = links.iter().zip(&before).filter(|(l, b)| l.urban_code != **b).count();
    // labels come from the midpoint, recoding uses length shares; they rarely disagree
    assert!(changed * 20 < links.len(), "{changed} urban codes changed");

    write_links(&d.join("clean.csv"), &links).unwrap();
    let (again, errs) = parse_links(&d.join("clean.csv")).unwrap();
    assert!(errs.is_empty());
    let (reread, r2) = clean_links(&again);
    assert_eq!(r2.dropped(), 0);
    assert_eq!(reread, links);

    let (mp, hp) = small_params();
    let result = run_imputation(&links, &mp, &hp, 21).unwrap();
    check_identities(&result).unwrap();
    assert!(result.stats.predicted_mdv > 0 && result.stats.predicted_hdv > 0);
    write_imputed(&d.join("imputed.csv"), &result).unwrap();
    let back = read_imputed(&d.join("imputed.csv")).unwrap();
    let mut sorted = result.links.clone();
    sorted.sort_by(|a, b| a.link_id.cmp(&b.link_id));
    assert_eq!(back.links, sorted);

    let (blocks, errs) = parse_blocks(&d.join("blocks.csv")).unwrap();
    assert!(errs.is_empty());
    let dens = compute_density(&blocks, &back.links, DensityOptions::default()).unwrap();
    assert_eq!(dens.blocks.len(), 40);
    assert_eq!(dens.links_skipped, back.links.iter().filter(|l| !l.functional_class.is_modelable()).count());
    write_density(&d.join("density.csv"), &dens.blocks).unwrap();
    let text = std::fs::read_to_string(d.join("density.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), DENSITY_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn saved_model_predicts_identically() {
    let cfg = SynthConfig { n_links: 600, missing_frac: 0.0, seed: 22, ..Default::default() };
    let (links, _) = clean_links(&generate(&cfg).unwrap().links);
    let links: Vec<_> = links.into_iter().filter(|l| l.functional_class.is_modelable()).collect();
    let (_, hp) = small_params();
    let model = fit_forest(&links, VehicleClass::Hdv, &hp, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = ForestModel::load(&path).unwrap();
    assert_eq!(loaded.target, VehicleClass::Hdv);
    let (a, b) = (predict(&model, &links), predict(&loaded, &links));
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn observed_values_survive_imputation() {
    let cfg = SynthConfig { n_links: 800, missing_frac: 0.4, seed: 23, ..Default::default() };
    let (links, _) = clean_links(&generate(&cfg).unwrap().links);
    let (mp, hp) = small_params();
    let result = run_imputation(&links, &mp, &hp, 23).unwrap();
    for (orig, out) in links.iter().zip(&result.links) {
        for class in [VehicleClass::Mdv, VehicleClass::Hdv] {
            let (o, n) = match class {
                VehicleClass::Mdv => (orig.aadt_mdv, out.aadt_mdv),
                _ => (orig.aadt_hdv, out.aadt_hdv),
            };
            if let Some(o) = o {
                let n = n.unwrap();
                assert_eq!(n.provenance, Provenance::Observed);
                assert_eq!(n.value, o.value);
            }
        }
    }
}
