use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use truckvol_core::density::{compute_density, write_density, DensityOptions};
use truckvol_core::forest::{fit_forest, ForestModel};
use truckvol_core::impute::{apply_models, check_identities, read_imputed, write_imputed};
use truckvol_core::ingest::{
    assign_counties, clean_links, parse_blocks, parse_links, parse_polygon_layer, parse_urban_areas, write_links,
    CleaningReport, RowError,
};
use truckvol_core::model::{Hyperparameters, MetricsReport, RoadLink, VehicleClass};
use truckvol_core::seed;
use truckvol_core::synth::{generate, write_corpus, CORPUS_FILES};
use truckvol_core::tune::{bayes_search, stratified_sample, SearchSpace, TuneOptions};
use truckvol_core::validate::{
    county_weighted_mape, holdout, kfold_cv, predictor_summaries, residual_analysis, sensitivity, train_test_split,
    write_county_mape_csv, write_cv_csv, write_metrics_csv, write_predictor_summary_csv, write_residuals_csv,
    write_sensitivity_csv, CountyMapeReport, CvReport, GroupSummary, NoiseTarget, SensitivityCurve,
    SensitivityOptions,
};

use crate::config::RunConfig;
use crate::manifest::Recorder;
use crate::CliError;

const TARGETS: [VehicleClass; 2] = [VehicleClass::Mdv, VehicleClass::Hdv];

pub const CLEAN_LINKS: &str = "links_clean.csv";
pub const CLEANING_REPORT: &str = "cleaning_report.json";
pub const BEST_PARAMS: &str = "best_params.json";
pub const IMPUTED_LINKS: &str = "links_imputed.csv";

/// Paths a command may read, after flags and config are merged.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub links: Option<PathBuf>,
    pub blocks: Option<PathBuf>,
    pub counties: Option<PathBuf>,
    pub urban_areas: Option<PathBuf>,
    pub params: Option<PathBuf>,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub inputs: Inputs,
}

impl Ctx {
    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Explicit path, else the conventional file in the output directory.
    fn input_or(&self, explicit: &Option<PathBuf>, name: &str, hint: &str) -> Result<PathBuf, CliError> {
        let p = explicit.clone().unwrap_or_else(|| self.out_file(name));
        if !p.is_file() {
            return Err(CliError::Usage(format!("input {} not found ({hint})", p.display())));
        }
        Ok(p)
    }

    fn optional_input(&self, explicit: &Option<PathBuf>, name: &str) -> Result<Option<PathBuf>, CliError> {
        match explicit {
            Some(p) if !p.is_file() => Err(CliError::Usage(format!("input {} not found", p.display()))),
            Some(p) => Ok(Some(p.clone())),
            None => Ok(Some(self.out_file(name)).filter(|p| p.is_file())),
        }
    }
}

fn json_out<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn csv_out(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn warn_rows(what: &str, errors: &[RowError]) {
    for e in errors.iter().take(20) {
        eprintln!("warning: {what}: {e}");
    }
    if errors.len() > 20 {
        eprintln!("warning: {what}: {} more row errors", errors.len() - 20);
    }
}

/// Reads a cleaned links file; any unparseable row is a schema error since
/// the file was written by `clean`.
fn read_clean(path: &Path) -> Result<Vec<RoadLink>, CliError> {
    let (raw, errors) = parse_links(path)?;
    if let Some(e) = errors.first() {
        return Err(CliError::Usage(format!("{}: {e}", path.display())));
    }
    let (links, report) = clean_links(&raw);
    if report.dropped() > 0 {
        return Err(CliError::Data(format!(
            "{}: {} rows fail the cleaning rules; run `clean` on it first",
            path.display(),
            report.dropped()
        )));
    }
    Ok(links)
}

/// Modelable links with an observed value for `target`.
fn observed_for(links: &[RoadLink], target: VehicleClass) -> Result<Vec<RoadLink>, CliError> {
    let obs: Vec<RoadLink> = links
        .iter()
        .filter(|l| l.functional_class.is_modelable() && l.class_aadt(target).is_some())
        .cloned()
        .collect();
    if obs.is_empty() {
        return Err(CliError::Data(format!("no links with observed {}", target.as_str())));
    }
    Ok(obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub mdv: Hyperparameters,
    pub hdv: Hyperparameters,
}

impl ParamSet {
    fn get(&self, target: VehicleClass) -> &Hyperparameters {
        match target {
            VehicleClass::Hdv => &self.hdv,
            _ => &self.mdv,
        }
    }
}

/// `--params`, else tuned parameters when tuning is enabled, else config.
fn resolve_params(ctx: &Ctx, rec: &mut Recorder) -> Result<ParamSet, CliError> {
    let path = match &ctx.inputs.params {
        Some(p) => Some(p.clone()),
        None if ctx.cfg.tuning.enabled => Some(ctx.input_or(&None, BEST_PARAMS, "run `tune` first")?),
        None => None,
    };
    let Some(path) = path else {
        return Ok(ParamSet { mdv: ctx.cfg.mdv_params, hdv: ctx.cfg.hdv_params });
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let set: ParamSet =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    for p in [&set.mdv, &set.hdv] {
        p.validate().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    rec.input(&path);
    Ok(set)
}

pub fn synth(ctx: &Ctx) -> Result<(), CliError> {
    let mut rec = Recorder::start("synth", ctx.cfg.seed);
    let cfg = truckvol_core::synth::SynthConfig { seed: ctx.cfg.seed, ..ctx.cfg.synth };
    let corpus = generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    write_corpus(&ctx.out, &corpus)?;
    for f in CORPUS_FILES {
        rec.output(&ctx.out_file(f));
    }
    rec.finish(&ctx.out)?;
    eprintln!("synth: {} links, {} blocks in {}", corpus.links.len(), corpus.blocks.len(), ctx.out.display());
    Ok(())
}

#[derive(Serialize)]
struct CleanOutput<'a> {
    #[serde(flatten)]
    report: &'a CleaningReport,
    parse_errors: &'a [RowError],
    unmatched_links: &'a [String],
}

pub fn clean(ctx: &Ctx) -> Result<(), CliError> {
    let mut rec = Recorder::start("clean", ctx.cfg.seed);
    let links_path = ctx.input_or(&ctx.inputs.links, CORPUS_FILES[0], "pass --links")?;
    rec.input(&links_path);
    let (raw, parse_errors) = parse_links(&links_path)?;
    warn_rows("links", &parse_errors);
    let (mut links, mut report) = clean_links(&raw);

    let mut unmatched = Vec::new();
    if let Some(p) = ctx.optional_input(&ctx.inputs.counties, CORPUS_FILES[2])? {
        rec.input(&p);
        let (counties, errs) = parse_polygon_layer(&p, &["county_fips", "fips", "geoid"])?;
        warn_rows("counties", &errs);
        let a = assign_counties(&mut links, &counties);
        report.county_reassigned = a.reassigned;
        report.county_unmatched = a.unmatched.len();
        unmatched = a.unmatched;
    }
    if let Some(p) = ctx.optional_input(&ctx.inputs.urban_areas, CORPUS_FILES[3])? {
        rec.input(&p);
        let (areas, errs) = parse_urban_areas(&p)?;
        warn_rows("urban areas", &errs);
        report.urban_code_changed = truckvol_core::ingest::reclassify_urban(&mut links, &areas);
    }
    if !report.reconciles() {
        return Err(CliError::Core(truckvol_core::Error::Invariant("cleaning counts do not reconcile".into())));
    }

    let out_links = ctx.out_file(CLEAN_LINKS);
    write_links(&out_links, &links)?;
    let out_report = ctx.out_file(CLEANING_REPORT);
    json_out(&out_report, &CleanOutput { report: &report, parse_errors: &parse_errors, unmatched_links: &unmatched })?;
    rec.output(&out_links);
    rec.output(&out_report);
    rec.finish(&ctx.out)?;
    eprintln!(
        "clean: kept {} of {} rows ({:.2}% dropped)",
        report.rows_kept,
        report.rows_read,
        100.0 * report.dropped_share
    );
    Ok(())
}

pub fn tune(ctx: &Ctx) -> Result<(), CliError> {
    let mut rec = Recorder::start("tune", ctx.cfg.seed);
    let path = ctx.input_or(&ctx.inputs.links, CLEAN_LINKS, "run `clean` first")?;
    rec.input(&path);
    let links = read_clean(&path)?;
    let t = &ctx.cfg.tuning;
    let space = SearchSpace::default();
    let mut best = ParamSet { mdv: ctx.cfg.mdv_params, hdv: ctx.cfg.hdv_params };
    for (k, target) in TARGETS.into_iter().enumerate() {
        let mut obs = observed_for(&links, target)?;
        if t.sample_frac < 1.0 {
            obs = stratified_sample(&obs, t.sample_frac, seed::derive(ctx.cfg.seed, "tune-sample", k as u64))?;
        }
        let opts = TuneOptions {
            n_iter: t.n_iter,
            folds: t.folds,
            n_initial: t.n_initial,
            seed: seed::derive(ctx.cfg.seed, "tune", k as u64),
            ..TuneOptions::default()
        };
        let (params, log) = bayes_search(&obs, target, &space, &opts)?;
        let trials = ctx.out_file(&format!("trials_{}.csv", target.as_str()));
        log.write_csv(&trials)?;
        rec.timed_output(&trials);
        let b = log.best().expect("search ran at least one trial");
        eprintln!("tune {}: best mean RMSE {:.3} after {} trials", target.as_str(), b.mean_rmse, log.trials.len());
        match target {
            VehicleClass::Hdv => best.hdv = params,
            _ => best.mdv = params,
        }
    }
    let out = ctx.out_file(BEST_PARAMS);
    json_out(&out, &best)?;
    rec.output(&out);
    rec.finish(&ctx.out)?;
    Ok(())
}

pub fn model_path(out: &Path, target: VehicleClass) -> PathBuf {
    out.join(format!("model_{}.json", target.as_str()))
}

pub fn train(ctx: &Ctx) -> Result<(), CliError> {
    let mut rec = Recorder::start("train", ctx.cfg.seed);
    let path = ctx.input_or(&ctx.inputs.links, CLEAN_LINKS, "run `clean` first")?;
    rec.input(&path);
    let links = read_clean(&path)?;
    let params = resolve_params(ctx, &mut rec)?;
    for (k, target) in TARGETS.into_iter().enumerate() {
        let obs = observed_for(&links, target)?;
        let model = fit_forest(&obs, target, params.get(target), seed::derive(ctx.cfg.seed, "impute-forest", k as u64))?;
        let out = model_path(&ctx.out, target);
        model.save(&out)?;
        rec.output(&out);
        eprintln!("train {}: {} trees on {} links", target.as_str(), model.trees.len(), obs.len());
    }
    rec.finish(&ctx.out)?;
    Ok(())
}

pub fn impute(ctx: &Ctx) -> Result<(), CliError> {
    let mut rec = Recorder::start("impute", ctx.cfg.seed);
    let path = ctx.input_or(&ctx.inputs.links, CLEAN_LINKS, "run `clean` first")?;
    rec.input(&path);
    let links = read_clean(&path)?;
    let mut models = Vec::new();
    for target in TARGETS {
        let p = model_path(&ctx.out, target);
        if !p.is_file() {
            return Err(CliError::Usage(format!("model {} not found (run `train` first)", p.display())));
        }
        rec.input(&p);
        let m = ForestModel::load(&p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        if m.target != target {
            return Err(CliError::Usage(format!("{} holds a {} model", p.display(), m.target.as_str())));
        }
        models.push(m);
    }
    let result = apply_models(&links, &models[0], &models[1]);
    check_identities(&result)?;
    let out = ctx.out_file(IMPUTED_LINKS);
    write_imputed(&out, &result)?;
    let stats = ctx.out_file("imputation_stats.json");
    json_out(&stats, &result.stats)?;
    rec.output(&out);
    rec.output(&stats);
    rec.finish(&ctx.out)?;
    eprintln!(
        "impute: {} mdv and {} hdv values predicted, {} links rescaled",
        result.stats.predicted_mdv, result.stats.predicted_hdv, result.stats.rescaled
    );
    Ok(())
}

#[derive(Serialize)]
struct DensityOutput<'a> {
    blocks: usize,
    links_skipped: usize,
    block_errors: &'a [truckvol_core::density::BlockError],
    parse_errors: &'a [RowError],
    buffer_m: f64,
    arc_segments: usize,
}

pub fn density(ctx: &Ctx) -> Result<(), CliError> {
    let mut rec = Recorder::start("density", ctx.cfg.seed);
    let links_path = ctx.input_or(&ctx.inputs.links, IMPUTED_LINKS, "run `impute` first")?;
    let blocks_path = ctx.input_or(&ctx.inputs.blocks, CORPUS_FILES[4], "pass --blocks")?;
    rec.input(&links_path);
    rec.input(&blocks_path);
    let imputed = read_imputed(&links_path)?;
    let (blocks, parse_errors) = parse_blocks(&blocks_path)?;
    warn_rows("blocks", &parse_errors);
    let opts = DensityOptions { buffer_m: ctx.cfg.buffer_m, arc_segments: ctx.cfg.arc_segments };
    let report = compute_density(&blocks, &imputed.links, opts)?;
    for e in &report.errors {
        eprintln!("warning: block {}: {}", e.geoid, e.message);
    }
    let out = ctx.out_file("density.csv");
    write_density(&out, &report.blocks)?;
    let summary = ctx.out_file("density_report.json");
    json_out(
        &summary,
        &DensityOutput {
            blocks: report.blocks.len(),
            links_skipped: report.links_skipped,
            block_errors: &report.errors,
            parse_errors: &parse_errors,
            buffer_m: opts.buffer_m,
            arc_segments: opts.arc_segments,
        },
    )?;
    rec.output(&out);
    rec.output(&summary);
    rec.finish(&ctx.out)?;
    eprintln!("density: {} blocks, {} with errors", report.blocks.len(), report.errors.len());
    Ok(())
}

pub fn validate(ctx: &Ctx) -> Result<(), CliError> {
    let mut rec = Recorder::start("validate", ctx.cfg.seed);
    let path = ctx.input_or(&ctx.inputs.links, CLEAN_LINKS, "run `clean` first")?;
    rec.input(&path);
    let links = read_clean(&path)?;
    let params = resolve_params(ctx, &mut rec)?;
    let v = &ctx.cfg.validation;

    let mut metrics: Vec<(VehicleClass, &str, MetricsReport)> = Vec::new();
    let mut mape: Vec<(VehicleClass, CountyMapeReport)> = Vec::new();
    let mut cv: Vec<(VehicleClass, CvReport)> = Vec::new();
    let mut groups: Vec<(VehicleClass, Vec<GroupSummary>)> = Vec::new();
    for target in TARGETS {
        let obs = observed_for(&links, target)?;
        let (train, test) = train_test_split(&obs, v.test_frac, ctx.cfg.seed)?;
        let (pred, m) = holdout(&train, &test, target, params.get(target), ctx.cfg.seed)?;
        metrics.push((target, "test", m));
        eprintln!("validate {}: test R² {:.4}, MAE {:.3}", target.as_str(), m.r2, m.mae);

        mape.push((target, county_weighted_mape(&test, &pred, target)?));
        groups.push((target, predictor_summaries(&test, &pred, target)?));

        let truth: Vec<f64> = test.iter().map(|l| l.class_aadt(target).unwrap_or(0.0)).collect();
        let rows = residual_analysis(&truth, &pred, v.lowess_frac)?;
        let ids: Vec<String> = test.iter().map(|l| l.link_id.clone()).collect();
        let res = ctx.out_file(&format!("residuals_{}.csv", target.as_str()));
        write_residuals_csv(csv_out(&res)?, target, &ids, &rows)?;
        rec.output(&res);

        cv.push((target, kfold_cv(&obs, target, params.get(target), v.cv_folds, ctx.cfg.seed)?));
    }

    let files = ["metrics.csv", "county_mape.csv", "predictor_summary.csv", "cv.csv"];
    let p = files.map(|f| ctx.out_file(f));
    write_metrics_csv(csv_out(&p[0])?, &metrics)?;
    write_county_mape_csv(csv_out(&p[1])?, &mape.iter().map(|(t, r)| (*t, r)).collect::<Vec<_>>())?;
    write_predictor_summary_csv(
        csv_out(&p[2])?,
        &groups.iter().map(|(t, g)| (*t, g.as_slice())).collect::<Vec<_>>(),
    )?;
    write_cv_csv(csv_out(&p[3])?, &cv.iter().map(|(t, r)| (*t, r)).collect::<Vec<_>>())?;
    for f in &p {
        rec.output(f);
    }
    rec.finish(&ctx.out)?;
    Ok(())
}

pub fn sensitivity_cmd(ctx: &Ctx, levels: &[f64]) -> Result<(), CliError> {
    let mut rec = Recorder::start("sensitivity", ctx.cfg.seed);
    let path = ctx.input_or(&ctx.inputs.links, CLEAN_LINKS, "run `clean` first")?;
    rec.input(&path);
    let links = read_clean(&path)?;
    let params = resolve_params(ctx, &mut rec)?;
    let opts = SensitivityOptions { test_frac: ctx.cfg.validation.test_frac, seed: ctx.cfg.seed };
    let mut curves: Vec<(VehicleClass, SensitivityCurve)> = Vec::new();
    for target in TARGETS {
        let obs = observed_for(&links, target)?;
        for noise in [NoiseTarget::Predictor, NoiseTarget::Response] {
            let c = sensitivity(&obs, target, params.get(target), levels, noise, opts)?;
            curves.push((target, c));
        }
    }
    let out = ctx.out_file("sensitivity.csv");
    write_sensitivity_csv(csv_out(&out)?, &curves.iter().map(|(t, c)| (*t, c)).collect::<Vec<_>>())?;
    rec.output(&out);
    rec.finish(&ctx.out)?;
    Ok(())
}
