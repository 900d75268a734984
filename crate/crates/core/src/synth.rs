//! Seeded synthetic corpus: road links with known class shares by
//! functional class, county polygons, urban areas and census blocks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{to_wkt, Areal, Coord, Geometry, LineString, Polygon};
use crate::ingest::{fmt_opt, UrbanKind, LINK_COLUMNS};
use crate::model::{CensusBlock, RawLink};
use crate::seed;

/// National daily VKT in millions by functional class 1..=6:
/// `(total, medium-duty, heavy-duty)`.
pub const VKT_BY_CLASS: [(f64, f64, f64); 6] = [
    (4077.0, 156.5, 455.9),
    (1381.0, 48.91, 57.20),
    (2976.0, 123.5, 136.0),
    (2374.0, 44.36, 32.30),
    (1581.0, 24.45, 14.85),
    (77.10, 1.430, 0.518),
];

/// Expected `(mdv, hdv)` share of total AADT for functional class 1..=6.
pub fn class_shares(fc: u8) -> (f64, f64) {
    let (t, m, h) = VKT_BY_CLASS[fc as usize - 1];
    (m / t, h / t)
}

const STATES: [&str; 6] = ["50", "33", "23", "25", "36", "42"];
/// Median total AADT by functional class 1..=7.
const MEDIAN_TOTAL: [f64; 7] = [32_000.0, 21_000.0, 12_000.0, 6_000.0, 2_500.0, 900.0, 300.0];
/// Relative frequency of functional classes 1..=7 among links.
const CLASS_WEIGHTS: [f64; 7] = [0.05, 0.05, 0.14, 0.2, 0.24, 0.17, 0.15];
const COUNTY_SIDE_M: f64 = 20_000.0;
const ORIGIN: (f64, f64) = (500_000.0, 4_500_000.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_links: usize,
    pub n_blocks: usize,
    pub n_states: usize,
    pub counties_per_state: usize,
    /// Probability that each truck class value is withheld on a link.
    pub missing_frac: f64,
    /// Standard deviation of the multiplicative noise on class values.
    pub noise: f64,
    /// Log-scale spread of total AADT within a functional class.
    pub total_sigma: f64,
    /// Share of rows corrupted to exercise the cleaning rules.
    pub dirty_frac: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_links: 1000,
            n_blocks: 100,
            n_states: 2,
            counties_per_state: 4,
            missing_frac: 0.25,
            noise: 0.10,
            total_sigma: 1.0,
            dirty_frac: 0.0,
            seed: 0,
        }
    }
}

/// Complete class values for a link before any are withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub link_id: String,
    pub functional_class: u8,
    pub county_fips: String,
    pub aadt_total: f64,
    pub aadt_mdv: f64,
    pub aadt_hdv: f64,
    /// Expected shares before noise.
    pub mdv_share: f64,
    pub hdv_share: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub links: Vec<RawLink>,
    pub truth: Vec<TruthRow>,
    pub counties: Vec<(String, Areal)>,
    pub urban_areas: Vec<(UrbanKind, Areal)>,
    pub blocks: Vec<CensusBlock>,
}

fn round_to(v: f64, digits: i32) -> f64 {
    let k = 10f64.powi(digits);
    (v * k).round() / k
}

fn county_origin(state: usize, county: usize) -> (f64, f64) {
    (ORIGIN.0 + county as f64 * COUNTY_SIDE_M, ORIGIN.1 + state as f64 * COUNTY_SIDE_M)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.n_states == 0 || cfg.n_states > STATES.len() || cfg.counties_per_state == 0 || cfg.counties_per_state > 400 {
        return Err(Error::InvalidArgument(format!(
            "need 1..={} states and 1..=400 counties per state",
            STATES.len()
        )));
    }
    for (name, v) in [("missing_frac", cfg.missing_frac), ("dirty_frac", cfg.dirty_frac)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} must be in [0, 1]")));
        }
    }
    if !(cfg.noise >= 0.0 && cfg.total_sigma >= 0.0) {
        return Err(Error::InvalidArgument("noise and total_sigma must be non-negative".into()));
    }

    let mut counties = Vec::new();
    let mut mult = Vec::new();
    let mut crng = seed::rng(cfg.seed, "synth-counties", 0);
    for s in 0..cfg.n_states {
        for c in 0..cfg.counties_per_state {
            let fips = format!("{}{:03}", STATES[s], 2 * c + 1);
            let (x, y) = county_origin(s, c);
            counties.push((fips, Areal::Polygon(Polygon::rect(x, y, x + COUNTY_SIDE_M, y + COUNTY_SIDE_M)?)));
            mult.push((crng.random_range(0.7..1.3), crng.random_range(0.7..1.3)));
        }
    }

    // one urban core per state in its first county, a small urban area in the second
    let mut urban_areas = Vec::new();
    for s in 0..cfg.n_states {
        let (x, y) = county_origin(s, 0);
        urban_areas.push((UrbanKind::Urban, Areal::Polygon(Polygon::rect(x + 6e3, y + 6e3, x + 14e3, y + 14e3)?)));
        if cfg.counties_per_state > 1 {
            let (x, y) = county_origin(s, 1);
            urban_areas
                .push((UrbanKind::SmallUrban, Areal::Polygon(Polygon::rect(x + 8e3, y + 8e3, x + 11e3, y + 11e3)?)));
        }
    }
    let urban_code = |p: Coord| -> i64 {
        let mut code = 0;
        for (k, a) in &urban_areas {
            if a.contains(p) {
                code = match k {
                    UrbanKind::Urban => 1,
                    UrbanKind::SmallUrban if code == 0 => 2,
                    UrbanKind::SmallUrban => code,
                };
            }
        }
        code
    };

    let mut rng = seed::rng(cfg.seed, "synth-links", 0);
    let classes: Vec<u8> = (1..=7).collect();
    let total_noise = LogNormal::new(0.0, cfg.total_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut links = Vec::with_capacity(cfg.n_links);
    let mut truth = Vec::with_capacity(cfg.n_links);
    for i in 0..cfg.n_links {
        let ci = rng.random_range(0..counties.len());
        let (s, c) = (ci / cfg.counties_per_state, ci % cfg.counties_per_state);
        let (ox, oy) = county_origin(s, c);
        let fc = *classes.choose_weighted(&mut rng, |k| CLASS_WEIGHTS[*k as usize - 1]).unwrap();

        let a = Coord::new(ox + rng.random_range(1e3..19e3), oy + rng.random_range(1e3..19e3));
        let len = rng.random_range(150.0..2500.0);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let b = Coord::new(
            (a.x + len * theta.cos()).clamp(ox + 10.0, ox + COUNTY_SIDE_M - 10.0),
            (a.y + len * theta.sin()).clamp(oy + 10.0, oy + COUNTY_SIDE_M - 10.0),
        );
        let mid = Coord::new(round_to(0.5 * (a.x + b.x), 2), round_to(0.5 * (a.y + b.y), 2));
        let (a, b) = (Coord::new(round_to(a.x, 2), round_to(a.y, 2)), Coord::new(round_to(b.x, 2), round_to(b.y, 2)));
        let geometry = Geometry::LineString(LineString::new(vec![a, mid, b])?);

        let total = (MEDIAN_TOTAL[fc as usize - 1] * total_noise.sample(&mut rng)).round().max(10.0);
        let lanes = match fc {
            1 => *[4, 6, 8].choose(&mut rng).unwrap(),
            2 => *[4, 6].choose(&mut rng).unwrap(),
            3 => *[2, 4].choose(&mut rng).unwrap(),
            _ => 2,
        };
        let id = format!("{}-{:06}", counties[ci].0, i);
        let mut raw = RawLink {
            line: i + 2,
            link_id: id.clone(),
            state_fips: STATES[s].to_string(),
            county_fips: counties[ci].0.clone(),
            functional_class: Some(fc as i64),
            urban_code: Some(urban_code(mid)),
            through_lanes: Some(lanes),
            length_km: None,
            aadt_total: Some(total),
            aadt_mdv: None,
            aadt_hdv: None,
            geometry_wkt: to_wkt(&geometry),
        };
        if fc <= 6 {
            let (ms, hs) = class_shares(fc);
            let (ms, hs) = (ms * mult[ci].0, hs * mult[ci].1);
            let mut noisy = |share: f64| {
                let z: f64 = StandardNormal.sample(&mut rng);
                round_to((total * share * (1.0 + cfg.noise * z)).max(0.0), 2)
            };
            let (mut m, mut h) = (noisy(ms), noisy(hs));
            if m + h > total {
                let k = total / (m + h);
                m = round_to(m * k, 2).min(total);
                h = (total - m).max(0.0);
            }
            truth.push(TruthRow {
                link_id: id,
                functional_class: fc,
                county_fips: counties[ci].0.clone(),
                aadt_total: total,
                aadt_mdv: m,
                aadt_hdv: h,
                mdv_share: ms,
                hdv_share: hs,
            });
            raw.aadt_mdv = (rng.random::<f64>() >= cfg.missing_frac).then_some(m);
            raw.aadt_hdv = (rng.random::<f64>() >= cfg.missing_frac).then_some(h);
        }
        if rng.random::<f64>() < cfg.dirty_frac {
            match rng.random_range(0..3) {
                0 => raw.aadt_total = None,
                1 => {
                    raw.aadt_mdv = Some(total);
                    raw.aadt_hdv = Some(1.0);
                }
                _ => raw.through_lanes = None,
            }
        }
        links.push(raw);
    }

    let mut brng = seed::rng(cfg.seed, "synth-blocks", 0);
    let (w, h) = (cfg.counties_per_state as f64 * COUNTY_SIDE_M, cfg.n_states as f64 * COUNTY_SIDE_M);
    let mut blocks = Vec::with_capacity(cfg.n_blocks);
    for i in 0..cfg.n_blocks {
        let side = brng.random_range(200.0..1500.0);
        let x = round_to(ORIGIN.0 + brng.random_range(0.0..w - side), 2);
        let y = round_to(ORIGIN.1 + brng.random_range(0.0..h - side), 2);
        let ci = (((y - ORIGIN.1) / COUNTY_SIDE_M) as usize).min(cfg.n_states - 1) * cfg.counties_per_state
            + (((x - ORIGIN.0) / COUNTY_SIDE_M) as usize).min(cfg.counties_per_state - 1);
        let geoid = format!("{}{:06}{:04}", counties[ci].0, i / 100, i % 100);
        blocks.push(CensusBlock::new(geoid, Areal::Polygon(Polygon::rect(x, y, x + side, y + side)?), None)?);
    }
    Ok(SynthCorpus { links, truth, counties, urban_areas, blocks })
}

fn raw_row(l: &RawLink) -> Vec<String> {
    let int = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
    vec![
        l.link_id.clone(),
        l.state_fips.clone(),
        l.county_fips.clone(),
        int(l.functional_class),
        int(l.urban_code),
        int(l.through_lanes),
        fmt_opt(l.length_km),
        fmt_opt(l.aadt_total),
        fmt_opt(l.aadt_mdv),
        fmt_opt(l.aadt_hdv),
        l.geometry_wkt.clone(),
    ]
}

pub fn write_raw_links<W: Write>(out: W, links: &[RawLink]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LINK_COLUMNS)?;
    for l in links {
        w.write_record(raw_row(l))?;
    }
    w.flush()?;
    Ok(())
}

fn write_layer<W: Write>(out: W, key: &str, rows: &[(String, &Areal, Option<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_area = rows.iter().any(|r| r.2.is_some());
    let mut header = vec![key, "wkt"];
    if with_area {
        header.push("area_km2");
    }
    w.write_record(&header)?;
    for (k, a, area) in rows {
        let g: Geometry = match a {
            Areal::Polygon(p) => Geometry::Polygon(p.clone()),
            Areal::MultiPolygon(ps) => Geometry::MultiPolygon(ps.clone()),
        };
        let mut r = vec![k.clone(), to_wkt(&g)];
        if with_area {
            r.push(fmt_opt(*area));
        }
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// File names written by [`write_corpus`].
pub const CORPUS_FILES: [&str; 5] = ["links.csv", "truth.csv", "counties.csv", "urban_areas.csv", "blocks.csv"];

pub fn write_corpus(dir: &Path, corpus: &SynthCorpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
    write_raw_links(open(CORPUS_FILES[0])?, &corpus.links)?;

    let mut w = csv::Writer::from_writer(open(CORPUS_FILES[1])?);
    for t in &corpus.truth {
        w.serialize(t)?;
    }
    w.flush()?;

    let counties: Vec<(String, &Areal, Option<f64>)> = corpus.counties.iter().map(|(k, a)| (k.clone(), a, None)).collect();
    write_layer(open(CORPUS_FILES[2])?, "county_fips", &counties)?;
    let urban: Vec<(String, &Areal, Option<f64>)> =
        corpus.urban_areas.iter().map(|(k, a)| (k.as_str().to_string(), a, None)).collect();
    write_layer(open(CORPUS_FILES[3])?, "kind", &urban)?;
    let blocks: Vec<(String, &Areal, Option<f64>)> =
        corpus.blocks.iter().map(|b| (b.geoid.clone(), &b.geometry, Some(b.area_km2))).collect();
    write_layer(open(CORPUS_FILES[4])?, "geoid", &blocks)?;
    Ok(())
}
