//! Reading road-link and census-block files, cleaning rules, and spatial
//! attribution of counties and urban codes.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, clipped_length_km, Areal, SpatialIndex};
use crate::model::{validate_link, CensusBlock, RawLink, RoadLink, UrbanCode};

pub const LINK_COLUMNS: [&str; 11] = [
    "link_id",
    "state_fips",
    "county_fips",
    "functional_class",
    "urban_code",
    "through_lanes",
    "length_km",
    "aadt_total",
    "aadt_mdv",
    "aadt_hdv",
    "geometry_wkt",
];

/// Lane count assumed when a link has none.
pub const DEFAULT_LANES: i64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub column: Option<String>,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.column {
            Some(c) => write!(f, "line {}: column `{}`: {}", self.line, c, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

fn parse_opt<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    col: &str,
    line: usize,
) -> std::result::Result<Option<T>, RowError> {
    let cell = rec.get(idx).unwrap_or("").trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<T>().map(Some).map_err(|_| RowError {
        line,
        column: Some(col.to_string()),
        message: format!("cannot parse `{cell}`"),
    })
}

/// Integer cells written as reals ("2.0") are accepted.
fn parse_int(
    rec: &csv::StringRecord,
    idx: usize,
    col: &str,
    line: usize,
) -> std::result::Result<Option<i64>, RowError> {
    match parse_opt::<i64>(rec, idx, col, line) {
        Ok(v) => Ok(v),
        Err(e) => match parse_opt::<f64>(rec, idx, col, line) {
            Ok(Some(f)) if f.fract() == 0.0 && f.abs() < 9e15 => Ok(Some(f as i64)),
            _ => Err(e),
        },
    }
}

pub(crate) fn column_index(
    headers: &csv::StringRecord,
    path: &Path,
    names: &[&str],
) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            headers.iter().position(|h| h.trim() == *name).ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
        })
        .collect()
}

/// Reads link candidates from CSV text. Rows with unparseable cells are
/// reported with their line number, never silently skipped.
pub fn parse_links_from<R: Read>(reader: R, path: &Path) -> Result<(Vec<RawLink>, Vec<RowError>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = column_index(&headers, path, &LINK_COLUMNS)?;
    let mut links = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                errors.push(RowError { line, column: None, message: e.to_string() });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let text = |k: usize| rec.get(idx[k]).unwrap_or("").trim().to_string();
        let parsed = (|| -> std::result::Result<RawLink, RowError> {
            Ok(RawLink {
                line,
                link_id: text(0),
                state_fips: text(1),
                county_fips: text(2),
                functional_class: parse_int(&rec, idx[3], LINK_COLUMNS[3], line)?,
                urban_code: parse_int(&rec, idx[4], LINK_COLUMNS[4], line)?,
                through_lanes: parse_int(&rec, idx[5], LINK_COLUMNS[5], line)?,
                length_km: parse_opt(&rec, idx[6], LINK_COLUMNS[6], line)?,
                aadt_total: parse_opt(&rec, idx[7], LINK_COLUMNS[7], line)?,
                aadt_mdv: parse_opt(&rec, idx[8], LINK_COLUMNS[8], line)?,
                aadt_hdv: parse_opt(&rec, idx[9], LINK_COLUMNS[9], line)?,
                geometry_wkt: rec.get(idx[10]).unwrap_or("").to_string(),
            })
        })();
        match parsed {
            Ok(l) => links.push(l),
            Err(e) => errors.push(e),
        }
    }
    Ok((links, errors))
}

pub fn parse_links(path: &Path) -> Result<(Vec<RawLink>, Vec<RowError>)> {
    parse_links_from(BufReader::new(File::open(path)?), path)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub dropped_missing_total_aadt: usize,
    pub dropped_class_exceeds_total: usize,
    pub dropped_invalid_geometry: usize,
    pub dropped_invalid_attributes: usize,
    pub lanes_defaulted: usize,
    pub lengths_recomputed: usize,
    pub urban_code_changed: usize,
    pub county_reassigned: usize,
    pub county_unmatched: usize,
    /// Lane-km of dropped rows (lanes default to 2 where missing).
    pub dropped_lane_km: f64,
    /// Share of rows dropped.
    pub dropped_share: f64,
    /// Share of lane-km dropped.
    pub dropped_lane_km_share: f64,
}

impl CleaningReport {
    pub fn dropped(&self) -> usize {
        self.dropped_missing_total_aadt
            + self.dropped_class_exceeds_total
            + self.dropped_invalid_geometry
            + self.dropped_invalid_attributes
    }

    pub fn reconciles(&self) -> bool {
        self.rows_kept + self.dropped() == self.rows_read
    }
}

/// Applies the exclusion rules: links without total AADT, with class AADT
/// above the total, or with invalid geometry or attributes are dropped;
/// missing lane counts default to two.
pub fn clean_links(candidates: &[RawLink]) -> (Vec<RoadLink>, CleaningReport) {
    let mut report = CleaningReport { rows_read: candidates.len(), ..Default::default() };
    let mut kept = Vec::with_capacity(candidates.len());
    let mut total_lane_km = 0.0;

    for raw in candidates {
        let geom = geo::parse_wkt(&raw.geometry_wkt).and_then(|g| g.into_line_string()).ok();
        let len_km = geom
            .as_ref()
            .map(geo::line_length_km)
            .or(raw.length_km)
            .unwrap_or(0.0);
        let lane_km = raw.through_lanes.filter(|&n| n >= 1).unwrap_or(DEFAULT_LANES) as f64 * len_km;
        total_lane_km += lane_km;

        let reject = |report: &mut CleaningReport, counter: fn(&mut CleaningReport) -> &mut usize| {
            *counter(report) += 1;
            report.dropped_lane_km += lane_km;
        };
        let Some(total) = raw.aadt_total else {
            reject(&mut report, |r| &mut r.dropped_missing_total_aadt);
            continue;
        };
        if geom.is_none() {
            reject(&mut report, |r| &mut r.dropped_invalid_geometry);
            continue;
        }
        if raw.aadt_mdv.unwrap_or(0.0) + raw.aadt_hdv.unwrap_or(0.0) > total {
            reject(&mut report, |r| &mut r.dropped_class_exceeds_total);
            continue;
        }
        let mut fixed = raw.clone();
        if fixed.through_lanes.is_none() {
            fixed.through_lanes = Some(DEFAULT_LANES);
            report.lanes_defaulted += 1;
        }
        match validate_link(&fixed) {
            Ok(link) => {
                if fixed.length_km != Some(link.length_km) {
                    report.lengths_recomputed += 1;
                }
                kept.push(link);
            }
            Err(_) => reject(&mut report, |r| &mut r.dropped_invalid_attributes),
        }
    }
    report.rows_kept = kept.len();
    if report.rows_read > 0 {
        report.dropped_share = report.dropped() as f64 / report.rows_read as f64;
    }
    if total_lane_km > 0.0 {
        report.dropped_lane_km_share = report.dropped_lane_km / total_lane_km;
    }
    (kept, report)
}

fn link_index(layer: &[(String, Areal)]) -> SpatialIndex {
    SpatialIndex::build(layer.iter().enumerate().map(|(i, (_, a))| (i, a.bbox())).collect())
}

/// Clipped length of `link` per polygon key, keys ascending.
fn lengths_by_key(link: &RoadLink, layer: &[(String, Areal)], index: &SpatialIndex) -> BTreeMap<String, f64> {
    let mut by_key: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for i in index.query(&link.geometry.bbox()) {
        let (key, area) = &layer[i];
        let len = clipped_length_km(&link.geometry, area);
        if len > 0.0 {
            by_key.entry(key.clone()).or_default().push(len);
        }
    }
    by_key
        .into_iter()
        .map(|(k, mut v)| {
            // summation order must not depend on the input order of polygons
            v.sort_by(f64::total_cmp);
            (k, v.into_iter().sum())
        })
        .collect()
}

/// Largest value wins; ties go to the smallest key.
fn plurality(lengths: &BTreeMap<String, f64>) -> Option<&str> {
    let mut best: Option<(&str, f64)> = None;
    for (k, &v) in lengths {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CountyAssignment {
    pub reassigned: usize,
    /// Links intersecting no county; they keep their original code and are
    /// left out of county-level reporting.
    pub unmatched: Vec<String>,
}

/// Sets each link's county to the county holding the largest share of its
/// length.
pub fn assign_counties(links: &mut [RoadLink], counties: &[(String, Areal)]) -> CountyAssignment {
    let index = link_index(counties);
    let outcome: Vec<Option<String>> = links
        .par_iter()
        .map(|l| plurality(&lengths_by_key(l, counties, &index)).map(str::to_string))
        .collect();
    let mut result = CountyAssignment::default();
    for (link, fips) in links.iter_mut().zip(outcome) {
        match fips {
            Some(f) => {
                if link.county_fips != f {
                    result.reassigned += 1;
                    link.county_fips = f;
                }
            }
            None => result.unmatched.push(link.link_id.clone()),
        }
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrbanKind {
    Urban,
    SmallUrban,
}

impl std::str::FromStr for UrbanKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "urban" | "1" => Ok(UrbanKind::Urban),
            "small_urban" | "2" => Ok(UrbanKind::SmallUrban),
            _ => Err(Error::InvalidArgument(format!("unknown urban area kind `{s}`"))),
        }
    }
}

impl UrbanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UrbanKind::Urban => "urban",
            UrbanKind::SmallUrban => "small_urban",
        }
    }
}

/// Recodes each link as urban, small urban or rural according to which
/// category holds the largest share of its length (uncovered length is
/// rural). Returns the number of links whose code changed.
pub fn reclassify_urban(links: &mut [RoadLink], areas: &[(UrbanKind, Areal)]) -> usize {
    let layer: Vec<(String, Areal)> = areas.iter().map(|(k, a)| (k.as_str().to_string(), a.clone())).collect();
    let index = link_index(&layer);
    let codes: Vec<UrbanCode> = links
        .par_iter()
        .map(|l| {
            let mut lengths = lengths_by_key(l, &layer, &index);
            let covered: f64 = lengths.values().sum();
            lengths.insert("rural".to_string(), (l.length_km - covered).max(0.0));
            match plurality(&lengths) {
                Some("urban") => UrbanCode::Urban,
                Some("small_urban") => UrbanCode::SmallUrban,
                _ => UrbanCode::Rural,
            }
        })
        .collect();
    let mut changed = 0;
    for (l, c) in links.iter_mut().zip(codes) {
        if l.urban_code != c {
            l.urban_code = c;
            changed += 1;
        }
    }
    changed
}

/// One keyed WKT record from an NDJSON or CSV polygon layer.
#[derive(Debug, Clone)]
pub struct WktRecord {
    pub line: usize,
    pub key: String,
    pub wkt: String,
    pub area_km2: Option<f64>,
}

fn is_ndjson(path: &Path, first: Option<&str>) -> bool {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    matches!(ext.as_str(), "ndjson" | "jsonl" | "json")
        || first.is_some_and(|l| l.trim_start().starts_with('{'))
}

#[derive(Deserialize)]
struct NdRecord {
    #[serde(flatten)]
    fields: BTreeMap<String, serde_json::Value>,
}

/// Reads `{key, wkt, area_km2?}` records. `keys` lists accepted names for
/// the key field, first match wins.
pub fn read_wkt_records(path: &Path, keys: &[&str]) -> Result<(Vec<WktRecord>, Vec<RowError>)> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    let mut errors = Vec::new();
    if is_ndjson(path, first) {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let rec: NdRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(RowError { line: line_no, column: None, message: e.to_string() });
                    continue;
                }
            };
            let key = keys.iter().find_map(|k| rec.fields.get(*k)).map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            });
            let wkt = rec.fields.get("wkt").and_then(|v| v.as_str()).map(str::to_string);
            let area = rec.fields.get("area_km2").and_then(|v| v.as_f64());
            match (key, wkt) {
                (Some(key), Some(wkt)) => out.push(WktRecord { line: line_no, key, wkt, area_km2: area }),
                (None, _) => errors.push(RowError {
                    line: line_no,
                    column: Some(keys[0].to_string()),
                    message: "missing key field".into(),
                }),
                (_, None) => errors.push(RowError {
                    line: line_no,
                    column: Some("wkt".into()),
                    message: "missing wkt".into(),
                }),
            }
        }
    } else {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let key_idx = keys
            .iter()
            .find_map(|k| headers.iter().position(|h| h.trim() == *k))
            .ok_or_else(|| Error::MissingColumn { path: path.to_path_buf(), column: keys[0].to_string() })?;
        let wkt_idx = column_index(&headers, path, &["wkt"])?[0];
        let area_idx = headers.iter().position(|h| h.trim() == "area_km2");
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let area = match area_idx {
                Some(ai) => match parse_opt::<f64>(&rec, ai, "area_km2", line) {
                    Ok(a) => a,
                    Err(e) => {
                        errors.push(e);
                        continue;
                    }
                },
                None => None,
            };
            out.push(WktRecord {
                line,
                key: rec.get(key_idx).unwrap_or("").trim().to_string(),
                wkt: rec.get(wkt_idx).unwrap_or("").to_string(),
                area_km2: area,
            });
        }
    }
    Ok((out, errors))
}

/// Census blocks from NDJSON (`{"geoid", "wkt", "area_km2"?}`) or CSV with
/// the same columns. A repeated geoid is fatal.
pub fn parse_blocks(path: &Path) -> Result<(Vec<CensusBlock>, Vec<RowError>)> {
    let (records, mut errors) = read_wkt_records(path, &["geoid"])?;
    let mut seen = HashSet::new();
    let mut blocks = Vec::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.key.clone()) {
            return Err(Error::DuplicateGeoid { path: path.to_path_buf(), geoid: r.key });
        }
        let block = geo::parse_wkt(&r.wkt)
            .and_then(|g| g.into_areal())
            .and_then(|a| CensusBlock::new(r.key.clone(), a, r.area_km2));
        match block {
            Ok(b) => blocks.push(b),
            Err(e) => errors.push(RowError { line: r.line, column: Some("wkt".into()), message: e.to_string() }),
        }
    }
    Ok((blocks, errors))
}

/// Keyed polygons (counties by `fips`, urban areas by `kind`).
pub fn parse_polygon_layer(path: &Path, keys: &[&str]) -> Result<(Vec<(String, Areal)>, Vec<RowError>)> {
    let (records, mut errors) = read_wkt_records(path, keys)?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        match geo::parse_wkt(&r.wkt).and_then(|g| g.into_areal()) {
            Ok(a) => out.push((r.key, a)),
            Err(e) => errors.push(RowError { line: r.line, column: Some("wkt".into()), message: e.to_string() }),
        }
    }
    Ok((out, errors))
}

pub fn parse_urban_areas(path: &Path) -> Result<(Vec<(UrbanKind, Areal)>, Vec<RowError>)> {
    let (layer, mut errors) = parse_polygon_layer(path, &["kind"])?;
    let mut out = Vec::with_capacity(layer.len());
    for (k, a) in layer {
        match k.parse::<UrbanKind>() {
            Ok(kind) => out.push((kind, a)),
            Err(e) => errors.push(RowError { line: 0, column: Some("kind".into()), message: e.to_string() }),
        }
    }
    Ok((out, errors))
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn link_row(l: &RoadLink) -> Vec<String> {
    let raw = l.to_raw();
    vec![
        raw.link_id,
        raw.state_fips,
        raw.county_fips,
        l.functional_class.code().to_string(),
        l.urban_code.code().to_string(),
        l.through_lanes.to_string(),
        l.length_km.to_string(),
        l.aadt_total.to_string(),
        fmt_opt(raw.aadt_mdv),
        fmt_opt(raw.aadt_hdv),
        raw.geometry_wkt,
    ]
}

/// Writes links in the input schema (observed class values only).
pub fn write_links_to<W: Write>(out: W, links: &[RoadLink]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LINK_COLUMNS)?;
    for l in links {
        w.write_record(link_row(l))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_links(path: &Path, links: &[RoadLink]) -> Result<()> {
    write_links_to(std::io::BufWriter::new(File::create(path)?), links)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::parse_wkt;
    use proptest::prelude::*;

    const HEADER: &str = "link_id,state_fips,county_fips,functional_class,urban_code,through_lanes,length_km,aadt_total,aadt_mdv,aadt_hdv,geometry_wkt\n";

    fn parse(body: &str) -> (Vec<RawLink>, Vec<RowError>) {
        parse_links_from(format!("{HEADER}{body}").as_bytes(), Path::new("t.csv")).unwrap()
    }

    fn area(wkt: &str) -> Areal {
        parse_wkt(wkt).unwrap().into_areal().unwrap()
    }

    #[test]
    fn three_valid_rows() {
        let (links, errs) = parse(
            "a,50,50007,1,1,2,0.005,1000,40,60,\"LINESTRING(0 0,3 4)\"\n\
             b,50,50007,3,0,,,500,,,\"LINESTRING(0 0,10 0)\"\n\
             c,50,50001,5,2,4,0.01,200,1,1,\"LINESTRING(0 0,0 10)\"\n",
        );
        assert_eq!(links.len(), 3);
        assert!(errs.is_empty());
        assert_eq!(links[1].through_lanes, None);
        assert_eq!(links[0].line, 2);
    }

    #[test]
    fn bad_cell_is_reported() {
        let (links, errs) = parse("a,50,50007,1,1,2,0.005,lots,40,60,\"LINESTRING(0 0,3 4)\"\n");
        assert!(links.is_empty());
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].column.as_deref(), Some("aadt_total"));
        assert_eq!(errs[0].line, 2);
    }

    #[test]
    fn header_only_and_missing_column() {
        let (links, errs) = parse("");
        assert!(links.is_empty() && errs.is_empty());
        let err = parse_links_from("link_id,state_fips\n".as_bytes(), Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "county_fips"));
    }

    fn raw(id: &str, total: Option<f64>, mdv: Option<f64>, hdv: Option<f64>) -> RawLink {
        RawLink {
            line: 2,
            link_id: id.into(),
            state_fips: "50".into(),
            county_fips: "50007".into(),
            functional_class: Some(3),
            urban_code: Some(0),
            through_lanes: Some(2),
            length_km: Some(1.0),
            aadt_total: total,
            aadt_mdv: mdv,
            aadt_hdv: hdv,
            geometry_wkt: "LINESTRING(0 0,1000 0)".into(),
        }
    }

    #[test]
    fn cleaning_rules() {
        let mut no_lanes = raw("lanes", Some(100.0), None, None);
        no_lanes.through_lanes = None;
        let mut bad_geom = raw("geom", Some(100.0), None, None);
        bad_geom.geometry_wkt = "LINESTRING(0 0,0 0)".into();
        let mut bad_uc = raw("uc", Some(100.0), None, None);
        bad_uc.urban_code = Some(7);
        let input = vec![
            raw("exceeds", Some(100.0), Some(80.0), Some(30.0)),
            no_lanes,
            raw("ok", Some(1000.0), Some(10.0), Some(20.0)),
            raw("missing", None, Some(1.0), Some(1.0)),
            raw("zero", Some(0.0), None, None),
            bad_geom,
            bad_uc,
        ];
        let (kept, rep) = clean_links(&input);
        let ids: Vec<&str> = kept.iter().map(|l| l.link_id.as_str()).collect();
        assert_eq!(ids, ["lanes", "ok", "zero"]);
        assert_eq!(kept[0].through_lanes, 2);
        assert_eq!(rep.lanes_defaulted, 1);
        assert_eq!(rep.dropped_class_exceeds_total, 1);
        assert_eq!(rep.dropped_missing_total_aadt, 1);
        assert_eq!(rep.dropped_invalid_geometry, 1);
        assert_eq!(rep.dropped_invalid_attributes, 1);
        assert!(rep.reconciles());
        assert!((rep.dropped_lane_km - 2.0 * 4.0).abs() < 1e-12);
        // the fully valid row is unchanged
        assert_eq!(kept[1].to_raw(), RawLink { line: 0, ..input[2].clone() });
    }

    #[test]
    fn written_rows_match_canonical_input() {
        let body = "a,50,50007,1,1,2,0.005,1000,40,60,\"LINESTRING(0 0,3 4)\"\n";
        let (cands, _) = parse(body);
        let (kept, _) = clean_links(&cands);
        let mut buf = Vec::new();
        write_links_to(&mut buf, &kept).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{HEADER}{body}"));
    }

    fn link(id: &str, wkt: &str) -> RoadLink {
        let mut r = raw(id, Some(100.0), None, None);
        r.geometry_wkt = wkt.into();
        r.length_km = None;
        validate_link(&r).unwrap()
    }

    #[test]
    fn county_majority() {
        let counties = vec![
            ("50001".to_string(), area("POLYGON((0 0,700 0,700 100,0 100,0 0))")),
            ("50003".to_string(), area("POLYGON((700 0,2000 0,2000 100,700 100,700 0))")),
        ];
        let mut links = vec![
            link("in_a", "LINESTRING(10 50,600 50)"),
            link("split", "LINESTRING(0 50,1000 50)"),
            link("mostly_b", "LINESTRING(600 50,1000 50)"),
            link("outside", "LINESTRING(0 500,100 500)"),
        ];
        // clip-length oracle: 700 m in A, 300 m in B
        let a_len = clipped_length_km(&links[1].geometry, &counties[0].1);
        let b_len = clipped_length_km(&links[1].geometry, &counties[1].1);
        assert!((a_len - 0.7).abs() < 1e-12 && (b_len - 0.3).abs() < 1e-12);

        let res = assign_counties(&mut links, &counties);
        assert_eq!(links[0].county_fips, "50001");
        assert_eq!(links[1].county_fips, "50001");
        assert_eq!(links[2].county_fips, "50003");
        assert_eq!(links[3].county_fips, "50007");
        assert_eq!(res.unmatched, vec!["outside".to_string()]);
    }

    #[test]
    fn urban_codes() {
        let areas = vec![
            (UrbanKind::Urban, area("POLYGON((0 0,1000 0,1000 1000,0 1000,0 0))")),
            (UrbanKind::SmallUrban, area("POLYGON((2000 0,2600 0,2600 1000,2000 1000,2000 0))")),
        ];
        let mut links = vec![
            link("urban", "LINESTRING(100 100,900 900)"),
            link("rural", "LINESTRING(5000 0,6000 0)"),
            link("small", "LINESTRING(2000 500,3000 500)"),
        ];
        let changed = reclassify_urban(&mut links, &areas);
        assert_eq!(links[0].urban_code, UrbanCode::Urban);
        assert_eq!(links[1].urban_code, UrbanCode::Rural);
        assert_eq!(links[2].urban_code, UrbanCode::SmallUrban);
        assert_eq!(changed, 2);
    }

    #[test]
    fn equal_split_goes_to_smallest_fips() {
        let counties = vec![
            ("50009".to_string(), area("POLYGON((500 0,1000 0,1000 100,500 100,500 0))")),
            ("50003".to_string(), area("POLYGON((0 0,500 0,500 100,0 100,0 0))")),
        ];
        let mut links = vec![link("tie", "LINESTRING(0 50,1000 50)")];
        assign_counties(&mut links, &counties);
        assert_eq!(links[0].county_fips, "50003");
    }

    #[test]
    fn block_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("blocks.ndjson");
        std::fs::write(
            &p,
            "{\"geoid\":\"500070001001000\",\"wkt\":\"POLYGON((0 0,1000 0,1000 1000,0 1000,0 0))\"}\n\
             {\"geoid\":\"500070001001001\",\"wkt\":\"MULTIPOLYGON(((0 0,1 0,1 1,0 1,0 0)),((5 5,6 5,6 6,5 6,5 5)))\",\"area_km2\":0.5}\n\
             {\"geoid\":\"500070001001002\",\"wkt\":\"POLYGON((0 0,1 0,2 0,0 0))\"}\n",
        )
        .unwrap();
        let (blocks, errs) = parse_blocks(&p).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].area_km2, 1.0);
        assert_eq!(blocks[1].area_km2, 0.5);
        assert_eq!(blocks[1].geometry.parts().len(), 2);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 3);

        let dup = dir.path().join("dup.csv");
        std::fs::write(
            &dup,
            "geoid,wkt\nX,\"POLYGON((0 0,1 0,1 1,0 0))\"\nX,\"POLYGON((0 0,1 0,1 1,0 0))\"\n",
        )
        .unwrap();
        match parse_blocks(&dup) {
            Err(Error::DuplicateGeoid { geoid, .. }) => assert_eq!(geoid, "X"),
            other => panic!("{other:?}"),
        }
    }

    fn arb_raw() -> impl Strategy<Value = RawLink> {
        (
            prop::option::of(0.0f64..5000.0),
            prop::option::of(0.0f64..3000.0),
            prop::option::of(0.0f64..3000.0),
            prop::option::of(0i64..4),
            prop::option::of(0i64..9),
            0i64..4,
            prop::bool::ANY,
        )
            .prop_map(|(total, mdv, hdv, lanes, fc, uc, good_geom)| RawLink {
                line: 0,
                link_id: "x".into(),
                state_fips: "50".into(),
                county_fips: "50007".into(),
                functional_class: fc,
                urban_code: Some(uc),
                through_lanes: lanes,
                length_km: None,
                aadt_total: total,
                aadt_mdv: mdv,
                aadt_hdv: hdv,
                geometry_wkt: if good_geom { "LINESTRING(0 0,30 40)".into() } else { "LINESTRING(1 1,1 1)".into() },
            })
    }

    proptest! {
        #[test]
        fn accounting_is_exact_and_cleaning_idempotent(rows in prop::collection::vec(arb_raw(), 0..60)) {
            let (kept, rep) = clean_links(&rows);
            prop_assert!(rep.reconciles());
            let again: Vec<RawLink> = kept.iter().map(RoadLink::to_raw).collect();
            let (kept2, rep2) = clean_links(&again);
            prop_assert_eq!(&kept2, &kept);
            prop_assert_eq!(rep2.dropped(), 0);
            prop_assert_eq!(rep2.lanes_defaulted, 0);
        }

        #[test]
        fn county_assignment_is_order_independent(shift in 0usize..3, x0 in -200.0f64..1200.0, x1 in -200.0f64..1200.0) {
            let mut counties = vec![
                ("50001".to_string(), area("POLYGON((0 0,400 0,400 100,0 100,0 0))")),
                ("50003".to_string(), area("POLYGON((400 0,800 0,800 100,400 100,400 0))")),
                ("50005".to_string(), area("POLYGON((800 0,1000 0,1000 100,800 100,800 0))")),
            ];
            let Ok(l) = validate_link(&RawLink { geometry_wkt: format!("LINESTRING({x0} 50,{x1} 50)"), ..raw("p", Some(1.0), None, None) }) else { return Ok(()) };
            let mut a = vec![l.clone()];
            assign_counties(&mut a, &counties);
            counties.rotate_left(shift);
            counties.reverse();
            let mut b = vec![l];
            assign_counties(&mut b, &counties);
            prop_assert_eq!(&a[0].county_fips, &b[0].county_fips);
        }
    }
}
