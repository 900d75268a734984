//! Shared domain types: road links, census blocks, hyperparameters and
//! metric bundles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, Areal, LineString};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VehicleClass {
    Ldv,
    Mdv,
    Hdv,
    Total,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 4] =
        [VehicleClass::Total, VehicleClass::Ldv, VehicleClass::Mdv, VehicleClass::Hdv];

    pub fn is_prediction_target(self) -> bool {
        matches!(self, VehicleClass::Mdv | VehicleClass::Hdv)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Ldv => "ldv",
            VehicleClass::Mdv => "mdv",
            VehicleClass::Hdv => "hdv",
            VehicleClass::Total => "total",
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ldv" => Ok(VehicleClass::Ldv),
            "mdv" => Ok(VehicleClass::Mdv),
            "hdv" => Ok(VehicleClass::Hdv),
            "total" => Ok(VehicleClass::Total),
            _ => Err(Error::InvalidArgument(format!("unknown vehicle class `{s}`"))),
        }
    }
}

/// FHWA functional classification code, 1 (Interstate) to 7 (local).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FunctionalClass(u8);

impl FunctionalClass {
    pub fn new(code: i64) -> Option<Self> {
        (1..=7).contains(&code).then_some(FunctionalClass(code as u8))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    /// Codes 1-6 carry traffic counts; 7 is accepted but never modeled.
    pub fn is_modelable(self) -> bool {
        self.0 <= 6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UrbanCode {
    Rural = 0,
    Urban = 1,
    SmallUrban = 2,
}

impl UrbanCode {
    pub fn new(code: i64) -> Option<Self> {
        match code {
            0 => Some(UrbanCode::Rural),
            1 => Some(UrbanCode::Urban),
            2 => Some(UrbanCode::SmallUrban),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Observed,
    Predicted,
    Derived,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::Predicted => "predicted",
            Provenance::Derived => "derived",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observed" => Ok(Provenance::Observed),
            "predicted" => Ok(Provenance::Predicted),
            "derived" => Ok(Provenance::Derived),
            _ => Err(Error::InvalidArgument(format!("unknown provenance `{s}`"))),
        }
    }
}

/// A class volume in vehicles/day with where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAadt {
    pub value: f64,
    pub provenance: Provenance,
}

impl ClassAadt {
    pub fn observed(value: f64) -> Self {
        ClassAadt { value, provenance: Provenance::Observed }
    }
}

/// Row of the links file as typed, but not yet validated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawLink {
    /// 1-based line number in the source file, for diagnostics.
    pub line: usize,
    pub link_id: String,
    pub state_fips: String,
    pub county_fips: String,
    pub functional_class: Option<i64>,
    pub urban_code: Option<i64>,
    pub through_lanes: Option<i64>,
    pub length_km: Option<f64>,
    pub aadt_total: Option<f64>,
    pub aadt_mdv: Option<f64>,
    pub aadt_hdv: Option<f64>,
    pub geometry_wkt: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadLink {
    pub link_id: String,
    pub state_fips: String,
    pub county_fips: String,
    pub functional_class: FunctionalClass,
    pub urban_code: UrbanCode,
    pub through_lanes: u32,
    pub geometry: LineString,
    pub length_km: f64,
    pub aadt_total: f64,
    pub aadt_mdv: Option<ClassAadt>,
    pub aadt_hdv: Option<ClassAadt>,
    pub aadt_ldv: Option<ClassAadt>,
}

impl RoadLink {
    pub fn class_aadt(&self, class: VehicleClass) -> Option<f64> {
        match class {
            VehicleClass::Total => Some(self.aadt_total),
            VehicleClass::Mdv => self.aadt_mdv.map(|c| c.value),
            VehicleClass::Hdv => self.aadt_hdv.map(|c| c.value),
            VehicleClass::Ldv => self.aadt_ldv.map(|c| c.value),
        }
    }

    pub fn class_slot(&mut self, class: VehicleClass) -> &mut Option<ClassAadt> {
        match class {
            VehicleClass::Mdv => &mut self.aadt_mdv,
            VehicleClass::Hdv => &mut self.aadt_hdv,
            VehicleClass::Ldv => &mut self.aadt_ldv,
            VehicleClass::Total => panic!("total AADT is not an optional class slot"),
        }
    }

    /// Daily vehicle-km for a class over the whole link.
    pub fn vkt(&self, class: VehicleClass) -> Option<f64> {
        self.class_aadt(class).map(|a| a * self.length_km)
    }

    pub fn to_raw(&self) -> RawLink {
        let obs = |c: Option<ClassAadt>| c.filter(|c| c.provenance == Provenance::Observed).map(|c| c.value);
        RawLink {
            line: 0,
            link_id: self.link_id.clone(),
            state_fips: self.state_fips.clone(),
            county_fips: self.county_fips.clone(),
            functional_class: Some(self.functional_class.code() as i64),
            urban_code: Some(self.urban_code.code() as i64),
            through_lanes: Some(self.through_lanes as i64),
            length_km: Some(self.length_km),
            aadt_total: Some(self.aadt_total),
            aadt_mdv: obs(self.aadt_mdv),
            aadt_hdv: obs(self.aadt_hdv),
            geometry_wkt: geo::to_wkt(&self.geometry.clone().into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn is_digits(s: &str, n: usize) -> bool {
    s.len() == n && s.bytes().all(|b| b.is_ascii_digit())
}

/// Relative tolerance for a supplied length to be kept as-is.
pub const LENGTH_REL_TOL: f64 = 1e-9;

/// Checks every link rule and returns either a valid link or all violated
/// rules. A supplied `length_km` that disagrees with the geometry is
/// replaced by the geometric length.
pub fn validate_link(raw: &RawLink) -> std::result::Result<RoadLink, Vec<Violation>> {
    let mut v = Vec::new();
    let mut bad = |field: &'static str, rule: &str| v.push(Violation { field, rule: rule.to_string() });

    if raw.link_id.trim().is_empty() {
        bad("link_id", "link_id non-empty");
    }
    if !is_digits(&raw.state_fips, 2) {
        bad("state_fips", "state_fips is 2 digits");
    }
    if !is_digits(&raw.county_fips, 5) {
        bad("county_fips", "county_fips is 5 digits");
    }
    let fc = raw.functional_class.and_then(FunctionalClass::new);
    if fc.is_none() {
        bad("functional_class", "functional_class ∈ {1..7}");
    }
    let uc = raw.urban_code.and_then(UrbanCode::new);
    if uc.is_none() {
        bad("urban_code", "urban_code ∈ {0,1,2}");
    }
    let lanes = match raw.through_lanes {
        Some(n) if n >= 1 && n <= u32::MAX as i64 => Some(n as u32),
        Some(_) => {
            bad("through_lanes", "through_lanes ≥ 1");
            None
        }
        None => {
            bad("through_lanes", "through_lanes present");
            None
        }
    };
    let nonneg = |x: f64| x.is_finite() && x >= 0.0;
    match raw.aadt_total {
        Some(t) if nonneg(t) => {}
        Some(_) => bad("aadt_total", "aadt_total ≥ 0"),
        None => bad("aadt_total", "aadt_total present"),
    }
    if raw.aadt_mdv.is_some_and(|x| !nonneg(x)) {
        bad("aadt_mdv", "aadt_mdv ≥ 0");
    }
    if raw.aadt_hdv.is_some_and(|x| !nonneg(x)) {
        bad("aadt_hdv", "aadt_hdv ≥ 0");
    }
    if let Some(t) = raw.aadt_total {
        let classes = raw.aadt_mdv.unwrap_or(0.0) + raw.aadt_hdv.unwrap_or(0.0);
        if classes > t {
            bad("aadt_total", "aadt_mdv + aadt_hdv ≤ aadt_total");
        }
    }
    if raw.length_km.is_some_and(|x| !nonneg(x)) {
        bad("length_km", "length_km ≥ 0");
    }
    let geometry = match geo::parse_wkt(&raw.geometry_wkt).and_then(|g| g.into_line_string()) {
        Ok(l) => Some(l),
        Err(e) => {
            bad("geometry_wkt", &format!("valid LINESTRING ({e})"));
            None
        }
    };

    if !v.is_empty() {
        return Err(v);
    }
    let geometry = geometry.unwrap();
    let geo_len = geo::line_length_km(&geometry);
    let length_km = match raw.length_km {
        Some(l) if (l - geo_len).abs() <= LENGTH_REL_TOL * geo_len => l,
        _ => geo_len,
    };
    Ok(RoadLink {
        link_id: raw.link_id.clone(),
        state_fips: raw.state_fips.clone(),
        county_fips: raw.county_fips.clone(),
        functional_class: fc.unwrap(),
        urban_code: uc.unwrap(),
        through_lanes: lanes.unwrap(),
        geometry,
        length_km,
        aadt_total: raw.aadt_total.unwrap(),
        aadt_mdv: raw.aadt_mdv.map(ClassAadt::observed),
        aadt_hdv: raw.aadt_hdv.map(ClassAadt::observed),
        aadt_ldv: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusBlock {
    pub geoid: String,
    pub geometry: Areal,
    /// Block area in km². Supplied values (land area) are kept as given and
    /// may be zero for water blocks.
    pub area_km2: f64,
}

impl CensusBlock {
    /// Builds a block, computing the area from the geometry when absent.
    pub fn new(geoid: String, geometry: Areal, area_km2: Option<f64>) -> Result<Self> {
        let computed = geo::polygon_area_km2(&geometry);
        if !(computed > 0.0) {
            return Err(Error::InvalidGeometry(format!("block {geoid} has zero area")));
        }
        let area_km2 = match area_km2 {
            Some(a) if a.is_finite() && a >= 0.0 => a,
            Some(a) => {
                return Err(Error::InvalidGeometry(format!("block {geoid} has invalid area {a}")))
            }
            None => computed,
        };
        Ok(CensusBlock { geoid, geometry, area_km2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
}

impl MaxFeatures {
    /// Number of candidate columns examined per split out of `width`.
    pub fn count(self, width: usize) -> usize {
        let k = match self {
            MaxFeatures::All => width,
            MaxFeatures::Sqrt => (width as f64).sqrt().floor() as usize,
            MaxFeatures::Fraction(f) => (f * width as f64).floor() as usize,
        };
        k.clamp(1, width.max(1))
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::All => f.write_str("all"),
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::Fraction(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" | "none" | "1.0" | "1" => Ok(MaxFeatures::All),
            "sqrt" => Ok(MaxFeatures::Sqrt),
            other => match other.parse::<f64>() {
                Ok(f) if f > 0.0 && f <= 1.0 => Ok(MaxFeatures::Fraction(f)),
                _ => Err(Error::InvalidArgument(format!("invalid max_features `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub n_estimators: usize,
    /// `None` grows trees until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Hyperparameters {
    pub fn new(
        n_estimators: usize,
        max_depth: Option<usize>,
        min_samples_split: usize,
        min_samples_leaf: usize,
        max_features: MaxFeatures,
    ) -> Result<Self> {
        let p = Hyperparameters { n_estimators, max_depth, min_samples_split, min_samples_leaf, max_features };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.n_estimators == 0 {
            return fail("n_estimators must be positive".into());
        }
        if self.max_depth == Some(0) {
            return fail("max_depth must be positive when set".into());
        }
        if self.min_samples_split < 2 {
            return fail(format!("min_samples_split must be ≥ 2, got {}", self.min_samples_split));
        }
        if self.min_samples_leaf < 1 {
            return fail("min_samples_leaf must be ≥ 1".into());
        }
        if self.min_samples_leaf > self.min_samples_split {
            return fail(format!(
                "min_samples_leaf ({}) must not exceed min_samples_split ({})",
                self.min_samples_leaf, self.min_samples_split
            ));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return fail(format!("max_features fraction must be in (0, 1], got {f}"));
            }
        }
        Ok(())
    }

    /// Published tuned settings for the medium-duty model.
    pub fn mdv_default() -> Self {
        Hyperparameters {
            n_estimators: 98,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }

    /// Published tuned settings for the heavy-duty model.
    pub fn hdv_default() -> Self {
        Hyperparameters {
            n_estimators: 95,
            max_depth: Some(40),
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }

    pub fn default_for(class: VehicleClass) -> Self {
        match class {
            VehicleClass::Hdv => Self::hdv_default(),
            _ => Self::mdv_default(),
        }
    }
}

/// Error metrics in vehicles/day (MAPE in percent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// NaN when the observed values have zero variance.
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Over rows with a positive observed value; `None` if there are none.
    pub mape: Option<f64>,
    pub n: usize,
    /// Rows left out of MAPE because the observed value is zero.
    pub mape_excluded: usize,
}

impl MetricsReport {
    pub fn r2_defined(&self) -> bool {
        !self.r2.is_nan()
    }
}
