//! Planar geometry in a projected, meter-based coordinate system.
//!
//! Everything the density computation needs lives here: WKT text I/O,
//! lengths and areas, outward polygon buffering, clipping a polyline to a
//! polygon, and a packed R-tree over bounding boxes. No reprojection is
//! performed; callers must supply projected coordinates (see
//! [`project_lon_lat`] for a small-extent helper).

mod buffer;
mod clip;
mod index;
mod measure;
mod wkt;

pub use buffer::buffer;
pub use clip::{clip_line_to_polygon, clip_line_to_ring_set, clipped_length_km};
pub use index::SpatialIndex;
pub use measure::{
    line_length_km, point_in_polygon, point_on_ring_boundary, polygon_area_km2, ring_signed_area,
};
pub use wkt::{parse_wkt, to_wkt};

use crate::error::{Error, Result};

/// Consecutive vertices closer than this are merged during repair.
pub const DEDUP_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Coord { x, y }
    }

    pub fn dist(self, other: Coord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Sub for Coord {
    type Output = Coord;
    fn sub(self, rhs: Coord) -> Coord {
        Coord::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Coord {
    type Output = Coord;
    fn add(self, rhs: Coord) -> Coord {
        Coord::new(self.x + rhs.x, self.y + rhs.y)
    }
}

#[inline]
pub(crate) fn cross(a: Coord, b: Coord) -> f64 {
    a.x * b.y - a.y * b.x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        BBox { min_x, min_y, max_x, max_y }
    }

    pub fn empty() -> Self {
        BBox::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY)
    }

    pub fn of_coords<'a>(coords: impl IntoIterator<Item = &'a Coord>) -> Self {
        let mut b = BBox::empty();
        for c in coords {
            b.add(*c);
        }
        b
    }

    pub fn add(&mut self, c: Coord) {
        self.min_x = self.min_x.min(c.x);
        self.min_y = self.min_y.min(c.y);
        self.max_x = self.max_x.max(c.x);
        self.max_y = self.max_y.max(c.y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.min_x.min(other.min_x),
            self.min_y.min(other.min_y),
            self.max_x.max(other.max_x),
            self.max_y.max(other.max_y),
        )
    }

    /// Closed-interval overlap test; touching boxes intersect.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn expanded(&self, d: f64) -> BBox {
        BBox::new(self.min_x - d, self.min_y - d, self.max_x + d, self.max_y + d)
    }

    pub fn center(&self) -> Coord {
        Coord::new(0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))
    }

    pub fn is_empty(&self) -> bool {
        self.min_x > self.max_x || self.min_y > self.max_y
    }
}

fn dedup(coords: &[Coord]) -> Vec<Coord> {
    let mut out: Vec<Coord> = Vec::with_capacity(coords.len());
    for &c in coords {
        match out.last() {
            Some(&last) if last.dist(c) <= DEDUP_TOLERANCE_M => {}
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineString(Vec<Coord>);

impl LineString {
    /// Repairs (drops repeated vertices) and validates a polyline.
    pub fn new(coords: Vec<Coord>) -> Result<Self> {
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry(format!("non-finite coordinate {c:?}")));
        }
        let coords = dedup(&coords);
        if coords.len() < 2 {
            return Err(Error::InvalidGeometry(
                "linestring needs at least 2 distinct vertices".into(),
            ));
        }
        Ok(LineString(coords))
    }

    pub fn coords(&self) -> &[Coord] {
        &self.0
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_coords(&self.0)
    }

    pub fn length_m(&self) -> f64 {
        self.0.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> LineString {
        LineString(self.0.iter().map(|c| Coord::new(c.x + dx, c.y + dy)).collect())
    }
}

/// One exterior ring plus holes. Rings are stored closed (first == last),
/// exterior counter-clockwise and holes clockwise.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Polygon {
    exterior: Vec<Coord>,
    interiors: Vec<Vec<Coord>>,
}

fn normalize_ring(coords: &[Coord], ccw: bool) -> Result<Vec<Coord>> {
    if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidGeometry(format!("non-finite coordinate {c:?}")));
    }
    let mut ring = dedup(coords);
    if ring.len() >= 2 && ring[0].dist(ring[ring.len() - 1]) <= DEDUP_TOLERANCE_M {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(Error::InvalidGeometry("ring needs at least 3 distinct vertices".into()));
    }
    ring.push(ring[0]);
    let area = ring_signed_area(&ring);
    if area == 0.0 || !area.is_finite() {
        return Err(Error::InvalidGeometry("ring has zero area".into()));
    }
    if (area > 0.0) != ccw {
        ring.reverse();
    }
    Ok(ring)
}

impl Polygon {
    /// Repairs and normalizes ring orientation. Open rings are closed.
    pub fn new(exterior: Vec<Coord>, interiors: Vec<Vec<Coord>>) -> Result<Self> {
        let exterior = normalize_ring(&exterior, true)?;
        let interiors = interiors
            .iter()
            .map(|r| normalize_ring(r, false))
            .collect::<Result<Vec<_>>>()?;
        Ok(Polygon { exterior, interiors })
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Polygon::new(
            vec![
                Coord::new(min_x, min_y),
                Coord::new(max_x, min_y),
                Coord::new(max_x, max_y),
                Coord::new(min_x, max_y),
            ],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[Coord] {
        &self.exterior
    }

    pub fn interiors(&self) -> &[Vec<Coord>] {
        &self.interiors
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Coord]> {
        std::iter::once(self.exterior.as_slice()).chain(self.interiors.iter().map(|r| r.as_slice()))
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_coords(&self.exterior)
    }

    pub fn area_m2(&self) -> f64 {
        self.rings().map(ring_signed_area).sum()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        let t = |r: &Vec<Coord>| r.iter().map(|c| Coord::new(c.x + dx, c.y + dy)).collect();
        Polygon {
            exterior: t(&self.exterior),
            interiors: self.interiors.iter().map(t).collect(),
        }
    }
}

/// Polygon or multipolygon; the areal geometry kinds blocks, counties and
/// buffers are made of.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Areal {
    Polygon(Polygon),
    MultiPolygon(Vec<Polygon>),
}

impl Areal {
    pub fn parts(&self) -> &[Polygon] {
        match self {
            Areal::Polygon(p) => std::slice::from_ref(p),
            Areal::MultiPolygon(ps) => ps,
        }
    }

    pub fn bbox(&self) -> BBox {
        self.parts().iter().fold(BBox::empty(), |b, p| b.union(&p.bbox()))
    }

    pub fn area_m2(&self) -> f64 {
        self.parts().iter().map(Polygon::area_m2).sum()
    }

    pub fn contains(&self, c: Coord) -> bool {
        self.parts().iter().any(|p| point_in_polygon(c, p))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Areal {
        match self {
            Areal::Polygon(p) => Areal::Polygon(p.translate(dx, dy)),
            Areal::MultiPolygon(ps) => {
                Areal::MultiPolygon(ps.iter().map(|p| p.translate(dx, dy)).collect())
            }
        }
    }

    fn from_parts(mut parts: Vec<Polygon>) -> Areal {
        if parts.len() == 1 {
            Areal::Polygon(parts.pop().unwrap())
        } else {
            Areal::MultiPolygon(parts)
        }
    }
}

impl From<Polygon> for Areal {
    fn from(p: Polygon) -> Self {
        Areal::Polygon(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(Coord),
    LineString(LineString),
    Polygon(Polygon),
    MultiPolygon(Vec<Polygon>),
}

impl Geometry {
    pub fn kind(&self) -> &'static str {
        match self {
            Geometry::Point(_) => "POINT",
            Geometry::LineString(_) => "LINESTRING",
            Geometry::Polygon(_) => "POLYGON",
            Geometry::MultiPolygon(_) => "MULTIPOLYGON",
        }
    }

    pub fn bbox(&self) -> BBox {
        match self {
            Geometry::Point(c) => BBox::new(c.x, c.y, c.x, c.y),
            Geometry::LineString(l) => l.bbox(),
            Geometry::Polygon(p) => p.bbox(),
            Geometry::MultiPolygon(ps) => ps.iter().fold(BBox::empty(), |b, p| b.union(&p.bbox())),
        }
    }

    pub fn into_line_string(self) -> Result<LineString> {
        match self {
            Geometry::LineString(l) => Ok(l),
            other => Err(Error::InvalidGeometry(format!("expected LINESTRING, got {}", other.kind()))),
        }
    }

    pub fn into_areal(self) -> Result<Areal> {
        match self {
            Geometry::Polygon(p) => Ok(Areal::Polygon(p)),
            Geometry::MultiPolygon(ps) => Ok(Areal::MultiPolygon(ps)),
            other => Err(Error::InvalidGeometry(format!(
                "expected POLYGON or MULTIPOLYGON, got {}",
                other.kind()
            ))),
        }
    }
}

impl From<LineString> for Geometry {
    fn from(l: LineString) -> Self {
        Geometry::LineString(l)
    }
}

impl From<Areal> for Geometry {
    fn from(a: Areal) -> Self {
        match a {
            Areal::Polygon(p) => Geometry::Polygon(p),
            Areal::MultiPolygon(ps) => Geometry::MultiPolygon(ps),
        }
    }
}

/// Local azimuthal equidistant projection of lon/lat degrees around an
/// origin, in meters. Distances from the origin are exact on the sphere;
/// other distances degrade with extent (well under 0.1% within ~50 km).
pub fn project_lon_lat(lon: f64, lat: f64, origin_lon: f64, origin_lat: f64) -> Coord {
    const EARTH_RADIUS_M: f64 = 6_371_008.8;
    let (phi, lam) = (lat.to_radians(), lon.to_radians());
    let (phi0, lam0) = (origin_lat.to_radians(), origin_lon.to_radians());
    let dlam = lam - lam0;
    let cos_c = phi0.sin() * phi.sin() + phi0.cos() * phi.cos() * dlam.cos();
    let c = cos_c.clamp(-1.0, 1.0).acos();
    let k = if c.abs() < 1e-12 { 1.0 } else { c / c.sin() };
    Coord::new(
        EARTH_RADIUS_M * k * phi.cos() * dlam.sin(),
        EARTH_RADIUS_M * k * (phi0.cos() * phi.sin() - phi0.sin() * phi.cos() * dlam.cos()),
    )
}
