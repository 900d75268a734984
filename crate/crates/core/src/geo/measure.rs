use super::{cross, Areal, Coord, LineString, Polygon};

/// Sum of Euclidean segment lengths, in kilometers.
pub fn line_length_km(line: &LineString) -> f64 {
    line.length_m() / 1000.0
}

/// Shoelace area of a closed ring; positive when counter-clockwise.
pub fn ring_signed_area(ring: &[Coord]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    // Anchor at the first vertex to limit cancellation far from the origin.
    let o = ring[0];
    let mut twice = 0.0;
    for w in ring.windows(2) {
        twice += cross(w[0] - o, w[1] - o);
    }
    0.5 * twice
}

/// Exterior minus holes, summed over parts, in km².
pub fn polygon_area_km2(area: &Areal) -> f64 {
    area.area_m2() / 1e6
}

fn point_segment_dist(p: Coord, a: Coord, b: Coord) -> f64 {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    p.dist(Coord::new(a.x + t * ab.x, a.y + t * ab.y))
}

pub fn point_on_ring_boundary(p: Coord, ring: &[Coord], tol: f64) -> bool {
    ring.windows(2).any(|w| point_segment_dist(p, w[0], w[1]) <= tol)
}

/// Even-odd crossing parity for a single closed ring.
pub(crate) fn ring_parity(p: Coord, ring: &[Coord]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Even-odd containment over all rings of the polygon; boundary points
/// (within a relative tolerance) count as inside.
pub fn point_in_polygon(p: Coord, poly: &Polygon) -> bool {
    let tol = boundary_tolerance(poly);
    if poly.rings().any(|r| point_on_ring_boundary(p, r, tol)) {
        return true;
    }
    poly.rings().fold(false, |acc, r| acc ^ ring_parity(p, r))
}

pub(crate) fn boundary_tolerance(poly: &Polygon) -> f64 {
    let b = poly.bbox();
    let scale = (b.max_x - b.min_x).abs().max((b.max_y - b.min_y).abs()).max(1.0);
    let mag = b.min_x.abs().max(b.max_x.abs()).max(b.min_y.abs()).max(b.max_y.abs()).max(1.0);
    (scale * 1e-12).max(mag * 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::parse_wkt;

    #[test]
    fn lengths() {
        let l = LineString::new(vec![Coord::new(0.0, 0.0), Coord::new(3.0, 4.0)]).unwrap();
        assert_eq!(line_length_km(&l), 0.005);
        let l = LineString::new(vec![
            Coord::new(0.0, 0.0),
            Coord::new(1000.0, 0.0),
            Coord::new(1000.0, 1000.0),
        ])
        .unwrap();
        assert_eq!(line_length_km(&l), 2.0);
    }

    #[test]
    fn areas() {
        let sq = |wkt: &str| parse_wkt(wkt).unwrap().into_areal().unwrap();
        assert_eq!(polygon_area_km2(&sq("POLYGON((0 0,1000 0,1000 1000,0 1000,0 0))")), 1.0);
        let holed = sq(
            "POLYGON((0 0,1000 0,1000 1000,0 1000,0 0),(250 250,750 250,750 750,250 750,250 250))",
        );
        assert!((polygon_area_km2(&holed) - 0.75).abs() < 1e-12);
        let two = sq(
            "MULTIPOLYGON(((0 0,1000 0,1000 1000,0 1000,0 0)),((2000 0,3000 0,3000 1000,2000 1000,2000 0)))",
        );
        assert_eq!(polygon_area_km2(&two), 2.0);
    }

    #[test]
    fn containment_with_hole_and_boundary() {
        let p = parse_wkt(
            "POLYGON((0 0,10 0,10 10,0 10,0 0),(4 4,6 4,6 6,4 6,4 4))",
        )
        .unwrap()
        .into_areal()
        .unwrap();
        let poly = &p.parts()[0];
        assert!(point_in_polygon(Coord::new(1.0, 1.0), poly));
        assert!(!point_in_polygon(Coord::new(5.0, 5.0), poly));
        assert!(point_in_polygon(Coord::new(4.0, 5.0), poly));
        assert!(point_in_polygon(Coord::new(10.0, 3.0), poly));
        assert!(!point_in_polygon(Coord::new(11.0, 3.0), poly));
    }
}
