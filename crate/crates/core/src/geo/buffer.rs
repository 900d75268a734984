//! Outward polygon buffering.
//!
//! Each ring is offset to its outer side (exterior rings grow, holes
//! shrink) with round joins at convex corners and a pass-through-vertex
//! join at reflex corners. The buffered region is every point with positive
//! winding number with respect to the raw offset rings; its boundary is
//! recovered by splitting all raw edges at their mutual intersections,
//! keeping the fragments that separate positive from non-positive winding,
//! and chaining them back into rings.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use super::measure::ring_parity;
use super::{cross, ring_signed_area, Areal, BBox, Coord, Polygon};
use crate::error::{Error, Result};

/// Outward Minkowski offset of `area` by `distance_m`, with each
/// quarter-circle of arc approximated by `arc_segments` chords.
pub fn buffer(area: &Areal, distance_m: f64, arc_segments: usize) -> Result<Areal> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "buffer distance must be positive, got {distance_m}"
        )));
    }
    if arc_segments < 4 {
        return Err(Error::InvalidArgument(format!(
            "arc_segments must be at least 4, got {arc_segments}"
        )));
    }
    let mut raw: Vec<Vec<Coord>> = Vec::new();
    for part in area.parts() {
        for ring in part.rings() {
            raw.push(offset_ring(ring, distance_m, arc_segments));
        }
    }
    let rings = positive_region_boundary(&raw);
    assemble(rings)
}

fn unit(v: Coord) -> Coord {
    let l = v.x.hypot(v.y);
    Coord::new(v.x / l, v.y / l)
}

/// Raw offset of a closed ring, to the right of its direction of travel.
fn offset_ring(ring: &[Coord], d: f64, arc_segments: usize) -> Vec<Coord> {
    let verts = &ring[..ring.len() - 1];
    let m = verts.len();
    let dirs: Vec<Coord> = (0..m).map(|i| unit(verts[(i + 1) % m] - verts[i])).collect();
    let normals: Vec<Coord> = dirs.iter().map(|u| Coord::new(u.y, -u.x)).collect();
    let at = |v: Coord, n: Coord| Coord::new(v.x + n.x * d, v.y + n.y * d);

    let mut out = Vec::with_capacity(m * 4);
    for i in 0..m {
        let j = (i + 1) % m;
        let v = verts[j];
        out.push(at(verts[i], normals[i]));
        out.push(at(v, normals[i]));
        let turn = cross(dirs[i], dirs[j]).atan2(dirs[i].x * dirs[j].x + dirs[i].y * dirs[j].y);
        if turn > 1e-12 {
            let steps = ((turn / FRAC_PI_2) * arc_segments as f64 - 1e-9).ceil().max(1.0) as usize;
            let start = normals[i].y.atan2(normals[i].x);
            for k in 1..steps {
                let a = start + turn * k as f64 / steps as f64;
                out.push(Coord::new(v.x + d * a.cos(), v.y + d * a.sin()));
            }
        } else if turn < -1e-12 {
            out.push(v);
        }
    }
    out.push(out[0]);
    out
}

#[derive(Clone, Copy)]
struct Seg {
    a: Coord,
    b: Coord,
}

/// Splits every segment at its intersections with every other segment.
/// Returns, per segment, the ordered list of points along it. Shared
/// intersection points carry identical bits in both segments.
fn split_all(segs: &[Seg], tol: f64) -> Vec<Vec<Coord>> {
    let mut splits: Vec<Vec<(f64, Coord)>> = vec![Vec::new(); segs.len()];
    let boxes: Vec<BBox> = segs.iter().map(|s| BBox::of_coords(&[s.a, s.b]).expanded(tol)).collect();
    let mut order: Vec<usize> = (0..segs.len()).collect();
    order.sort_by(|&i, &j| boxes[i].min_x.total_cmp(&boxes[j].min_x));

    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if boxes[j].min_x > boxes[i].max_x {
                break;
            }
            if !boxes[i].intersects(&boxes[j]) {
                continue;
            }
            intersect_pair(segs, i, j, tol, &mut splits);
        }
    }

    segs.iter()
        .zip(splits)
        .map(|(s, mut sp)| {
            sp.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut pts = Vec::with_capacity(sp.len() + 2);
            pts.push(s.a);
            for (_, p) in sp {
                if *pts.last().unwrap() != p {
                    pts.push(p);
                }
            }
            if *pts.last().unwrap() != s.b {
                pts.push(s.b);
            }
            pts
        })
        .collect()
}

/// Parameter of `p` projected onto `s`, if `p` lies within `tol` of the
/// open interior of `s`.
fn touch_param(s: &Seg, p: Coord, tol: f64) -> Option<f64> {
    let r = s.b - s.a;
    let len2 = r.x * r.x + r.y * r.y;
    let len = len2.sqrt();
    let t = ((p.x - s.a.x) * r.x + (p.y - s.a.y) * r.y) / len2;
    let et = tol / len;
    if t <= et || t >= 1.0 - et {
        return None;
    }
    let dist = cross(r, p - s.a).abs() / len;
    (dist <= tol).then_some(t)
}

fn intersect_pair(segs: &[Seg], i: usize, j: usize, tol: f64, splits: &mut [Vec<(f64, Coord)>]) {
    let (si, sj) = (segs[i], segs[j]);
    let mut touched = false;
    for p in [sj.a, sj.b] {
        if let Some(t) = touch_param(&si, p, tol) {
            splits[i].push((t, p));
            touched = true;
        }
    }
    for p in [si.a, si.b] {
        if let Some(t) = touch_param(&sj, p, tol) {
            splits[j].push((t, p));
            touched = true;
        }
    }
    if touched {
        return;
    }
    let shared = [si.a, si.b].iter().any(|p| *p == sj.a || *p == sj.b);
    if shared {
        return;
    }
    let r = si.b - si.a;
    let s = sj.b - sj.a;
    let o1 = cross(r, sj.a - si.a);
    let o2 = cross(r, sj.b - si.a);
    let o3 = cross(s, si.a - sj.a);
    let o4 = cross(s, si.b - sj.a);
    if (o1 > 0.0 && o2 < 0.0 || o1 < 0.0 && o2 > 0.0) && (o3 > 0.0 && o4 < 0.0 || o3 < 0.0 && o4 > 0.0) {
        let t = o3 / (o3 - o4);
        let u = o1 / (o1 - o2);
        let p = Coord::new(si.a.x + t * r.x, si.a.y + t * r.y);
        splits[i].push((t, p));
        splits[j].push((u, p));
    }
}

fn key(c: Coord) -> (u64, u64) {
    // +0.0 and -0.0 are the same node
    ((c.x + 0.0).to_bits(), (c.y + 0.0).to_bits())
}

/// Boundary rings (closed, region on the left) of the set of points whose
/// winding number with respect to `rings` is positive.
pub(crate) fn positive_region_boundary(rings: &[Vec<Coord>]) -> Vec<Vec<Coord>> {
    let segs: Vec<Seg> = rings
        .iter()
        .flat_map(|r| r.windows(2).map(|w| Seg { a: w[0], b: w[1] }))
        .filter(|s| s.a != s.b)
        .collect();
    if segs.is_empty() {
        return Vec::new();
    }
    let bb = segs.iter().fold(BBox::empty(), |b, s| b.union(&BBox::of_coords(&[s.a, s.b])));
    let extent = (bb.max_x - bb.min_x).max(bb.max_y - bb.min_y).max(1e-300);
    let mag = bb.min_x.abs().max(bb.max_x.abs()).max(bb.min_y.abs()).max(bb.max_y.abs());
    let tol = (extent * 1e-13).max(mag * 4e-16);

    let chains = split_all(&segs, tol);

    let mut nodes: Vec<Coord> = Vec::new();
    let mut node_of: HashMap<(u64, u64), usize> = HashMap::new();
    let mut node_id = |c: Coord, nodes: &mut Vec<Coord>| -> usize {
        *node_of.entry(key(c)).or_insert_with(|| {
            nodes.push(c);
            nodes.len() - 1
        })
    };

    // net multiplicity per undirected fragment, keyed (lo, hi) for lo -> hi
    let mut net: HashMap<(usize, usize), i64> = HashMap::new();
    let mut group_order: Vec<(usize, usize)> = Vec::new();
    for chain in &chains {
        for w in chain.windows(2) {
            let a = node_id(w[0], &mut nodes);
            let b = node_id(w[1], &mut nodes);
            if a == b {
                continue;
            }
            let (k, s) = if a < b { ((a, b), 1) } else { ((b, a), -1) };
            let e = net.entry(k).or_insert_with(|| {
                group_order.push(k);
                0
            });
            *e += s;
        }
    }
    let groups: Vec<((usize, usize), i64)> = group_order
        .into_iter()
        .map(|k| (k, net[&k]))
        .filter(|&(_, n)| n != 0)
        .collect();

    let gsegs: Vec<(Coord, Coord, i64)> =
        groups.iter().map(|&((a, b), n)| (nodes[a], nodes[b], n)).collect();

    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (gi, &((a, b), n)) in groups.iter().enumerate() {
        let (pa, pb) = (nodes[a], nodes[b]);
        let m = Coord::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y));
        let u = unit(pb - pa);
        let ray = Coord::new(-u.y, u.x);
        let w_left = winding_along_ray(m, ray, &gsegs, gi);
        let w_right = w_left - n;
        match (w_left >= 1, w_right >= 1) {
            (true, false) => kept.push((a, b)),
            (false, true) => kept.push((b, a)),
            _ => {}
        }
    }
    chain_rings(&nodes, &kept)
}

/// Winding number at `m` counted along the ray `m + s * dir`, `s > 0`,
/// skipping segment `skip`.
fn winding_along_ray(m: Coord, dir: Coord, segs: &[(Coord, Coord, i64)], skip: usize) -> i64 {
    let perp = Coord::new(-dir.y, dir.x);
    let mut w = 0;
    for (k, &(p, q, n)) in segs.iter().enumerate() {
        if k == skip {
            continue;
        }
        let (dp, dq) = (p - m, q - m);
        let hp = dp.x * perp.x + dp.y * perp.y;
        let hq = dq.x * perp.x + dq.y * perp.y;
        if (hp > 0.0) == (hq > 0.0) {
            continue;
        }
        let sp = dp.x * dir.x + dp.y * dir.y;
        let sq = dq.x * dir.x + dq.y * dir.y;
        let s = sp + (sq - sp) * (-hp) / (hq - hp);
        if s > 0.0 {
            w += if hq > hp { n } else { -n };
        }
    }
    w
}

fn chain_rings(nodes: &[Coord], edges: &[(usize, usize)]) -> Vec<Vec<Coord>> {
    let mut out_edges: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &(a, _)) in edges.iter().enumerate() {
        out_edges.entry(a).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let origin = edges[start].0;
        let mut path = vec![origin, edges[start].1];
        let mut cur = start;
        let closed = loop {
            let (from, at) = edges[cur];
            if at == origin {
                break true;
            }
            let din = nodes[at] - nodes[from];
            let next = out_edges.get(&at).and_then(|cands| {
                cands
                    .iter()
                    .copied()
                    .filter(|&e| !used[e])
                    .max_by(|&x, &y| {
                        let tx = turn_angle(din, nodes[edges[x].1] - nodes[at]);
                        let ty = turn_angle(din, nodes[edges[y].1] - nodes[at]);
                        tx.total_cmp(&ty).then(y.cmp(&x))
                    })
            });
            match next {
                Some(e) => {
                    used[e] = true;
                    path.push(edges[e].1);
                    cur = e;
                }
                None => break false,
            }
        };
        if closed && path.len() >= 4 {
            rings.push(path.into_iter().map(|n| nodes[n]).collect());
        }
    }
    rings
}

fn turn_angle(din: Coord, dout: Coord) -> f64 {
    cross(din, dout).atan2(din.x * dout.x + din.y * dout.y)
}

/// Groups boundary rings into polygons: counter-clockwise rings are
/// exteriors, clockwise rings are holes of the smallest exterior that
/// contains them.
fn assemble(rings: Vec<Vec<Coord>>) -> Result<Areal> {
    let scale = rings
        .iter()
        .map(|r| ring_signed_area(r).abs())
        .fold(0.0f64, f64::max);
    let mut exteriors: Vec<(f64, Vec<Coord>, Vec<Vec<Coord>>)> = Vec::new();
    let mut holes: Vec<Vec<Coord>> = Vec::new();
    for r in rings {
        let a = ring_signed_area(&r);
        if a.abs() <= scale * 1e-15 {
            continue;
        }
        if a > 0.0 {
            exteriors.push((a, r, Vec::new()));
        } else {
            holes.push(r);
        }
    }
    if exteriors.is_empty() {
        return Err(Error::InvalidGeometry("buffer produced no exterior ring".into()));
    }
    exteriors.sort_by(|x, y| x.0.total_cmp(&y.0));
    for h in holes {
        let probe = Coord::new(0.5 * (h[0].x + h[1].x), 0.5 * (h[0].y + h[1].y));
        if let Some(owner) = exteriors.iter_mut().find(|(_, ext, _)| ring_parity(probe, ext)) {
            owner.2.push(h);
        }
    }
    let mut parts = exteriors
        .into_iter()
        .map(|(_, ext, hs)| Polygon::new(ext, hs))
        .collect::<Result<Vec<_>>>()?;
    parts.sort_by(|p, q| {
        let (bp, bq) = (p.bbox(), q.bbox());
        bp.min_x.total_cmp(&bq.min_x).then(bp.min_y.total_cmp(&bq.min_y))
    });
    Ok(Areal::from_parts(parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{parse_wkt, point_in_polygon};
    use std::f64::consts::PI;

    fn area(wkt: &str) -> Areal {
        parse_wkt(wkt).unwrap().into_areal().unwrap()
    }

    fn dist_to_boundary(p: Coord, a: &Areal) -> f64 {
        let mut best = f64::INFINITY;
        for part in a.parts() {
            for r in part.rings() {
                for w in r.windows(2) {
                    let ab = w[1] - w[0];
                    let t = (((p.x - w[0].x) * ab.x + (p.y - w[0].y) * ab.y)
                        / (ab.x * ab.x + ab.y * ab.y))
                        .clamp(0.0, 1.0);
                    best = best.min(p.dist(Coord::new(w[0].x + t * ab.x, w[0].y + t * ab.y)));
                }
            }
        }
        best
    }

    /// Exact buffer membership: inside the polygon or within `d` of it.
    fn in_true_buffer(p: Coord, a: &Areal, d: f64) -> bool {
        a.contains(p) || dist_to_boundary(p, a) <= d
    }

    fn check_against_distance_oracle(src: &Areal, d: f64) {
        let buf = buffer(src, d, 16).unwrap();
        let bb = src.bbox().expanded(d * 1.5);
        // arc chords cut at most d * (1 - cos(pi / 64)) inside the true circle
        let band = d * 0.0013 + 1e-9;
        let n = 60;
        for i in 0..=n {
            for j in 0..=n {
                let p = Coord::new(
                    bb.min_x + (bb.max_x - bb.min_x) * i as f64 / n as f64,
                    bb.min_y + (bb.max_y - bb.min_y) * j as f64 / n as f64,
                );
                let inside_src = src.contains(p);
                let dist = if inside_src { 0.0 } else { dist_to_boundary(p, src) };
                if (dist - d).abs() <= band {
                    continue;
                }
                let expect = in_true_buffer(p, src, d);
                assert_eq!(buf.contains(p), expect, "point {p:?} dist {dist}");
            }
        }
    }

    #[test]
    fn square_buffer_area_matches_minkowski_formula() {
        let sq = area("POLYGON((0 0,1000 0,1000 1000,0 1000,0 0))");
        let b = buffer(&sq, 250.0, 16).unwrap();
        let analytic = 1e6 + 4000.0 * 250.0 + PI * 250.0 * 250.0;
        assert!((analytic - 2_196_349.5).abs() < 0.1);
        let rel = (b.area_m2() - analytic).abs() / analytic;
        assert!(rel < 0.005, "rel {rel}");
        // inscribed 64-gon for the four corner arcs
        let inscribed = 1e6 + 4000.0 * 250.0 + 32.0 * 250.0 * 250.0 * (2.0 * PI / 64.0).sin();
        assert!((b.area_m2() - inscribed).abs() < 1e-6, "{} vs {}", b.area_m2(), inscribed);
        assert_eq!(b.parts().len(), 1);
        assert!(b.parts()[0].interiors().is_empty());
    }

    #[test]
    fn vanishing_distance_is_identity() {
        let sq = area("POLYGON((0 0,1000 0,1000 1000,0 1000,0 0))");
        let b = buffer(&sq, 1e-9, 16).unwrap();
        assert!((b.area_m2() - 1e6).abs() / 1e6 < 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        let sq = area("POLYGON((0 0,1 0,1 1,0 1,0 0))");
        assert!(buffer(&sq, 0.0, 16).is_err());
        assert!(buffer(&sq, -1.0, 16).is_err());
        assert!(buffer(&sq, f64::NAN, 16).is_err());
        assert!(buffer(&sq, 1.0, 3).is_err());
    }

    fn is_convex(ring: &[Coord]) -> bool {
        let n = ring.len() - 1;
        (0..n).all(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            let c = ring[(i + 2) % n];
            let scale = (b - a).x.hypot((b - a).y) * (c - b).x.hypot((c - b).y);
            cross(b - a, c - b) >= -1e-9 * scale
        })
    }

    #[test]
    fn convex_input_stays_convex() {
        for wkt in [
            "POLYGON((0 0,1000 0,1000 1000,0 1000,0 0))",
            "POLYGON((0 0,400 -50,900 300,600 800,100 500,0 0))",
            "POLYGON((0 0,10 0,5 3,0 0))",
        ] {
            for d in [0.5, 25.0, 250.0] {
                let b = buffer(&area(wkt), d, 16).unwrap();
                assert_eq!(b.parts().len(), 1);
                assert!(is_convex(b.parts()[0].exterior()), "{wkt} d={d}");
            }
        }
    }

    #[test]
    fn monotone_in_distance() {
        let l_shape = area("POLYGON((0 0,2000 0,2000 1000,1000 1000,1000 2000,0 2000,0 0))");
        let mut prev = l_shape.area_m2();
        for d in [1.0, 10.0, 100.0, 250.0, 300.0, 600.0, 2000.0] {
            let a = buffer(&l_shape, d, 16).unwrap().area_m2();
            assert!(a > prev, "d={d}: {a} <= {prev}");
            prev = a;
        }
    }

    #[test]
    fn l_shape_matches_distance_oracle() {
        let l_shape = area("POLYGON((0 0,2000 0,2000 1000,1000 1000,1000 2000,0 2000,0 0))");
        check_against_distance_oracle(&l_shape, 250.0);
        check_against_distance_oracle(&l_shape, 700.0);
    }

    #[test]
    fn narrow_notch_fills_in() {
        // a 100 m wide slot closes under a 250 m buffer
        let u = area("POLYGON((0 0,1000 0,1000 1000,550 1000,550 200,450 200,450 1000,0 1000,0 0))");
        let b = buffer(&u, 250.0, 16).unwrap();
        assert_eq!(b.parts().len(), 1);
        assert!(b.parts()[0].interiors().is_empty());
        assert!(b.contains(Coord::new(500.0, 900.0)));
        check_against_distance_oracle(&u, 250.0);
    }

    #[test]
    fn holes_shrink_and_vanish() {
        let holed = area(
            "POLYGON((0 0,3000 0,3000 3000,0 3000,0 0),(1000 1000,2000 1000,2000 2000,1000 2000,1000 1000))",
        );
        let b = buffer(&holed, 250.0, 16).unwrap();
        assert_eq!(b.parts()[0].interiors().len(), 1);
        assert!(!b.contains(Coord::new(1500.0, 1500.0)));
        assert!(b.contains(Coord::new(1100.0, 1500.0)));
        check_against_distance_oracle(&holed, 250.0);

        let b = buffer(&holed, 600.0, 16).unwrap();
        assert!(b.parts()[0].interiors().is_empty());
        assert!(b.contains(Coord::new(1500.0, 1500.0)));
    }

    #[test]
    fn nearby_parts_merge() {
        let two = area(
            "MULTIPOLYGON(((0 0,1000 0,1000 1000,0 1000,0 0)),((1200 0,2200 0,2200 1000,1200 1000,1200 0)),((5000 0,6000 0,6000 1000,5000 1000,5000 0)))",
        );
        let b = buffer(&two, 250.0, 16).unwrap();
        assert_eq!(b.parts().len(), 2);
        check_against_distance_oracle(&two, 250.0);
    }

    #[test]
    fn star_matches_distance_oracle() {
        let ring: Vec<Coord> = (0..14)
            .map(|i| {
                let a = PI * i as f64 / 7.0;
                let r = if i % 2 == 0 { 1500.0 } else { 500.0 };
                Coord::new(r * a.cos() + 5e5, r * a.sin() + 4e6)
            })
            .collect();
        let star = Areal::Polygon(Polygon::new(ring, vec![]).unwrap());
        for d in [50.0, 250.0, 900.0] {
            check_against_distance_oracle(&star, d);
        }
    }

    #[test]
    fn buffer_contains_input() {
        let poly = area("POLYGON((0 0,2000 0,2000 1000,1000 1000,1000 2000,0 2000,0 0))");
        let b = buffer(&poly, 250.0, 16).unwrap();
        for part in poly.parts() {
            for c in part.exterior() {
                assert!(b.parts().iter().any(|p| point_in_polygon(*c, p)));
            }
        }
    }
}
