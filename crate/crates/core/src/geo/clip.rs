use super::{cross, point_in_polygon, Areal, BBox, Coord, LineString, Polygon};

/// Parameters along `a -> b` where the segment meets ring edge `c -> d`.
fn segment_hits(a: Coord, b: Coord, c: Coord, d: Coord, out: &mut Vec<f64>) {
    let r = b - a;
    let s = d - c;
    let qp = c - a;
    let denom = cross(r, s);
    let rl = r.x.hypot(r.y);
    let sl = s.x.hypot(s.y);
    if denom.abs() > 1e-14 * rl * sl {
        let t = cross(qp, s) / denom;
        let u = cross(qp, r) / denom;
        const E: f64 = 1e-12;
        if (-E..=1.0 + E).contains(&t) && (-E..=1.0 + E).contains(&u) {
            out.push(t.clamp(0.0, 1.0));
        }
    } else if cross(qp, r).abs() <= 1e-12 * rl * (rl + qp.x.hypot(qp.y)) {
        // collinear: the overlap endpoints split the segment
        let r2 = r.x * r.x + r.y * r.y;
        for q in [c, d] {
            let t = ((q.x - a.x) * r.x + (q.y - a.y) * r.y) / r2;
            if (0.0..=1.0).contains(&t) {
                out.push(t);
            }
        }
    }
}

fn lerp(a: Coord, b: Coord, t: f64) -> Coord {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        Coord::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }
}

/// Portions of `line` inside any of `parts` (even-odd per polygon, boundary
/// counted as inside).
pub fn clip_line_to_ring_set(line: &LineString, parts: &[&Polygon]) -> Vec<LineString> {
    let mut pieces: Vec<Vec<Coord>> = Vec::new();
    let mut current: Option<Vec<Coord>> = None;
    let mut ts: Vec<f64> = Vec::new();

    for w in line.coords().windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg_box = BBox::of_coords(&[a, b]);
        ts.clear();
        ts.push(0.0);
        ts.push(1.0);
        for p in parts {
            for ring in p.rings() {
                for e in ring.windows(2) {
                    let ebox = BBox::of_coords(&[e[0], e[1]]);
                    if ebox.intersects(&seg_box) {
                        segment_hits(a, b, e[0], e[1], &mut ts);
                    }
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();

        for iv in ts.windows(2) {
            let (t0, t1) = (iv[0], iv[1]);
            let mid = lerp(a, b, 0.5 * (t0 + t1));
            let inside = parts.iter().any(|p| point_in_polygon(mid, p));
            if inside {
                let start = lerp(a, b, t0);
                let end = lerp(a, b, t1);
                match current.as_mut() {
                    Some(cur) if *cur.last().unwrap() == start => cur.push(end),
                    _ => {
                        if let Some(done) = current.take() {
                            pieces.push(done);
                        }
                        current = Some(vec![start, end]);
                    }
                }
            } else if let Some(done) = current.take() {
                pieces.push(done);
            }
        }
    }
    if let Some(done) = current.take() {
        pieces.push(done);
    }
    pieces.into_iter().filter_map(|c| LineString::new(c).ok()).collect()
}

/// The portions of `line` lying inside `area`, in line order. Runs along
/// the boundary count as inside.
pub fn clip_line_to_polygon(line: &LineString, area: &Areal) -> Vec<LineString> {
    let lb = line.bbox();
    let parts: Vec<&Polygon> = area.parts().iter().filter(|p| p.bbox().intersects(&lb)).collect();
    if parts.is_empty() {
        return Vec::new();
    }
    clip_line_to_ring_set(line, &parts)
}

/// Total length of [`clip_line_to_polygon`] output, in km.
pub fn clipped_length_km(line: &LineString, area: &Areal) -> f64 {
    clip_line_to_polygon(line, area).iter().map(|l| l.length_m()).sum::<f64>() / 1000.0
}
