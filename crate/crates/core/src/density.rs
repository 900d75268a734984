//! Census-block traffic density: daily vehicle-km within a buffer around each
//! block, per vehicle class, divided by the block's own area.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geo::{buffer, clipped_length_km, Areal, SpatialIndex};
use crate::model::{CensusBlock, RoadLink, VehicleClass};

pub const DENSITY_COLUMNS: [&str; 11] = [
    "geoid",
    "area_km2",
    "vkt_total",
    "vkt_ldv",
    "vkt_mdv",
    "vkt_hdv",
    "density_total",
    "density_ldv",
    "density_mdv",
    "density_hdv",
    "contributing_links",
];

/// Classes in output column order.
const CLASSES: [VehicleClass; 4] = [VehicleClass::Total, VehicleClass::Ldv, VehicleClass::Mdv, VehicleClass::Hdv];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOptions {
    pub buffer_m: f64,
    pub arc_segments: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { buffer_m: 250.0, arc_segments: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDensity {
    pub geoid: String,
    pub area_km2: f64,
    /// Daily vehicle-km by class, in `[total, ldv, mdv, hdv]` order.
    pub vkt: [f64; 4],
    /// VKT per km² of block area, same order.
    pub density: [f64; 4],
    pub contributing_links: usize,
}

impl BlockDensity {
    pub fn vkt_of(&self, class: VehicleClass) -> f64 {
        self.vkt[CLASSES.iter().position(|c| *c == class).unwrap()]
    }

    pub fn density_of(&self, class: VehicleClass) -> f64 {
        self.density[CLASSES.iter().position(|c| *c == class).unwrap()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub geoid: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    /// Sorted by geoid.
    pub blocks: Vec<BlockDensity>,
    pub errors: Vec<BlockError>,
    /// Links without a full set of class values; they contribute nothing.
    pub links_skipped: usize,
}

struct Eligible<'a> {
    links: Vec<(&'a RoadLink, [f64; 4])>,
    skipped: usize,
}

fn eligible(links: &[RoadLink]) -> Eligible<'_> {
    let mut out = Vec::with_capacity(links.len());
    let mut skipped = 0;
    for l in links {
        let vals = CLASSES.map(|c| l.class_aadt(c));
        if vals.iter().all(Option::is_some) {
            out.push((l, vals.map(Option::unwrap)));
        } else {
            skipped += 1;
        }
    }
    Eligible { links: out, skipped }
}

fn block_density(
    block: &CensusBlock,
    zone: &Areal,
    links: &[(&RoadLink, [f64; 4])],
    candidates: impl Iterator<Item = usize>,
) -> BlockDensity {
    let mut vkt = [0.0; 4];
    let mut contributing = 0;
    for i in candidates {
        let (link, aadt) = &links[i];
        let km = clipped_length_km(&link.geometry, zone);
        if km > 0.0 {
            contributing += 1;
            for k in 0..4 {
                vkt[k] += aadt[k] * km;
            }
        }
    }
    BlockDensity {
        geoid: block.geoid.clone(),
        area_km2: block.area_km2,
        vkt,
        density: vkt.map(|v| v / block.area_km2),
        contributing_links: contributing,
    }
}

fn compute(blocks: &[CensusBlock], links: &[RoadLink], opts: DensityOptions, use_index: bool) -> Result<DensityReport> {
    let el = eligible(links);
    let index = use_index.then(|| {
        SpatialIndex::build(el.links.iter().enumerate().map(|(i, (l, _))| (i, l.geometry.bbox())).collect())
    });
    let per_block: Vec<std::result::Result<BlockDensity, BlockError>> = blocks
        .par_iter()
        .map(|b| {
            if !(b.area_km2 > 0.0) {
                return Err(BlockError { geoid: b.geoid.clone(), message: "block area is zero".into() });
            }
            let zone = buffer(&b.geometry, opts.buffer_m, opts.arc_segments)
                .map_err(|e| BlockError { geoid: b.geoid.clone(), message: e.to_string() })?;
            Ok(match &index {
                Some(ix) => block_density(b, &zone, &el.links, ix.query(&zone.bbox()).into_iter()),
                None => block_density(b, &zone, &el.links, 0..el.links.len()),
            })
        })
        .collect();
    let mut report = DensityReport { links_skipped: el.skipped, ..Default::default() };
    for r in per_block {
        match r {
            Ok(d) => report.blocks.push(d),
            Err(e) => report.errors.push(e),
        }
    }
    report.blocks.sort_by(|a, b| a.geoid.cmp(&b.geoid));
    report.errors.sort_by(|a, b| a.geoid.cmp(&b.geoid));
    Ok(report)
}

/// Densities using a spatial index over link bounding boxes.
pub fn compute_density(blocks: &[CensusBlock], links: &[RoadLink], opts: DensityOptions) -> Result<DensityReport> {
    compute(blocks, links, opts, true)
}

/// Same result as [`compute_density`] by clipping every link against every
/// block. Quadratic; meant for checking.
pub fn compute_density_brute_force(
    blocks: &[CensusBlock],
    links: &[RoadLink],
    opts: DensityOptions,
) -> Result<DensityReport> {
    compute(blocks, links, opts, false)
}

pub fn write_density_to<W: Write>(out: W, blocks: &[BlockDensity]) -> Result<()> {
    let mut sorted: Vec<&BlockDensity> = blocks.iter().collect();
    sorted.sort_by(|a, b| a.geoid.cmp(&b.geoid));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DENSITY_COLUMNS)?;
    for b in sorted {
        let mut row = vec![b.geoid.clone(), b.area_km2.to_string()];
        row.extend(b.vkt.iter().map(f64::to_string));
        row.extend(b.density.iter().map(f64::to_string));
        row.push(b.contributing_links.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density(path: &Path, blocks: &[BlockDensity]) -> Result<()> {
    write_density_to(std::io::BufWriter::new(File::create(path)?), blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Coord, Polygon};
    use crate::model::{validate_link, ClassAadt, Provenance, RawLink};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn road(id: &str, wkt: &str, total: f64, mdv: f64, hdv: f64) -> RoadLink {
        let mut l = validate_link(&RawLink {
            link_id: id.into(),
            state_fips: "50".into(),
            county_fips: "50001".into(),
            functional_class: Some(3),
            urban_code: Some(1),
            through_lanes: Some(2),
            aadt_total: Some(total),
            aadt_mdv: Some(mdv),
            aadt_hdv: Some(hdv),
            geometry_wkt: wkt.into(),
            ..Default::default()
        })
        .unwrap();
        l.aadt_ldv = Some(ClassAadt { value: total - mdv - hdv, provenance: Provenance::Derived });
        l
    }

    fn square_block(geoid: &str, x: f64, y: f64, side: f64) -> CensusBlock {
        CensusBlock::new(geoid.into(), Areal::Polygon(Polygon::rect(x, y, x + side, y + side).unwrap()), None).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * b.abs().max(1.0)
    }

    #[test]
    fn fixtures() {
        let blocks = vec![
            square_block("A", 0.0, 0.0, 1000.0),
            square_block("B", 10_000.0, 10_000.0, 1000.0),
        ];
        let links = vec![road("inside", "LINESTRING(0 500,1000 500)", 500.0, 50.0, 50.0)];
        let r = compute_density(&blocks, &links, DensityOptions::default()).unwrap();
        let a = &r.blocks[0];
        assert!(close(a.area_km2, 1.0));
        assert!(close(a.density_of(VehicleClass::Total), 500.0));
        assert!(close(a.density_of(VehicleClass::Mdv), 50.0));
        assert!(close(a.density_of(VehicleClass::Hdv), 50.0));
        assert!(close(a.density_of(VehicleClass::Ldv), 400.0));
        let b = &r.blocks[1];
        assert_eq!(b.density, [0.0; 4]);
        assert_eq!(b.contributing_links, 0);

        let chord = vec![road("chord", "LINESTRING(-2000 500,2000 500)", 100.0, 10.0, 5.0)];
        let r = compute_density(&blocks[..1], &chord, DensityOptions::default()).unwrap();
        assert!(close(r.blocks[0].vkt_of(VehicleClass::Total), 150.0));
        assert!(close(r.blocks[0].density_of(VehicleClass::Total), 150.0));
    }

    #[test]
    fn zero_area_block_is_reported() {
        let water = CensusBlock::new("W".into(), Areal::Polygon(Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap()), Some(0.0)).unwrap();
        let r = compute_density(&[water, square_block("A", 0.0, 0.0, 100.0)], &[], DensityOptions::default()).unwrap();
        assert_eq!(r.blocks.len(), 1);
        assert_eq!(r.errors.len(), 1);
        assert_eq!(r.errors[0].geoid, "W");
    }

    #[test]
    fn unimputed_links_are_skipped() {
        let mut l = road("x", "LINESTRING(0 500,1000 500)", 500.0, 50.0, 50.0);
        l.aadt_ldv = None;
        let r = compute_density(&[square_block("A", 0.0, 0.0, 1000.0)], &[l], DensityOptions::default()).unwrap();
        assert_eq!(r.links_skipped, 1);
        assert_eq!(r.blocks[0].contributing_links, 0);
    }

    fn random_corpus(seed: u64, n_links: usize, n_blocks: usize) -> (Vec<CensusBlock>, Vec<RoadLink>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..n_blocks)
            .map(|i| {
                let x = rng.random_range(0.0..20_000.0);
                let y = rng.random_range(0.0..20_000.0);
                square_block(&format!("B{i:03}"), x, y, rng.random_range(100.0..1500.0))
            })
            .collect();
        let links = (0..n_links)
            .map(|i| {
                let a = Coord::new(rng.random_range(0.0..21_000.0), rng.random_range(0.0..21_000.0));
                let b = Coord::new(a.x + rng.random_range(-900.0..900.0), a.y + rng.random_range(-900.0..900.0));
                let total = rng.random_range(10.0..20_000.0);
                let wkt = format!("LINESTRING({} {},{} {})", a.x, a.y, b.x, b.y);
                road(&format!("L{i:04}"), &wkt, total, total * 0.05, total * 0.08)
            })
            .collect();
        (blocks, links)
    }

    #[test]
    fn index_matches_brute_force() {
        let (blocks, links) = random_corpus(7, 300, 30);
        let a = compute_density(&blocks, &links, DensityOptions::default()).unwrap();
        let b = compute_density_brute_force(&blocks, &links, DensityOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.blocks.iter().any(|b| b.contributing_links > 0));
        for b in &a.blocks {
            let parts = b.density[1] + b.density[2] + b.density[3];
            assert!((b.density[0] - parts).abs() <= 1e-6 * b.density[0].max(1.0));
        }
    }

    #[test]
    fn larger_buffer_never_lowers_density() {
        let (blocks, links) = random_corpus(8, 200, 20);
        let a = compute_density(&blocks, &links, DensityOptions::default()).unwrap();
        let b = compute_density(&blocks, &links, DensityOptions { buffer_m: 300.0, arc_segments: 16 }).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            for k in 0..4 {
                assert!(y.density[k] >= x.density[k] * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn translation_invariant() {
        let (blocks, links) = random_corpus(9, 150, 15);
        let (dx, dy) = (523_456.25, -4_100_007.5);
        let moved_blocks: Vec<CensusBlock> = blocks
            .iter()
            .map(|b| CensusBlock::new(b.geoid.clone(), b.geometry.translate(dx, dy), Some(b.area_km2)).unwrap())
            .collect();
        let moved_links: Vec<RoadLink> = links
            .iter()
            .map(|l| {
                let mut m = l.clone();
                m.geometry = l.geometry.translate(dx, dy);
                m
            })
            .collect();
        let a = compute_density(&blocks, &links, DensityOptions::default()).unwrap();
        let b = compute_density(&moved_blocks, &moved_links, DensityOptions::default()).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            for k in 0..4 {
                assert!((x.density[k] - y.density[k]).abs() <= 1e-9 * x.density[k].max(1.0), "{} {k}", x.geoid);
            }
        }
    }

    #[test]
    fn csv_output() {
        let mut buf = Vec::new();
        write_density_to(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);

        let (blocks, links) = random_corpus(1, 50, 2);
        let r = compute_density(&blocks, &links, DensityOptions::default()).unwrap();
        let mut rev = r.blocks.clone();
        rev.reverse();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_density_to(&mut a, &r.blocks).unwrap();
        write_density_to(&mut b, &rev).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().next().unwrap(), DENSITY_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("B000,"));
    }
}
