//! Browser bindings for three interactive pieces of the pipeline: buffering
//! a block and clipping a road to it, Lowess smoothing, and a one-feature
//! forest fit.
//!
//! Each binding is a thin wrapper over a plain function so the logic can be
//! tested natively.

use serde::Serialize;
use truckvol_core::forest::{fit_trees, predict_matrix, FitOptions, Matrix};
use truckvol_core::geo::{buffer, clip_line_to_polygon, parse_wkt, polygon_area_km2, to_wkt, Areal, Geometry};
use truckvol_core::model::{Hyperparameters, MaxFeatures};
use truckvol_core::validate::lowess;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct ClipResult {
    pub buffer_wkt: String,
    pub block_area_km2: f64,
    pub buffer_area_km2: f64,
    pub pieces_wkt: Vec<String>,
    pub clipped_km: f64,
    pub line_km: f64,
}

fn areal_wkt(a: &Areal) -> String {
    match a {
        Areal::Polygon(p) => to_wkt(&Geometry::Polygon(p.clone())),
        Areal::MultiPolygon(ps) => to_wkt(&Geometry::MultiPolygon(ps.clone())),
    }
}

/// Buffers `block_wkt` by `distance_m` and clips `road_wkt` to the result.
pub fn buffer_and_clip(block_wkt: &str, road_wkt: &str, distance_m: f64, arc_segments: usize) -> Result<ClipResult, String> {
    let block = parse_wkt(block_wkt).and_then(|g| g.into_areal()).map_err(|e| e.to_string())?;
    let road = parse_wkt(road_wkt).and_then(|g| g.into_line_string()).map_err(|e| e.to_string())?;
    let zone = buffer(&block, distance_m, arc_segments).map_err(|e| e.to_string())?;
    let pieces = clip_line_to_polygon(&road, &zone);
    Ok(ClipResult {
        buffer_wkt: areal_wkt(&zone),
        block_area_km2: polygon_area_km2(&block),
        buffer_area_km2: polygon_area_km2(&zone),
        clipped_km: pieces.iter().map(|p| p.length_m()).sum::<f64>() / 1000.0,
        pieces_wkt: pieces.into_iter().map(|p| to_wkt(&Geometry::LineString(p))).collect(),
        line_km: road.length_m() / 1000.0,
    })
}

/// Fits a forest on a single feature and evaluates it on `grid`.
pub fn forest_curve(
    xs: &[f64],
    ys: &[f64],
    n_trees: usize,
    max_depth: usize,
    seed: u64,
    grid: &[f64],
) -> Result<Vec<f64>, String> {
    let depth = (max_depth > 0).then_some(max_depth);
    let params = Hyperparameters::new(n_trees, depth, 2, 1, MaxFeatures::All).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let trees = fit_trees(&Matrix::dense(&rows), ys, &params, seed, FitOptions::default()).map_err(|e| e.to_string())?;
    let g: Vec<Vec<f64>> = grid.iter().map(|&x| vec![x]).collect();
    Ok(predict_matrix(&trees, &Matrix::dense(&g)))
}

#[wasm_bindgen(js_name = bufferAndClip)]
pub fn buffer_and_clip_js(block_wkt: &str, road_wkt: &str, distance_m: f64, arc_segments: usize) -> Result<String, JsError> {
    let r = buffer_and_clip(block_wkt, road_wkt, distance_m, arc_segments).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&r).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = lowess)]
pub fn lowess_js(xs: Vec<f64>, ys: Vec<f64>, frac: f64, robust_iters: usize) -> Result<Vec<f64>, JsError> {
    lowess(&xs, &ys, frac, robust_iters).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = forestCurve)]
pub fn forest_curve_js(
    xs: Vec<f64>,
    ys: Vec<f64>,
    n_trees: usize,
    max_depth: usize,
    seed: u64,
    grid: Vec<f64>,
) -> Result<Vec<f64>, JsError> {
    forest_curve(&xs, &ys, n_trees, max_depth, seed, &grid).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chord_through_buffered_square() {
        let r = buffer_and_clip(
            "POLYGON((0 0,1000 0,1000 1000,0 1000,0 0))",
            "LINESTRING(-2000 500,2000 500)",
            250.0,
            16,
        )
        .unwrap();
        assert!((r.clipped_km - 1.5).abs() < 1e-9);
        assert!((r.line_km - 4.0).abs() < 1e-12);
        assert_eq!(r.pieces_wkt.len(), 1);
        assert!((r.block_area_km2 - 1.0).abs() < 1e-12);
        assert!(r.buffer_area_km2 > 2.19 && r.buffer_area_km2 < 2.2);
        assert!(r.buffer_wkt.starts_with("POLYGON"));
    }

    #[test]
    fn bad_geometry_is_an_error() {
        assert!(buffer_and_clip("POINT(1 2)", "LINESTRING(0 0,1 1)", 10.0, 8).is_err());
        assert!(buffer_and_clip("POLYGON((0 0,1 0,1 1,0 0))", "LINESTRING(0 0,1 1)", -1.0, 8).is_err());
    }

    #[test]
    fn forest_follows_a_step() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 20.0 { 1.0 } else { 5.0 }).collect();
        let out = forest_curve(&xs, &ys, 10, 0, 1, &[5.0, 35.0]).unwrap();
        assert!((out[0] - 1.0).abs() < 0.5 && (out[1] - 5.0).abs() < 0.5);
        assert!(forest_curve(&xs, &ys[..3], 10, 0, 1, &[1.0]).is_err());
    }
}
