use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RoadLink;

const NO_LEVEL: u32 = u32::MAX;

/// Design matrix with dense continuous columns followed by one-hot blocks.
///
/// One-hot blocks are stored as one level index per row; column `offset + k`
/// of a block is 1.0 exactly when the row's level is `k`. A row with no
/// level (a category unseen at fit time) is all zeros in that block.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cont: usize,
    cont: Vec<f64>,
    block_levels: Vec<usize>,
    block_offsets: Vec<usize>,
    cats: Vec<u32>,
}

impl Matrix {
    pub fn new(n_cont: usize, block_levels: Vec<usize>) -> Self {
        let mut block_offsets = Vec::with_capacity(block_levels.len());
        let mut off = n_cont;
        for &l in &block_levels {
            block_offsets.push(off);
            off += l;
        }
        Matrix { n_rows: 0, n_cont, cont: Vec::new(), block_levels, block_offsets, cats: Vec::new() }
    }

    /// All-continuous matrix from rows.
    pub fn dense(rows: &[Vec<f64>]) -> Self {
        let n_cont = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::new(n_cont, vec![]);
        for r in rows {
            m.push_row(r, &[]);
        }
        m
    }

    pub fn push_row(&mut self, cont: &[f64], levels: &[Option<u32>]) {
        assert_eq!(cont.len(), self.n_cont);
        assert_eq!(levels.len(), self.block_levels.len());
        self.cont.extend_from_slice(cont);
        for (b, l) in levels.iter().enumerate() {
            let l = l.unwrap_or(NO_LEVEL);
            assert!(l == NO_LEVEL || (l as usize) < self.block_levels[b]);
            self.cats.push(l);
        }
        self.n_rows += 1;
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cont(&self) -> usize {
        self.n_cont
    }

    pub fn width(&self) -> usize {
        self.n_cont + self.block_levels.iter().sum::<usize>()
    }

    pub fn n_blocks(&self) -> usize {
        self.block_levels.len()
    }

    pub fn block_levels(&self, b: usize) -> usize {
        self.block_levels[b]
    }

    pub fn block_offset(&self, b: usize) -> usize {
        self.block_offsets[b]
    }

    #[inline]
    pub fn cont(&self, row: usize, col: usize) -> f64 {
        self.cont[row * self.n_cont + col]
    }

    #[inline]
    pub(crate) fn level(&self, row: usize, block: usize) -> u32 {
        self.cats[row * self.block_levels.len() + block]
    }

    /// Block and level of a one-hot column; `None` for continuous columns.
    pub fn locate(&self, col: usize) -> Option<(usize, u32)> {
        if col < self.n_cont {
            return None;
        }
        let b = self.block_offsets.partition_point(|&o| o <= col) - 1;
        Some((b, (col - self.block_offsets[b]) as u32))
    }

    /// Value of any column, dense view.
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        if col < self.n_cont {
            self.cont(row, col)
        } else {
            let (b, l) = self.locate(col).unwrap();
            if self.level(row, b) == l {
                1.0
            } else {
                0.0
            }
        }
    }

    pub fn row_dense(&self, row: usize) -> Vec<f64> {
        (0..self.width()).map(|c| self.value(row, c)).collect()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Matrix {
        let nb = self.block_levels.len();
        let mut m = Matrix { n_rows: 0, cont: Vec::new(), cats: Vec::new(), ..self.clone() };
        m.cont.reserve(rows.len() * self.n_cont);
        m.cats.reserve(rows.len() * nb);
        for &r in rows {
            m.cont.extend_from_slice(&self.cont[r * self.n_cont..(r + 1) * self.n_cont]);
            m.cats.extend_from_slice(&self.cats[r * nb..(r + 1) * nb]);
            m.n_rows += 1;
        }
        m
    }

    pub fn cont_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.cont[row * self.n_cont + col]
    }
}

/// Column layout for link features: total AADT and lane count, then one-hot
/// functional class, state and county, each block sorted by category key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub continuous: Vec<String>,
    pub functional_class: Vec<u8>,
    pub state_fips: Vec<String>,
    pub county_fips: Vec<String>,
}

impl FeatureSchema {
    pub fn build(links: &[RoadLink]) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::EmptyTrainingSet("feature schema".into()));
        }
        let mut fc: Vec<u8> = links.iter().map(|l| l.functional_class.code()).collect();
        let mut st: Vec<String> = links.iter().map(|l| l.state_fips.clone()).collect();
        let mut co: Vec<String> = links.iter().map(|l| l.county_fips.clone()).collect();
        for v in [&mut st, &mut co] {
            v.sort();
            v.dedup();
        }
        fc.sort_unstable();
        fc.dedup();
        Ok(FeatureSchema {
            continuous: vec!["aadt_total".into(), "through_lanes".into()],
            functional_class: fc,
            state_fips: st,
            county_fips: co,
        })
    }

    pub fn width(&self) -> usize {
        self.continuous.len() + self.functional_class.len() + self.state_fips.len() + self.county_fips.len()
    }

    pub fn empty_matrix(&self) -> Matrix {
        Matrix::new(
            self.continuous.len(),
            vec![self.functional_class.len(), self.state_fips.len(), self.county_fips.len()],
        )
    }

    pub fn push(&self, m: &mut Matrix, link: &RoadLink) {
        let fc = self.functional_class.binary_search(&link.functional_class.code()).ok();
        let st = self.state_fips.binary_search(&link.state_fips).ok();
        let co = self.county_fips.binary_search(&link.county_fips).ok();
        m.push_row(
            &[link.aadt_total, link.through_lanes as f64],
            &[fc.map(|i| i as u32), st.map(|i| i as u32), co.map(|i| i as u32)],
        );
    }

    /// Unseen categories encode as an all-zero block.
    pub fn encode(&self, links: &[RoadLink]) -> Matrix {
        let mut m = self.empty_matrix();
        for l in links {
            self.push(&mut m, l);
        }
        m
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut out = self.continuous.clone();
        out.extend(self.functional_class.iter().map(|c| format!("fc_{c}")));
        out.extend(self.state_fips.iter().map(|s| format!("state_{s}")));
        out.extend(self.county_fips.iter().map(|s| format!("county_{s}")));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_link, RawLink};

    fn link(state: &str, county: &str, fc: i64) -> RoadLink {
        validate_link(&RawLink {
            link_id: format!("{county}-{fc}"),
            state_fips: state.into(),
            county_fips: county.into(),
            functional_class: Some(fc),
            urban_code: Some(0),
            through_lanes: Some(2),
            aadt_total: Some(100.0),
            geometry_wkt: "LINESTRING(0 0,1 0)".into(),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn width_counts_observed_levels() {
        let links = vec![
            link("50", "50001", 1),
            link("50", "50003", 3),
            link("33", "33001", 1),
        ];
        let s = FeatureSchema::build(&links).unwrap();
        assert_eq!(s.width(), 2 + 2 + 2 + 3);
        assert_eq!(s.column_names()[2], "fc_1");
        assert_eq!(s.column_names()[4], "state_33");

        let single = FeatureSchema::build(&links[..1]).unwrap();
        assert_eq!(single.width(), 5);
        assert!(FeatureSchema::build(&[]).is_err());
    }

    #[test]
    fn unseen_county_is_all_zero() {
        let s = FeatureSchema::build(&[link("50", "50001", 1), link("50", "50003", 3)]).unwrap();
        let m = s.encode(&[link("50", "50999", 3)]);
        let row = m.row_dense(0);
        assert_eq!(row, vec![100.0, 2.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn locate_columns() {
        let m = Matrix::new(2, vec![3, 1, 2]);
        assert_eq!(m.width(), 8);
        assert_eq!(m.locate(1), None);
        assert_eq!(m.locate(2), Some((0, 0)));
        assert_eq!(m.locate(4), Some((0, 2)));
        assert_eq!(m.locate(5), Some((1, 0)));
        assert_eq!(m.locate(7), Some((2, 1)));
    }
}
