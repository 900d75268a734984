//! Tidy CSV output for evaluation results.

use std::io::Write;

use super::{CountyMapeReport, CvReport, GroupSummary, ResidualRow, SensitivityCurve};
use crate::error::Result;
use crate::ingest::fmt_opt;
use crate::model::{MetricsReport, VehicleClass};

fn metric_cells(m: &MetricsReport) -> [String; 5] {
    [m.r2.to_string(), m.mae.to_string(), m.rmse.to_string(), fmt_opt(m.mape), m.n.to_string()]
}

/// One row per `(target, set)` pair.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(VehicleClass, &str, MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "set", "r2", "mae", "rmse", "mape_pct", "n", "mape_excluded"])?;
    for (t, set, m) in rows {
        let mut r = vec![t.as_str().to_string(), set.to_string()];
        r.extend(metric_cells(m));
        r.push(m.mape_excluded.to_string());
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per fold, then `mean` and `variance` rows.
pub fn write_cv_csv<W: Write>(out: W, reports: &[(VehicleClass, &CvReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "fold", "r2", "mae", "rmse", "mape_pct", "n"])?;
    for (t, r) in reports {
        for (i, f) in r.folds.iter().enumerate() {
            let mut row = vec![t.as_str().to_string(), (i + 1).to_string()];
            row.extend(metric_cells(f));
            w.write_record(row)?;
        }
        let n: usize = r.folds.iter().map(|f| f.n).sum();
        for (label, pick) in [("mean", 0), ("variance", 1)] {
            let v = |s: super::MetricSpread| if pick == 0 { s.mean } else { s.variance };
            w.write_record([
                t.as_str().to_string(),
                label.to_string(),
                v(r.r2).to_string(),
                v(r.mae).to_string(),
                v(r.rmse).to_string(),
                fmt_opt(r.mape.map(v)),
                n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_county_mape_csv<W: Write>(out: W, reports: &[(VehicleClass, &CountyMapeReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "county_fips", "mape_pct", "total_vkt", "n_links", "zero_excluded"])?;
    for (t, r) in reports {
        for c in &r.counties {
            w.write_record([
                t.as_str().to_string(),
                c.county_fips.clone(),
                c.mape_pct.to_string(),
                c.total_vkt.to_string(),
                c.n_links.to_string(),
                c.zero_excluded.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals_csv<W: Write>(out: W, target: VehicleClass, link_ids: &[String], rows: &[ResidualRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "link_id", "observed", "predicted", "residual", "lowess"])?;
    for (id, r) in link_ids.iter().zip(rows) {
        w.write_record([
            target.as_str().to_string(),
            id.clone(),
            r.observed.to_string(),
            r.predicted.to_string(),
            r.residual.to_string(),
            r.lowess.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensitivity_csv<W: Write>(out: W, curves: &[(VehicleClass, &SensitivityCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "noise_target", "noise_pct", "r2"])?;
    for (t, c) in curves {
        for (p, r2) in &c.levels {
            w.write_record([t.as_str().to_string(), c.noise_target.as_str().to_string(), p.to_string(), r2.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictor_summary_csv<W: Write>(out: W, groups: &[(VehicleClass, &[GroupSummary])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "target",
        "predictor",
        "group",
        "n",
        "observed_q1",
        "observed_median",
        "observed_q3",
        "predicted_q1",
        "predicted_median",
        "predicted_q3",
    ])?;
    for (t, gs) in groups {
        for g in gs.iter() {
            let mut row = vec![t.as_str().to_string(), g.predictor.clone(), g.group.clone(), g.n.to_string()];
            row.extend(g.observed.iter().chain(&g.predicted).map(f64::to_string));
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::{score, MetricSpread};

    #[test]
    fn metrics_and_cv_layout() {
        let m = score(&[100.0, 200.0], &[110.0, 180.0]).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[(VehicleClass::Mdv, "test", m)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), format!("mdv,test,0.9,15,{},10,2,0", 250f64.sqrt()));

        let s = MetricSpread { mean: 1.0, variance: 0.0 };
        let cv = CvReport { folds: vec![m, m], r2: s, mae: s, rmse: s, mape: None };
        let mut buf = Vec::new();
        write_cv_csv(&mut buf, &[(VehicleClass::Hdv, &cv)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], "hdv,mean,1,1,1,,4");
        assert_eq!(lines[4], "hdv,variance,0,0,0,,4");
    }
}
