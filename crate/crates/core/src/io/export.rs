//! CSV tables for plotting.

use std::path::Path;

use crate::error::{Error, Result};
use crate::summaries::{CurvePoint, RankingHeatmap};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// One row per list, one column per item in order of first appearance;
/// cells hold the rank or are empty.
pub fn write_heatmap(h: &RankingHeatmap, list_labels: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(std::iter::once("list_id").chain(h.labels.iter().map(String::as_str))).map_err(csv_err)?;
    for (label, row) in list_labels.iter().zip(&h.cells) {
        let cells = row.iter().map(|c| c.map_or_else(String::new, |r| r.to_string()));
        w.write_record(std::iter::once(label.clone()).chain(cells)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve(points: &[CurvePoint], m: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["m", "lists", "mean_items", "se"]).map_err(csv_err)?;
    for p in points {
        w.write_record([m.to_string(), p.lists.to_string(), p.mean.to_string(), p.se.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
