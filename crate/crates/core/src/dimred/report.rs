use std::path::Path;

use super::Encoder;
use crate::error::{Error, Result};

/// Loadings table: one row per state coordinate, one column per kept
/// eigenvector scaled by the root of its eigenvalue.
pub fn eigen_report_csv(encoder: &Encoder, labels: &[String]) -> Result<String> {
    let n = encoder.input_dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "eigen report labels",
            expected: n,
            actual: labels.len(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["coordinate".to_string()];
    header.extend((0..encoder.dim()).map(|k| format!("pc_{k}")));
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut record = vec![label.clone()];
        for (k, d) in encoder.eigenvalues.iter().enumerate() {
            let h = encoder.h[(i, k)];
            let loading = if encoder.normalized { h } else { h * d.max(0.0).sqrt() };
            record.push(format!("{loading}"));
        }
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_eigen_report(path: &Path, encoder: &Encoder, labels: &[String]) -> Result<()> {
    std::fs::write(path, eigen_report_csv(encoder, labels)?)?;
    Ok(())
}
