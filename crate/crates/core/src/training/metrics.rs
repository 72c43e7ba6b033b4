//! Metrics serialization with a byte-stable layout: identical runs must
//! produce identical CSV files.

use std::fmt::Write as _;
use std::path::Path;

use crate::Result;

use super::stage::TrainRecord;

pub const METRICS_HEADER: &str =
    "step,loss_action,loss_eff,loss_total,keep_spatial,keep_temporal,lr,grad_norm";

/// Render training records as CSV text. Fixed-precision formatting keeps the
/// bytes reproducible across runs of the same computation.
pub fn metrics_csv(records: &[TrainRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.8},{:.6}",
            r.step,
            r.loss_action,
            r.loss_eff,
            r.loss_total,
            r.keep_spatial,
            r.keep_temporal,
            r.lr,
            r.grad_norm
        )
        .expect("string write");
    }
    out
}

pub fn write_metrics_csv(path: &Path, records: &[TrainRecord]) -> Result<()> {
    std::fs::write(path, metrics_csv(records))?;
    Ok(())
}
