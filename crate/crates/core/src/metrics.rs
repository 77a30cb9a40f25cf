//! Per-evaluation-point metrics and the fixed-schema CSV they serialize to.

use serde::{Deserialize, Serialize};

/// One evaluation point. The CSV carries the fixed nine-column schema;
/// the remaining fields travel in the run summary JSON instead (wall-clock
/// stays out of every deterministic artifact).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub avg_return: f64,
    pub l_rew: f64,
    pub l_dyn: f64,
    pub l_sp: f64,
    /// Sparsity rate of the deterministic state→reward mask.
    pub s_zr: f64,
    /// F1 pooled over the reward-side masks (state→reward, action→reward).
    pub f1_sr: f64,
    /// F1 pooled over the dynamics-side masks (state→state, action→state).
    pub f1_ss: f64,
    pub pearson_r: f64,
    /// Sparsity rate of a stochastic mask sample, logged alongside the
    /// deterministic one for comparison.
    pub s_zr_stochastic: f64,
    pub precision_reward: f64,
    pub recall_reward: f64,
    pub shd_overall: u64,
    /// Seconds since run start; excluded from the CSV so identical
    /// (config, seed) runs stay byte-identical.
    pub wall_clock_s: f64,
}

/// Fixed CSV column names, in order.
pub const CSV_HEADER: &str = "step,avg_return,l_rew,l_dyn,l_sp,s_zr,f1_sr,f1_ss,pearson_r";

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        // Shortest round-trip formatting keeps files compact and stable.
        format!("{v}")
    }
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            fmt(self.avg_return),
            fmt(self.l_rew),
            fmt(self.l_dyn),
            fmt(self.l_sp),
            fmt(self.s_zr),
            fmt(self.f1_sr),
            fmt(self.f1_ss),
            fmt(self.pearson_r),
        )
    }
}

/// Render records as a complete CSV document (header plus one row per
/// evaluation point).
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_row_shape() {
        let rec = MetricsRecord { step: 100, avg_return: 1.5, pearson_r: f64::NAN, ..Default::default() };
        let csv = to_csv(&[rec]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 9);
        assert!(row.starts_with("100,1.5,"));
        assert!(row.ends_with(",nan"));
    }

    #[test]
    fn formatting_is_deterministic() {
        let rec = MetricsRecord { step: 7, avg_return: 0.1 + 0.2, ..Default::default() };
        assert_eq!(rec.csv_row(), rec.csv_row());
    }
}
