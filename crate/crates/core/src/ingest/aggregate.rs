use crate::error::{Error, Result};
use crate::time::TimeAxis;

use super::TemporalAgg;

/// Running composite of one period for one cell.
///
/// NaN values are skipped by every rule. A period with no finite value
/// composites to NaN; for `sum` a period with at least one finite value sums
/// the finite ones (NaN days count as 0).
#[derive(Clone, Copy, Debug)]
pub struct PeriodAccumulator {
    rule: TemporalAgg,
    acc: f64,
    count: u32,
}

impl PeriodAccumulator {
    pub fn new(rule: TemporalAgg) -> Self {
        let acc = match rule {
            TemporalAgg::Min => f64::INFINITY,
            TemporalAgg::Max => f64::NEG_INFINITY,
            _ => 0.0,
        };
        Self { rule, acc, count: 0 }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if v.is_nan() {
            return;
        }
        self.count += 1;
        match self.rule {
            TemporalAgg::Min => self.acc = self.acc.min(v),
            TemporalAgg::Max => self.acc = self.acc.max(v),
            // static composites as a mean over whatever is supplied
            TemporalAgg::Mean | TemporalAgg::Sum | TemporalAgg::Static => self.acc += v,
        }
    }

    pub fn finish(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        match self.rule {
            TemporalAgg::Mean | TemporalAgg::Static => self.acc / self.count as f64,
            _ => self.acc,
        }
    }
}

/// Composites a daily series starting on the axis' first day into one value
/// per period. Periods past the end of the series are NaN.
pub fn aggregate_8day(daily: &[f64], axis: &TimeAxis, rule: TemporalAgg) -> Result<Vec<f64>> {
    if daily.is_empty() {
        return Err(Error::Domain("cannot aggregate an empty series".into()));
    }
    if daily.len() > axis.n_days() {
        return Err(Error::Domain(format!("series of {} days exceeds the {}-day axis", daily.len(), axis.n_days())));
    }
    let mut out = Vec::with_capacity(axis.len());
    let mut day = 0usize;
    for period in axis.entries() {
        let mut acc = PeriodAccumulator::new(rule);
        let end = (day + period.length_days as usize).min(daily.len());
        for &v in daily.get(day..end).unwrap_or(&[]) {
            acc.push(v);
        }
        out.push(acc.finish());
        day += period.length_days as usize;
    }
    Ok(out)
}
