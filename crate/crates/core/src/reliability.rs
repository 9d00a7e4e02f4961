//! Krippendorff's alpha over windowed series.
//!
//! Raters are annotators (matrix rows), units are time windows (columns).
//! Cells may be missing; units with fewer than two values are not pairable
//! and drop out of the coincidence matrix.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ToolKind;
use crate::signal::{WindowMetric, WindowedSeries};

/// Bin count used when ordinal quantisation is switched on without an
/// explicit value.
pub const DEFAULT_ORDINAL_BINS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("a reliability matrix needs at least two raters, got {0}")]
    TooFewRaters(usize),
    #[error("rater {rater} has {found} units, expected {expected}")]
    RaggedMatrix {
        rater: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at rater {rater}, unit {unit}")]
    NonFiniteValue { rater: usize, unit: usize },
    #[error("no unit has two or more values")]
    NoPairableUnits,
    #[error("value {0} is not part of the coincidence matrix")]
    UnknownValue(f64),
    #[error("group {video}/{tool}/{metric} has {series} series, at least two are needed")]
    GroupTooSmall {
        video: String,
        tool: ToolKind,
        metric: WindowMetric,
        series: usize,
    },
    #[error("ordinal quantisation needs at least one bin")]
    InvalidBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MeasurementLevel {
    Nominal,
    Ordinal,
    Interval,
}

impl MeasurementLevel {
    /// Relative metrics compare as ordinal data, the window mean as interval.
    pub fn for_metric(metric: WindowMetric) -> Self {
        match metric {
            WindowMetric::Gradient | WindowMetric::Sum => MeasurementLevel::Ordinal,
            WindowMetric::Mean => MeasurementLevel::Interval,
        }
    }
}

impl fmt::Display for MeasurementLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasurementLevel::Nominal => "NOMINAL",
            MeasurementLevel::Ordinal => "ORDINAL",
            MeasurementLevel::Interval => "INTERVAL",
        })
    }
}

/// Raters × units table of optional values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityMatrix {
    rows: Vec<Vec<Option<f64>>>,
    units: usize,
}

impl ReliabilityMatrix {
    pub fn new(rows: Vec<Vec<Option<f64>>>) -> Result<Self, ReliabilityError> {
        if rows.len() < 2 {
            return Err(ReliabilityError::TooFewRaters(rows.len()));
        }
        let units = rows[0].len();
        for (rater, row) in rows.iter().enumerate() {
            if row.len() != units {
                return Err(ReliabilityError::RaggedMatrix {
                    rater,
                    expected: units,
                    found: row.len(),
                });
            }
            if let Some(unit) = row.iter().position(|v| v.is_some_and(|x| !x.is_finite())) {
                return Err(ReliabilityError::NonFiniteValue { rater, unit });
            }
        }
        Ok(ReliabilityMatrix { rows, units })
    }

    /// Builds a matrix from series of possibly different lengths; shorter
    /// series are padded with missing cells.
    pub fn from_series<'a>(
        series: impl IntoIterator<Item = &'a WindowedSeries>,
    ) -> Result<Self, ReliabilityError> {
        let mut rows: Vec<Vec<Option<f64>>> = series.into_iter().map(|s| s.values.clone()).collect();
        let units = rows.iter().map(Vec::len).max().unwrap_or(0);
        for row in &mut rows {
            row.resize(units, None);
        }
        Self::new(rows)
    }

    pub fn raters(&self) -> usize {
        self.rows.len()
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn unit_values(&self, unit: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter_map(move |row| row[unit])
    }

    /// Replaces every value by the index of its equal-width bin over the
    /// observed value range.
    pub fn quantised(&self, bins: usize) -> Result<Self, ReliabilityError> {
        if bins == 0 {
            return Err(ReliabilityError::InvalidBins);
        }
        let (lo, hi) = self
            .rows
            .iter()
            .flatten()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let width = hi - lo;
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        cell.map(|v| {
                            if width > 0.0 {
                                (((v - lo) / width * bins as f64).floor() as usize).min(bins - 1) as f64
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(ReliabilityMatrix {
            rows,
            units: self.units,
        })
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

fn canonical(v: f64) -> f64 {
    // folds -0.0 into 0.0
    v + 0.0
}

/// Symmetric matrix of within-unit value pairings.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMatrix {
    values: Vec<f64>,
    cells: Vec<Vec<f64>>,
    pairable_units: usize,
    pairable_values: usize,
}

impl CoincidenceMatrix {
    /// Distinct pairable values, ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> &[Vec<f64>] {
        &self.cells
    }

    pub fn index_of(&self, value: f64) -> Option<usize> {
        let value = canonical(value);
        self.values.binary_search_by(|v| v.total_cmp(&value)).ok()
    }

    pub fn get(&self, c: f64, k: f64) -> f64 {
        match (self.index_of(c), self.index_of(k)) {
            (Some(i), Some(j)) => self.cells[i][j],
            _ => 0.0,
        }
    }

    /// Row sums `n_c`.
    pub fn marginals(&self) -> Vec<f64> {
        self.cells.iter().map(|row| row.iter().sum()).collect()
    }

    /// Total mass `n`, the number of pairable values.
    pub fn total(&self) -> usize {
        self.pairable_values
    }

    pub fn pairable_units(&self) -> usize {
        self.pairable_units
    }
}

pub fn coincidence_matrix(m: &ReliabilityMatrix) -> Result<CoincidenceMatrix, ReliabilityError> {
    let mut values: Vec<f64> = m.rows.iter().flatten().flatten().map(|&v| canonical(v)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let d = values.len();
    let index = |v: f64| {
        values
            .binary_search_by(|x| x.total_cmp(&canonical(v)))
            .expect("value collected above")
    };

    let mut cells = vec![vec![0.0; d]; d];
    let mut pairable_units = 0;
    let mut pairable_values = 0;
    let mut unit: Vec<usize> = Vec::with_capacity(m.raters());
    for u in 0..m.units {
        unit.clear();
        unit.extend(m.unit_values(u).map(index));
        let mu = unit.len();
        if mu < 2 {
            continue;
        }
        pairable_units += 1;
        pairable_values += mu;
        let weight = 1.0 / (mu - 1) as f64;
        for (a, &c) in unit.iter().enumerate() {
            for (b, &k) in unit.iter().enumerate() {
                if a != b {
                    cells[c][k] += weight;
                }
            }
        }
    }
    if pairable_units == 0 {
        return Err(ReliabilityError::NoPairableUnits);
    }

    // Keep only values that occur in pairable units.
    let keep: Vec<usize> = (0..d).filter(|&i| cells[i].iter().any(|&x| x > 0.0)).collect();
    let cells = keep
        .iter()
        .map(|&i| keep.iter().map(|&j| cells[i][j]).collect())
        .collect();
    let values = keep.iter().map(|&i| values[i]).collect();
    Ok(CoincidenceMatrix {
        values,
        cells,
        pairable_units,
        pairable_values,
    })
}

/// Distinct values with their coincidence marginals, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    values: Vec<f64>,
    counts: Vec<f64>,
    // prefix[i] = counts[0] + .. + counts[i - 1]
    prefix: Vec<f64>,
}

impl Marginals {
    pub fn new(values: Vec<f64>, counts: Vec<f64>) -> Self {
        assert_eq!(values.len(), counts.len(), "one count per value");
        let mut prefix = Vec::with_capacity(counts.len() + 1);
        prefix.push(0.0);
        let mut acc = CompensatedSum::default();
        for &n in &counts {
            acc.add(n);
            prefix.push(acc.value());
        }
        Marginals {
            values,
            counts,
            prefix,
        }
    }

    pub fn of(cm: &CoincidenceMatrix) -> Self {
        Self::new(cm.values.clone(), cm.marginals())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    fn index_of(&self, v: f64) -> Result<usize, ReliabilityError> {
        let v = canonical(v);
        self.values
            .binary_search_by(|x| x.total_cmp(&v))
            .map_err(|_| ReliabilityError::UnknownValue(v))
    }

    fn delta_at(&self, level: MeasurementLevel, i: usize, j: usize) -> f64 {
        match level {
            MeasurementLevel::Nominal => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
            MeasurementLevel::Interval => {
                let d = self.values[i] - self.values[j];
                d * d
            }
            MeasurementLevel::Ordinal => {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                let between = self.prefix[hi + 1] - self.prefix[lo];
                let d = between - (self.counts[lo] + self.counts[hi]) / 2.0;
                d * d
            }
        }
    }
}

/// Difference function `δ(c, k)` for the given level of measurement.
pub fn delta(
    level: MeasurementLevel,
    c: f64,
    k: f64,
    marginals: &Marginals,
) -> Result<f64, ReliabilityError> {
    if level == MeasurementLevel::Interval {
        let d = c - k;
        return Ok(d * d);
    }
    let i = marginals.index_of(c)?;
    let j = marginals.index_of(k)?;
    Ok(marginals.delta_at(level, i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    /// Total coincidence mass `n`.
    pub n_pairable: usize,
    pub pairable_units: usize,
    pub level: MeasurementLevel,
    /// Every pairable value is identical; alpha is undefined and reported as
    /// 1.
    pub degenerate: bool,
}

pub fn krippendorff_alpha(
    m: &ReliabilityMatrix,
    level: MeasurementLevel,
) -> Result<AlphaResult, ReliabilityError> {
    let cm = coincidence_matrix(m)?;
    let marginals = Marginals::of(&cm);
    let d = cm.values.len();
    let n = cm.pairable_values as f64;

    let mut observed = CompensatedSum::default();
    let mut expected = CompensatedSum::default();
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let delta = marginals.delta_at(level, i, j);
            observed.add(cm.cells[i][j] * delta);
            expected.add(marginals.counts[i] * marginals.counts[j] * delta);
        }
    }
    let d_o = observed.value() / n;
    let d_e = expected.value() / (n * (n - 1.0));

    let (alpha, degenerate) = if d_e == 0.0 {
        (1.0, true)
    } else {
        (1.0 - d_o / d_e, false)
    };
    Ok(AlphaResult {
        alpha,
        observed_disagreement: d_o,
        expected_disagreement: d_e,
        n_pairable: cm.pairable_values,
        pairable_units: cm.pairable_units,
        level,
        degenerate,
    })
}

/// One (video, tool, metric) cell of an agreement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub video_id: String,
    pub tool: ToolKind,
    pub metric: WindowMetric,
    pub raters: usize,
    pub units: usize,
    pub result: AlphaResult,
}

/// Alpha for one group of series. `ordinal_bins` quantises ordinal data.
pub fn agreement_cell(
    video_id: &str,
    tool: ToolKind,
    metric: WindowMetric,
    series: &[&WindowedSeries],
    ordinal_bins: Option<usize>,
) -> Result<AgreementCell, ReliabilityError> {
    if series.len() < 2 {
        return Err(ReliabilityError::GroupTooSmall {
            video: video_id.to_string(),
            tool,
            metric,
            series: series.len(),
        });
    }
    let level = MeasurementLevel::for_metric(metric);
    let mut matrix = ReliabilityMatrix::from_series(series.iter().copied())?;
    if let (MeasurementLevel::Ordinal, Some(bins)) = (level, ordinal_bins) {
        matrix = matrix.quantised(bins)?;
    }
    let result = krippendorff_alpha(&matrix, level)?;
    Ok(AgreementCell {
        video_id: video_id.to_string(),
        tool,
        metric,
        raters: matrix.raters(),
        units: matrix.units(),
        result,
    })
}

/// Groups `series` of the given metric by (video, tool) and computes one
/// alpha per group, ordered by video then tool.
pub fn agreement_report(
    series: &[WindowedSeries],
    metric: WindowMetric,
    ordinal_bins: Option<usize>,
) -> Result<Vec<AgreementCell>, ReliabilityError> {
    group_series(series, metric)
        .into_iter()
        .map(|((video, tool), members)| agreement_cell(&video, tool, metric, &members, ordinal_bins))
        .collect()
}

/// Series of `metric` keyed by (video, tool), in key order.
pub fn group_series(
    series: &[WindowedSeries],
    metric: WindowMetric,
) -> BTreeMap<(String, ToolKind), Vec<&WindowedSeries>> {
    let mut groups: BTreeMap<(String, ToolKind), Vec<&WindowedSeries>> = BTreeMap::new();
    for s in series.iter().filter(|s| s.metric == metric) {
        groups.entry((s.video_id.clone(), s.tool)).or_default().push(s);
    }
    groups
}

/// Total order used to sort alpha results deterministically.
pub fn compare_cells(a: &AgreementCell, b: &AgreementCell) -> Ordering {
    (&a.video_id, a.tool, a.metric).cmp(&(&b.video_id, b.tool, b.metric))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[Option<f64>]]) -> ReliabilityMatrix {
        ReliabilityMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn full(rows: &[&[f64]]) -> ReliabilityMatrix {
        ReliabilityMatrix::new(rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect())
            .unwrap()
    }

    #[test]
    fn perfect_agreement_coincidences() {
        let m = full(&[&[2.0; 4], &[2.0; 4]]);
        let cm = coincidence_matrix(&m).unwrap();
        assert_eq!(cm.values(), &[2.0]);
        assert_eq!(cm.cells(), &[vec![8.0]]);
        assert_eq!(cm.total(), 8);
        let r = krippendorff_alpha(&m, MeasurementLevel::Interval).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.alpha, 1.0);
    }

    #[test]
    fn systematic_disagreement() {
        let m = full(&[&[0.0; 4], &[1.0; 4]]);
        let cm = coincidence_matrix(&m).unwrap();
        assert_eq!(cm.get(0.0, 1.0), 4.0);
        assert_eq!(cm.get(1.0, 0.0), 4.0);
        assert_eq!(cm.get(0.0, 0.0), 0.0);
        let r = krippendorff_alpha(&m, MeasurementLevel::Nominal).unwrap();
        assert_eq!(r.observed_disagreement, 1.0);
        assert!((r.expected_disagreement - 32.0 / 56.0).abs() < 1e-15);
        assert!((r.alpha + 0.75).abs() < 1e-12);
    }

    #[test]
    fn lone_values_are_not_pairable() {
        let m = matrix(&[&[Some(1.0), Some(3.0)], &[Some(1.0), None]]);
        let cm = coincidence_matrix(&m).unwrap();
        assert_eq!(cm.values(), &[1.0]);
        assert_eq!(cm.pairable_units(), 1);
        let m = matrix(&[&[Some(1.0), None], &[None, Some(2.0)]]);
        assert_eq!(coincidence_matrix(&m).unwrap_err(), ReliabilityError::NoPairableUnits);
    }

    #[test]
    fn delta_examples() {
        let marg = Marginals::new(vec![1.0, 2.0, 3.0], vec![4.0, 2.0, 4.0]);
        assert_eq!(delta(MeasurementLevel::Nominal, 2.0, 2.0, &marg).unwrap(), 0.0);
        assert_eq!(delta(MeasurementLevel::Nominal, 1.0, 2.0, &marg).unwrap(), 1.0);
        assert!((delta(MeasurementLevel::Interval, 0.2, 0.5, &marg).unwrap() - 0.09).abs() < 1e-15);
        assert_eq!(delta(MeasurementLevel::Ordinal, 1.0, 3.0, &marg).unwrap(), 36.0);
        assert_eq!(delta(MeasurementLevel::Ordinal, 3.0, 1.0, &marg).unwrap(), 36.0);
        assert_eq!(delta(MeasurementLevel::Ordinal, 1.0, 2.0, &marg).unwrap(), 9.0);
        assert!(matches!(
            delta(MeasurementLevel::Ordinal, 7.0, 1.0, &marg),
            Err(ReliabilityError::UnknownValue(_))
        ));
    }

    #[test]
    fn matrix_shape_errors() {
        assert_eq!(
            ReliabilityMatrix::new(vec![vec![Some(1.0)]]).unwrap_err(),
            ReliabilityError::TooFewRaters(1)
        );
        assert!(matches!(
            ReliabilityMatrix::new(vec![vec![Some(1.0)], vec![]]),
            Err(ReliabilityError::RaggedMatrix { .. })
        ));
        assert!(matches!(
            ReliabilityMatrix::new(vec![vec![Some(f64::NAN)], vec![None]]),
            Err(ReliabilityError::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn quantisation_bins_range() {
        let m = full(&[&[0.0, 0.5, 1.0], &[0.25, 0.99, 0.0]]);
        let q = m.quantised(4).unwrap();
        assert_eq!(q.rows()[0], vec![Some(0.0), Some(2.0), Some(3.0)]);
        assert_eq!(q.rows()[1], vec![Some(1.0), Some(3.0), Some(0.0)]);
        assert_eq!(m.quantised(0).unwrap_err(), ReliabilityError::InvalidBins);
    }

    #[test]
    fn report_groups_and_rejects_singletons() {
        let s = |video: &str, vals: &[f64]| WindowedSeries {
            trace_id: format!("x/{video}"),
            video_id: video.into(),
            tool: ToolKind::BTrace,
            metric: WindowMetric::Sum,
            values: vals.iter().map(|&v| Some(v)).collect(),
        };
        let series = vec![s("b", &[1.0, 0.0]), s("a", &[1.0, -1.0]), s("a", &[1.0, -1.0]), s("b", &[1.0, 0.0])];
        let report = agreement_report(&series, WindowMetric::Sum, None).unwrap();
        assert_eq!(report.len(), 2);
        assert_eq!(report[0].video_id, "a");
        assert!(report.iter().all(|c| c.result.alpha == 1.0 && c.raters == 2));

        let err = agreement_report(&series[..2], WindowMetric::Sum, None).unwrap_err();
        assert!(matches!(err, ReliabilityError::GroupTooSmall { series: 1, .. }));
    }
}
