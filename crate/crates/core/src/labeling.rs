//! Capacity, state of health, end of life and amp-hour RUL labels.
//!
//! Capacity is measured by coulomb counting reference (full) discharges. SOH
//! is `100 * capacity / nominal`. The aging axis is cumulative discharge
//! throughput in Ah, and RUL is the throughput left before SOH first reaches
//! the end-of-life threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{segment_cycles, CellSeries, CycleSegment, SegmentKind};

/// Manufacturer end-of-life threshold, percent of nominal capacity.
pub const EOL_THRESHOLD_PCT: f64 = 80.0;
/// Alternative end-of-life threshold used for NASA PCoE data.
pub const EOL_THRESHOLD_PCOE_PCT: f64 = 70.0;

pub const MAX_SOH_PCT: f64 = 120.0;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("segment [{start}, {end}) of `{segment_cell}` does not belong to cell `{cell}` with {len} samples")]
    SegmentOutOfRange {
        start: usize,
        end: usize,
        len: usize,
        segment_cell: String,
        cell: String,
    },
    #[error("cell `{0}` has no reference discharge")]
    NoReferenceDischarges(String),
    #[error("nominal capacity must be positive, got {0}")]
    NonPositiveNominal(f64),
    #[error("SOH {0} % outside (0, 120]")]
    SohOutOfRange(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub cumulative_discharge_ah: f64,
    pub capacity_ah: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SohPoint {
    pub cumulative_discharge_ah: f64,
    pub soh_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulTarget {
    pub cumulative_discharge_ah: f64,
    pub remaining_ah: f64,
}

/// Voltage span a discharge must cover to count as a reference discharge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullDischargeCriteria {
    pub v_high: f64,
    pub v_low: f64,
}

impl Default for FullDischargeCriteria {
    fn default() -> Self {
        Self {
            v_high: 4.0,
            v_low: 3.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eol {
    Reached { throughput_ah: f64 },
    NotReached,
}

impl Eol {
    pub fn throughput_ah(self) -> Option<f64> {
        match self {
            Eol::Reached { throughput_ah } => Some(throughput_ah),
            Eol::NotReached => None,
        }
    }
}

fn check_segment(series: &CellSeries, segment: &CycleSegment) -> Result<(), LabelError> {
    if segment.start_idx > segment.end_idx
        || segment.end_idx > series.len()
        || segment.cell_id != series.cell_id()
    {
        return Err(LabelError::SegmentOutOfRange {
            start: segment.start_idx,
            end: segment.end_idx,
            len: series.len(),
            segment_cell: segment.cell_id.clone(),
            cell: series.cell_id().to_owned(),
        });
    }
    Ok(())
}

/// Trapezoidal `∫|I| dt` over the segment's samples, in Ah.
pub fn coulomb_count(series: &CellSeries, segment: &CycleSegment) -> Result<f64, LabelError> {
    check_segment(series, segment)?;
    let samples = &series.samples()[segment.start_idx..segment.end_idx];
    let amp_seconds: f64 = samples
        .windows(2)
        .map(|w| 0.5 * (w[0].current_a.abs() + w[1].current_a.abs()) * (w[1].timestamp_s - w[0].timestamp_s))
        .sum();
    Ok(amp_seconds / 3600.0)
}

fn is_reference(series: &CellSeries, segment: &CycleSegment, criteria: FullDischargeCriteria) -> bool {
    let samples = &series.samples()[segment.start_idx..segment.end_idx];
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.voltage_v), hi.max(s.voltage_v))
    });
    hi > criteria.v_high && lo < criteria.v_low
}

/// One capacity point per reference discharge.
///
/// Throughput accumulates over every discharge segment, partial or full. A
/// point sits at the midpoint of its own discharge, where the capacity that
/// was actually counted applies when capacity fades during the measurement.
pub fn estimate_capacity_points(
    series: &CellSeries,
    segments: &[CycleSegment],
    criteria: FullDischargeCriteria,
) -> Result<Vec<CapacityPoint>, LabelError> {
    let mut points = Vec::new();
    let mut throughput = 0.0;
    for seg in segments.iter().filter(|s| s.kind == SegmentKind::Discharge) {
        let ah = coulomb_count(series, seg)?;
        if is_reference(series, seg, criteria) && ah > 0.0 {
            points.push(CapacityPoint {
                cumulative_discharge_ah: throughput + 0.5 * ah,
                capacity_ah: ah,
            });
        }
        throughput += ah;
    }
    if points.is_empty() {
        return Err(LabelError::NoReferenceDischarges(series.cell_id().to_owned()));
    }
    Ok(points)
}

/// `soh = 100 * capacity / nominal` for each point.
pub fn compute_soh(points: &[CapacityPoint], nominal_capacity_ah: f64) -> Result<Vec<SohPoint>, LabelError> {
    if !(nominal_capacity_ah > 0.0 && nominal_capacity_ah.is_finite()) {
        return Err(LabelError::NonPositiveNominal(nominal_capacity_ah));
    }
    points
        .iter()
        .map(|p| {
            let soh_pct = 100.0 * p.capacity_ah / nominal_capacity_ah;
            if !(soh_pct > 0.0 && soh_pct <= MAX_SOH_PCT) {
                return Err(LabelError::SohOutOfRange(soh_pct));
            }
            Ok(SohPoint {
                cumulative_discharge_ah: p.cumulative_discharge_ah,
                soh_pct,
            })
        })
        .collect()
}

/// Index of the first point at or below the threshold.
fn first_crossing(soh: &[SohPoint], threshold_pct: f64) -> Option<usize> {
    soh.iter().position(|p| p.soh_pct <= threshold_pct)
}

/// Throughput where SOH first reaches `threshold_pct`, linearly interpolated
/// between the bracketing points.
pub fn detect_eol(soh: &[SohPoint], threshold_pct: f64) -> Result<Eol, LabelError> {
    if soh.is_empty() {
        return Err(LabelError::EmptyInput);
    }
    let Some(j) = first_crossing(soh, threshold_pct) else {
        return Ok(Eol::NotReached);
    };
    let after = soh[j];
    if j == 0 || after.soh_pct == threshold_pct {
        return Ok(Eol::Reached {
            throughput_ah: after.cumulative_discharge_ah,
        });
    }
    let before = soh[j - 1];
    let frac = (before.soh_pct - threshold_pct) / (before.soh_pct - after.soh_pct);
    Ok(Eol::Reached {
        throughput_ah: before.cumulative_discharge_ah
            + frac * (after.cumulative_discharge_ah - before.cumulative_discharge_ah),
    })
}

/// `remaining = max(0, eol - query)` per query.
pub fn compute_rul_targets(eol_throughput_ah: f64, query_throughputs: &[f64]) -> Vec<RulTarget> {
    query_throughputs
        .iter()
        .map(|&q| RulTarget {
            cumulative_discharge_ah: q,
            remaining_ah: (eol_throughput_ah - q).max(0.0),
        })
        .collect()
}

/// Index of the last reference point strictly above the threshold before
/// the first crossing. `None` if SOH never reaches the threshold or the very
/// first point is already at or below it.
pub fn eol_point_index(soh: &[SohPoint], threshold_pct: f64) -> Option<usize> {
    first_crossing(soh, threshold_pct).and_then(|j| j.checked_sub(1))
}

/// Classic cycle-count RUL: reference discharges remaining between
/// `query_index` and `eol_index`. Only for comparison with cycle-based
/// literature; the toolkit's targets are in Ah.
pub fn cycle_rul_for_reference(soh: &[SohPoint], eol_index: usize, query_index: usize) -> Result<usize, LabelError> {
    if soh.is_empty() {
        return Err(LabelError::EmptyInput);
    }
    for index in [eol_index, query_index] {
        if index >= soh.len() {
            return Err(LabelError::IndexOutOfRange { index, len: soh.len() });
        }
    }
    Ok(eol_index.saturating_sub(query_index))
}

/// Settings for labeling a whole cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub threshold_pct: f64,
    pub deadband_a: f64,
    pub criteria: FullDischargeCriteria,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            threshold_pct: EOL_THRESHOLD_PCT,
            deadband_a: crate::ingest::DEFAULT_DEADBAND_A,
            criteria: FullDischargeCriteria::default(),
        }
    }
}

/// Everything the labeling stage derives for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLabels {
    pub cell_id: String,
    pub capacity_points: Vec<CapacityPoint>,
    pub soh: Vec<SohPoint>,
    pub eol: Eol,
    /// Cumulative discharge throughput at the end of each discharge segment.
    pub segment_throughputs: Vec<f64>,
    pub total_throughput_ah: f64,
}

/// One JSONL row of the labeled output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub cell_id: String,
    pub cumulative_discharge_ah: f64,
    pub soh_pct: Option<f64>,
    pub remaining_ah: f64,
}

pub fn label_cell(series: &CellSeries, config: &LabelConfig) -> Result<CellLabels, LabelError> {
    let segments = segment_cycles(series, config.deadband_a);
    let capacity_points = estimate_capacity_points(series, &segments, config.criteria)?;
    let soh = compute_soh(&capacity_points, series.nominal_capacity_ah())?;
    let eol = detect_eol(&soh, config.threshold_pct)?;
    let mut segment_throughputs = Vec::new();
    let mut acc = 0.0;
    for seg in segments.iter().filter(|s| s.kind == SegmentKind::Discharge) {
        acc += coulomb_count(series, seg)?;
        segment_throughputs.push(acc);
    }
    Ok(CellLabels {
        cell_id: series.cell_id().to_owned(),
        capacity_points,
        soh,
        eol,
        segment_throughputs,
        total_throughput_ah: acc,
    })
}

impl CellLabels {
    /// RUL targets at throughput 0, every discharge-segment end, every
    /// capacity point and the EOL itself, sorted by throughput. Records at
    /// capacity points carry their SOH. `None` for censored cells.
    pub fn records(&self) -> Option<Vec<LabelRecord>> {
        let eol = self.eol.throughput_ah()?;
        let mut queries: Vec<(f64, Option<f64>)> = Vec::with_capacity(self.segment_throughputs.len() + self.soh.len() + 2);
        queries.push((0.0, None));
        queries.extend(self.segment_throughputs.iter().map(|&q| (q, None)));
        queries.extend(self.soh.iter().map(|p| (p.cumulative_discharge_ah, Some(p.soh_pct))));
        queries.push((eol, None));
        queries.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.is_some().cmp(&a.1.is_some())));
        queries.dedup_by(|b, a| a.0 == b.0);
        let throughputs: Vec<f64> = queries.iter().map(|q| q.0).collect();
        let targets = compute_rul_targets(eol, &throughputs);
        Some(
            targets
                .into_iter()
                .zip(queries)
                .map(|(t, (_, soh_pct))| LabelRecord {
                    cell_id: self.cell_id.clone(),
                    cumulative_discharge_ah: t.cumulative_discharge_ah,
                    soh_pct,
                    remaining_ah: t.remaining_ah,
                })
                .collect(),
        )
    }
}

/// Groups JSONL records by cell into sorted target lists.
pub fn targets_by_cell(records: &[LabelRecord]) -> std::collections::BTreeMap<String, Vec<RulTarget>> {
    let mut map: std::collections::BTreeMap<String, Vec<RulTarget>> = Default::default();
    for r in records {
        map.entry(r.cell_id.clone()).or_default().push(RulTarget {
            cumulative_discharge_ah: r.cumulative_discharge_ah,
            remaining_ah: r.remaining_ah,
        });
    }
    for targets in map.values_mut() {
        targets.sort_by(|a, b| a.cumulative_discharge_ah.total_cmp(&b.cumulative_discharge_ah));
    }
    map
}

/// EOL throughput implied by a cell's targets: the largest `q + remaining`
/// over targets that have not yet clamped to zero.
pub fn eol_from_targets(targets: &[RulTarget]) -> Option<f64> {
    targets
        .iter()
        .filter(|t| t.remaining_ah > 0.0)
        .map(|t| t.cumulative_discharge_ah + t.remaining_ah)
        .reduce(f64::max)
}
