//! Synthetic cells with a known capacity-fade law.
//!
//! The simulator is a ground-truth generator, not an electrochemical model.
//! Every cell follows
//!
//! ```text
//! capacity(q) = nominal * max(0, 1 - fade_per_ah * q)
//! ```
//!
//! where `q` is cumulative discharge throughput in amp-hours. The cell is
//! driven through constant-current phases separated by rests. Within a phase
//! the state of charge is advanced in closed form (capacity changes during a
//! discharge, so SOC is the integral of `I / capacity(q)`), which keeps SOC
//! exactly inside `[0, 1]` and makes a coulomb count of any emitted discharge
//! segment equal the simulator's own throughput counter.
//!
//! Terminal voltage is `ocv(soc) + I * R(q)` with a synthetic piecewise-linear
//! OCV curve and a resistance that grows as capacity fades. Temperature is
//! ambient plus a steady-state Joule-heating rise. All three signals get
//! independent Gaussian measurement noise.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CellSeries, RawSample};

/// Synthetic OCV anchor points `(soc, volts)`.
pub const OCV_ANCHORS: [(f64, f64); 4] = [(0.0, 3.0), (0.1, 3.5), (0.9, 4.0), (1.0, 4.2)];

/// Simulation stops once capacity falls to this fraction of nominal.
pub const END_OF_SIMULATION_SOH: f64 = 0.6;

/// Time between the closing sample of one phase and the first sample of the
/// next. Keeps timestamps strictly increasing across current steps.
pub const PHASE_GAP_S: f64 = 1e-3;

/// Partial-cycle discharge currents are drawn from
/// `(MIN_DISCHARGE_FRACTION * max, max]`.
pub const MIN_DISCHARGE_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("simulated series rejected: {0}")]
    Series(#[from] crate::ingest::IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// Full CC discharge to empty, full CC charge, repeat. Every discharge is a
    /// reference discharge.
    ConstantCurrent,
    /// Random partial charge/discharge half-cycles with periodic full
    /// reference cycles interleaved.
    RandomizedPartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocBounds {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStd {
    pub voltage_v: f64,
    pub current_a: f64,
    pub temperature_c: f64,
}

impl NoiseStd {
    pub const ZERO: NoiseStd = NoiseStd {
        voltage_v: 0.0,
        current_a: 0.0,
        temperature_c: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub cell_id: String,
    pub nominal_capacity_ah: f64,
    /// Fraction of nominal capacity lost per Ah of discharge throughput.
    pub fade_per_ah: f64,
    pub profile: Profile,
    pub charge_rate_a: f64,
    pub max_discharge_rate_a: f64,
    pub soc_bounds: SocBounds,
    pub noise_std: NoiseStd,
    pub ambient_temp_c: f64,
    pub sample_period_s: f64,
    pub seed: u64,
    /// Discharge throughput between reference cycles (RandomizedPartial only).
    pub reference_interval_ah: f64,
    pub reference_current_a: f64,
    pub rest_s: f64,
    pub internal_resistance_ohm: f64,
    /// Relative resistance increase per unit of lost SOH fraction.
    pub resistance_growth: f64,
    pub thermal_resistance_k_per_w: f64,
    pub max_duration_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cell_id: "sim-000".to_owned(),
            nominal_capacity_ah: 2.0,
            fade_per_ah: 0.004,
            profile: Profile::RandomizedPartial,
            charge_rate_a: 1.0,
            max_discharge_rate_a: 2.0,
            soc_bounds: SocBounds {
                low: 0.2,
                high: 0.9,
            },
            noise_std: NoiseStd {
                voltage_v: 0.002,
                current_a: 0.005,
                temperature_c: 0.05,
            },
            ambient_temp_c: 25.0,
            sample_period_s: 10.0,
            seed: 0,
            reference_interval_ah: 10.0,
            reference_current_a: 1.0,
            rest_s: 600.0,
            internal_resistance_ohm: 0.05,
            resistance_growth: 1.0,
            thermal_resistance_k_per_w: 10.0,
            max_duration_s: 1e8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        let finite = [
            self.nominal_capacity_ah,
            self.fade_per_ah,
            self.charge_rate_a,
            self.max_discharge_rate_a,
            self.soc_bounds.low,
            self.soc_bounds.high,
            self.noise_std.voltage_v,
            self.noise_std.current_a,
            self.noise_std.temperature_c,
            self.ambient_temp_c,
            self.sample_period_s,
            self.reference_interval_ah,
            self.reference_current_a,
            self.rest_s,
            self.internal_resistance_ohm,
            self.resistance_growth,
            self.thermal_resistance_k_per_w,
            self.max_duration_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all numeric fields must be finite".into());
        }
        if self.nominal_capacity_ah <= 0.0 {
            return bad(format!("nominal_capacity_ah = {}", self.nominal_capacity_ah));
        }
        if self.fade_per_ah < 0.0 {
            return bad(format!("fade_per_ah = {}", self.fade_per_ah));
        }
        let SocBounds { low, high } = self.soc_bounds;
        if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low >= high {
            return bad(format!("soc_bounds = ({low}, {high})"));
        }
        if self.sample_period_s <= 0.0 {
            return bad(format!("sample_period_s = {}", self.sample_period_s));
        }
        for (name, v) in [
            ("charge_rate_a", self.charge_rate_a),
            ("max_discharge_rate_a", self.max_discharge_rate_a),
            ("reference_current_a", self.reference_current_a),
            ("reference_interval_ah", self.reference_interval_ah),
            ("max_duration_s", self.max_duration_s),
        ] {
            if v <= 0.0 {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("noise_std.voltage_v", self.noise_std.voltage_v),
            ("noise_std.current_a", self.noise_std.current_a),
            ("noise_std.temperature_c", self.noise_std.temperature_c),
            ("rest_s", self.rest_s),
            ("internal_resistance_ohm", self.internal_resistance_ohm),
            ("resistance_growth", self.resistance_growth),
            ("thermal_resistance_k_per_w", self.thermal_resistance_k_per_w),
        ] {
            if v < 0.0 {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(-30.0..=80.0).contains(&self.ambient_temp_c) {
            return bad(format!("ambient_temp_c = {}", self.ambient_temp_c));
        }
        Ok(())
    }

    /// Closed-form capacity after `throughput_ah` of discharge.
    pub fn capacity_at(&self, throughput_ah: f64) -> f64 {
        self.nominal_capacity_ah * (1.0 - self.fade_per_ah * throughput_ah).max(0.0)
    }

    /// Closed-form throughput at which SOH reaches `soh_pct`, if the cell fades.
    pub fn throughput_at_soh(&self, soh_pct: f64) -> Option<f64> {
        (self.fade_per_ah > 0.0).then(|| (1.0 - soh_pct / 100.0) / self.fade_per_ah)
    }

    fn resistance_at(&self, capacity_ah: f64) -> f64 {
        let lost = 1.0 - capacity_ah / self.nominal_capacity_ah;
        self.internal_resistance_ohm * (1.0 + self.resistance_growth * lost)
    }
}

/// Piecewise-linear open-circuit voltage through [`OCV_ANCHORS`].
pub fn ocv(soc: f64) -> f64 {
    let soc = soc.clamp(0.0, 1.0);
    for pair in OCV_ANCHORS.windows(2) {
        let ((s0, v0), (s1, v1)) = (pair[0], pair[1]);
        if soc <= s1 {
            return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
        }
    }
    OCV_ANCHORS[OCV_ANCHORS.len() - 1].1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub cumulative_discharge_ah: f64,
    pub capacity_ah: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub series: CellSeries,
    /// Capacity at every phase boundary where throughput changed.
    pub true_capacity_trace: Vec<TruthPoint>,
    /// Noise-free state of charge at each emitted sample.
    pub true_soc: Vec<f64>,
}

impl SimResult {
    /// The simulator's internal discharge throughput counter at the end of the run.
    pub fn discharge_throughput_ah(&self) -> f64 {
        self.true_capacity_trace
            .last()
            .map_or(0.0, |p| p.cumulative_discharge_ah)
    }

    /// Piecewise-linear lookup in the truth trace.
    pub fn true_capacity_at(&self, throughput_ah: f64) -> f64 {
        let trace = &self.true_capacity_trace;
        if throughput_ah <= trace[0].cumulative_discharge_ah {
            return trace[0].capacity_ah;
        }
        for pair in trace.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if throughput_ah <= b.cumulative_discharge_ah {
                let span = b.cumulative_discharge_ah - a.cumulative_discharge_ah;
                if span <= 0.0 {
                    return b.capacity_ah;
                }
                let w = (throughput_ah - a.cumulative_discharge_ah) / span;
                return a.capacity_ah + w * (b.capacity_ah - a.capacity_ah);
            }
        }
        trace[trace.len() - 1].capacity_ah
    }

    pub fn write_truth_csv<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        let mut buf = String::from("cumulative_discharge_ah,capacity_ah\n");
        for p in &self.true_capacity_trace {
            buf.push_str(&format!("{},{}\n", p.cumulative_discharge_ah, p.capacity_ah));
        }
        sink.write_all(buf.as_bytes())
    }
}

struct Simulator<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    noise: [Option<Normal<f64>>; 3],
    t: f64,
    soc: f64,
    throughput_ah: f64,
    samples: Vec<RawSample>,
    soc_trace: Vec<f64>,
    truth: Vec<TruthPoint>,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let normal = |std: f64| (std > 0.0).then(|| Normal::new(0.0, std).expect("std validated"));
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            noise: [
                normal(cfg.noise_std.voltage_v),
                normal(cfg.noise_std.current_a),
                normal(cfg.noise_std.temperature_c),
            ],
            t: 0.0,
            soc: 1.0,
            throughput_ah: 0.0,
            samples: Vec::new(),
            soc_trace: Vec::new(),
            truth: vec![TruthPoint {
                cumulative_discharge_ah: 0.0,
                capacity_ah: cfg.nominal_capacity_ah,
            }],
        }
    }

    fn capacity(&self) -> f64 {
        self.cfg.capacity_at(self.throughput_ah)
    }

    fn finished(&self) -> bool {
        self.t >= self.cfg.max_duration_s
            || self.capacity() <= END_OF_SIMULATION_SOH * self.cfg.nominal_capacity_ah
    }

    fn emit(&mut self, t: f64, soc: f64, current_a: f64, capacity_ah: f64) {
        let r = self.cfg.resistance_at(capacity_ah);
        let mut v = ocv(soc) + current_a * r;
        let mut i = current_a;
        let mut temp = self.cfg.ambient_temp_c + self.cfg.thermal_resistance_k_per_w * current_a * current_a * r;
        for (k, value) in [&mut v, &mut i, &mut temp].into_iter().enumerate() {
            if let Some(dist) = &self.noise[k] {
                *value += dist.sample(&mut self.rng);
            }
        }
        self.samples.push(RawSample {
            timestamp_s: t,
            voltage_v: v,
            current_a: i,
            temperature_c: temp,
        });
        self.soc_trace.push(soc);
    }

    /// Sample times within a phase of length `duration`: every sample period
    /// plus a closing sample at exactly `duration`.
    fn phase_offsets(&self, duration: f64) -> Vec<f64> {
        let dt = self.cfg.sample_period_s;
        let mut offsets = Vec::new();
        let mut k = 0u64;
        loop {
            let tau = k as f64 * dt;
            if tau >= duration - PHASE_GAP_S {
                break;
            }
            offsets.push(tau);
            k += 1;
        }
        offsets.push(duration);
        offsets
    }

    fn advance_clock(&mut self, duration: f64) {
        self.t += duration + PHASE_GAP_S;
    }

    fn rest(&mut self) {
        if self.cfg.rest_s < 2.0 * PHASE_GAP_S {
            return;
        }
        let cap = self.capacity();
        for tau in self.phase_offsets(self.cfg.rest_s) {
            self.emit(self.t + tau, self.soc, 0.0, cap);
        }
        self.advance_clock(self.cfg.rest_s);
    }

    /// Constant-current charge to `target` (> soc). Capacity is constant
    /// because fade is driven by discharge throughput only.
    fn charge(&mut self, current_a: f64, target: f64) {
        let target = target.min(1.0);
        let cap = self.capacity();
        if target <= self.soc || cap <= 0.0 {
            return;
        }
        let duration = (target - self.soc) * cap * 3600.0 / current_a;
        if duration < 2.0 * PHASE_GAP_S {
            return;
        }
        let s0 = self.soc;
        for tau in self.phase_offsets(duration) {
            let soc = if tau == duration {
                target
            } else {
                s0 + current_a * tau / (3600.0 * cap)
            };
            self.emit(self.t + tau, soc, current_a, cap);
        }
        self.soc = target;
        self.advance_clock(duration);
    }

    /// Constant-current discharge to `target` (< soc), integrating
    /// `dsoc/dq = -1 / capacity(q)` exactly.
    fn discharge(&mut self, current_a: f64, target: f64) {
        let target = target.max(0.0);
        if target >= self.soc || self.capacity() <= 0.0 {
            return;
        }
        let cfg = self.cfg;
        let (q0, s0) = (self.throughput_ah, self.soc);
        let c0 = self.capacity();
        let k = cfg.nominal_capacity_ah * cfg.fade_per_ah;
        let q_end = if k > 0.0 {
            let c_end = c0 * (-k * (s0 - target)).exp();
            (1.0 - c_end / cfg.nominal_capacity_ah) / cfg.fade_per_ah
        } else {
            q0 + (s0 - target) * c0
        };
        let duration = (q_end - q0) * 3600.0 / current_a;
        if duration < 2.0 * PHASE_GAP_S {
            return;
        }
        let soc_at = |q: f64| -> f64 {
            if k > 0.0 {
                let c = cfg.capacity_at(q);
                s0 - (c0 / c).ln() / k
            } else {
                s0 - (q - q0) / c0
            }
        };
        for tau in self.phase_offsets(duration) {
            let (q, soc) = if tau == duration {
                (q_end, target)
            } else {
                let q = q0 + current_a * tau / 3600.0;
                (q, soc_at(q).clamp(0.0, 1.0))
            };
            self.emit(self.t + tau, soc, -current_a, cfg.capacity_at(q));
        }
        self.soc = target;
        self.throughput_ah = q_end;
        self.truth.push(TruthPoint {
            cumulative_discharge_ah: q0,
            capacity_ah: c0,
        });
        self.truth.push(TruthPoint {
            cumulative_discharge_ah: q_end,
            capacity_ah: cfg.capacity_at(q_end),
        });
        self.advance_clock(duration);
    }

    fn reference_cycle(&mut self) {
        self.charge(self.cfg.charge_rate_a, 1.0);
        self.rest();
        self.discharge(self.cfg.reference_current_a, 0.0);
        self.rest();
    }

    fn run(mut self) -> Result<SimResult, SimError> {
        let cfg = self.cfg;
        match cfg.profile {
            Profile::ConstantCurrent => {
                while !self.finished() {
                    self.discharge(cfg.max_discharge_rate_a, 0.0);
                    self.rest();
                    if self.finished() {
                        break;
                    }
                    self.charge(cfg.charge_rate_a, 1.0);
                    self.rest();
                }
            }
            Profile::RandomizedPartial => {
                self.discharge(cfg.reference_current_a, 0.0);
                self.rest();
                let mut last_reference = self.throughput_ah;
                loop {
                    if self.t >= cfg.max_duration_s {
                        break;
                    }
                    let faded = self.capacity() <= END_OF_SIMULATION_SOH * cfg.nominal_capacity_ah;
                    if faded || self.throughput_ah - last_reference >= cfg.reference_interval_ah {
                        // The cycle after the fade limit guarantees a final
                        // capacity measurement below it.
                        self.reference_cycle();
                        last_reference = self.throughput_ah;
                        if faded {
                            break;
                        }
                        continue;
                    }
                    let target = self.rng.random_range(cfg.soc_bounds.low..=cfg.soc_bounds.high);
                    if target < self.soc {
                        let lo = MIN_DISCHARGE_FRACTION * cfg.max_discharge_rate_a;
                        let current = self.rng.random_range(lo..=cfg.max_discharge_rate_a);
                        self.discharge(current, target);
                    } else {
                        self.charge(cfg.charge_rate_a, target);
                    }
                    self.rest();
                }
            }
        }
        dedup_truth(&mut self.truth);
        let series = CellSeries::new(cfg.cell_id.clone(), self.samples, cfg.nominal_capacity_ah)?;
        Ok(SimResult {
            series,
            true_capacity_trace: self.truth,
            true_soc: self.soc_trace,
        })
    }
}

fn dedup_truth(trace: &mut Vec<TruthPoint>) {
    trace.dedup_by(|b, a| a.cumulative_discharge_ah == b.cumulative_discharge_ah);
}

/// Runs one deterministic simulation.
pub fn simulate_cell(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    Simulator::new(config).run()
}

/// SplitMix64 finalizer over the fleet seed and cell index.
pub fn derive_cell_seed(fleet_seed: u64, index: usize) -> u64 {
    let mut z = fleet_seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fleet_cell_id(index: usize) -> String {
    format!("sim-{index:03}")
}

/// Per-cell config for fleet member `index`: fade within ±10%, charge and
/// discharge rates within ±20%, ambient temperature within ±5 °C.
pub fn jitter_config(base: &SimConfig, fleet_seed: u64, index: usize) -> SimConfig {
    let seed = derive_cell_seed(fleet_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A09_E667_F3BC_C908);
    let mut cfg = base.clone();
    cfg.cell_id = fleet_cell_id(index);
    cfg.seed = seed;
    cfg.fade_per_ah *= rng.random_range(0.9..=1.1);
    cfg.charge_rate_a *= rng.random_range(0.8..=1.2);
    cfg.max_discharge_rate_a *= rng.random_range(0.8..=1.2);
    cfg.ambient_temp_c += rng.random_range(-5.0..=5.0);
    cfg
}

/// Simulates `n_cells` jittered variants of `base`. Cells are generated in
/// parallel; each depends only on its own derived seed.
pub fn simulate_fleet(base: &SimConfig, n_cells: usize, seed: u64) -> Result<Vec<SimResult>, SimError> {
    if n_cells == 0 {
        return Err(SimError::InvalidConfig("n_cells must be at least 1".into()));
    }
    base.validate()?;
    (0..n_cells)
        .into_par_iter()
        .map(|i| simulate_cell(&jitter_config(base, seed, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SegmentKind;

    fn quiet(profile: Profile) -> SimConfig {
        SimConfig {
            profile,
            noise_std: NoiseStd::ZERO,
            ..SimConfig::default()
        }
    }

    fn trapezoid_discharge_ah(series: &CellSeries) -> f64 {
        series
            .samples()
            .windows(2)
            .map(|w| {
                let dt = w[1].timestamp_s - w[0].timestamp_s;
                0.5 * ((-w[0].current_a).max(0.0) + (-w[1].current_a).max(0.0)) * dt
            })
            .sum::<f64>()
            / 3600.0
    }

    #[test]
    fn ocv_hits_anchors_and_is_monotone() {
        for (s, v) in OCV_ANCHORS {
            assert!((ocv(s) - v).abs() < 1e-12);
        }
        let mut prev = ocv(0.0);
        for k in 1..=1000 {
            let v = ocv(k as f64 / 1000.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn zero_fade_keeps_capacity_at_nominal() {
        let cfg = SimConfig {
            fade_per_ah: 0.0,
            max_duration_s: 200_000.0,
            ..quiet(Profile::RandomizedPartial)
        };
        let r = simulate_cell(&cfg).unwrap();
        assert!(r
            .true_capacity_trace
            .iter()
            .all(|p| p.capacity_ah == cfg.nominal_capacity_ah));
        assert!(r.discharge_throughput_ah() > 10.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SimConfig {
            max_duration_s: 300_000.0,
            ..SimConfig::default()
        };
        let a = simulate_cell(&cfg).unwrap();
        let b = simulate_cell(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn closed_form_fade_at_two_hundred_ah() {
        // 2.0 * (1 - 0.001 * 200) = 1.6 Ah, i.e. SOH 80 %.
        let cfg = SimConfig {
            fade_per_ah: 0.001,
            ..quiet(Profile::ConstantCurrent)
        };
        assert!((cfg.capacity_at(200.0) - 1.6).abs() < 1e-12);
        let r = simulate_cell(&cfg).unwrap();
        assert!((r.true_capacity_at(200.0) - 1.6).abs() < 1e-9);

        // Walk the emitted current trace until 200 Ah of discharge and
        // compare against the simulator's own counter at that instant.
        let samples = r.series.samples();
        let mut acc = 0.0;
        let mut idx = 0;
        for (k, w) in samples.windows(2).enumerate() {
            let dt = w[1].timestamp_s - w[0].timestamp_s;
            acc += 0.5 * ((-w[0].current_a).max(0.0) + (-w[1].current_a).max(0.0)) * dt / 3600.0;
            if acc >= 200.0 {
                idx = k + 1;
                break;
            }
        }
        assert!(idx > 0);
        assert!((r.true_capacity_at(acc) - 1.6).abs() / 1.6 < 1e-3);
    }

    #[test]
    fn soc_stays_in_unit_interval() {
        for profile in [Profile::ConstantCurrent, Profile::RandomizedPartial] {
            let r = simulate_cell(&quiet(profile)).unwrap();
            assert!(r.true_soc.iter().all(|&s| (-1e-9..=1.0 + 1e-9).contains(&s)));
        }
    }

    #[test]
    fn emitted_current_matches_internal_counter() {
        for profile in [Profile::ConstantCurrent, Profile::RandomizedPartial] {
            let r = simulate_cell(&quiet(profile)).unwrap();
            let emitted = trapezoid_discharge_ah(&r.series);
            let internal = r.discharge_throughput_ah();
            assert!((emitted - internal).abs() / internal < 1e-3, "{emitted} vs {internal}");
        }
    }

    #[test]
    fn runs_until_sixty_percent() {
        let r = simulate_cell(&quiet(Profile::RandomizedPartial)).unwrap();
        let last = r.true_capacity_trace.last().unwrap();
        assert!(last.capacity_ah <= 0.6 * 2.0 + 1e-12);
        assert!(r.true_capacity_trace.windows(2).all(|w| w[1].capacity_ah <= w[0].capacity_ah));
    }

    #[test]
    fn partial_profile_mixes_partial_and_full_discharges() {
        let r = simulate_cell(&quiet(Profile::RandomizedPartial)).unwrap();
        let segs = crate::ingest::segment_cycles(&r.series, 0.05);
        let discharges: Vec<_> = segs.iter().filter(|s| s.kind == SegmentKind::Discharge).collect();
        let full = discharges
            .iter()
            .filter(|s| r.true_soc[s.end_idx - 1] == 0.0)
            .count();
        assert!(full >= 5);
        assert!(discharges.len() > 5 * full);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cases = [
            SimConfig {
                soc_bounds: SocBounds { low: 0.8, high: 0.2 },
                ..SimConfig::default()
            },
            SimConfig {
                sample_period_s: 0.0,
                ..SimConfig::default()
            },
            SimConfig {
                fade_per_ah: -0.1,
                ..SimConfig::default()
            },
            SimConfig {
                nominal_capacity_ah: f64::NAN,
                ..SimConfig::default()
            },
        ];
        for cfg in cases {
            assert!(matches!(simulate_cell(&cfg), Err(SimError::InvalidConfig(_))));
        }
        assert!(simulate_fleet(&SimConfig::default(), 0, 1).is_err());
    }

    #[test]
    fn fleet_of_one_matches_single_cell() {
        let base = SimConfig {
            max_duration_s: 200_000.0,
            ..SimConfig::default()
        };
        let fleet = simulate_fleet(&base, 1, 99).unwrap();
        let single = simulate_cell(&jitter_config(&base, 99, 0)).unwrap();
        assert_eq!(fleet[0], single);
        assert_eq!(fleet[0].series.cell_id(), "sim-000");
    }

    #[test]
    fn fleet_cells_are_distinct_and_fading() {
        let base = SimConfig {
            max_duration_s: 200_000.0,
            ..SimConfig::default()
        };
        let fleet = simulate_fleet(&base, 10, 7).unwrap();
        let ids: std::collections::BTreeSet<_> = fleet.iter().map(|r| r.series.cell_id().to_owned()).collect();
        assert_eq!(ids.len(), 10);
        for r in &fleet {
            assert!(r.true_capacity_trace.windows(2).all(|w| w[1].capacity_ah <= w[0].capacity_ah));
        }
    }

    #[test]
    fn different_fleet_seeds_give_different_noise() {
        let base = SimConfig {
            max_duration_s: 50_000.0,
            ..SimConfig::default()
        };
        let a = simulate_fleet(&base, 1, 1).unwrap();
        let b = simulate_fleet(&base, 1, 2).unwrap();
        let va: Vec<f64> = a[0].series.samples()[..100].iter().map(|s| s.voltage_v).collect();
        let vb: Vec<f64> = b[0].series.samples()[..100].iter().map(|s| s.voltage_v).collect();
        let equal = va.iter().zip(&vb).filter(|(x, y)| x == y).count();
        assert!(equal < 5, "{equal} identical voltage samples");
    }
}
