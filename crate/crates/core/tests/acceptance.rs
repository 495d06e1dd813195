//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built without the libtest harness so the
//! lines are always visible.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulkit::features::{make_windows, CHANNELS};
use rulkit::ingest::{parse_cell_csv, write_cell_csv};
use rulkit::labeling::{compute_soh, label_cell, CapacityPoint, LabelConfig, RulTarget, EOL_THRESHOLD_PCT};
use rulkit::neural::loss::{mse, mse_grad};
use rulkit::neural::{
    grad_check, Activation, AutoencoderParams, Dense, Differentiable, LstmParams, Parameterized, Tensor,
};
use rulkit::pipeline::{
    cell_frame, cell_windows, evaluate, load_bundle, predict_stream, save_bundle, train_pipeline, LabeledCell,
    ModelBundle, PipelineError, Precision, RulBatch, RulModel, TrainConfig,
};
use rulkit::simulate::{simulate_cell, simulate_fleet, NoiseStd, Profile, SimConfig, SimResult};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Gradient fidelity --------------------------------------------------------

#[derive(Clone)]
struct DenseProbe(Dense);

impl Parameterized for DenseProbe {
    fn params(&self) -> Vec<&Tensor> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.0.params_mut()
    }
}

impl Differentiable for DenseProbe {
    type Batch = (Tensor, Tensor);

    fn loss(&self, (x, y): &Self::Batch) -> f64 {
        mse(self.0.forward(x).unwrap().data(), y.data())
    }

    fn loss_and_grad(&self, (x, y): &Self::Batch) -> (f64, Self) {
        let out = self.0.forward(x).unwrap();
        let up = Tensor::new(out.shape().to_vec(), mse_grad(out.data(), y.data())).unwrap();
        let (g, _) = self.0.backward(x, &up).unwrap();
        (mse(out.data(), y.data()), DenseProbe(g))
    }
}

/// LSTM alone, loss = sum over steps of `h_t · r_t` plus `c_T · s`.
#[derive(Clone)]
struct LstmProbe(LstmParams);

struct LstmBatch {
    seq: Tensor,
    r: Tensor,
    s: Vec<f64>,
    h0: Vec<f64>,
    c0: Vec<f64>,
}

impl Parameterized for LstmProbe {
    fn params(&self) -> Vec<&Tensor> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.0.params_mut()
    }
}

impl Differentiable for LstmProbe {
    type Batch = LstmBatch;

    fn loss(&self, b: &LstmBatch) -> f64 {
        let cache = self.0.forward(&b.seq, &b.h0, &b.c0).unwrap();
        let hs = cache.hidden_sequence();
        let dot_h: f64 = hs.data().iter().zip(b.r.data()).map(|(h, r)| h * r).sum();
        let dot_c: f64 = cache.final_c().iter().zip(&b.s).map(|(c, s)| c * s).sum();
        dot_h + dot_c
    }

    fn loss_and_grad(&self, b: &LstmBatch) -> (f64, Self) {
        let cache = self.0.forward(&b.seq, &b.h0, &b.c0).unwrap();
        let g = self.0.backward(&cache, &b.r, Some(&b.s)).unwrap();
        (self.loss(b), LstmProbe(g.params))
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn gradient_fidelity() -> Outcome {
    const SEEDS: u64 = 24;
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let (mut dense_worst, mut ae_worst, mut lstm_worst, mut rul_worst) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inp, out, n) = (rng.random_range(1..=5), rng.random_range(1..=4), rng.random_range(1..=4));
        for act in [Activation::Linear, Activation::Tanh] {
            let probe = DenseProbe(Dense::xavier(inp, out, act, &mut rng));
            let batch = (uniform(&mut rng, &[n, inp]), uniform(&mut rng, &[n, out]));
            dense_worst = dense_worst.max(grad_check(&probe, &batch, 1e-6, seed).max_relative_error);
        }

        let ae = AutoencoderParams::new(3, &[4], 2, &mut rng);
        let x = uniform(&mut rng, &[n + 1, 3]);
        ae_worst = ae_worst.max(grad_check(&ae, &x, 1e-6, seed).max_relative_error);

        let (hidden, input, steps) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=6));
        let probe = LstmProbe(LstmParams::init(input, hidden, &mut rng));
        let batch = LstmBatch {
            seq: uniform(&mut rng, &[steps, input]),
            r: uniform(&mut rng, &[steps, hidden]),
            s: uniform(&mut rng, &[hidden]).into_data(),
            h0: uniform(&mut rng, &[hidden]).into_data(),
            c0: uniform(&mut rng, &[hidden]).into_data(),
        };
        lstm_worst = lstm_worst.max(grad_check(&probe, &batch, 1e-6, seed).max_relative_error);

        let cfg = TrainConfig {
            hidden_size: hidden,
            latent_dim: input,
            seed,
            ..TrainConfig::default()
        };
        let model = RulModel::init(&cfg);
        let count = 3;
        let rul = RulBatch {
            latents: (0..count * steps * input).map(|_| rng.random_range(-1.0..1.0)).collect(),
            steps,
            targets: (0..count).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        rul_worst = rul_worst.max(grad_check(&model, &rul, 1e-6, seed).max_relative_error);
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = dense_worst.max(ae_worst).max(lstm_worst).max(rul_worst);
    check(
        worst < TOL && secs < 30.0,
        format!(
            "{SEEDS} seeds; max rel err dense {dense_worst:.2e}, autoencoder {ae_worst:.2e}, lstm {lstm_worst:.2e}, lstm+head {rul_worst:.2e} (< {TOL:e}); {secs:.1} s (< 30 s)"
        ),
    )
}

// Coulomb oracle -----------------------------------------------------------

fn coulomb_oracle() -> Outcome {
    let mut worst_cap = 0.0f64;
    let mut worst_eol = 0.0f64;
    let mut cells = 0;
    let mut points = 0;
    for (profile, fade, seed) in [
        (Profile::ConstantCurrent, 0.004, 1),
        (Profile::ConstantCurrent, 0.0025, 2),
        (Profile::RandomizedPartial, 0.004, 3),
        (Profile::RandomizedPartial, 0.003, 4),
    ] {
        let cfg = SimConfig {
            profile,
            fade_per_ah: fade,
            noise_std: NoiseStd::ZERO,
            seed,
            ..SimConfig::default()
        };
        let r = simulate_cell(&cfg).map_err(|e| e.to_string())?;
        let labels = label_cell(&r.series, &LabelConfig::default()).map_err(|e| e.to_string())?;
        for p in &labels.capacity_points {
            let truth = cfg.capacity_at(p.cumulative_discharge_ah);
            worst_cap = worst_cap.max((p.capacity_ah - truth).abs() / truth);
        }
        points += labels.capacity_points.len();
        let analytic = cfg.throughput_at_soh(EOL_THRESHOLD_PCT).ok_or("no analytic crossing")?;
        let eol = labels.eol.throughput_ah().ok_or("cell never reached EOL")?;
        worst_eol = worst_eol.max((eol - analytic).abs() / analytic);
        cells += 1;
    }
    check(
        worst_cap <= 5e-3 && worst_eol <= 5e-3,
        format!(
            "{cells} noise-free cells, {points} capacity points: max capacity rel err {worst_cap:.2e}, max EOL rel err {worst_eol:.2e} (<= 5e-3)"
        ),
    )
}

// SOH exactness ------------------------------------------------------------

fn soh_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut worst_scaled) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let c0: f64 = rng.random_range(0.1..200.0);
        let c = c0 * rng.random_range(0.05..1.2);
        let point = |cap| CapacityPoint {
            cumulative_discharge_ah: 0.0,
            capacity_ah: cap,
        };
        let expected = 100.0 * c / c0;
        let got = compute_soh(&[point(c)], c0).map_err(|e| e.to_string())?[0].soh_pct;
        worst = worst.max((got - expected).abs() / expected);
        // Powers of two keep the joint scaling itself exact.
        let k = 2f64.powi(rng.random_range(-20..=20));
        let scaled = compute_soh(&[point(c * k)], c0 * k).map_err(|e| e.to_string())?[0].soh_pct;
        let k2: f64 = rng.random_range(0.001..1000.0);
        let scaled2 = compute_soh(&[point(c * k2)], c0 * k2).map_err(|e| e.to_string())?[0].soh_pct;
        worst_scaled = worst_scaled
            .max((scaled - got).abs() / got)
            .max((scaled2 - got).abs() / got);
    }
    check(
        worst <= 1e-12 && worst_scaled <= 1e-12,
        format!("1000 pairs: max rel err {worst:.2e}, homogeneity {worst_scaled:.2e} (<= 1e-12)"),
    )
}

// RUL label structure ------------------------------------------------------

fn label_cells(fleet: &[SimResult]) -> Result<Vec<LabeledCell>, String> {
    fleet
        .iter()
        .map(|r| {
            let labels = label_cell(&r.series, &LabelConfig::default()).map_err(|e| e.to_string())?;
            let records = labels.records().ok_or_else(|| format!("{} is censored", labels.cell_id))?;
            let targets = records
                .iter()
                .map(|rec| RulTarget {
                    cumulative_discharge_ah: rec.cumulative_discharge_ah,
                    remaining_ah: rec.remaining_ah,
                })
                .collect();
            Ok(LabeledCell {
                series: r.series.clone(),
                targets,
            })
        })
        .collect()
}

fn rul_structure(cells: &[LabeledCell]) -> Outcome {
    let mut worst_slope = 0.0f64;
    let mut checked = 0;
    for cell in cells {
        let t = &cell.targets;
        let eol = rulkit::labeling::eol_from_targets(t).ok_or("no positive targets")?;
        for pair in t.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.cumulative_discharge_ah < a.cumulative_discharge_ah {
                return Err(format!("{}: targets not sorted by throughput", cell.series.cell_id()));
            }
            if b.remaining_ah > a.remaining_ah {
                return Err(format!("{}: remaining increases at {} Ah", cell.series.cell_id(), b.cumulative_discharge_ah));
            }
            checked += 1;
        }
        for x in t {
            if x.cumulative_discharge_ah < eol {
                // Unit slope: q + remaining is the same EOL everywhere before the clamp.
                let dev = (x.cumulative_discharge_ah + x.remaining_ah - eol).abs() / eol;
                worst_slope = worst_slope.max(dev);
            } else if x.remaining_ah != 0.0 {
                return Err(format!("{}: non-zero target {} past EOL", cell.series.cell_id(), x.remaining_ah));
            }
        }
    }
    check(
        worst_slope <= 1e-12,
        format!(
            "{} cells, {checked} consecutive pairs non-increasing; max |q + remaining - eol| / eol {worst_slope:.2e}",
            cells.len()
        ),
    )
}

// End to end -----------------------------------------------------------------

struct Trained {
    bundle: Arc<ModelBundle>,
    cells: Vec<LabeledCell>,
    fleet: Vec<SimResult>,
}

fn end_to_end(trained: &mut Option<Trained>) -> Outcome {
    let start = Instant::now();
    let base = SimConfig {
        profile: Profile::RandomizedPartial,
        ..SimConfig::default()
    };
    let fleet = simulate_fleet(&base, 10, 7).map_err(|e| e.to_string())?;
    let cells = label_cells(&fleet)?;
    let config = TrainConfig::default();
    let run = train_pipeline(&cells, &config).map_err(|e| e.to_string())?;
    let bundle = run.bundle;
    let split = &bundle.split;
    let held_out_ids = split.held_out();
    let held: Vec<&LabeledCell> = cells
        .iter()
        .filter(|c| held_out_ids.iter().any(|id| id == c.series.cell_id()))
        .collect();
    let windows = cell_windows(&held, &bundle.config).map_err(|e| e.to_string())?;
    let report = evaluate(&bundle, &windows).map_err(|e| e.to_string())?;
    let held_eol = held
        .iter()
        .map(|c| rulkit::labeling::eol_from_targets(&c.targets).unwrap())
        .sum::<f64>()
        / held.len() as f64;
    let life = report.life_scale_ah.min(held_eol);
    let secs = start.elapsed().as_secs_f64();
    let improvement = 1.0 - report.rmse_ah / report.baseline_rmse_ah;
    let per_cell: Vec<String> = report
        .per_cell
        .iter()
        .map(|c| format!("{} {:.2} Ah", c.cell_id, c.metrics.rmse_ah))
        .collect();
    let outcome = check(
        split.train.len() == 8
            && held.len() == 2
            && report.rmse_ah <= 0.10 * life
            && improvement >= 0.30
            && secs < 600.0,
        format!(
            "train {} / held-out {} cells; rmse {:.3} Ah = {:.2}% of mean EOL {:.2} Ah (<= 10%); baseline {:.3} Ah, {:.0}% better (>= 30%); per cell [{}]; {} epochs; {secs:.0} s (< 600 s)",
            split.train.len(),
            held.len(),
            report.rmse_ah,
            100.0 * report.rmse_ah / life,
            life,
            report.baseline_rmse_ah,
            100.0 * improvement,
            per_cell.join(", "),
            run.history.len(),
        ),
    );
    *trained = Some(Trained {
        bundle: Arc::new(bundle),
        cells,
        fleet,
    });
    outcome
}

// Only V, I and T reach the model -----------------------------------------------------

fn extra_columns(t: &Trained) -> Outcome {
    let b = &t.bundle;
    if b.autoencoder.input_size() != CHANNELS.len() || b.norm.channels != CHANNELS {
        return Err(format!("model consumes {:?}", b.norm.channels));
    }
    let id = &b.split.test[0];
    let idx = t.fleet.iter().position(|r| r.series.cell_id() == id).unwrap();
    let sim = &t.fleet[idx];
    let series = &sim.series;
    let mut plain = Vec::new();
    write_cell_csv(series, &mut plain).unwrap();

    // Same samples with SOC and SOH columns interleaved.
    let mut extra = String::from("soc,timestamp_s,voltage_v,soh_pct,current_a,temperature_c,capacity_ah\n");
    let cap = sim.true_capacity_at(0.0);
    for (s, soc) in series.samples().iter().zip(&sim.true_soc) {
        extra.push_str(&format!(
            "{soc},{},{},{},{},{},{cap}\n",
            s.timestamp_s,
            s.voltage_v,
            100.0 * cap / series.nominal_capacity_ah(),
            s.current_a,
            s.temperature_c
        ));
    }
    let nominal = series.nominal_capacity_ah();
    let a = parse_cell_csv(plain.as_slice(), id, nominal).map_err(|e| e.to_string())?;
    let e = parse_cell_csv(extra.as_bytes(), id, nominal).map_err(|e| e.to_string())?;
    let config = &b.config;
    let targets = &t.cells[idx].targets;
    let window = |s| {
        let frame = cell_frame(s, config).unwrap();
        b.predict_windows(&make_windows(&frame, targets, config.window_len, config.stride).unwrap())
            .unwrap()
    };
    let (pa, pe) = (window(&a), window(&e));
    let sa = predict_stream(b.clone(), a.samples().iter().copied()).map_err(|e| e.to_string())?;
    let se = predict_stream(b.clone(), e.samples().iter().copied()).map_err(|e| e.to_string())?;
    let same_batch = pa.len() == pe.len() && pa.iter().zip(&pe).all(|(x, y)| x.to_bits() == y.to_bits());
    let same_stream = sa.len() == se.len()
        && sa
            .iter()
            .zip(&se)
            .all(|(x, y)| x.remaining_ah.to_bits() == y.remaining_ah.to_bits() && x.timestamp_s == y.timestamp_s);
    check(
        same_batch && same_stream,
        format!(
            "input channels {:?}; {} batch and {} streamed predictions bit-identical with extra columns",
            b.norm.channels,
            pa.len(),
            sa.len()
        ),
    )
}

// Online/batch equivalence -------------------------------------------------

fn online_batch(t: &Trained) -> Outcome {
    let b = &t.bundle;
    let id = &b.split.test[0];
    let cell = t.cells.iter().find(|c| c.series.cell_id() == id).unwrap();
    let frame = cell_frame(&cell.series, &b.config).map_err(|e| e.to_string())?;
    let set = make_windows(&frame, &cell.targets, b.window_len(), 1).map_err(|e| e.to_string())?;
    let batch = b.predict_windows(&set).map_err(|e| e.to_string())?;
    let stream = predict_stream(b.clone(), cell.series.samples().iter().copied()).map_err(|e| e.to_string())?;
    let w = b.window_len();
    let mut worst = 0.0f64;
    for (e, p) in stream.iter().zip(&batch) {
        worst = worst.max((e.remaining_ah - p).abs());
    }
    let first_ok = stream.first().is_some_and(|e| e.timestamp_s == frame.rows[w - 1].t);
    let times_ok = stream.iter().enumerate().all(|(k, e)| e.timestamp_s == frame.rows[k + w - 1].t);
    check(
        stream.len() == batch.len() && stream.len() == frame.len() - w + 1 && first_ok && times_ok && worst <= 1e-6,
        format!(
            "cell {id}: {} estimates over {} rows, first at row {w}; max |stream - batch| {worst:.2e} Ah (<= 1e-6)",
            stream.len(),
            frame.len()
        ),
    )
}

// Checkpoint round trip -------------------------------------------------------

fn checkpoint_round_trip(t: &Trained) -> Outcome {
    let b = &t.bundle;
    let held = b.split.held_out();
    let cells: Vec<&LabeledCell> = t
        .cells
        .iter()
        .filter(|c| held.iter().any(|id| id == c.series.cell_id()))
        .collect();
    let windows = cell_windows(&cells, &b.config).map_err(|e| e.to_string())?;
    let reference = b.predict_windows(&windows).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();

    let mut f64_bytes = Vec::new();
    save_bundle(b, &mut f64_bytes, Precision::F64).map_err(|e| e.to_string())?;
    let loaded = load_bundle(f64_bytes.as_slice()).map_err(|e| e.to_string())?;
    let f64_ok = bits(&loaded.predict_windows(&windows).unwrap()) == bits(&reference);

    let mut f32_bytes = Vec::new();
    save_bundle(b, &mut f32_bytes, Precision::F32).map_err(|e| e.to_string())?;
    let once = load_bundle(f32_bytes.as_slice()).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    save_bundle(&once, &mut again, Precision::F32).map_err(|e| e.to_string())?;
    let twice = load_bundle(again.as_slice()).map_err(|e| e.to_string())?;
    let p32 = once.predict_windows(&windows).unwrap();
    let f32_ok = again == f32_bytes && bits(&twice.predict_windows(&windows).unwrap()) == bits(&p32);
    let f32_drift = p32.iter().zip(&reference).map(|(a, r)| (a - r).abs()).fold(0.0, f64::max);

    let truncated = matches!(
        load_bundle(&f64_bytes[..f64_bytes.len() - 7]),
        Err(PipelineError::CorruptCheckpoint(_))
    );
    let mut flipped = f64_bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    let flipped_rejected = matches!(load_bundle(flipped.as_slice()), Err(PipelineError::CorruptCheckpoint(_)));
    let mut bumped = f64_bytes.clone();
    bumped[4] += 1;
    let bumped_rejected = matches!(load_bundle(bumped.as_slice()), Err(PipelineError::VersionMismatch { .. }));
    check(
        f64_ok && f32_ok && truncated && flipped_rejected && bumped_rejected,
        format!(
            "{} predictions: f64 bit-exact {f64_ok}, f32 stable {f32_ok} (f32 vs f64 {f32_drift:.1e} Ah); truncated rejected {truncated}, bit flip rejected {flipped_rejected}, version bump rejected {bumped_rejected}",
            reference.len()
        ),
    )
}

// CLI determinism -------------------------------------------------------------

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rulkit"))
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn cli_chain(dir: &Path) -> Result<Vec<u8>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    std::fs::write(dir.join("train.json"), r#"{"epochs": 3, "ae_epochs": 2, "seed": 4}"#).map_err(|e| e.to_string())?;
    run_cli(&["simulate", "--out-dir", &p("fleet"), "--n-cells", "4", "--seed", "11"])?;
    let manifest = p("fleet/manifest.json");
    run_cli(&["label", "--manifest", &manifest, "--out", &p("labels.jsonl")])?;
    run_cli(&[
        "train",
        "--manifest",
        &manifest,
        "--labels",
        &p("labels.jsonl"),
        "--config",
        &p("train.json"),
        "--out",
        &p("model.rkcp"),
    ])?;
    run_cli(&[
        "eval",
        "--checkpoint",
        &p("model.rkcp"),
        "--manifest",
        &manifest,
        "--labels",
        &p("labels.jsonl"),
        "--out",
        &p("report.json"),
    ])?;
    std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())
}

fn cli_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ra = cli_chain(a.path())?;
    let rb = cli_chain(b.path())?;
    let checkpoints_equal = std::fs::read(a.path().join("model.rkcp")).ok() == std::fs::read(b.path().join("model.rkcp")).ok();
    check(
        ra == rb && !ra.is_empty() && checkpoints_equal,
        format!(
            "simulate -> label -> train -> eval twice in separate directories: EvalReport JSON ({} bytes) identical {}, checkpoints identical {checkpoints_equal}",
            ra.len(),
            ra == rb
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => println!("FAIL  {name}: {detail}"),
        }
        results.push((name, outcome));
    };

    report("gradient fidelity", gradient_fidelity());
    report("coulomb oracle", coulomb_oracle());
    report("soh exactness", soh_exactness());

    let mut trained = None;
    let e2e = end_to_end(&mut trained);
    match &trained {
        Some(t) => report("rul label structure", rul_structure(&t.cells)),
        None => report("rul label structure", Err("fleet could not be labeled".into())),
    }
    report("end-to-end synthetic experiment", e2e);
    let missing = || Err::<String, _>("no trained model".to_owned());
    match &trained {
        Some(t) => {
            report("v/i/t-only inputs", extra_columns(t));
            report("online/batch equivalence", online_batch(t));
            report("checkpoint round-trip", checkpoint_round_trip(t));
        }
        None => {
            report("v/i/t-only inputs", missing());
            report("online/batch equivalence", missing());
            report("checkpoint round-trip", missing());
        }
    }
    report("cli determinism", cli_determinism());

    let failed = results.iter().filter(|(_, o)| o.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
