//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p siting-core --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siting_core::combinatorics::{binomial, rank, total_subsets, CombinationSet};
use siting_core::dataset::{AliasMap, ObjectiveSpec, ScaledMatrix};
use siting_core::pareto::non_dominated_mask;
use siting_core::predictor::{
    build_lookup, evaluate, evaluate_columns, gradient_check, gradient_check_with,
    predict_objectives, softmax, Activation, Architecture, ConcModel, LossWeights, PredictorMode,
    PredictorSample, TrainSample,
};
use siting_core::ranking::{
    accumulate_length_with, read_scores_csv, run_sweep, subset_contribution, sweep_lengths,
    RankResult, SweepConfig,
};
use siting_core::report::{format_top, top_rows};
use siting_core::synthetic::{coarse_matrix, random_matrix, site_table};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Reference counts per length for m = 22. The s = 11 entry is wrong.
const REFERENCE_COUNTS: [u64; 22] = [
    22, 231, 1540, 7315, 26334, 74613, 170544, 319770, 497420, 646646, 705905, 646646, 497420,
    319770, 170544, 74613, 26334, 7315, 1540, 231, 22, 1,
];

fn combination_counts() -> Outcome {
    let mut sum = 0;
    let mut disagree = Vec::new();
    for s in 1..=22 {
        let c = binomial(22, s).map_err(|e| e.to_string())?;
        ensure(c == common::binomial(22, s as u64), || {
            format!("binomial(22, {s}) = {c}")
        })?;
        if c != REFERENCE_COUNTS[s - 1] {
            disagree.push((s, c, REFERENCE_COUNTS[s - 1]));
        }
        sum += c;
    }
    ensure(sum == 4_194_303, || format!("sum {sum}"))?;
    ensure(total_subsets(22).unwrap() == 4_194_303, || {
        "total_subsets".into()
    })?;
    // The reference s = 11 entry, 705,905, is a typo: the exact count is
    // 705,432 and only that value makes the column sum to the reference
    // total of 4,194,303.
    ensure(disagree == [(11, 705_432, 705_905)], || {
        format!("unexpected disagreements {disagree:?}")
    })?;
    let reference_sum: u64 = REFERENCE_COUNTS.iter().sum();
    ensure(reference_sum - 705_905 + 705_432 == 4_194_303, || {
        "corrected column does not reach the total".into()
    })?;
    Ok(
        "21 of 22 reference counts exact, sum 4,194,303; s = 11 listed as 705,905, exact 705,432"
            .into(),
    )
}

fn worked_example() -> Outcome {
    let sub = [
        [0.2023, 0.6605, 0.6158],
        [0.0729, 0.2907, 0.5883],
        [0.3935, 0.5107, 0.9067],
        [0.4777, 0.7118, 0.6409],
    ];
    let m = 22;
    let mut values = Vec::new();
    for row in &sub {
        let mut full = vec![0.5; m];
        full[1] = row[0];
        full[2] = row[1];
        full[4] = row[2];
        values.extend(full);
    }
    let matrix = ScaledMatrix::from_rows(
        (1..=4).map(|i| format!("site{i}")).collect(),
        ObjectiveSpec::anonymous(m),
        values,
    )
    .map_err(|e| e.to_string())?;
    let idx = CombinationSet::from_indices(m, &[2, 3, 5]).map_err(|e| e.to_string())?;
    let mask = non_dominated_mask(&matrix, &idx);
    ensure(mask.as_u8() == [0, 0, 1, 1], || {
        format!("mask {:?}", mask.as_u8())
    })?;
    let r = subset_contribution(&mask, &idx, m);
    for i in 0..4 {
        for j in 0..m {
            let want = u8::from(i >= 2 && [1, 2, 4].contains(&j));
            ensure(r[i * m + j] == want, || {
                format!("contribution[{i}][{j}] = {}", r[i * m + j])
            })?;
        }
    }
    let k = rank(m, &[2, 3, 5]).map_err(|e| e.to_string())?;
    Ok(format!(
        "mask [0,0,1,1]; ones at columns 2,3,5 of rows 3 and 4 only; lexicographic rank {k}"
    ))
}

fn random_instance(rng: &mut ChaCha8Rng, seed: u64) -> ScaledMatrix {
    let n = rng.gen_range(1..=12);
    let m = rng.gen_range(1..=6);
    let binary = rng.gen_range(0..=m);
    if rng.gen_bool(0.5) {
        random_matrix(n, m, binary, seed)
    } else {
        coarse_matrix(n, m, binary, rng.gen_range(2..5), seed)
    }
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for seed in 0..500 {
        let matrix = random_instance(&mut rng, seed);
        let gap = common::oracle_gap(&matrix, 1 + seed as usize % 4)
            .map_err(|e| format!("instance {seed}: {e}"))?;
        ensure(gap <= 1e-12, || format!("instance {seed}: gap {gap:e}"))?;
        worst = worst.max(gap);
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "500 instances, max elementwise gap {worst:e}, {secs:.2}s"
    ))
}

fn normalization_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4048);
    for seed in 0..100 {
        let matrix = random_instance(&mut rng, 10_000 + seed);
        common::check_invariants(&matrix).map_err(|e| format!("instance {seed}: {e}"))?;
    }
    Ok("100 instances: NR sums, SC row sums, NR at s = m".into())
}

fn determinism_and_resume() -> Outcome {
    let started = Instant::now();
    let matrix = random_matrix(40, 10, 3, 77);
    let run = |workers: usize| -> Result<RankResult, String> {
        let config = SweepConfig {
            workers,
            ..SweepConfig::default()
        };
        run_sweep(&matrix, &AliasMap::default(), &config).map_err(|e| e.to_string())
    };
    let reference = run(1)?;
    let reference_json = reference.to_json().map_err(|e| e.to_string())?;
    for workers in [2, 8] {
        let other = run(workers)?;
        ensure(
            other.to_json().map_err(|e| e.to_string())? == reference_json,
            || format!("{workers} workers differ"),
        )?;
    }
    let stride = 32;
    let total = total_subsets(10).unwrap();
    let mut interrupts = 0;
    for budget in (stride..total).step_by(stride as usize) {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = SweepConfig {
            workers: 3,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            stride,
            budget: Some(budget),
            ..SweepConfig::default()
        };
        let progress = sweep_lengths(&matrix, &config).map_err(|e| e.to_string())?;
        ensure(!progress.complete, || {
            format!("budget {budget} finished the sweep")
        })?;
        let resume = SweepConfig {
            budget: None,
            workers: 8,
            ..config
        };
        let resumed =
            run_sweep(&matrix, &AliasMap::default(), &resume).map_err(|e| e.to_string())?;
        ensure(
            resumed.to_json().map_err(|e| e.to_string())? == reference_json,
            || format!("resume after {budget} subsets differs"),
        )?;
        interrupts += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "workers 1/2/8 identical; {interrupts} interrupt points resumed identically; {secs:.2}s"
    ))
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            while end + 1 < order.len() && v[order[end + 1]] == v[order[start]] {
                end += 1;
            }
            let avg = (start + end) as f64 / 2.0 + 1.0;
            for &i in &order[start..=end] {
                r[i] = avg;
            }
            start = end + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn desk_scale_performance() -> Outcome {
    let (n, m, workers) = (2000, 12, 8);
    let matrix = random_matrix(n, m, 4, 6);
    let started = Instant::now();
    let mut times = Vec::new();
    for s in 1..=m {
        let t = Instant::now();
        accumulate_length_with(&matrix, s, None, workers).map_err(|e| e.to_string())?;
        times.push(t.elapsed().as_secs_f64());
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("took {secs:.1}s"))?;
    let counts: Vec<f64> = (1..=m).map(|s| binomial(m, s).unwrap() as f64).collect();
    // rising half of the binomial row: time must rise with the count
    for s in 1..m / 2 {
        ensure(times[s] > times[s - 1], || {
            format!(
                "time at s = {} ({:.3}s) not above s = {s} ({:.3}s)",
                s + 1,
                times[s],
                times[s - 1]
            )
        })?;
    }
    ensure(times[m - 1] < times[m / 2 - 1], || {
        "s = m not faster than s = m/2".into()
    })?;
    let rho = spearman(&times, &counts);
    ensure(rho >= 0.5, || {
        format!("Spearman {rho:.2} between time and subset count")
    })?;
    let shown: Vec<String> = times.iter().map(|t| format!("{t:.2}")).collect();
    Ok(format!(
        "n = {n}, m = {m}, {workers} workers: {secs:.1}s total; per-length seconds [{}]; Spearman vs C(m,s) {rho:.2}",
        shown.join(", ")
    ))
}

fn lookup_exactness() -> Outcome {
    let spec = ObjectiveSpec::default_siting();
    let table = site_table(2000, &spec, 19);
    let lut = build_lookup(&table.records, &spec).map_err(|e| e.to_string())?;
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for r in &table.records {
        let p = predict_objectives(&lut, &r.inputs()).map_err(|e| e.to_string())?;
        ensure(p == r.raw_objectives, || {
            format!("site {} not echoed", r.registry_id)
        })?;
        truth.extend_from_slice(&r.raw_objectives);
        pred.extend(p);
    }
    let e = evaluate_columns(&truth, &pred, spec.len()).map_err(|e| e.to_string())?;
    ensure(e.mse == 0.0 && e.rmse == 0.0 && e.mae == 0.0, || {
        format!("{e:?}")
    })?;
    ensure(e.r2 == Some(1.0), || format!("R2 {:?}", e.r2))?;
    Ok(format!(
        "{} training sites: MSE 0, RMSE 0, MAE 0, R2 1",
        table.len()
    ))
}

fn gradient_samples(spec: &ObjectiveSpec, seed: u64) -> Vec<PredictorSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    site_table(5, spec, seed)
        .records
        .iter()
        .map(|r| {
            let logits: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut y2 = vec![rng.gen::<f64>()];
            y2.extend(softmax(&logits));
            PredictorSample {
                x: r.inputs(),
                y1: r.raw_objectives.clone(),
                y2,
            }
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let full = ObjectiveSpec::default_siting();
    let spec = ObjectiveSpec::new(
        [1, 3, 6, 7, 9, 10, 13, 16]
            .iter()
            .map(|&j| full.objectives[j].clone())
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let samples = gradient_samples(&spec, 5);
    let prepare = |model: &mut ConcModel| -> Vec<TrainSample> {
        let refs: Vec<&PredictorSample> = samples.iter().collect();
        model.fit_scalers(&refs);
        samples.iter().map(|s| model.prepare(s)).collect()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for mode in [PredictorMode::Conc, PredictorMode::Lut] {
        for hidden in 0..5 {
            for activation in Activation::ALL {
                let arch = Architecture {
                    stage1_hidden: vec![6; hidden],
                    stage2_hidden: vec![6; hidden],
                    activation,
                };
                let mut model =
                    ConcModel::new(&spec, mode, &arch, LossWeights::default(), hidden as u64)
                        .map_err(|e| e.to_string())?;
                let data = prepare(&mut model);
                let check = gradient_check(&model, &data, 1e-3).map_err(|e| e.to_string())?;
                ensure(check.max_relative_error < 1e-4, || {
                    format!(
                        "{mode:?}, {} layers, {activation:?}: {:e}",
                        hidden + 1,
                        check.max_relative_error
                    )
                })?;
                worst = worst.max(check.max_relative_error);
                checked += check.parameters;
            }
        }
    }
    let arch = Architecture {
        stage1_hidden: vec![8],
        stage2_hidden: vec![8],
        activation: Activation::Relu,
    };
    let mut model = ConcModel::new(&spec, PredictorMode::Conc, &arch, LossWeights::default(), 1)
        .map_err(|e| e.to_string())?;
    let data = prepare(&mut model);
    let corrupted = gradient_check_with(&model, &data, 1e-3, |m, d| {
        let idx: Vec<usize> = (0..d.len()).collect();
        let mut g = m.loss_and_grad(d, &idx).1;
        let last = g.len() - 1;
        g[last].iter_mut().for_each(|v| *v = -*v);
        g
    })
    .map_err(|e| e.to_string())?;
    ensure(corrupted.max_relative_error > 1e-2, || {
        format!(
            "corrupted gradient passed with {:e}",
            corrupted.max_relative_error
        )
    })?;
    Ok(format!(
        "1-5 layers x {} activations x 2 modes, {checked} parameters, max relative error {worst:.1e}; \
         corrupted control {:.1e}; {:.2}s",
        Activation::ALL.len(),
        corrupted.max_relative_error,
        started.elapsed().as_secs_f64()
    ))
}

fn metrics_arithmetic() -> Outcome {
    let e = evaluate(&[0.0, 1.0], &[1.0, 0.0]).map_err(|e| e.to_string())?;
    ensure(
        (e.mse, e.rmse, e.mae, e.r2) == (1.0, 1.0, 1.0, Some(-3.0)),
        || format!("{e:?}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..40);
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let e = evaluate(&t, &p).map_err(|e| e.to_string())?;
        let rel = (e.rmse * e.rmse - e.mse).abs() / e.mse.max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    ensure(worst <= 4.0 * f64::EPSILON, || {
        format!("RMSE^2 vs MSE relative gap {worst:e}")
    })?;
    Ok(format!(
        "y=[0,1], y_hat=[1,0] -> R2 = -3; RMSE^2 = MSE within {worst:.1e} relative"
    ))
}

fn replay_top_sites() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/top_scores.csv");
    let file = std::fs::File::open(&path).map_err(|e| e.to_string())?;
    let rows = read_scores_csv(file).map_err(|e| e.to_string())?;
    let top = top_rows(&rows, 6);
    let listing = format_top(&top);
    let expected = [
        ("C2914", "1.0000", "-81.47", "40.52"),
        ("C2712", "0.7991", "-79.07", "36.48"),
        ("C2367", "0.7025", "-70.78", "43.41"),
        ("C8042", "0.6650", "-80.06", "36.28"),
        ("110038759572", "0.6169", "-80.32", "27.42"),
        ("110015334440", "0.6018", "-122.10", "37.67"),
    ];
    let lines: Vec<&str> = listing.lines().skip(1).collect();
    ensure(lines.len() == 6, || format!("{} rows listed", lines.len()))?;
    for (pos, ((id, metric, lon, lat), line)) in expected.iter().zip(&lines).enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        ensure(
            fields[0] == (pos + 1).to_string() && fields[1] == *id,
            || format!("row {}: {line}", pos + 1),
        )?;
        ensure(
            fields[5] == *lon && fields[6] == *lat && fields[7] == *metric,
            || format!("row {}: {line}", pos + 1),
        )?;
    }
    Ok("six reference top sites listed in order with metrics 1.0000 .. 0.6018 verbatim".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("combination counts for 22 objectives", combination_counts),
        ("four-site worked example", worked_example),
        ("streaming sweep equals dense oracle", oracle_equivalence),
        ("normalization invariants", normalization_invariants),
        ("determinism and resume", determinism_and_resume),
        ("desk-scale performance", desk_scale_performance),
        ("lookup exactness on training sites", lookup_exactness),
        ("gradient correctness", gradient_correctness),
        ("metrics arithmetic", metrics_arithmetic),
        ("top-site replay", replay_top_sites),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2}  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
