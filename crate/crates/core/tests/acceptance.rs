//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use andor_core::analysis::{analyze_samples, match_samples, select_samples};
use andor_core::dataset::Role;
use andor_core::dynamics::{emit, list_checkpoints, summarize, sweep, SweepConfig};
use andor_core::interaction::reconstruction_error;
use andor_core::masking::BaselineVector;
use andor_core::model::train;
use andor_core::saliency::generalization_bit;
use andor_core::sparsify::sparse_decomposition;
use andor_core::synth::{gen_dataset, planted_table, PlantedSpec};
use andor_core::transform::{mobius_and, mobius_or};
use andor_core::{
    compute_baseline, decompose, extract_salient, init_model, masked_output_table, match_generalization, Execution,
    GammaVector, InteractionDecomposition, Kind, ModelSpec, SparsifyConfig, ThresholdPolicy,
    TrainConfig,
};
use common::{check_planted_recovery, grid_minimum, literal_effects};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

fn universal_matching() -> Outcome {
    let start = Instant::now();
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for m in 0..50u64 {
        let model = init_model(&ModelSpec::new(n, vec![16, 16], 2, 100 + m)).map_err(|e| e.to_string())?;
        let x = uniform(&mut rng, n, 2.0);
        let baseline = BaselineVector::new(uniform(&mut rng, n, 0.5)).unwrap();
        let label = rng.random_range(0..2);
        let table = masked_output_table(&model, &x, label, &baseline, format!("mlp_{m}")).map_err(|e| e.to_string())?;
        let mut gammas: Vec<GammaVector> = (0..20).map(|_| GammaVector(uniform(&mut rng, 1 << n, 5.0))).collect();
        gammas.push(GammaVector::zeros(n));
        let (_, r) = sparse_decomposition(&table, &SparsifyConfig::default()).map_err(|e| e.to_string())?;
        gammas.push(r.gamma);
        for g in &gammas {
            let d = decompose(&table, g).map_err(|e| e.to_string())?;
            worst = worst.max(reconstruction_error(&d, &table));
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-8, || format!("max error {worst:.3e}"))?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("max error {worst:.2e} over {checked} (model, gamma) pairs in {elapsed:.1?}"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for t in 0..1000 {
        let n = 1 + t % 10;
        let values = uniform(&mut rng, 1 << n, 5.0);
        let gamma = uniform(&mut rng, 1 << n, 5.0);
        let (lit_and, lit_or) = literal_effects(&values, &gamma);
        let o_and: Vec<f64> = values.iter().zip(&gamma).map(|(v, g)| 0.5 * v + g).collect();
        let o_or: Vec<f64> = values.iter().zip(&gamma).map(|(v, g)| 0.5 * v - g).collect();
        let fast_and = mobius_and(&o_and);
        let fast_or = mobius_or(&o_or);
        for s in 1..1 << n {
            worst = worst.max((fast_and[s] - lit_and[s]).abs()).max((fast_or[s] - lit_or[s]).abs());
        }
    }
    ensure(worst < 1e-9, || format!("max difference {worst:.3e}"))?;
    Ok(format!("max difference {worst:.2e} over 1000 tables, n = 1..10"))
}

fn hand_fixture() -> Outcome {
    let table = common::table(&[0.0, 1.0, 1.0, 3.0]);
    let d = decompose(&table, &GammaVector::zeros(2)).map_err(|e| e.to_string())?;
    ensure(d.b == 0.0, || format!("b = {}", d.b))?;
    ensure(d.i_and[1..] == [0.5, 0.5, 0.5], || format!("I_and = {:?}", &d.i_and[1..]))?;
    ensure(d.i_or[1..] == [1.0, 1.0, -0.5], || format!("I_or = {:?}", &d.i_or[1..]))?;
    let rebuilt = d.reconstruct_all();
    ensure(rebuilt == table.values, || format!("reconstruction {rebuilt:?}"))?;
    Ok("b = 0, I_and = (0.5, 0.5, 0.5), I_or = (1, 1, -0.5), exact reconstruction".into())
}

fn single_effect(kind: Kind, effect: f64) -> InteractionDecomposition {
    let mut d = InteractionDecomposition {
        source_table_id: "t".into(),
        n: 2,
        b: 0.0,
        gamma: GammaVector::zeros(2),
        i_and: vec![0.0; 4],
        i_or: vec![0.0; 4],
    };
    match kind {
        Kind::And => d.i_and[3] = effect,
        Kind::Or => d.i_or[3] = effect,
    }
    d
}

fn truth_table_and_self_transfer() -> Outcome {
    let tau_base = 0.5;
    let policy = ThresholdPolicy::absolute(0.5);
    let mut cases = 0;
    for kind in [Kind::And, Kind::Or] {
        for v_sign in [1.0, -1.0] {
            for base_sign in [1.0, -1.0] {
                for base_salient in [true, false] {
                    let base_effect = base_sign * if base_salient { 2.0 } else { 0.25 };
                    let v = single_effect(kind, v_sign * 3.0);
                    let base = single_effect(kind, base_effect);
                    let salient = extract_salient(&v, &policy);
                    let report = match_generalization(&salient, &base, tau_base).map_err(|e| e.to_string())?;
                    let expected = (base_salient as u8) * ((v_sign == base_sign) as u8);
                    ensure(report.interactions.len() == 1, || "expected one salient interaction".into())?;
                    let got = report.interactions[0].g;
                    ensure(got == expected, || {
                        format!("{kind} v_sign {v_sign} base_sign {base_sign} salient {base_salient}: {got} != {expected}")
                    })?;
                    ensure(generalization_bit(v_sign * 3.0, base_effect, tau_base) == (expected == 1), || {
                        "generalization_bit disagrees with the report".into()
                    })?;
                    cases += 1;
                }
            }
        }
    }

    let mut spec = PlantedSpec::random(6, 4, &[Kind::And, Kind::Or], 3).unwrap();
    spec.num_train = 400;
    spec.num_test = 200;
    let (train_set, test_set) = gen_dataset(&spec).map_err(|e| e.to_string())?;
    let mut model = init_model(&ModelSpec::new(6, vec![16, 16], 2, 3)).unwrap();
    andor_core::model::fit(&mut model, &train_set, &TrainConfig { epochs: 20, ..Default::default() }, |_| Ok(()))
        .map_err(|e| e.to_string())?;
    let baseline = compute_baseline(&train_set).map_err(|e| e.to_string())?;
    let samples = select_samples(&test_set, 10, 0).map_err(|e| e.to_string())?;
    let policy = ThresholdPolicy::default();
    let analyses = analyze_samples(&model, &samples, &baseline, &SparsifyConfig::default(), &policy, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let reports = match_samples(&analyses, &analyses).map_err(|e| e.to_string())?;
    let agg = andor_core::saliency::aggregate_orders(&reports).map_err(|e| e.to_string())?;
    ensure(agg.h_bar == Some(1.0), || format!("self-transfer H_bar = {:?}", agg.h_bar))?;
    Ok(format!(
        "{cases} truth-table cases exact; self-transfer H_bar = 1 over {} salient interactions",
        agg.total_salient
    ))
}

fn sparsifier_recovery() -> Outcome {
    let start = Instant::now();
    let seeds = 20u64;
    for seed in 0..seeds {
        let spec = PlantedSpec::random(8, 5, &[Kind::And], seed).unwrap();
        ensure(
            spec.planted.iter().all(|t| (0.5..=2.0).contains(&t.coefficient.abs())),
            || "coefficient out of range".into(),
        )?;
        let table = planted_table(&spec, format!("planted_{seed}")).map_err(|e| e.to_string())?;
        let (d, _) = sparse_decomposition(&table, &SparsifyConfig::default()).map_err(|e| e.to_string())?;
        check_planted_recovery(&spec, &d, 0.05).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    let mut grid_report = Vec::new();
    for (name, values, expected) in [
        ("pure AND", vec![0.0, 0.0, 0.0, 1.0], Some(1.0)),
        ("pure OR", vec![0.0, 1.0, 1.0, 1.0], Some(1.0)),
        ("mixed", vec![0.0, 1.0, 1.0, 3.0], None),
    ] {
        let (grid, _) = grid_minimum(&values, -1.5, 1.5, 0.01);
        if let Some(e) = expected {
            ensure((grid - e).abs() < 1e-12, || format!("{name}: grid optimum {grid}, expected {e}"))?;
        }
        let (_, r) =
            sparse_decomposition(&common::table(&values), &SparsifyConfig::default()).map_err(|e| e.to_string())?;
        ensure((r.final_objective - grid).abs() <= 1e-3, || {
            format!("{name}: objective {} vs grid optimum {grid}", r.final_objective)
        })?;
        grid_report.push(format!("{name} {:.4}/{grid:.4}", r.final_objective));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "{seeds}/{seeds} planted tables recovered; grid optima: {}; {elapsed:.1?}",
        grid_report.join(", ")
    ))
}

/// Mean and max salient count on test samples of a model trained on a planted task.
fn trained_salient_counts(n: usize) -> Result<(f64, usize), String> {
    let spec = PlantedSpec::random(n, 5, &[Kind::And, Kind::Or], n as u64).unwrap();
    let (train_set, test_set) = gen_dataset(&spec).map_err(|e| e.to_string())?;
    let mut model = init_model(&ModelSpec::new(n, vec![32, 32], 2, n as u64)).unwrap();
    let cfg = TrainConfig { epochs: 60, ..Default::default() };
    andor_core::model::fit(&mut model, &train_set, &cfg, |_| Ok(())).map_err(|e| e.to_string())?;
    let baseline = compute_baseline(&train_set).map_err(|e| e.to_string())?;
    let samples = select_samples(&test_set, 10, 0).map_err(|e| e.to_string())?;
    let analyses = analyze_samples(
        &model,
        &samples,
        &baseline,
        &SparsifyConfig::default(),
        &ThresholdPolicy::default(),
        Execution::Parallel,
    )
    .map_err(|e| e.to_string())?;
    let counts: Vec<usize> = analyses.iter().map(|a| a.salient.len()).collect();
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    Ok((mean, counts.into_iter().max().unwrap_or(0)))
}

fn conciseness() -> Outcome {
    let mut points = Vec::new();
    let mut at_ten = (0.0, 0);
    for n in [6usize, 8, 10] {
        let (mean, max) = trained_salient_counts(n)?;
        points.push((n as f64, mean));
        if n == 10 {
            at_ten = (mean, max);
        }
    }
    // least-squares slope of ln(count) against ln(n)
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.max(f64::MIN_POSITIVE).ln()).collect();
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let p = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let limit = 0.1 * (1u64 << 11) as f64;
    ensure((at_ten.1 as f64) < limit, || {
        format!("n = 10: up to {} salient interactions, limit {limit}", at_ten.1)
    })?;
    let counts: Vec<String> = points.iter().map(|(n, c)| format!("n={n}: {c:.1}")).collect();
    Ok(format!(
        "n = 10: mean {:.1}, max {} < {limit}; mean counts {}; fitted p = {p:.2} (informational)",
        at_ten.0,
        at_ten.1,
        counts.join(", ")
    ))
}

/// synth → train → train baseline on the test split → sweep → emit.
fn dynamics_run(root: &Path, execution: Execution) -> Result<Vec<u8>, String> {
    let spec = PlantedSpec::random(8, 5, &[Kind::And, Kind::Or], 42).unwrap();
    let (train_set, test_set) = gen_dataset(&spec).map_err(|e| e.to_string())?;
    let arch = |seed| ModelSpec::new(8, vec![32, 32], 2, seed);
    let cfg = TrainConfig { epochs: 200, checkpoint_every: 10, ..Default::default() };

    let mut model = init_model(&arch(1)).unwrap();
    let ckpt_dir = root.join("analyzed");
    train(&mut model, &train_set, &cfg, &ckpt_dir).map_err(|e| e.to_string())?;
    let mut base = init_model(&arch(2)).unwrap();
    let base_dir = root.join("base");
    let base_ckpts =
        train(&mut base, &test_set.clone().with_role(Role::Train), &cfg, &base_dir).map_err(|e| e.to_string())?;

    let sweep_cfg = SweepConfig { num_samples: 20, seed: 0, execution, ..Default::default() };
    let checkpoints = list_checkpoints(&ckpt_dir).map_err(|e| e.to_string())?;
    let out = sweep(&checkpoints, base_ckpts.last().unwrap(), &sweep_cfg, &train_set, &test_set)
        .map_err(|e| e.to_string())?;
    let out_dir = root.join("sweep");
    emit(&out, &out_dir).map_err(|e| e.to_string())?;
    if execution == Execution::Parallel {
        if let Some(s) = summarize(&out.records) {
            for line in s.to_string().lines() {
                println!("      {line}");
            }
        }
    }
    std::fs::read(out_dir.join("dynamics.csv")).map_err(|e| e.to_string())
}

fn check_dynamics_csv(bytes: &[u8]) -> Result<usize, String> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or(format!("missing column {name}"));
    let (epoch, train_loss, test_loss, gap, h_bar) =
        (col("epoch")?, col("train_loss")?, col("test_loss")?, col("loss_gap")?, col("H_bar")?);
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(rows.len() >= 2, || format!("{} rows", rows.len()))?;
    let num = |row: &csv::StringRecord, i: usize| -> Result<f64, String> {
        row[i].parse::<f64>().map_err(|e| format!("{:?}: {e}", &row[i]))
    };
    let mut last_epoch = None;
    for row in &rows {
        let e: usize = row[epoch].parse().map_err(|_| "bad epoch".to_string())?;
        ensure(last_epoch.is_none_or(|l| e > l), || format!("epoch {e} not increasing"))?;
        last_epoch = Some(e);
        ensure(num(row, gap)? == num(row, test_loss)? - num(row, train_loss)?, || {
            format!("loss_gap is not test - train at epoch {e}")
        })?;
        if !row[h_bar].is_empty() {
            let h = num(row, h_bar)?;
            ensure((0.0..=1.0).contains(&h), || format!("H_bar {h} at epoch {e}"))?;
        }
    }
    let first = num(&rows[0], train_loss)?;
    let last = num(rows.last().unwrap(), train_loss)?;
    ensure(last < first, || format!("final train loss {last} not below initial {first}"))?;
    Ok(rows.len())
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let mut first_csv: Option<Vec<u8>> = None;
    let mut criteria: Vec<(&str, Box<dyn FnMut() -> Outcome>)> = vec![
        ("C1 universal matching", Box::new(universal_matching)),
        ("C2 fast transforms vs literal sums", Box::new(oracle_equivalence)),
        ("C3 hand-verified fixture", Box::new(hand_fixture)),
        ("C4 transfer truth table", Box::new(truth_table_and_self_transfer)),
        ("C5 sparsifier recovery", Box::new(sparsifier_recovery)),
        ("C6 conciseness", Box::new(conciseness)),
    ];
    let run_dir = root.path().join("run1");
    let csv_slot = &mut first_csv;
    criteria.push((
        "C7 end-to-end dynamics",
        Box::new(move || {
            let start = Instant::now();
            let csv = dynamics_run(&run_dir, Execution::Parallel)?;
            let rows = check_dynamics_csv(&csv)?;
            let elapsed = start.elapsed();
            within(elapsed, Duration::from_secs(15 * 60))?;
            *csv_slot = Some(csv);
            Ok(format!("{rows} checkpoint rows, all assertions hold, {elapsed:.1?}"))
        }),
    ));
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS  {name:<38} {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL  {name:<38} {detail}");
        }
    };
    for (name, mut check) in criteria {
        let outcome = check();
        report(name, outcome);
    }
    let determinism = match &first_csv {
        None => Err("needs a successful end-to-end run".to_string()),
        Some(first) => dynamics_run(&root.path().join("run2"), Execution::Sequential).and_then(|second| {
            ensure(&second == first, || "dynamics.csv differs between runs".into())?;
            Ok(format!("dynamics.csv byte-identical across a rerun ({} bytes), sequential vs parallel", first.len()))
        }),
    };
    report("C8 determinism", determinism);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
