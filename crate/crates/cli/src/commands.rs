use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use andor_core::analysis::{analyze_samples, match_samples, select_samples, AnalysisSample, SampleAnalysis};
use andor_core::dataset::{Dataset, Role};
use andor_core::dynamics::{emit, list_checkpoints, summarize, sweep, SweepConfig};
use andor_core::fsutil::{create_dir, write_atomic, write_json};
use andor_core::model::{train, Activation};
use andor_core::saliency::aggregate_orders;
use andor_core::synth::{gen_dataset, PlantedSpec};
use andor_core::verify::{run_verify, VerifyConfig};
use andor_core::{
    compute_baseline, init_model, load_checkpoint, Execution, Kind, Model, ModelSpec, SparsifyConfig, ThresholdPolicy,
    TrainConfig,
};
use serde::Serialize;

use crate::{Command, ExtractArgs, Failure, MatchArgs, SweepArgs, SynthArgs, TrainArgs, VerifyArgs};

pub struct Context {
    pub argv: Vec<String>,
    pub config: Option<PathBuf>,
    pub jobs: usize,
}

impl Context {
    fn execution(&self) -> Execution {
        if self.jobs > 1 && Execution::parallel_available() {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn invalid(e: impl Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

pub fn run(ctx: &Context, command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Train(a) => cmd_train(ctx, a),
        Command::Synth(a) => cmd_synth(ctx, a),
        Command::Extract(a) => cmd_extract(ctx, a),
        Command::Match(a) => cmd_match(ctx, a),
        Command::Sweep(a) => cmd_sweep(ctx, a),
        Command::Verify(a) => cmd_verify(ctx, a),
    }
}

#[derive(Serialize)]
struct Manifest<'a, A: Serialize, D: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    argv: &'a [String],
    config_file: Option<&'a Path>,
    jobs: usize,
    execution: Execution,
    args: &'a A,
    details: D,
    outputs: Vec<String>,
}

fn write_manifest<A: Serialize, D: Serialize>(
    ctx: &Context,
    command: &'static str,
    args: &A,
    details: D,
    out_dir: &Path,
    outputs: &[PathBuf],
) -> Result<(), Failure> {
    let manifest = Manifest {
        tool: "andor",
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: &ctx.argv,
        config_file: ctx.config.as_deref(),
        jobs: ctx.jobs,
        execution: ctx.execution(),
        args,
        details,
        outputs: outputs
            .iter()
            .map(|p| p.strip_prefix(out_dir).unwrap_or(p).display().to_string())
            .collect(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest).map_err(runtime)
}

// ---- validation helpers -------------------------------------------------

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} is not a readable file", path.display())))
    }
}

fn check_out_dir(path: &Path) -> Result<(), Failure> {
    if path.exists() && !path.is_dir() {
        return Err(invalid(format!("output path {} exists and is not a directory", path.display())));
    }
    Ok(())
}

fn load_data(path: &Path, role: Role, what: &str) -> Result<Dataset, Failure> {
    require_file(path, what)?;
    Dataset::load_csv(path, role).map_err(invalid)
}

fn load_model(path: &Path, what: &str) -> Result<Model, Failure> {
    require_file(path, what)?;
    load_checkpoint(path).map_err(invalid)
}

fn check_compatible(model: &Model, data: &Dataset, what: &str) -> Result<(), Failure> {
    if model.input_dim() != data.input_dim() {
        return Err(invalid(format!(
            "{what} has {} features but the model expects {}",
            data.input_dim(),
            model.input_dim()
        )));
    }
    data.check_labels(model.num_classes()).map_err(invalid)
}

fn analysis_settings(alpha: f64, iters: usize, samples: usize) -> Result<(ThresholdPolicy, SparsifyConfig), Failure> {
    let policy = ThresholdPolicy::relative(alpha);
    policy.validate().map_err(invalid)?;
    if iters == 0 {
        return Err(invalid("--sparsify-iters must be at least 1"));
    }
    if samples == 0 {
        return Err(invalid("--samples must be at least 1"));
    }
    Ok((policy, SparsifyConfig { max_iters: iters, ..Default::default() }))
}

// ---- train --------------------------------------------------------------

fn cmd_train(ctx: &Context, args: TrainArgs) -> Result<ExitCode, Failure> {
    let data = load_data(&args.data, Role::Train, "training data")?;
    let mut spec = ModelSpec::from_arch(&args.arch, args.seed).map_err(invalid)?;
    spec.activation = args.activation.parse::<Activation>().map_err(invalid)?;
    spec.validate().map_err(invalid)?;
    if spec.input_dim != data.input_dim() {
        return Err(invalid(format!(
            "--arch input width {} does not match {} features in {}",
            spec.input_dim,
            data.input_dim(),
            args.data.display()
        )));
    }
    data.check_labels(spec.num_classes).map_err(invalid)?;
    if args.batch_size == 0 || !(args.lr.is_finite() && args.lr > 0.0) {
        return Err(invalid("--lr and --batch-size must be positive"));
    }
    check_out_dir(&args.out)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        batch_size: args.batch_size,
        checkpoint_every: args.ckpt_every,
    };

    let mut model = init_model(&spec).map_err(runtime)?;
    let paths = train(&mut model, &data, &cfg, &args.out).map_err(runtime)?;
    let final_loss = model.loss_history.last().map(|p| p.train_loss);
    println!(
        "wrote {} checkpoints to {} (train loss {:.4} -> {:.4})",
        paths.len(),
        args.out.display(),
        model.loss_history.first().map_or(f64::NAN, |p| p.train_loss),
        final_loss.unwrap_or(f64::NAN)
    );
    #[derive(Serialize)]
    struct Details<'a> {
        model: &'a ModelSpec,
        train: &'a TrainConfig,
        final_epoch: usize,
        final_train_loss: Option<f64>,
    }
    let details = Details {
        model: &spec,
        train: &cfg,
        final_epoch: model.epoch,
        final_train_loss: final_loss,
    };
    write_manifest(ctx, "train", &args, details, &args.out, &paths)?;
    Ok(ExitCode::SUCCESS)
}

// ---- synth --------------------------------------------------------------

fn parse_kinds(s: &str) -> Result<Vec<Kind>, Failure> {
    let mut kinds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind = match part.to_ascii_lowercase().as_str() {
            "and" => Kind::And,
            "or" => Kind::Or,
            other => return Err(invalid(format!("unknown kind `{other}` (expected `and` or `or`)"))),
        };
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(invalid("--kinds must name at least one kind"));
    }
    Ok(kinds)
}

fn cmd_synth(ctx: &Context, args: SynthArgs) -> Result<ExitCode, Failure> {
    let kinds = parse_kinds(&args.kinds)?;
    let mut spec = PlantedSpec::random(args.n, args.planted, &kinds, args.seed).map_err(invalid)?;
    spec.num_train = args.num_train;
    spec.num_test = args.num_test;
    spec.noise_std = args.noise_std;
    spec.validate().map_err(invalid)?;
    check_out_dir(&args.out)?;

    let (train_set, test_set) = gen_dataset(&spec).map_err(runtime)?;
    create_dir(&args.out).map_err(runtime)?;
    let outputs = [args.out.join("train.csv"), args.out.join("test.csv"), args.out.join("truth.json")];
    train_set.save_csv(&outputs[0]).map_err(runtime)?;
    test_set.save_csv(&outputs[1]).map_err(runtime)?;
    write_json(&outputs[2], &spec).map_err(runtime)?;
    println!(
        "planted {} terms over {} variables; wrote {} train / {} test samples to {}",
        spec.planted.len(),
        spec.n,
        train_set.len(),
        test_set.len(),
        args.out.display()
    );
    for t in &spec.planted {
        let vars: Vec<String> = (0..spec.n).filter(|i| t.mask >> i & 1 == 1).map(|i| (i + 1).to_string()).collect();
        println!("  {:>3} {{{}}}  {:+.4}", t.kind, vars.join(","), t.coefficient);
    }
    write_manifest(ctx, "synth", &args, &spec, &args.out, &outputs)?;
    Ok(ExitCode::SUCCESS)
}

// ---- extract ------------------------------------------------------------

/// Loads the sample file and the file whose means give the masking baseline.
fn load_analysis_data(data: &Path, baseline_data: Option<&Path>) -> Result<(Dataset, Dataset), Failure> {
    let samples = load_data(data, Role::Test, "data")?;
    let baseline = match baseline_data {
        Some(p) => load_data(p, Role::Train, "baseline data")?,
        None => samples.clone(),
    };
    if baseline.input_dim() != samples.input_dim() {
        return Err(invalid("baseline data and sample data have different widths"));
    }
    Ok((samples, baseline))
}

#[derive(Serialize)]
struct SampleRecord<'a> {
    sample: &'a AnalysisSample,
    #[serde(flatten)]
    analysis: &'a SampleAnalysis,
}

fn sample_summary(s: &AnalysisSample, a: &SampleAnalysis) -> String {
    format!(
        "{}  label {}  salient {:>4}  objective {:.6}  gap {:.2e}{}",
        s.id,
        s.label,
        a.salient.len(),
        a.objective,
        a.objective - a.lower_bound,
        if a.converged { "" } else { "  (not converged)" }
    )
}

fn cmd_extract(ctx: &Context, args: ExtractArgs) -> Result<ExitCode, Failure> {
    let model = load_model(&args.ckpt, "checkpoint")?;
    let (data, baseline_data) = load_analysis_data(&args.data, args.baseline_data.as_deref())?;
    check_compatible(&model, &data, "data")?;
    let (policy, sparsify) = analysis_settings(args.alpha, args.sparsify_iters, args.samples)?;
    check_out_dir(&args.out)?;

    let baseline = compute_baseline(&baseline_data).map_err(runtime)?;
    let samples = select_samples(&data, args.samples, args.seed).map_err(runtime)?;
    let analyses =
        analyze_samples(&model, &samples, &baseline, &sparsify, &policy, ctx.execution()).map_err(runtime)?;
    create_dir(&args.out).map_err(runtime)?;
    let mut outputs = Vec::new();
    for (s, a) in samples.iter().zip(&analyses) {
        let path = args.out.join(format!("{}.json", s.id));
        write_json(&path, &SampleRecord { sample: s, analysis: a }).map_err(runtime)?;
        outputs.push(path);
        println!("{}", sample_summary(s, a));
    }
    #[derive(Serialize)]
    struct Details<'a> {
        epoch: usize,
        baseline: &'a [f64],
        policy: &'a ThresholdPolicy,
        sparsify: &'a SparsifyConfig,
    }
    let details = Details {
        epoch: model.epoch,
        baseline: &baseline.values,
        policy: &policy,
        sparsify: &sparsify,
    };
    write_manifest(ctx, "extract", &args, details, &args.out, &outputs)?;
    Ok(ExitCode::SUCCESS)
}

// ---- match --------------------------------------------------------------

fn cmd_match(ctx: &Context, args: MatchArgs) -> Result<ExitCode, Failure> {
    let model = load_model(&args.ckpt, "checkpoint")?;
    let base = load_model(&args.base_ckpt, "baseline checkpoint")?;
    let (data, baseline_data) = load_analysis_data(&args.data, args.baseline_data.as_deref())?;
    check_compatible(&model, &data, "data")?;
    check_compatible(&base, &data, "data")?;
    let (policy, sparsify) = analysis_settings(args.alpha, args.sparsify_iters, args.samples)?;
    check_out_dir(&args.out)?;

    let baseline = compute_baseline(&baseline_data).map_err(runtime)?;
    let samples = select_samples(&data, args.samples, args.seed).map_err(runtime)?;
    let exec = ctx.execution();
    let analyses = analyze_samples(&model, &samples, &baseline, &sparsify, &policy, exec).map_err(runtime)?;
    let base_analyses = analyze_samples(&base, &samples, &baseline, &sparsify, &policy, exec).map_err(runtime)?;
    let reports = match_samples(&analyses, &base_analyses).map_err(runtime)?;
    let aggregate = aggregate_orders(&reports).map_err(runtime)?;

    create_dir(&args.out).map_err(runtime)?;
    let mut outputs = Vec::new();
    for r in &reports {
        let path = args.out.join(format!("{}.json", r.sample_id));
        write_json(&path, r).map_err(runtime)?;
        outputs.push(path);
        println!("{}  salient {:>4}  H_bar {:.4}", r.sample_id, r.interactions.len(), r.H_bar);
    }
    let summary_path = args.out.join("summary.json");
    write_json(&summary_path, &aggregate).map_err(runtime)?;
    outputs.push(summary_path);
    match aggregate.h_bar {
        Some(h) => println!("H_bar {h:.4}  N_bar {:.2}  ({} samples)", aggregate.n_bar, aggregate.num_samples),
        None => println!("no salient interactions  ({} samples)", aggregate.num_samples),
    }
    #[derive(Serialize)]
    struct Details<'a> {
        epoch: usize,
        base_epoch: usize,
        policy: &'a ThresholdPolicy,
        sparsify: &'a SparsifyConfig,
    }
    let details = Details {
        epoch: model.epoch,
        base_epoch: base.epoch,
        policy: &policy,
        sparsify: &sparsify,
    };
    write_manifest(ctx, "match", &args, details, &args.out, &outputs)?;
    Ok(ExitCode::SUCCESS)
}

// ---- sweep --------------------------------------------------------------

fn cmd_sweep(ctx: &Context, args: SweepArgs) -> Result<ExitCode, Failure> {
    if !args.ckpt_dir.is_dir() {
        return Err(invalid(format!("{} is not a directory", args.ckpt_dir.display())));
    }
    let checkpoints = list_checkpoints(&args.ckpt_dir).map_err(invalid)?;
    if checkpoints.is_empty() {
        return Err(invalid(format!("no ckpt_*.json files in {}", args.ckpt_dir.display())));
    }
    let base = load_model(&args.base_ckpt, "baseline checkpoint")?;
    let train_set = load_data(&args.train, Role::Train, "train data")?;
    let test_set = load_data(&args.test, Role::Test, "test data")?;
    check_compatible(&base, &train_set, "train data")?;
    check_compatible(&base, &test_set, "test data")?;
    let (policy, sparsify) = analysis_settings(args.alpha, args.sparsify_iters, args.samples)?;
    check_out_dir(&args.out)?;

    let cfg = SweepConfig {
        num_samples: args.samples,
        seed: args.seed,
        policy,
        sparsify,
        execution: ctx.execution(),
    };
    let output = sweep(&checkpoints, &args.base_ckpt, &cfg, &train_set, &test_set).map_err(runtime)?;
    let mut outputs = emit(&output, &args.out).map_err(runtime)?;
    if let Some(summary) = summarize(&output.records) {
        let text = summary.to_string();
        print!("{text}");
        let path = args.out.join("summary.txt");
        write_atomic(&path, text.as_bytes()).map_err(runtime)?;
        outputs.push(path);
    }
    for s in &output.skipped {
        eprintln!("skipped {}: {}", s.path.display(), s.reason);
    }
    #[derive(Serialize)]
    struct Details<'a> {
        sweep: &'a SweepConfig,
        checkpoints: usize,
        records: usize,
        skipped: &'a [andor_core::dynamics::SkippedCheckpoint],
        sample_ids: &'a [String],
    }
    let details = Details {
        sweep: &cfg,
        checkpoints: checkpoints.len(),
        records: output.records.len(),
        skipped: &output.skipped,
        sample_ids: &output.sample_ids,
    };
    write_manifest(ctx, "sweep", &args, details, &args.out, &outputs)?;
    Ok(ExitCode::SUCCESS)
}

// ---- verify -------------------------------------------------------------

fn cmd_verify(ctx: &Context, args: VerifyArgs) -> Result<ExitCode, Failure> {
    if args.n == 0 || args.n > andor_core::subset::MAX_VARIABLES {
        return Err(invalid(format!("--n must be between 1 and {}", andor_core::subset::MAX_VARIABLES)));
    }
    if args.trials == 0 || args.sparsify_iters == 0 {
        return Err(invalid("--trials and --sparsify-iters must be at least 1"));
    }
    if let Some(out) = &args.out {
        check_out_dir(out)?;
    }
    let cfg = VerifyConfig {
        n: args.n,
        trials: args.trials,
        seed: args.seed,
        sparsify: SparsifyConfig { max_iters: args.sparsify_iters, ..Default::default() },
        execution: ctx.execution(),
    };
    let outcomes = run_verify(&cfg).map_err(runtime)?;
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if let Some(out) = &args.out {
        create_dir(out).map_err(runtime)?;
        let path = out.join("verify.json");
        write_json(&path, &outcomes).map_err(runtime)?;
        write_manifest(ctx, "verify", &args, &cfg, out, &[path])?;
    }
    if failed > 0 {
        return Err(runtime(format!("{failed} of {} checks failed", outcomes.len())));
    }
    println!("all {} checks passed", outcomes.len());
    Ok(ExitCode::SUCCESS)
}
