//! Interaction metrics and loss gap across a sequence of training checkpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_samples, match_samples, select_samples, AnalysisSample, SampleAnalysis};
use crate::chart::{line_chart, Series};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fsutil::{create_dir, write_atomic, write_json};
use crate::masking::{compute_baseline, BaselineVector};
use crate::model::{load_checkpoint, Model};
use crate::par::{map_collect, map_range, Execution};
use crate::saliency::{aggregate_orders, ThresholdPolicy};
use crate::sparsify::SparsifyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DynamicsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub loss_gap: f64,
    pub N_bar: f64,
    pub H_bar: Option<f64>,
    pub mean_order: Option<f64>,
    pub order_hist: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub num_samples: usize,
    /// Seeds the choice of analysis samples from the test split.
    pub seed: u64,
    pub policy: ThresholdPolicy,
    pub sparsify: SparsifyConfig,
    pub execution: Execution,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            num_samples: 20,
            seed: 0,
            policy: ThresholdPolicy::default(),
            sparsify: SparsifyConfig::default(),
            execution: Execution::Parallel,
        }
    }
}

/// Mean cross-entropy on each split and their difference (test − train).
pub fn loss_gap(model: &Model, train: &Dataset, test: &Dataset) -> Result<(f64, f64, f64)> {
    let train_loss = model.mean_loss(train)?;
    let test_loss = model.mean_loss(test)?;
    Ok((train_loss, test_loss, test_loss - train_loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCheckpoint {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub n: usize,
    pub num_samples: usize,
    pub sample_ids: Vec<String>,
    pub records: Vec<DynamicsRecord>,
    pub skipped: Vec<SkippedCheckpoint>,
}

/// Everything a sweep holds fixed across checkpoints.
pub struct SweepContext {
    pub n: usize,
    pub baseline: BaselineVector,
    pub samples: Vec<AnalysisSample>,
    pub base_analyses: Vec<SampleAnalysis>,
}

impl SweepContext {
    /// Baseline values from the train split, analysis samples from the test
    /// split, and the baseline model's decompositions of those samples.
    pub fn new(base: &Model, config: &SweepConfig, train: &Dataset, test: &Dataset) -> Result<Self> {
        if config.num_samples == 0 {
            return Err(Error::InvalidArgument("num_samples must be at least 1".into()));
        }
        config.policy.validate()?;
        let n = train.input_dim();
        crate::subset::check_n(n)?;
        if test.input_dim() != n || base.input_dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if test.input_dim() != n { test.input_dim() } else { base.input_dim() },
            });
        }
        let baseline = compute_baseline(train)?;
        let samples = select_samples(test, config.num_samples, config.seed)?;
        let base_analyses =
            analyze_samples(base, &samples, &baseline, &config.sparsify, &config.policy, config.execution)?;
        Ok(SweepContext {
            n,
            baseline,
            samples,
            base_analyses,
        })
    }

    /// One record for one checkpoint, independent of any other checkpoint.
    pub fn record(&self, model: &Model, config: &SweepConfig, train: &Dataset, test: &Dataset) -> Result<DynamicsRecord> {
        let analyses = analyze_samples(
            model,
            &self.samples,
            &self.baseline,
            &config.sparsify,
            &config.policy,
            config.execution,
        )?;
        self.assemble(model, &analyses, train, test)
    }

    fn assemble(&self, model: &Model, analyses: &[SampleAnalysis], train: &Dataset, test: &Dataset) -> Result<DynamicsRecord> {
        let (train_loss, test_loss, gap) = loss_gap(model, train, test)?;
        let reports = match_samples(analyses, &self.base_analyses)?;
        let agg = aggregate_orders(&reports)?;
        Ok(DynamicsRecord {
            epoch: model.epoch,
            train_loss,
            test_loss,
            loss_gap: gap,
            N_bar: agg.n_bar,
            H_bar: agg.h_bar,
            mean_order: agg.mean_order,
            order_hist: (1..=self.n)
                .map(|k| (k, agg.per_order.get(&k).map_or(0, |s| s.count)))
                .collect(),
        })
    }
}

/// Sweeps in-memory models, which must be in strictly increasing epoch order.
pub fn sweep_models(
    models: &[Model],
    base: &Model,
    config: &SweepConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<DynamicsRecord>> {
    if models.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
        return Err(Error::InvalidArgument("models must be in strictly increasing epoch order".into()));
    }
    let ctx = SweepContext::new(base, config, train, test)?;
    sweep_with_context(&ctx, models, config, train, test)
}

fn sweep_with_context(
    ctx: &SweepContext,
    models: &[Model],
    config: &SweepConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<DynamicsRecord>> {
    for m in models {
        if m.input_dim() != ctx.n {
            return Err(Error::DimensionMismatch {
                expected: ctx.n,
                got: m.input_dim(),
            });
        }
    }
    // Flatten (checkpoint, sample) pairs into one pool of work items.
    let per = ctx.samples.len();
    let items = map_range(config.execution, models.len() * per, |i| {
        let (m, s) = (i / per, i % per);
        crate::analysis::analyze_sample(&models[m], &ctx.samples[s], &ctx.baseline, &config.sparsify, &config.policy)
    });
    let analyses = items.into_iter().collect::<Result<Vec<_>>>()?;
    let chunks: Vec<(&Model, &[SampleAnalysis])> = models.iter().zip(analyses.chunks(per)).collect();
    map_collect(config.execution, &chunks, |(model, a)| ctx.assemble(model, a, train, test))
        .into_iter()
        .collect()
}

/// Checkpoint files (`*.json`) in a directory, sorted by name.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_ckpt = path.extension().is_some_and(|e| e == "json")
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("ckpt_"));
        if is_ckpt {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads and sweeps checkpoint files. Unreadable checkpoints, and repeats of
/// an epoch already seen, are skipped with a warning and listed in the output.
pub fn sweep(
    checkpoints: &[PathBuf],
    baseline_ckpt: &Path,
    config: &SweepConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<SweepOutput> {
    let base = load_checkpoint(baseline_ckpt)?;
    let mut skipped = Vec::new();
    let mut models: Vec<(PathBuf, Model)> = Vec::new();
    for path in checkpoints {
        match load_checkpoint(path) {
            Ok(m) if m.input_dim() != train.input_dim() => {
                log::warn!("skipping {}: input width {} does not match data", path.display(), m.input_dim());
                skipped.push(SkippedCheckpoint {
                    path: path.clone(),
                    reason: format!("input width {} does not match data width {}", m.input_dim(), train.input_dim()),
                });
            }
            Ok(m) => models.push((path.clone(), m)),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedCheckpoint {
                    path: path.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    // stable, so the first file (by the caller's order) wins a tied epoch
    models.sort_by_key(|(_, m)| m.epoch);
    let mut unique: Vec<Model> = Vec::with_capacity(models.len());
    for (path, m) in models {
        if unique.last().is_some_and(|u| u.epoch == m.epoch) {
            log::warn!("skipping {}: duplicate checkpoint for epoch {}", path.display(), m.epoch);
            skipped.push(SkippedCheckpoint {
                path,
                reason: format!("duplicate epoch {}", m.epoch),
            });
        } else {
            unique.push(m);
        }
    }
    if unique.is_empty() {
        return Err(Error::InvalidArgument("no readable checkpoints to sweep".into()));
    }
    let ctx = SweepContext::new(&base, config, train, test)?;
    let records = sweep_with_context(&ctx, &unique, config, train, test)?;
    Ok(SweepOutput {
        n: ctx.n,
        num_samples: ctx.samples.len(),
        sample_ids: ctx.samples.iter().map(|s| s.id.clone()).collect(),
        records,
        skipped,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn records_to_csv(records: &[DynamicsRecord], n: usize) -> String {
    let mut out = String::from("epoch,train_loss,test_loss,loss_gap,N_bar,H_bar,mean_order");
    for k in 1..=n {
        out.push_str(&format!(",order_{k}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.test_loss,
            r.loss_gap,
            r.N_bar,
            fmt_opt(r.H_bar),
            fmt_opt(r.mean_order)
        ));
        for k in 1..=n {
            out.push_str(&format!(",{}", r.order_hist.get(&k).copied().unwrap_or(0)));
        }
        out.push('\n');
    }
    out
}

/// Writes `dynamics.csv`, `dynamics.json` and the SVG charts into `out_dir`.
pub fn emit(output: &SweepOutput, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = &output.records;
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to emit".into()));
    }
    create_dir(out_dir)?;
    let mut written = Vec::new();

    let csv_path = out_dir.join("dynamics.csv");
    write_atomic(&csv_path, records_to_csv(records, output.n).as_bytes())?;
    written.push(csv_path);

    let json_path = out_dir.join("dynamics.json");
    write_json(&json_path, output)?;
    written.push(json_path);

    let epochs: Vec<f64> = records.iter().map(|r| r.epoch as f64).collect();
    let series = |name: &'static str, f: &dyn Fn(&DynamicsRecord) -> Option<f64>| Series {
        name,
        points: epochs.iter().zip(records).map(|(&e, r)| (e, f(r))).collect(),
    };
    let charts = [
        (
            "loss.svg",
            line_chart(
                "Train / test loss and gap",
                "epoch",
                "cross-entropy",
                &[
                    series("train", &|r| Some(r.train_loss)),
                    series("test", &|r| Some(r.test_loss)),
                    series("gap", &|r| Some(r.loss_gap)),
                ],
            ),
        ),
        (
            "n_bar.svg",
            line_chart("Salient interactions per sample", "epoch", "N_bar", &[series("N_bar", &|r| Some(r.N_bar))]),
        ),
        (
            "h_bar.svg",
            line_chart("Mean generalization bit", "epoch", "H_bar", &[series("H_bar", &|r| r.H_bar)]),
        ),
        (
            "mean_order.svg",
            line_chart("Mean interaction order", "epoch", "order", &[series("mean order", &|r| r.mean_order)]),
        ),
    ];
    for (name, svg) in charts {
        let path = out_dir.join(name);
        write_atomic(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// A few landmarks of the curves, for eyeballing the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub first_epoch: usize,
    pub last_epoch: usize,
    pub train_loss: (f64, f64),
    pub loss_gap: (f64, f64),
    pub min_gap_epoch: usize,
    pub h_bar: (Option<f64>, Option<f64>),
    pub peak_h_bar: Option<(usize, f64)>,
    pub mean_order: (Option<f64>, Option<f64>),
    pub n_bar: (f64, f64),
}

pub fn summarize(records: &[DynamicsRecord]) -> Option<DynamicsSummary> {
    let first = records.first()?;
    let last = records.last()?;
    let min_gap = records.iter().min_by(|a, b| a.loss_gap.total_cmp(&b.loss_gap))?;
    let peak_h_bar = records
        .iter()
        .filter_map(|r| r.H_bar.map(|h| (r.epoch, h)))
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        });
    Some(DynamicsSummary {
        first_epoch: first.epoch,
        last_epoch: last.epoch,
        train_loss: (first.train_loss, last.train_loss),
        loss_gap: (first.loss_gap, last.loss_gap),
        min_gap_epoch: min_gap.epoch,
        h_bar: (first.H_bar, last.H_bar),
        peak_h_bar,
        mean_order: (first.mean_order, last.mean_order),
        n_bar: (first.N_bar, last.N_bar),
    })
}

impl fmt::Display for DynamicsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "epochs            {} -> {}", self.first_epoch, self.last_epoch)?;
        writeln!(f, "train loss        {:.4} -> {:.4}", self.train_loss.0, self.train_loss.1)?;
        writeln!(
            f,
            "loss gap          {:.4} -> {:.4} (smallest at epoch {})",
            self.loss_gap.0, self.loss_gap.1, self.min_gap_epoch
        )?;
        writeln!(f, "N_bar             {:.2} -> {:.2}", self.n_bar.0, self.n_bar.1)?;
        match self.peak_h_bar {
            Some((e, h)) => writeln!(
                f,
                "H_bar             {} -> {} (peak {h:.4} at epoch {e})",
                o(self.h_bar.0),
                o(self.h_bar.1)
            )?,
            None => writeln!(f, "H_bar             n/a")?,
        }
        writeln!(f, "mean order        {} -> {}", o(self.mean_order.0), o(self.mean_order.1))
    }
}
