//! `kkm` command-line interface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::baselines::{lloyd_kmeans, sgd_minibatch_kmeans, BaselineConfig};
use crate::collectives::{message_size_bound, plan_min_batches, footprint, ResourceModel};
use crate::dataset::DataSet;
use crate::engine::GdConfig;
use crate::error::{KkmError, Result};
use crate::generate::{generate_noisy, generate_toy2d};
use crate::io;
use crate::kernels::{estimate_d_max, KernelKind, KernelSpec};
use crate::lifecycle::{assign_to_prototypes, run_clustering, BatchTrace, RunConfig, RunOutput};
use crate::metrics::{elbow_select, evaluate, EvaluationReport};
use crate::sampling::SamplingStrategy;

pub const WORKERS_ENV: &str = "KKM_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "kkm", version, about = "Mini-batch kernel k-means")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a dataset and write labels, medoids, traces and metrics.
    Cluster(ClusterArgs),
    /// Score a label CSV against ground truth.
    Evaluate(EvaluateArgs),
    /// Smallest batch count that fits a per-worker memory budget.
    Plan(PlanArgs),
    /// Scan a range of cluster counts and pick the knee of the cost curve.
    Elbow(ElbowArgs),
    /// Run an input-space k-means baseline.
    Baseline(BaselineArgs),
    /// Write the four-Gaussian 2D toy dataset as CSV.
    GenToy(GenToyArgs),
    /// Write noisy replicas of a dataset.
    GenNoisy(GenNoisyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Auto,
    Idx,
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Sample file (IDX images, CSV or libsvm).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
    /// IDX label file matching --input.
    #[arg(long)]
    pub idx_labels: Option<PathBuf>,
    /// The last CSV column holds integer class labels.
    #[arg(long)]
    pub csv_labels: bool,
    /// Feature count for libsvm input.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalInputArgs {
    /// Held-out samples labeled by nearest medoid after training (same format as --input).
    #[arg(long)]
    pub eval_input: Option<PathBuf>,
    #[arg(long)]
    pub eval_idx_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    /// Gaussian width: `auto` (scale × estimated diameter) or a number.
    #[arg(long, default_value = "auto")]
    pub sigma: String,
    /// Multiplier on the estimated diameter when --sigma is auto.
    #[arg(long, default_value_t = 4.0)]
    pub sigma_scale: f64,
    /// Samples used to estimate the diameter.
    #[arg(long, default_value_t = crate::kernels::DEFAULT_DMAX_SAMPLE)]
    pub dmax_sample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Stride,
    Block,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1)]
    pub batches: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sparsity: f64,
    /// Worker lanes; the environment variable applies when the flag is absent.
    #[arg(long, env = WORKERS_ENV, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = SamplingArg::Stride)]
    pub sampling: SamplingArg,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    /// Stop the inner loop once at most this many labels change.
    #[arg(long, default_value_t = 0)]
    pub tolerance: usize,
    /// Also consider the previous global medoid when merging.
    #[arg(long)]
    pub merge_keep_previous: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub eval: EvalInputArgs,
    #[arg(long)]
    pub clusters: usize,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-lane collective traffic to comm.json.
    #[arg(long)]
    pub trace_comm: bool,
    /// Print the metrics summary as JSON on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub samples: u64,
    #[arg(long)]
    pub clusters: u64,
    #[arg(long, env = WORKERS_ENV, default_value_t = 1)]
    pub workers: u64,
    #[arg(long, default_value_t = 8)]
    pub scalar_bytes: u64,
    /// Per-worker budget in bytes; K, M, G and T suffixes are binary multiples.
    #[arg(long, value_parser = parse_bytes)]
    pub memory: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ElbowArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Inclusive range `a:b`.
    #[arg(long, value_parser = parse_range)]
    pub c_range: (usize, usize),
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Lloyd,
    Sgd,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub eval: EvalInputArgs,
    #[arg(long)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub sgd_batch_size: usize,
    #[arg(long)]
    pub sgd_iterations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenToyArgs {
    #[arg(long, default_value_t = 10_000)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output (x, y, label).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenNoisyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 20)]
    pub copies: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output samples: `.csv` writes CSV (labels last), anything else an f32 IDX file.
    #[arg(long)]
    pub out: PathBuf,
    /// IDX label output when writing IDX samples.
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
}

fn parse_bytes(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    let (num, mult) = match s.char_indices().find(|(_, c)| c.is_ascii_alphabetic()) {
        None => (s, 1u64),
        Some((i, _)) => {
            let unit = s[i..].to_ascii_uppercase();
            let m = match unit.trim_end_matches("IB").trim_end_matches('B') {
                "" => 1,
                "K" => 1 << 10,
                "M" => 1 << 20,
                "G" => 1 << 30,
                "T" => 1 << 40,
                _ => return Err(format!("unknown size unit '{}'", &s[i..])),
            };
            (&s[..i], m)
        }
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("bad size '{s}'"))?;
    if v.is_nan() || v <= 0.0 {
        return Err("size must be positive".into());
    }
    Ok((v * mult as f64) as u64)
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected a:b")?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start '{a}'"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end '{b}'"))?;
    if a == 0 || b < a + 2 {
        return Err("range needs at least three positive values".into());
    }
    Ok((a, b))
}

pub fn load_input(args: &InputArgs) -> Result<DataSet> {
    load_path(&args.input, args.format, args.idx_labels.as_deref(), args.csv_labels, args.dim)
}

fn load_path(path: &Path, format: InputFormat, idx_labels: Option<&Path>, csv_labels: bool, dim: Option<usize>) -> Result<DataSet> {
    let format = match format {
        InputFormat::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => InputFormat::Csv,
            Some("svm") | Some("libsvm") => InputFormat::Libsvm,
            _ => InputFormat::Idx,
        },
        f => f,
    };
    match format {
        InputFormat::Idx => io::load_idx(path, idx_labels),
        InputFormat::Csv => io::load_csv(path, csv_labels),
        InputFormat::Libsvm => {
            let dim = dim.ok_or_else(|| KkmError::input("libsvm input needs --dim"))?;
            io::load_libsvm(path, dim)
        }
        InputFormat::Auto => unreachable!("resolved above"),
    }
}

fn load_eval(input: &InputArgs, eval: &EvalInputArgs) -> Result<Option<DataSet>> {
    eval.eval_input
        .as_deref()
        .map(|p| load_path(p, input.format, eval.eval_idx_labels.as_deref(), input.csv_labels, input.dim))
        .transpose()
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub mode: String,
    pub d_max: Option<f64>,
    pub sigma: f64,
}

pub fn resolve_kernel(args: &KernelArgs, data: &DataSet, seed: u64) -> Result<(KernelSpec, SigmaReport)> {
    match args.kernel {
        KernelArg::Linear => Ok((
            KernelSpec::linear(),
            SigmaReport { mode: "unused".into(), d_max: None, sigma: 0.0 },
        )),
        KernelArg::Rbf => {
            let (sigma, d_max, mode) = if args.sigma == "auto" {
                let probe = KernelSpec {
                    kind: KernelKind::Rbf,
                    sigma: 1.0,
                    d_max_sample_size: args.dmax_sample,
                };
                probe.validate()?;
                let d_max = estimate_d_max(data, &probe, seed);
                if d_max <= 0.0 {
                    return Err(KkmError::input("all sampled points coincide; cannot derive sigma"));
                }
                (args.sigma_scale * d_max, Some(d_max), "auto".to_string())
            } else {
                let v: f64 = args
                    .sigma
                    .parse()
                    .map_err(|_| KkmError::input(format!("--sigma must be 'auto' or a number, got '{}'", args.sigma)))?;
                (v, None, "fixed".to_string())
            };
            let mut spec = KernelSpec::rbf(sigma)?;
            spec.d_max_sample_size = args.dmax_sample;
            Ok((spec, SigmaReport { mode, d_max, sigma }))
        }
    }
}

pub fn run_config(clusters: usize, run: &RunArgs, kernel: KernelSpec) -> RunConfig {
    RunConfig {
        clusters,
        batches: run.batches,
        sparsity: run.sparsity,
        workers: run.workers,
        kernel,
        sampling: match run.sampling {
            SamplingArg::Stride => SamplingStrategy::Stride,
            SamplingArg::Block => SamplingStrategy::Block,
        },
        seed: run.seed,
        restarts: run.restarts,
        gd: GdConfig {
            max_iters: run.max_iters,
            label_change_tolerance: run.tolerance,
        },
        merge_keeps_previous: run.merge_keep_previous,
        record_label_history: false,
    }
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| KkmError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| KkmError::io(dir, e))
}

fn dataset_json(data: &DataSet) -> serde_json::Value {
    json!({
        "source": data.provenance.source,
        "format": data.provenance.format,
        "notes": data.provenance.notes,
        "samples": data.len(),
        "features": data.dim(),
        "fingerprint_sha256": data.fingerprint(),
    })
}

fn report_for(data: &DataSet, labels: &[u32], cost: Option<f64>) -> Result<Option<EvaluationReport>> {
    data.labels().map(|truth| evaluate(truth, labels, cost)).transpose()
}

fn write_cost_csv(path: &Path, traces: &[BatchTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| KkmError::io(path, e.into()))?;
    let err = |e: csv::Error| KkmError::io(path, e.into());
    w.write_record(["batch", "iteration", "cost", "changes"]).map_err(err)?;
    for t in traces {
        for (it, (c, ch)) in t.cost_trace.iter().zip(&t.changes).enumerate() {
            w.write_record([t.batch.to_string(), it.to_string(), c.to_string(), ch.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| KkmError::io(path, e))
}

/// Runs `cluster` and returns the metrics document it wrote.
pub fn cmd_cluster(args: &ClusterArgs) -> Result<serde_json::Value> {
    let t_load = Instant::now();
    let data = load_input(&args.input)?;
    let eval = load_eval(&args.input, &args.eval)?;
    let load_s = t_load.elapsed().as_secs_f64();
    let (spec, sigma) = resolve_kernel(&args.kernel, &data, args.run.seed)?;
    let cfg = run_config(args.clusters, &args.run, spec);
    let out = run_clustering(&data, &cfg)?;
    ensure_dir(&args.out)?;
    write_run_outputs(&args.out, &data, eval.as_ref(), &cfg, &out, &sigma, load_s, args.trace_comm)
}

#[allow(clippy::too_many_arguments)]
fn write_run_outputs(
    dir: &Path,
    data: &DataSet,
    eval: Option<&DataSet>,
    cfg: &RunConfig,
    out: &RunOutput,
    sigma: &SigmaReport,
    load_s: f64,
    trace_comm: bool,
) -> Result<serde_json::Value> {
    let labels_path = dir.join("labels.csv");
    let medoids_path = dir.join("medoids.csv");
    io::write_labels_csv(&labels_path, &out.labels)?;
    io::write_medoids_csv(&medoids_path, &out.state.medoids)?;
    write_cost_csv(&dir.join("cost_trace.csv"), &out.traces)?;

    let stripped: Vec<BatchTrace> = out
        .traces
        .iter()
        .map(|t| BatchTrace { comm: Vec::new(), ..t.clone() })
        .collect();
    io::write_json(&dir.join("traces.json"), &stripped)?;

    if trace_comm {
        let n = data.len() as u64;
        let comm: Vec<_> = out
            .traces
            .iter()
            .map(|t| {
                json!({
                    "batch": t.batch,
                    "message_bound_bytes": message_size_bound(n, cfg.batches as u64, cfg.workers as u64, cfg.clusters as u64, 8),
                    "footprint_bytes": footprint(n, cfg.batches as u64, cfg.clusters as u64, cfg.workers as u64, 8) as u64,
                    "lanes": t.comm,
                })
            })
            .collect();
        io::write_json(&dir.join("comm.json"), &comm)?;
    }

    let train = report_for(data, &out.labels, Some(out.global_cost))?;
    let eval_report = match eval {
        Some(e) => {
            let protos: Vec<Option<&[f64]>> = out.state.medoids.iter().map(|m| m.map(|g| data.row(g))).collect();
            let (labels, cost) = assign_to_prototypes(&cfg.kernel, e, &protos, cfg.workers)?;
            io::write_labels_csv(&dir.join("eval_labels.csv"), &labels)?;
            report_for(e, &labels, Some(cost))?
        }
        None => None,
    };
    let max_disp = out
        .traces
        .iter()
        .flat_map(|t| t.displacement.iter().flatten().copied())
        .fold(0.0, f64::max);
    let metrics = json!({
        "global_cost": out.global_cost,
        "train": train,
        "eval": eval_report,
        "best_restart": out.best_restart,
        "restarts": out.restarts,
        "max_medoid_displacement": max_disp,
        "batches": out.traces.iter().map(|t| json!({
            "batch": t.batch,
            "size": t.size,
            "landmarks": t.landmarks,
            "iterations": t.iterations,
            "converged": t.converged,
            "final_cost": t.cost_trace.last(),
        })).collect::<Vec<_>>(),
    });
    io::write_json(&dir.join("metrics.json"), &metrics)?;

    let manifest = json!({
        "tool": "kkm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "cluster",
        "config": cfg,
        "sigma": sigma,
        "dataset": dataset_json(data),
        "eval_dataset": eval.map(dataset_json),
        "seeds": {
            "run": cfg.seed,
            "restarts": out.restarts.iter().map(|r| r.seed).collect::<Vec<_>>(),
        },
        "timings_s": {
            "load": load_s,
            "fetch": out.timings.fetch_s,
            "kernel": out.timings.kernel_s,
            "inner": out.timings.inner_s,
            "merge": out.timings.merge_s,
            "final_assignment": out.timings.final_s,
        },
        "outputs": {
            "labels_sha256": file_sha256(&labels_path)?,
            "medoids_sha256": file_sha256(&medoids_path)?,
        },
    });
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(metrics)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport> {
    let pred = io::read_labels_csv(&args.labels)?;
    let truth = io::read_labels_csv(&args.truth)?;
    evaluate(&truth, &pred, None)
}

pub fn cmd_plan(args: &PlanArgs) -> Result<serde_json::Value> {
    let model = ResourceModel::new(args.scalar_bytes, args.memory)?;
    let rep = plan_min_batches(args.samples, args.clusters, args.workers, &model)?;
    let lo = rep.b_min.saturating_sub(2).max(1);
    let hi = (rep.b_min + 2).min(args.samples);
    let table: Vec<_> = (lo..=hi)
        .map(|b| {
            let f = footprint(args.samples, b, args.clusters, args.workers, args.scalar_bytes);
            json!({ "batches": b, "footprint_bytes": f as u64, "fits": f <= args.memory as u128 })
        })
        .collect();
    Ok(json!({
        "samples": args.samples,
        "clusters": args.clusters,
        "workers": args.workers,
        "scalar_bytes": args.scalar_bytes,
        "memory_bytes": args.memory,
        "b_min": rep.b_min,
        "footprint_bytes": rep.footprint_bytes as u64,
        "closed_form_b": finite_or_null(rep.closed_form),
        "continuous_b": finite_or_null(rep.continuous),
        "message_bound_bytes": rep.message_bound_bytes,
        "footprint_table": table,
    }))
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

pub fn cmd_elbow(args: &ElbowArgs) -> Result<serde_json::Value> {
    let data = load_input(&args.input)?;
    let (spec, sigma) = resolve_kernel(&args.kernel, &data, args.run.seed)?;
    let mut costs = BTreeMap::new();
    for c in args.c_range.0..=args.c_range.1 {
        let cfg = run_config(c, &args.run, spec);
        let out = run_clustering(&data, &cfg)?;
        log::info!("C = {c}: global cost {}", out.global_cost);
        costs.insert(c, out.global_cost);
    }
    let choice = elbow_select(&costs)?;
    Ok(json!({
        "sigma": sigma,
        "costs": costs.iter().map(|(c, v)| json!({"clusters": c, "cost": v})).collect::<Vec<_>>(),
        "second_differences": choice.second_differences,
        "knee_found": choice.knee_found,
        "selected": choice.selected,
    }))
}

pub fn cmd_baseline(args: &BaselineArgs) -> Result<serde_json::Value> {
    let t_load = Instant::now();
    let data = load_input(&args.input)?;
    let eval = load_eval(&args.input, &args.eval)?;
    let load_s = t_load.elapsed().as_secs_f64();
    let cfg = BaselineConfig {
        clusters: args.clusters,
        seed: args.seed,
        max_iters: args.max_iters,
        sgd_batch_size: args.sgd_batch_size,
        sgd_iterations: args.sgd_iterations,
    };
    let t = Instant::now();
    let out = match args.method {
        BaselineMethod::Lloyd => lloyd_kmeans(&data, &cfg)?,
        BaselineMethod::Sgd => sgd_minibatch_kmeans(&data, &cfg)?,
    };
    let run_s = t.elapsed().as_secs_f64();
    ensure_dir(&args.out)?;
    let labels_path = args.out.join("labels.csv");
    io::write_labels_csv(&labels_path, &out.labels)?;
    let d = data.dim();
    let centers = DataSet::new(cfg.clusters, d, out.centers.clone(), None)?;
    io::write_dataset_csv(&args.out.join("centers.csv"), &centers)?;

    let eval_report = match &eval {
        Some(e) => {
            let protos: Vec<Option<&[f64]>> = out.centers.chunks_exact(d).map(Some).collect();
            let (labels, cost) = assign_to_prototypes(&KernelSpec::linear(), e, &protos, 1)?;
            io::write_labels_csv(&args.out.join("eval_labels.csv"), &labels)?;
            report_for(e, &labels, Some(cost))?
        }
        None => None,
    };
    let metrics = json!({
        "method": format!("{:?}", args.method).to_lowercase(),
        "cost": out.cost,
        "iterations": out.iterations,
        "train": report_for(&data, &out.labels, Some(out.cost))?,
        "eval": eval_report,
    });
    io::write_json(&args.out.join("metrics.json"), &metrics)?;
    io::write_json(&args.out.join("traces.json"), &json!({ "cost_trace": out.cost_trace }))?;
    let manifest = json!({
        "tool": "kkm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "baseline",
        "method": format!("{:?}", args.method).to_lowercase(),
        "config": cfg,
        "sgd_iterations_resolved": cfg.resolved_sgd_iterations(data.len()),
        "dataset": dataset_json(&data),
        "seeds": { "run": cfg.seed },
        "timings_s": { "load": load_s, "run": run_s },
        "outputs": { "labels_sha256": file_sha256(&labels_path)? },
    });
    io::write_json(&args.out.join("manifest.json"), &manifest)?;
    Ok(metrics)
}

pub fn cmd_gen_toy(args: &GenToyArgs) -> Result<()> {
    let data = generate_toy2d(args.per_cluster, args.seed)?;
    io::write_dataset_csv(&args.out, &data)
}

pub fn cmd_gen_noisy(args: &GenNoisyArgs) -> Result<()> {
    let base = load_input(&args.input)?;
    let data = generate_noisy(&base, args.copies, args.noise_fraction, args.seed)?;
    if args.out.extension().and_then(|e| e.to_str()) == Some("csv") {
        return io::write_dataset_csv(&args.out, &data);
    }
    io::write_idx_images_f32(&args.out, &data)?;
    match (&args.out_labels, data.labels()) {
        (Some(p), Some(l)) => io::write_idx_labels(p, l),
        (Some(_), None) => Err(KkmError::input("--out-labels given but the base dataset has no labels")),
        _ => Ok(()),
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| KkmError::state(e.to_string()))?;
    println!("{s}");
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster(a) => {
            let m = cmd_cluster(&a)?;
            if a.json {
                print_json(&m)?;
            } else {
                println!("global cost {}", m["global_cost"]);
                if let Some(acc) = m["train"]["accuracy"].as_f64() {
                    println!("train accuracy {acc:.4}, nmi {:.4}", m["train"]["nmi"].as_f64().unwrap_or(f64::NAN));
                }
                if let Some(acc) = m["eval"]["accuracy"].as_f64() {
                    println!("eval accuracy {acc:.4}, nmi {:.4}", m["eval"]["nmi"].as_f64().unwrap_or(f64::NAN));
                }
                println!("outputs written to {}", a.out.display());
            }
        }
        Command::Evaluate(a) => print_json(&cmd_evaluate(&a)?)?,
        Command::Plan(a) => {
            let p = cmd_plan(&a)?;
            if a.json {
                print_json(&p)?;
            } else {
                println!("B_min (scan): {}", p["b_min"]);
                println!("B (printed closed form): {}", p["closed_form_b"]);
                println!("B (continuous root): {}", p["continuous_b"]);
                println!("footprint at B_min: {} bytes", p["footprint_bytes"]);
                println!("message bound at B_min: {} bytes", p["message_bound_bytes"]);
                println!("{:>10} {:>20} fits", "B", "footprint");
                for row in p["footprint_table"].as_array().into_iter().flatten() {
                    println!(
                        "{:>10} {:>20} {}",
                        row["batches"].as_u64().unwrap_or(0),
                        row["footprint_bytes"].as_u64().unwrap_or(0),
                        row["fits"]
                    );
                }
            }
        }
        Command::Elbow(a) => {
            let e = cmd_elbow(&a)?;
            if a.json {
                print_json(&e)?;
            } else {
                println!("{:>8} {:>20}", "C", "cost");
                for row in e["costs"].as_array().into_iter().flatten() {
                    println!(
                        "{:>8} {:>20.6}",
                        row["clusters"].as_u64().unwrap_or(0),
                        row["cost"].as_f64().unwrap_or(f64::NAN)
                    );
                }
                println!("selected C = {}", e["selected"]);
            }
        }
        Command::Baseline(a) => {
            let m = cmd_baseline(&a)?;
            if a.json {
                print_json(&m)?;
            } else {
                println!("cost {}", m["cost"]);
                if let Some(acc) = m["train"]["accuracy"].as_f64() {
                    println!("train accuracy {acc:.4}");
                }
                if let Some(acc) = m["eval"]["accuracy"].as_f64() {
                    println!("eval accuracy {acc:.4}");
                }
            }
        }
        Command::GenToy(a) => cmd_gen_toy(&a)?,
        Command::GenNoisy(a) => cmd_gen_noisy(&a)?,
    }
    Ok(())
}
