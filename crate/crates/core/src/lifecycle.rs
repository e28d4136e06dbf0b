//! Outer loop: initialization, medoid extraction, cross-batch merging and
//! end-to-end orchestration.
//!
//! Batches are processed strictly in order. Within a batch all restarts run in
//! lockstep on the same lanes, so with `s = 1` every lane computes its kernel
//! slab once and reuses it for every restart.

use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::collectives::{offer, run_lanes, Candidate, Lane, WorkerPartition};
use crate::dataset::DataSet;
use crate::engine::{inner_gd_loop, BatchKernel, GdConfig};
use crate::error::{KkmError, Result};
use crate::kernels::{kernel_block, KernelSpec};
use crate::metrics::medoid_displacement;
use crate::rng::substream;
use crate::sampling::{landmarks_for_batch, partition, validate_sparsity, SamplingStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub clusters: usize,
    pub batches: usize,
    pub sparsity: f64,
    pub workers: usize,
    pub kernel: KernelSpec,
    pub sampling: SamplingStrategy,
    pub seed: u64,
    pub restarts: usize,
    pub gd: GdConfig,
    /// Also offer the previous global medoid as a merge candidate.
    pub merge_keeps_previous: bool,
    /// Keep every inner iteration's labels in the batch traces.
    pub record_label_history: bool,
}

impl RunConfig {
    pub fn new(clusters: usize, batches: usize, kernel: KernelSpec) -> Self {
        Self {
            clusters,
            batches,
            sparsity: 1.0,
            workers: 1,
            kernel,
            sampling: SamplingStrategy::Stride,
            seed: 0,
            restarts: 1,
            gd: GdConfig::default(),
            merge_keeps_previous: false,
            record_label_history: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.clusters == 0 || self.batches == 0 || self.workers == 0 || self.restarts == 0 {
            return Err(KkmError::input(
                "clusters, batches, workers and restarts must all be at least 1",
            ));
        }
        validate_sparsity(self.sparsity)?;
        self.kernel.validate()?;
        self.gd.validate()?;
        if n < self.clusters {
            return Err(KkmError::input(format!(
                "{n} samples cannot form {} clusters",
                self.clusters
            )));
        }
        if self.batches * self.clusters > n {
            return Err(KkmError::input(format!(
                "B = {} exceeds N / C = {n} / {}; every batch needs at least C samples",
                self.batches, self.clusters
            )));
        }
        Ok(())
    }
}

/// Global medoids (dataset indices) and the mass absorbed into each cluster so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub medoids: Vec<Option<usize>>,
    pub counts: Vec<u64>,
    pub batch_counter: usize,
}

impl GlobalState {
    pub fn empty(clusters: usize) -> Self {
        Self {
            medoids: vec![None; clusters],
            counts: vec![0; clusters],
            batch_counter: 0,
        }
    }
}

/// Kernel k-means++ seeding over `rows`; returns `C` distinct positions.
pub fn kernel_kmeanspp_init<R: Rng>(
    spec: &KernelSpec,
    rows: &[&[f64]],
    clusters: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = rows.len();
    if clusters == 0 || n < clusters {
        return Err(KkmError::input(format!(
            "k-means++ needs at least C = {clusters} samples, got {n}"
        )));
    }
    let diag: Vec<f64> = rows.iter().map(|x| spec.apply(x, x)).collect();
    let mut chosen = Vec::with_capacity(clusters);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut d2 = vec![f64::INFINITY; n];
    while chosen.len() < clusters {
        let m = *chosen.last().expect("at least one medoid");
        for i in 0..n {
            let d = spec.feature_distance2(diag[i], spec.apply(rows[i], rows[m]), diag[m]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        let weights: Vec<f64> = (0..n).map(|i| if taken[i] { 0.0 } else { d2[i] }).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(dist) => dist.sample(rng),
            Err(_) => {
                // Every remaining point coincides with a medoid.
                let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        taken[next] = true;
    }
    Ok(chosen)
}

/// Nearest medoid in kernel distance `K(x,x) − 2K(x,m) + K(m,m)`; lowest `j` on ties.
pub fn init_labels_from_medoids(
    spec: &KernelSpec,
    rows: &[&[f64]],
    medoids: &[Option<&[f64]>],
) -> Result<Vec<u32>> {
    let present: Vec<(usize, &[f64], f64)> = medoids
        .iter()
        .enumerate()
        .filter_map(|(j, m)| m.map(|m| (j, m, spec.apply(m, m))))
        .collect();
    if present.is_empty() {
        return Err(KkmError::state("no medoid available to initialize labels"));
    }
    Ok(rows
        .iter()
        .map(|x| nearest(spec, x, &present).0 as u32)
        .collect())
}

fn nearest(spec: &KernelSpec, x: &[f64], present: &[(usize, &[f64], f64)]) -> (usize, f64) {
    let kxx = spec.apply(x, x);
    let mut best = (usize::MAX, f64::INFINITY);
    for &(j, m, kmm) in present {
        let d = kxx - 2.0 * spec.apply(x, m) + kmm;
        if best.0 == usize::MAX || d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Local medoid proposals: `argmin_l K_ll − 2 f_lj` over the given rows.
/// Clusters with no landmark members propose nothing.
pub fn local_medoid_candidates(
    spec: &KernelSpec,
    rows: &[&[f64]],
    global_index: &[usize],
    similarity: &[f64],
    counts: &[u64],
) -> Vec<Option<Candidate>> {
    let c = counts.len();
    let mut best = vec![None; c];
    for (r, x) in rows.iter().enumerate() {
        let kll = spec.apply(x, x);
        for j in 0..c {
            if counts[j] == 0 {
                continue;
            }
            let value = kll - 2.0 * similarity[r * c + j];
            offer(&mut best[j], Candidate { value, index: global_index[r] });
        }
    }
    best
}

/// Batch medoids from the whole batch on one lane.
pub fn extract_medoids(
    spec: &KernelSpec,
    rows: &[&[f64]],
    global_index: &[usize],
    similarity: &[f64],
    counts: &[u64],
) -> Vec<Option<usize>> {
    local_medoid_candidates(spec, rows, global_index, similarity, counts)
        .into_iter()
        .map(|c| c.map(|c| c.index))
        .collect()
}

/// What the merge does to one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeAction {
    Keep,
    Replace(usize),
    /// Search the batch with weight `alpha` on the batch medoid.
    Combine { previous: usize, batch: usize, alpha: f64 },
}

/// `α_j = w / (n_j + w)` and the action for each cluster.
pub fn merge_plan(
    global: &GlobalState,
    batch_medoids: &[Option<usize>],
    batch_counts: &[u64],
) -> (Vec<MergeAction>, Vec<f64>) {
    let mut actions = Vec::with_capacity(batch_counts.len());
    let mut alphas = Vec::with_capacity(batch_counts.len());
    for j in 0..batch_counts.len() {
        let w = batch_counts[j];
        match (batch_medoids[j], global.medoids[j]) {
            (None, _) => {
                actions.push(MergeAction::Keep);
                alphas.push(0.0);
            }
            (Some(_), _) if w == 0 => {
                actions.push(MergeAction::Keep);
                alphas.push(0.0);
            }
            (Some(b), None) => {
                actions.push(MergeAction::Replace(b));
                alphas.push(1.0);
            }
            (Some(b), Some(_)) if global.counts[j] == 0 => {
                actions.push(MergeAction::Replace(b));
                alphas.push(1.0);
            }
            (Some(b), Some(prev)) => {
                let alpha = w as f64 / (global.counts[j] + w) as f64;
                actions.push(MergeAction::Combine { previous: prev, batch: b, alpha });
                alphas.push(alpha);
            }
        }
    }
    (actions, alphas)
}

/// Local proposals for the merged medoid:
/// `argmin_x K(x,x) − 2(1−α)K(x,m_j) − 2αK(x,m_j^i)`.
pub fn local_merge_candidates(
    spec: &KernelSpec,
    data: &DataSet,
    rows: &[&[f64]],
    global_index: &[usize],
    actions: &[MergeAction],
    offer_previous: bool,
) -> Vec<Option<Candidate>> {
    let objective = |x: &[f64], prev: &[f64], batch: &[f64], alpha: f64| {
        spec.apply(x, x) - 2.0 * (1.0 - alpha) * spec.apply(x, prev) - 2.0 * alpha * spec.apply(x, batch)
    };
    actions
        .iter()
        .map(|a| match *a {
            MergeAction::Keep | MergeAction::Replace(_) => None,
            MergeAction::Combine { previous, batch, alpha } => {
                let (prev_row, batch_row) = (data.row(previous), data.row(batch));
                let mut best = None;
                for (x, &gi) in rows.iter().zip(global_index) {
                    offer(&mut best, Candidate { value: objective(x, prev_row, batch_row, alpha), index: gi });
                }
                if offer_previous {
                    let value = objective(prev_row, prev_row, batch_row, alpha);
                    offer(&mut best, Candidate { value, index: previous });
                }
                best
            }
        })
        .collect()
}

/// Applies the merge given the reduced candidates.
pub fn apply_merge(
    global: &GlobalState,
    actions: &[MergeAction],
    winners: &[Option<Candidate>],
    batch_counts: &[u64],
) -> GlobalState {
    let mut next = global.clone();
    for (j, a) in actions.iter().enumerate() {
        match *a {
            MergeAction::Keep => continue,
            MergeAction::Replace(b) => next.medoids[j] = Some(b),
            MergeAction::Combine { previous, .. } => {
                next.medoids[j] = Some(winners[j].map_or(previous, |c| c.index))
            }
        }
        next.counts[j] += batch_counts[j];
    }
    next.batch_counter += 1;
    next
}

/// Pairs of clusters `(a, b, sample)` with `a < b` that share a medoid.
pub fn collapsed_clusters(state: &GlobalState) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (a, ma) in state.medoids.iter().enumerate() {
        for (b, mb) in state.medoids.iter().enumerate().skip(a + 1) {
            if let (Some(x), Some(y)) = (ma, mb) {
                if x == y {
                    out.push((a, b, *x));
                }
            }
        }
    }
    out
}

/// Single-lane merge over the whole batch.
pub fn merge_medoids(
    global: &GlobalState,
    batch_medoids: &[Option<usize>],
    batch_counts: &[u64],
    spec: &KernelSpec,
    data: &DataSet,
    batch: &[usize],
    offer_previous: bool,
) -> (GlobalState, Vec<f64>) {
    let (actions, alphas) = merge_plan(global, batch_medoids, batch_counts);
    let rows = data.rows(batch);
    let winners = local_merge_candidates(spec, data, &rows, batch, &actions, offer_previous);
    (apply_merge(global, &actions, &winners, batch_counts), alphas)
}

/// Traffic and memory observed by one lane during one batch of one restart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneTraffic {
    pub rank: usize,
    pub rows: usize,
    pub inner_barriers: usize,
    pub init_bytes: usize,
    pub iteration_bytes: Vec<usize>,
    pub medoid_bytes: usize,
    pub merge_bytes: usize,
    pub tracked_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrace {
    pub batch: usize,
    pub size: usize,
    pub landmarks: usize,
    pub iterations: usize,
    pub converged: bool,
    pub cost_trace: Vec<f64>,
    pub changes: Vec<usize>,
    pub batch_counts: Vec<u64>,
    pub landmark_counts: Vec<u64>,
    pub batch_medoids: Vec<Option<usize>>,
    pub global_medoids: Vec<Option<usize>>,
    pub alpha: Vec<f64>,
    /// Kernel distance between the global medoids before and after this batch.
    pub displacement: Vec<Option<f64>>,
    /// k-means++ picks (dataset indices), first batch only.
    pub init_medoids: Option<Vec<usize>>,
    pub comm: Vec<LaneTraffic>,
    #[serde(skip)]
    pub label_history: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub fetch_s: f64,
    pub kernel_s: f64,
    pub inner_s: f64,
    pub merge_s: f64,
    pub final_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub seed: u64,
    pub global_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub labels: Vec<u32>,
    pub state: GlobalState,
    pub global_cost: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
    pub traces: Vec<BatchTrace>,
    pub timings: PhaseTimings,
}

/// Seed for restart `r`; restart 0 uses the run seed itself.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        substream(seed, "restart", r as u64).random()
    }
}

struct RestartBatchResult {
    trace: BatchTrace,
    state: GlobalState,
}

#[derive(Default)]
struct LaneTimes {
    kernel: Duration,
    inner: Duration,
    merge: Duration,
}

struct BatchInputs<'a> {
    data: &'a DataSet,
    cfg: &'a RunConfig,
    batch_index: usize,
    batch: &'a [usize],
    landmarks: &'a [Vec<usize>],
    shared_landmarks: bool,
    states: &'a [GlobalState],
    init_medoids: &'a [Option<Vec<usize>>],
}

fn slab_for(spec: &KernelSpec, data: &DataSet, batch: &[usize], rows: std::ops::Range<usize>, landmarks: &[usize]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let own = data.rows(&batch[rows]);
    let cols: Vec<&[f64]> = landmarks.iter().map(|&p| data.row(batch[p])).collect();
    Ok(kernel_block(spec, &own, &cols)?.into_values())
}

fn batch_on_lane(lane: &mut Lane<'_>, inp: &BatchInputs<'_>) -> Result<(Vec<RestartBatchResult>, LaneTimes)> {
    let cfg = inp.cfg;
    let spec = &cfg.kernel;
    let c = cfg.clusters;
    let rows = lane.rows.clone();
    let own_idx = &inp.batch[rows.clone()];
    let own_rows = inp.data.rows(own_idx);
    let mut times = LaneTimes::default();
    let mut shared_slab: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(cfg.restarts);

    for r in 0..cfg.restarts {
        let lm = &inp.landmarks[if inp.shared_landmarks { 0 } else { r }];
        let t = Instant::now();
        let own_slab;
        let slab: &[f64] = if inp.shared_landmarks {
            if shared_slab.is_none() {
                shared_slab = Some(slab_for(spec, inp.data, inp.batch, rows.clone(), lm)?);
            }
            shared_slab.as_deref().expect("slab computed")
        } else {
            own_slab = slab_for(spec, inp.data, inp.batch, rows.clone(), lm)?;
            &own_slab
        };
        let diag_sum: f64 = lm
            .iter()
            .map(|&p| {
                let x = inp.data.row(inp.batch[p]);
                spec.apply(x, x)
            })
            .sum();
        times.kernel += t.elapsed();

        let t = Instant::now();
        let state = &inp.states[r];
        let seeds: Vec<Option<&[f64]>> = match &inp.init_medoids[r] {
            Some(picks) => picks.iter().map(|&g| Some(inp.data.row(g))).collect(),
            None => state.medoids.iter().map(|m| m.map(|g| inp.data.row(g))).collect(),
        };
        let initial = if own_rows.is_empty() {
            Vec::new()
        } else {
            init_labels_from_medoids(spec, &own_rows, &seeds)?
        };
        let k = BatchKernel::new(rows.clone(), lm, slab)?;
        let bytes0 = lane.stats().total_bytes();
        let barriers0 = lane.stats().barriers;
        let inner = inner_gd_loop(lane, &k, &initial, diag_sum, c, &cfg.gd, cfg.record_label_history)?;
        let inner_barriers = lane.stats().barriers - barriers0;
        let init_bytes = lane.stats().total_bytes() - bytes0 - inner.iteration_bytes.iter().sum::<usize>();
        times.inner += t.elapsed();

        let t = Instant::now();
        let mut batch_counts = vec![0u64; c];
        for &l in &inner.labels {
            batch_counts[l as usize] += 1;
        }
        let before = lane.stats().total_bytes();
        let local = local_medoid_candidates(spec, &own_rows, own_idx, &inner.similarity, &inner.counts);
        let batch_medoids: Vec<Option<usize>> = lane
            .allreduce_argmin(local)?
            .into_iter()
            .map(|c| c.map(|c| c.index))
            .collect();
        let medoid_bytes = lane.stats().total_bytes() - before;

        let before = lane.stats().total_bytes();
        let (actions, alpha) = merge_plan(state, &batch_medoids, &batch_counts);
        let offer_previous = cfg.merge_keeps_previous && lane.rank == 0;
        let local = local_merge_candidates(spec, inp.data, &own_rows, own_idx, &actions, offer_previous);
        let winners = lane.allreduce_argmin(local)?;
        let merge_bytes = lane.stats().total_bytes() - before;
        let next = apply_merge(state, &actions, &winners, &batch_counts);
        times.merge += t.elapsed();
        if lane.rank == 0 {
            for (a, b, m) in collapsed_clusters(&next) {
                if !collapsed_clusters(state).contains(&(a, b, m)) {
                    log::warn!("restart {r} batch {}: clusters {a} and {b} collapsed onto sample {m}", inp.batch_index);
                }
            }
        }

        let displacement = if inp.batch_index == 0 {
            vec![None; c]
        } else {
            medoid_displacement(spec, inp.data, &state.medoids, &next.medoids)?
        };
        let tracked_bytes = slab.len() * 8
            + inner.similarity.len() * 8
            + (inner.labels.len() + rows.len()) * 4
            + 2 * c * 8;
        let traffic = LaneTraffic {
            rank: lane.rank,
            rows: rows.len(),
            inner_barriers,
            init_bytes,
            iteration_bytes: inner.iteration_bytes.clone(),
            medoid_bytes,
            merge_bytes,
            tracked_bytes,
        };
        let trace = BatchTrace {
            batch: inp.batch_index,
            size: inp.batch.len(),
            landmarks: lm.len(),
            iterations: inner.iterations,
            converged: inner.converged,
            cost_trace: inner.cost_trace,
            changes: inner.changes,
            batch_counts,
            landmark_counts: inner.counts,
            batch_medoids,
            global_medoids: next.medoids.clone(),
            alpha,
            displacement,
            init_medoids: inp.init_medoids[r].clone(),
            comm: vec![traffic],
            label_history: inner.history,
        };
        out.push(RestartBatchResult { trace, state: next });
    }
    Ok((out, times))
}

/// Final labels for every sample by nearest present medoid, and the global cost.
pub fn assign_all(
    spec: &KernelSpec,
    data: &DataSet,
    medoids: &[Option<usize>],
    threads: usize,
) -> Result<(Vec<u32>, f64)> {
    let protos: Vec<Option<&[f64]>> = medoids.iter().map(|m| m.map(|g| data.row(g))).collect();
    assign_to_prototypes(spec, data, &protos, threads)
}

/// Nearest-prototype labels for `target` and the summed kernel distance.
/// Per-sample results are independent of `threads`.
pub fn assign_to_prototypes(
    spec: &KernelSpec,
    target: &DataSet,
    prototypes: &[Option<&[f64]>],
    threads: usize,
) -> Result<(Vec<u32>, f64)> {
    let present: Vec<(usize, &[f64], f64)> = prototypes
        .iter()
        .enumerate()
        .filter_map(|(j, m)| m.map(|row| (j, row, spec.apply(row, row))))
        .collect();
    if present.is_empty() {
        return Err(KkmError::state("no medoid survived; cannot label the dataset"));
    }
    if present[0].1.len() != target.dim() {
        return Err(KkmError::input(format!(
            "prototypes have {} features, target data has {}",
            present[0].1.len(),
            target.dim()
        )));
    }
    let n = target.len();
    let mut labels = vec![0u32; n];
    let mut costs = vec![0.0f64; n];
    let threads = threads.clamp(1, n);
    let per = n.div_ceil(threads);
    let present = &present;
    std::thread::scope(|s| {
        for (chunk, (lab, cost)) in labels.chunks_mut(per).zip(costs.chunks_mut(per)).enumerate() {
            s.spawn(move || {
                for (k, (l, c)) in lab.iter_mut().zip(cost.iter_mut()).enumerate() {
                    let (j, d) = nearest(spec, target.row(chunk * per + k), present);
                    *l = j as u32;
                    *c = d;
                }
            });
        }
    });
    Ok((labels, costs.iter().sum()))
}

/// Runs the full mini-batch pipeline and keeps the restart with the lowest
/// global cost (earliest restart on ties).
pub fn run_clustering(data: &DataSet, cfg: &RunConfig) -> Result<RunOutput> {
    let n = data.len();
    cfg.validate(n)?;
    let c = cfg.clusters;
    let t_fetch = Instant::now();
    let plan = partition(cfg.sampling, n, cfg.batches)?;
    let seeds: Vec<u64> = (0..cfg.restarts).map(|r| restart_seed(cfg.seed, r)).collect();
    let mut fetch = t_fetch.elapsed();
    let mut states = vec![GlobalState::empty(c); cfg.restarts];
    let mut traces: Vec<Vec<BatchTrace>> = vec![Vec::new(); cfg.restarts];
    let mut timings = PhaseTimings::default();

    for (bi, batch) in plan.batches.iter().enumerate() {
        let t = Instant::now();
        let shared = cfg.sparsity >= 1.0;
        let landmarks: Vec<Vec<usize>> = if shared {
            vec![(0..batch.len()).collect()]
        } else {
            seeds
                .iter()
                .map(|&s| landmarks_for_batch(batch.len(), cfg.sparsity, c, s, bi as u64))
                .collect::<Result<_>>()?
        };
        let init_medoids: Vec<Option<Vec<usize>>> = if bi == 0 {
            let rows = data.rows(batch);
            seeds
                .iter()
                .map(|&s| {
                    let mut rng = substream(s, "init", 0);
                    kernel_kmeanspp_init(&cfg.kernel, &rows, c, &mut rng)
                        .map(|p| Some(p.into_iter().map(|q| batch[q]).collect()))
                })
                .collect::<Result<_>>()?
        } else {
            vec![None; cfg.restarts]
        };
        fetch += t.elapsed();

        let wp = WorkerPartition::new(batch.len(), cfg.workers)?;
        let inputs = BatchInputs {
            data,
            cfg,
            batch_index: bi,
            batch,
            landmarks: &landmarks,
            shared_landmarks: shared,
            states: &states,
            init_medoids: &init_medoids,
        };
        let (lanes, _) = run_lanes(&wp, |lane| batch_on_lane(lane, &inputs));
        let mut lanes = lanes.into_iter().collect::<Result<Vec<_>>>()?;
        let (first, times) = lanes.remove(0);
        timings.kernel_s += times.kernel.as_secs_f64();
        timings.inner_s += times.inner.as_secs_f64();
        timings.merge_s += times.merge.as_secs_f64();
        for (r, res) in first.into_iter().enumerate() {
            let mut trace = res.trace;
            for (other, _) in &lanes {
                trace.comm.extend(other[r].trace.comm.iter().cloned());
            }
            states[r] = res.state;
            traces[r].push(trace);
        }
    }
    timings.fetch_s = fetch.as_secs_f64();

    let t = Instant::now();
    let mut best: Option<(usize, Vec<u32>, f64)> = None;
    let mut summaries = Vec::with_capacity(cfg.restarts);
    for (r, state) in states.iter().enumerate() {
        for (j, m) in state.medoids.iter().enumerate() {
            if m.is_none() {
                log::warn!("restart {r}: cluster {j} never received samples and is dropped");
            }
        }
        let (labels, cost) = assign_all(&cfg.kernel, data, &state.medoids, cfg.workers)?;
        summaries.push(RestartSummary { restart: r, seed: seeds[r], global_cost: cost });
        if best.as_ref().is_none_or(|(_, _, b)| cost < *b) {
            best = Some((r, labels, cost));
        }
    }
    timings.final_s = t.elapsed().as_secs_f64();
    let (best_restart, labels, global_cost) = best.expect("at least one restart");
    let mut medoid_sets = states;
    let state = medoid_sets.swap_remove(best_restart);
    Ok(RunOutput {
        labels,
        state,
        global_cost,
        best_restart,
        restarts: summaries,
        traces: traces.swap_remove(best_restart),
        timings,
    })
}
