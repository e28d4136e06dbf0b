//! Row-wise worker lanes and the collectives they use to talk to each other.
//!
//! Workers are in-process execution lanes. Each lane owns a contiguous range
//! of batch rows; the only cross-lane communication is through the three
//! collectives below, each of which is one barrier on a shared double-buffered
//! slot table. Every message is counted in bytes so the communication volume
//! of a run can be compared against the analytical per-node bound.
//!
//! Sums travel as compensated `(hi, lo)` pairs and are folded in ascending
//! rank order. Together with row-local arithmetic everywhere else, this keeps
//! run outputs independent of the lane count.

use std::ops::Range;
use std::sync::{Barrier, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{KkmError, Result};

/// Contiguous row ranges for `P` lanes; sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerPartition {
    pub total: usize,
    pub ranges: Vec<Range<usize>>,
}

impl WorkerPartition {
    pub fn new(total: usize, workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(KkmError::input("worker count must be at least 1"));
        }
        let ranges = (0..workers)
            .map(|p| (p * total / workers)..((p + 1) * total / workers))
            .collect();
        Ok(Self { total, ranges })
    }

    pub fn workers(&self) -> usize {
        self.ranges.len()
    }
}

/// Bytes per scalar (`Q`) and per-worker memory budget (`R`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceModel {
    pub scalar_bytes: u64,
    pub memory_bytes: u64,
}

impl ResourceModel {
    pub fn new(scalar_bytes: u64, memory_bytes: u64) -> Result<Self> {
        if scalar_bytes != 4 && scalar_bytes != 8 {
            return Err(KkmError::input(format!(
                "scalar size must be 4 or 8 bytes, got {scalar_bytes}"
            )));
        }
        if memory_bytes == 0 {
            return Err(KkmError::input("memory budget must be positive"));
        }
        Ok(Self {
            scalar_bytes,
            memory_bytes,
        })
    }
}

// ---------------------------------------------------------------------------
// Compensated summation

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Running sum carried as a head and an accumulated rounding error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Compensated {
    pub hi: f64,
    pub lo: f64,
}

impl Compensated {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    #[inline]
    pub fn merge(&mut self, other: Compensated) {
        let (s, e) = two_sum(self.hi, other.hi);
        self.hi = s;
        self.lo += e + other.lo;
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

pub const SUM_WIRE_BYTES: usize = 16;
pub const LABEL_WIRE_BYTES: usize = 4;
pub const CANDIDATE_WIRE_BYTES: usize = 16;

/// One worker's contribution to a sum, tagged with the first row it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial<T> {
    pub offset: usize,
    pub values: Vec<T>,
}

fn fold_compensated<'a>(parts: impl Iterator<Item = &'a [Compensated]>) -> Result<Vec<f64>> {
    let mut acc: Option<Vec<Compensated>> = None;
    for part in parts {
        match &mut acc {
            None => acc = Some(part.to_vec()),
            Some(a) => {
                if a.len() != part.len() {
                    return Err(KkmError::state(format!(
                        "allreduce length mismatch: {} vs {}",
                        a.len(),
                        part.len()
                    )));
                }
                for (x, y) in a.iter_mut().zip(part) {
                    x.merge(*y);
                }
            }
        }
    }
    Ok(acc.unwrap_or_default().into_iter().map(Compensated::value).collect())
}

/// Element-wise sum folded in ascending `offset` order, whatever order the
/// partials arrive in.
pub fn allreduce_sum(partials: &[Partial<f64>]) -> Result<Vec<f64>> {
    let mut order: Vec<&Partial<f64>> = partials.iter().collect();
    order.sort_by_key(|p| p.offset);
    let comp: Vec<Vec<Compensated>> = order
        .iter()
        .map(|p| {
            p.values
                .iter()
                .map(|&v| Compensated { hi: v, lo: 0.0 })
                .collect()
        })
        .collect();
    fold_compensated(comp.iter().map(Vec::as_slice))
}

/// A worker's label slice starting at batch row `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSlice {
    pub start: usize,
    pub labels: Vec<u32>,
}

/// Concatenates slices by ascending start; any gap or overlap is fatal.
pub fn allgather_labels(slices: &[LabelSlice], total: usize) -> Result<Vec<u32>> {
    let mut order: Vec<&LabelSlice> = slices.iter().collect();
    order.sort_by_key(|s| s.start);
    let mut out = Vec::with_capacity(total);
    for s in order {
        if s.start != out.len() {
            return Err(KkmError::state(format!(
                "allgather: slice starting at {} but {} rows assembled so far",
                s.start,
                out.len()
            )));
        }
        out.extend_from_slice(&s.labels);
    }
    if out.len() != total {
        return Err(KkmError::state(format!(
            "allgather assembled {} rows, expected {total}",
            out.len()
        )));
    }
    Ok(out)
}

/// A proposed prototype: objective value and global sample index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: f64,
    pub index: usize,
}

impl Candidate {
    /// Smaller value wins; equal values go to the smaller index.
    #[inline]
    pub fn beats(&self, other: &Candidate) -> bool {
        self.value < other.value || (self.value == other.value && self.index < other.index)
    }
}

/// Keeps the better of `slot` and `cand`.
#[inline]
pub fn offer(slot: &mut Option<Candidate>, cand: Candidate) {
    match slot {
        Some(cur) if !cand.beats(cur) => {}
        _ => *slot = Some(cand),
    }
}

/// Per-cluster winner across workers. `None` is ABSENT and loses to anything present.
pub fn allreduce_argmin(per_worker: &[Vec<Option<Candidate>>]) -> Result<Vec<Option<Candidate>>> {
    let Some(first) = per_worker.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    let mut out = vec![None; len];
    for w in per_worker {
        if w.len() != len {
            return Err(KkmError::state("allreduce_argmin length mismatch"));
        }
        for (slot, cand) in out.iter_mut().zip(w) {
            if let Some(c) = cand {
                offer(slot, *c);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Communicator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveKind {
    AllreduceSum,
    AllgatherLabels,
    AllreduceArgmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectiveRecord {
    pub kind: CollectiveKind,
    pub bytes: usize,
}

/// What one lane sent, in call order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneStats {
    pub rank: usize,
    pub barriers: usize,
    pub records: Vec<CollectiveRecord>,
}

impl LaneStats {
    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|r| r.bytes).sum()
    }
}

enum Payload {
    Empty,
    Sums(Vec<Compensated>),
    Labels(LabelSlice),
    Candidates(Vec<Option<Candidate>>),
}

struct Communicator {
    barrier: Barrier,
    slots: [Vec<Mutex<Payload>>; 2],
}

impl Communicator {
    fn new(size: usize) -> Self {
        let mk = || (0..size).map(|_| Mutex::new(Payload::Empty)).collect();
        Self {
            barrier: Barrier::new(size),
            slots: [mk(), mk()],
        }
    }
}

/// One execution lane: a rank, the rows it owns, and its view of the communicator.
pub struct Lane<'c> {
    pub rank: usize,
    pub rows: Range<usize>,
    total_rows: usize,
    comm: &'c Communicator,
    generation: usize,
    stats: LaneStats,
}

impl<'c> Lane<'c> {
    /// Publishes into this generation's slot table and waits for every lane.
    /// Slot tables alternate, so a table is only rewritten after every lane has
    /// passed the following barrier and therefore finished reading it.
    fn exchange(&mut self, kind: CollectiveKind, bytes: usize, payload: Payload) -> &'c [Mutex<Payload>] {
        let table = &self.comm.slots[self.generation % 2];
        *table[self.rank].lock().expect("collective slot poisoned") = payload;
        self.comm.barrier.wait();
        self.generation += 1;
        self.stats.barriers += 1;
        self.stats.records.push(CollectiveRecord { kind, bytes });
        table
    }

    pub fn allreduce_sum(&mut self, partial: Vec<Compensated>) -> Result<Vec<f64>> {
        let bytes = partial.len() * SUM_WIRE_BYTES;
        let table = self.exchange(CollectiveKind::AllreduceSum, bytes, Payload::Sums(partial));
        let guards: Vec<_> = table.iter().map(|m| m.lock().expect("slot poisoned")).collect();
        let mut parts = Vec::with_capacity(guards.len());
        for g in &guards {
            match &**g {
                Payload::Sums(v) => parts.push(v.as_slice()),
                _ => return Err(KkmError::state("allreduce_sum: mismatched collective")),
            }
        }
        fold_compensated(parts.into_iter())
    }

    pub fn allgather_labels(&mut self, local: &[u32]) -> Result<Vec<u32>> {
        let slice = LabelSlice {
            start: self.rows.start,
            labels: local.to_vec(),
        };
        let bytes = local.len() * LABEL_WIRE_BYTES;
        let table = self.exchange(CollectiveKind::AllgatherLabels, bytes, Payload::Labels(slice));
        let mut out = Vec::with_capacity(self.total_rows);
        for m in table {
            let g = m.lock().expect("slot poisoned");
            match &*g {
                Payload::Labels(s) => {
                    if s.start != out.len() {
                        return Err(KkmError::state(format!(
                            "allgather: gap or overlap at row {}",
                            s.start
                        )));
                    }
                    out.extend_from_slice(&s.labels);
                }
                _ => return Err(KkmError::state("allgather_labels: mismatched collective")),
            }
        }
        if out.len() != self.total_rows {
            return Err(KkmError::state("allgather: assembled length mismatch"));
        }
        Ok(out)
    }

    pub fn allreduce_argmin(&mut self, local: Vec<Option<Candidate>>) -> Result<Vec<Option<Candidate>>> {
        let bytes = local.len() * CANDIDATE_WIRE_BYTES;
        let table = self.exchange(CollectiveKind::AllreduceArgmin, bytes, Payload::Candidates(local));
        let mut out: Option<Vec<Option<Candidate>>> = None;
        for m in table {
            let g = m.lock().expect("slot poisoned");
            let Payload::Candidates(c) = &*g else {
                return Err(KkmError::state("allreduce_argmin: mismatched collective"));
            };
            match &mut out {
                None => out = Some(c.clone()),
                Some(acc) => {
                    if acc.len() != c.len() {
                        return Err(KkmError::state("allreduce_argmin length mismatch"));
                    }
                    for (slot, cand) in acc.iter_mut().zip(c) {
                        if let Some(cand) = cand {
                            offer(slot, *cand);
                        }
                    }
                }
            }
        }
        Ok(out.unwrap_or_default())
    }

    pub fn stats(&self) -> &LaneStats {
        &self.stats
    }
}

/// Runs `body` once per lane, in parallel, and collects results in rank order.
pub fn run_lanes<R, F>(partition: &WorkerPartition, body: F) -> (Vec<R>, Vec<LaneStats>)
where
    R: Send,
    F: Fn(&mut Lane<'_>) -> R + Sync,
{
    let p = partition.workers();
    let comm = Communicator::new(p);
    let make_lane = |rank: usize| Lane {
        rank,
        rows: partition.ranges[rank].clone(),
        total_rows: partition.total,
        comm: &comm,
        generation: 0,
        stats: LaneStats {
            rank,
            ..LaneStats::default()
        },
    };
    let mut results: Vec<(R, LaneStats)> = if p == 1 {
        let mut lane = make_lane(0);
        let r = body(&mut lane);
        vec![(r, lane.stats)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..p)
                .map(|rank| {
                    let body = &body;
                    let make_lane = &make_lane;
                    s.spawn(move || {
                        let mut lane = make_lane(rank);
                        let r = body(&mut lane);
                        (r, lane.stats)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker lane panicked"))
                .collect()
        })
    };
    let stats = results.iter().map(|(_, s)| s.clone()).collect();
    let out = results.drain(..).map(|(r, _)| r).collect();
    (out, stats)
}

// ---------------------------------------------------------------------------
// Memory and message-size planning

fn ceil_div(a: u128, b: u128) -> u128 {
    a.div_ceil(b)
}

/// Per-worker bytes: `Q·(⌈N/(BP)⌉·(⌈N/B⌉ + C) + ⌈N/B⌉ + 2C)`.
pub fn footprint(n: u64, b: u64, c: u64, p: u64, q: u64) -> u128 {
    let (n, b, c, p, q) = (n as u128, b as u128, c as u128, p as u128, q as u128);
    let batch = ceil_div(n, b);
    let rows = ceil_div(n, b * p);
    q * (rows * (batch + c) + batch + 2 * c)
}

/// Per-worker, per-iteration message bound: `Q·(⌈N/(BP)⌉ + 2C)`.
pub fn message_size_bound(n: u64, b: u64, p: u64, c: u64, q: u64) -> u64 {
    q * ((n as u128).div_ceil(b as u128 * p as u128) as u64 + 2 * c)
}

/// The printed closed form for the minimum batch count, evaluated verbatim
/// (continuous, no ceilings). May be NaN when its radicand is negative.
pub fn closed_form_min_batches(n: u64, c: u64, p: u64, model: &ResourceModel) -> f64 {
    let (n, c, p) = (n as f64, c as f64, p as f64);
    let r_over_q = model.memory_bytes as f64 / model.scalar_bytes as f64;
    let a = c / p + 1.0;
    (2.0 * n / p) / (-a + (a * a - 8.0 * c / p + r_over_q).sqrt())
}

/// Continuous root of the footprint inequality, ignoring ceilings. Agrees
/// with [`closed_form_min_batches`] at `P = 4`.
pub fn continuous_min_batches(n: u64, c: u64, p: u64, model: &ResourceModel) -> f64 {
    let (n, c, p) = (n as f64, c as f64, p as f64);
    let r_over_q = model.memory_bytes as f64 / model.scalar_bytes as f64;
    let a = c / p + 1.0;
    (2.0 * n / p) / (-a + (a * a - 8.0 * c / p + 4.0 * r_over_q / p).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub b_min: u64,
    pub footprint_bytes: u128,
    pub closed_form: f64,
    pub continuous: f64,
    pub message_bound_bytes: u64,
}

/// Smallest `B ≥ 1` whose footprint fits in the budget, by bisection on the
/// (non-increasing) integer footprint.
pub fn plan_min_batches(n: u64, c: u64, p: u64, model: &ResourceModel) -> Result<PlanReport> {
    if n == 0 || c == 0 || p == 0 {
        return Err(KkmError::input("N, C and P must all be positive"));
    }
    let q = model.scalar_bytes;
    let budget = model.memory_bytes as u128;
    let fits = |b: u64| footprint(n, b, c, p, q) <= budget;
    if !fits(n) {
        let min = footprint(n, n, c, p, q);
        return Err(KkmError::Capacity {
            message: format!(
                "no batch count fits {budget} bytes; the smallest achievable footprint is {min} bytes at B = N = {n}"
            ),
            min_footprint_bytes: Some(min.min(u64::MAX as u128) as u64),
        });
    }
    let (mut lo, mut hi) = (1u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(PlanReport {
        b_min: lo,
        footprint_bytes: footprint(n, lo, c, p, q),
        closed_form: closed_form_min_batches(n, c, p, model),
        continuous: continuous_min_batches(n, c, p, model),
        message_bound_bytes: message_size_bound(n, lo, p, c, q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_ranges() {
        let wp = WorkerPartition::new(10, 3).unwrap();
        assert_eq!(wp.ranges, vec![0..3, 3..6, 6..10]);
        assert!(WorkerPartition::new(10, 0).is_err());
        let wp = WorkerPartition::new(2, 4).unwrap();
        assert_eq!(wp.ranges.iter().map(|r| r.len()).sum::<usize>(), 2);
    }

    #[test]
    fn allreduce_sum_examples() {
        let one = allreduce_sum(&[Partial { offset: 0, values: vec![1.5, -2.0] }]).unwrap();
        assert_eq!(one, vec![1.5, -2.0]);
        let two = allreduce_sum(&[
            Partial { offset: 0, values: vec![1.0, 2.0] },
            Partial { offset: 5, values: vec![3.0, 4.0] },
        ])
        .unwrap();
        assert_eq!(two, vec![4.0, 6.0]);
        assert!(allreduce_sum(&[
            Partial { offset: 0, values: vec![1.0] },
            Partial { offset: 1, values: vec![1.0, 2.0] },
        ])
        .is_err());
    }

    #[test]
    fn allreduce_sum_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parts: Vec<Partial<f64>> = (0..6)
            .map(|w| Partial {
                offset: w * 100,
                values: (0..5).map(|_| rng.random_range(-1e3..1e3)).collect(),
            })
            .collect();
        let base = allreduce_sum(&parts).unwrap();
        let mut shuffled = parts.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        let other = allreduce_sum(&shuffled).unwrap();
        assert_eq!(
            base.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            other.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn allgather_examples() {
        let one = allgather_labels(&[LabelSlice { start: 0, labels: vec![3, 1] }], 2).unwrap();
        assert_eq!(one, vec![3, 1]);
        let two = allgather_labels(
            &[
                LabelSlice { start: 2, labels: vec![7] },
                LabelSlice { start: 0, labels: vec![4, 5] },
            ],
            3,
        )
        .unwrap();
        assert_eq!(two, vec![4, 5, 7]);
        let gap = allgather_labels(
            &[LabelSlice { start: 0, labels: vec![1] }, LabelSlice { start: 2, labels: vec![1] }],
            3,
        );
        assert!(gap.is_err());
        let overlap = allgather_labels(
            &[LabelSlice { start: 0, labels: vec![1, 1] }, LabelSlice { start: 1, labels: vec![1] }],
            3,
        );
        assert!(overlap.is_err());
    }

    #[test]
    fn allgather_same_for_any_worker_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<u32> = (0..37).map(|_| rng.random_range(0..4)).collect();
        for p in [1, 2, 4] {
            let wp = WorkerPartition::new(labels.len(), p).unwrap();
            let (out, _) = run_lanes(&wp, |lane| {
                let local = &labels[lane.rows.clone()];
                lane.allgather_labels(local).unwrap()
            });
            for o in out {
                assert_eq!(o, labels);
            }
        }
    }

    #[test]
    fn argmin_examples() {
        let c = |value, index| Some(Candidate { value, index });
        let one = allreduce_argmin(&[vec![c(0.5, 3), None]]).unwrap();
        assert_eq!(one, vec![c(0.5, 3), None]);
        let tie = allreduce_argmin(&[vec![c(0.3, 7)], vec![c(0.3, 2)]]).unwrap();
        assert_eq!(tie[0].unwrap().index, 2);
        let absent = allreduce_argmin(&[vec![None], vec![c(9.0, 1)]]).unwrap();
        assert_eq!(absent[0].unwrap().index, 1);
        let all_absent = allreduce_argmin(&[vec![None], vec![None]]).unwrap();
        assert_eq!(all_absent, vec![None]);
    }

    #[test]
    fn argmin_matches_serial_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let per: Vec<Vec<Option<Candidate>>> = (0..4)
                .map(|_| {
                    (0..3)
                        .map(|_| {
                            if rng.random_bool(0.2) {
                                None
                            } else {
                                Some(Candidate {
                                    value: (rng.random_range(0..5) as f64) * 0.25,
                                    index: rng.random_range(0..100),
                                })
                            }
                        })
                        .collect()
                })
                .collect();
            let got = allreduce_argmin(&per).unwrap();
            for j in 0..3 {
                let mut best: Option<(f64, usize)> = None;
                for w in &per {
                    if let Some(c) = w[j] {
                        let better = match best {
                            None => true,
                            Some((v, i)) => c.value < v || (c.value == v && c.index < i),
                        };
                        if better {
                            best = Some((c.value, c.index));
                        }
                    }
                }
                assert_eq!(got[j].map(|c| (c.value, c.index)), best);
            }
        }
    }

    #[test]
    fn lanes_agree_and_count_barriers() {
        let wp = WorkerPartition::new(9, 3).unwrap();
        let (out, stats) = run_lanes(&wp, |lane| {
            let mut part = vec![Compensated::default(); 2];
            for r in lane.rows.clone() {
                part[0].add(r as f64);
                part[1].add(1.0);
            }
            let s = lane.allreduce_sum(part).unwrap();
            let cand = vec![Some(Candidate { value: -(lane.rank as f64), index: lane.rank })];
            let m = lane.allreduce_argmin(cand).unwrap();
            (s, m)
        });
        for (s, m) in &out {
            assert_eq!(s, &vec![36.0, 9.0]);
            assert_eq!(m[0].unwrap().index, 2);
        }
        for st in &stats {
            assert_eq!(st.barriers, 2);
            assert_eq!(st.total_bytes(), 2 * SUM_WIRE_BYTES + CANDIDATE_WIRE_BYTES);
        }
    }

    #[test]
    fn compensated_fold_is_lane_count_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random_range(0.0..1.0) * 1e3).collect();
        let mut results = Vec::new();
        for p in [1, 2, 3, 4, 8] {
            let wp = WorkerPartition::new(xs.len(), p).unwrap();
            let (out, _) = run_lanes(&wp, |lane| {
                let mut c = Compensated::default();
                for &x in &xs[lane.rows.clone()] {
                    c.add(x);
                }
                lane.allreduce_sum(vec![c]).unwrap()[0]
            });
            results.push(out[0].to_bits());
        }
        assert!(results.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn message_bound_examples() {
        assert_eq!(message_size_bound(12, 3, 4, 1, 8), 8 * 3);
        assert_eq!(message_size_bound(800, 2, 2, 3, 4), 4 * (200 + 6));
        assert_eq!(message_size_bound(800, 2, 4, 3, 4), 4 * (100 + 6));
    }

    #[test]
    fn planner_examples() {
        let model = ResourceModel::new(8, 1 << 40).unwrap();
        assert_eq!(plan_min_batches(1000, 2, 1, &model).unwrap().b_min, 1);

        let model = ResourceModel::new(8, 80_000).unwrap();
        let rep = plan_min_batches(1000, 2, 1, &model).unwrap();
        let mut scan = 1;
        while footprint(1000, scan, 2, 1, 8) > 80_000 {
            scan += 1;
        }
        assert_eq!(rep.b_min, scan);
        assert!(rep.footprint_bytes <= 80_000);
        assert!(footprint(1000, rep.b_min - 1, 2, 1, 8) > 80_000);
        assert!(rep.b_min as f64 <= rep.closed_form.ceil() + 1.0);

        let tiny = ResourceModel::new(8, 16).unwrap();
        match plan_min_batches(1000, 2, 1, &tiny) {
            Err(KkmError::Capacity { min_footprint_bytes: Some(m), .. }) => {
                assert_eq!(m as u128, footprint(1000, 1000, 2, 1, 8))
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
        assert!(ResourceModel::new(3, 10).is_err());
    }

    #[test]
    fn closed_forms_coincide_at_four_workers() {
        let model = ResourceModel::new(4, 1 << 30).unwrap();
        let a = closed_form_min_batches(60_000, 10, 4, &model);
        let b = continuous_min_batches(60_000, 10, 4, &model);
        assert!((a - b).abs() < 1e-9 * a);
    }

    proptest! {
        #[test]
        fn footprint_non_increasing(n in 1u64..5000, c in 1u64..20, p in 1u64..16, q in prop_oneof![Just(4u64), Just(8u64)]) {
            let mut prev = footprint(n, 1, c, p, q);
            for b in 2..=n.min(200) {
                let f = footprint(n, b, c, p, q);
                prop_assert!(f <= prev);
                prev = f;
            }
        }

        #[test]
        fn scan_close_to_continuous_root(n in 10u64..100_000, c in 1u64..50, p in 1u64..64, r in 1_000u64..100_000_000) {
            let model = ResourceModel::new(8, r).unwrap();
            if let Ok(rep) = plan_min_batches(n, c, p, &model) {
                if rep.continuous.is_finite() && rep.continuous > 0.0 {
                    prop_assert!(rep.b_min as f64 <= rep.continuous.ceil() + 1.0 || rep.b_min == 1);
                }
            }
        }
    }
}
