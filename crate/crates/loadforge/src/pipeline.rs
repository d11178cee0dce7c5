//! The staged, prefetching loading executor: a reader stage turns the epoch
//! permutation into work items; a host worker pool fetches, decodes, and
//! runs its share of the augmentation chain; an optional offload pool runs
//! the rest; a collator assembles batches and feeds the bounded output
//! queue the consumer drains via `next_batch`.
//!
//! Determinism contract: every sample's augmentation RNG is seeded from
//! (global_seed, epoch, dataset_index) alone, so the pixels a sample
//! produces are independent of worker counts, placement, fusion, and
//! scheduling. Only delivery order may vary (and even that is fixed under
//! `preserve_order`).
//!
//! Backpressure and shutdown: in-flight samples are bounded by a token
//! semaphore (queue_depth × batch_size tokens, released when a batch is
//! delivered), so every inter-stage channel can be sized to the token
//! budget and sends never block. The only blocking points are the reader's
//! token acquire, the collator's output send, and worker input receives —
//! each paired with a teardown signal so mid-epoch abandonment never
//! deadlocks.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use crossbeam_channel::{bounded, select, Receiver, Sender};

use loadforge_core::augment::{apply_chain, apply_op, AugmentChain, AugmentOp, AugmentPreset};
use loadforge_core::plan::{
    assign_ops, optimize_chain, AllocationPolicy, OpPlacement, PoolTag, Segment,
};
use loadforge_core::rng::{permutation, sample_seed, SampleRng};
use loadforge_core::tensor::Dtype;
use loadforge_core::tensor::ImageTensor;
use loadforge_core::CoreError;

use crate::error::{Error, Result};
use crate::store::DatasetSource;

/// Augmentation selection: a named preset or an explicit chain.
#[derive(Debug, Clone)]
pub enum AugmentSpec {
    Preset(AugmentPreset),
    Chain(AugmentChain),
}

impl AugmentSpec {
    fn chain(&self) -> AugmentChain {
        match self {
            AugmentSpec::Preset(p) => p.chain(),
            AugmentSpec::Chain(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub source: Arc<DatasetSource>,
    pub batch_size: u32,
    pub augment: AugmentSpec,
    pub allocation: AllocationPolicy,
    pub host_workers: u32,
    /// Output queue capacity in batches; intermediate budget is
    /// `queue_depth × batch_size` samples.
    pub queue_depth: u32,
    pub preserve_order: bool,
    pub global_seed: u64,
    pub fuse_ops: bool,
    pub drop_last: bool,
    /// Per-op pool tags overriding the allocation rule (length must match
    /// the optimized chain). Library-only knob; the CLI exposes presets.
    pub placement_override: Option<Vec<PoolTag>>,
}

impl PipelineConfig {
    /// Defaults mirroring the benchmark harness: drop_last on, fusion on.
    pub fn new(source: Arc<DatasetSource>, augment: AugmentSpec) -> Self {
        PipelineConfig {
            source,
            batch_size: 32,
            augment,
            allocation: AllocationPolicy::HostOnly,
            host_workers: 1,
            queue_depth: 2,
            preserve_order: false,
            global_seed: 0,
            fuse_ops: true,
            drop_last: true,
            placement_override: None,
        }
    }
}

/// One delivered mini-batch: features in batch-major `B×H×W×C` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Vec<f32>,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub labels: Vec<i64>,
    /// Dataset indices in batch order (the epoch-permutation slice).
    pub sample_indices: Vec<u64>,
    pub epoch: u64,
}

impl Batch {
    pub fn batch_size(&self) -> u32 {
        self.labels.len() as u32
    }

    /// Values per sample (H·W·C).
    pub fn sample_len(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }

    /// Exact equality, distinguishing every f32 bit pattern.
    pub fn bitwise_eq(&self, other: &Batch) -> bool {
        self.epoch == other.epoch
            && (self.height, self.width, self.channels)
                == (other.height, other.width, other.channels)
            && self.labels == other.labels
            && self.sample_indices == other.sample_indices
            && self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Order-sensitive digest of the full content (feature bits included),
    /// for multiset comparisons across pipeline configurations.
    pub fn content_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.epoch.hash(&mut h);
        (self.height, self.width, self.channels).hash(&mut h);
        self.labels.hash(&mut h);
        self.sample_indices.hash(&mut h);
        for v in &self.features {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Per-batch stage decomposition, all in nanoseconds. `wait_ns` is the time
/// the consumer blocked in `next_batch` for this batch — the operational
/// "data loading time"; the rest are summed over the batch's samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageTiming {
    pub wait_ns: u64,
    pub decode_ns: u64,
    pub augment_host_ns: u64,
    pub augment_offload_ns: u64,
    pub collate_ns: u64,
}

#[derive(Debug)]
pub enum NextBatch {
    Batch(Batch),
    EndOfEpoch,
}

/// Peak-occupancy counters captured when a run finishes; the bounded-memory
/// contract is `peak_in_flight_samples ≤ sample_budget` with the output
/// queue capped at `queue_depth` batches by channel capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineStats {
    pub sample_budget: u64,
    pub peak_in_flight_samples: u64,
    pub delivered_batches: u64,
}

// ---------------------------------------------------------------------------
// Token semaphore
// ---------------------------------------------------------------------------

struct SemState {
    available: u64,
    in_use: u64,
    peak: u64,
    closed: bool,
}

/// Counting semaphore with close(): acquirers blocked at close time wake up
/// and learn the run is over. Tracks peak occupancy for the bounded-memory
/// assertion.
struct Semaphore {
    state: Mutex<SemState>,
    cv: Condvar,
}

impl Semaphore {
    fn new(budget: u64) -> Self {
        Semaphore {
            state: Mutex::new(SemState { available: budget, in_use: 0, peak: 0, closed: false }),
            cv: Condvar::new(),
        }
    }

    /// Take one token; false means the semaphore was closed instead.
    fn acquire(&self) -> bool {
        let mut st = self.state.lock().unwrap();
        loop {
            if st.closed {
                return false;
            }
            if st.available > 0 {
                st.available -= 1;
                st.in_use += 1;
                st.peak = st.peak.max(st.in_use);
                return true;
            }
            st = self.cv.wait(st).unwrap();
        }
    }

    fn release(&self, n: u64) {
        let mut st = self.state.lock().unwrap();
        st.available += n;
        st.in_use = st.in_use.saturating_sub(n);
        drop(st);
        self.cv.notify_all();
    }

    fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.cv.notify_all();
    }

    fn peak(&self) -> u64 {
        self.state.lock().unwrap().peak
    }
}

// ---------------------------------------------------------------------------
// Work items and run plumbing
// ---------------------------------------------------------------------------

/// One sample travelling through the stages. Decode state (image, RNG, key,
/// label) is filled by the first host worker that touches it.
struct WorkItem {
    batch_id: u64,
    slot: u32,
    ds_index: u64,
    label: i64,
    key: Option<String>,
    image: Option<ImageTensor>,
    /// Meaningful only once `image` is Some; the placeholder state is never
    /// drawn from.
    rng: SampleRng,
    next_seg: usize,
    decode_ns: u64,
    host_ns: u64,
    offload_ns: u64,
}

type CollatorMsg = std::result::Result<WorkItem, Error>;
type OutputMsg = std::result::Result<(Batch, StageTiming), Error>;

/// Configuration and state shared by all of a run's threads.
struct RunShared {
    source: Arc<DatasetSource>,
    ops: Arc<Vec<AugmentOp>>,
    segments: Arc<Vec<Segment>>,
    global_seed: u64,
    epoch: u64,
    sem: Arc<Semaphore>,
}

struct PoolSenders {
    to_host: Sender<WorkItem>,
    to_offload: Option<Sender<WorkItem>>,
    to_collator: Sender<CollatorMsg>,
}

enum Route {
    Done(WorkItem),
    Forward(PoolTag, WorkItem),
}

/// Decode if needed, then run every consecutive segment belonging to `pool`;
/// report where the item goes next.
fn process_item(shared: &RunShared, mut item: WorkItem, pool: PoolTag) -> Result<Route> {
    if item.image.is_none() {
        debug_assert_eq!(pool, PoolTag::Host, "decode happens in the host pool");
        let t = Instant::now();
        let sample = shared.source.fetch(item.ds_index)?;
        item.rng =
            SampleRng::new(sample_seed(shared.global_seed, shared.epoch, item.ds_index));
        item.label = sample.label;
        item.key = Some(sample.key);
        item.image = Some(sample.image);
        item.decode_ns += t.elapsed().as_nanos() as u64;
    }
    loop {
        match shared.segments.get(item.next_seg).copied() {
            Some(seg) if seg.pool == pool => {
                let t = Instant::now();
                let mut img = item.image.take().expect("decoded above");
                for index in seg.start..seg.end {
                    img = apply_op(&img, &shared.ops[index], &mut item.rng).map_err(
                        |source| {
                            let e: Error =
                                CoreError::ChainOp { index, source: Box::new(source) }.into();
                            match &item.key {
                                Some(k) => e.for_sample(k),
                                None => e,
                            }
                        },
                    )?;
                }
                item.image = Some(img);
                let ns = t.elapsed().as_nanos() as u64;
                match pool {
                    PoolTag::Host => item.host_ns += ns,
                    PoolTag::Offload => item.offload_ns += ns,
                }
                item.next_seg += 1;
            }
            Some(seg) => return Ok(Route::Forward(seg.pool, item)),
            None => {
                // Completion point: chains without a normalize family end
                // u8; the implicit cast runs here, on whichever pool
                // finished the chain.
                if item.image.as_ref().expect("decoded above").dtype() == Dtype::U8 {
                    let t = Instant::now();
                    item.image = Some(item.image.take().unwrap().into_f32());
                    let ns = t.elapsed().as_nanos() as u64;
                    match pool {
                        PoolTag::Host => item.host_ns += ns,
                        PoolTag::Offload => item.offload_ns += ns,
                    }
                }
                return Ok(Route::Done(item));
            }
        }
    }
}

fn pool_worker(
    pool: PoolTag,
    shared: Arc<RunShared>,
    input: Receiver<WorkItem>,
    stop: Receiver<()>,
    senders: PoolSenders,
) {
    loop {
        let item = select! {
            recv(input) -> it => match it {
                Ok(it) => it,
                Err(_) => break,
            },
            // Never carries a message; fires (disconnected) at teardown.
            recv(stop) -> _ => break,
        };
        match process_item(&shared, item, pool) {
            Ok(Route::Done(done)) => {
                if senders.to_collator.send(Ok(done)).is_err() {
                    break;
                }
            }
            Ok(Route::Forward(target, item)) => {
                let sent = match target {
                    PoolTag::Host => senders.to_host.send(item).is_ok(),
                    PoolTag::Offload => match &senders.to_offload {
                        Some(tx) => tx.send(item).is_ok(),
                        None => {
                            // Unreachable for validated configs; fail fast
                            // rather than lose the sample silently.
                            let _ = senders.to_collator.send(Err(Error::Pipeline(
                                "offload segment with no offload pool".into(),
                            )));
                            false
                        }
                    },
                };
                if !sent {
                    break;
                }
            }
            Err(e) => {
                // Fail fast: surface the first failure, then shut down.
                let _ = senders.to_collator.send(Err(e));
                break;
            }
        }
    }
}

/// Assemble one batch from its slot-ordered items. Shared by the collator
/// thread and by `reference_epoch`, so the two paths are bit-identical by
/// construction.
fn collate_batch(epoch: u64, items: Vec<WorkItem>) -> Result<(Batch, StageTiming)> {
    let t = Instant::now();
    let first = items.first().ok_or_else(|| Error::Pipeline("empty batch in collator".into()))?;
    let img = first.image.as_ref().expect("finalized item");
    let (h, w, c) = img.dims();
    let sample_len = img.value_count();

    let mut features = Vec::with_capacity(sample_len * items.len());
    let mut labels = Vec::with_capacity(items.len());
    let mut sample_indices = Vec::with_capacity(items.len());
    let mut timing = StageTiming::default();
    for item in &items {
        let img = item.image.as_ref().expect("finalized item");
        if img.dims() != (h, w, c) {
            return Err(Error::InvalidArgument(format!(
                "augmented sample shapes differ within a batch ({:?} vs {:?}); \
                 use a chain that fixes the output size",
                img.dims(),
                (h, w, c)
            )));
        }
        features.extend_from_slice(img.as_f32().expect("pipeline output is f32"));
        labels.push(item.label);
        sample_indices.push(item.ds_index);
        timing.decode_ns += item.decode_ns;
        timing.augment_host_ns += item.host_ns;
        timing.augment_offload_ns += item.offload_ns;
    }
    let batch =
        Batch { features, height: h, width: w, channels: c, labels, sample_indices, epoch };
    timing.collate_ns = t.elapsed().as_nanos() as u64;
    Ok((batch, timing))
}

struct PendingBatch {
    slots: Vec<Option<WorkItem>>,
    filled: u32,
}

struct CollatorPlan {
    epoch: u64,
    batch_size: u32,
    n_batches: u64,
    last_batch_len: u32,
    preserve_order: bool,
}

impl CollatorPlan {
    fn len_of(&self, batch_id: u64) -> u32 {
        if batch_id + 1 == self.n_batches {
            self.last_batch_len
        } else {
            self.batch_size
        }
    }
}

fn collator(
    plan: CollatorPlan,
    sem: Arc<Semaphore>,
    input: Receiver<CollatorMsg>,
    stop: Receiver<()>,
    output: Sender<OutputMsg>,
) {
    let mut pending: BTreeMap<u64, PendingBatch> = BTreeMap::new();
    let mut held: BTreeMap<u64, (Batch, StageTiming)> = BTreeMap::new();
    let mut next_expected: u64 = 0;
    let mut emitted: u64 = 0;

    // Send honouring teardown; sample tokens are released only once the
    // batch actually leaves the pipeline.
    let emit = |batch: Batch, timing: StageTiming, emitted: &mut u64| -> bool {
        let n = batch.labels.len() as u64;
        let ok = select! {
            send(output, Ok((batch, timing))) -> res => res.is_ok(),
            recv(stop) -> _ => false,
        };
        if ok {
            sem.release(n);
            *emitted += 1;
        }
        ok
    };

    'outer: while emitted < plan.n_batches {
        let msg = select! {
            recv(input) -> msg => match msg {
                Ok(msg) => msg,
                Err(_) => break,
            },
            recv(stop) -> _ => break,
        };
        let item = match msg {
            Ok(item) => item,
            Err(e) => {
                // Poison: surface the failure and stop accepting work. The
                // closed semaphore unblocks the reader so teardown is quick.
                sem.close();
                let _ = select! {
                    send(output, Err(e)) -> res => res,
                    recv(stop) -> _ => Ok(()),
                };
                break;
            }
        };

        let batch_id = item.batch_id;
        let batch_len = plan.len_of(batch_id);
        let slot = item.slot as usize;
        let entry = pending.entry(batch_id).or_insert_with(|| PendingBatch {
            slots: (0..batch_len).map(|_| None).collect(),
            filled: 0,
        });
        debug_assert!(entry.slots[slot].is_none(), "duplicate slot delivery");
        entry.slots[slot] = Some(item);
        entry.filled += 1;
        if entry.filled < batch_len {
            continue;
        }

        let complete = pending.remove(&batch_id).expect("just filled");
        let items: Vec<WorkItem> =
            complete.slots.into_iter().map(|s| s.expect("slot filled")).collect();
        match collate_batch(plan.epoch, items) {
            Ok((batch, timing)) => {
                if plan.preserve_order {
                    held.insert(batch_id, (batch, timing));
                    while let Some((batch, timing)) = held.remove(&next_expected) {
                        if !emit(batch, timing, &mut emitted) {
                            break 'outer;
                        }
                        next_expected += 1;
                    }
                } else if !emit(batch, timing, &mut emitted) {
                    break;
                }
            }
            Err(e) => {
                sem.close();
                let _ = select! {
                    send(output, Err(e)) -> res => res,
                    recv(stop) -> _ => Ok(()),
                };
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct EpochRun {
    epoch: u64,
    output_rx: Receiver<OutputMsg>,
    /// Held so worker stop channels stay connected; dropping it is the
    /// teardown broadcast.
    _stop_tx: Sender<()>,
    sem: Arc<Semaphore>,
    joins: Vec<JoinHandle<()>>,
    delivered: u64,
}

pub struct Pipeline {
    source: Arc<DatasetSource>,
    batch_size: u32,
    host_workers: u32,
    offload_workers: u32,
    queue_depth: u32,
    preserve_order: bool,
    global_seed: u64,
    drop_last: bool,
    n_batches: u64,
    last_batch_len: u32,
    used_samples: u64,
    chain: AugmentChain,
    ops: Arc<Vec<AugmentOp>>,
    segments: Arc<Vec<Segment>>,
    placement: OpPlacement,
    active: Option<EpochRun>,
    timings: Vec<StageTiming>,
    last_stats: Option<PipelineStats>,
    poisoned: Option<String>,
}

/// Validate the configuration and resolve the chain, placement, and batch
/// arithmetic. No threads start until the first `next_batch`.
pub fn build_pipeline(config: PipelineConfig) -> Result<Pipeline> {
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    if config.host_workers == 0 {
        return Err(Error::InvalidArgument("host_workers must be at least 1".into()));
    }
    if config.queue_depth == 0 {
        return Err(Error::InvalidArgument("queue_depth must be at least 1".into()));
    }
    let offload_workers = match config.allocation {
        AllocationPolicy::HostOnly => 0,
        AllocationPolicy::Shared { offload_workers } => {
            if offload_workers == 0 {
                return Err(Error::InvalidArgument(
                    "Shared allocation needs at least 1 offload worker".into(),
                ));
            }
            offload_workers
        }
    };

    let n = config.source.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let b = config.batch_size as u64;
    if config.drop_last && n < b {
        return Err(Error::InvalidArgument(format!(
            "dataset has {n} samples but drop_last batches need at least batch_size = {b}"
        )));
    }
    let n_batches = if config.drop_last { n / b } else { n.div_ceil(b) };
    let used_samples = if config.drop_last { n_batches * b } else { n };
    let last_batch_len = (used_samples - (n_batches - 1) * b) as u32;

    let chain = optimize_chain(&config.augment.chain(), config.fuse_ops);
    let placement = match &config.placement_override {
        Some(tags) => {
            if tags.len() != chain.len() {
                return Err(Error::InvalidArgument(format!(
                    "placement override has {} tags for a {}-op chain",
                    tags.len(),
                    chain.len()
                )));
            }
            if offload_workers == 0 && tags.contains(&PoolTag::Offload) {
                return Err(Error::InvalidArgument(
                    "placement override uses Offload under the HostOnly policy".into(),
                ));
            }
            OpPlacement::from_tags(tags.clone())
        }
        None => assign_ops(&chain, &config.allocation),
    };
    let segments = placement.segments();

    Ok(Pipeline {
        source: config.source,
        batch_size: config.batch_size,
        host_workers: config.host_workers,
        offload_workers,
        queue_depth: config.queue_depth,
        preserve_order: config.preserve_order,
        global_seed: config.global_seed,
        drop_last: config.drop_last,
        n_batches,
        last_batch_len,
        used_samples,
        ops: Arc::new(chain.ops().to_vec()),
        chain,
        segments: Arc::new(segments),
        placement,
        active: None,
        timings: Vec::new(),
        last_stats: None,
        poisoned: None,
    })
}

impl Pipeline {
    pub fn n_batches(&self) -> u64 {
        self.n_batches
    }

    pub fn batch_size(&self) -> u32 {
        self.batch_size
    }

    pub fn drop_last(&self) -> bool {
        self.drop_last
    }

    pub fn dataset_len(&self) -> u64 {
        self.source.len()
    }

    /// The optimized chain actually executed (after any fusion rewrite).
    pub fn optimized_chain(&self) -> &AugmentChain {
        &self.chain
    }

    pub fn placement(&self) -> &OpPlacement {
        &self.placement
    }

    /// Per-delivered-batch stage timings of the current (or just finished)
    /// epoch run, in delivery order.
    pub fn epoch_timings(&self) -> &[StageTiming] {
        &self.timings
    }

    /// Occupancy counters of the most recently finished run.
    pub fn stats(&self) -> Option<PipelineStats> {
        self.last_stats
    }

    /// Pull the next batch of `epoch`. Starting a different epoch than the
    /// active one abandons the active run. After the final batch, returns
    /// `EndOfEpoch` once; the next call starts a fresh run.
    pub fn next_batch(&mut self, epoch: u64) -> Result<NextBatch> {
        if let Some(msg) = &self.poisoned {
            return Err(Error::Pipeline(format!("pipeline poisoned by earlier failure: {msg}")));
        }
        match &self.active {
            Some(run) if run.epoch == epoch => {}
            Some(_) => {
                self.finish_run();
                self.start_run(epoch)?;
            }
            None => self.start_run(epoch)?,
        }

        let run = self.active.as_mut().expect("started above");
        let t = Instant::now();
        match run.output_rx.recv() {
            Ok(Ok((batch, mut timing))) => {
                timing.wait_ns = t.elapsed().as_nanos() as u64;
                self.timings.push(timing);
                run.delivered += 1;
                Ok(NextBatch::Batch(batch))
            }
            Ok(Err(e)) => {
                self.poisoned = Some(e.to_string());
                self.finish_run();
                Err(e)
            }
            Err(_) => {
                // Collator exited and the queue drained: the epoch is over.
                self.finish_run();
                Ok(NextBatch::EndOfEpoch)
            }
        }
    }

    fn start_run(&mut self, epoch: u64) -> Result<()> {
        let order = permutation(self.global_seed, epoch, self.source.len())?;
        let work: Vec<u64> = order[..self.used_samples as usize].to_vec();

        let budget = self.queue_depth as u64 * self.batch_size as u64;
        let sem = Arc::new(Semaphore::new(budget));
        // Live items are capped at `budget` tokens and each lives in at most
        // one channel, so `budget`-capacity channels make sends non-blocking.
        let (host_tx, host_rx) = bounded::<WorkItem>(budget as usize);
        let (offload_tx, offload_rx) = bounded::<WorkItem>(budget as usize);
        let (collator_tx, collator_rx) = bounded::<CollatorMsg>(budget as usize);
        let (output_tx, output_rx) = bounded::<OutputMsg>(self.queue_depth as usize);
        let (stop_tx, stop_rx) = bounded::<()>(0);

        let shared = Arc::new(RunShared {
            source: Arc::clone(&self.source),
            ops: Arc::clone(&self.ops),
            segments: Arc::clone(&self.segments),
            global_seed: self.global_seed,
            epoch,
            sem: Arc::clone(&sem),
        });

        let mut joins = Vec::new();

        // Reader: permutation positions become work items, gated by tokens.
        {
            let shared = Arc::clone(&shared);
            let to_host = host_tx.clone();
            let b = self.batch_size as u64;
            joins.push(
                std::thread::Builder::new()
                    .name("lf-reader".into())
                    .spawn(move || {
                        for (pos, &ds_index) in work.iter().enumerate() {
                            if !shared.sem.acquire() {
                                return;
                            }
                            let item = WorkItem {
                                batch_id: pos as u64 / b,
                                slot: (pos as u64 % b) as u32,
                                ds_index,
                                label: 0,
                                key: None,
                                image: None,
                                rng: SampleRng::new(0),
                                next_seg: 0,
                                decode_ns: 0,
                                host_ns: 0,
                                offload_ns: 0,
                            };
                            if to_host.send(item).is_err() {
                                return;
                            }
                        }
                    })
                    .expect("spawn reader"),
            );
        }

        for w in 0..self.host_workers {
            let shared = Arc::clone(&shared);
            let input = host_rx.clone();
            let stop = stop_rx.clone();
            let senders = PoolSenders {
                to_host: host_tx.clone(),
                to_offload: (self.offload_workers > 0).then(|| offload_tx.clone()),
                to_collator: collator_tx.clone(),
            };
            joins.push(
                std::thread::Builder::new()
                    .name(format!("lf-host-{w}"))
                    .spawn(move || pool_worker(PoolTag::Host, shared, input, stop, senders))
                    .expect("spawn host worker"),
            );
        }

        for w in 0..self.offload_workers {
            let shared = Arc::clone(&shared);
            let input = offload_rx.clone();
            let stop = stop_rx.clone();
            let senders = PoolSenders {
                to_host: host_tx.clone(),
                to_offload: Some(offload_tx.clone()),
                to_collator: collator_tx.clone(),
            };
            joins.push(
                std::thread::Builder::new()
                    .name(format!("lf-offload-{w}"))
                    .spawn(move || pool_worker(PoolTag::Offload, shared, input, stop, senders))
                    .expect("spawn offload worker"),
            );
        }

        {
            let plan = CollatorPlan {
                epoch,
                batch_size: self.batch_size,
                n_batches: self.n_batches,
                last_batch_len: self.last_batch_len,
                preserve_order: self.preserve_order,
            };
            let sem = Arc::clone(&sem);
            let stop = stop_rx.clone();
            joins.push(
                std::thread::Builder::new()
                    .name("lf-collator".into())
                    .spawn(move || collator(plan, sem, collator_rx, stop, output_tx))
                    .expect("spawn collator"),
            );
        }

        // The threads own their channel clones; the originals drop here so
        // disconnects propagate as stages exit.
        drop(host_tx);
        drop(offload_tx);
        drop(collator_tx);
        drop(stop_rx);

        self.timings.clear();
        self.active = Some(EpochRun {
            epoch,
            output_rx,
            _stop_tx: stop_tx,
            sem,
            joins,
            delivered: 0,
        });
        Ok(())
    }

    /// Tear down the active run (idempotent): close the token gate, break
    /// every select via the stop channel, and join all threads.
    fn finish_run(&mut self) {
        if let Some(run) = self.active.take() {
            run.sem.close();
            drop(run.output_rx);
            drop(run._stop_tx);
            for j in run.joins {
                let _ = j.join();
            }
            self.last_stats = Some(PipelineStats {
                sample_budget: self.queue_depth as u64 * self.batch_size as u64,
                peak_in_flight_samples: run.sem.peak(),
                delivered_batches: run.delivered,
            });
        }
    }

    /// Flattened per-sample value count after augmentation, discovered by
    /// running one sample through the reference path. Cheap relative to an
    /// epoch; used to size trainer weights.
    pub fn probe_sample_len(&self) -> Result<usize> {
        let sample = self.source.fetch(0)?;
        let seed = sample_seed(self.global_seed, 0, 0);
        let img = apply_chain(&sample.image, &self.chain, seed)
            .map_err(|e| Error::from(e).for_sample(&sample.key))?;
        Ok(img.value_count())
    }

    /// Single-context ground truth: the exact batches a run of `epoch` must
    /// produce, in order, computed with no concurrency. Uses the same
    /// optimized chain, seeding, and collation as the executor, so outputs
    /// are comparable bit for bit.
    pub fn reference_epoch(&self, epoch: u64) -> Result<Vec<Batch>> {
        let order = permutation(self.global_seed, epoch, self.source.len())?;
        let b = self.batch_size as u64;
        let mut out = Vec::with_capacity(self.n_batches as usize);
        for batch_id in 0..self.n_batches {
            let len = if batch_id + 1 == self.n_batches {
                self.last_batch_len as u64
            } else {
                b
            };
            let mut items = Vec::with_capacity(len as usize);
            for slot in 0..len {
                let ds_index = order[(batch_id * b + slot) as usize];
                let sample = self.source.fetch(ds_index)?;
                let seed = sample_seed(self.global_seed, epoch, ds_index);
                let image = apply_chain(&sample.image, &self.chain, seed)
                    .map_err(|e| Error::from(e).for_sample(&sample.key))?;
                items.push(WorkItem {
                    batch_id,
                    slot: slot as u32,
                    ds_index,
                    label: sample.label,
                    key: Some(sample.key),
                    image: Some(image),
                    rng: SampleRng::new(0),
                    next_seg: 0,
                    decode_ns: 0,
                    host_ns: 0,
                    offload_ns: 0,
                });
            }
            let (batch, _) = collate_batch(epoch, items)?;
            out.push(batch);
        }
        Ok(out)
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.finish_run();
    }
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("dataset_len", &self.source.len())
            .field("batch_size", &self.batch_size)
            .field("n_batches", &self.n_batches)
            .field("host_workers", &self.host_workers)
            .field("offload_workers", &self.offload_workers)
            .field("queue_depth", &self.queue_depth)
            .field("preserve_order", &self.preserve_order)
            .field("ops", &self.ops.len())
            .finish()
    }
}
