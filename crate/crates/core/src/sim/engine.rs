//! The simulation engine: workers and parameter server in virtual time.
//!
//! Worker loop (both protocols): pull issued -> pull arrives (snapshot
//! taken, batch drawn, compute starts) -> compute done -> push arrives at
//! the PS. Under BSP the push lands at the barrier; when the last one
//! arrives, a barrier-release event applies one aggregated update and the
//! next superstep dispatches. Under ASP the push applies immediately and
//! the worker pulls again. Switches checkpoint the model: in-flight work is
//! discarded (reservations refunded), the clock advances by the
//! checkpoint/restore overhead, and all workers resume fresh pulls.
//!
//! Sample accounting is reservation-based so the run consumes the total
//! workload exactly: a step reserves its samples when dispatched and either
//! applies them or refunds them on cancellation. BSP supersteps clip their
//! final batch to the phase quota, which keeps the BSP sample share exact
//! under elastic cluster resizing.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::event::{EventKind, EventQueue, CLUSTER};
use super::profile::validate_injections;
use super::throughput::{Completion, ThroughputTracker};
use super::trace::{RunStatus, RunTrace, TimeAccounting, TraceEvent, TraceRecord};
use super::{SimError, SimTime, StragglerInjection, SwitchOverheadModel, WorkerProfile};
use crate::kernel::{
    loss_and_grad, make_dataset, per_sample_grad, test_accuracy, Hyperparams, KernelError,
    ModelSpec, MomentumState, ParameterVector, SyntheticDataset,
};
use crate::metrics::EvalPoint;
use crate::policies::{
    config_policy, elastic_policy_step, greedy_policy_step, momentum_at, DynamicCriterionState,
    ElasticAction, GreedyAction, LrScaling, MomentumVariant, Protocol, StragglerDetector,
    StragglerPolicy, SwitchPlan,
};
use crate::protocols::{
    asp_apply, bsp_superstep, pull_params, BarrierState, GradientMessage, ParamSnapshot,
    StalenessRecord,
};

/// Synthetic dataset shape; feature and class counts come from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Everything one run needs. Identical specs produce bit-identical traces.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub model: ModelSpec,
    pub data: DataConfig,
    /// User-provided base hyper-parameters; per-protocol values are derived
    /// by the configuration policy.
    pub hyperparams: Hyperparams,
    pub plan: SwitchPlan,
    pub workers: Vec<WorkerProfile>,
    pub injections: Vec<StragglerInjection>,
    pub overhead: SwitchOverheadModel,
    pub lr_scaling: LrScaling,
    pub momentum_variant: MomentumVariant,
    /// Evaluation cadence in ASP-equivalent steps (one per local batch).
    pub eval_every_asp_steps: u64,
    pub max_transient_duration_s: f64,
    pub seed: u64,
}

impl RunSpec {
    fn validate(&self) -> Result<Vec<u64>, SimError> {
        if self.workers.is_empty() {
            return Err(SimError::InvalidSpec("cluster has no workers".into()));
        }
        for (i, w) in self.workers.iter().enumerate() {
            if w.worker_id != i as u32 {
                return Err(SimError::InvalidSpec(
                    "worker ids must be dense and in order (0..n)".into(),
                ));
            }
            w.validate()?;
        }
        self.hyperparams.validate()?;
        self.plan.validate()?;
        self.overhead.validate()?;
        validate_injections(&self.injections, self.workers.len() as u32, self.max_transient_duration_s)?;
        if self.eval_every_asp_steps == 0 {
            return Err(SimError::InvalidSpec("eval_every_asp_steps must be >= 1".into()));
        }
        if let Some(cfg) = &self.plan.straggler_detector {
            cfg.validate()?;
        }
        if let Some(cfg) = &self.plan.dynamic_criterion {
            cfg.validate()?;
        }

        // Per-phase sample quotas must be exact and whole local batches.
        let w = self.hyperparams.total_workload;
        let b = self.hyperparams.batch_size;
        let mut quotas = Vec::with_capacity(self.plan.phases.len());
        for phase in &self.plan.phases {
            let raw = w as f64 * phase.fraction;
            let q = raw.round();
            if (raw - q).abs() > 1e-6 * raw.abs().max(1.0) {
                return Err(SimError::InvalidSpec(format!(
                    "phase fraction {} of workload {w} is not a whole number of samples",
                    phase.fraction
                )));
            }
            let q = q as u64;
            if q % b != 0 {
                return Err(SimError::InvalidSpec(format!(
                    "phase quota {q} samples is not a whole number of local batches ({b})"
                )));
            }
            quotas.push(q);
        }
        if quotas.iter().sum::<u64>() != w {
            return Err(SimError::InvalidSpec(
                "phase quotas do not sum to the total workload".into(),
            ));
        }
        Ok(quotas)
    }
}

/// Runs one simulation to completion or divergence.
pub fn run(spec: &RunSpec) -> Result<RunTrace, SimError> {
    let quotas = spec.validate()?;
    let data = make_dataset(
        spec.data.seed,
        spec.data.n_train,
        spec.data.n_test,
        spec.model.features,
        spec.model.classes,
    )?;
    let mut engine = Engine::new(spec, data, quotas);
    engine.start();
    engine.drive()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WorkerState {
    PreInit,
    Pulling,
    Computing,
    Pushing,
    BarrierWait,
    InSwitch,
    Idle,
    Removed,
}

struct WorkerRt {
    profile: WorkerProfile,
    state: WorkerState,
    state_since: SimTime,
    generation: u32,
    acct: TimeAccounting,
    active: bool,
    // In-flight step context.
    snapshot: Option<ParamSnapshot>,
    batch: Vec<u32>,
    assigned: u64,
    pending_loss: f64,
    pending_grad: Option<Vec<f64>>,
    busy_ns: u64,
    // Active injection effects.
    added_latency_s: f64,
    compute_mult: f64,
}

impl WorkerRt {
    fn new(profile: WorkerProfile) -> Self {
        Self {
            profile,
            state: WorkerState::PreInit,
            state_since: SimTime::ZERO,
            generation: 0,
            acct: TimeAccounting::default(),
            active: true,
            snapshot: None,
            batch: Vec::new(),
            assigned: 0,
            pending_loss: 0.0,
            pending_grad: None,
            busy_ns: 0,
            added_latency_s: 0.0,
            compute_mult: 1.0,
        }
    }

    /// Attributes the elapsed interval to the current state's bucket and
    /// enters `next`.
    fn transition(&mut self, now: SimTime, next: WorkerState) {
        let elapsed = (now - self.state_since).nanos();
        match self.state {
            WorkerState::PreInit => self.acct.init_ns += elapsed,
            WorkerState::Pulling | WorkerState::Pushing => self.acct.network_ns += elapsed,
            WorkerState::Computing => self.acct.compute_ns += elapsed,
            WorkerState::BarrierWait => self.acct.barrier_wait_ns += elapsed,
            WorkerState::InSwitch => self.acct.switch_ns += elapsed,
            WorkerState::Idle | WorkerState::Removed => self.acct.idle_ns += elapsed,
        }
        self.state = next;
        self.state_since = now;
    }

    fn latency(&self) -> SimTime {
        SimTime::from_secs_f64(self.profile.base_net_latency_s + self.added_latency_s)
    }
}

struct Engine<'a> {
    spec: &'a RunSpec,
    data: SyntheticDataset,
    now: SimTime,
    queue: EventQueue,
    workers: Vec<WorkerRt>,

    params: ParameterVector,
    momentum: MomentumState,
    staleness: StalenessRecord,
    barrier: BarrierState,

    protocol: Protocol,
    phase_idx: usize,
    phase_params: Hyperparams,
    quotas: Vec<u64>,
    phase_samples: Vec<u64>,
    in_greedy_interim: bool,
    pending_switch: Option<(Protocol, usize, bool)>,
    switching: bool,
    dynamic: Option<DynamicCriterionState>,
    dynamic_fired: bool,
    pending_removals: BTreeSet<u32>,
    detector: StragglerDetector,

    samples_applied: u64,
    samples_bsp: u64,
    reserved: u64,
    global_step: u64,
    asp_samples_since_switch: u64,

    sampler: BatchSampler,
    jitter_rng: ChaCha8Rng,

    eval_stride: u64,
    evals_fired: u64,
    throughput: ThroughputTracker,

    num_switches: u32,
    switch_overhead_ns: u64,

    records: Vec<TraceRecord>,
    evals: Vec<EvalPoint>,
    last_loss: f64,
    last_accuracy: f64,
    last_record_time: SimTime,
    last_record_samples: u64,
    outcome: Option<RunStatus>,
}

/// Epoch-reshuffled pass over the train indices.
///
/// Public so oracle tests can replay the exact batch sequence a run drew:
/// under BSP, workers pull in worker-id order at the barrier release, so
/// one superstep's union batch equals the next `n * B` draws in order.
pub struct BatchSampler {
    n_train: u32,
    perm: Vec<u32>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    /// The sampler a run with this spec seed uses.
    pub fn for_run(spec_seed: u64, n_train: usize) -> Self {
        Self {
            n_train: n_train as u32,
            perm: Vec::new(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(spec_seed ^ 0x53414D50_4C45_5252),
        }
    }

    pub fn next(&mut self, count: u64) -> Vec<u32> {
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            if self.pos >= self.perm.len() {
                self.reshuffle();
            }
            out.push(self.perm[self.pos]);
            self.pos += 1;
        }
        out
    }

    fn reshuffle(&mut self) {
        if self.perm.is_empty() {
            self.perm = (0..self.n_train).collect();
        }
        // Fisher-Yates; kept inline so the stream never depends on library
        // shuffle internals.
        for i in (1..self.perm.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            self.perm.swap(i, j);
        }
        self.pos = 0;
    }
}

impl<'a> Engine<'a> {
    fn new(spec: &'a RunSpec, data: SyntheticDataset, quotas: Vec<u64>) -> Self {
        let n = spec.workers.len() as u32;
        let params = ParameterVector::init(&spec.model, spec.seed);
        let momentum = MomentumState::zeros(params.values.len());
        let protocol = spec.plan.phases[0].protocol;
        let phase_params =
            config_policy(&spec.hyperparams, n, protocol, spec.lr_scaling, spec.momentum_variant);
        let dynamic = spec.plan.dynamic_criterion.map(DynamicCriterionState::new);
        let n_phases = spec.plan.phases.len();
        Self {
            workers: spec.workers.iter().map(|p| WorkerRt::new(*p)).collect(),
            data,
            now: SimTime::ZERO,
            queue: EventQueue::new(),
            params,
            momentum,
            staleness: StalenessRecord::default(),
            barrier: BarrierState::new([]),
            protocol,
            phase_idx: 0,
            phase_params,
            quotas,
            phase_samples: vec![0; n_phases],
            in_greedy_interim: false,
            pending_switch: None,
            switching: false,
            dynamic,
            dynamic_fired: false,
            pending_removals: BTreeSet::new(),
            detector: StragglerDetector::default(),
            samples_applied: 0,
            samples_bsp: 0,
            reserved: 0,
            global_step: 0,
            asp_samples_since_switch: 0,
            sampler: BatchSampler::for_run(spec.seed, spec.data.n_train),
            jitter_rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x4A49_5454_4552),
            eval_stride: spec.eval_every_asp_steps * spec.hyperparams.batch_size,
            evals_fired: 0,
            throughput: ThroughputTracker::default(),
            num_switches: 0,
            switch_overhead_ns: 0,
            records: Vec::new(),
            evals: Vec::new(),
            last_loss: f64::NAN,
            last_accuracy: 0.0,
            last_record_time: SimTime::ZERO,
            last_record_samples: 0,
            outcome: None,
            spec,
        }
    }

    fn active_ids(&self) -> Vec<u32> {
        self.workers
            .iter()
            .filter(|w| w.active)
            .map(|w| w.profile.worker_id)
            .collect()
    }

    fn start(&mut self) {
        for inj in &self.spec.injections {
            let start = SimTime::from_secs_f64(inj.onset_s);
            let end = SimTime::from_secs_f64(inj.onset_s + inj.duration_s);
            self.queue.push(start, EventKind::InjectionStart, inj.worker_id, u32::MAX);
            self.queue.push(end, EventKind::InjectionEnd, inj.worker_id, u32::MAX);
        }
        let init_end = SimTime::from_secs_f64(self.spec.overhead.cluster_init_s);
        self.now = init_end;
        self.last_accuracy = test_accuracy(&self.spec.model, &self.params, &self.data);
        let train_refs: Vec<&crate::kernel::Sample> = self.data.train.iter().collect();
        self.last_loss = loss_and_grad(
            &self.spec.model,
            &self.params,
            &train_refs,
            self.spec.hyperparams.weight_decay,
        )
        .map(|(loss, _)| loss)
        .unwrap_or(f64::INFINITY);
        self.evals.push(EvalPoint {
            sim_time_s: init_end.as_secs_f64(),
            global_step: 0,
            accuracy: self.last_accuracy,
        });
        self.record(TraceEvent::Init);
        if self.spec.plan.straggler_policy != StragglerPolicy::None {
            let window =
                SimTime::from_secs_f64(self.spec.plan.straggler_detector.unwrap().window_secs);
            self.queue.push(init_end + window, EventKind::DetectTick, CLUSTER, u32::MAX);
        }
        match self.protocol {
            Protocol::Bsp => self.dispatch_superstep(),
            Protocol::Asp => self.dispatch_asp_pulls(),
        }
    }

    fn drive(mut self) -> Result<RunTrace, SimError> {
        while self.outcome.is_none() {
            let Some(ev) = self.queue.pop() else {
                return Err(SimError::InvalidSpec(
                    "event queue drained before the workload completed".into(),
                ));
            };
            debug_assert!(ev.time >= self.now, "time went backwards");
            // Stale per-worker events from a cancelled generation.
            if ev.subject != CLUSTER
                && ev.generation != u32::MAX
                && ev.generation != self.workers[ev.subject as usize].generation
            {
                continue;
            }
            // Injection events fire regardless of generation.
            self.now = ev.time;
            match ev.kind {
                EventKind::InjectionStart => self.on_injection(ev.subject, true),
                EventKind::InjectionEnd => self.on_injection(ev.subject, false),
                EventKind::PullArrives => self.on_pull_arrives(ev.subject),
                EventKind::ComputeDone => self.on_compute_done(ev.subject)?,
                EventKind::PushArrives => self.on_push_arrives(ev.subject)?,
                EventKind::BarrierRelease => self.on_barrier_release()?,
                EventKind::DetectTick => self.on_detect_tick(),
                EventKind::EvalTick => self.on_eval(),
                EventKind::SwitchBegin => self.on_switch_begin(),
                EventKind::SwitchEnd => self.on_switch_end(),
            }
        }
        Ok(self.finish())
    }

    // ── Phase and budget bookkeeping ──────────────────────────────────

    fn last_phase(&self) -> usize {
        self.spec.plan.phases.len() - 1
    }

    /// Which phase a sample processed right now debits: the greedy interim
    /// debits the terminal ASP phase.
    fn sample_context(&self) -> usize {
        if self.in_greedy_interim {
            self.last_phase()
        } else {
            self.phase_idx
        }
    }

    fn available_global(&self) -> u64 {
        self.spec.hyperparams.total_workload - self.samples_applied - self.reserved
    }

    /// Samples still dispatchable in the current context.
    fn available_in_context(&self) -> u64 {
        let ctx = self.sample_context();
        if ctx == self.last_phase() {
            self.available_global()
        } else {
            (self.quotas[ctx] - self.phase_samples[ctx])
                .saturating_sub(self.reserved)
                .min(self.available_global())
        }
    }

    fn bsp_quota(&self) -> u64 {
        self.spec
            .plan
            .phases
            .iter()
            .zip(&self.quotas)
            .filter(|(p, _)| p.protocol == Protocol::Bsp)
            .map(|(_, q)| q)
            .sum()
    }

    fn bsp_quota_met(&self) -> bool {
        self.dynamic_fired || self.samples_bsp >= self.bsp_quota()
    }

    /// Learning rate for an update when `samples_before` samples have been
    /// applied: the phase-scaled base times the decay factor of the largest
    /// schedule boundary at or below that workload position.
    fn lr_for(&self, samples_before: u64) -> f64 {
        let user = &self.spec.hyperparams;
        let b = user.batch_size;
        let idx = user
            .lr_schedule
            .boundaries
            .partition_point(|&boundary| boundary * b <= samples_before);
        let factor = if idx == 0 { 1.0 } else { user.lr_schedule.factors[idx - 1] };
        self.phase_params.lr_schedule.base_lr * factor
    }

    fn effective_momentum(&self) -> f64 {
        match self.protocol {
            Protocol::Bsp => self.phase_params.momentum,
            Protocol::Asp => {
                let epochs = self.asp_samples_since_switch / self.data.train.len() as u64;
                momentum_at(
                    self.spec.momentum_variant,
                    self.spec.hyperparams.momentum,
                    self.spec.workers.len() as u32,
                    epochs,
                )
            }
        }
    }

    // ── Dispatch ──────────────────────────────────────────────────────

    /// Issues one pull; the worker must be active.
    fn issue_pull(&mut self, worker: u32, assigned: u64) {
        let now = self.now;
        let w = &mut self.workers[worker as usize];
        debug_assert!(w.active);
        w.assigned = assigned;
        self.reserved += assigned;
        let lat = w.latency();
        w.busy_ns = lat.nanos();
        w.transition(now, WorkerState::Pulling);
        self.queue.push(now + lat, EventKind::PullArrives, worker, w.generation);
    }

    /// Dispatches a BSP superstep across the active workers, clipping the
    /// final superstep to the phase quota.
    fn dispatch_superstep(&mut self) {
        let now = self.now;
        let active = self.active_ids();
        let k = active.len() as u64;
        let b = self.spec.hyperparams.batch_size;
        let total = (k * b).min(self.available_in_context());
        if total == 0 {
            // Nothing left to dispatch; completion is decided at applies.
            return;
        }
        let base = total / k;
        let extra = total % k;
        let mut expected = Vec::new();
        let mut assignments = Vec::new();
        for (i, id) in active.iter().enumerate() {
            let assigned = base + u64::from((i as u64) < extra);
            if assigned > 0 {
                expected.push(*id);
                assignments.push((*id, assigned));
            } else {
                self.workers[*id as usize].transition(now, WorkerState::Idle);
            }
        }
        self.barrier.reset(expected);
        for (id, assigned) in assignments {
            self.issue_pull(id, assigned);
        }
    }

    /// Under ASP every active worker reserves and pulls independently.
    fn dispatch_asp_pulls(&mut self) {
        for id in self.active_ids() {
            self.asp_reserve_and_pull(id);
        }
    }

    fn asp_reserve_and_pull(&mut self, worker: u32) {
        let b = self.phase_params.batch_size;
        if self.available_in_context() >= b {
            self.issue_pull(worker, b);
        } else {
            let now = self.now;
            self.workers[worker as usize].transition(now, WorkerState::Idle);
        }
    }

    // ── Event handlers ────────────────────────────────────────────────

    fn on_injection(&mut self, worker: u32, start: bool) {
        let w = &mut self.workers[worker as usize];
        if start {
            let inj = self
                .spec
                .injections
                .iter()
                .find(|i| {
                    i.worker_id == worker && SimTime::from_secs_f64(i.onset_s) == self.now
                })
                .expect("scheduled injection exists");
            w.added_latency_s = inj.added_latency_s;
            w.compute_mult = inj.compute_multiplier;
            self.record(TraceEvent::InjectionStart);
        } else {
            w.added_latency_s = 0.0;
            w.compute_mult = 1.0;
            self.record(TraceEvent::InjectionEnd);
        }
    }

    fn on_pull_arrives(&mut self, worker: u32) {
        let snapshot = pull_params(&self.params);
        let assigned = self.workers[worker as usize].assigned;
        let batch = self.sampler.next(assigned);
        let now = self.now;
        let w = &mut self.workers[worker as usize];
        w.snapshot = Some(snapshot);
        w.batch = batch;

        let base = w.profile.base_step_time_s;
        let local_b = self.spec.hyperparams.batch_size as f64;
        let mut duration = base * (assigned as f64 / local_b) * w.compute_mult;
        if w.profile.jitter_sigma > 0.0 {
            let z = standard_normal(&mut self.jitter_rng);
            duration *= (w.profile.jitter_sigma * z).exp();
        }
        let dur = SimTime::from_secs_f64(duration);
        w.busy_ns += dur.nanos();
        w.transition(now, WorkerState::Computing);
        self.queue.push(now + dur, EventKind::ComputeDone, worker, w.generation);
    }

    fn on_compute_done(&mut self, worker: u32) -> Result<(), SimError> {
        let now = self.now;
        let (loss, grad) = {
            let w = &self.workers[worker as usize];
            let snapshot = w.snapshot.as_ref().expect("compute without snapshot");
            let snap_params =
                ParameterVector { values: snapshot.values.clone(), version: snapshot.version };
            let batch: Vec<&crate::kernel::Sample> =
                w.batch.iter().map(|&i| &self.data.train[i as usize]).collect();
            loss_and_grad(
                &self.spec.model,
                &snap_params,
                &batch,
                self.spec.hyperparams.weight_decay,
            )?
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            self.last_loss = loss;
            self.finalize(RunStatus::Diverged);
            return Ok(());
        }
        let w = &mut self.workers[worker as usize];
        w.pending_loss = loss;
        w.pending_grad = Some(grad);
        let lat = w.latency();
        w.busy_ns += lat.nanos();
        w.transition(now, WorkerState::Pushing);
        self.queue.push(now + lat, EventKind::PushArrives, worker, w.generation);
        Ok(())
    }

    fn on_push_arrives(&mut self, worker: u32) -> Result<(), SimError> {
        let now = self.now;
        let (msg, samples, busy_ns, loss) = {
            let w = &mut self.workers[worker as usize];
            let snapshot = w.snapshot.take().expect("push without snapshot");
            let grad = w.pending_grad.take().expect("push without gradient");
            let assigned = w.assigned;
            (
                GradientMessage {
                    worker_id: worker,
                    base_version: snapshot.version,
                    grad,
                    batch_size: assigned,
                    compute_finished_at: now.as_secs_f64(),
                },
                assigned,
                w.busy_ns,
                w.pending_loss,
            )
        };
        self.throughput
            .record(worker, Completion { completed_at: now, samples, busy_ns });

        match self.protocol {
            Protocol::Bsp => {
                let complete = self.barrier.receive(msg)?;
                self.workers[worker as usize].transition(now, WorkerState::BarrierWait);
                if complete {
                    self.queue.push(now, EventKind::BarrierRelease, CLUSTER, u32::MAX);
                }
            }
            Protocol::Asp => {
                let lr = self.lr_for(self.samples_applied);
                let mu = self.effective_momentum();
                match asp_apply(&msg, &mut self.params, &mut self.momentum, lr, mu, &mut self.staleness)
                {
                    Ok(_stale) => {}
                    Err(crate::protocols::ProtocolError::Kernel(KernelError::Diverged(_))) => {
                        self.finalize(RunStatus::Diverged);
                        return Ok(());
                    }
                    Err(e) => return Err(e.into()),
                }
                let ctx = self.sample_context();
                self.reserved -= samples;
                self.workers[worker as usize].assigned = 0;
                self.samples_applied += samples;
                self.phase_samples[ctx] += samples;
                self.asp_samples_since_switch += samples;
                self.global_step += 1;
                self.last_loss = loss;
                self.maybe_eval();
                if self.samples_applied == self.spec.hyperparams.total_workload {
                    self.finalize(RunStatus::Completed);
                    return Ok(());
                }
                // Planned phase boundary (for plans whose ASP phase is not
                // terminal, e.g. ASP-then-BSP ordering runs).
                if !self.in_greedy_interim
                    && ctx != self.last_phase()
                    && self.phase_samples[ctx] >= self.quotas[ctx]
                {
                    self.begin_switch(self.spec.plan.phases[ctx + 1].protocol, ctx + 1, false);
                    return Ok(());
                }
                if self.pending_switch.is_none() && !self.switching {
                    self.asp_reserve_and_pull(worker);
                } else {
                    self.workers[worker as usize].transition(now, WorkerState::Idle);
                }
            }
        }
        Ok(())
    }

    fn on_barrier_release(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let msgs = self.barrier.take_complete()?;
        let total: u64 = msgs.iter().map(|m| m.batch_size).sum();
        let loss = msgs
            .iter()
            .map(|m| {
                self.workers[m.worker_id as usize].pending_loss * m.batch_size as f64
                    / total as f64
            })
            .sum::<f64>();

        // Snapshot for the dynamic criterion before the update mutates the
        // parameters.
        let criterion_input = if self.dynamic.is_some() && !self.dynamic_fired {
            let base = self.params.values.clone();
            let indices: Vec<u32> =
                msgs.iter().flat_map(|m| self.workers[m.worker_id as usize].batch.clone()).collect();
            Some((base, indices))
        } else {
            None
        };

        let lr = self.lr_for(self.samples_applied);
        let mu = self.phase_params.momentum;
        match bsp_superstep(&msgs, &mut self.params, &mut self.momentum, lr, mu, &mut self.staleness)
        {
            Ok(()) => {}
            Err(crate::protocols::ProtocolError::Kernel(KernelError::Diverged(_))) => {
                self.finalize(RunStatus::Diverged);
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        }

        let ctx = self.sample_context();
        self.reserved -= total;
        self.samples_applied += total;
        self.samples_bsp += total;
        self.phase_samples[ctx] += total;
        self.global_step += 1;
        self.last_loss = loss;

        for m in &msgs {
            let w = &mut self.workers[m.worker_id as usize];
            w.assigned = 0;
            w.transition(now, WorkerState::Idle);
        }
        self.maybe_eval();
        if self.samples_applied == self.spec.hyperparams.total_workload {
            self.finalize(RunStatus::Completed);
            return Ok(());
        }

        // The dynamic criterion reads the superstep's own batch.
        if let Some((base, indices)) = criterion_input {
            self.evaluate_dynamic_criterion(&base, &indices)?;
        }

        // Elastic removals take effect only after the superstep completes.
        if !self.pending_removals.is_empty() {
            let removals = std::mem::take(&mut self.pending_removals);
            for id in removals {
                let w = &mut self.workers[id as usize];
                if w.active {
                    w.active = false;
                    w.transition(now, WorkerState::Removed);
                }
            }
            self.rederive_phase_params();
            self.record(TraceEvent::Resize);
        }

        // Phase boundary: quota met exactly thanks to superstep clipping.
        if self.pending_switch.is_none() && !self.switching {
            if self.phase_samples[ctx] >= self.quotas[ctx] && ctx != self.last_phase() {
                if self.spec.plan.straggler_policy == StragglerPolicy::Elastic {
                    self.restore_all();
                }
                self.begin_switch(self.spec.plan.phases[ctx + 1].protocol, ctx + 1, false);
            } else {
                self.dispatch_superstep();
            }
        }
        Ok(())
    }

    fn evaluate_dynamic_criterion(&mut self, base: &[f64], indices: &[u32]) -> Result<(), SimError> {
        let mut per_sample = Vec::with_capacity(indices.len());
        let mut mean = vec![0.0; base.len()];
        for &i in indices {
            let (_, g) = per_sample_grad(&self.spec.model, base, &self.data.train[i as usize])?;
            for (m, gi) in mean.iter_mut().zip(&g) {
                *m += gi;
            }
            per_sample.push(g);
        }
        let inv = 1.0 / indices.len() as f64;
        for m in &mut mean {
            *m *= inv;
        }
        let fired = self
            .dynamic
            .as_mut()
            .expect("criterion state present")
            .observe(&mean, &per_sample)?;
        if fired && self.pending_switch.is_none() && !self.switching {
            self.dynamic_fired = true;
            let last = self.last_phase();
            if self.phase_idx != last {
                self.begin_switch(self.spec.plan.phases[last].protocol, last, false);
            }
        }
        Ok(())
    }

    fn on_detect_tick(&mut self) {
        let now = self.now;
        let cfg = self.spec.plan.straggler_detector.expect("detector configured");
        let window = SimTime::from_secs_f64(cfg.window_secs);
        self.queue.push(now + window, EventKind::DetectTick, CLUSTER, u32::MAX);
        if self.switching || self.pending_switch.is_some() || self.outcome.is_some() {
            return;
        }
        let rates = self.throughput.busy_rates(self.active_ids(), now, window);
        let confirmed = self.detector.observe(&rates, &cfg);

        match self.spec.plan.straggler_policy {
            StragglerPolicy::None => {}
            StragglerPolicy::Greedy => {
                match greedy_policy_step(self.protocol, self.bsp_quota_met(), !confirmed.is_empty())
                {
                    GreedyAction::SwitchToAsp => {
                        self.begin_switch(Protocol::Asp, self.phase_idx, true);
                    }
                    GreedyAction::SwitchToBsp => {
                        self.begin_switch(Protocol::Bsp, self.phase_idx, false);
                    }
                    GreedyAction::None => {}
                }
            }
            StragglerPolicy::Elastic => {
                let active: BTreeSet<u32> = self.active_ids().into_iter().collect();
                match elastic_policy_step(self.protocol, self.bsp_quota_met(), &confirmed, &active)
                {
                    ElasticAction::Remove(set) => {
                        // Applied at the next barrier release so the current
                        // superstep completes with the old membership.
                        self.pending_removals.extend(set);
                    }
                    // The restore-and-switch fires at the barrier release
                    // where the quota lands; nothing to do here.
                    ElasticAction::RestoreAndSwitchToAsp | ElasticAction::None => {}
                }
            }
        }
    }

    fn on_eval(&mut self) {
        self.last_accuracy = test_accuracy(&self.spec.model, &self.params, &self.data);
        self.evals.push(EvalPoint {
            sim_time_s: self.now.as_secs_f64(),
            global_step: self.global_step,
            accuracy: self.last_accuracy,
        });
        self.record(TraceEvent::Eval);
    }

    fn maybe_eval(&mut self) {
        let due = self.samples_applied / self.eval_stride;
        if due > self.evals_fired {
            self.evals_fired = due;
            self.queue.push(self.now, EventKind::EvalTick, CLUSTER, u32::MAX);
        }
    }

    // ── Switching and resizing ────────────────────────────────────────

    fn begin_switch(&mut self, to: Protocol, next_phase_idx: usize, interim: bool) {
        debug_assert!(self.pending_switch.is_none() && !self.switching);
        self.pending_switch = Some((to, next_phase_idx, interim));
        self.queue.push(self.now, EventKind::SwitchBegin, CLUSTER, u32::MAX);
    }

    fn on_switch_begin(&mut self) {
        let now = self.now;
        self.switching = true;
        self.num_switches += 1;
        let overhead = SimTime::from_secs_f64(self.spec.overhead.checkpoint_plus_restart_s);
        self.switch_overhead_ns += overhead.nanos();

        // Discard in-flight work: cancel events, refund reservations.
        for w in &mut self.workers {
            w.generation += 1;
            self.reserved -= w.assigned;
            w.assigned = 0;
            w.snapshot = None;
            w.pending_grad = None;
            w.batch.clear();
            if w.active {
                w.transition(now, WorkerState::InSwitch);
            }
        }
        self.barrier.reset([]);
        self.record(TraceEvent::SwitchBegin);
        self.queue.push(now + overhead, EventKind::SwitchEnd, CLUSTER, u32::MAX);
    }

    fn on_switch_end(&mut self) {
        let (to, next_phase, interim) = self.pending_switch.take().expect("switch target");
        self.switching = false;
        self.protocol = to;
        self.phase_idx = next_phase;
        self.in_greedy_interim = interim;
        if to == Protocol::Asp {
            self.asp_samples_since_switch = 0;
        }
        self.rederive_phase_params();
        self.record(TraceEvent::SwitchEnd);
        match to {
            Protocol::Bsp => self.dispatch_superstep(),
            Protocol::Asp => self.dispatch_asp_pulls(),
        }
    }

    fn rederive_phase_params(&mut self) {
        let n_active = self.workers.iter().filter(|w| w.active).count() as u32;
        self.phase_params = config_policy(
            &self.spec.hyperparams,
            n_active,
            self.protocol,
            self.spec.lr_scaling,
            self.spec.momentum_variant,
        );
    }

    fn restore_all(&mut self) {
        let now = self.now;
        let mut restored = false;
        for w in &mut self.workers {
            if !w.active {
                w.active = true;
                w.transition(now, WorkerState::Idle);
                restored = true;
            }
        }
        if restored {
            self.record(TraceEvent::Restore);
        }
        self.detector.reset();
    }

    // ── Trace and termination ─────────────────────────────────────────

    fn record(&mut self, event: TraceEvent) {
        let dt = (self.now - self.last_record_time).as_secs_f64();
        let ds = self.samples_applied - self.last_record_samples;
        let throughput = if dt > 0.0 { ds as f64 / dt } else { 0.0 };
        self.records.push(TraceRecord {
            sim_time_s: self.now.as_secs_f64(),
            global_step: self.global_step,
            protocol: self.protocol,
            train_loss: self.last_loss,
            test_accuracy: self.last_accuracy,
            throughput_total: throughput,
            active_workers: self.active_ids(),
            event,
        });
        self.last_record_time = self.now;
        self.last_record_samples = self.samples_applied;
    }

    fn finalize(&mut self, status: RunStatus) {
        if self.outcome.is_some() {
            return;
        }
        if status == RunStatus::Completed {
            self.on_eval();
            self.record(TraceEvent::End);
        } else {
            self.record(TraceEvent::Diverged);
        }
        self.outcome = Some(status);
    }

    fn finish(mut self) -> RunTrace {
        let now = self.now;
        for w in &mut self.workers {
            // Flush the open interval into its bucket.
            let state = w.state;
            w.transition(now, state);
        }
        RunTrace {
            status: self.outcome.expect("finalized"),
            records: self.records,
            evals: self.evals,
            total_time_s: now.as_secs_f64(),
            total_time_ns: now.nanos(),
            global_steps: self.global_step,
            samples_applied: self.samples_applied,
            samples_bsp: self.samples_bsp,
            num_switches: self.num_switches,
            switch_overhead_total_s: self.switch_overhead_ns as f64 / 1e9,
            init_time_s: self.spec.overhead.cluster_init_s,
            accounting: self.workers.iter().map(|w| w.acct).collect(),
            staleness: self.staleness.histogram().clone(),
            final_accuracy: self.last_accuracy,
            final_loss: self.last_loss,
            final_params: self.params.values,
            final_version: self.params.version,
        }
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
