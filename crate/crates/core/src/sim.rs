//! Slot-by-slot broadcast simulation over independent erasure channels.
//!
//! Every reception draw is addressed by `(master_seed, run_index, slot,
//! receiver)`: the first two form a ChaCha8 key, the slot selects the stream
//! and the receiver the word position. A trace therefore depends only on its
//! own coordinates, not on which other runs exist or the order they execute.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{IdncError, Result};
use crate::graph::Clique;
use crate::heuristics::{self, Phase, SchedulerKind};
use crate::model::{FeedbackMatrix, SessionConfig, TransmissionSetting};
use crate::ssp::PolicyTable;

/// Slot budget after which a run is aborted.
pub const DEFAULT_SLOT_CAP: usize = 1_000_000;

/// Source of the clique sent in each coding slot.
#[derive(Debug, Clone, Copy)]
pub enum Scheduler<'a> {
    Heuristic(SchedulerKind),
    Replay(&'a PolicyTable),
}

impl Scheduler<'_> {
    pub fn kind(&self) -> SchedulerKind {
        match self {
            Scheduler::Heuristic(k) => *k,
            Scheduler::Replay(_) => SchedulerKind::SspPolicyReplay,
        }
    }

    pub fn select(&self, f: &FeedbackMatrix, eps: &[f64], alpha: u32, phase: Phase) -> Result<Clique> {
        match (self, phase) {
            (Scheduler::Replay(_), Phase::Initial { slot }) => Ok(heuristics::uncoded_transmission(f, slot)),
            (Scheduler::Replay(table), Phase::Coding) => table.select(f),
            (Scheduler::Heuristic(kind), _) => heuristics::select(*kind, f, eps, alpha, phase),
        }
    }
}

/// What one slot sent and what it changed.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub t: usize,
    pub clique: Clique,
    /// `received[i - 1]` is true iff `R_i` was targeted and got the packet.
    pub received: Vec<bool>,
    /// `Û_{i,t}` for every receiver.
    pub undelivered: Vec<usize>,
}

/// Identifies the configuration a trace was produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLabel {
    pub scheduler: SchedulerKind,
    pub num_receivers: usize,
    pub num_packets: usize,
    pub erasure_probs: Vec<f64>,
    pub alpha: u32,
    pub setting: TransmissionSetting,
    pub master_seed: u64,
}

/// Full record of one simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub label: TraceLabel,
    pub run_index: u64,
    /// Undelivered counts before the first slot.
    pub initial_undelivered: Vec<usize>,
    pub slots: Vec<SlotRecord>,
}

impl RunTrace {
    /// Completion time `T`.
    pub fn completion_time(&self) -> usize {
        self.slots.len()
    }

    pub fn num_receivers(&self) -> usize {
        self.label.num_receivers
    }

    /// `Û_{i,t}` for all receivers; the initial counts at `t = 0`, zeros after `T`.
    pub fn undelivered_after(&self, t: usize) -> Vec<usize> {
        match t {
            0 => self.initial_undelivered.clone(),
            t if t <= self.slots.len() => self.slots[t - 1].undelivered.clone(),
            _ => vec![0; self.num_receivers()],
        }
    }

    /// Realised SSP cost `Σ_t Σ_i Û_{i,t}`.
    pub fn cumulative_cost(&self) -> usize {
        self.slots.iter().map(|s| s.undelivered.iter().sum::<usize>()).sum()
    }
}

fn run_key(master_seed: u64, run_index: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&run_index.to_le_bytes());
    key[16..24].copy_from_slice(b"idnc-sim");
    key
}

/// Bernoulli reception draws addressed by slot and receiver.
struct ChannelDraws {
    rng: ChaCha8Rng,
}

impl ChannelDraws {
    fn new(master_seed: u64, run_index: u64) -> Self {
        ChannelDraws { rng: ChaCha8Rng::from_seed(run_key(master_seed, run_index)) }
    }

    /// True if receiver `i` (0-based) gets the slot-`t` transmission.
    fn received(&mut self, t: usize, i: usize, eps: f64) -> bool {
        self.rng.set_stream(t as u64);
        self.rng.set_word_pos(2 * i as u128);
        self.rng.random_bool(1.0 - eps)
    }
}

/// Simulates one session until every receiver holds every packet.
pub fn simulate_run(config: &SessionConfig, scheduler: Scheduler<'_>, run_index: u64) -> Result<RunTrace> {
    simulate_run_capped(config, scheduler, run_index, DEFAULT_SLOT_CAP)
}

/// [`simulate_run`] with an explicit slot budget.
pub fn simulate_run_capped(
    config: &SessionConfig,
    scheduler: Scheduler<'_>,
    run_index: u64,
    slot_cap: usize,
) -> Result<RunTrace> {
    config.validate()?;
    let kind = scheduler.kind();
    let setting = kind.effective_setting(config);
    let eps = &config.erasure_probs;
    let mut f = config.initial_matrix();
    let initial_undelivered = f.undelivered_vector();
    let mut draws = ChannelDraws::new(config.master_seed, run_index);
    let mut slots = Vec::new();

    while !f.is_complete() {
        let t = slots.len() + 1;
        if t > slot_cap {
            return Err(IdncError::SlotCapExceeded(slot_cap));
        }
        let phase = if setting == TransmissionSetting::TwoPhase && t <= config.num_packets {
            Phase::Initial { slot: t }
        } else {
            Phase::Coding
        };
        let clique = scheduler.select(&f, eps, config.alpha, phase)?;
        let mut received = vec![false; config.num_receivers];
        for v in clique.vertices() {
            received[v.receiver - 1] = draws.received(t, v.receiver - 1, eps[v.receiver - 1]);
        }
        f = f.apply_reception(&clique.target_pairs(), &received)?;
        slots.push(SlotRecord { t, clique, received, undelivered: f.undelivered_vector() });
    }

    Ok(RunTrace {
        label: trace_label(config, kind),
        run_index,
        initial_undelivered,
        slots,
    })
}

/// Runs `config.num_runs` sessions with run indices `0..num_runs`, in index order.
pub fn run_batch(config: &SessionConfig, scheduler: Scheduler<'_>) -> Result<Vec<RunTrace>> {
    run_batch_map(config, scheduler, |t| t)
}

/// [`run_batch`] that reduces each trace with `f` as soon as it finishes.
pub fn run_batch_map<R: Send>(
    config: &SessionConfig,
    scheduler: Scheduler<'_>,
    f: impl Fn(RunTrace) -> R + Sync,
) -> Result<Vec<R>> {
    config.validate()?;
    (0..config.num_runs as u64)
        .into_par_iter()
        .map(|r| simulate_run(config, scheduler, r).map(&f))
        .collect()
}

/// Label carried by every trace of `config` under `kind`.
pub fn trace_label(config: &SessionConfig, kind: SchedulerKind) -> TraceLabel {
    TraceLabel {
        scheduler: kind,
        num_receivers: config.num_receivers,
        num_packets: config.num_packets,
        erasure_probs: config.erasure_probs.clone(),
        alpha: config.alpha,
        setting: kind.effective_setting(config),
        master_seed: config.master_seed,
    }
}

/// Per receiver: `(targeted transmissions, losses)` over all traces.
pub fn loss_counts(traces: &[RunTrace]) -> Vec<(u64, u64)> {
    let m = traces.first().map_or(0, |t| t.num_receivers());
    let mut counts = vec![(0u64, 0u64); m];
    for slot in traces.iter().flat_map(|t| &t.slots) {
        for v in slot.clique.vertices() {
            let c = &mut counts[v.receiver - 1];
            c.0 += 1;
            if !slot.received[v.receiver - 1] {
                c.1 += 1;
            }
        }
    }
    counts
}

/// Writes `run,t,clique,received_mask,U_1,...,U_M`, one line per slot.
pub fn write_trace_csv<W: Write>(mut w: W, traces: &[RunTrace]) -> Result<()> {
    let m = traces.first().map_or(0, |t| t.num_receivers());
    let mut header = String::from("run,t,clique,received_mask");
    for i in 1..=m {
        header.push_str(&format!(",U_{i}"));
    }
    writeln!(w, "{header}")?;
    for trace in traces {
        for slot in &trace.slots {
            let mask: String = slot.received.iter().map(|&r| if r { '1' } else { '0' }).collect();
            write!(w, "{},{},\"{}\",{}", trace.run_index, slot.t, slot.clique, mask)?;
            for u in &slot.undelivered {
                write!(w, ",{u}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
