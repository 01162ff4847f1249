//! Vertex priorities, the maximum weight vertex search (MWVS) and baseline schedulers.
//!
//! Missing packets are ranked per receiver: the next needed packet has group
//! order 1, the following missing packet order 2, and so on. With `D` the
//! largest wants-set size, the channel-aware priority of `v(i,j)` is
//!
//! ```text
//! ψ̃_ij = (1 - ε_i) · (U_i / W_i)^α · (D - d_ij + 1)
//! ```
//!
//! and the MWVS weight of a vertex is `ψ̃_ij · Θ_ij`, where the weighted degree
//! `Θ_ij` sums `ψ̃` over the neighbours of `v(i,j)` in the current candidate
//! subgraph.

use std::fmt;
use std::str::FromStr;

use crate::error::{IdncError, Result};
use crate::graph::{build_graph, Clique, IdncGraph, Vertex};
use crate::model::{FeedbackMatrix, SessionConfig, TransmissionSetting};

/// Per-slot priority values derived from one feedback matrix.
#[derive(Debug, Clone)]
pub struct PriorityContext {
    num_packets: usize,
    alpha: u32,
    groups: usize,
    channel: Vec<f64>,
    delivery_rate: Vec<Option<f64>>,
    /// Group order per grid cell `(i - 1) * N + (j - 1)`; 0 where no vertex exists.
    group_order: Vec<usize>,
}

impl PriorityContext {
    pub fn new(f: &FeedbackMatrix, eps: &[f64], alpha: u32) -> Result<Self> {
        let m = f.num_receivers();
        let n = f.num_packets();
        check_eps(f, eps)?;
        let wants = f.wants_vector();
        let groups = wants.iter().copied().max().unwrap_or(0);
        if groups == 0 {
            return Err(IdncError::NothingToSchedule);
        }
        let mut group_order = vec![0; m * n];
        let mut delivery_rate = vec![None; m];
        for i in 0..m {
            for (rank, j) in f.missing_iter(i).enumerate() {
                group_order[i * n + j - 1] = rank + 1;
            }
            if wants[i] > 0 {
                delivery_rate[i] = Some(f.undelivered_len(i) as f64 / wants[i] as f64);
            }
        }
        Ok(PriorityContext {
            num_packets: n,
            alpha,
            groups,
            channel: eps.iter().map(|e| 1.0 - e).collect(),
            delivery_rate,
            group_order,
        })
    }

    /// Number of groups `D`.
    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    fn cell(&self, v: Vertex) -> Option<usize> {
        if v.receiver == 0 || v.packet == 0 || v.packet > self.num_packets {
            return None;
        }
        let c = (v.receiver - 1) * self.num_packets + v.packet - 1;
        (c < self.group_order.len() && self.group_order[c] > 0).then_some(c)
    }

    /// Group order `d_ij` of a vertex.
    pub fn group_order(&self, v: Vertex) -> Option<usize> {
        self.cell(v).map(|c| self.group_order[c])
    }

    /// `D - d_ij + 1`.
    pub fn group_priority(&self, v: Vertex) -> Option<f64> {
        self.group_order(v).map(|d| (self.groups - d + 1) as f64)
    }

    /// `U_i / W_i` for a wanting receiver.
    pub fn delivery_rate(&self, receiver: usize) -> Option<f64> {
        self.delivery_rate.get(receiver.checked_sub(1)?).copied().flatten()
    }

    /// Channel-unaware priority `ψ_ij = (U_i / W_i)^α (D - d_ij + 1)`.
    pub fn channel_unaware_priority(&self, v: Vertex) -> Option<f64> {
        let rate = self.delivery_rate(v.receiver)?;
        Some(rate.powi(self.alpha as i32) * self.group_priority(v)?)
    }

    /// Channel-aware priority `ψ̃_ij`.
    pub fn priority(&self, v: Vertex) -> Option<f64> {
        Some(self.channel[v.receiver - 1] * self.channel_unaware_priority(v)?)
    }
}

fn check_eps(f: &FeedbackMatrix, eps: &[f64]) -> Result<()> {
    if eps.len() != f.num_receivers() {
        return Err(IdncError::InvalidConfig(format!(
            "{} erasure probabilities for {} receivers",
            eps.len(),
            f.num_receivers()
        )));
    }
    crate::model::validate_erasures(eps)
}

/// Builds the priority context of `f`.
pub fn compute_priority_context(f: &FeedbackMatrix, eps: &[f64], alpha: u32) -> Result<PriorityContext> {
    PriorityContext::new(f, eps, alpha)
}

/// MWVS weight `ψ̃_v · Σ_{u ~ v in g} ψ̃_u`. Adjacency comes from `g`, which
/// may be a candidate subgraph; priorities come from the full-matrix context.
pub fn vertex_weight(v: Vertex, g: &IdncGraph, ctx: &PriorityContext) -> f64 {
    let own = ctx.priority(v).unwrap_or(0.0);
    let degree: f64 = g.neighbors(v).into_iter().filter_map(|u| ctx.priority(u)).sum();
    own * degree
}

/// Greedy maximal clique search driven by a per-vertex priority.
///
/// Each step picks the candidate maximising `p(v) · Σ_{u ~ v} p(u)` over the
/// current candidate subgraph, then shrinks the candidates to the common
/// neighbourhood of the selection. Ties go to the higher `p(v)`, then the
/// lower receiver, then the lower packet. Isolated candidates (weight 0) are
/// still taken, so the result is always maximal.
pub(crate) fn greedy_clique(g: &IdncGraph, priority: impl Fn(Vertex) -> f64) -> Clique {
    let cells = g.cell_count();
    let mut cell_priority = vec![0.0; cells];
    for &v in g.vertices() {
        cell_priority[g.cell_of(v)] = priority(v);
    }

    let mut chosen = Vec::new();
    let mut owned: Option<IdncGraph> = None;
    loop {
        let current = owned.as_ref().unwrap_or(g);
        let mut best: Option<(usize, f64, f64)> = None;
        for (idx, &v) in current.vertices().iter().enumerate() {
            let own = cell_priority[current.cell_of(v)];
            let mut degree = 0.0;
            for (w, &word) in current.row(idx).iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    degree += cell_priority[w * 64 + b];
                }
            }
            let weight = own * degree;
            let better = match best {
                None => true,
                Some((_, bw, bp)) => weight > bw || (weight == bw && own > bp),
            };
            if better {
                best = Some((idx, weight, own));
            }
        }
        let Some((idx, _, _)) = best else { break };
        let v = current.vertices()[idx];
        chosen.push(v);
        let next = current.candidate_subgraph(&[v]);
        owned = Some(next);
    }
    Clique::new(chosen)
}

/// MWVS selection for the matrix `f`.
pub fn mwvs_select(f: &FeedbackMatrix, eps: &[f64], alpha: u32) -> Result<Clique> {
    let ctx = PriorityContext::new(f, eps, alpha)?;
    let g = build_graph(f);
    Ok(greedy_clique(&g, |v| ctx.priority(v).unwrap_or(0.0)))
}

/// Scheduling algorithms available to the simulator.
///
/// The baselines are greedy analogues of published schedulers, not
/// reproductions. Each runs the same greedy weighted search as MWVS with its
/// own vertex priority `p(v)`:
///
/// | kind | `p(v(i,j))` | setting |
/// |---|---|---|
/// | `inorder-greedy-single` | `D - d_ij + 1` | single-phase |
/// | `inorder-greedy-two` | `D - d_ij + 1` | two-phase |
/// | `ct-greedy` | `(1 - ε_i) W_i` | two-phase |
/// | `max-clique-greedy` | `1` | two-phase |
/// | `mixed-greedy` | `(1 - ε_i)(1 + W_i)` | two-phase |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerKind {
    Mwvs,
    SspPolicyReplay,
    InorderGreedySingle,
    InorderGreedyTwo,
    CtGreedy,
    MaxCliqueGreedy,
    MixedGreedy,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 7] = [
        SchedulerKind::Mwvs,
        SchedulerKind::SspPolicyReplay,
        SchedulerKind::InorderGreedySingle,
        SchedulerKind::InorderGreedyTwo,
        SchedulerKind::CtGreedy,
        SchedulerKind::MaxCliqueGreedy,
        SchedulerKind::MixedGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Mwvs => "mwvs",
            SchedulerKind::SspPolicyReplay => "ssp-policy-replay",
            SchedulerKind::InorderGreedySingle => "inorder-greedy-single",
            SchedulerKind::InorderGreedyTwo => "inorder-greedy-two",
            SchedulerKind::CtGreedy => "ct-greedy",
            SchedulerKind::MaxCliqueGreedy => "max-clique-greedy",
            SchedulerKind::MixedGreedy => "mixed-greedy",
        }
    }

    /// Transmission setting the algorithm is designed for.
    pub fn native_setting(self) -> TransmissionSetting {
        match self {
            SchedulerKind::Mwvs | SchedulerKind::SspPolicyReplay | SchedulerKind::InorderGreedySingle => {
                TransmissionSetting::SinglePhase
            }
            _ => TransmissionSetting::TwoPhase,
        }
    }

    /// Setting used in a session: two-phase if either the session or the
    /// algorithm asks for it.
    pub fn effective_setting(self, config: &SessionConfig) -> TransmissionSetting {
        if config.setting == TransmissionSetting::TwoPhase
            || self.native_setting() == TransmissionSetting::TwoPhase
        {
            TransmissionSetting::TwoPhase
        } else {
            TransmissionSetting::SinglePhase
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = IdncError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| IdncError::UnknownScheduler(s.to_string()))
    }
}

/// Where a slot falls in the transmission schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Uncoded slot `t` of a two-phase initial pass (sends `P_t`).
    Initial { slot: usize },
    Coding,
}

/// Uncoded transmission of `P_packet`, targeting every receiver missing it.
pub fn uncoded_transmission(f: &FeedbackMatrix, packet: usize) -> Clique {
    Clique::new(
        (1..=f.num_receivers())
            .filter(|&i| f.is_missing(i, packet))
            .map(|i| Vertex::new(i, packet))
            .collect(),
    )
}

/// Selection for any heuristic kind. The policy-replay kind needs a policy
/// table and is rejected here.
pub fn select(
    kind: SchedulerKind,
    f: &FeedbackMatrix,
    eps: &[f64],
    alpha: u32,
    phase: Phase,
) -> Result<Clique> {
    if let Phase::Initial { slot } = phase {
        check_eps(f, eps)?;
        return Ok(uncoded_transmission(f, slot));
    }
    match kind {
        SchedulerKind::Mwvs => mwvs_select(f, eps, alpha),
        SchedulerKind::SspPolicyReplay => Err(IdncError::NeedsPolicy(kind.name().into())),
        _ => {
            let ctx = PriorityContext::new(f, eps, 0)?;
            let g = build_graph(f);
            let wants = f.wants_vector();
            let clique = match kind {
                SchedulerKind::InorderGreedySingle | SchedulerKind::InorderGreedyTwo => {
                    greedy_clique(&g, |v| ctx.group_priority(v).unwrap_or(0.0))
                }
                SchedulerKind::CtGreedy => {
                    greedy_clique(&g, |v| (1.0 - eps[v.receiver - 1]) * wants[v.receiver - 1] as f64)
                }
                SchedulerKind::MaxCliqueGreedy => greedy_clique(&g, |_| 1.0),
                SchedulerKind::MixedGreedy => greedy_clique(&g, |v| {
                    (1.0 - eps[v.receiver - 1]) * (1.0 + wants[v.receiver - 1] as f64)
                }),
                SchedulerKind::Mwvs | SchedulerKind::SspPolicyReplay => unreachable!(),
            };
            Ok(clique)
        }
    }
}

/// Baseline selection; uses the default biasing exponent when `kind` is MWVS.
pub fn baseline_select(kind: SchedulerKind, f: &FeedbackMatrix, eps: &[f64], phase: Phase) -> Result<Clique> {
    select(kind, f, eps, SessionConfig::DEFAULT_ALPHA, phase)
}
