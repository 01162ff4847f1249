//! Exact stochastic shortest path (SSP) formulation of in-order IDNC scheduling.
//!
//! States are feedback matrices reachable from an initial matrix by clearing
//! bits. Actions are the maximal cliques of each state's IDNC graph. The cost
//! of an action is the expected total undelivered count after the slot, so the
//! value of a state is the expected sum over slots of `Σ_i Û_{i,t}` until
//! completion.
//!
//! Reachable states are indexed densely: bit `p` of a state index says whether
//! the `p`-th missing entry of the initial matrix (row-major order) is still
//! missing. Decoding only clears bits, so every successor index is at most
//! its predecessor's, and the absorbing state has index 0.

mod policy;
mod solve;

pub use policy::{export_policy, PolicyTable};
pub use solve::{policy_iteration, value_iteration, PolicyAndValue, EVALUATION_TOLERANCE};

use rayon::prelude::*;

use crate::error::{IdncError, Result};
use crate::graph::{build_graph, partition_targets, Clique, Vertex};
use crate::model::{validate_erasures, FeedbackMatrix};

/// Default limit on the number of enumerated states.
pub const DEFAULT_STATE_CAP: u64 = 1 << 20;

/// One SSP state with its cached wants and undelivered vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SspState {
    pub matrix: FeedbackMatrix,
    pub wants: Vec<usize>,
    pub undelivered: Vec<usize>,
    pub id: u64,
}

impl SspState {
    pub fn new(matrix: FeedbackMatrix) -> Result<Self> {
        let id = matrix.state_id()?;
        Ok(SspState { wants: matrix.wants_vector(), undelivered: matrix.undelivered_vector(), id, matrix })
    }

    pub fn is_absorbing(&self) -> bool {
        self.undelivered.iter().all(|&u| u == 0)
    }
}

/// Number of states reachable from `f0`, or an error if it exceeds `cap`.
pub fn reachable_state_count(f0: &FeedbackMatrix, cap: u64) -> Result<u64> {
    let k = f0.count_missing();
    let count = 1u128 << k.min(127);
    if k >= 64 || count > u128::from(cap) {
        return Err(IdncError::StateCapExceeded { count, cap });
    }
    Ok(count as u64)
}

/// Missing entries of `f0` as 0-based `(receiver, packet)` pairs, row-major.
fn missing_positions(f0: &FeedbackMatrix) -> Vec<(usize, usize)> {
    (0..f0.num_receivers())
        .flat_map(|i| f0.missing_iter(i).map(move |j| (i, j - 1)))
        .collect()
}

fn expand(m: usize, n: usize, positions: &[(usize, usize)], index: u64) -> FeedbackMatrix {
    let mut f = FeedbackMatrix::all_received(m, n);
    for (p, &(i, j)) in positions.iter().enumerate() {
        if index >> p & 1 == 1 {
            f.set_bit(i, j);
        }
    }
    f
}

/// All states obtainable from `f0` by clearing bits, in dense-index order
/// (the absorbing state first, `f0` last).
pub fn enumerate_reachable_states(f0: &FeedbackMatrix, cap: u64) -> Result<Vec<SspState>> {
    f0.state_id()?;
    let count = reachable_state_count(f0, cap)?;
    let positions = missing_positions(f0);
    (0..count)
        .map(|idx| SspState::new(expand(f0.num_receivers(), f0.num_packets(), &positions, idx)))
        .collect()
}

/// Successor distribution of taking clique `a` in state `s`.
///
/// Loss patterns are enumerated with the first targeted receiver as the most
/// significant bit (all received first, all lost last); patterns leading to
/// the same successor are merged.
pub fn transition_distribution(s: &SspState, a: &Clique, eps: &[f64]) -> Result<Vec<(SspState, f64)>> {
    check_eps(&s.matrix, eps)?;
    let targets = a.target_pairs();
    let t = targets.len();
    let mut out: Vec<(SspState, f64)> = Vec::with_capacity(1 << t);
    for lost in 0u32..(1 << t) {
        let mut received = vec![false; s.matrix.num_receivers()];
        let mut prob = 1.0;
        for (k, &(i, _)) in targets.iter().enumerate() {
            let e = eps[i - 1];
            if lost >> (t - 1 - k) & 1 == 1 {
                prob *= e;
            } else {
                received[i - 1] = true;
                prob *= 1.0 - e;
            }
        }
        let next = SspState::new(s.matrix.apply_reception(&targets, &received)?)?;
        match out.iter_mut().find(|(st, _)| st.id == next.id) {
            Some((_, p)) => *p += prob,
            None => out.push((next, prob)),
        }
    }
    Ok(out)
}

/// Expected total undelivered count after taking `a` in `s`:
/// `Σ_{i∈T_ρ} (U_i - L_i (1 - ε_i)) + Σ_{i∈M_w \ T_ρ} U_i`.
pub fn expected_cost(s: &SspState, a: &Clique, eps: &[f64]) -> Result<f64> {
    check_eps(&s.matrix, eps)?;
    Ok(cost_of(&s.matrix, a, eps))
}

fn cost_of(f: &FeedbackMatrix, a: &Clique, eps: &[f64]) -> f64 {
    let (next, _) = partition_targets(f, a);
    (0..f.num_receivers())
        .filter(|&i| f.wants_len(i) > 0)
        .map(|i| {
            let u = f.undelivered_len(i) as f64;
            if next.contains(&(i + 1)) {
                u - f.potential_len(i) as f64 * (1.0 - eps[i])
            } else {
                u
            }
        })
        .sum()
}

fn check_eps(f: &FeedbackMatrix, eps: &[f64]) -> Result<()> {
    if eps.len() != f.num_receivers() {
        return Err(IdncError::InvalidConfig(format!(
            "{} erasure probabilities for {} receivers",
            eps.len(),
            f.num_receivers()
        )));
    }
    validate_erasures(eps)
}

/// Fully enumerated SSP: states, per-state actions, costs and a sparse kernel.
#[derive(Debug, Clone)]
pub struct SspModel {
    initial: FeedbackMatrix,
    eps: Vec<f64>,
    positions: Vec<(usize, usize)>,
    /// Actions of state `s` are `action_start[s]..action_start[s + 1]`.
    action_start: Vec<usize>,
    /// Clique of each action as a mask over dense bits.
    action_mask: Vec<u64>,
    cost: Vec<f64>,
    /// Outcomes of action `a` are `outcome_start[a]..outcome_start[a + 1]`.
    outcome_start: Vec<usize>,
    successor: Vec<u32>,
    probability: Vec<f64>,
}

struct StateRows {
    masks: Vec<u64>,
    costs: Vec<f64>,
    outcome_counts: Vec<usize>,
    successors: Vec<u32>,
    probabilities: Vec<f64>,
}

impl SspModel {
    /// Enumerates every reachable state of `f0` and builds its actions and kernel.
    pub fn build(f0: &FeedbackMatrix, eps: &[f64], cap: u64) -> Result<Self> {
        check_eps(f0, eps)?;
        f0.state_id()?;
        let count = reachable_state_count(f0, cap)?;
        let positions = missing_positions(f0);
        let (m, n) = (f0.num_receivers(), f0.num_packets());
        let mut dense_bit = vec![usize::MAX; m * n];
        for (p, &(i, j)) in positions.iter().enumerate() {
            dense_bit[i * n + j] = p;
        }

        let rows: Vec<StateRows> = (0..count)
            .into_par_iter()
            .map(|idx| {
                let f = expand(m, n, &positions, idx);
                let mut rows = StateRows {
                    masks: Vec::new(),
                    costs: Vec::new(),
                    outcome_counts: Vec::new(),
                    successors: Vec::new(),
                    probabilities: Vec::new(),
                };
                if f.is_complete() {
                    return rows;
                }
                for clique in build_graph(&f).maximal_cliques() {
                    let bits: Vec<u64> = clique
                        .vertices()
                        .iter()
                        .map(|v| 1u64 << dense_bit[(v.receiver - 1) * n + v.packet - 1])
                        .collect();
                    rows.masks.push(bits.iter().fold(0, |acc, b| acc | b));
                    rows.costs.push(cost_of(&f, &clique, eps));

                    let t = bits.len();
                    let first = rows.successors.len();
                    for lost in 0u32..(1 << t) {
                        let mut next = idx;
                        let mut prob = 1.0;
                        for (k, v) in clique.vertices().iter().enumerate() {
                            let e = eps[v.receiver - 1];
                            if lost >> (t - 1 - k) & 1 == 1 {
                                prob *= e;
                            } else {
                                next &= !bits[k];
                                prob *= 1.0 - e;
                            }
                        }
                        let next = next as u32;
                        match rows.successors[first..].iter().position(|&s| s == next) {
                            Some(pos) => rows.probabilities[first + pos] += prob,
                            None => {
                                rows.successors.push(next);
                                rows.probabilities.push(prob);
                            }
                        }
                    }
                    rows.outcome_counts.push(rows.successors.len() - first);
                }
                rows
            })
            .collect();

        let mut model = SspModel {
            initial: f0.clone(),
            eps: eps.to_vec(),
            positions,
            action_start: Vec::with_capacity(count as usize + 1),
            action_mask: Vec::new(),
            cost: Vec::new(),
            outcome_start: vec![0],
            successor: Vec::new(),
            probability: Vec::new(),
        };
        model.action_start.push(0);
        for r in rows {
            model.action_mask.extend(r.masks);
            model.cost.extend(r.costs);
            for c in r.outcome_counts {
                let last = *model.outcome_start.last().unwrap();
                model.outcome_start.push(last + c);
            }
            model.successor.extend(r.successors);
            model.probability.extend(r.probabilities);
            model.action_start.push(model.action_mask.len());
        }
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.action_start.len() - 1
    }

    pub fn num_actions(&self) -> usize {
        self.action_mask.len()
    }

    pub fn erasure_probs(&self) -> &[f64] {
        &self.eps
    }

    pub fn initial_matrix(&self) -> &FeedbackMatrix {
        &self.initial
    }

    /// Dense index of the initial state.
    pub fn initial_index(&self) -> usize {
        self.num_states() - 1
    }

    /// Dense index of the absorbing state.
    pub fn absorbing_index(&self) -> usize {
        0
    }

    pub fn matrix(&self, state: usize) -> FeedbackMatrix {
        expand(self.initial.num_receivers(), self.initial.num_packets(), &self.positions, state as u64)
    }

    pub fn state(&self, state: usize) -> SspState {
        SspState::new(self.matrix(state)).expect("model matrices fit a state id")
    }

    pub fn state_id(&self, state: usize) -> u64 {
        self.matrix(state).state_id().expect("model matrices fit a state id")
    }

    /// Dense index of `f`, if it is reachable from the initial matrix.
    pub fn index_of(&self, f: &FeedbackMatrix) -> Option<usize> {
        if f.num_receivers() != self.initial.num_receivers() || f.num_packets() != self.initial.num_packets() {
            return None;
        }
        if f.count_missing() > 0 {
            for i in 0..f.num_receivers() {
                for j in f.missing_iter(i) {
                    if !self.initial.bit(i, j - 1) {
                        return None;
                    }
                }
            }
        }
        let mut idx = 0usize;
        for (p, &(i, j)) in self.positions.iter().enumerate() {
            if f.bit(i, j) {
                idx |= 1 << p;
            }
        }
        Some(idx)
    }

    pub(crate) fn action_range(&self, state: usize) -> std::ops::Range<usize> {
        self.action_start[state]..self.action_start[state + 1]
    }

    pub fn num_state_actions(&self, state: usize) -> usize {
        self.action_range(state).len()
    }

    pub(crate) fn action_cost(&self, action: usize) -> f64 {
        self.cost[action]
    }

    pub(crate) fn outcomes(&self, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.outcome_start[action]..self.outcome_start[action + 1];
        self.successor[r.clone()].iter().zip(&self.probability[r]).map(|(&s, &p)| (s as usize, p))
    }

    /// Clique of the `k`-th action of `state`, in canonical order.
    pub fn action(&self, state: usize, k: usize) -> Clique {
        let global = self.action_range(state).start + k;
        self.mask_to_clique(self.action_mask[global])
    }

    /// All actions of `state`, in canonical order.
    pub fn actions(&self, state: usize) -> Vec<Clique> {
        self.action_range(state).map(|a| self.mask_to_clique(self.action_mask[a])).collect()
    }

    /// Expected immediate cost of the `k`-th action of `state`.
    pub fn cost(&self, state: usize, k: usize) -> f64 {
        self.cost[self.action_range(state).start + k]
    }

    /// `(successor index, probability)` pairs of the `k`-th action of `state`.
    pub fn transitions(&self, state: usize, k: usize) -> Vec<(usize, f64)> {
        self.outcomes(self.action_range(state).start + k).collect()
    }

    fn mask_to_clique(&self, mask: u64) -> Clique {
        Clique::new(
            self.positions
                .iter()
                .enumerate()
                .filter(|(p, _)| mask >> p & 1 == 1)
                .map(|(_, &(i, j))| Vertex::new(i + 1, j + 1))
                .collect(),
        )
    }
}
