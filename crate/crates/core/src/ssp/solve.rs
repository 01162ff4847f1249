use log::debug;

use super::SspModel;
use crate::error::{IdncError, Result};

/// Residual target of policy evaluation.
pub const EVALUATION_TOLERANCE: f64 = 1e-10;

const MAX_POLICY_ITERATIONS: usize = 1_000;
const MAX_SWEEPS: usize = 100_000;
const MAX_VALUE_ITERATIONS: usize = 1_000_000;

/// A stationary policy with its value function.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAndValue {
    /// Action index (within the state's action list) per dense state; `None`
    /// for the absorbing state.
    pub policy: Vec<Option<usize>>,
    pub value: Vec<f64>,
    /// Largest Bellman residual of `value` under `policy` at exit.
    pub residual: f64,
    pub iterations: usize,
}

impl PolicyAndValue {
    pub fn initial_value(&self, model: &SspModel) -> f64 {
        self.value[model.initial_index()]
    }
}

fn q_value(model: &SspModel, action: usize, value: &[f64]) -> f64 {
    model.action_cost(action) + model.outcomes(action).map(|(s, p)| p * value[s]).sum::<f64>()
}

fn tie_tolerance(best: f64) -> f64 {
    1e-12 * best.abs().max(1.0)
}

/// Lowest-index action whose Q-value is within tie tolerance of the minimum.
fn greedy_action(model: &SspModel, state: usize, value: &[f64]) -> Option<(usize, f64)> {
    let range = model.action_range(state);
    let qs: Vec<f64> = range.clone().map(|a| q_value(model, a, value)).collect();
    let best = qs.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let tol = tie_tolerance(best);
    qs.iter().position(|&q| q <= best + tol).map(|k| (k, best))
}

/// Largest `|c + Σ P V - V|` over non-absorbing states under `policy`.
fn bellman_residual(model: &SspModel, policy: &[Option<usize>], value: &[f64]) -> f64 {
    (0..model.num_states())
        .filter_map(|s| {
            let k = policy[s]?;
            let a = model.action_range(s).start + k;
            Some((q_value(model, a, value) - value[s]).abs())
        })
        .fold(0.0, f64::max)
}

/// Solves `V = c_π + P_π V` by Gauss–Seidel sweeps in ascending state order,
/// treating each self-loop exactly.
fn evaluate(model: &SspModel, policy: &[Option<usize>], value: &mut [f64]) -> Result<f64> {
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for s in 0..model.num_states() {
            let Some(k) = policy[s] else {
                value[s] = 0.0;
                continue;
            };
            let a = model.action_range(s).start + k;
            let mut total = model.action_cost(a);
            let mut stay = 0.0;
            for (next, p) in model.outcomes(a) {
                if next == s {
                    stay += p;
                } else {
                    total += p * value[next];
                }
            }
            let updated = total / (1.0 - stay);
            change = change.max((updated - value[s]).abs());
            value[s] = updated;
        }
        if change <= EVALUATION_TOLERANCE {
            return Ok(bellman_residual(model, policy, value));
        }
    }
    Err(IdncError::NotConverged { solver: "policy evaluation", iterations: MAX_SWEEPS })
}

fn check_proper(model: &SspModel) -> Result<()> {
    if let Some((i, &e)) = model.erasure_probs().iter().enumerate().find(|(_, e)| !(0.0..1.0).contains(*e)) {
        return Err(IdncError::BadErasure { receiver: i + 1, eps: e });
    }
    Ok(())
}

/// Policy iteration from the immediate-cost greedy policy.
///
/// Each improvement step switches a state only when some action beats the
/// current one by more than a relative `1e-12`; the stable policy is then
/// re-extracted with lowest-index tie-breaking.
pub fn policy_iteration(model: &SspModel) -> Result<PolicyAndValue> {
    check_proper(model)?;
    let n = model.num_states();
    let mut policy: Vec<Option<usize>> = (0..n)
        .map(|s| {
            let range = model.action_range(s);
            let costs: Vec<f64> = range.map(|a| model.action_cost(a)).collect();
            let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
            costs.iter().position(|&c| c <= best + tie_tolerance(best))
        })
        .collect();
    let mut value = vec![0.0; n];

    for iteration in 1..=MAX_POLICY_ITERATIONS {
        let mut residual = evaluate(model, &policy, &mut value)?;
        let mut switched = 0usize;
        for s in 0..n {
            let Some(current) = policy[s] else { continue };
            let Some((candidate, best)) = greedy_action(model, s, &value) else { continue };
            let current_q = q_value(model, model.action_range(s).start + current, &value);
            if current_q > best + tie_tolerance(best) {
                policy[s] = Some(candidate);
                switched += 1;
            }
        }
        debug!("policy iteration {iteration}: {switched} states switched");
        if switched == 0 {
            let canonical: Vec<Option<usize>> =
                (0..n).map(|s| greedy_action(model, s, &value).map(|(k, _)| k)).collect();
            if canonical != policy {
                policy = canonical;
                residual = evaluate(model, &policy, &mut value)?;
            }
            return Ok(PolicyAndValue { policy, value, residual, iterations: iteration });
        }
    }
    Err(IdncError::NotConverged { solver: "policy iteration", iterations: MAX_POLICY_ITERATIONS })
}

/// Synchronous Bellman backups from `V = 0` until the sup-norm change drops
/// below `tolerance`, then a greedy policy extracted from the result.
pub fn value_iteration(model: &SspModel, tolerance: f64) -> Result<PolicyAndValue> {
    check_proper(model)?;
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(IdncError::InvalidConfig(format!("tolerance must be positive, got {tolerance}")));
    }
    let n = model.num_states();
    let mut value = vec![0.0; n];
    let mut next = vec![0.0; n];
    for iteration in 1..=MAX_VALUE_ITERATIONS {
        let mut change: f64 = 0.0;
        for s in 0..n {
            next[s] = greedy_action(model, s, &value).map_or(0.0, |(_, q)| q);
            change = change.max((next[s] - value[s]).abs());
        }
        std::mem::swap(&mut value, &mut next);
        if change < tolerance {
            let policy: Vec<Option<usize>> =
                (0..n).map(|s| greedy_action(model, s, &value).map(|(k, _)| k)).collect();
            return Ok(PolicyAndValue { policy, value, residual: change, iterations: iteration });
        }
    }
    Err(IdncError::NotConverged { solver: "value iteration", iterations: MAX_VALUE_ITERATIONS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeedbackMatrix;
    use crate::ssp::DEFAULT_STATE_CAP;

    fn model(m: usize, n: usize, eps: &[f64]) -> SspModel {
        SspModel::build(&FeedbackMatrix::all_missing(m, n), eps, DEFAULT_STATE_CAP).unwrap()
    }

    #[test]
    fn single_packet_geometric() {
        let md = model(1, 1, &[0.5]);
        let pv = policy_iteration(&md).unwrap();
        assert!((pv.initial_value(&md) - 1.0).abs() < 1e-12);
        let vi = value_iteration(&md, 1e-12).unwrap();
        assert!((vi.initial_value(&md) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_packet_erasure_free() {
        let md = model(1, 1, &[0.0]);
        assert_eq!(policy_iteration(&md).unwrap().initial_value(&md), 0.0);
    }

    #[test]
    fn absorbing_only_model() {
        let md = SspModel::build(&FeedbackMatrix::all_received(2, 2), &[0.1, 0.2], DEFAULT_STATE_CAP).unwrap();
        let vi = value_iteration(&md, 1e-9).unwrap();
        assert_eq!(vi.value, vec![0.0]);
        assert_eq!(vi.policy, vec![None]);
    }

    #[test]
    fn erasure_raises_cost() {
        let lossy = model(1, 2, &[0.5]);
        let clean = model(1, 2, &[0.0]);
        let a = value_iteration(&lossy, 1e-10).unwrap().initial_value(&lossy);
        let b = value_iteration(&clean, 1e-10).unwrap().initial_value(&clean);
        assert!(a.is_finite() && a >= b);
    }

    #[test]
    fn pi_matches_vi_2x2() {
        let md = model(2, 2, &[0.2, 0.3]);
        let pi = policy_iteration(&md).unwrap();
        let vi = value_iteration(&md, 1e-12).unwrap();
        assert!(pi.residual <= EVALUATION_TOLERANCE);
        assert!((pi.initial_value(&md) - vi.initial_value(&md)).abs() < 1e-8);
        assert_eq!(pi.value[md.absorbing_index()], 0.0);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let md = model(1, 1, &[0.5]);
        assert!(value_iteration(&md, 0.0).is_err());
    }
}
