use std::collections::HashMap;

use idnc_core::ssp::DEFAULT_STATE_CAP;
use idnc_core::{enumerate_reachable_states, policy_iteration, value_iteration, FeedbackMatrix, SspModel};

type Rows = Vec<Vec<u8>>;

fn linked(rows: &Rows, a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 != b.0 && (a.1 == b.1 || (rows[b.0][a.1] == 0 && rows[a.0][b.1] == 0))
}

fn maximal_cliques(rows: &Rows) -> Vec<Vec<(usize, usize)>> {
    let vs: Vec<(usize, usize)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, &x)| x == 1).map(move |(j, _)| (i, j)))
        .collect();
    let is_clique = |c: &[(usize, usize)]| c.iter().enumerate().all(|(x, &a)| c[x + 1..].iter().all(|&b| linked(rows, a, b)));
    (1u32..1 << vs.len())
        .map(|mask| (0..vs.len()).filter(|b| mask >> b & 1 == 1).map(|b| vs[b]).collect::<Vec<_>>())
        .filter(|c| is_clique(c))
        .filter(|c| !vs.iter().any(|v| !c.contains(v) && c.iter().all(|&u| linked(rows, u, *v))))
        .collect()
}

fn undelivered(rows: &Rows) -> usize {
    rows.iter().map(|r| r.iter().position(|&x| x == 1).map_or(0, |p| r.len() - p)).sum()
}

fn outcomes(rows: &Rows, clique: &[(usize, usize)], eps: &[f64]) -> Vec<(Rows, f64)> {
    (0u32..1 << clique.len())
        .map(|lost| {
            let mut next = rows.clone();
            let mut p = 1.0;
            for (b, &(i, j)) in clique.iter().enumerate() {
                if lost >> b & 1 == 1 {
                    p *= eps[i];
                } else {
                    p *= 1.0 - eps[i];
                    next[i][j] = 0;
                }
            }
            (next, p)
        })
        .collect()
}

/// Finite-horizon expectimin: minimum expected `Σ_t Σ_i U_i` over `h` slots.
fn expectimin(rows: &Rows, eps: &[f64], h: usize, memo: &mut HashMap<(Rows, usize), f64>) -> f64 {
    if h == 0 || rows.iter().flatten().all(|&x| x == 0) {
        return 0.0;
    }
    if let Some(&v) = memo.get(&(rows.clone(), h)) {
        return v;
    }
    let best = maximal_cliques(rows)
        .iter()
        .map(|c| {
            outcomes(rows, c, eps)
                .into_iter()
                .map(|(next, p)| p * (undelivered(&next) as f64 + expectimin(&next, eps, h - 1, memo)))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    memo.insert((rows.clone(), h), best);
    best
}

fn rows_of(f: &FeedbackMatrix) -> Rows {
    (1..=f.num_receivers())
        .map(|i| (1..=f.num_packets()).map(|j| u8::from(f.is_missing(i, j))).collect())
        .collect()
}

fn model(m: usize, n: usize, eps: &[f64]) -> SspModel {
    SspModel::build(&FeedbackMatrix::all_missing(m, n), eps, DEFAULT_STATE_CAP).unwrap()
}

#[test]
fn expectimin_matches_on_2x2() {
    for eps in [[0.2, 0.3], [0.0, 0.0], [0.5, 0.1], [0.4, 0.4]] {
        let md = model(2, 2, &eps);
        let pv = policy_iteration(&md).unwrap();
        let mut memo = HashMap::new();
        for s in 0..md.num_states() {
            let oracle = expectimin(&rows_of(&md.matrix(s)), &eps, 120, &mut memo);
            assert!((pv.value[s] - oracle).abs() < 1e-6, "eps {eps:?} state {s}: {} vs {oracle}", pv.value[s]);
        }
    }
}

#[test]
fn actions_costs_and_kernels_match_direct_reading() {
    let eps = [0.2, 0.35, 0.5];
    for (m, n) in [(2, 2), (2, 3), (3, 2)] {
        let md = model(m, n, &eps[..m]);
        for s in 0..md.num_states() {
            let rows = rows_of(&md.matrix(s));
            let mut expected = maximal_cliques(&rows);
            for c in &mut expected {
                c.sort();
            }
            expected.sort();
            let mut actions: Vec<Vec<(usize, usize)>> = md
                .actions(s)
                .iter()
                .map(|c| c.vertices().iter().map(|v| (v.receiver - 1, v.packet - 1)).collect())
                .collect();
            actions.sort();
            assert_eq!(actions, expected);
            for k in 0..md.num_state_actions(s) {
                let c: Vec<(usize, usize)> =
                    md.action(s, k).vertices().iter().map(|v| (v.receiver - 1, v.packet - 1)).collect();
                let direct = outcomes(&rows, &c, &eps[..m]);
                let cost: f64 = direct.iter().map(|(r, p)| p * undelivered(r) as f64).sum();
                assert!((md.cost(s, k) - cost).abs() < 1e-12);
                let kernel = md.transitions(s, k);
                let total: f64 = kernel.iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-12);
                for (next, p) in kernel {
                    let want: f64 = direct.iter().filter(|(r, _)| *r == rows_of(&md.matrix(next))).map(|(_, q)| q).sum();
                    assert!((p - want).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn pi_and_vi_agree_up_to_3x3() {
    let eps = [0.2, 0.3, 0.4];
    for m in 1..=3 {
        for n in 1..=3 {
            let md = model(m, n, &eps[..m]);
            let pi = policy_iteration(&md).unwrap();
            let vi = value_iteration(&md, 1e-11).unwrap();
            let (a, b) = (pi.initial_value(&md), vi.initial_value(&md));
            assert!((a - b).abs() < 1e-8, "{m}x{n}: {a} vs {b}");
            assert!(pi.residual <= 1e-10);
        }
    }
}

#[test]
fn values_are_monotone_under_bit_clearing() {
    let eps = [0.25, 0.15, 0.4];
    for (m, n) in [(2, 2), (2, 3), (3, 3)] {
        let md = model(m, n, &eps[..m]);
        let pv = policy_iteration(&md).unwrap();
        let states = enumerate_reachable_states(md.initial_matrix(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(states.len(), md.num_states());
        let rows: Vec<Rows> = (0..md.num_states()).map(|s| rows_of(&md.matrix(s))).collect();
        let below = |a: &Rows, b: &Rows| a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x <= y);
        for s in 0..md.num_states() {
            if s != md.absorbing_index() {
                assert!(pv.value[s] > 0.0 || eps.iter().all(|&e| e == 0.0));
            }
            for t in 0..md.num_states() {
                if below(&rows[t], &rows[s]) {
                    assert!(pv.value[t] <= pv.value[s] + 1e-9, "{m}x{n}: V({t}) > V({s})");
                }
            }
        }
        assert_eq!(pv.value[md.absorbing_index()], 0.0);
    }
}

#[test]
fn geometric_closed_form() {
    let md = model(1, 1, &[0.5]);
    assert!((policy_iteration(&md).unwrap().initial_value(&md) - 1.0).abs() < 1e-9);
    for e in [0.1, 0.3, 0.7] {
        let md = model(1, 1, &[e]);
        let v = policy_iteration(&md).unwrap().initial_value(&md);
        assert!((v - e / (1.0 - e)).abs() < 1e-9);
    }
}
