use idnc_core::heuristics::{select, Phase};
use idnc_core::{build_graph, compute_priority_context, mwvs_select, FeedbackMatrix, SchedulerKind, Vertex};
use proptest::prelude::*;

fn instance(max_m: usize, max_n: usize) -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<f64>)> {
    (1..=max_m, 1..=max_n)
        .prop_flat_map(|(m, n)| {
            (prop::collection::vec(prop::collection::vec(0u8..=1, n), m), prop::collection::vec(0.0..0.95f64, m))
        })
        .prop_filter("someone must want a packet", |(rows, _)| rows.iter().flatten().any(|&x| x == 1))
}

fn missing(rows: &[Vec<u8>]) -> Vec<Vertex> {
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x == 1 {
                out.push(Vertex::new(i + 1, j + 1));
            }
        }
    }
    out
}

fn linked(rows: &[Vec<u8>], a: Vertex, b: Vertex) -> bool {
    a.receiver != b.receiver
        && (a.packet == b.packet || (rows[b.receiver - 1][a.packet - 1] == 0 && rows[a.receiver - 1][b.packet - 1] == 0))
}

/// Clique, maximal, and every target left with exactly one unknown packet.
fn check_selection(rows: &[Vec<u8>], chosen: &[Vertex]) -> Result<(), TestCaseError> {
    prop_assert!(!chosen.is_empty());
    let vs = missing(rows);
    for (x, &a) in chosen.iter().enumerate() {
        prop_assert!(vs.contains(&a));
        for &b in &chosen[x + 1..] {
            prop_assert!(linked(rows, a, b), "{} and {} not linked", a, b);
        }
    }
    for &u in &vs {
        if !chosen.contains(&u) {
            prop_assert!(!chosen.iter().all(|&c| linked(rows, c, u)), "could add {}", u);
        }
    }
    let packets: Vec<usize> = chosen.iter().map(|v| v.packet).collect();
    for t in chosen {
        let unknown: Vec<usize> = packets.iter().copied().filter(|&p| rows[t.receiver - 1][p - 1] == 1).collect();
        prop_assert!(unknown.iter().all(|&p| p == t.packet) && !unknown.is_empty());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mwvs_returns_decodable_maximal_clique((rows, eps) in instance(4, 4), alpha in 0u32..4) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let c = mwvs_select(&f, &eps, alpha).unwrap();
        check_selection(&rows, c.vertices())?;
        prop_assert_eq!(&mwvs_select(&f, &eps, alpha).unwrap(), &c);
        let g = build_graph(&f);
        prop_assert!(g.is_maximal_clique(c.vertices()));
    }

    #[test]
    fn baselines_return_decodable_maximal_cliques((rows, eps) in instance(4, 5)) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        for kind in SchedulerKind::ALL {
            if kind == SchedulerKind::SspPolicyReplay {
                continue;
            }
            let c = select(kind, &f, &eps, 2, Phase::Coding).unwrap();
            check_selection(&rows, c.vertices())?;
        }
    }

    #[test]
    fn priority_groups((rows, eps) in instance(5, 6), alpha in 0u32..4) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let ctx = compute_priority_context(&f, &eps, alpha).unwrap();
        let wants: Vec<usize> = rows.iter().map(|r| r.iter().filter(|&&x| x == 1).count()).collect();
        prop_assert_eq!(ctx.groups(), *wants.iter().max().unwrap());
        let vs = missing(&rows);
        for &v in &vs {
            let row = &rows[v.receiver - 1];
            let d = row[..v.packet].iter().filter(|&&x| x == 1).count();
            prop_assert_eq!(ctx.group_order(v), Some(d));
            let gp = ctx.group_priority(v).unwrap();
            prop_assert_eq!(gp, (ctx.groups() - d + 1) as f64);
            let n = row.len();
            let first = row.iter().position(|&x| x == 1).unwrap() + 1;
            let rate = (n - first + 1) as f64 / wants[v.receiver - 1] as f64;
            let expected = (1.0 - eps[v.receiver - 1]) * rate.powi(alpha as i32) * gp;
            let got = ctx.priority(v).unwrap();
            prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
        }
        // Group 1 outranks group 2 on the channel-free priority.
        for &a in &vs {
            for &b in &vs {
                if ctx.group_order(a) == Some(1) && ctx.group_order(b) == Some(2) {
                    prop_assert!(ctx.group_priority(a).unwrap() > ctx.group_priority(b).unwrap());
                }
                if a.receiver == b.receiver && ctx.group_order(a) < ctx.group_order(b) {
                    prop_assert!(ctx.priority(a).unwrap() >= ctx.priority(b).unwrap());
                }
            }
            if ctx.group_order(a) == Some(1) {
                prop_assert_eq!(ctx.group_priority(a).unwrap(), ctx.groups() as f64);
            }
        }
        // Completed receivers contribute no vertices.
        for (i, w) in wants.iter().enumerate() {
            if *w == 0 {
                prop_assert_eq!(ctx.delivery_rate(i + 1), None);
            }
        }
    }

    #[test]
    fn raising_erasure_never_raises_priority((rows, eps) in instance(4, 5), who in any::<prop::sample::Index>(), bump in 0.0..0.05f64) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let i = who.index(rows.len());
        let mut worse = eps.clone();
        worse[i] = (worse[i] + bump).min(0.99);
        let a = compute_priority_context(&f, &eps, 2).unwrap();
        let b = compute_priority_context(&f, &worse, 2).unwrap();
        for v in missing(&rows).into_iter().filter(|v| v.receiver == i + 1) {
            prop_assert!(b.priority(v).unwrap() <= a.priority(v).unwrap());
        }
    }

    #[test]
    fn zero_alpha_drops_delivery_rate((rows, eps) in instance(4, 5)) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let ctx = compute_priority_context(&f, &eps, 0).unwrap();
        for v in missing(&rows) {
            let expected = (1.0 - eps[v.receiver - 1]) * ctx.group_priority(v).unwrap();
            prop_assert_eq!(ctx.priority(v).unwrap(), expected);
        }
    }
}

#[test]
fn nothing_to_schedule_is_an_error() {
    let f = FeedbackMatrix::all_received(2, 3);
    assert!(mwvs_select(&f, &[0.1, 0.1], 2).is_err());
    assert!(compute_priority_context(&f, &[0.1, 0.1], 2).is_err());
}

#[test]
fn initial_phase_sends_the_slot_packet() {
    let f = FeedbackMatrix::from_rows(&[[1, 1], [0, 1], [1, 0]]).unwrap();
    for kind in SchedulerKind::ALL.into_iter().filter(|k| *k != SchedulerKind::SspPolicyReplay) {
        let c = select(kind, &f, &[0.2; 3], 2, Phase::Initial { slot: 2 }).unwrap();
        assert_eq!(c.vertices(), &[Vertex::new(1, 2), Vertex::new(2, 2)]);
    }
}
