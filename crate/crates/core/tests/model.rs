use idnc_core::FeedbackMatrix;
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1..=5usize, 1..=8usize).prop_flat_map(|(m, n)| prop::collection::vec(prop::collection::vec(0u8..=1, n), m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn sets_follow_row_contents(rows in matrix()) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let n = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            let view = f.receiver_view(i + 1).unwrap();
            let wants: Vec<usize> = (1..=n).filter(|&j| row[j - 1] == 1).collect();
            let has: Vec<usize> = (1..=n).filter(|&j| row[j - 1] == 0).collect();
            prop_assert_eq!(&view.wants, &wants);
            prop_assert_eq!(&view.has, &has);
            match wants.first() {
                None => {
                    prop_assert!(view.undelivered.is_empty());
                    prop_assert!(view.potential.is_empty());
                }
                Some(&first) => {
                    let stop = wants.get(1).copied().unwrap_or(n + 1);
                    prop_assert_eq!(view.undelivered.clone(), (first..=n).collect::<Vec<_>>());
                    prop_assert_eq!(view.potential.clone(), (first..stop).collect::<Vec<_>>());
                }
            }
            prop_assert!(view.potential_len() <= view.undelivered_len());
            prop_assert!(view.wants_len() <= view.undelivered_len());
            prop_assert_eq!(view.has_len() + view.wants_len(), n);
        }
    }

    #[test]
    fn reception_only_clears_received_targets(
        rows in matrix(),
        picks in prop::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 0..5),
    ) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let m = rows.len();
        // At most one target per receiver, each on a missing entry.
        let mut targets = Vec::new();
        let mut received = vec![false; m];
        for (i, row) in rows.iter().enumerate() {
            let missing: Vec<usize> = (1..=row.len()).filter(|&j| row[j - 1] == 1).collect();
            if let Some((idx, got)) = picks.get(i) {
                if !missing.is_empty() {
                    targets.push((i + 1, missing[idx.index(missing.len())]));
                    received[i] = *got;
                }
            }
        }
        let g = f.apply_reception(&targets, &received).unwrap();
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                let cleared = targets.contains(&(i + 1, j + 1)) && received[i];
                prop_assert_eq!(g.is_missing(i + 1, j + 1), x == 1 && !cleared);
            }
            let before = f.receiver_view(i + 1).unwrap();
            let after = g.receiver_view(i + 1).unwrap();
            prop_assert!(after.undelivered_len() <= before.undelivered_len());
        }
        prop_assert_eq!(f.count_missing() - g.count_missing(), targets.iter().filter(|t| received[t.0 - 1]).count());
    }

    #[test]
    fn text_and_state_id_round_trip(rows in matrix()) {
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let parsed: FeedbackMatrix = f.to_string().parse().unwrap();
        prop_assert_eq!(&parsed, &f);
        let id = f.state_id().unwrap();
        prop_assert_eq!(FeedbackMatrix::from_state_id(rows.len(), rows[0].len(), id).unwrap(), f);
    }
}

#[test]
fn receiving_a_held_packet_is_rejected() {
    let f = FeedbackMatrix::from_rows(&[[1, 0]]).unwrap();
    assert!(f.apply_reception(&[(1, 2)], &[true]).is_err());
}

#[test]
fn in_order_release_example() {
    // R_1 holds P_2, P_4 and misses P_1, P_3: decoding P_1 releases P_1, P_2.
    let f = FeedbackMatrix::from_rows(&[[1, 0, 1, 0]]).unwrap();
    let view = f.receiver_view(1).unwrap();
    assert_eq!(view.potential, vec![1, 2]);
    assert_eq!(view.undelivered, vec![1, 2, 3, 4]);
    let g = f.apply_reception(&[(1, 1)], &[true]).unwrap();
    assert_eq!(g.receiver_view(1).unwrap().undelivered, vec![3, 4]);
}
