use std::collections::BTreeMap;

use donmine_core::forest::auc;
use donmine_core::graph::DroppedEvents;
use donmine_core::stats::{average_ranks, distribution_curve, spearman_rcc, CurveMode};
use donmine_core::tasks::{label_top_quantile, list_metrics, rank_candidates, ApMode};
use donmine_core::{LabelWindow, NodeId};
use proptest::prelude::*;

fn tied(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u8..8, 2..max).prop_map(|v| v.into_iter().map(f64::from).collect())
}

fn paired(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..max).prop_flat_map(|n| {
        let col = prop::collection::vec((0u8..6).prop_map(f64::from), n);
        (col.clone(), col)
    })
}

fn monotone(x: f64) -> f64 {
    (x * 0.5).exp() + 3.0 * x
}

proptest! {
    #[test]
    fn average_ranks_sum_is_triangular(v in tied(60)) {
        let n = v.len() as f64;
        let sum: f64 = average_ranks(&v).iter().sum();
        prop_assert!((sum - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn spearman_bounded_symmetric_and_rank_invariant((x, y) in paired(50)) {
        if let Ok(r) = spearman_rcc(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
            let s = spearman_rcc(&y, &x).unwrap();
            prop_assert!((r - s).abs() < 1e-12);
            let xt: Vec<f64> = x.iter().map(|&a| monotone(a)).collect();
            prop_assert!((spearman_rcc(&xt, &y).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_complements_and_is_rank_invariant(
        rows in prop::collection::vec(((0u8..5).prop_map(f64::from), any::<bool>()), 2..80)
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = rows.into_iter().unzip();
        if let Ok(a) = auc(&scores, &labels) {
            prop_assert!((0.0..=1.0).contains(&a));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((auc(&neg, &labels).unwrap() + a - 1.0).abs() < 1e-12);
            let t: Vec<f64> = scores.iter().map(|&s| monotone(s)).collect();
            prop_assert_eq!(auc(&t, &labels).unwrap(), a);
        }
    }

    #[test]
    fn ccdf_starts_at_one_and_decreases(v in tied(80)) {
        let c = distribution_curve(&v, CurveMode::Ccdf).unwrap();
        prop_assert_eq!(c.points[0].1, 1.0);
        prop_assert!(c.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1));
        let d = distribution_curve(&v, CurveMode::Cdf).unwrap();
        prop_assert_eq!(d.points.last().unwrap().1, 1.0);
    }

    #[test]
    fn recall_nondecreasing_and_metrics_rank_invariant(
        scores in prop::collection::vec((0u8..6).prop_map(f64::from), 1..30),
        truth_mask in prop::collection::vec(any::<bool>(), 30),
    ) {
        let users: Vec<NodeId> = (0..scores.len() as u32).map(NodeId).collect();
        let truth: Vec<NodeId> = users.iter().copied().filter(|u| truth_mask[u.index()]).collect();
        prop_assume!(!truth.is_empty());
        let mut a = rank_candidates(|u| scores[u.index()], NodeId(999), &users, None);
        let mut b = rank_candidates(|u| monotone(scores[u.index()]), NodeId(999), &users, None);
        a.truth = truth.clone();
        b.truth = truth;
        let mut last = 0.0;
        for k in 1..=users.len() + 2 {
            let (ap, r) = list_metrics(&a, k, ApMode::Standard);
            prop_assert!(r >= last && (0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&ap));
            last = r;
            prop_assert_eq!(list_metrics(&b, k, ApMode::Standard), (ap, r));
        }
        prop_assert_eq!(last, 1.0);
    }

    #[test]
    fn top_quantile_labels_split_by_count(
        counts in prop::collection::vec(0usize..6, 1..60),
        q in 0.01f64..0.99,
    ) {
        let videos: Vec<NodeId> = (0..counts.len() as u32).map(NodeId).collect();
        let window = LabelWindow {
            cutoff: 0,
            horizon_days: 1,
            events: Vec::new(),
            counts: videos.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(&v, &c)| (v, c)).collect::<BTreeMap<_, _>>(),
            dropped: DroppedEvents::default(),
        };
        let l = label_top_quantile(&window, &videos, q).unwrap();
        let positives = l.labels.iter().filter(|&&x| x).count();
        prop_assert!(positives >= (q * counts.len() as f64).ceil() as usize);
        for (c, lab) in counts.iter().zip(&l.labels) {
            prop_assert_eq!(*lab, *c >= l.threshold);
        }
    }
}
