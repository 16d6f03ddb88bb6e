use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use phonosem_core::artpred::{
    bundled_hypotheses, evaluate_hypotheses, ridge_fit, targets_from_fn, RidgeOptions, Verdict,
};
use phonosem_core::behavior::{
    analyze_study, counterbalance_assign, derive_participants, exact_binomial_p, Choice, Modality,
    Pole, TrialRecord,
};
use phonosem_core::corpus::edit_distance;
use phonosem_core::effects::{
    bh_fdr, pair_cohens_d, pca, permutation_test, permutation_test_exact, permutation_test_sampled,
    spearman_brown, LetterProfile,
};
use phonosem_core::phonfeat::PhonFeat;
use phonosem_core::ratings::{Dimension, Provenance, RatingRecord, RatingStore, RawScale};
use phonosem_core::{LetterPair, PairClass};

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cohens_d_flips_sign_when_members_swap(
        pairs in prop::collection::vec((finite(0.0, 100.0), finite(0.0, 100.0)), 2..30),
        shift in finite(-20.0, 20.0),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let d = pair_cohens_d(&a, &b).unwrap();
        let flipped = pair_cohens_d(&b, &a).unwrap();
        match (d, flipped) {
            (Some(x), Some(y)) => prop_assert!((x + y).abs() < 1e-9),
            (None, None) => {}
            other => prop_assert!(false, "{other:?}"),
        }
        let a2: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + shift).collect();
        let shifted = pair_cohens_d(&a2, &b2).unwrap();
        if let (Some(x), Some(y)) = (d, shifted) {
            prop_assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn bh_is_monotone_and_dominates_p(ps in prop::collection::vec(0.0f64..=1.0, 1..60)) {
        let q = bh_fdr(&ps).unwrap();
        prop_assert_eq!(q.len(), ps.len());
        for i in 0..ps.len() {
            prop_assert!(q[i] >= ps[i] - 1e-15 && q[i] <= 1.0);
            for j in 0..ps.len() {
                if ps[i] <= ps[j] {
                    prop_assert!(q[i] <= q[j] + 1e-15);
                }
            }
        }
        let mut rev = ps.clone();
        rev.reverse();
        let mut q_rev = bh_fdr(&rev).unwrap();
        q_rev.reverse();
        prop_assert_eq!(q, q_rev);
    }

    #[test]
    fn sampled_permutation_tracks_exact(diffs in prop::collection::vec(finite(-10.0, 10.0), 2..=12), seed in any::<u64>()) {
        let exact = permutation_test_exact(&diffs).unwrap();
        // With 2^n <= n_iter the pipeline path enumerates exactly.
        prop_assert_eq!(permutation_test(&diffs, 10_000, seed).unwrap(), exact);
        let sampled = permutation_test_sampled(&diffs, 10_000, seed).unwrap();
        // Monte Carlo error bound: 4.5 standard errors plus the +1 correction.
        let se = (exact * (1.0 - exact) / 10_000.0).sqrt();
        prop_assert!((sampled - exact).abs() <= 4.5 * se + 2e-4, "exact {exact} sampled {sampled}");
        let neg: Vec<f64> = diffs.iter().map(|d| -d).collect();
        prop_assert!((permutation_test_exact(&neg).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn binomial_matches_brute_force(n in 1u64..=30, k_frac in 0.0f64..=1.0, p0 in 0.05f64..0.95) {
        let k = ((n as f64) * k_frac).round() as u64;
        let pmf: Vec<f64> = (0..=n)
            .map(|i| {
                let mut c = 1.0f64;
                for j in 0..i {
                    c = c * (n - j) as f64 / (j + 1) as f64;
                }
                c * p0.powi(i as i32) * (1.0 - p0).powi((n - i) as i32)
            })
            .collect();
        let greater: f64 = pmf[k as usize..].iter().sum();
        let less: f64 = pmf[..=k as usize].iter().sum();
        let two: f64 = pmf.iter().filter(|&&v| v <= pmf[k as usize] * (1.0 + 1e-7)).sum();
        let p = exact_binomial_p(k, n, p0).unwrap();
        prop_assert!((p.greater - greater.min(1.0)).abs() < 1e-12, "{} vs {}", p.greater, greater);
        prop_assert!((p.less - less.min(1.0)).abs() < 1e-12);
        prop_assert!((p.two_sided - two.min(1.0)).abs() < 1e-12);
    }

    #[test]
    fn relabeling_a_and_b_leaves_accuracy_unchanged(
        trials in prop::collection::vec((0usize..4, 0usize..9, any::<bool>(), any::<bool>(), any::<bool>()), 1..80),
    ) {
        let make = |swap: bool| -> Vec<TrialRecord> {
            trials
                .iter()
                .enumerate()
                .map(|(i, &(p, d, chose_a, pred_a, check))| {
                    let pick = |a: bool| if a ^ swap { Choice::A } else { Choice::B };
                    TrialRecord {
                        participant_id: format!("p{p}"),
                        language: "en".into(),
                        pair_id: format!("pair{}", i % 7),
                        dimension: Dimension::ALL[d],
                        prompt_pole: Pole::High,
                        chosen: pick(chose_a),
                        predicted: pick(pred_a),
                        is_attention_check: check && i % 5 == 0,
                        timestamp: "unix:0".into(),
                        modality: Modality::Text,
                    }
                })
                .collect()
        };
        let (orig, swapped) = (make(false), make(true));
        let r1 = analyze_study(&orig, &derive_participants(&orig));
        let r2 = analyze_study(&swapped, &derive_participants(&swapped));
        match (r1, r2) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn hypothesis_verdicts_flip_with_the_data(values in prop::collection::vec(finite(-2.0, 2.0), 220 * 9)) {
        let phonfeat = PhonFeat::bundled();
        let contrasts = LetterPair::all();
        let index = |c: LetterPair| contrasts.iter().position(|x| *x == c).unwrap();
        let planted = targets_from_fn(&contrasts, |c, d| Some(values[index(c) * 9 + d.index()]));
        let negated = targets_from_fn(&contrasts, |c, d| Some(-values[index(c) * 9 + d.index()]));
        let hyps = bundled_hypotheses();
        let a = evaluate_hypotheses(&hyps, &phonfeat, &planted).unwrap();
        let b = evaluate_hypotheses(&hyps, &phonfeat, &negated).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let expected = match x.verdict {
                Verdict::Consistent => Verdict::Inconsistent,
                Verdict::Inconsistent => Verdict::Consistent,
                Verdict::Na => Verdict::Na,
            };
            prop_assert_eq!(y.verdict, expected, "{} {:?}", x.name, x.class);
        }
    }

    #[test]
    fn counterbalanced_sets_are_disjoint_and_balanced(per_dim in 1usize..8, n_sets in 1usize..4, quota in 1usize..4, seed in any::<u64>()) {
        let pairs: Vec<(String, Dimension)> = Dimension::ALL
            .iter()
            .flat_map(|d| (0..per_dim).map(move |i| (format!("{d}{i}"), *d)))
            .collect();
        match counterbalance_assign(&pairs, n_sets, quota, seed) {
            Ok(sets) => {
                prop_assert!(n_sets * quota <= per_dim);
                let mut all: Vec<&String> = sets.iter().flatten().collect();
                prop_assert_eq!(all.len(), n_sets * quota * 9);
                all.sort();
                all.dedup();
                prop_assert_eq!(all.len(), n_sets * quota * 9);
            }
            Err(_) => prop_assert!(n_sets * quota > per_dim),
        }
    }

    #[test]
    fn edit_distance_is_a_metric(a in "[a-e]{0,7}", b in "[a-e]{0,7}", c in "[a-e]{0,7}") {
        let d = edit_distance(&a, &b);
        prop_assert_eq!(d, edit_distance(&b, &a));
        prop_assert_eq!(d == 0, a == b);
        prop_assert!(d <= a.len().max(b.len()));
        prop_assert!(edit_distance(&a, &c) <= d + edit_distance(&b, &c));
    }

    #[test]
    fn ridge_is_linear_in_the_target(
        data in prop::collection::vec(finite(-3.0, 3.0), 40),
        ys in prop::collection::vec(finite(-3.0, 3.0), 10),
        scale in finite(-5.0, 5.0),
        alpha in 0.01f64..100.0,
    ) {
        let x = DMatrix::from_row_slice(10, 4, &data);
        let y = DVector::from_vec(ys);
        let a = ridge_fit(&x, &y, alpha, RidgeOptions::default()).unwrap();
        let b = ridge_fit(&x, &(&y * scale), alpha, RidgeOptions::default()).unwrap();
        for (u, v) in a.coefficients.iter().zip(b.coefficients.iter()) {
            prop_assert!((u * scale - v).abs() < 1e-8 * (1.0 + v.abs()));
        }
        prop_assert!((a.intercept * scale - b.intercept).abs() < 1e-8 * (1.0 + b.intercept.abs()));
    }

    #[test]
    fn pca_variance_ratios_are_sorted_and_bounded(values in prop::collection::vec(finite(-1.0, 1.0), 26 * 9)) {
        let mut m = [[0.0; 9]; 26];
        for (i, v) in values.iter().enumerate() {
            m[i / 9][i % 9] = *v;
        }
        let r = pca(&LetterProfile::from_values(&m), 9).unwrap();
        let total: f64 = r.explained_variance_ratio.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for w in r.explained_variance_ratio.windows(2) {
            prop_assert!(w[0] >= w[1] - 1e-12);
        }
        let back = r.reconstruct();
        let (z, _, _) = phonosem_core::effects::zscore_profile(&LetterProfile::from_values(&m));
        prop_assert!((back - z).abs().max() < 1e-8);
    }

    #[test]
    fn spearman_brown_stays_in_range(r in -1.0f64..=1.0) {
        let v = spearman_brown(r);
        prop_assert!((-1.0..=1.0).contains(&v));
        if r >= 0.0 {
            prop_assert!(v >= r - 1e-12);
        }
    }

    #[test]
    fn rating_store_round_trips(scores in prop::collection::vec(0.0f64..=100.0, 1..40)) {
        let mut store = RatingStore::new();
        store.config_hash = Some("abc".into());
        let prov = Provenance { hash: "h1".into(), rater_id: "r".into(), kind: "synthetic".into(), timestamp: "unix:0".into() };
        let records: Vec<RatingRecord> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| RatingRecord {
                rater_id: "r".into(),
                pseudoword: format!("w{}", i / 9),
                pair_id: "a-e.s01".into(),
                dimension: Dimension::ALL[i % 9],
                score: s,
                raw_scale: RawScale::ZeroToHundred,
                provenance: "h1".into(),
            })
            .collect();
        store.extend(prov, records).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tsv");
        store.save(&path).unwrap();
        let (back, warnings) = phonosem_core::ratings::load_store(&path).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(back.to_table().render(), store.to_table().render());
        prop_assert_eq!(back.config_hash.as_deref(), Some("abc"));
    }
}

#[test]
fn vv_na_rule_is_exactly_the_zero_variance_rule() {
    let phonfeat = PhonFeat::bundled();
    let contrasts = LetterPair::all();
    let targets = targets_from_fn(&contrasts, |c, d| {
        Some((c.first().index() * 3 + d.index()) as f64 % 7.0)
    });
    let results = evaluate_hypotheses(&bundled_hypotheses(), &phonfeat, &targets).unwrap();
    for r in &results {
        let fi = phonosem_core::phonfeat::feature_index(&r.feature).unwrap();
        assert_eq!(
            r.verdict == Verdict::Na,
            !phonfeat.varies_within(r.class, fi),
            "{} {:?}",
            r.name,
            r.class
        );
    }
    assert!(results
        .iter()
        .any(|r| r.class == PairClass::Vv && r.verdict == Verdict::Na));
}
