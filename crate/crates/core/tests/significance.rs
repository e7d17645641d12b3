use ::metablox::metablox::{compute_gamma, edge_compression, infer_variants, metablox_with_inference};
use ::metablox::significance::{lower_order_statistic, permute_labels};
use ::metablox::synthetic::{sbm_generate, theta_bc};
use ::metablox::{
    dl, metablox as run_metablox, randomized_dl_distribution, Graph, InferenceConfig, MetabloxConfig, Partition,
    PermutationEnsemble, QTable, Variant,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn planted_network(seed: u64, n: usize, mu: f64) -> (Graph, Partition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = (n as f64 * 10.0 / 2.0).round() as u64;
    sbm_generate(n, 10.0, &theta_bc(e, mu).unwrap(), &mut rng).unwrap()
}

fn fast_config(seed: u64) -> MetabloxConfig {
    MetabloxConfig {
        variants: Variant::ALL.to_vec(),
        n_permutations: 100,
        alpha: 0.01,
        seed,
        inference: InferenceConfig {
            sweeps: 200,
            restarts: 2,
            ..InferenceConfig::default()
        },
    }
}

#[test]
fn permutations_are_uniform() {
    let d = Partition::new(vec![0, 0, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut counts = [0u64; 3];
    let draws = 100_000;
    for _ in 0..draws {
        let p = permute_labels(&d, &mut rng);
        counts[p.labels().iter().position(|&l| l == 1).unwrap()] += 1;
    }
    let expected = draws as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 2 degrees of freedom: P(chi2 > 13.82) = 0.001
    assert!(chi2 < 13.82, "chi-square {chi2} for {counts:?}");
}

#[test]
fn permutations_keep_category_counts() {
    let d = Partition::new(vec![0, 1, 1, 2, 2, 2, 0, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut want = d.block_sizes();
    want.sort();
    for _ in 0..200 {
        let mut got = permute_labels(&d, &mut rng).block_sizes();
        got.sort();
        assert_eq!(got, want);
    }
    let single = Partition::trivial(6);
    assert_eq!(permute_labels(&single, &mut rng), single);
}

#[test]
fn ensemble_is_deterministic_and_sized() {
    let (g, planted) = planted_network(3, 100, 0.2);
    let qt = QTable::default();
    let a = randomized_dl_distribution(&g, &planted, Variant::Dc, 120, 0.01, 7, &qt).unwrap();
    let b = randomized_dl_distribution(&g, &planted, Variant::Dc, 120, 0.01, 7, &qt).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dls.len(), 120);
    let c = randomized_dl_distribution(&g, &planted, Variant::Dc, 120, 0.01, 8, &qt).unwrap();
    assert_ne!(a.dls, c.dls);
    // the planted labelling beats every shuffle of itself
    let d = dl(&g, &planted, Variant::Dc).unwrap().total;
    assert!(a.dls.iter().all(|&x| x > d));
    assert_eq!(a.bestest_pvalue(d), 1.0 / 120.0);
}

#[test]
fn order_statistic_rules() {
    let v: Vec<f64> = (1..=500).map(|i| i as f64).collect();
    assert_eq!(lower_order_statistic(&v, 0.01).unwrap(), 5.0);
    assert_eq!(lower_order_statistic(&v[..100], 0.01).unwrap(), 1.0);
    assert!(lower_order_statistic(&v[..50], 0.01).is_err());
    assert!(lower_order_statistic(&[], 0.5).is_err());
}

#[test]
fn gamma_edge_cases() {
    assert_eq!(compute_gamma(10.0, 10.0, 20.0).gamma, Some(0.0));
    assert_eq!(compute_gamma(20.0, 10.0, 20.0).gamma, Some(1.0));
    assert_eq!(compute_gamma(15.0, 10.0, 10.0).gamma, None);
    let below = compute_gamma(9.0, 10.0, 20.0);
    assert!(below.gamma.unwrap() < 0.0 && !below.flags.is_empty());
    assert_eq!(edge_compression(50.0, 0), None);
    assert_eq!(edge_compression(50.0, 25), Some(2.0));
}

#[test]
fn planted_metadata_is_relevant_and_shuffled_is_not() {
    let (g, planted) = planted_network(11, 200, 0.1);
    let qt = QTable::default();
    let cfg = fast_config(5);
    let report = run_metablox(&g, &planted, &cfg, &qt).unwrap();
    for v in &report.variants {
        assert!(v.relevant, "{}: gamma {:?}", v.variant, v.gamma);
        assert!(v.gamma.unwrap() < 0.5);
        assert_eq!(v.pvalue, 1.0 / 100.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let shuffled = permute_labels(&planted, &mut rng);
    let report = run_metablox(&g, &shuffled, &cfg, &qt).unwrap();
    for v in &report.variants {
        assert!(!v.relevant, "{}: gamma {:?}", v.variant, v.gamma);
    }
}

#[test]
fn exact_match_gives_zero_gamma() {
    let (g, planted) = planted_network(2, 200, 0.05);
    let qt = QTable::default();
    let cfg = fast_config(1);
    let inferred = infer_variants(&g, &cfg, &qt).unwrap();
    for inf in &inferred {
        let d = inf.best_partition.clone();
        let report = metablox_with_inference(&g, &d, std::slice::from_ref(inf), &MetabloxConfig {
            variants: vec![inf.variant],
            ..cfg.clone()
        }, &qt)
        .unwrap();
        assert_eq!(report.variants[0].gamma, Some(0.0));
    }
    let report = metablox_with_inference(&g, &planted, &inferred, &cfg, &qt).unwrap();
    for (v, inf) in report.variants.iter().zip(&inferred) {
        if inf.best_partition.same_grouping(&planted) {
            assert_eq!(v.gamma, Some(0.0));
        }
    }
}

#[test]
fn report_is_reproducible() {
    let (g, planted) = planted_network(4, 100, 0.2);
    let qt = QTable::default();
    let cfg = fast_config(17);
    let a = run_metablox(&g, &planted, &cfg, &qt).unwrap().to_json(Some(&g));
    let b = run_metablox(&g, &planted, &cfg, &qt).unwrap().to_json(Some(&g));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

proptest! {
    #[test]
    fn gamma_is_affine_invariant(opt in -1e4f64..1e4, gap in 1e-3f64..1e4, frac in -2f64..3.0,
                                 scale in 1e-3f64..1e3, shift in -1e4f64..1e4) {
        let rand = opt + gap;
        let d = opt + frac * gap;
        let g1 = compute_gamma(d, opt, rand).gamma.unwrap();
        let g2 = compute_gamma(d * scale + shift, opt * scale + shift, rand * scale + shift).gamma.unwrap();
        prop_assert!((g1 - g2).abs() < 1e-6 * (1.0 + g1.abs()));
        prop_assert!((g1 - frac).abs() < 1e-6 * (1.0 + frac.abs()));
    }

    #[test]
    fn gamma_increases_with_sigma_d(opt in 0f64..1e4, gap in 1e-2f64..1e3, a in 0f64..1e3, b in 0f64..1e3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let g_lo = compute_gamma(opt + lo, opt, opt + gap).gamma.unwrap();
        let g_hi = compute_gamma(opt + hi, opt, opt + gap).gamma.unwrap();
        prop_assert!(g_lo <= g_hi);
        prop_assert_eq!(g_lo < 1.0, lo < gap);
    }

    #[test]
    fn pvalue_is_floored_and_bounded(values in proptest::collection::vec(0f64..100.0, 1..300), d in 0f64..100.0) {
        let ens = PermutationEnsemble {
            variant: Variant::Dc,
            n_p: values.len(),
            dls: values.clone(),
            alpha: 0.5,
            seed: 0,
        };
        let p = ens.bestest_pvalue(d);
        let n = values.len() as f64;
        prop_assert!(p >= 1.0 / n && p <= 1.0);
        let hits = values.iter().filter(|&&x| x <= d).count() as f64;
        prop_assert_eq!(p, (hits / n).max(1.0 / n));
    }

    #[test]
    fn sigma_rand_nondecreasing_in_alpha(values in proptest::collection::vec(0f64..100.0, 100..300),
                                         a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let x = lower_order_statistic(&values, lo).unwrap();
        let y = lower_order_statistic(&values, hi).unwrap();
        prop_assert!(x <= y);
        prop_assert!(values.contains(&x));
    }
}
