use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsc_core::experiments::data::Family;
use rsc_core::stats::chi_squared_goodness;
use rsc_core::treelog::{
    embed, f_ipp, f_ipp_sorted, gamma, gamma_sensitivity_check, ipp, ipp_with, is_interior,
    log_star, log_star_universe, one_heavy_round, subtree_weight, trimming_parameter, IppConfig,
    LevelRoute, Universe,
};
use rsc_core::Error;

fn u(bits: u32) -> Universe {
    Universe::new(bits).unwrap()
}

#[test]
fn f_ipp_examples() {
    assert_eq!(f_ipp(&[1, 5, 9], 5), 2);
    assert!(f_ipp(&[1, 5, 9], 1) >= 1);
    assert_eq!(f_ipp(&[1, 5, 9], 0), 0);
    assert_eq!(f_ipp(&[1, 5, 9], 10), 0);
}

#[test]
fn f_ipp_is_quasi_concave_and_matches_sorted_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..30 {
        let n = rng.random_range(1..200);
        let mut d: Vec<u64> = (0..n).map(|_| rng.random_range(0..4096)).collect();
        d.sort();
        let scores: Vec<usize> = (0..4096).map(|z| f_ipp_sorted(&d, z)).collect();
        let peak = (0..4096).max_by_key(|&i| scores[i]).unwrap();
        assert!(scores[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(scores[peak..].windows(2).all(|w| w[0] >= w[1]));
        for z in (0..4096).step_by(97) {
            assert_eq!(scores[z as usize], f_ipp(&d, z));
        }
    }
}

#[test]
fn subtree_weight_boundaries() {
    let d = vec![3u64, 3, 3, 9, 200, 255];
    let un = u(8);
    assert_eq!(subtree_weight(&d, &un.root()), d.len());
    assert_eq!(subtree_weight(&d, &un.leaf(3)), 3);
    assert_eq!(subtree_weight(&d, &un.leaf(4)), 0);
}

#[test]
fn subtree_weight_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let un = u(20);
    let mut d: Vec<u64> = (0..10_000).map(|_| rng.random_range(0..1 << 20)).collect();
    d.sort();
    for _ in 0..2000 {
        let depth = rng.random_range(0..=20);
        let prefix = rng.random_range(0..1u64 << depth);
        let v = un.vertex(depth, prefix).unwrap();
        let lo = prefix << (20 - depth);
        let hi = ((prefix + 1) << (20 - depth)) - 1;
        let brute = d.iter().filter(|&&x| lo <= x && x <= hi).count();
        assert_eq!(subtree_weight(&d, &v), brute);
    }
}

#[test]
fn subtree_weight_matches_explicit_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for bits in [1u32, 4, 9, 12] {
        let un = u(bits);
        let mut d: Vec<u64> = (0..500).map(|_| rng.random_range(0..1 << bits)).collect();
        d.sort();
        // bottom-up weights of the materialized tree
        let mut level: Vec<usize> = vec![0; 1 << bits];
        for &x in &d {
            level[x as usize] += 1;
        }
        for depth in (0..=bits).rev() {
            for (prefix, &w) in level.iter().enumerate() {
                let v = un.vertex(depth, prefix as u64).unwrap();
                assert_eq!(subtree_weight(&d, &v), w);
            }
            level = level.chunks(2).map(|c| c.iter().sum()).collect();
        }
    }
}

#[test]
fn embed_hand_example() {
    let e = embed(&[0, 0, 7], u(3));
    assert_eq!(e.gamma, 1);
    assert_eq!(e.pairs, vec![(3, 0), (3, 0), (1, 7)]);
    assert_eq!(e.path.len(), 4);
}

#[test]
fn embed_all_equal() {
    let e = embed(&[42; 17], u(8));
    assert_eq!(e.gamma, 0);
    assert!(e.pairs.iter().all(|&(y, x)| y == 8 && x == 42));
}

#[test]
fn embed_labels_count_off_path_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    for _ in 0..200 {
        let bits = rng.random_range(2..=16);
        let un = u(bits);
        let n = rng.random_range(1..300);
        let mut d: Vec<u64> = (0..n)
            .map(|_| rng.random_range(0..=un.max_element()))
            .collect();
        d.sort();
        let e = embed(&d, un);
        assert_eq!(e.pairs.len(), d.len());
        assert!(e.pairs.windows(2).all(|w| w[0] >= w[1]));
        let mut gamma_check = 0;
        for q in 1..=bits {
            // leaving the path below vertex q-1 means sitting under its other child
            let parent = e.path[(q - 1) as usize];
            let on = e.path[q as usize];
            let off = if on == parent.left() {
                parent.right()
            } else {
                parent.left()
            };
            let mut expect = subtree_weight(&d, &off);
            gamma_check = gamma_check.max(subtree_weight(&d, &off).min(subtree_weight(&d, &on)));
            if q == bits {
                expect += subtree_weight(&d, &on);
            }
            let got = e.pairs.iter().filter(|p| p.0 == q).count();
            assert_eq!(got, expect, "bits={bits} q={q}");
        }
        assert_eq!(e.gamma, gamma_check);
    }
}

#[test]
fn gamma_sensitivity_examples() {
    assert!(gamma_sensitivity_check(&[], 5, u(4)));
    assert_eq!(gamma(&[], u(4)), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..10_000 {
        let d: Vec<u64> = (0..200).map(|_| rng.random_range(0..1 << 16)).collect();
        assert!(gamma_sensitivity_check(
            &d,
            rng.random_range(0..1 << 16),
            u(16)
        ));
    }
}

#[test]
fn heavy_round_two_clusters() {
    let t = trimming_parameter(1.0, 1e-3);
    let un = u(32);
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let (a, b) = (12_345u64, 3_000_000_000u64);
    let mut d = vec![a; t];
    d.extend(vec![b; t]);
    let mut at_root = 0;
    for _ in 0..1000 {
        let z = one_heavy_round(&d, un, t as f64, 1.0, &mut rng).unwrap();
        assert!(a <= z && z <= b);
        if z == (1u64 << 31) - 1 {
            at_root += 1;
        }
    }
    assert!(at_root >= 998);
}

#[test]
fn heavy_round_single_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    for v in [0u64, 1, 77, 65_535] {
        assert_eq!(
            one_heavy_round(&[v; 50], u(16), 691.0, 1.0, &mut rng).unwrap(),
            v
        );
    }
    assert_eq!(
        one_heavy_round(&[], u(16), 1.0, 1.0, &mut rng).unwrap_err(),
        Error::EmptyDataset
    );
}

#[test]
fn heavy_round_on_balanced_instances() {
    let delta = 1e-3;
    let t = trimming_parameter(1.0, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(58);
    let bits = 24;
    let mut good = 0;
    let mut trials = 0;
    while trials < 1000 {
        // two groups straddling a random split point, plus scattered points
        let split = rng.random_range(1..1u64 << bits);
        let k1 = rng.random_range(t / 2..2 * t);
        let k2 = rng.random_range(t / 2..2 * t);
        let mut d: Vec<u64> = (0..k1).map(|_| rng.random_range(0..split)).collect();
        d.extend((0..k2).map(|_| rng.random_range(split..1 << bits)));
        d.extend((0..t / 4).map(|_| rng.random_range(0..1 << bits)));
        if gamma(&d, u(bits)) * 2 < t {
            continue;
        }
        trials += 1;
        let z = one_heavy_round(&d, u(bits), t as f64, 1.0, &mut rng).unwrap();
        good += is_interior(&d, z) as usize;
    }
    assert!(good as f64 >= (1.0 - 2.0 * delta) * 1000.0);
}

#[test]
fn log_star_values() {
    assert_eq!(log_star(2.0), 1);
    assert_eq!(log_star(16.0), 3);
    assert_eq!(log_star(2f64.powi(32)), 5);
    assert_eq!(log_star_universe(32), 5);
    assert_eq!(log_star_universe(1), 1);
}

#[test]
fn base_case_matches_exponential_weights() {
    let un = u(3);
    let cfg = IppConfig::new(0.7, 0.1).unwrap().permissive();
    let d = vec![1u64, 2, 2, 5, 6];
    let weights: Vec<f64> = (0..8u64)
        .map(|z| {
            let le = d.iter().filter(|&&x| x <= z).count();
            let ge = d.iter().filter(|&&x| x >= z).count();
            (0.7 * le.min(ge) as f64 / 2.0).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut counts = vec![0u64; 8];
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    for _ in 0..100_000 {
        let out = ipp_with(un, d.clone(), &cfg, &mut rng).unwrap();
        assert_eq!(out.levels.len(), 1);
        assert_eq!(out.levels[0].route, LevelRoute::Base);
        counts[out.value as usize] += 1;
    }
    let r = chi_squared_goodness(&counts, &probs, 5.0);
    assert!(r.passes(0.01), "{r:?}");
}

#[test]
fn all_equal_returns_the_value() {
    let un = u(32);
    let cfg = IppConfig::new(1.0, 1e-3).unwrap();
    let n = cfg.regime(un);
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..20 {
        let v = rng.random_range(0..=un.max_element());
        assert_eq!(ipp(un, vec![v; n], 1.0, 1e-3, &mut rng).unwrap(), v);
    }
}

#[test]
fn regime_violation_is_reported() {
    let un = u(32);
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    match ipp(un, vec![5; 1000], 1.0, 1e-3, &mut rng) {
        Err(Error::RegimeViolation {
            n,
            required,
            inequality,
        }) => {
            assert_eq!(n, 1000);
            assert_eq!(required, 34_550);
            assert!(inequality.contains("log*"));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        ipp(u(8), vec![300], 1.0, 1e-3, &mut rng),
        Err(Error::OutOfRange { .. })
    ));
    assert_eq!(
        ipp(u(8), vec![], 1.0, 1e-3, &mut rng).unwrap_err(),
        Error::EmptyDataset
    );
}

#[test]
fn fixed_seed_is_deterministic() {
    let un = u(32);
    let cfg = IppConfig::new(1.0, 1e-3).unwrap();
    let n = cfg.regime(un);
    for f in Family::ALL {
        let d = f.generate(un, n, &mut ChaCha8Rng::seed_from_u64(62));
        let a = ipp_with(un, d.clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(63)).unwrap();
        let b = ipp_with(un, d, &cfg, &mut ChaCha8Rng::seed_from_u64(63)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn wide_universe_in_regime() {
    let un = u(64);
    let cfg = IppConfig::new(1.0, 1e-3).unwrap();
    let n = cfg.regime(un);
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for f in Family::ALL {
        for _ in 0..5 {
            let d = f.generate(un, n, &mut rng);
            let out = ipp_with(un, d.clone(), &cfg, &mut rng).unwrap();
            assert!(is_interior(&d, out.value), "{}", f.name());
        }
    }
}
