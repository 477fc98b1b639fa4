use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsc_core::quasiconcave::{
    agreement_prefix, build_increment_dataset, cumulative_distance, cumulative_ipp, decode_outer,
    hardness_reduction, median_oracle, qc_optimize, qc_target_size, reduction_dataset,
    uniform_interior_oracle, QcInstance, DEFAULT_SCALE_CONSTANT, INNER, OUTER,
};
use rsc_core::rsc::{ascending, descending, OrderMap};
use rsc_core::treelog::relabel::relabelled_projection_distance;
use rsc_core::treelog::{gamma, is_interior, Universe};
use rsc_core::Error;

/// Unimodal table of length `len` peaking at exactly `top`, zero at both ends.
fn random_qc<R: Rng>(len: usize, top: u64, rng: &mut R) -> Vec<u64> {
    let peak = rng.random_range(1..len - 1);
    let mut step = vec![0i64; len];
    for _ in 0..top {
        step[rng.random_range(1..=peak)] += 1;
        step[rng.random_range(peak + 1..len)] -= 1;
    }
    let mut acc = 0i64;
    step.iter()
        .map(|s| {
            acc += s;
            acc as u64
        })
        .collect()
}

/// Quasi-concave envelope `min(prefix max, suffix max)`.
fn envelope(g: &[u64]) -> Vec<u64> {
    let mut pre = g.to_vec();
    for i in 1..pre.len() {
        pre[i] = pre[i].max(pre[i - 1]);
    }
    let mut suf = g.to_vec();
    for i in (0..suf.len() - 1).rev() {
        suf[i] = suf[i].max(suf[i + 1]);
    }
    pre.iter().zip(&suf).map(|(a, b)| *a.min(b)).collect()
}

fn shift(f: &[u64], n: u64) -> Vec<u64> {
    let opt = *f.iter().max().unwrap();
    f.iter().map(|&v| (v + n).saturating_sub(opt)).collect()
}

#[test]
fn distance_examples() {
    assert_eq!(cumulative_distance(&[4, 4], &[4, 4]).unwrap(), 0);
    assert_eq!(cumulative_distance(&[1, 3], &[2, 3]).unwrap(), 1);
    assert_eq!(cumulative_distance(&[1, 1, 1], &[5, 5, 5]).unwrap(), 3);
    assert_eq!(
        cumulative_distance(&[1, 2], &[1]).unwrap_err(),
        Error::SizeMismatch { left: 2, right: 1 }
    );
}

#[test]
fn increment_examples() {
    assert_eq!(
        build_increment_dataset(&[0, 1, 2, 3, 2, 1, 0], 3).unwrap(),
        vec![1, 2, 3]
    );
    let mut single = vec![0u64; 50];
    single[17] = 1;
    assert_eq!(build_increment_dataset(&single, 1).unwrap(), vec![17]);
}

#[test]
fn increment_dataset_has_size_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..1000 {
        let len = rng.random_range(3..4096);
        let n = rng.random_range(1..500);
        let f = random_qc(len, n, &mut rng);
        assert_eq!(*f.iter().max().unwrap(), n);
        let s = build_increment_dataset(&f, n).unwrap();
        assert_eq!(s.len() as u64, n);
    }
}

#[test]
fn adjacent_scores_give_close_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    for _ in 0..1000 {
        let len = rng.random_range(3..2000);
        let f = random_qc(len, rng.random_range(5..300), &mut rng);
        let noisy: Vec<u64> = f
            .iter()
            .map(|&v| (v + rng.random_range(0..=2)).saturating_sub(1))
            .collect();
        let g = envelope(&noisy);
        assert!(f.iter().zip(&g).all(|(a, b)| a.abs_diff(*b) <= 1));
        let n = 400;
        let s = build_increment_dataset(&shift(&f, n), n).unwrap();
        let t = build_increment_dataset(&shift(&g, n), n).unwrap();
        assert!(cumulative_distance(&s, &t).unwrap() <= 2);
    }
}

#[test]
fn border_orders_keep_cumulative_adjacency() {
    let asc = ascending::<u64>();
    let desc = descending::<u64>();
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let mut tested = 0;
    while tested < 1000 {
        let n = rng.random_range(2..60);
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..64)).collect();
        let mut b = a.clone();
        let i = rng.random_range(0..n);
        b[i] = rng.random_range(0..64);
        if cumulative_distance(&a, &b).unwrap() != 1 {
            continue;
        }
        tested += 1;
        for k in 0..=n {
            for map in [&asc as &dyn OrderMap<u64>, &desc] {
                let (sa, ra) = map.take_prefix(a.clone(), k);
                let (sb, rb) = map.take_prefix(b.clone(), k);
                assert!(cumulative_distance(&sa, &sb).unwrap() <= 1);
                assert!(cumulative_distance(&ra, &rb).unwrap() <= 1);
            }
        }
    }
}

#[test]
fn relabelled_projection_doubles_distance() {
    let un = Universe::new(16).unwrap();
    let t = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    let mut tested = 0;
    while tested < 300 {
        // a dominant value with a light scatter keeps the heavy path unbalanced
        let v = rng.random_range(0..1 << 16);
        let mut a = vec![v; 300];
        a.extend((0..rng.random_range(0..20)).map(|_| rng.random_range(0..1 << 16)));
        let d = rng.random_range(1..=4usize);
        let mut b = a.clone();
        for _ in 0..d {
            let i = rng.random_range(0..b.len());
            b[i] = rng.random_range(0..1 << 16);
        }
        let dist = cumulative_distance(&a, &b).unwrap();
        let g = gamma(&a, un).max(gamma(&b, un));
        if dist == 0 || g + 2 * dist >= t {
            continue;
        }
        tested += 1;
        let (_, rest) = relabelled_projection_distance(&a, &b, t, un);
        assert!(rest <= 2 * dist, "distance {dist} became {rest}");
    }
}

#[test]
fn cumulative_solver_on_constant_data() {
    let un = Universe::new(8).unwrap();
    let n = qc_target_size(un, 1.0, 0.5, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(75);
    for v in [0u64, 100, 255] {
        let out = cumulative_ipp(un, vec![v; n], 1.0, 0.5, 1.0, &mut rng).unwrap();
        assert_eq!(out.value, v);
    }
    assert!(matches!(
        cumulative_ipp(un, vec![3; 10], 1.0, 0.5, 1.0, &mut rng),
        Err(Error::RegimeViolation { .. })
    ));
}

#[test]
fn target_size_follows_scaled_budget() {
    // eps' = eps / (C 2^s), delta' = delta^C / 2^s, n = 10 t' s
    let un = Universe::new(16).unwrap();
    let (eps, delta, c): (f64, f64, f64) = (1.0, 0.1, DEFAULT_SCALE_CONSTANT);
    let s = 4.0; // log*(2^16): 65536, 16, 4, 2, 1
    let levels = 2f64.powf(s);
    let t = (100.0 / (eps / (c * levels)) * (levels / delta.powf(c)).ln()).ceil();
    assert_eq!(
        qc_target_size(un, eps, delta, c).unwrap(),
        (10.0 * t * s) as usize
    );
}

#[test]
fn constant_scores_use_the_gate() {
    let inst = QcInstance::new(vec![5; 1000]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(76);
    for _ in 0..50 {
        let out = qc_optimize(&inst, 1.0, 0.1, 4.0, &mut rng).unwrap();
        assert!(!out.used_ipp);
        assert_eq!(inst.optimum() - out.score, 0);
    }
}

#[test]
fn instance_validation_and_csv() {
    assert_eq!(
        QcInstance::new(vec![1, 0, 1]).unwrap_err(),
        Error::NotQuasiConcave(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "y,score\n0,1\n1,4\n3,0").unwrap();
    drop(f);
    assert_eq!(
        QcInstance::from_csv(&path).unwrap().scores,
        vec![1, 4, 0, 0]
    );
    std::fs::write(&path, "0,1\n1,0\n2,5\n").unwrap();
    assert!(QcInstance::from_csv(&path).is_err());
    std::fs::write(&path, "0,1\nx,0\n").unwrap();
    assert!(QcInstance::from_csv(&path)
        .unwrap_err()
        .to_string()
        .contains("line 2"));
}

#[test]
fn reduction_elements_agree_with_z_then_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let z: Vec<u64> = (0..INNER).map(|_| rng.random_range(2..OUTER)).collect();
        let data: Vec<u64> = (0..5).map(|_| rng.random_range(1..=INNER)).collect();
        let set = reduction_dataset(&data, &z);
        for (i, &x) in data.iter().enumerate() {
            for (b, fill) in [(0, 1), (1, OUTER)] {
                let digits = decode_outer(set[2 * i + b]);
                for v in 1..=INNER {
                    let want = if v <= x { z[(v - 1) as usize] } else { fill };
                    assert_eq!(digits[(v - 1) as usize], want);
                }
            }
            assert!(agreement_prefix(set[2 * i], &z) >= x);
        }
    }
}

#[test]
fn reduction_preserves_cumulative_adjacency() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let mut tested = 0;
    while tested < 1000 {
        let n = rng.random_range(1..8);
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(1..=INNER)).collect();
        let mut b = a.clone();
        let i = rng.random_range(0..n);
        b[i] = rng.random_range(1..=INNER);
        if cumulative_distance(&a, &b).unwrap() != 1 {
            continue;
        }
        tested += 1;
        let z: Vec<u64> = (0..INNER).map(|_| rng.random_range(2..OUTER)).collect();
        let d = cumulative_distance(&reduction_dataset(&a, &z), &reduction_dataset(&b, &z));
        assert!(d.unwrap() <= 1);
    }
}

#[test]
fn reduction_with_perfect_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let trials = 1000;
    let mut uniform_ok = 0;
    for _ in 0..trials {
        let n = rng.random_range(1..6);
        let d: Vec<u64> = (0..n).map(|_| rng.random_range(1..=INNER)).collect();
        let l = hardness_reduction(2, &d, median_oracle, &mut rng).unwrap();
        assert!(is_interior(&d, l));
        let l = hardness_reduction(2, &d, uniform_interior_oracle, &mut rng).unwrap();
        uniform_ok += is_interior(&d, l) as usize;
    }
    let p = 1.0 - 1.0 / 38.0;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    assert!(uniform_ok as f64 / trials as f64 >= p - 3.0 * se);
    assert_eq!(
        hardness_reduction(3, &[1], median_oracle, &mut rng).unwrap_err(),
        Error::UnsupportedLevel(3)
    );
    assert!(hardness_reduction(2, &[11], median_oracle, &mut rng).is_err());
}
