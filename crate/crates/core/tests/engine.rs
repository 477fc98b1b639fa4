use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsc_core::mech::geometric_pmf;
use rsc_core::rsc::{
    ascending, descending, holder_call_cap, privacy_cost, RscSession, SliceComputation, SliceNoise,
    CONSERVATIVE_LABEL,
};
use rsc_core::stats::chi_squared_goodness;
use rsc_core::{Error, PrivacyBudget};

#[test]
fn hand_simulated_slice() {
    let asc = ascending::<u64>();
    let mut s = RscSession::with_noise(vec![5, 1, 3, 9], SliceNoise::Deterministic, 2).unwrap();
    let out = s
        .select_and_compute(SliceComputation::<u64, ()>::new(2, &asc), &mut rand::rng())
        .unwrap();
    assert_eq!(out.taken, 2);
    assert_eq!(s.slice(0), Some(&[1u64, 3][..]));
    let mut rest = s.remaining().to_vec();
    rest.sort();
    assert_eq!(rest, vec![5, 9]);
}

#[test]
fn pinned_seed_with_zero_noise() {
    // find a seed whose first geometric draw is 0, then replay it
    let asc = ascending::<u64>();
    let budget = PrivacyBudget::new(0.5, 0.0).unwrap();
    let seed = (0..100u64)
        .find(|&seed| {
            let mut s = RscSession::new(vec![5, 1, 3, 9], budget, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            s.select_and_compute(SliceComputation::<u64, ()>::new(2, &asc), &mut rng)
                .unwrap()
                .noisy_size
                == 2
        })
        .expect("some seed draws zero noise");
    let mut s = RscSession::new(vec![5, 1, 3, 9], budget, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    s.select_and_compute(SliceComputation::<u64, ()>::new(2, &asc), &mut rng)
        .unwrap();
    assert_eq!(s.slice(0), Some(&[1u64, 3][..]));
    assert_eq!(s.remaining().len(), 2);
}

#[test]
fn overshoot_takes_everything() {
    let desc = descending::<u64>();
    let mut s = RscSession::with_noise(vec![4, 2, 8], SliceNoise::Deterministic, 1).unwrap();
    let out = s
        .select_and_compute(
            SliceComputation::<u64, ()>::new(10, &desc),
            &mut rand::rng(),
        )
        .unwrap();
    assert_eq!(out.taken, 3);
    assert_eq!(out.noisy_size, 10);
    assert_eq!(s.slice(0), Some(&[8u64, 4, 2][..]));
    assert!(s.remaining().is_empty());
}

#[test]
fn slice_without_algorithm_is_still_removed() {
    let asc = ascending::<u64>();
    let mut s = RscSession::with_noise(vec![3, 2, 1], SliceNoise::Deterministic, 2).unwrap();
    let out = s
        .select_and_compute(SliceComputation::<u64, u64>::new(1, &asc), &mut rand::rng())
        .unwrap();
    assert_eq!(out.result, None);
    assert_eq!(s.slice(0), Some(&[1u64][..]));
    assert_eq!(s.delayed_compute(0, |x| x.to_vec()).unwrap(), vec![1]);
}

#[test]
fn algorithm_sees_exactly_the_slice() {
    let asc = ascending::<u64>();
    let sum = |s: &[u64]| s.iter().sum::<u64>();
    let mut s = RscSession::with_noise(vec![7, 1, 4, 2], SliceNoise::Deterministic, 2).unwrap();
    let out = s
        .select_and_compute(
            SliceComputation::new(3, &asc).with_algorithm(&sum),
            &mut rand::rng(),
        )
        .unwrap();
    assert_eq!(out.result, Some(7));
}

#[test]
fn session_exhaustion() {
    let asc = ascending::<u64>();
    let mut s = RscSession::with_noise(vec![1, 2, 3], SliceNoise::Deterministic, 1).unwrap();
    let spec = SliceComputation::<u64, ()>::new(1, &asc);
    s.select_and_compute(spec, &mut rand::rng()).unwrap();
    assert_eq!(
        s.select_and_compute(spec, &mut rand::rng()).unwrap_err(),
        Error::SessionExhausted { tau: 1 }
    );
    assert!(RscSession::with_noise(vec![1u64], SliceNoise::Deterministic, 0).is_err());
}

#[test]
fn delayed_compute_limits() {
    let asc = ascending::<u64>();
    let spec = SliceComputation::<u64, ()>::new(2, &asc);

    let mut s = RscSession::with_noise(vec![1, 2, 3], SliceNoise::Deterministic, 1).unwrap();
    s.select_and_compute(spec, &mut rand::rng()).unwrap();
    assert_eq!(s.delayed_compute(0, |x| x.len()).unwrap(), 2);
    assert_eq!(
        s.delayed_compute(0, |x| x.len()).unwrap_err(),
        Error::SliceReuse { step: 0, limit: 1 }
    );
    assert_eq!(
        s.delayed_compute(3, |x| x.len()).unwrap_err(),
        Error::UnknownSlice(3)
    );

    let mut s = RscSession::with_noise(vec![1, 2, 3], SliceNoise::Deterministic, 1)
        .unwrap()
        .with_k(3)
        .unwrap();
    s.select_and_compute(spec, &mut rand::rng()).unwrap();
    for _ in 0..3 {
        assert_eq!(s.delayed_compute(0, |x| x[0]).unwrap(), 1);
    }
    assert!(s.delayed_compute(0, |x| x[0]).is_err());
}

#[test]
fn noisy_size_marginal() {
    let eps = 0.4;
    let asc = ascending::<u64>();
    let data: Vec<u64> = (0..200).collect();
    let mut counts = vec![0u64; 60];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let trials = 100_000;
    for _ in 0..trials {
        let mut s = RscSession::with_noise(data.clone(), SliceNoise::Geometric { epsilon: eps }, 1)
            .unwrap();
        let out = s
            .select_and_compute(SliceComputation::<u64, ()>::new(5, &asc), &mut rng)
            .unwrap();
        let extra = (out.noisy_size - 5) as usize;
        if extra < counts.len() {
            counts[extra] += 1;
        }
    }
    let probs: Vec<f64> = (0..60).map(|k| geometric_pmf(eps, k)).collect();
    let r = chi_squared_goodness(&counts, &probs, 5.0);
    assert!(r.passes(0.01), "{r:?}");
}

#[test]
fn accounting_examples() {
    let (tau, delta, delta_hat) = (7, 1e-5, 1e-6);
    let b = privacy_cost(0.5, delta, tau, 1, delta_hat, 1).unwrap();
    assert_eq!(b.delta_total, delta_hat + 2.0 * tau as f64 * delta);
    assert_eq!(b.label, CONSERVATIVE_LABEL);

    // smallest w with (5/6)^w <= 1e-6
    let w = (1..).find(|&w| (5.0f64 / 6.0).powi(w) <= 1e-6).unwrap();
    assert_eq!(w, 76);
    assert_eq!(holder_call_cap(1, 1e-6), 76);
    assert_eq!(b.holder_call_cap, 76);

    let z = privacy_cost(0.0, delta, tau, 3, delta_hat, 4).unwrap();
    assert_eq!(z.epsilon_total, 0.0);

    let k3 = privacy_cost(0.5, delta, tau, 3, delta_hat, 1).unwrap();
    assert!((k3.delta_total - (delta_hat + 6.0 * tau as f64 * delta)).abs() < 1e-18);
    assert!(k3.epsilon_total > b.epsilon_total);

    assert!(privacy_cost(0.5, delta, 0, 1, delta_hat, 1).is_err());
    assert!(privacy_cost(0.5, delta, 1, 1, 1.0, 1).is_err());
}

#[test]
fn call_cap_grows_with_applications() {
    let caps: Vec<u64> = (1..=8).map(|a| holder_call_cap(a, 1e-6)).collect();
    assert!(caps.windows(2).all(|w| w[0] <= w[1]));
    assert!(caps[7] >= 8);
}
