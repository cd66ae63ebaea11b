//! GP and BO checked against brute-force references.

use std::convert::Infallible;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotcomp::gpopt::{bo_minimize, expected_improvement, gp_fit, gp_posterior, kernel, BoConfig, GpConfig};
use rotcomp::{wrapped_distance, AngleDeg};

/// Posterior by forming `K + σ_n²I` densely and solving with LU.
fn dense_posterior(obs: &[(AngleDeg, f64)], cfg: &GpConfig, q: AngleDeg) -> (f64, f64) {
    let n = obs.len();
    let m = obs.iter().map(|o| o.1).sum::<f64>() / n as f64;
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel(obs[i].0, obs[j].0, cfg) + if i == j { cfg.noise_variance } else { 0.0 }
    });
    let y = DVector::from_fn(n, |i, _| obs[i].1 - m);
    let ks = DVector::from_fn(n, |i, _| kernel(obs[i].0, q, cfg));
    let lu = k.lu();
    let alpha = lu.solve(&y).unwrap();
    let v = lu.solve(&ks).unwrap();
    (m + ks.dot(&alpha), (cfg.signal_variance - ks.dot(&v)).max(0.0))
}

fn random_observations(rng: &mut ChaCha8Rng, n: usize) -> Vec<(AngleDeg, f64)> {
    (0..n)
        .map(|_| (AngleDeg::new(rng.random_range(-180.0..180.0)), rng.random_range(0.0..1.0)))
        .collect()
}

#[test]
fn posterior_matches_dense_solve() {
    let cfg = GpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=30);
        let obs = random_observations(&mut rng, n);
        let state = gp_fit(&obs, &cfg).unwrap();
        assert_eq!(state.jitter(), 0.0);
        for i in 0..36 {
            let q = AngleDeg::new(-180.0 + 10.0 * i as f64 + 0.5);
            let (m, v) = gp_posterior(&state, q);
            let (dm, dv) = dense_posterior(&obs, &cfg, q);
            worst = worst.max((m - dm).abs()).max((v - dv).abs());
        }
    }
    assert!(worst <= 1e-8, "worst deviation {worst:e}");
}

#[test]
fn noiseless_posterior_interpolates() {
    let cfg = GpConfig {
        noise_variance: 0.0,
        ..GpConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        // Without noise, the squared-exponential Gram matrix of points much
        // closer than the lengthscale is singular in floating point; 18°
        // separation keeps it factorable without jitter.
        let n = rng.random_range(1..=20usize);
        let mut slots: Vec<i32> = (0..20).collect();
        for i in (1..slots.len()).rev() {
            slots.swap(i, rng.random_range(0..=i));
        }
        let obs: Vec<(AngleDeg, f64)> = slots[..n]
            .iter()
            .map(|&s| (AngleDeg::new(-180.0 + 18.0 * f64::from(s)), rng.random_range(0.0..1.0)))
            .collect();
        let state = gp_fit(&obs, &cfg).unwrap();
        assert_eq!(state.jitter(), 0.0);
        for &(a, y) in &obs {
            let (m, v) = gp_posterior(&state, a);
            assert!((m - y).abs() <= 1e-9, "mean {m} vs {y}");
            assert!(v <= 1e-9);
        }
    }
}

#[test]
fn permutation_invariance() {
    let cfg = GpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let obs = random_observations(&mut rng, 20);
    let mut shuffled = obs.clone();
    shuffled.reverse();
    shuffled.swap(3, 11);
    let a = gp_fit(&obs, &cfg).unwrap();
    let b = gp_fit(&shuffled, &cfg).unwrap();
    for i in 0..72 {
        let q = AngleDeg::new(-180.0 + 5.0 * i as f64);
        let (ma, va) = gp_posterior(&a, q);
        let (mb, vb) = gp_posterior(&b, q);
        assert!((ma - mb).abs() <= 1e-9 && (va - vb).abs() <= 1e-9);
    }
}

#[test]
fn ei_is_never_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100_000 {
        let mean = rng.random_range(-2.0..2.0);
        let std = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..2.0f64).powi(3) };
        let best = rng.random_range(-2.0..2.0);
        let xi = rng.random_range(0.0..0.1);
        let ei = expected_improvement(mean, std, best, xi);
        assert!(ei >= 0.0 && ei.is_finite(), "EI({mean}, {std}, {best}, {xi}) = {ei}");
    }
}

/// Smooth bowl with its minimum at `center`.
fn bowl(center: AngleDeg) -> impl Fn(AngleDeg) -> Result<f64, Infallible> {
    move |a| {
        let d = wrapped_distance(a, center);
        Ok(1.0 - (-(d * d) / (2.0 * 20.0 * 20.0)).exp())
    }
}

#[test]
fn bo_finds_exhaustive_argmin() {
    // Threshold 0 keeps BO searching until it hits the exact minimum, so
    // success is measured against the grid argmin rather than "good enough".
    let bo = BoConfig {
        threshold: 0.0,
        ..BoConfig::default()
    };
    let gp = GpConfig::default();
    let grid = bo.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    for _ in 0..100 {
        let center = grid[rng.random_range(0..grid.len())];
        let f = bowl(center);
        let exhaustive = grid
            .iter()
            .map(|&a| (a, f(a).unwrap()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap()
            .0;
        let r = bo_minimize(&f, &bo, &gp).unwrap();
        assert!(r.trace.len() <= 30);
        assert_eq!(r.best_score, r.trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min));
        if wrapped_distance(r.theta_min, exhaustive) <= bo.spacing() + 1e-9 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_is_never_negative(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = random_observations(&mut rng, n);
        let state = gp_fit(&obs, &GpConfig::default()).unwrap();
        for q in BoConfig::default().grid() {
            let (m, v) = gp_posterior(&state, q);
            prop_assert!(v >= 0.0 && m.is_finite());
        }
    }

    #[test]
    fn bo_never_repeats_or_overspends(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase: f64 = rng.random_range(0.0..6.3);
        let freq = rng.random_range(1..4) as f64;
        let f = |a: AngleDeg| Ok::<_, Infallible>(0.5 + 0.4 * (freq * a.radians() + phase).sin());
        let r = bo_minimize(f, &BoConfig::default(), &GpConfig::default()).unwrap();
        prop_assert!(r.trace.len() <= 30);
        let mut angles: Vec<f64> = r.trace.iter().map(|t| t.0.degrees()).collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup();
        prop_assert_eq!(angles.len(), r.trace.len());
        prop_assert!(r.trace.iter().any(|t| t.0 == r.theta_min && t.1 == r.best_score));
    }
}
