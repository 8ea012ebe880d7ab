use collapsim_core::ensemble::run_streams;
use collapsim_core::ruin::{evolve_diffusion, play_game, ruin_probability, DensityProfile, GameConfig, Player};
use collapsim_core::stats::{binomial_sigma, summarize};
use collapsim_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Absorption probabilities of the fair walk on `0..=n` from the fundamental
/// matrix of the transient block: `B = (I - Q)⁻¹ R`.
fn markov_chain_win(k: usize, n: usize) -> f64 {
    let m = n - 1;
    let mut q = DMatrix::<f64>::zeros(m, m);
    let mut r = DVector::<f64>::zeros(m);
    for i in 0..m {
        if i > 0 {
            q[(i, i - 1)] = 0.5;
        }
        if i + 1 < m {
            q[(i, i + 1)] = 0.5;
        } else {
            r[i] = 0.5;
        }
    }
    let a = DMatrix::<f64>::identity(m, m) - q;
    let b = a.lu().solve(&r).unwrap();
    b[k - 1]
}

#[test]
fn thirty_percent_of_games_go_to_l() {
    let cfg = GameConfig::ruin(0.3, 0.01);
    let m = 10_000;
    let wins = run_streams(101, m, |_, rng| play_game(&cfg, rng).unwrap().winner == Some(Player::L));
    let f = wins.iter().filter(|w| **w).count() as f64 / m as f64;
    assert!((f - 0.3).abs() <= 0.014, "{f}");
}

#[test]
fn linear_solve_matches_absorbing_chain() {
    let p = ruin_probability(0.07, 0.005).unwrap();
    let oracle = markov_chain_win(14, 200);
    assert!((p - oracle).abs() < 1e-12, "{p} vs {oracle}");
    assert!((p - 0.07).abs() < 1e-12);
}

#[test]
fn monte_carlo_agrees_with_linear_solve() {
    for (k, &stake) in [0.01, 0.05, 0.1].iter().enumerate() {
        let x0 = 0.3;
        let cfg = GameConfig::ruin(x0, stake);
        let m = 4000;
        let wins = run_streams(200 + k as u64, m, |_, rng| play_game(&cfg, rng).unwrap().winner == Some(Player::L));
        let f = wins.iter().filter(|w| **w).count() as f64 / m as f64;
        let p = ruin_probability(x0, stake).unwrap();
        assert!((f - p).abs() <= 4.0 * binomial_sigma(p, m), "stake {stake}: {f} vs {p}");
    }
}

#[test]
fn fraction_is_a_martingale() {
    let cfg = GameConfig::ruin(0.3, 0.05).recorded();
    let m = 4000;
    let paths = run_streams(7, m, |_, rng| play_game(&cfg, rng).unwrap().fractions());
    for &step in &[1usize, 10, 50, 200, 1000] {
        // absorbed games stay where they ended
        let xs: Vec<f64> = paths.iter().map(|p| p[step.min(p.len() - 1)]).collect();
        let s = summarize(&xs);
        assert!((s.mean - 0.3).abs() <= 4.0 * s.stderr, "step {step}: {} ± {}", s.mean, s.stderr);
    }
}

#[test]
fn never_ending_game_stays_inside() {
    let cfg = GameConfig::never_ending(0.3, 0.01, 20_000).recorded();
    for seed in 0..5 {
        let g = play_game(&cfg, &mut collapsim_core::RngStream::new(seed, 0)).unwrap();
        assert!(g.winner.is_none());
        assert!(g.trajectory.iter().all(|p| p.ln_tail().is_finite() && p.ln_tail() < 0.0));
    }
}

#[test]
fn moment_decay_r1() {
    let p = DensityProfile::delta(400, 1.0, 1, 0.3).unwrap();
    let dt = p.stability_bound();
    let steps = (1.0 / dt).ceil();
    let q = evolve_diffusion(&p, 1.0 / steps, 1.0).unwrap();
    assert!((q.moment() / (0.21 * (-2.0f64).exp()) - 1.0).abs() < 0.01);
    assert!((q.moment() - 0.02842).abs() < 0.01 * 0.02842);
}

#[test]
fn r1_collapses_to_born_split() {
    let x0 = 0.3;
    let p = DensityProfile::delta(200, 1.0, 1, x0).unwrap();
    let dt = p.stability_bound();
    let steps = (6.0 / dt).ceil();
    let q = evolve_diffusion(&p, 6.0 / steps, 6.0).unwrap();
    let (b0, b1) = q.boundary_mass();
    assert!((b0 + b1 - 1.0).abs() < 0.01, "{}", b0 + b1);
    assert!((b0 - (1.0 - x0)).abs() < 0.01 && (b1 - x0).abs() < 0.01, "{b0} {b1}");
}

#[test]
fn r2_keeps_interior_mass() {
    let solve = |n: usize| {
        let p = DensityProfile::delta(n, 1.0, 2, 0.5).unwrap();
        let steps = (5.0 / p.stability_bound()).ceil();
        evolve_diffusion(&p, 5.0 / steps, 5.0).unwrap()
    };
    let coarse = solve(100);
    let fine = solve(400);
    let interior = coarse.mass_in(0.25, 0.75);
    let ends = coarse.mass_in(0.0, 0.25) + coarse.mass_in(0.75, 1.0);
    assert!(interior > 0.0 && ends > 0.9);
    assert!((interior / fine.mass_in(0.25, 0.75) - 1.0).abs() < 0.01);
    assert!(coarse.rho()[1..100].iter().all(|&m| m > 0.0));
}

#[test]
fn unstable_step_is_an_error() {
    let p = DensityProfile::delta(100, 2.0, 2, 0.5).unwrap();
    let b = p.stability_bound();
    assert!(matches!(evolve_diffusion(&p, 2.0 * b, 1.0), Err(Error::UnstableStep { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_solve_on_any_lattice(n in 2usize..300, frac in 0.0f64..1.0) {
        let stake = 1.0 / n as f64;
        let k = (frac * n as f64).floor() as usize;
        let x0 = k as f64 * stake;
        let p = ruin_probability(x0, stake).unwrap();
        prop_assert!((p - x0).abs() < 1e-12);
    }

    #[test]
    fn diffusion_conserves_mass_and_mean(
        masses in prop::collection::vec(0.0f64..1.0, 41),
        r in 1u32..4,
        lambda in 0.1f64..3.0,
    ) {
        let total: f64 = masses.iter().sum();
        prop_assume!(total > 0.1);
        let rho: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let p = DensityProfile::new(40, lambda, r, rho).unwrap();
        let (m0, x0) = (p.mass(), p.mean());
        let dt = p.stability_bound();
        let q = evolve_diffusion(&p, dt, 200.0 * dt).unwrap();
        prop_assert!((q.mass() - m0).abs() < 1e-12);
        prop_assert!((q.mean() - x0).abs() < 1e-12);
        prop_assert!(q.rho().iter().all(|&m| m >= 0.0));
    }
}
