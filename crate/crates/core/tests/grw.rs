use collapsim_core::ensemble::run_streams;
use collapsim_core::grw::{
    apply_hit, mean_collapse_time, sample_hit, simulate_pointer, total_hit_rate, Branch, CenterSampler, GrwParams,
    PointerModel,
};
use collapsim_core::stats::{binomial_sigma, ks_critical, ks_two_sample, summarize};
use collapsim_core::{Grid1D, Packet, RngStream, WaveFunction};
use num_complex::Complex64;
use proptest::prelude::*;

fn unit() -> GrwParams {
    GrwParams::new(1.0, 1.0).unwrap()
}

fn two_packets(width: f64, weights: (f64, f64)) -> WaveFunction {
    let g = Grid1D::spanning(-3.0, 13.0, 3200).unwrap();
    WaveFunction::packets(g, &[Packet::new(0.0, width, weights.0), Packet::new(10.0, width, weights.1)]).unwrap()
}

/// `Σ_{x in half} |ψ(x) e^{-(x-c)²/2a²}|²`, computed directly on the grid.
fn hit_weight(psi: &WaveFunction, c: f64, a: f64, right_half: bool) -> f64 {
    let g = psi.grid();
    (0..g.n_cells())
        .filter(|&i| (g.center(i) > 5.0) == right_half)
        .map(|i| psi.amp(i).norm_sqr() * (-(g.center(i) - c).powi(2) / (a * a)).exp())
        .sum()
}

#[test]
fn hit_on_left_peak_suppresses_right_packet() {
    let width = 0.01;
    let psi = two_packets(width, (0.5, 0.5));
    let out = apply_hit(&psi, 0.0, &unit()).unwrap();
    let g = *psi.grid();
    let left = out.state.weight_in(0..g.cell_of(5.0).unwrap());
    let right = out.state.weight_in(g.cell_of(5.0).unwrap()..g.n_cells());
    let oracle = hit_weight(&psi, 0.0, 1.0, true) / hit_weight(&psi, 0.0, 1.0, false);
    assert!(((right / left).ln() - oracle.ln()).abs() < 1e-9);
    // e^{-l²/(a² + 2σ²)} for Gaussian packets of spread σ
    let closed = -100.0 / (1.0 + 2.0 * width * width);
    assert!(((right / left).ln() - closed).abs() < 1e-6);
    assert!(((right / left).ln() + 100.0).abs() < 100.0 * 3.0 * width * width);
}

#[test]
fn off_center_hit_boosts_left() {
    let psi = two_packets(0.01, (0.5, 0.5));
    let out = apply_hit(&psi, 0.1, &unit()).unwrap();
    let g = *psi.grid();
    let mid = g.cell_of(5.0).unwrap();
    let left = out.state.weight_in(0..mid);
    let right = out.state.weight_in(mid..g.n_cells());
    assert!(left > 0.5 && right < 1e-20 && right > 0.0, "{left} {right}");
    assert!(out.norm_sq > 0.0);
}

#[test]
fn pre_normalization_norm_is_hit_density() {
    let psi = two_packets(0.2, (0.3, 0.7));
    let p = unit();
    let out = apply_hit(&psi, 0.4, &p).unwrap();
    let direct: f64 = (0..psi.grid().n_cells())
        .map(|i| (psi.amp(i) * p.hit_factor(psi.grid().center(i) - 0.4)).norm_sqr())
        .sum::<f64>()
        * psi.grid().dx();
    assert!((out.norm_sq / direct - 1.0).abs() < 1e-12);
}

#[test]
fn center_distribution_of_narrow_packet() {
    let g = Grid1D::spanning(-4.0, 4.0, 160).unwrap();
    let psi = WaveFunction::gaussian_packet(g, 0.3, 0.02).unwrap();
    let sampler = CenterSampler::new(&psi, &unit()).unwrap();
    let mut rng = RngStream::new(5, 0);
    let cs: Vec<f64> = (0..100_000).map(|_| sampler.sample(&mut rng)).collect();
    let s = summarize(&cs);
    let var = s.std_dev * s.std_dev;
    assert!((s.mean - 0.3).abs() < 4.0 * s.stderr, "{}", s.mean);
    // a²/2 plus the packet spread, the discretized packet and the uniform in-cell placement
    let dx = g.dx();
    let expect = 0.5 + psi.density().iter().enumerate().map(|(i, r)| r * dx * (g.center(i) - 0.3).powi(2)).sum::<f64>() + dx * dx / 12.0;
    assert!((var / expect - 1.0).abs() < 0.02, "{var} vs {expect}");
}

#[test]
fn center_histogram_matches_hit_density() {
    let g = Grid1D::spanning(-4.0, 6.0, 100).unwrap();
    let psi = WaveFunction::packets(g, &[Packet::new(-1.0, 0.3, 0.4), Packet::new(2.5, 0.6, 0.6)]).unwrap();
    let p = unit();
    let sampler = CenterSampler::new(&psi, &p).unwrap();
    let mut rng = RngStream::new(8, 1);
    let n = 100_000;
    let drawn: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    // oracle: N²(c) is the mixture Σ_i |ψ_i|²dx · Normal(x_i, a²/2)
    let rho: Vec<f64> = psi.density().iter().map(|r| r * g.dx()).collect();
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    for r in &rho {
        acc += r;
        cdf.push(acc);
    }
    let mut orng = RngStream::new(8, 2);
    let oracle: Vec<f64> = (0..n)
        .map(|_| {
            let u = orng.uniform() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(rho.len() - 1);
            g.center(i) + std::f64::consts::FRAC_1_SQRT_2 * orng.standard_normal()
        })
        .collect();
    let d = ks_two_sample(&drawn, &oracle);
    assert!(d < ks_critical(1e-3, n as f64, n as f64), "{d}");
}

#[test]
fn hit_rate_does_not_depend_on_shape() {
    let p = GrwParams::new(0.5, 3.0).unwrap();
    let g = Grid1D::spanning(-5.0, 5.0, 120).unwrap();
    let mut rng = RngStream::new(12, 0);
    for _ in 0..5 {
        let amps = (0..120).map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal())).collect();
        let psi = WaveFunction::one_particle(g, amps).unwrap().normalize().unwrap();
        assert!((total_hit_rate(&psi, &p).unwrap() - 3.0).abs() < 3e-6);
    }
}

#[test]
fn thousand_hits_in_a_million_steps() {
    let g = Grid1D::spanning(-3.0, 3.0, 24).unwrap();
    let psi = WaveFunction::gaussian_packet(g, 0.0, 0.5).unwrap();
    let p = unit();
    let mut rng = RngStream::new(3, 3);
    let mut hits = Vec::new();
    for k in 0..1_000_000u64 {
        if let Some(h) = sample_hit(&psi, &p, k as f64 * 1e-3, 1e-3, &mut rng).unwrap() {
            hits.push(h);
        }
    }
    assert!((hits.len() as f64 - 1000.0).abs() <= 95.0, "{}", hits.len());
    let pad = 5.0 + g.dx();
    assert!(hits.iter().all(|h| h.time >= 0.0 && h.center > -3.0 - pad && h.center < 3.0 + pad));
}

#[test]
fn single_particle_collapse_time() {
    let pm = PointerModel {
        n: 1.0,
        branch_separation: 10.0,
        branch_weights: (0.5, 0.5),
    };
    let m = 10_000;
    let times = run_streams(21, m, |_, rng| simulate_pointer(&pm, &unit(), rng).unwrap().collapse_time);
    let s = summarize(&times);
    assert!((s.mean - 1.0).abs() <= 3.0 / (m as f64).sqrt(), "{}", s.mean);
}

#[test]
fn macroscopic_pointer_collapse_time() {
    let p = GrwParams::standard();
    assert!((mean_collapse_time(1e23, p.lambda) / 1e-7 - 1.0).abs() < 1e-12);
    let pm = PointerModel {
        n: 1e23,
        branch_separation: 1e-3,
        branch_weights: (0.5, 0.5),
    };
    let run = simulate_pointer(&pm, &p, &mut RngStream::new(1, 1)).unwrap();
    assert!(run.collapse_time > 0.0 && run.collapse_time < 1e-4);
}

#[test]
fn pointer_outcomes_follow_branch_weights() {
    let pm = PointerModel {
        n: 10.0,
        branch_separation: 12.0,
        branch_weights: (0.3, 0.7),
    };
    let m = 10_000;
    let runs = run_streams(33, m, |_, rng| simulate_pointer(&pm, &unit(), rng).unwrap());
    let left = runs.iter().filter(|r| r.outcome == Branch::Left).count() as f64 / m as f64;
    assert!((left - 0.3).abs() <= 4.0 * binomial_sigma(0.3, m));
    assert!(runs.iter().all(|r| r.state.ln_tail().is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hits_never_zero_a_representable_amplitude(
        mags in prop::collection::vec(1e-30f64..1.0, 64),
        center in -2.0f64..2.0,
    ) {
        let g = Grid1D::spanning(-2.0, 2.0, 64).unwrap();
        let p = GrwParams::new(0.5, 1.0).unwrap();
        let psi = WaveFunction::one_particle(g, mags.iter().map(|m| Complex64::new(*m, 0.0)).collect()).unwrap().normalize().unwrap();
        let out = apply_hit(&psi, center, &p).unwrap();
        prop_assert!(out.state.amplitudes().iter().all(|a| a.norm() > 0.0));
        prop_assert!((out.state.norm_sq() - 1.0).abs() < 1e-12);
    }
}
