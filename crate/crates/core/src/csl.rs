//! Continuous spontaneous localization.
//!
//! A classical field `w(z, t)` drives the linear evolution
//! `dψ/dt = -(1/4λ)∫dz [w(z) - 2λA(z)]² ψ`, and the field itself is drawn
//! with probability `Dw ⟨ψ|ψ⟩_w`. Two equivalent ways of generating physical
//! trajectories are provided:
//!
//! * linear mode: `w` comes from the zero-mean raw measure (white noise of
//!   covariance `λδ(z-z')δ(t-t')`) and each trajectory carries the weight
//!   `exp(log_norm) = ⟨ψ|ψ⟩_w`;
//! * cooked mode: `w` is sampled directly from the physical law, Gaussian with
//!   mean `2λ⟨A⟩` and the raw variance, and states are renormalized each step.
//!
//! The factor `exp(-dt w²/4λ)` common to every component is absorbed into the
//! raw measure, so `log_norm` is a likelihood ratio with unit mean.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::ensemble::run_streams;
use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::grid::Grid1D;
use crate::grw::GrwParams;
use crate::noise::{NoiseChannel, NoiseField, NoiseSpec};
use crate::rng::{derive_seed, RngStream};
use crate::ruin::{evolve_diffusion, DensityProfile};
use crate::stats::{effective_sample_size, ks_critical, ks_weighted, summarize, weighted_moments};
use crate::time::{step_count, uniform_steps};
use crate::two_state::TwoStateVector;
use crate::wavefunction::{Sector, WaveFunction};

/// Accuracy bound: `dt ≤ STEP_BOUND / (λ·range²)`.
pub const STEP_BOUND: f64 = 1e-2;
/// Kernel and noise-grid padding, in widths `a`.
pub const KERNEL_PAD_WIDTHS: f64 = 6.0;
/// Nodes of the diffusion grid used by [`diffusion_correspondence`].
pub const CORRESPONDENCE_NODES: usize = 400;

/// Collapse-driving operator with eigenvalues `a_L`, `a_R` on a two-state system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateCslParams {
    pub lambda: f64,
    pub a_l: f64,
    pub a_r: f64,
}

impl TwoStateCslParams {
    pub fn new(lambda: f64, a_l: f64, a_r: f64) -> Result<Self> {
        require_nonnegative("lambda", lambda)?;
        if !a_l.is_finite() || !a_r.is_finite() {
            return Err(invalid("a_l", "eigenvalues must be finite"));
        }
        if a_l == a_r {
            return Err(invalid("a_r", "eigenvalues must differ"));
        }
        Ok(Self { lambda, a_l, a_r })
    }

    /// Eigenvalues `±1/√2`, so that `(a_L - a_R)² = 2` and `Γ = λ`.
    pub fn standard(lambda: f64) -> Result<Self> {
        Self::new(lambda, std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Eigenvalues `±√Δ²/2` for a given squared separation `Δ²`.
    pub fn from_separation_sq(lambda: f64, delta_sq: f64) -> Result<Self> {
        require_positive("delta_sq", delta_sq)?;
        let h = 0.5 * delta_sq.sqrt();
        Self::new(lambda, h, -h)
    }

    pub fn separation_sq(&self) -> f64 {
        (self.a_l - self.a_r).powi(2)
    }

    /// Coherence decay rate `Γ = (λ/2)(a_L - a_R)²`.
    pub fn decoherence_rate(&self) -> f64 {
        0.5 * self.lambda * self.separation_sq()
    }

    /// Rate `2λ(a_L - a_R)² = 4Γ` in `∂ρ/∂t = λ_d ∂²[x(1-x)]²ρ` obeyed by `x = |c_L|²`.
    pub fn generator_rate(&self) -> f64 {
        2.0 * self.lambda * self.separation_sq()
    }

    pub fn step_bound(&self) -> f64 {
        STEP_BOUND / (self.lambda * self.separation_sq())
    }

    fn mean_a(&self, s: &TwoStateVector) -> f64 {
        let x = s.fraction_left();
        x * self.a_l + (1.0 - x) * self.a_r
    }

    /// One step with the field held at `w`; returns the renormalized state and
    /// the log of the squared norm it had before renormalizing.
    fn linear_step(&self, s: &TwoStateVector, w: f64, dt: f64) -> (TwoStateVector, f64) {
        let lam = self.lambda;
        let next = s.scaled(
            (self.a_l * w - lam * self.a_l * self.a_l) * dt,
            (self.a_r * w - lam * self.a_r * self.a_r) * dt,
        );
        let ln = next.ln_norm_sq();
        (next.normalized(), ln)
    }

    /// Cooked step with midpoint drift: the raw deviate is drawn once and the
    /// drift `2λ⟨A⟩` is averaged over the start and a predicted end state.
    fn cooked_step(&self, s: &TwoStateVector, dt: f64, rng: &mut RngStream) -> (TwoStateVector, f64, f64) {
        let xi = (self.lambda / dt).sqrt() * rng.standard_normal();
        let a0 = self.mean_a(s);
        let (pred, _) = self.linear_step(s, 2.0 * self.lambda * a0 + xi, dt);
        let a1 = self.mean_a(&pred);
        let w = self.lambda * (a0 + a1) + xi;
        let (next, ln) = self.linear_step(s, w, dt);
        (next, ln, w)
    }
}

/// How the field is obtained.
#[derive(Debug)]
pub enum CslMode<'a> {
    /// Sample the physical law step by step.
    Cooked(&'a mut RngStream),
    /// Evolve linearly under a given realization (sample-and-hold in time).
    Linear(&'a NoiseField),
}

/// What to keep along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recording {
    /// Record every `every`-th step; the initial and final states are always kept.
    pub every: usize,
    /// Keep the field realization that drove the run.
    pub keep_noise: bool,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            every: 1,
            keep_noise: false,
        }
    }
}

impl Recording {
    pub fn every(every: usize) -> Self {
        Self {
            every: every.max(1),
            keep_noise: false,
        }
    }

    pub fn ends_only() -> Self {
        Self::every(usize::MAX)
    }

    fn wants(&self, k: usize, n_steps: usize) -> bool {
        k == n_steps || k.is_multiple_of(self.every)
    }
}

/// Recorded states with the cumulative linear log-norm at each recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct CslTrajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub noise: Option<NoiseField>,
    /// `ln ⟨ψ,t|ψ,t⟩_w` of the unnormalized linear evolution.
    pub log_norm: Vec<f64>,
}

impl<S> CslTrajectory<S> {
    fn start(s: S) -> Self {
        Self {
            times: vec![0.0],
            states: vec![s],
            noise: None,
            log_norm: vec![0.0],
        }
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("trajectories hold the initial state")
    }
}

impl CslTrajectory<TwoStateVector> {
    pub fn fractions(&self) -> Vec<f64> {
        self.states.iter().map(TwoStateVector::fraction_left).collect()
    }

    /// `min_t ln min(x, 1-x)` over the recorded states.
    pub fn min_ln_tail(&self) -> f64 {
        self.states.iter().map(TwoStateVector::ln_tail).fold(f64::INFINITY, f64::min)
    }
}

fn check_coverage(noise: &NoiseField, t_end: f64) -> Result<()> {
    let span = noise.dt() * noise.n_steps() as f64;
    if span < t_end * (1.0 - 1e-9) {
        return Err(invalid("noise", format!("realization covers {span}, need {t_end}")));
    }
    Ok(())
}

/// Evolves a two-state system from `c0` to `t_end` in steps of `dt`.
pub fn evolve_two_state(
    c0: TwoStateVector,
    p: &TwoStateCslParams,
    dt: f64,
    t_end: f64,
    mode: CslMode<'_>,
    rec: Recording,
) -> Result<CslTrajectory<TwoStateVector>> {
    require_positive("dt", dt)?;
    let bound = p.step_bound();
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let (n_steps, dt) = step_count(dt, t_end)?;
    if let CslMode::Linear(noise) = &mode {
        if noise.spec().channel != NoiseChannel::Scalar {
            return Err(invalid("noise", "two-state evolution needs the scalar channel"));
        }
        check_coverage(noise, t_end)?;
    }
    let mut traj = CslTrajectory::start(c0.normalized());
    let mut used = Vec::new();
    let mut s = c0.normalized();
    let mut log_norm = c0.ln_norm_sq();
    traj.log_norm[0] = log_norm;
    let mut mode = mode;
    for k in 1..=n_steps {
        let t0 = (k - 1) as f64 * dt;
        let (next, ln, w) = match &mut mode {
            CslMode::Cooked(rng) => p.cooked_step(&s, dt, rng),
            CslMode::Linear(noise) => {
                let w = noise.step_at(t0 + 0.5 * dt)[0];
                let (next, ln) = p.linear_step(&s, w, dt);
                (next, ln, w)
            }
        };
        s = next;
        log_norm += ln;
        if rec.keep_noise {
            used.push(w);
        }
        if rec.wants(k, n_steps) {
            traj.times.push(k as f64 * dt);
            traj.states.push(s);
            traj.log_norm.push(log_norm);
        }
    }
    if rec.keep_noise {
        let spec = NoiseSpec::scalar(p.lambda, dt, n_steps);
        traj.noise = Some(NoiseField::from_values(spec, used)?);
    }
    Ok(traj)
}

/// Smeared number operator `A(z) = ∫dx G(x - z) ξ†(x)ξ(x)` on a grid, with
/// `G(d) = (πa²)^{-1/4} e^{-d²/2a²}`.
///
/// Centers `z` range over the particle grid padded by `6a`; the kernel is cut
/// at the same radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SmearedOperator {
    grid: Grid1D,
    noise_grid: Grid1D,
    a: f64,
    pad: usize,
    kernel: Vec<f64>,
    self_overlap: Vec<f64>,
}

impl SmearedOperator {
    pub fn new(grid: Grid1D, a: f64) -> Result<Self> {
        require_positive("a", a)?;
        let max_dx = a / 4.0;
        if grid.dx() > max_dx {
            return Err(Error::GridTooCoarse { dx: grid.dx(), max_dx });
        }
        let dx = grid.dx();
        let pad = (KERNEL_PAD_WIDTHS * a / dx).ceil() as usize;
        let norm = (std::f64::consts::PI * a * a).powf(-0.25);
        let kernel: Vec<f64> = (0..=pad)
            .map(|k| {
                let d = k as f64 * dx;
                norm * (-d * d / (2.0 * a * a)).exp()
            })
            .collect();
        let s: f64 = dx * (kernel[0].powi(2) + 2.0 * kernel[1..].iter().map(|g| g * g).sum::<f64>());
        Ok(Self {
            grid,
            noise_grid: grid.extended(pad),
            a,
            pad,
            kernel,
            self_overlap: vec![s; grid.n_cells()],
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Grid of field cells `z`.
    pub fn noise_grid(&self) -> &Grid1D {
        &self.noise_grid
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `G` between particle cell `i` and field cell `z`.
    pub fn weight(&self, i: usize, z: usize) -> f64 {
        let d = (i + self.pad).abs_diff(z);
        if d <= self.pad {
            self.kernel[d]
        } else {
            0.0
        }
    }

    /// `S(x_i) = Σ_z dz G(x_i - z)²`, the discrete `∫A(z)²dz` on one particle.
    pub fn self_overlap(&self, i: usize) -> f64 {
        self.self_overlap[i]
    }

    /// `Φ(x_i, x_j) = Σ_z dz G(x_i - z) G(x_j - z)`.
    pub fn overlap(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        if d > 2 * self.pad {
            return 0.0;
        }
        let dx = self.grid.dx();
        let lo = i.max(j);
        let hi = i.min(j) + 2 * self.pad;
        // field cells within reach of both particles
        (lo..=hi).map(|z| self.weight(i, z) * self.weight(j, z)).sum::<f64>() * dx
    }

    /// `2 max S`, an upper bound of `Σ_z dz [A_L(z) - A_R(z)]²` over pairs of states.
    pub fn spectral_range_sq(&self) -> f64 {
        2.0 * self.self_overlap.iter().cloned().fold(0.0, f64::max)
    }

    pub fn step_bound(&self, lambda: f64) -> f64 {
        STEP_BOUND / (lambda * self.spectral_range_sq())
    }

    /// `⟨A(z)⟩ = Σ_i dx |ψ_i|² G(x_i - z)` for every field cell, for a normalized one-particle ψ.
    pub fn expectations(&self, density: &[f64]) -> Vec<f64> {
        let dx = self.grid.dx();
        let mut out = vec![0.0; self.noise_grid.n_cells()];
        for (i, r) in density.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let w = r * dx;
            let mid = i + self.pad;
            out[mid] += w * self.kernel[0];
            for k in 1..=self.pad {
                out[mid - k] += w * self.kernel[k];
                out[mid + k] += w * self.kernel[k];
            }
        }
        out
    }

    /// `B(x_i) = Σ_z dz w(z) G(x_i - z)` for every particle cell.
    pub fn smear(&self, w: &[f64]) -> Vec<f64> {
        let dx = self.grid.dx();
        (0..self.grid.n_cells())
            .map(|i| {
                let mid = i + self.pad;
                let mut acc = w[mid] * self.kernel[0];
                for k in 1..=self.pad {
                    acc += (w[mid - k] + w[mid + k]) * self.kernel[k];
                }
                acc * dx
            })
            .collect()
    }

    /// `Σ_z dz [⟨A(z)⟩_L - ⟨A(z)⟩_R]²` for two one-particle states: the squared
    /// eigenvalue separation of the equivalent two-state system. Each state is
    /// normalized first.
    pub fn effective_separation_sq(&self, left: &WaveFunction, right: &WaveFunction) -> Result<f64> {
        let al = self.expectations(&left.normalize()?.density());
        let ar = self.expectations(&right.normalize()?.density());
        Ok(al.iter().zip(&ar).map(|(l, r)| (l - r).powi(2)).sum::<f64>() * self.noise_grid.dx())
    }
}

/// Two-state parameters equivalent to a superposition of the packets `left` and `right`.
pub fn effective_two_state(
    op: &SmearedOperator,
    lambda: f64,
    left: &WaveFunction,
    right: &WaveFunction,
) -> Result<TwoStateCslParams> {
    TwoStateCslParams::from_separation_sq(lambda, op.effective_separation_sq(left, right)?)
}

fn one_particle_step(
    op: &SmearedOperator,
    lambda: f64,
    psi: &WaveFunction,
    w: &[f64],
    dt: f64,
) -> Result<(WaveFunction, f64)> {
    let b = op.smear(w);
    let amps: Vec<Complex64> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| a * ((b[i] - lambda * op.self_overlap(i)) * dt).exp())
        .collect();
    let next = psi.with_amplitudes(amps);
    let ln = next.norm_sq().ln();
    Ok((next.normalize()?, ln))
}

/// Evolves a one-particle state under the smeared-operator field. Linear mode
/// needs a realization on [`SmearedOperator::noise_grid`].
pub fn evolve_1d(
    psi0: &WaveFunction,
    params: &GrwParams,
    dt: f64,
    t_end: f64,
    mode: CslMode<'_>,
    rec: Recording,
) -> Result<CslTrajectory<WaveFunction>> {
    if psi0.sector() != Sector::One {
        return Err(invalid("psi0", "expected a one-particle state"));
    }
    require_positive("dt", dt)?;
    let op = SmearedOperator::new(*psi0.grid(), params.a)?;
    let lambda = params.lambda;
    let bound = op.step_bound(lambda);
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let (n_steps, dt) = step_count(dt, t_end)?;
    let cells = op.noise_grid().n_cells();
    if let CslMode::Linear(noise) = &mode {
        if noise.spec().channel != NoiseChannel::Field(*op.noise_grid()) {
            return Err(invalid("noise", "realization must live on the operator's field grid"));
        }
        check_coverage(noise, t_end)?;
    }
    let mut s = psi0.normalize()?;
    let mut log_norm = psi0.norm_sq().ln();
    let mut traj = CslTrajectory::start(s.clone());
    traj.log_norm[0] = log_norm;
    let mut used = Vec::new();
    let sd = (lambda / (op.noise_grid().dx() * dt)).sqrt();
    let mut mode = mode;
    for k in 1..=n_steps {
        let t0 = (k - 1) as f64 * dt;
        let w: Vec<f64> = match &mut mode {
            CslMode::Cooked(rng) => {
                let xi: Vec<f64> = (0..cells).map(|_| sd * rng.standard_normal()).collect();
                let a0 = op.expectations(&s.density());
                let pred: Vec<f64> = a0.iter().zip(&xi).map(|(a, x)| 2.0 * lambda * a + x).collect();
                let (mid, _) = one_particle_step(&op, lambda, &s, &pred, dt)?;
                let a1 = op.expectations(&mid.density());
                a0.iter().zip(&a1).zip(&xi).map(|((a, b), x)| lambda * (a + b) + x).collect()
            }
            CslMode::Linear(noise) => noise.step_at(t0 + 0.5 * dt).to_vec(),
        };
        let (next, ln) = one_particle_step(&op, lambda, &s, &w, dt)?;
        s = next;
        log_norm += ln;
        if rec.keep_noise {
            used.extend_from_slice(&w);
        }
        if rec.wants(k, n_steps) {
            traj.times.push(k as f64 * dt);
            traj.states.push(s.clone());
            traj.log_norm.push(log_norm);
        }
    }
    if rec.keep_noise {
        let spec = NoiseSpec::field(*op.noise_grid(), lambda, dt, n_steps);
        traj.noise = Some(NoiseField::from_values(spec, used)?);
    }
    Ok(traj)
}

/// Tuning of [`importance_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceOptions {
    /// Independent groups of raw trajectories; standard errors come from the spread of group estimates.
    pub batches: usize,
    /// Resample a group whenever its effective sample size drops below this
    /// fraction of its size. `None` gives plain importance weighting.
    pub resample_below: Option<f64>,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        Self {
            batches: 20,
            resample_below: Some(0.5),
        }
    }
}

/// Comparison of norm-weighted raw trajectories with cooked ones at `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub m: usize,
    pub gamma_t: f64,
    /// Effective sample size of the final weights: pooled over all trajectories
    /// without resampling, summed over groups with it.
    pub ess: f64,
    pub resamplings: usize,
    /// Estimate of `E_raw[⟨ψ|ψ⟩_w]`, which must be 1.
    pub norm_estimate: f64,
    pub norm_estimate_se: f64,
    pub weighted_mean: f64,
    pub weighted_mean_se: f64,
    pub weighted_second: f64,
    pub weighted_second_se: f64,
    pub weighted_born: f64,
    pub weighted_born_se: f64,
    pub cooked_mean: f64,
    pub cooked_mean_se: f64,
    pub cooked_second: f64,
    pub cooked_second_se: f64,
    pub cooked_born: f64,
    pub cooked_born_se: f64,
    pub ks_distance: f64,
    /// KS critical distance at significance 10⁻³ with the raw side counted by its ESS.
    pub ks_critical: f64,
    /// Smallest `ln min(x, 1-x)` seen at `t_end` on either side.
    pub min_ln_tail: f64,
}

fn z_score(d: f64, se1: f64, se2: f64) -> f64 {
    let se = (se1 * se1 + se2 * se2).sqrt();
    // identical up to roundoff, as in deterministic runs where both errors vanish
    if d.abs() <= 1e-12 {
        0.0
    } else {
        d.abs() / se
    }
}

impl DivergenceReport {
    pub fn mean_z(&self) -> f64 {
        z_score(self.weighted_mean - self.cooked_mean, self.weighted_mean_se, self.cooked_mean_se)
    }

    pub fn second_z(&self) -> f64 {
        z_score(self.weighted_second - self.cooked_second, self.weighted_second_se, self.cooked_second_se)
    }

    pub fn born_z(&self) -> f64 {
        z_score(self.weighted_born - self.cooked_born, self.weighted_born_se, self.cooked_born_se)
    }

    /// First and second moments agree within `k` combined standard errors.
    pub fn moments_agree(&self, k: f64) -> bool {
        self.mean_z() <= k && self.second_z() <= k
    }
}

struct BatchResult {
    xs: Vec<f64>,
    /// Final weights relative to the largest one, which is `exp(top)`.
    weights: Vec<f64>,
    top: f64,
    ln_z: f64,
    resamplings: usize,
    min_ln_tail: f64,
}

/// Systematic resampling: indices of the parents of `n` offspring.
fn systematic_resample(weights: &[f64], rng: &mut RngStream) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let mut u = rng.uniform() * step;
    let mut out = Vec::with_capacity(n);
    let mut acc = weights[0];
    let mut j = 0;
    for _ in 0..n {
        while u >= acc && j + 1 < n {
            j += 1;
            acc += weights[j];
        }
        out.push(j);
        u += step;
    }
    out
}

fn run_raw_batch(
    b: usize,
    size: usize,
    x0: f64,
    p: &TwoStateCslParams,
    n_steps: usize,
    dt: f64,
    seed: u64,
    opts: &ImportanceOptions,
) -> Result<BatchResult> {
    let c0 = TwoStateVector::from_fraction(x0)?;
    let raw_seed = derive_seed(seed, 1);
    let mut streams: Vec<RngStream> = (0..size).map(|k| RngStream::new(raw_seed, (b * size + k) as u64)).collect();
    let mut resampler = RngStream::new(derive_seed(seed, 3), b as u64);
    let mut states = vec![c0; size];
    let mut logw = vec![0.0; size];
    let mut ln_z = 0.0;
    let mut resamplings = 0;
    let sd = (p.lambda / dt).sqrt();
    for _ in 0..n_steps {
        for ((s, lw), rng) in states.iter_mut().zip(logw.iter_mut()).zip(streams.iter_mut()) {
            let (next, ln) = p.linear_step(s, sd * rng.standard_normal(), dt);
            *s = next;
            *lw += ln;
        }
        if let Some(frac) = opts.resample_below {
            let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            if effective_sample_size(&w) < frac * size as f64 {
                ln_z += top + (w.iter().sum::<f64>() / size as f64).ln();
                let parents = systematic_resample(&w, &mut resampler);
                states = parents.iter().map(|&j| states[j]).collect();
                logw.iter_mut().for_each(|l| *l = 0.0);
                resamplings += 1;
            }
        }
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    ln_z += top + (weights.iter().sum::<f64>() / size as f64).ln();
    Ok(BatchResult {
        xs: states.iter().map(TwoStateVector::fraction_left).collect(),
        weights,
        top,
        ln_z,
        resamplings,
        min_ln_tail: states.iter().map(TwoStateVector::ln_tail).fold(f64::INFINITY, f64::min),
    })
}

/// Checks that raw-noise linear trajectories weighted by `⟨ψ|ψ⟩_w` reproduce the
/// cooked ensemble at `t_end`.
///
/// The `m` raw trajectories are split into `opts.batches` groups; within each
/// group the weights may be resampled sequentially, which leaves the weighted law
/// unchanged while keeping the weights from degenerating when `Γt` is large.
pub fn importance_check(
    x0: f64,
    p: &TwoStateCslParams,
    dt: f64,
    t_end: f64,
    m: usize,
    seed: u64,
    opts: ImportanceOptions,
) -> Result<DivergenceReport> {
    if m < 1000 {
        return Err(invalid("m", format!("need at least 1000 trajectories, got {m}")));
    }
    if opts.batches < 2 || !m.is_multiple_of(opts.batches) {
        return Err(invalid("batches", format!("{} groups must divide m = {m}", opts.batches)));
    }
    if let Some(f) = opts.resample_below {
        if !(0.0..=1.0).contains(&f) {
            return Err(invalid("resample_below", "must be a fraction"));
        }
    }
    TwoStateVector::from_fraction(x0)?;
    require_positive("dt", dt)?;
    let bound = p.step_bound();
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let (n_steps, dt) = step_count(dt, t_end)?;
    let size = m / opts.batches;
    let batches: Vec<BatchResult> = (0..opts.batches)
        .into_par_iter()
        .map(|b| run_raw_batch(b, size, x0, p, n_steps, dt, seed, &opts))
        .collect::<Result<_>>()?;
    let ess: f64 = if opts.resample_below.is_some() {
        batches.iter().map(|b| effective_sample_size(&b.weights)).sum()
    } else {
        // without resampling all weights share one scale, so pool them
        let top = batches.iter().map(|b| b.top).fold(f64::NEG_INFINITY, f64::max);
        let pooled: Vec<f64> = batches
            .iter()
            .flat_map(|b| b.weights.iter().map(move |w| w * (b.top - top).exp()))
            .collect();
        effective_sample_size(&pooled)
    };
    let min_ess = m as f64 / 100.0;
    if ess < min_ess {
        return Err(Error::DegenerateWeights { ess, min: min_ess });
    }
    let per_batch = |f: &dyn Fn(f64) -> f64| -> (f64, f64) {
        let est: Vec<f64> = batches
            .iter()
            .map(|b| {
                let fx: Vec<f64> = b.xs.iter().map(|&x| f(x)).collect();
                weighted_moments(&fx, &b.weights).0
            })
            .collect();
        let s = summarize(&est);
        (s.mean, s.stderr)
    };
    let (wm, wm_se) = per_batch(&|x| x);
    let (ws, ws_se) = per_batch(&|x| x * x);
    let (wb, wb_se) = per_batch(&|x| if x > 0.5 { 1.0 } else { 0.0 });
    let z = summarize(&batches.iter().map(|b| b.ln_z.exp()).collect::<Vec<_>>());

    let c0 = TwoStateVector::from_fraction(x0)?;
    let cooked: Vec<TwoStateVector> = run_streams(derive_seed(seed, 2), m, |_, rng| {
        let mut s = c0;
        for _ in 0..n_steps {
            s = p.cooked_step(&s, dt, rng).0;
        }
        s
    });
    let cx: Vec<f64> = cooked.iter().map(TwoStateVector::fraction_left).collect();
    let c1 = summarize(&cx);
    let c2 = summarize(&cx.iter().map(|x| x * x).collect::<Vec<_>>());
    let cb = summarize(&cx.iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect::<Vec<_>>());

    // pool the raw side with each group's weights normalized to its share
    let mut raw_x = Vec::with_capacity(m);
    let mut raw_w = Vec::with_capacity(m);
    for b in &batches {
        let s: f64 = b.weights.iter().sum();
        raw_x.extend_from_slice(&b.xs);
        raw_w.extend(b.weights.iter().map(|w| w / s));
    }
    let ks_distance = ks_weighted(&raw_x, &raw_w, &cx, &vec![1.0; m]);
    let min_ln_tail = batches
        .iter()
        .map(|b| b.min_ln_tail)
        .chain(cooked.iter().map(TwoStateVector::ln_tail))
        .fold(f64::INFINITY, f64::min);

    Ok(DivergenceReport {
        m,
        gamma_t: p.decoherence_rate() * t_end,
        ess,
        resamplings: batches.iter().map(|b| b.resamplings).sum(),
        norm_estimate: z.mean,
        norm_estimate_se: z.stderr,
        weighted_mean: wm,
        weighted_mean_se: wm_se,
        weighted_second: ws,
        weighted_second_se: ws_se,
        weighted_born: wb,
        weighted_born_se: wb_se,
        cooked_mean: c1.mean,
        cooked_mean_se: c1.stderr,
        cooked_second: c2.mean,
        cooked_second_se: c2.stderr,
        cooked_born: cb.mean,
        cooked_born_se: cb.stderr,
        ks_distance,
        ks_critical: ks_critical(1e-3, ess, m as f64),
        min_ln_tail,
    })
}

/// One checkpoint of [`diffusion_correspondence`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceRow {
    pub t: f64,
    pub sde_mean: f64,
    pub sde_mean_se: f64,
    /// `E[x(1-x)]` over the cooked ensemble.
    pub sde_moment: f64,
    pub sde_moment_se: f64,
    pub pde_mean: f64,
    /// `∫x(1-x)ρ` of the `r = 2` solve with the requested rate.
    pub pde_moment: f64,
    /// The same with the rate set to the generator rate `2λ(a_L - a_R)²`.
    pub pde_moment_at_generator: f64,
    /// `min ln min(x, 1-x)` over the ensemble.
    pub min_ln_tail: f64,
}

impl CorrespondenceRow {
    pub fn relative_gap(&self) -> f64 {
        (self.sde_moment - self.pde_moment).abs() / self.pde_moment
    }

    /// `|SDE - PDE| ≤ rel·PDE + k·SE`.
    pub fn agrees(&self, rel: f64, k: f64) -> bool {
        (self.sde_moment - self.pde_moment).abs() <= rel * self.pde_moment + k * self.sde_moment_se
    }

    pub fn agrees_at_generator(&self, rel: f64, k: f64) -> bool {
        (self.sde_moment - self.pde_moment_at_generator).abs()
            <= rel * self.pde_moment_at_generator + k * self.sde_moment_se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceReport {
    pub gamma: f64,
    pub lambda_diff: f64,
    /// Rate that best explains the ensemble moments: each `E[x(1-x)]` is mapped
    /// to the reduced time `τ` at which the unit-rate solve reaches it, and
    /// `τ ≈ λ_d t` is fitted through the origin.
    pub measured_lambda_diff: f64,
    pub sde_dt: f64,
    pub rows: Vec<CorrespondenceRow>,
}

/// Compares the cooked two-state ensemble of `x = |c_L|²` with the `r = 2`
/// diffusion equation at rate `lambda_diff` at each time in `times`.
pub fn diffusion_correspondence(
    p: &TwoStateCslParams,
    x0: f64,
    m: usize,
    times: &[f64],
    seed: u64,
    lambda_diff: f64,
) -> Result<CorrespondenceReport> {
    if m < 10_000 {
        return Err(invalid("m", format!("need at least 10000 trajectories, got {m}")));
    }
    require_positive("lambda_diff", lambda_diff)?;
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(invalid("times", "checkpoints must be positive and increasing"));
    }
    let c0 = TwoStateVector::from_fraction(x0)?;
    let max_dt = 0.1 * p.step_bound();
    let mut sde_dt = f64::INFINITY;
    let mut segments = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    for &t in times {
        let (n, dt) = uniform_steps(t - prev, max_dt);
        sde_dt = sde_dt.min(dt);
        segments.push((n, dt));
        prev = t;
    }
    let paths: Vec<Vec<TwoStateVector>> = run_streams(seed, m, |_, rng| {
        let mut s = c0;
        segments
            .iter()
            .map(|&(n, dt)| {
                for _ in 0..n {
                    s = p.cooked_step(&s, dt, rng).0;
                }
                s
            })
            .collect()
    });

    let pde = |rate: f64| -> Result<Vec<DensityProfile>> {
        let mut prof = DensityProfile::delta(CORRESPONDENCE_NODES, rate, 2, x0)?;
        let dt_max = prof.stability_bound();
        times
            .iter()
            .map(|&t| {
                let (_, dt) = uniform_steps(t - prof.time(), dt_max);
                prof = evolve_diffusion(&prof, dt, t)?;
                Ok(prof.clone())
            })
            .collect()
    };
    let main = pde(lambda_diff)?;
    let at_generator = pde(p.generator_rate())?;

    let rows: Vec<CorrespondenceRow> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = paths.iter().map(|path| path[k].fraction_left()).collect();
            let mean = summarize(&xs);
            let mom = summarize(&xs.iter().map(|x| x * (1.0 - x)).collect::<Vec<_>>());
            CorrespondenceRow {
                t,
                sde_mean: mean.mean,
                sde_mean_se: mean.stderr,
                sde_moment: mom.mean,
                sde_moment_se: mom.stderr,
                pde_mean: main[k].mean(),
                pde_moment: main[k].moment(),
                pde_moment_at_generator: at_generator[k].moment(),
                min_ln_tail: paths.iter().map(|path| path[k].ln_tail()).fold(f64::INFINITY, f64::min),
            }
        })
        .collect();

    let measured = fit_generator_rate(x0, &rows)?;
    Ok(CorrespondenceReport {
        gamma: p.decoherence_rate(),
        lambda_diff,
        measured_lambda_diff: measured,
        sde_dt,
        rows,
    })
}

/// The `r = 2` solution depends on `λ_d t` only, so one unit-rate solve inverts
/// the moment curve for every checkpoint.
fn fit_generator_rate(x0: f64, rows: &[CorrespondenceRow]) -> Result<f64> {
    let mut prof = DensityProfile::delta(CORRESPONDENCE_NODES, 1.0, 2, x0)?;
    let dt = prof.stability_bound();
    let mut taus = Vec::with_capacity(rows.len());
    let mut prev = (0.0, prof.moment());
    for row in rows {
        let target = row.sde_moment;
        while prof.moment() > target {
            prev = (prof.time(), prof.moment());
            prof = evolve_diffusion(&prof, dt, prof.time() + dt)?;
            if prof.time() > 1e3 {
                return Err(invalid("moment", "ensemble moment is out of reach of the diffusion"));
            }
        }
        let (t0, m0) = prev;
        let (t1, m1) = (prof.time(), prof.moment());
        let tau = if m0 == m1 { t1 } else { t0 + (m0 - target) / (m0 - m1) * (t1 - t0) };
        taus.push(tau);
    }
    let num: f64 = rows.iter().zip(&taus).map(|(r, tau)| r.t * tau).sum();
    let den: f64 = rows.iter().map(|r| r.t * r.t).sum();
    Ok(num / den)
}
