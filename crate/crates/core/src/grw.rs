//! Spontaneous localization by discrete Gaussian hits.
//!
//! A hit centered at `c` multiplies a one-particle state by
//! `j(x - c) = (πa²)^{-1/4} e^{-(x-c)²/2a²}`. Hits occur at rate `λ` per
//! particle and, given a hit, the center has density `N²(c) = ‖j(· - c)ψ‖²`,
//! which integrates to 1 for a normalized `ψ`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, require_positive, Error, Result};
use crate::grid::Grid1D;
use crate::rng::RngStream;
use crate::two_state::TwoStateVector;
use crate::wavefunction::{Sector, WaveFunction};

/// Largest `λ dt` accepted by [`sample_hit`].
pub const MAX_HIT_PROBABILITY: f64 = 1e-2;
/// Hit centers range over the particle grid padded by this many widths `a`.
pub const CENTER_PAD_WIDTHS: f64 = 5.0;
/// Above this many particles the pointer's first-hit time is drawn from the
/// superposed channel `Exp(λn)` rather than as a minimum of per-particle draws.
pub const EXPLICIT_CHANNEL_LIMIT: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrwParams {
    /// Localization width.
    pub a: f64,
    /// Hit rate per particle.
    pub lambda: f64,
}

impl GrwParams {
    pub fn new(a: f64, lambda: f64) -> Result<Self> {
        require_positive("a", a)?;
        require_positive("lambda", lambda)?;
        Ok(Self { a, lambda })
    }

    /// `a = 10⁻⁵ cm`, `λ = 10⁻¹⁶ s⁻¹`.
    pub fn standard() -> Self {
        Self {
            a: 1e-5,
            lambda: 1e-16,
        }
    }

    /// `ln j(d)`.
    pub fn ln_hit_factor(&self, d: f64) -> f64 {
        -0.25 * (PI * self.a * self.a).ln() - d * d / (2.0 * self.a * self.a)
    }

    pub fn hit_factor(&self, d: f64) -> f64 {
        self.ln_hit_factor(d).exp()
    }

    /// `j(d)²`, a normalized Gaussian of variance `a²/2`.
    fn hit_factor_sq(&self, d: f64) -> f64 {
        (-(d * d) / (self.a * self.a)).exp() / (PI.sqrt() * self.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitEvent {
    pub time: f64,
    pub center: f64,
}

/// Post-hit state together with the squared norm `N²` it had before renormalizing.
#[derive(Debug, Clone, PartialEq)]
pub struct HitOutcome {
    pub state: WaveFunction,
    pub norm_sq: f64,
}

fn require_one_particle(psi: &WaveFunction) -> Result<()> {
    if psi.sector() != Sector::One {
        return Err(invalid("psi", "hits act on one-particle states"));
    }
    Ok(())
}

fn require_resolved(grid: &Grid1D, a: f64) -> Result<()> {
    let max_dx = a / 4.0;
    if grid.dx() > max_dx {
        return Err(Error::GridTooCoarse { dx: grid.dx(), max_dx });
    }
    Ok(())
}

/// Multiplies `ψ` by `j(x - center)` and renormalizes.
///
/// The factor is applied relative to its largest value on the support of `ψ`,
/// so the rescaled amplitudes stay in range even when `N²` itself is tiny.
pub fn apply_hit(psi: &WaveFunction, center: f64, params: &GrwParams) -> Result<HitOutcome> {
    require_one_particle(psi)?;
    let grid = psi.grid();
    let ln_j: Vec<f64> = grid.centers().map(|x| params.ln_hit_factor(x - center)).collect();
    let shift = psi
        .amplitudes()
        .iter()
        .zip(&ln_j)
        .filter(|(a, _)| a.norm() > 0.0)
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::ZeroNorm);
    }
    let scaled: Vec<Complex64> = psi
        .amplitudes()
        .iter()
        .zip(&ln_j)
        .map(|(a, l)| a * (l - shift).exp())
        .collect();
    let tmp = psi.with_amplitudes(scaled);
    let ln_norm_sq = tmp.norm_sq().ln() + 2.0 * shift;
    let norm_sq = ln_norm_sq.exp();
    if !(norm_sq > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(HitOutcome {
        state: tmp.normalize()?,
        norm_sq,
    })
}

/// `N²(c)` on the centers of the particle grid padded by `5a`.
pub fn hit_density(psi: &WaveFunction, params: &GrwParams) -> Result<(Grid1D, Vec<f64>)> {
    require_one_particle(psi)?;
    let grid = *psi.grid();
    require_resolved(&grid, params.a)?;
    let pad = (CENTER_PAD_WIDTHS * params.a / grid.dx()).ceil() as usize;
    let ext = grid.extended(pad);
    let dx = grid.dx();
    let rho = psi.density();
    let kernel: Vec<f64> = (0..=2 * pad).map(|k| params.hit_factor_sq(k as f64 * dx)).collect();
    let mut n2 = vec![0.0; ext.n_cells()];
    for (i, r) in rho.iter().enumerate() {
        if *r == 0.0 {
            continue;
        }
        // particle cell i sits at extended index i + pad
        let w = r * dx;
        let mid = i + pad;
        n2[mid] += w * kernel[0];
        for k in 1..=pad {
            n2[mid - k] += w * kernel[k];
            n2[mid + k] += w * kernel[k];
        }
    }
    Ok((ext, n2))
}

/// `λ ∫ N²(c) dc`, by quadrature over the padded center grid.
pub fn total_hit_rate(psi: &WaveFunction, params: &GrwParams) -> Result<f64> {
    let (ext, n2) = hit_density(psi, params)?;
    Ok(params.lambda * n2.iter().sum::<f64>() * ext.dx())
}

/// Inverse-CDF sampler for hit centers of a fixed state.
#[derive(Debug, Clone)]
pub struct CenterSampler {
    grid: Grid1D,
    cdf: Vec<f64>,
}

impl CenterSampler {
    pub fn new(psi: &WaveFunction, params: &GrwParams) -> Result<Self> {
        let (grid, n2) = hit_density(psi, params)?;
        let mut acc = 0.0;
        let cdf = n2
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Ok(Self { grid, cdf })
    }

    /// Draws a cell from the discretized `N²` and a uniform position inside it.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let total = *self.cdf.last().unwrap();
        let u = rng.uniform() * total;
        let cell = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.grid.x_min() + (cell as f64 + rng.uniform()) * self.grid.dx()
    }
}

/// Decides whether a hit lands in `[t, t + dt)`; if so, draws its time uniformly
/// in the step and its center from `N²(c)`.
pub fn sample_hit(
    psi: &WaveFunction,
    params: &GrwParams,
    t: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<Option<HitEvent>> {
    require_positive("dt", dt)?;
    let bound = MAX_HIT_PROBABILITY / params.lambda;
    if dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    // ∫N²dc = 1 for a normalized state, so the hit probability is λdt whatever ψ is
    if rng.uniform() >= params.lambda * dt {
        return Ok(None);
    }
    let time = t + rng.uniform() * dt;
    let center = CenterSampler::new(psi, params)?.sample(rng);
    Ok(Some(HitEvent { time, center }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Left,
    Right,
}

/// An `n`-particle pointer in a superposition of two well-separated positions.
///
/// Every particle of the pointer sits in the same branch position, so a hit on
/// any one of them acts on the collective two-branch state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerModel {
    pub n: f64,
    pub branch_separation: f64,
    /// Probabilities `(w_L, w_R)` of the two branches.
    pub branch_weights: (f64, f64),
}

impl PointerModel {
    pub fn validate(&self, params: &GrwParams) -> Result<()> {
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(invalid("n", format!("need at least one particle, got {}", self.n)));
        }
        if !(self.branch_separation >= 10.0 * params.a) {
            return Err(invalid(
                "branch_separation",
                format!("must be at least 10a = {:e}", 10.0 * params.a),
            ));
        }
        let (wl, wr) = self.branch_weights;
        if !(wl >= 0.0 && wr >= 0.0) || (wl + wr - 1.0).abs() > 1e-12 {
            return Err(invalid("branch_weights", format!("({wl}, {wr}) is not a distribution")));
        }
        Ok(())
    }
}

/// One pointer run up to its first hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerRun {
    pub collapse_time: f64,
    pub hit: HitEvent,
    /// Hit branch, i.e. the surviving one.
    pub outcome: Branch,
    /// Post-hit collective state; the losing branch keeps a nonzero tail.
    pub state: TwoStateVector,
}

/// Runs the pointer until its first hit. The left branch sits at `0`, the right
/// one at `branch_separation`.
pub fn simulate_pointer(p: &PointerModel, params: &GrwParams, rng: &mut RngStream) -> Result<PointerRun> {
    p.validate(params)?;
    let collapse_time = if p.n <= EXPLICIT_CHANNEL_LIMIT {
        (0..p.n as u64).map(|_| rng.exponential(params.lambda)).fold(f64::INFINITY, f64::min)
    } else {
        rng.exponential(params.lambda * p.n)
    };
    let (wl, wr) = p.branch_weights;
    let positions = [0.0, p.branch_separation];
    // N²(c) = w_L j(X_L - c)² + w_R j(X_R - c)²: pick a branch, then a Gaussian offset of variance a²/2
    let hit_left = rng.uniform() < wl;
    let base = if hit_left { positions[0] } else { positions[1] };
    let center = base + params.a / std::f64::consts::SQRT_2 * rng.standard_normal();
    let before = TwoStateVector::from_fraction(wl)?;
    let after = before
        .scaled(params.ln_hit_factor(positions[0] - center), params.ln_hit_factor(positions[1] - center))
        .normalized();
    let outcome = if after.log_mag_l >= after.log_mag_r || wr == 0.0 {
        Branch::Left
    } else {
        Branch::Right
    };
    Ok(PointerRun {
        collapse_time,
        hit: HitEvent {
            time: collapse_time,
            center,
        },
        outcome,
        state: after,
    })
}

/// `(λn)⁻¹`.
pub fn mean_collapse_time(n: f64, lambda: f64) -> f64 {
    1.0 / (lambda * n)
}
