//! Particle number in a region: projectors `P_n^V`, the amount of `n`-stuff
//! `⟨ψ|P_n^V|ψ⟩`, objectivity thresholds, and the flow balance of 1-stuff under
//! the two-particle collapse dynamics.

use std::f64::consts::LN_10;
use std::ops::Range;

use crate::csl::SmearedOperator;
use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::grid::Grid1D;
use crate::noise::{NoiseChannel, NoiseField};
use crate::time::step_count;
use crate::wavefunction::{Sector, WaveFunction};

/// Bohr radius in cm.
pub const BOHR_RADIUS_CM: f64 = 5.29e-9;
/// Quoted value of `log10(1 - ⟨P_1^V⟩)` for a hydrogen atom and a sphere of radius 10⁻⁶ cm.
pub const QUOTED_HYDROGEN_LOG10: f64 = -169.0;
/// Default objectivity threshold.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// A union of disjoint cell ranges of a grid with `n_cells` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    n_cells: usize,
    intervals: Vec<Range<usize>>,
}

impl Region {
    /// Sorts and validates the intervals; empty ranges are dropped.
    pub fn new(n_cells: usize, intervals: Vec<Range<usize>>) -> Result<Self> {
        let mut iv: Vec<Range<usize>> = intervals.into_iter().filter(|r| !r.is_empty()).collect();
        iv.sort_by_key(|r| r.start);
        for r in &iv {
            if r.end > n_cells {
                return Err(invalid("intervals", format!("{r:?} exceeds {n_cells} cells")));
            }
        }
        for w in iv.windows(2) {
            if w[1].start < w[0].end {
                return Err(invalid("intervals", format!("{:?} and {:?} overlap", w[0], w[1])));
            }
        }
        Ok(Self { n_cells, intervals: iv })
    }

    /// Cells whose centers lie in `[lo, hi)`.
    pub fn from_positions(grid: &Grid1D, lo: f64, hi: f64) -> Result<Self> {
        let cells: Vec<usize> = (0..grid.n_cells())
            .filter(|&i| {
                let x = grid.center(i);
                x >= lo && x < hi
            })
            .collect();
        let range = match (cells.first(), cells.last()) {
            (Some(&a), Some(&b)) => a..b + 1,
            _ => 0..0,
        };
        Self::new(grid.n_cells(), vec![range])
    }

    pub fn intervals(&self) -> &[Range<usize>] {
        &self.intervals
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn contains(&self, i: usize) -> bool {
        self.intervals.iter().any(|r| r.contains(&i))
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_cells];
        for r in &self.intervals {
            m[r.clone()].iter_mut().for_each(|b| *b = true);
        }
        m
    }

    /// The complement `V̄` within the grid.
    pub fn complement(&self) -> Self {
        let mut out = Vec::new();
        let mut start = 0;
        for r in &self.intervals {
            if r.start > start {
                out.push(start..r.start);
            }
            start = r.end;
        }
        if start < self.n_cells {
            out.push(start..self.n_cells);
        }
        Self {
            n_cells: self.n_cells,
            intervals: out,
        }
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.n_cells == other.n_cells && self.intervals.iter().flat_map(|r| r.clone()).all(|i| other.contains(i))
    }
}

fn check_region(psi: &WaveFunction, v: &Region) -> Result<()> {
    if v.n_cells != psi.grid().n_cells() {
        return Err(invalid("region", "region and state live on different grids"));
    }
    Ok(())
}

/// `⟨ψ|P_n^V|ψ⟩` for `n = 0..=N`, normalized by `⟨ψ|ψ⟩`.
fn stuff_values(psi: &WaveFunction, v: &Region) -> Result<Vec<f64>> {
    check_region(psi, v)?;
    let mask = v.mask();
    let rho = psi.density();
    match psi.sector() {
        Sector::One => {
            let (mut inside, mut outside) = (0.0, 0.0);
            for (r, &m) in rho.iter().zip(&mask) {
                if m {
                    inside += r;
                } else {
                    outside += r;
                }
            }
            let total = inside + outside;
            if total == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(vec![outside / total, inside / total])
        }
        Sector::Two => {
            let n = psi.grid().n_cells();
            // S_VV, S_{V V̄} (one ordering), S_{V̄ V̄}
            let (mut vv, mut mixed, mut oo) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let row = &rho[i * n..(i + 1) * n];
                for (j, r) in row.iter().enumerate() {
                    match (mask[i], mask[j]) {
                        (true, true) => vv += r,
                        (true, false) => mixed += r,
                        (false, false) => oo += r,
                        (false, true) => {}
                    }
                }
            }
            let total = vv + 2.0 * mixed + oo;
            if total == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(vec![oo / total, 2.0 * mixed / total, vv / total])
        }
    }
}

/// Amount of `n`-stuff in `V`: `C(N, n) ∫_V…∫_V̄ |ψ|²` over `n` coordinates in
/// `V` and the rest in `V̄`, for the symmetric `N`-particle state.
pub fn stuff(psi: &WaveFunction, v: &Region, n: usize) -> Result<f64> {
    let particles = psi.sector().particles();
    if n > particles {
        return Err(Error::BadSector { n, particles });
    }
    Ok(stuff_values(psi, v)?[n])
}

/// Whether the particle number in `V` is objectively `n`: `⟨P_n^V⟩ ≥ 1 - ε`.
pub fn is_objective(psi: &WaveFunction, v: &Region, n: usize, epsilon: f64) -> Result<bool> {
    check_epsilon(epsilon)?;
    Ok(stuff(psi, v, n)? >= 1.0 - epsilon)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid("epsilon", format!("must lie in [0, 1), got {epsilon}")));
    }
    Ok(())
}

/// All stuff values of a region with the objectivity verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct StuffReport {
    pub region: Region,
    /// `values[n] = ⟨ψ|P_n^V|ψ⟩`.
    pub values: Vec<f64>,
    pub epsilon: f64,
    /// The particle number that is objectively real in `V`, if any.
    pub objective_n: Option<usize>,
}

pub fn stuff_report(psi: &WaveFunction, v: &Region, epsilon: f64) -> Result<StuffReport> {
    check_epsilon(epsilon)?;
    let values = stuff_values(psi, v)?;
    let objective_n = values.iter().position(|&s| s >= 1.0 - epsilon);
    Ok(StuffReport {
        region: v.clone(),
        values,
        epsilon,
        objective_n,
    })
}

/// `Σ_cells ⟨P_n^cell⟩` over a family of regions.
pub fn summed_stuff(psi: &WaveFunction, cells: &[Region], n: usize) -> Result<f64> {
    cells.iter().map(|c| stuff(psi, c, n)).sum()
}

/// `log10` of the probability that a hydrogen ground-state electron lies outside
/// a sphere of radius `r_v` cm: `P = e^{-2ρ}(1 + 2ρ + 2ρ²)`, `ρ = r_v/a₀`.
pub fn hydrogen_stuff_bound(r_v: f64) -> Result<f64> {
    require_positive("r_v", r_v)?;
    let rho = r_v / BOHR_RADIUS_CM;
    let ln_poly = if rho < 1e-3 {
        // ln(1 + 2ρ + 2ρ²) = 2ρ - 4ρ³/3 + 2ρ⁴ - 8ρ⁵/5 + O(ρ⁶), avoiding cancellation against -2ρ
        return Ok(rho.powi(3) * (-4.0 / 3.0 + rho * (2.0 - 1.6 * rho)) / LN_10);
    } else {
        (2.0 * rho + 2.0 * rho * rho).ln_1p()
    };
    Ok((ln_poly - 2.0 * rho) / LN_10)
}

/// Time series of the 1-stuff balance.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub region: Region,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `⟨P_1^V⟩(t)`.
    pub stuff_series: Vec<f64>,
    /// Collapse-driven source of 1-stuff at each time.
    pub source_series: Vec<f64>,
    /// Surface currents; identically zero without a Hamiltonian.
    pub current_series: Vec<f64>,
    /// `max_k |(P_{k+1} - P_k)/dt - source_k|`, first order in `dt`.
    pub residual: f64,
}

/// Two-particle density rate `F(x₁, x₂) = 2[W(x₁) + W(x₂)] - 2λ[S(x₁) + S(x₂)] - 4λΦ(x₁, x₂)`
/// on the upper triangle, with `W` the smeared field.
fn rate_matrix(op: &SmearedOperator, lambda: f64, w: &[f64], phi: &[f64]) -> Vec<f64> {
    let n = op.grid().n_cells();
    let smeared = op.smear(w);
    let mut f = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = 2.0 * (smeared[i] + smeared[j])
                - 2.0 * lambda * (op.self_overlap(i) + op.self_overlap(j))
                - 4.0 * lambda * phi[j - i];
            f[i * n + j] = v;
            f[j * n + i] = v;
        }
    }
    f
}

/// Source of `⟨P_1^V⟩`: `Σ_{V×V̄ ∪ V̄×V} Fρ - ⟨P_1^V⟩ Σ Fρ` for normalized `ρ`.
fn source(mask: &[bool], f: &[f64], rho: &[f64], p1: f64) -> f64 {
    let n = mask.len();
    let (mut mixed, mut all) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let v = f[k] * rho[k];
            all += v;
            if mask[i] != mask[j] {
                mixed += v;
            }
        }
    }
    mixed - p1 * all
}

/// Evolves a two-particle state with zero Hamiltonian under the given field
/// realization (sample-and-hold at the noise step) and checks the balance
/// `d⟨P_1^V⟩/dt = source`.
pub fn flow_balance(
    psi0: &WaveFunction,
    v: &Region,
    lambda: f64,
    a: f64,
    noise: &NoiseField,
    dt: f64,
    t_end: f64,
) -> Result<FlowReport> {
    if psi0.sector() != Sector::Two {
        return Err(invalid("psi0", "expected a two-particle state"));
    }
    require_nonnegative("lambda", lambda)?;
    check_region(psi0, v)?;
    let op = SmearedOperator::new(*psi0.grid(), a)?;
    if noise.spec().channel != NoiseChannel::Field(*op.noise_grid()) {
        return Err(invalid("noise", "realization must live on the operator's field grid"));
    }
    let span = noise.dt() * noise.n_steps() as f64;
    if span < t_end * (1.0 - 1e-9) {
        return Err(invalid("noise", format!("realization covers {span}, need {t_end}")));
    }
    let (n_steps, dt) = step_count(dt, t_end)?;
    let n = op.grid().n_cells();
    let phi: Vec<f64> = (0..n).map(|d| op.overlap(0, d)).collect();
    let mask = v.mask();
    let cell = psi0.cell_measure();

    let mut psi = psi0.normalize()?;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut stuff_series = Vec::with_capacity(n_steps + 1);
    let mut source_series = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let rho: Vec<f64> = psi.density().iter().map(|r| r * cell).collect();
        let p1 = stuff(&psi, v, 1)?;
        // the rate over [t, t + dt); the last point reuses the final field step
        let f = rate_matrix(&op, lambda, noise.step_at(t + 0.5 * dt), &phi);
        times.push(t);
        stuff_series.push(p1);
        source_series.push(source(&mask, &f, &rho, p1));
        if k == n_steps {
            break;
        }
        let amps = psi
            .amplitudes()
            .iter()
            .zip(&f)
            .map(|(c, fk)| c * (0.5 * fk * dt).exp())
            .collect();
        psi = WaveFunction::two_particle(*psi.grid(), amps)?.normalize()?;
    }
    let residual = (0..n_steps)
        .map(|k| ((stuff_series[k + 1] - stuff_series[k]) / dt - source_series[k]).abs())
        .fold(0.0, f64::max);
    Ok(FlowReport {
        region: v.clone(),
        dt,
        current_series: vec![0.0; times.len()],
        times,
        stuff_series,
        source_series,
        residual,
    })
}

/// Residuals at `dt` and `dt/2` and their ratio, which approaches 2 for a
/// first-order balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConvergence {
    pub residual_dt: f64,
    pub residual_half_dt: f64,
    pub ratio: f64,
}

pub fn flow_convergence(
    psi0: &WaveFunction,
    v: &Region,
    lambda: f64,
    a: f64,
    noise: &NoiseField,
    dt: f64,
    t_end: f64,
) -> Result<FlowConvergence> {
    let r1 = flow_balance(psi0, v, lambda, a, noise, dt, t_end)?.residual;
    let r2 = flow_balance(psi0, v, lambda, a, noise, 0.5 * dt, t_end)?.residual;
    Ok(FlowConvergence {
        residual_dt: r1,
        residual_half_dt: r2,
        ratio: r1 / r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn grid() -> Grid1D {
        Grid1D::spanning(0.0, 1.0, 10).unwrap()
    }

    #[test]
    fn complement_and_subsets() {
        let v = Region::new(10, vec![6..8, 1..3]).unwrap();
        assert_eq!(v.intervals(), &[1..3, 6..8]);
        let c = v.complement();
        assert_eq!(c.intervals(), &[0..1, 3..6, 8..10]);
        assert_eq!(c.complement(), v);
        assert!(Region::new(10, vec![1..3]).unwrap().is_subset_of(&v));
        assert!(!v.is_subset_of(&Region::new(10, vec![1..3]).unwrap()));
        assert!(Region::new(10, vec![1..4, 3..5]).is_err());
        assert!(Region::new(10, vec![8..11]).is_err());
        let p = Region::from_positions(&grid(), 0.2, 0.5).unwrap();
        assert_eq!(p.intervals(), &[2..5]);
    }

    #[test]
    fn full_support_one_particle() {
        let g = grid();
        let psi = WaveFunction::from_fn(g, |x| Complex64::new(if x < 0.5 { 1.0 } else { 0.0 }, 0.0)).unwrap();
        let v = Region::new(10, vec![0..5]).unwrap();
        assert_eq!(stuff(&psi, &v, 1).unwrap(), 1.0);
        assert_eq!(stuff(&psi, &v, 0).unwrap(), 0.0);
        assert!(is_objective(&psi, &v, 1, 0.0).unwrap());
        assert!(matches!(stuff(&psi, &v, 2), Err(Error::BadSector { n: 2, particles: 1 })));
        assert!(is_objective(&psi, &v, 1, 1.0).is_err());
    }

    #[test]
    fn hydrogen_closed_form() {
        let at_a0 = hydrogen_stuff_bound(BOHR_RADIUS_CM).unwrap();
        assert!((at_a0 - (5.0f64 * (-2.0f64).exp()).log10()).abs() < 1e-14);
        assert!(hydrogen_stuff_bound(1e-20).unwrap().abs() < 1e-30);
        assert!(hydrogen_stuff_bound(1e-6).unwrap() <= -150.0);
        // continuity across the series cut-over
        let r = 1e-3 * BOHR_RADIUS_CM;
        let a = hydrogen_stuff_bound(r * (1.0 - 1e-9)).unwrap();
        let b = hydrogen_stuff_bound(r * (1.0 + 1e-9)).unwrap();
        assert!((a / b - 1.0).abs() < 1e-6);
    }
}
