use num_complex::Complex64;

use crate::error::{invalid, require_positive, Error, Result};
use crate::grid::Grid1D;

/// Particle-number sector of a [`WaveFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    One,
    Two,
}

impl Sector {
    pub fn particles(self) -> usize {
        match self {
            Sector::One => 1,
            Sector::Two => 2,
        }
    }
}

/// A Gaussian packet used to build superpositions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub center: f64,
    /// Standard deviation of `|φ|²`.
    pub width: f64,
    /// Probability weight of the packet in the superposition.
    pub weight: f64,
    pub phase: f64,
}

impl Packet {
    pub fn new(center: f64, width: f64, weight: f64) -> Self {
        Self {
            center,
            width,
            weight,
            phase: 0.0,
        }
    }

    /// Continuum amplitude of the unit-norm packet.
    pub fn amplitude(&self, x: f64) -> f64 {
        let s = self.width;
        (2.0 * std::f64::consts::PI * s * s).powf(-0.25) * (-(x - self.center).powi(2) / (4.0 * s * s)).exp()
    }
}

/// Complex amplitudes on a uniform grid, in the one- or two-particle sector.
///
/// Two-particle amplitudes are stored row-major as `ψ(i, j)` and are always
/// exactly symmetric, `ψ(i, j) == ψ(j, i)` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid1D,
    sector: Sector,
    amps: Vec<Complex64>,
}

impl WaveFunction {
    pub fn one_particle(grid: Grid1D, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.n_cells() {
            return Err(invalid(
                "amplitudes",
                format!("expected {} values, got {}", grid.n_cells(), amps.len()),
            ));
        }
        check_finite(&amps)?;
        Ok(Self {
            grid,
            sector: Sector::One,
            amps,
        })
    }

    /// Two-particle amplitudes; rejects arrays that are not exactly symmetric.
    pub fn two_particle(grid: Grid1D, amps: Vec<Complex64>) -> Result<Self> {
        let n = grid.n_cells();
        if amps.len() != n * n {
            return Err(invalid(
                "amplitudes",
                format!("expected {} values, got {}", n * n, amps.len()),
            ));
        }
        check_finite(&amps)?;
        for i in 0..n {
            for j in 0..i {
                if amps[i * n + j] != amps[j * n + i] {
                    return Err(invalid("amplitudes", format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            grid,
            sector: Sector::Two,
            amps,
        })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::one_particle(grid, grid.centers().map(f).collect())
    }

    /// Samples `½[f(x₁, x₂) + f(x₂, x₁)]`, filling the upper triangle and mirroring it.
    pub fn from_fn2(grid: Grid1D, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let n = grid.n_cells();
        let mut amps = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let xi = grid.center(i);
            for j in i..n {
                let xj = grid.center(j);
                let v = if i == j { f(xi, xj) } else { 0.5 * (f(xi, xj) + f(xj, xi)) };
                amps[i * n + j] = v;
                amps[j * n + i] = v;
            }
        }
        Self::two_particle(grid, amps)
    }

    /// Normalized Gaussian packet of standard deviation `width` (in `|ψ|²`).
    pub fn gaussian_packet(grid: Grid1D, center: f64, width: f64) -> Result<Self> {
        Self::packets(grid, &[Packet::new(center, width, 1.0)])
    }

    /// Normalized superposition `Σ √wₖ e^{iθₖ} φₖ` of Gaussian packets.
    pub fn packets(grid: Grid1D, packets: &[Packet]) -> Result<Self> {
        if packets.is_empty() {
            return Err(invalid("packets", "need at least one packet"));
        }
        for p in packets {
            require_positive("width", p.width)?;
            if !(p.weight >= 0.0) {
                return Err(invalid("weight", format!("must be >= 0, got {}", p.weight)));
            }
        }
        let amps = grid
            .centers()
            .map(|x| {
                packets
                    .iter()
                    .map(|p| Complex64::from_polar(p.weight.sqrt() * p.amplitude(x), p.phase))
                    .sum()
            })
            .collect();
        Self::one_particle(grid, amps)?.normalize()
    }

    /// Normalized symmetrized product `φa(x₁)φb(x₂) + φb(x₁)φa(x₂)`.
    pub fn symmetrized_product(a: &WaveFunction, b: &WaveFunction) -> Result<Self> {
        if a.sector != Sector::One || b.sector != Sector::One {
            return Err(invalid("factors", "both factors must be one-particle"));
        }
        if a.grid != b.grid {
            return Err(invalid("factors", "factors live on different grids"));
        }
        let grid = a.grid;
        let n = grid.n_cells();
        let mut amps = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i..n {
                let v = a.amps[i] * b.amps[j] + b.amps[i] * a.amps[j];
                amps[i * n + j] = v;
                amps[j * n + i] = v;
            }
        }
        Self::two_particle(grid, amps)?.normalize()
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amp(&self, i: usize) -> Complex64 {
        self.amps[i]
    }

    pub fn amp2(&self, i: usize, j: usize) -> Complex64 {
        self.amps[i * self.grid.n_cells() + j]
    }

    /// Integration weight of one stored amplitude, `dx^d`.
    pub fn cell_measure(&self) -> f64 {
        self.grid.dx().powi(self.sector.particles() as i32)
    }

    /// `Σ|ψ|² dx^d`.
    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.cell_measure()
    }

    /// Rescales to unit squared norm. The scale is computed relative to the
    /// largest amplitude, so states whose squares underflow still normalize;
    /// only an identically zero state fails.
    pub fn normalize(&self) -> Result<Self> {
        let peak = self.amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let scaled: f64 = self.amps.iter().map(|a| (a / peak).norm_sqr()).sum::<f64>() * self.cell_measure();
        let factor = 1.0 / (peak * scaled.sqrt());
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.with_amplitudes(self.amps.iter().map(|a| a * factor).collect()))
    }

    /// `|ψ|²` per stored amplitude (not multiplied by the cell measure).
    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        if self.grid != other.grid || self.sector != other.sector {
            return Err(invalid("other", "states live in different spaces"));
        }
        let s: Complex64 = self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.cell_measure())
    }

    /// `|⟨a|b⟩|² / (‖a‖²‖b‖²)`.
    pub fn fidelity(&self, other: &WaveFunction) -> Result<f64> {
        let ov = self.inner(other)?.norm_sqr();
        Ok(ov / (self.norm_sq() * other.norm_sq()))
    }

    /// `Σ_{i∈cells} |ψᵢ|² dx` for a one-particle state.
    pub fn weight_in(&self, cells: std::ops::Range<usize>) -> f64 {
        debug_assert_eq!(self.sector, Sector::One);
        self.amps[cells].iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub(crate) fn with_amplitudes(&self, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), self.amps.len());
        Self {
            grid: self.grid,
            sector: self.sector,
            amps,
        }
    }
}

fn check_finite(amps: &[Complex64]) -> Result<()> {
    if amps.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
        Ok(())
    } else {
        Err(invalid("amplitudes", "contain non-finite values"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid1D {
        Grid1D::new(-10.0, 0.05, 400).unwrap()
    }

    #[test]
    fn normalized_packet_is_fixed_point() {
        let psi = WaveFunction::gaussian_packet(grid(), 0.3, 0.7).unwrap();
        assert!((psi.norm_sq() - 1.0).abs() < 1e-12);
        let again = psi.normalize().unwrap();
        for (a, b) in psi.amplitudes().iter().zip(again.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn scaling_by_three_normalizes_identically() {
        let psi = WaveFunction::gaussian_packet(grid(), -1.0, 0.5).unwrap();
        let tripled = psi.with_amplitudes(psi.amplitudes().iter().map(|a| a * 3.0).collect());
        let n = tripled.normalize().unwrap();
        for (a, b) in psi.amplitudes().iter().zip(n.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn two_packet_weights_keep_their_ratio() {
        let g = grid();
        // unnormalized: weights 0.3 and 0.7 scaled by an arbitrary 5
        let raw = WaveFunction::from_fn(g, |x| {
            let l = Packet::new(-4.0, 0.5, 1.0).amplitude(x);
            let r = Packet::new(4.0, 0.5, 1.0).amplitude(x);
            Complex64::new(5.0 * (0.3f64.sqrt() * l + 0.7f64.sqrt() * r), 0.0)
        })
        .unwrap();
        let psi = raw.normalize().unwrap();
        // oracle: direct summation of each half
        let left: f64 = (0..200).map(|i| psi.amp(i).norm_sqr()).sum::<f64>() * g.dx();
        let right: f64 = (200..400).map(|i| psi.amp(i).norm_sqr()).sum::<f64>() * g.dx();
        assert!((left / right - 3.0 / 7.0).abs() < 1e-10);
        assert!((left + right - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_has_no_norm() {
        let psi = WaveFunction::one_particle(grid(), vec![Complex64::new(0.0, 0.0); 400]).unwrap();
        assert_eq!(psi.normalize(), Err(Error::ZeroNorm));
    }

    #[test]
    fn tiny_states_still_normalize() {
        let g = Grid1D::new(0.0, 1.0, 4).unwrap();
        let psi = WaveFunction::one_particle(g, vec![Complex64::new(1e-200, 0.0); 4]).unwrap();
        let n = psi.normalize().unwrap();
        assert!((n.norm_sq() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_particle_constructors_are_symmetric() {
        let g = Grid1D::new(-5.0, 0.25, 40).unwrap();
        let asym = WaveFunction::from_fn2(g, |a, b| Complex64::new((-(a - 1.0).powi(2) - (b + 2.0).powi(2)).exp(), a * 0.1))
            .unwrap();
        let n = g.n_cells();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(asym.amp2(i, j), asym.amp2(j, i));
            }
        }
        let mut bad = asym.amplitudes().to_vec();
        bad[1] += Complex64::new(1.0, 0.0);
        assert!(WaveFunction::two_particle(g, bad).is_err());
    }

    #[test]
    fn symmetrized_product_of_disjoint_packets() {
        let g = Grid1D::new(-6.0, 0.1, 120).unwrap();
        let a = WaveFunction::gaussian_packet(g, -3.0, 0.3).unwrap();
        let b = WaveFunction::gaussian_packet(g, 3.0, 0.3).unwrap();
        let psi = WaveFunction::symmetrized_product(&a, &b).unwrap();
        assert_eq!(psi.sector(), Sector::Two);
        assert!((psi.norm_sq() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_scale_invariant(
            re in proptest::collection::vec(-3.0f64..3.0, 16),
            im in proptest::collection::vec(-3.0f64..3.0, 16),
            scale in 1e-50f64..1e50,
        ) {
            prop_assume!(re.iter().chain(&im).any(|v| v.abs() > 1e-3));
            let g = Grid1D::new(0.0, 0.3, 16).unwrap();
            let amps: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            let psi = WaveFunction::one_particle(g, amps).unwrap();
            let n1 = psi.normalize().unwrap();
            prop_assert!((n1.norm_sq() - 1.0).abs() < 1e-12);
            let n2 = n1.normalize().unwrap();
            let scaled = psi.with_amplitudes(psi.amplitudes().iter().map(|a| a * scale).collect()).normalize().unwrap();
            for ((a, b), c) in n1.amplitudes().iter().zip(n2.amplitudes()).zip(scaled.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-14);
                prop_assert!((a - c).norm() < 1e-13);
            }
            // the rescaling factor is real and positive, so relative phases survive
            for (a, b) in psi.amplitudes().iter().zip(n1.amplitudes()) {
                if a.norm() > 1e-3 {
                    let r = b * a.conj();
                    prop_assert!(r.re > 0.0 && r.im.abs() <= 1e-12 * r.norm());
                }
            }
        }
    }
}
