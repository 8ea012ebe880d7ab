use crate::error::{invalid, require_nonnegative, require_positive, Result};
use crate::grid::Grid1D;
use crate::rng::RngStream;

/// Where a noise realization lives: one scalar channel (two-state systems) or
/// one value per cell of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseChannel {
    Scalar,
    Field(Grid1D),
}

impl NoiseChannel {
    pub fn cells(&self) -> usize {
        match self {
            NoiseChannel::Scalar => 1,
            NoiseChannel::Field(g) => g.n_cells(),
        }
    }
}

/// Parameters of a discretized white-noise field `w(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub channel: NoiseChannel,
    pub lambda: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl NoiseSpec {
    pub fn scalar(lambda: f64, dt: f64, n_steps: usize) -> Self {
        Self {
            channel: NoiseChannel::Scalar,
            lambda,
            dt,
            n_steps,
        }
    }

    pub fn field(grid: Grid1D, lambda: f64, dt: f64, n_steps: usize) -> Self {
        Self {
            channel: NoiseChannel::Field(grid),
            lambda,
            dt,
            n_steps,
        }
    }

    /// `λ/(dx·dt)` on a grid, `λ/dt` on the scalar channel.
    pub fn variance_per_cell(&self) -> f64 {
        match self.channel {
            NoiseChannel::Scalar => self.lambda / self.dt,
            NoiseChannel::Field(g) => self.lambda / (g.dx() * self.dt),
        }
    }

    pub fn cells(&self) -> usize {
        self.channel.cells()
    }

    fn validate(&self) -> Result<()> {
        require_positive("dt", self.dt)?;
        require_nonnegative("lambda", self.lambda)
    }
}

/// One immutable realization of the noise: `n_steps` rows of `cells` values.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    spec: NoiseSpec,
    values: Vec<f64>,
}

impl NoiseField {
    /// Wraps precomputed values (step-major).
    pub fn from_values(spec: NoiseSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.cells() * spec.n_steps {
            return Err(invalid(
                "values",
                format!("expected {} values, got {}", spec.cells() * spec.n_steps, values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "contain non-finite entries"));
        }
        Ok(Self { spec, values })
    }

    /// The identically zero realization.
    pub fn zeros(spec: NoiseSpec) -> Result<Self> {
        Self::from_values(spec, vec![0.0; spec.cells() * spec.n_steps])
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt
    }

    pub fn n_steps(&self) -> usize {
        self.spec.n_steps
    }

    pub fn variance_per_cell(&self) -> f64 {
        self.spec.variance_per_cell()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values of step `k`, covering `[k·dt, (k+1)·dt)`.
    pub fn step(&self, k: usize) -> &[f64] {
        let c = self.spec.cells();
        &self.values[k * c..(k + 1) * c]
    }

    /// Sample-and-hold lookup at time `t`; times past the end reuse the last step.
    pub fn step_at(&self, t: f64) -> &[f64] {
        let k = ((t / self.spec.dt) * (1.0 + 1e-12)).floor().max(0.0) as usize;
        self.step(k.min(self.spec.n_steps.saturating_sub(1)))
    }
}

/// Draws a realization with independent Gaussian values of variance
/// [`NoiseSpec::variance_per_cell`] and mean `drift`.
///
/// `drift` may hold one value per cell (reused at every step) or one value per
/// cell and step (step-major). `None` gives the zero-mean raw measure.
pub fn sample_noise(spec: NoiseSpec, rng: &mut RngStream, drift: Option<&[f64]>) -> Result<NoiseField> {
    spec.validate()?;
    let cells = spec.cells();
    let total = cells * spec.n_steps;
    if let Some(d) = drift {
        if d.len() != cells && d.len() != total {
            return Err(invalid(
                "drift",
                format!("expected {cells} or {total} values, got {}", d.len()),
            ));
        }
    }
    let sd = spec.variance_per_cell().sqrt();
    let values = (0..total)
        .map(|k| {
            let mean = match drift {
                None => 0.0,
                Some(d) if d.len() == total => d[k],
                Some(d) => d[k % cells],
            };
            mean + sd * rng.standard_normal()
        })
        .collect();
    NoiseField::from_values(spec, values)
}
