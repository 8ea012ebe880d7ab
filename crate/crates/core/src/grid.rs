use crate::error::{invalid, require_positive, Result};

/// Uniform one-dimensional grid of `n_cells` cells of width `dx` starting at `x_min`.
///
/// Cell `i` is centered at `x_min + (i + ½) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    dx: f64,
    n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, dx: f64, n_cells: usize) -> Result<Self> {
        require_positive("dx", dx)?;
        if !x_min.is_finite() {
            return Err(invalid("x_min", "must be finite"));
        }
        if n_cells < 2 {
            return Err(invalid("n_cells", format!("need at least 2 cells, got {n_cells}")));
        }
        Ok(Self { x_min, dx, n_cells })
    }

    /// Grid of `n_cells` equal cells exactly covering `[lo, hi)`.
    pub fn spanning(lo: f64, hi: f64, n_cells: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("hi", format!("need hi > lo, got [{lo}, {hi})")));
        }
        Self::new(lo, (hi - lo) / n_cells as f64, n_cells)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.n_cells as f64 * self.dx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.center(i))
    }

    /// Index of the cell containing `x`, if any.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let s = (x - self.x_min) / self.dx;
        if s >= 0.0 && s < self.n_cells as f64 {
            Some(s as usize)
        } else {
            None
        }
    }

    /// The same lattice padded by `pad` cells on both sides.
    pub fn extended(&self, pad: usize) -> Self {
        Self {
            x_min: self.x_min - pad as f64 * self.dx,
            dx: self.dx,
            n_cells: self.n_cells + 2 * pad,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_sit_mid_cell() {
        let g = Grid1D::new(-1.0, 0.5, 4).unwrap();
        let c: Vec<f64> = g.centers().collect();
        assert_eq!(c, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(g.x_max(), 1.0);
        assert_eq!(g.cell_of(0.3), Some(2));
        assert_eq!(g.cell_of(1.0), None);
        assert_eq!(g.cell_of(-1.01), None);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid1D::new(0.0, 0.0, 10).is_err());
        assert!(Grid1D::new(0.0, -1.0, 10).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
        assert!(Grid1D::spanning(1.0, 1.0, 10).is_err());
    }

    #[test]
    fn extension_keeps_lattice_alignment() {
        let g = Grid1D::new(0.0, 0.25, 8).unwrap();
        let e = g.extended(3);
        assert_eq!(e.n_cells(), 14);
        assert_eq!(e.center(3), g.center(0));
        assert_eq!(e.center(10), g.center(7));
    }
}
