//! Uniform tortoise-coordinate grid and fourth-order finite differences.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{radius_from_tortoise, Background, TORTOISE_TOL};

/// Discretisation of the exterior on a truncated `r*` interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub n_points: usize,
    pub cfl: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { rstar_min: -80.0, rstar_max: 300.0, n_points: 4096, cfl: 0.5 }
    }
}

impl GridSpec {
    pub fn spacing(&self) -> f64 {
        (self.rstar_max - self.rstar_min) / (self.n_points - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.cfl * self.spacing()
    }

    pub fn validate(&self, bg: &Background) -> Result<()> {
        if self.n_points < 16 {
            return Err(Error::InvalidGrid("need at least 16 points"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidGrid("cfl must lie in (0, 1]"));
        }
        if !(self.rstar_min.is_finite() && self.rstar_max.is_finite() && self.rstar_min < self.rstar_max) {
            return Err(Error::InvalidGrid("need rstar_min < rstar_max"));
        }
        if bg.is_flat() {
            if self.rstar_min <= 0.0 {
                return Err(Error::InvalidGrid("flat grids need rstar_min > 0"));
            }
        } else if !(self.rstar_min < 0.0 && self.rstar_max > 0.0) {
            return Err(Error::InvalidGrid("the photon sphere r* = 0 must be interior"));
        }
        Ok(())
    }
}

/// Grid with the background radial functions sampled at every node.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: GridSpec,
    bg: Background,
    h: f64,
    pub rstar: Vec<f64>,
    pub r: Vec<f64>,
    /// `1 - 2M/r`, computed from `r - 2M` so it stays accurate near the horizon.
    pub lapse: Vec<f64>,
}

impl Grid {
    pub fn new(spec: GridSpec, bg: Background) -> Result<Self> {
        spec.validate(&bg)?;
        let h = spec.spacing();
        let n = spec.n_points;
        let mut rstar = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        let mut lapse = Vec::with_capacity(n);
        for i in 0..n {
            let rs = if i == n - 1 { spec.rstar_max } else { spec.rstar_min + i as f64 * h };
            let p = radius_from_tortoise(&bg, rs, TORTOISE_TOL)?;
            rstar.push(rs);
            r.push(p.r);
            lapse.push(if bg.is_flat() { 1.0 } else { p.lapse() });
        }
        Ok(Grid { spec, bg, h, rstar, r, lapse })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn background(&self) -> &Background {
        &self.bg
    }

    pub fn mass(&self) -> f64 {
        self.bg.mass()
    }

    pub fn len(&self) -> usize {
        self.rstar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rstar.is_empty()
    }

    /// Spacing in `r*`.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt()
    }

    /// Index of the node nearest to `rstar`, if inside the grid.
    pub fn index_of_rstar(&self, rstar: f64) -> Option<usize> {
        if rstar < self.spec.rstar_min - 0.5 * self.h || rstar > self.spec.rstar_max + 0.5 * self.h {
            return None;
        }
        let i = libm::round((rstar - self.spec.rstar_min) / self.h) as isize;
        Some(i.clamp(0, self.len() as isize - 1) as usize)
    }

    /// Index of the node nearest to areal radius `r`.
    pub fn index_of_radius(&self, r: f64) -> Option<usize> {
        if r < self.r[0] || r > self.r[self.len() - 1] {
            return None;
        }
        let k = self.r.partition_point(|&x| x < r);
        if k == 0 {
            return Some(0);
        }
        if k >= self.len() {
            return Some(self.len() - 1);
        }
        Some(if r - self.r[k - 1] <= self.r[k] - r { k - 1 } else { k })
    }

    /// `d/dr* u`.
    pub fn d1(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        d1_into(u, self.h, &mut out);
        out
    }

    /// `d^2/dr*^2 u`.
    pub fn d2(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        d2_into(u, self.h, &mut out);
        out
    }

    /// `d/dr u = f^-1 d/dr* u`.
    pub fn dr(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.d1(u);
        for (o, f) in out.iter_mut().zip(&self.lapse) {
            *o /= f;
        }
        out
    }
}

/// Fourth-order first derivative; one-sided fourth-order at the two
/// outermost nodes on each side.
pub fn d1_into(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    debug_assert!(n >= 6 && out.len() == n);
    let s = 1.0 / (12.0 * h);
    out[0] = (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]) * s;
    out[1] = (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]) * s;
    for i in 2..n - 2 {
        out[i] = (8.0 * (u[i + 1] - u[i - 1]) - (u[i + 2] - u[i - 2])) * s;
    }
    out[n - 2] = (3.0 * u[n - 1] + 10.0 * u[n - 2] - 18.0 * u[n - 3] + 6.0 * u[n - 4] - u[n - 5]) * s;
    out[n - 1] = (25.0 * u[n - 1] - 48.0 * u[n - 2] + 36.0 * u[n - 3] - 16.0 * u[n - 4] + 3.0 * u[n - 5]) * s;
}

/// Fourth-order second derivative; one-sided fourth-order near the ends.
/// The interior stencil is written in neighbour differences so that nearly
/// constant data does not lose precision to cancellation.
pub fn d2_into(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    debug_assert!(n >= 6 && out.len() == n);
    let s = 1.0 / (12.0 * h * h);
    out[0] = (45.0 * u[0] - 154.0 * u[1] + 214.0 * u[2] - 156.0 * u[3] + 61.0 * u[4] - 10.0 * u[5]) * s;
    out[1] = (10.0 * u[0] - 15.0 * u[1] - 4.0 * u[2] + 14.0 * u[3] - 6.0 * u[4] + u[5]) * s;
    for i in 2..n - 2 {
        out[i] = (15.0 * ((u[i + 1] - u[i]) - (u[i] - u[i - 1])) - ((u[i + 2] - u[i + 1]) - (u[i - 1] - u[i - 2]))) * s;
    }
    let m = n - 1;
    out[m - 1] = (10.0 * u[m] - 15.0 * u[m - 1] - 4.0 * u[m - 2] + 14.0 * u[m - 3] - 6.0 * u[m - 4] + u[m - 5]) * s;
    out[m] = (45.0 * u[m] - 154.0 * u[m - 1] + 214.0 * u[m - 2] - 156.0 * u[m - 3] + 61.0 * u[m - 4] - 10.0 * u[m - 5]) * s;
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}
