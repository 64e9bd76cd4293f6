//! Schwarzschild background: lapse, tortoise map and its inverse, mode
//! potentials and the radial Morawetz multipliers.
//!
//! Radial profiles are written as polynomials in `x = M/r` (in units `M = 1`)
//! so that grid evaluation and the exact certifier share one definition. A
//! profile of radial dimension `r^-k` is rescaled by `M^-k` on evaluation.

use crate::error::{Error, Result};
use crate::poly::{Poly, Scalar};

/// Iteration cap of the inverse tortoise solver.
pub const TORTOISE_MAX_ITER: usize = 200;
/// Default absolute tolerance in `r*` for the inverse tortoise solver.
pub const TORTOISE_TOL: f64 = 1e-12;

/// Schwarzschild mass in geometric units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Background {
    mass: f64,
}

impl Background {
    pub fn new(mass: f64) -> Result<Self> {
        if mass.is_finite() && mass > 0.0 {
            Ok(Background { mass })
        } else {
            Err(Error::InvalidMass(mass))
        }
    }

    /// Minkowski space (`M = 0`), used for flat-space reduction checks.
    /// Here `r* = r`.
    pub fn flat() -> Self {
        Background { mass: 0.0 }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn horizon(&self) -> f64 {
        2.0 * self.mass
    }

    pub fn is_flat(&self) -> bool {
        self.mass == 0.0
    }

    fn check_outside(&self, r: f64) -> Result<()> {
        if r >= self.horizon() && r > 0.0 && r.is_finite() {
            Ok(())
        } else {
            Err(Error::InsideHorizon { r, horizon: self.horizon() })
        }
    }

    /// Scale factor `M^-k`; flat space profiles never carry mass powers.
    fn inv_mass_pow(&self, k: i32) -> f64 {
        if k == 0 {
            1.0
        } else {
            libm::pow(self.mass, -k as f64)
        }
    }
}

impl Default for Background {
    fn default() -> Self {
        Background { mass: 1.0 }
    }
}

/// A radius together with its distance to the horizon. Deep in the
/// near-horizon region `r` alone rounds to `2M`, so the excess is carried
/// separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialPoint {
    pub r: f64,
    /// `r - 2M`, accurate even when it is far below `ulp(2M)`.
    pub excess: f64,
}

impl RadialPoint {
    pub fn lapse(&self) -> f64 {
        self.excess / self.r
    }
}

/// `1 - 2M/r`.
pub fn lapse(bg: &Background, r: f64) -> Result<f64> {
    bg.check_outside(r)?;
    Ok(1.0 - bg.horizon() / r)
}

/// `r* = r + 2M ln(r - 2M) - 3M - 2M ln M`, normalised so the photon sphere
/// sits at `r* = 0`.
pub fn tortoise(bg: &Background, r: f64) -> Result<f64> {
    if bg.is_flat() {
        return if r > 0.0 { Ok(r) } else { Err(Error::InsideHorizon { r, horizon: 0.0 }) };
    }
    let m = bg.mass;
    if !(r > 2.0 * m) || !r.is_finite() {
        return Err(Error::InsideHorizon { r, horizon: 2.0 * m });
    }
    Ok(tortoise_from_excess(m, r - 2.0 * m))
}

fn tortoise_from_excess(m: f64, excess: f64) -> f64 {
    2.0 * m + excess + 2.0 * m * libm::log(excess / m) - 3.0 * m
}

/// Inverse of [`tortoise`]. Solves for `s = ln((r - 2M)/M)`, in which the
/// map `M e^s + 2M s - M` is smooth, increasing and convex; Newton steps are
/// kept inside a sign-change bracket and replaced by bisection otherwise.
pub fn radius_from_tortoise(bg: &Background, rstar: f64, tol: f64) -> Result<RadialPoint> {
    if !rstar.is_finite() || !(tol > 0.0) {
        return Err(Error::NoConvergence { rstar, iterations: 0 });
    }
    if bg.is_flat() {
        return if rstar > 0.0 {
            Ok(RadialPoint { r: rstar, excess: rstar })
        } else {
            Err(Error::InsideHorizon { r: rstar, horizon: 0.0 })
        };
    }
    let m = bg.mass;
    let g = |s: f64| m * libm::exp(s) + 2.0 * m * s - m - rstar;
    let dg = |s: f64| m * libm::exp(s) + 2.0 * m;

    // Root lies below the zero of the linear part; for large r* the log
    // estimate is much tighter.
    let mut hi = (rstar + m) / (2.0 * m);
    if rstar > 3.0 * m {
        hi = hi.min(libm::log(rstar / m) + 1.0);
    }
    let mut step = 1.0;
    while g(hi) < 0.0 {
        hi += step;
        step *= 2.0;
    }
    let mut lo = hi - 1.0;
    step = 1.0;
    while g(lo) > 0.0 {
        lo -= step;
        step *= 2.0;
    }

    let mut s = hi;
    for _ in 0..TORTOISE_MAX_ITER {
        let val = g(s);
        if libm::fabs(val) <= tol {
            let excess = m * libm::exp(s);
            return Ok(RadialPoint { r: 2.0 * m + excess, excess });
        }
        if val > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - val / dg(s);
        s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * libm::fabs(s).max(1.0) {
            let excess = m * libm::exp(s);
            let r = RadialPoint { r: 2.0 * m + excess, excess };
            // Bracket collapsed to rounding level: accept if the residual is
            // at the resolution of r* itself.
            if libm::fabs(g(s)) <= tol.max(4.0 * f64::EPSILON * libm::fabs(rstar)) {
                return Ok(r);
            }
            break;
        }
    }
    Err(Error::NoConvergence { rstar, iterations: TORTOISE_MAX_ITER })
}

/// The potentials of the odd-parity mode system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PotentialKind {
    V0,
    V1,
    V2,
    VP,
    VQ,
}

impl PotentialKind {
    /// `M^2 V` as a polynomial in `x = M/r`.
    pub fn poly<T: Scalar>(self) -> Poly<T> {
        match self {
            PotentialKind::V0 => Poly::from_ints(&[0, 0, 1, -2]),
            PotentialKind::V1 => Poly::from_ints(&[0, 0, 5, -18]),
            PotentialKind::V2 => Poly::from_ints(&[0, 0, 2]),
            PotentialKind::VP => Poly::from_ints(&[0, 0, 1, -8]),
            PotentialKind::VQ => Poly::from_ints(&[0, 0, 4, -8]),
        }
    }

    /// Value for given `M` and `r`, valid also for `M = 0`.
    pub fn eval(self, mass: f64, r: f64) -> f64 {
        let ir2 = 1.0 / (r * r);
        let u = mass / r;
        match self {
            PotentialKind::V0 => ir2 * (1.0 - 2.0 * u),
            PotentialKind::V1 => ir2 * (5.0 - 18.0 * u),
            PotentialKind::V2 => 2.0 * ir2,
            PotentialKind::VP => ir2 * (1.0 - 8.0 * u),
            PotentialKind::VQ => 4.0 * ir2 * (1.0 - 2.0 * u),
        }
    }

    /// `dV/dr`.
    pub fn eval_dr(self, mass: f64, r: f64) -> f64 {
        let ir3 = 1.0 / (r * r * r);
        let u = mass / r;
        match self {
            PotentialKind::V0 => ir3 * (-2.0 + 6.0 * u),
            PotentialKind::V1 => ir3 * (-10.0 + 54.0 * u),
            PotentialKind::V2 => -4.0 * ir3,
            PotentialKind::VP => ir3 * (-2.0 + 24.0 * u),
            PotentialKind::VQ => ir3 * (-8.0 + 24.0 * u),
        }
    }
}

pub fn potential(bg: &Background, kind: PotentialKind, r: f64) -> Result<f64> {
    bg.check_outside(r)?;
    Ok(kind.eval(bg.mass, r))
}

/// Which field sector a Morawetz multiplier belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sector {
    /// The `H0` field.
    H0,
    /// The coupled `(H1, H2)` pair.
    H12,
}

/// Multiplier functions at one radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MorawetzMultipliers {
    pub f: f64,
    pub df_dr: f64,
    pub omega: f64,
    pub g: f64,
}

/// Multipliers plus the higher derivatives needed by the closed-form
/// divergence of the Morawetz current.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MorawetzProfile {
    pub f: f64,
    pub df_dr: f64,
    pub omega: f64,
    pub domega_dr: f64,
    /// Scalar wave operator applied to the static function `omega`.
    pub box_omega: f64,
    pub g: f64,
    pub dg_dr: f64,
    pub box_g: f64,
}

/// Exact polynomial forms (units `M = 1`, variable `x = M/r`) of the radial
/// multipliers, shared with the certifier.
pub mod profiles {
    use super::*;

    pub fn lapse<T: Scalar>() -> Poly<T> {
        Poly::from_ints(&[1, -2])
    }

    /// The multiplier `f`: `(1 + 3x/2)^2 (1 - 3x)` for `H0`,
    /// `(1 + 3x + 2x^2)(1 - 3x)` for the pair.
    pub fn f<T: Scalar>(sector: Sector) -> Poly<T> {
        let photon = Poly::from_ints(&[1, -3]);
        match sector {
            Sector::H0 => {
                let a = Poly::new(alloc::vec![T::one(), T::ratio(3, 2)]);
                &(&a * &a) * &photon
            }
            Sector::H12 => &Poly::from_ints(&[1, 3, 2]) * &photon,
        }
    }

    /// `omega = F (f' + 2 f / r)`, dimension `1/r`.
    pub fn omega<T: Scalar>(sector: Sector) -> Poly<T> {
        let f = f::<T>(sector);
        let inner = &f.d_dr() + &(&Poly::from_ints(&[0, 2]) * &f);
        &lapse::<T>() * &inner
    }

    /// Scalar wave operator on a static radial function `h`:
    /// `F h'' + (2M/r^2) h' + (2F/r) h'`, raising dimension by two.
    pub fn box_static<T: Scalar>(h: &Poly<T>) -> Poly<T> {
        let d1 = h.d_dr();
        let d2 = d1.d_dr();
        let lap = lapse::<T>();
        let a = &lap * &d2;
        let b = &Poly::from_ints(&[0, 0, 2]) * &d1;
        let c = &(&Poly::from_ints(&[0, 2]) * &lap) * &d1;
        &(&a + &b) + &c
    }

    /// `g = F (1 - 3x)^2 / r^3`, dimension `1/r^3`.
    pub fn g<T: Scalar>() -> Poly<T> {
        let photon = Poly::from_ints(&[1, -3]);
        &(&Poly::monomial(3) * &lapse::<T>()) * &(&photon * &photon)
    }
}

/// Precomputed `f64` coefficient tables for fast evaluation at many radii.
#[derive(Clone, Debug)]
pub struct MorawetzTables {
    sector: Sector,
    f: Poly<f64>,
    df: Poly<f64>,
    omega: Poly<f64>,
    domega: Poly<f64>,
    box_omega: Poly<f64>,
    g: Poly<f64>,
    dg: Poly<f64>,
    box_g: Poly<f64>,
}

impl MorawetzTables {
    pub fn new(sector: Sector) -> Self {
        let f = profiles::f::<f64>(sector);
        let omega = profiles::omega::<f64>(sector);
        let g = profiles::g::<f64>();
        MorawetzTables {
            sector,
            df: f.d_dr(),
            domega: omega.d_dr(),
            box_omega: profiles::box_static(&omega),
            dg: g.d_dr(),
            box_g: profiles::box_static(&g),
            f,
            omega,
            g,
        }
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    /// Evaluate at radius `r`; requires `M > 0`.
    pub fn at(&self, bg: &Background, r: f64) -> MorawetzProfile {
        let x = bg.mass / r;
        let s = |p: &Poly<f64>, k: i32| p.eval(&x) * bg.inv_mass_pow(k);
        MorawetzProfile {
            f: s(&self.f, 0),
            df_dr: s(&self.df, 1),
            omega: s(&self.omega, 1),
            domega_dr: s(&self.domega, 2),
            box_omega: s(&self.box_omega, 3),
            g: s(&self.g, 3),
            dg_dr: s(&self.dg, 4),
            box_g: s(&self.box_g, 5),
        }
    }
}

pub fn morawetz_multipliers(bg: &Background, sector: Sector, r: f64) -> Result<MorawetzMultipliers> {
    bg.check_outside(r)?;
    if bg.is_flat() {
        return Err(Error::InvalidMass(0.0));
    }
    let p = MorawetzTables::new(sector).at(bg, r);
    Ok(MorawetzMultipliers { f: p.f, df_dr: p.df_dr, omega: p.omega, g: p.g })
}
