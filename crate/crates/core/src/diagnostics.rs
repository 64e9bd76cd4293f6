//! Energies, currents and consistency checks on evolved mode data.
//!
//! A field coefficient `u` of a one-form (`k = 1`) or a traceless two-tensor
//! (`k = 2`) mode behaves, after integrating over the sphere, like the scalar
//! `phi = sqrt(n_k) u / r^k` on the `(t, r)` quotient with angular term
//! `kappa phi^2 / r^2`, `kappa = lambda - 1` or `lambda - 4`. Currents are
//! built from that scalar. Every current obeys
//!
//! `dt density = d_* flux - r^2 f (bulk + err)`,
//!
//! where `density = r^2 J_t` and `flux = r^2 f J_r`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::evolve::{State, StepRecord};
use crate::geometry::{MorawetzTables, PotentialKind, Sector};
use crate::grid::Grid;
use crate::harmonics::{weights, ModeIndex};
use crate::modesystem::{self, derive_p, derive_q, rhs_rw, ModeFields, RWFields};

/// Default `delta`, which must lie in `(0, 1/8)`.
pub const DELTA: f64 = 1.0 / 16.0;

/// Number of extra derivatives attached to `delta`: `ceil(-log2 delta) + 1`.
pub fn derivative_count(delta: f64) -> Result<u32> {
    if !(delta > 0.0 && delta < 0.125) {
        return Err(Error::InvalidConfig("delta must lie in (0, 1/8)"));
    }
    Ok(libm::ceil(-libm::log2(delta)) as u32 + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldId {
    H0,
    H1H2,
    P,
    Q,
}

impl FieldId {
    pub fn name(self) -> &'static str {
        match self {
            FieldId::H0 => "H0",
            FieldId::H1H2 => "H1H2",
            FieldId::P => "P",
            FieldId::Q => "Q",
        }
    }
}

/// How the radial derivative in the energy density is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RadialDerivative {
    /// `d/dr` along the `t = const` slice. Unbounded near the horizon for
    /// ingoing radiation.
    Slice,
    /// Along slices of constant `t + r* - r`, which cross the future horizon;
    /// `d_r - (f^-1 - 1) d_t`. Agrees with `Slice` at large `r`.
    #[default]
    Ingoing,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyOptions {
    pub p_exponent: f64,
    pub degenerate: bool,
    pub radial: RadialDerivative,
    /// Areal radius range of the integral.
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions {
            p_exponent: 0.0,
            degenerate: false,
            radial: RadialDerivative::Ingoing,
            r_min: 0.0,
            r_max: f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord {
    pub time: f64,
    pub p_exponent: f64,
    pub value: f64,
    pub degenerate: bool,
    pub field_id: FieldId,
}

/// One bundle channel of a field: coefficient, its time derivative and the
/// rank `k` of the bundle.
#[derive(Clone, Copy, Debug)]
struct Channel<'a> {
    k: i32,
    u: &'a [f64],
    ut: &'a [f64],
}

fn channel_weights(mode: ModeIndex, k: i32) -> (f64, f64) {
    let w = weights(mode);
    if k == 1 {
        (w.n1, w.grad1)
    } else {
        (w.n2, w.grad2)
    }
}

fn energy_density(g: &Grid, mode: ModeIndex, ch: Channel, opts: &EnergyOptions, out: &mut [f64]) {
    let (n, grad) = channel_weights(mode, ch.k);
    let k = ch.k as f64;
    let m = g.mass();
    let us = g.d1(ch.u);
    for i in 0..g.len() {
        let (r, f) = (g.r[i], g.lapse[i]);
        let (u, ut) = (ch.u[i], ch.ut[i]);
        let r2k = libm::pow(r, 2.0 * k);
        let rho_u = match opts.radial {
            RadialDerivative::Slice => us[i] / f,
            RadialDerivative::Ingoing => (us[i] - ut) / f + ut,
        };
        let l = ut + us[i] - k * f * u / r;
        let lterm = n / r2k * l * l;
        let ang = grad * u * u / (r2k * r * r);
        let d = rho_u - k * u / r;
        let rad = n / r2k * d * d / (r * r);
        let zero = n * u * u / (r2k * r * r);
        let deg = if opts.degenerate {
            let s = 1.0 - 3.0 * m / r;
            s * s
        } else {
            1.0
        };
        let e = libm::pow(r, opts.p_exponent) * (deg * (lterm + ang) + rad + zero);
        out[i] += e * libm::sqrt(f) * r * r;
    }
}

/// Simpson-type quadrature of nodal values over `[lo, hi]` (node indices,
/// inclusive). Falls back to the trapezoid rule below three nodes.
pub fn integrate_nodes(values: &[f64], h: f64, lo: usize, hi: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let v = &values[lo..=hi];
    let n = v.len() - 1;
    if n < 2 {
        return crate::grid::trapezoid(v, h);
    }
    let simpson = |w: &[f64]| {
        let m = w.len() - 1;
        let mut s = w[0] + w[m];
        for (j, x) in w.iter().enumerate().take(m).skip(1) {
            s += if j % 2 == 1 { 4.0 * x } else { 2.0 * x };
        }
        s * h / 3.0
    };
    if n % 2 == 0 {
        simpson(v)
    } else {
        // Simpson 3/8 on the last three intervals
        let tail = 3.0 * h / 8.0 * (v[n - 3] + 3.0 * v[n - 2] + 3.0 * v[n - 1] + v[n]);
        if n == 3 {
            tail
        } else {
            simpson(&v[..=n - 3]) + tail
        }
    }
}

fn node_range(g: &Grid, r_min: f64, r_max: f64) -> Option<(usize, usize)> {
    let lo = g.r.iter().position(|&r| r >= r_min)?;
    let hi = g.r.iter().rposition(|&r| r <= r_max)?;
    (lo < hi).then_some((lo, hi))
}

fn energy_of(g: &Grid, mode: ModeIndex, chans: &[Channel], opts: &EnergyOptions) -> f64 {
    let mut dens = vec![0.0; g.len()];
    for ch in chans {
        energy_density(g, mode, *ch, opts, &mut dens);
    }
    match node_range(g, opts.r_min, opts.r_max) {
        Some((lo, hi)) => integrate_nodes(&dens, g.h(), lo, hi),
        None => 0.0,
    }
}

fn validate_p(opts: &EnergyOptions) -> Result<()> {
    if !(0.0..=2.0).contains(&opts.p_exponent) {
        return Err(Error::InvalidConfig("p exponent must lie in [0, 2]"));
    }
    Ok(())
}

/// Weighted energy of the coupled fields `H0` and `(H1, H2)`.
pub fn mode_energy(state: &ModeFields, field: FieldId, opts: &EnergyOptions) -> Result<EnergyRecord> {
    validate_p(opts)?;
    let g = &*state.grid;
    let mut chans = Vec::new();
    let rw;
    match field {
        FieldId::H0 => chans.push(Channel { k: 1, u: &state.h0, ut: &state.dth0 }),
        FieldId::H1H2 => {
            chans.push(Channel { k: 1, u: &state.h1, ut: &state.dth1 });
            if let Some(t) = &state.tensor {
                chans.push(Channel { k: 2, u: &t.h2, ut: &t.dth2 });
            }
        }
        FieldId::P | FieldId::Q => {
            rw = modesystem::derive_rw(state)?;
            return rw_energy(&rw, field, opts);
        }
    }
    let value = energy_of(g, state.mode, &chans, opts);
    Ok(EnergyRecord { time: state.time, p_exponent: opts.p_exponent, value, degenerate: opts.degenerate, field_id: field })
}

/// Weighted energy of the gauge invariants.
pub fn rw_energy(state: &RWFields, field: FieldId, opts: &EnergyOptions) -> Result<EnergyRecord> {
    validate_p(opts)?;
    let ch = match (field, &state.tensor) {
        (FieldId::P, _) => Channel { k: 1, u: &state.p, ut: &state.dtp },
        (FieldId::Q, Some(t)) => Channel { k: 2, u: &t.q, ut: &t.dtq },
        (FieldId::Q, None) => return Err(Error::EmptyTensorSection),
        _ => return Err(Error::InvalidConfig("field is not a gauge invariant")),
    };
    let value = energy_of(&state.grid, state.mode, &[ch], opts);
    Ok(EnergyRecord { time: state.time, p_exponent: opts.p_exponent, value, degenerate: opts.degenerate, field_id: field })
}

/// All energies defined for a state of any system.
pub fn state_energies(state: &State, opts: &EnergyOptions) -> Result<Vec<EnergyRecord>> {
    match state {
        State::Coupled(s) => {
            let mut v = vec![mode_energy(s, FieldId::H0, opts)?, mode_energy(s, FieldId::H1H2, opts)?];
            let rw = modesystem::derive_rw(s)?;
            v.push(rw_energy(&rw, FieldId::P, opts)?);
            if rw.tensor.is_some() {
                v.push(rw_energy(&rw, FieldId::Q, opts)?);
            }
            Ok(v)
        }
        State::Rw(s) => {
            let mut v = vec![rw_energy(s, FieldId::P, opts)?];
            if s.tensor.is_some() {
                v.push(rw_energy(s, FieldId::Q, opts)?);
            }
            Ok(v)
        }
        State::Generator(_) => Ok(Vec::new()),
    }
}

// ---------------------------------------------------------------------------
// Currents
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurrentTag {
    T,
    Redshift,
    Morawetz,
    Rp(f64),
}

/// Field content a current is evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurrentSector {
    H0,
    H12,
    P,
    Q,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentKind {
    pub tag: CurrentTag,
    pub sector: CurrentSector,
}

/// Free constants of the red-shift and Morawetz currents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentParams {
    /// Red-shift field on the horizon: `dY Y = -s T - sigma Y`.
    pub s: f64,
    pub sigma: f64,
    /// The red-shift field is cut off smoothly between these radii.
    pub r0: f64,
    pub r1: f64,
    /// Weight of the `g` correction in the Morawetz current.
    pub eps1: f64,
}

impl CurrentParams {
    /// Defaults scaled to mass `m`.
    pub fn for_mass(m: f64) -> Self {
        CurrentParams { s: 1.0 / m, sigma: 1.0 / m, r0: 2.2 * m, r1: 2.8 * m, eps1: 0.0 }
    }
}

/// Per-node current data; `dt density = d_* flux - r^2 f (bulk + err)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentEval {
    pub time: f64,
    pub density: Vec<f64>,
    pub flux: Vec<f64>,
    pub bulk: Vec<f64>,
    pub err: Vec<f64>,
}

/// Scalarised field at one node.
#[derive(Clone, Copy, Debug)]
struct Pt {
    r: f64,
    f: f64,
    m: f64,
    phi: f64,
    phi_t: f64,
    /// `d_* phi`.
    phi_s: f64,
    kappa: f64,
    v: f64,
    dv: f64,
    /// Right-hand side of `box phi - V phi = G`.
    src: f64,
}

impl Pt {
    fn phi_r(&self) -> f64 {
        self.phi_s / self.f
    }
    fn grad_sq(&self) -> f64 {
        -self.phi_t * self.phi_t / self.f + self.f * self.phi_r() * self.phi_r() + self.ang()
    }
    fn ang(&self) -> f64 {
        self.kappa * self.phi * self.phi / (self.r * self.r)
    }
}

/// `J_t`, `J_r`, bulk and error term at one node.
type Local = (f64, f64, f64, f64);

/// Current `T(., Y) - V phi^2 Y / 2 + omega d(phi^2)/4 - d(omega) phi^2 / 4`
/// for `Y = a dt + b dr`, with its divergence from the general deformation
/// tensor formula.
#[derive(Clone, Copy, Debug)]
struct Radial {
    a: f64,
    da: f64,
    b: f64,
    db: f64,
    omega: f64,
    domega: f64,
    box_omega: f64,
}

fn radial_current(p: &Pt, y: &Radial) -> Local {
    let f = p.f;
    let fp = 2.0 * p.m / (p.r * p.r);
    let pr = p.phi_r();
    let g2 = p.grad_sq();
    let ttt = p.phi_t * p.phi_t + 0.5 * f * g2;
    let ttr = p.phi_t * pr;
    let trr = pr * pr - 0.5 * g2 / f;
    let phi2 = p.phi * p.phi;
    let jt = y.a * ttt + y.b * ttr + 0.5 * p.v * f * y.a * phi2 + 0.5 * y.omega * p.phi * p.phi_t;
    let jr = y.a * ttr + y.b * trr - 0.5 * p.v * y.b / f * phi2 + 0.5 * y.omega * p.phi * pr - 0.25 * y.domega * phi2;
    let deform = 0.5
        * (-y.b * fp * ttt / (f * f) + 2.0 * f * y.da * ttr + trr * (2.0 * f * y.db - y.b * fp)
            + 2.0 * y.b / p.r * (p.ang() - g2));
    let div_y = y.db + 2.0 * y.b / p.r;
    let bulk = deform - 0.5 * (y.b * p.dv + p.v * div_y) * phi2 + 0.5 * y.omega * (g2 + p.v * phi2)
        - 0.25 * y.box_omega * phi2;
    let err = (y.a * p.phi_t + y.b * pr + 0.5 * y.omega * p.phi) * p.src;
    (jt, jr, bulk, err)
}

/// Smooth step equal to 1 for `r <= r0` and 0 for `r >= r1`, with derivative.
fn cutoff(r: f64, r0: f64, r1: f64) -> (f64, f64) {
    if r <= r0 {
        return (1.0, 0.0);
    }
    if r >= r1 {
        return (0.0, 0.0);
    }
    let w = r1 - r0;
    let z = (r - r0) / w;
    let e = |x: f64| libm::exp(-1.0 / x);
    let de = |x: f64| libm::exp(-1.0 / x) / (x * x);
    let (a, b) = (e(1.0 - z), e(z));
    let (da, db) = (-de(1.0 - z), de(z));
    let chi = a / (a + b);
    let dchi = (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
    (chi, dchi / w)
}

fn redshift_field(p: &Pt, prm: &CurrentParams) -> Radial {
    let (r, f, m) = (p.r, p.f, p.m);
    let fp = 2.0 * m / (r * r);
    let excess = f * r;
    let yv = 0.5 * prm.s * excess;
    let yr = -2.0 - prm.sigma * excess;
    let (dyv, dyr) = (0.5 * prm.s, -prm.sigma);
    let (chi, dchi) = cutoff(r, prm.r0, prm.r1);
    let core = yv - yr / f;
    let dcore = dyv - dyr / f + yr * fp / (f * f);
    Radial {
        a: chi * core,
        da: dchi * core + chi * dcore,
        b: chi * yr,
        db: dchi * yr + chi * dyr,
        omega: 0.0,
        domega: 0.0,
        box_omega: 0.0,
    }
}

fn morawetz_current(p: &Pt, tab: &MorawetzTables, bg: &crate::geometry::Background, eps1: f64) -> Local {
    let pr = tab.at(bg, p.r);
    let omega = pr.omega - 2.0 * eps1 * pr.g;
    let y = Radial {
        a: 0.0,
        da: 0.0,
        b: pr.f * p.f,
        db: pr.df_dr * p.f + pr.f * 2.0 * p.m / (p.r * p.r),
        omega,
        domega: pr.domega_dr - 2.0 * eps1 * pr.dg_dr,
        box_omega: pr.box_omega - 2.0 * eps1 * pr.box_g,
    };
    let (jt, jr, _, _) = radial_current(p, &y);
    // closed form of the divergence
    let (f, r, m) = (p.f, p.r, p.m);
    let phi2 = p.phi * p.phi;
    let mut bulk = f * f * pr.df_dr * p.phi_r() * p.phi_r()
        + pr.f / r * (1.0 - 3.0 * m / r) * p.ang()
        + (-0.25 * pr.box_omega - 0.5 * pr.f * f * p.dv - m / (r * r) * pr.f * p.v) * phi2;
    bulk += -eps1 * pr.g * (p.grad_sq() + p.v * phi2) + 0.5 * eps1 * pr.box_g * phi2;
    let err = (pr.f * p.phi_s + 0.5 * omega * p.phi) * p.src;
    (jt, jr, bulk, err)
}

/// Coefficient of `phi^2` in the Morawetz bulk term once the angular term
/// is bounded below by its lowest one-form eigenvalue, `|grad phi|^2 >= phi^2 / r^2`.
pub fn morawetz_zeroth_order(bg: &crate::geometry::Background, sector: CurrentSector, r: f64) -> Result<f64> {
    if bg.is_flat() {
        return Err(Error::InvalidMass(0.0));
    }
    let (sec, kind) = morawetz_sector(sector);
    let pr = MorawetzTables::new(sec).at(bg, r);
    let m = bg.mass();
    let f = 1.0 - 2.0 * m / r;
    let angular = pr.f / (r * r * r) * (1.0 - 3.0 * m / r);
    Ok(-0.25 * pr.box_omega - 0.5 * pr.f * f * kind.eval_dr(m, r) - m / (r * r) * pr.f * kind.eval(m, r) + angular)
}

fn morawetz_sector(sector: CurrentSector) -> (Sector, PotentialKind) {
    match sector {
        CurrentSector::H0 => (Sector::H0, PotentialKind::V0),
        CurrentSector::H12 => (Sector::H12, PotentialKind::V1),
        CurrentSector::P => (Sector::H0, PotentialKind::VP),
        CurrentSector::Q => (Sector::H12, PotentialKind::VQ),
    }
}

fn rp_current(p: &Pt, pexp: f64) -> Local {
    let (r, f, m) = (p.r, p.f, p.m);
    let fp = 2.0 * m / (r * r);
    // psi = r phi
    let psi = r * p.phi;
    let psi_t = r * p.phi_t;
    let psi_s = r * p.phi_s + f * p.phi;
    let psi_r = psi_s / f;
    let ang = p.kappa * psi * psi / (r * r);
    let g2 = -psi_t * psi_t / f + f * psi_r * psi_r + ang;
    let ttt = psi_t * psi_t + 0.5 * f * g2;
    let ttr = psi_t * psi_r;
    let trr = psi_r * psi_r - 0.5 * g2 / f;
    let rp = libm::pow(r, pexp);
    let w = rp / (r * r * f);
    let mw = m * rp / (libm::pow(r, 5.0) * f);
    let psi2 = psi * psi;
    // L = dt + f dr, L_t = -f, L_r = 1
    let jt = w * (ttt + f * ttr) + mw * psi2 * f + 0.5 * w * p.v * psi2 * f;
    let jr = w * (ttr + f * trr) - mw * psi2 - 0.5 * w * p.v * psi2;
    let lpsi = psi_t + psi_s;
    let dw = w * ((pexp - 2.0) / r - fp / f);
    let bulk = libm::pow(r, pexp - 3.0) / (f * f) * (0.5 * pexp * f - m / r) * lpsi * lpsi
        + (1.0 - 0.5 * pexp) * libm::pow(r, pexp - 3.0) * ang
        + ((3.0 - pexp) * m * libm::pow(r, pexp - 6.0) - w / r * (1.0 - m / r) * p.v - f * 0.5 * (dw * p.v + w * p.dv))
            * psi2;
    let err = w * lpsi * r * p.src;
    (jt, jr, bulk, err)
}

struct ScalarChannel {
    weight: f64,
    k: i32,
    kappa: f64,
    pot: PotentialKind,
    u: Vec<f64>,
    ut: Vec<f64>,
    /// Source of the coefficient equation, `box_k u - V u = S`.
    src: Vec<f64>,
}

fn channels(state: &State, sector: CurrentSector) -> Result<Vec<ScalarChannel>> {
    let mode = state.mode();
    let lambda = mode.lambda();
    let g = state.grid().clone();
    let m = g.mass();
    let n = g.len();
    let mk = |weight, k, pot, u: &[f64], ut: &[f64], src| ScalarChannel {
        weight,
        k,
        kappa: if k == 1 { lambda - 1.0 } else { lambda - 4.0 },
        pot,
        u: u.to_vec(),
        ut: ut.to_vec(),
        src,
    };
    match (state, sector) {
        (State::Coupled(s), CurrentSector::H0) => {
            let p = derive_p(s);
            let src = (0..n).map(|i| -2.0 * m / libm::pow(g.r[i], 3.0) * p[i]).collect();
            Ok(vec![mk(1.0, 1, PotentialKind::V0, &s.h0, &s.dth0, src)])
        }
        (State::Coupled(s), CurrentSector::H12) => {
            let t = s.tensor.as_ref().ok_or(Error::EmptyTensorSection)?;
            let src1 = (0..n)
                .map(|i| {
                    let r = g.r[i];
                    1.0 / (r * r) * (1.0 - 3.0 * m / r) * (2.0 * (lambda - 2.0) / r) * t.h2[i]
                })
                .collect();
            let src2 = (0..n).map(|i| 2.0 / g.r[i] * s.h1[i]).collect();
            Ok(vec![
                mk(2.0, 1, PotentialKind::V1, &s.h1, &s.dth1, src1),
                mk(1.0, 2, PotentialKind::V2, &t.h2, &t.dth2, src2),
            ])
        }
        (State::Rw(s), CurrentSector::P) => Ok(vec![mk(1.0, 1, PotentialKind::VP, &s.p, &s.dtp, vec![0.0; n])]),
        (State::Rw(s), CurrentSector::Q) => {
            let t = s.tensor.as_ref().ok_or(Error::EmptyTensorSection)?;
            Ok(vec![mk(1.0, 2, PotentialKind::VQ, &t.q, &t.dtq, vec![0.0; n])])
        }
        (State::Coupled(s), CurrentSector::P | CurrentSector::Q) => {
            let rw = modesystem::derive_rw(s)?;
            channels(&State::Rw(rw), sector)
        }
        _ => Err(Error::InvalidConfig("current sector does not match the state")),
    }
}

/// Evaluates a current on a state.
pub fn eval_current(kind: CurrentKind, state: &State, params: &CurrentParams) -> Result<CurrentEval> {
    let g = state.grid().clone();
    let bg = *g.background();
    let m = g.mass();
    if m == 0.0 && matches!(kind.tag, CurrentTag::Redshift | CurrentTag::Morawetz) {
        return Err(Error::InvalidMass(0.0));
    }
    if let CurrentTag::Rp(p) = kind.tag {
        if !(DELTA..=2.0 - DELTA).contains(&p) {
            return Err(Error::InvalidConfig("r^p exponent must lie in [delta, 2 - delta]"));
        }
    }
    let weights_mode = weights(state.mode());
    let tab = matches!(kind.tag, CurrentTag::Morawetz).then(|| MorawetzTables::new(morawetz_sector(kind.sector).0));
    let n = g.len();
    let mut out = CurrentEval {
        time: state.time(),
        density: vec![0.0; n],
        flux: vec![0.0; n],
        bulk: vec![0.0; n],
        err: vec![0.0; n],
    };
    for ch in channels(state, kind.sector)? {
        let norm = if ch.k == 1 { weights_mode.n1 } else { weights_mode.n2 };
        let s = libm::sqrt(norm);
        let us = g.d1(&ch.u);
        let k = ch.k as f64;
        for i in 0..n {
            let (r, f) = (g.r[i], g.lapse[i]);
            let rk = libm::pow(r, k);
            let p = Pt {
                r,
                f,
                m,
                phi: s * ch.u[i] / rk,
                phi_t: s * ch.ut[i] / rk,
                phi_s: s * (us[i] / rk - k * f * ch.u[i] / (rk * r)),
                kappa: ch.kappa,
                v: ch.pot.eval(m, r),
                dv: ch.pot.eval_dr(m, r),
                src: s * ch.src[i] / rk,
            };
            let (jt, jr, bulk, err) = match kind.tag {
                CurrentTag::T => radial_current(
                    &p,
                    &Radial { a: 1.0, da: 0.0, b: 0.0, db: 0.0, omega: 0.0, domega: 0.0, box_omega: 0.0 },
                ),
                CurrentTag::Redshift => radial_current(&p, &redshift_field(&p, params)),
                CurrentTag::Morawetz => morawetz_current(&p, tab.as_ref().unwrap(), &bg, params.eps1),
                CurrentTag::Rp(pe) => rp_current(&p, pe),
            };
            out.density[i] += ch.weight * r * r * jt;
            out.flux[i] += ch.weight * r * r * f * jr;
            out.bulk[i] += ch.weight * bulk;
            out.err[i] += ch.weight * err;
        }
    }
    Ok(out)
}

/// `r*` window used by checks that divide by the lapse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub rstar_min: f64,
    pub rstar_max: f64,
}

impl Window {
    fn nodes(&self, g: &Grid) -> Result<(usize, usize)> {
        let lo = g.rstar.iter().position(|&s| s >= self.rstar_min).unwrap_or(g.len());
        let hi = g.rstar.iter().rposition(|&s| s <= self.rstar_max).unwrap_or(0);
        // keep clear of the one-sided stencils
        let lo = lo.max(3);
        let hi = hi.min(g.len().saturating_sub(4));
        if lo >= hi {
            return Err(Error::InsufficientData("window contains no interior nodes"));
        }
        Ok((lo, hi))
    }
}

fn uniform_times(series: &[State]) -> Result<f64> {
    let dt = series[1].time() - series[0].time();
    if !(dt > 0.0) {
        return Err(Error::InsufficientData("snapshot times must increase"));
    }
    for w in series.windows(2) {
        if ((w[1].time() - w[0].time()) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::InsufficientData("snapshots must be equally spaced in time"));
        }
    }
    Ok(dt)
}

/// Time derivative at the middle entries of equally spaced samples: fourth
/// order with five samples, second order with three.
fn time_stencil(len: usize) -> Result<(&'static [f64], usize)> {
    const FIVE: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
    const THREE: [f64; 3] = [-0.5, 0.0, 0.5];
    match len {
        n if n >= 5 => Ok((&FIVE, 2)),
        n if n >= 3 => Ok((&THREE, 1)),
        _ => Err(Error::InsufficientData("need at least three snapshots")),
    }
}

/// Largest relative residual of the divergence identity over the interior
/// snapshots of an equally spaced series.
pub fn divergence_check(kind: CurrentKind, series: &[State], params: &CurrentParams, window: Window) -> Result<f64> {
    let (stencil, half) = time_stencil(series.len())?;
    let dt = uniform_times(series)?;
    let evals: Vec<CurrentEval> = series.iter().map(|s| eval_current(kind, s, params)).collect::<Result<_>>()?;
    let g = series[0].grid().clone();
    let (lo, hi) = window.nodes(&g)?;
    let mut worst = 0.0f64;
    for c in half..series.len() - half {
        let dflux = g.d1(&evals[c].flux);
        let mut num = 0.0f64;
        let mut scale = 0.0f64;
        for i in lo..=hi {
            let mut ddens = 0.0;
            for (j, w) in stencil.iter().enumerate() {
                ddens += w * evals[c + j - half].density[i];
            }
            ddens /= dt;
            let (r, f) = (g.r[i], g.lapse[i]);
            let src = r * r * f * (evals[c].bulk[i] + evals[c].err[i]);
            num = num.max((ddens - dflux[i] + src).abs());
            scale = scale.max(ddens.abs().max(dflux[i].abs()).max(src.abs()));
        }
        if scale > 0.0 {
            worst = worst.max(num / scale);
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxBalance {
    pub energy_start: f64,
    pub energy_end: f64,
    /// `int (flux(b) - flux(a)) dt`.
    pub boundary_work: f64,
    /// `int int r^2 f (bulk + err) dr* dt`.
    pub source_work: f64,
    /// `E(t2) - E(t1) - boundary_work + source_work`.
    pub defect: f64,
    /// The same balance with the source work omitted.
    pub defect_without_source: f64,
}

impl FluxBalance {
    pub fn relative(&self) -> f64 {
        self.defect.abs() / self.energy_start.abs()
    }

    pub fn relative_without_source(&self) -> f64 {
        self.defect_without_source.abs() / self.energy_start.abs()
    }
}

/// Integrated balance of the `T` current over a series of equally spaced
/// snapshots.
pub fn flux_balance(sector: CurrentSector, series: &[State], window: Window) -> Result<FluxBalance> {
    if series.len() < 2 {
        return Err(Error::InsufficientData("need at least two snapshots"));
    }
    let dt = if series.len() > 1 { uniform_times(series)? } else { 0.0 };
    let kind = CurrentKind { tag: CurrentTag::T, sector };
    let g = series[0].grid().clone();
    let (lo, hi) = window.nodes(&g)?;
    let params = CurrentParams::for_mass(g.mass().max(1.0));
    let mut energy = Vec::with_capacity(series.len());
    let mut boundary = Vec::with_capacity(series.len());
    let mut source = Vec::with_capacity(series.len());
    for s in series {
        let c = eval_current(kind, s, &params)?;
        energy.push(integrate_nodes(&c.density, g.h(), lo, hi));
        boundary.push(c.flux[hi] - c.flux[lo]);
        let src: Vec<f64> = (0..g.len()).map(|i| g.r[i] * g.r[i] * g.lapse[i] * (c.bulk[i] + c.err[i])).collect();
        source.push(integrate_nodes(&src, g.h(), lo, hi));
    }
    let last = series.len() - 1;
    let bw = integrate_nodes(&boundary, dt, 0, last);
    let sw = integrate_nodes(&source, dt, 0, last);
    let de = energy[last] - energy[0];
    Ok(FluxBalance {
        energy_start: energy[0],
        energy_end: energy[last],
        boundary_work: bw,
        source_work: sw,
        defect: de - bw + sw,
        defect_without_source: de - bw,
    })
}

/// Residual norms of the decoupled equations applied to the invariants
/// derived from a series of coupled states.
#[derive(Clone, Debug, PartialEq)]
pub struct RwResidual {
    pub time: f64,
    pub p_l2: f64,
    pub q_l2: Option<f64>,
    /// L2 norm of `p` over the window, for scale.
    pub p_scale: f64,
    pub q_scale: Option<f64>,
}

/// Applies the discrete decoupled operators to the derived invariants.
pub fn rw_consistency(series: &[ModeFields], window: Window) -> Result<Vec<RwResidual>> {
    if series.len() < 5 {
        return Err(Error::InsufficientData("need at least five snapshots"));
    }
    let dt = series[1].time - series[0].time;
    if !(dt > 0.0) {
        return Err(Error::InsufficientData("snapshot times must increase"));
    }
    let g = series[0].grid.clone();
    let (lo, hi) = window.nodes(&g)?;
    let ps: Vec<Vec<f64>> = series.iter().map(derive_p).collect();
    let qs: Vec<Option<Vec<f64>>> = series.iter().map(|s| derive_q(s).ok()).collect();
    const SECOND: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
    let l2 = |v: &[f64]| libm::sqrt(v[lo..=hi].iter().map(|x| x * x).sum::<f64>() * g.h());
    let mut out = Vec::new();
    for c in 2..series.len() - 2 {
        if ((series[c + 1].time - series[c].time) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::InsufficientData("snapshots must be equally spaced in time"));
        }
        let tt = |arrs: &[&Vec<f64>]| -> Vec<f64> {
            (0..g.len()).map(|i| SECOND.iter().zip(arrs).map(|(w, a)| w * a[i]).sum::<f64>() / (dt * dt)).collect()
        };
        let p_tt = tt(&[&ps[c - 2], &ps[c - 1], &ps[c], &ps[c + 1], &ps[c + 2]]);
        let mut rw = RWFields::zeros(series[c].mode, g.clone());
        rw.p = ps[c].clone();
        if let (Some(t), Some(q)) = (rw.tensor.as_mut(), &qs[c]) {
            t.q = q.clone();
        }
        let acc = rhs_rw(&rw)?;
        let rp: Vec<f64> = p_tt.iter().zip(&acc.ddtp).map(|(a, b)| a - b).collect();
        let (q_l2, q_scale) = match (&acc.ddtq, &qs[c]) {
            (Some(ddq), Some(q)) => {
                let window: Vec<&Vec<f64>> = (c - 2..=c + 2).map(|j| qs[j].as_ref().unwrap()).collect();
                let q_tt = tt(&window);
                let rq: Vec<f64> = q_tt.iter().zip(ddq).map(|(a, b)| a - b).collect();
                (Some(l2(&rq)), Some(l2(q)))
            }
            _ => (None, None),
        };
        out.push(RwResidual { time: series[c].time, p_l2: l2(&rp), q_l2, p_scale: l2(&ps[c]), q_scale });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// Root-mean-square deviation in `ln(value)`.
    pub residual: f64,
}

/// Least-squares slope of `ln(value)` against `ln(time)` inside `window`.
pub fn fit_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::ShapeMismatch("times and values"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= window.0 && t <= window.1 {
            if !(t > 0.0) {
                return Err(Error::InsufficientData("fit times must be positive"));
            }
            if !(v > 0.0) {
                return Err(Error::NonPositiveData);
            }
            xs.push(libm::log(t));
            ys.push(libm::log(v));
        }
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData("fewer than two samples in the fit window"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("fit window spans a single time"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = libm::sqrt(xs.iter().zip(&ys).map(|(x, y)| { let e = y - intercept - slope * x; e * e }).sum::<f64>() / n);
    Ok(FitResult { slope, intercept, window, residual })
}

/// Amplitude of the stationary `ell = 1` part.
#[derive(Clone, Debug, PartialEq)]
pub struct DmEstimate {
    pub value: f64,
    /// Estimate at each probe.
    pub per_probe: Vec<f64>,
    /// Largest relative deviation of a probe estimate from the mean.
    pub spread: f64,
    /// `false` when the spread exceeds 10%.
    pub converged: bool,
}

/// Time average of `r p / 3` at each probe over `window`, averaged over probes.
pub fn extract_dm(records: &[StepRecord], window: (f64, f64)) -> Result<DmEstimate> {
    let inside: Vec<&StepRecord> = records.iter().filter(|r| r.time >= window.0 && r.time <= window.1).collect();
    if inside.is_empty() {
        return Err(Error::InsufficientData("no records in the extraction window"));
    }
    let n_probes = inside[0].probes.len();
    if n_probes == 0 {
        return Err(Error::InsufficientData("no probes recorded"));
    }
    let mut per_probe = vec![0.0; n_probes];
    for rec in &inside {
        for (j, pv) in rec.probes.iter().enumerate() {
            let p = pv.p.ok_or(Error::InsufficientData("records carry no p values"))?;
            per_probe[j] += pv.r * p / 3.0;
        }
    }
    for v in per_probe.iter_mut() {
        *v /= inside.len() as f64;
    }
    let value = per_probe.iter().sum::<f64>() / n_probes as f64;
    let spread = if value == 0.0 {
        if per_probe.iter().all(|v| *v == 0.0) { 0.0 } else { f64::INFINITY }
    } else {
        per_probe.iter().map(|v| ((v - value) / value).abs()).fold(0.0, f64::max)
    };
    Ok(DmEstimate { value, per_probe, spread, converged: spread <= 0.1 })
}

/// `state - d K` for the stationary `ell = 1` solution `K`.
pub fn subtract_kerr(state: &ModeFields, d: f64) -> Result<ModeFields> {
    if state.mode.ell() != 1 {
        return Err(Error::InvalidMode { ell: state.mode.ell(), m: state.mode.m() });
    }
    let k = modesystem::kerr_mode(state.grid.clone(), state.mode.m())?;
    let mut out = state.clone();
    for i in 0..out.h0.len() {
        out.h0[i] -= d * k.h0[i];
        out.h1[i] -= d * k.h1[i];
    }
    Ok(out)
}
