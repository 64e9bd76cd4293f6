//! Method-of-lines time integration on a truncated `r*` interval.
//!
//! Every system is second order in time. It is integrated with classical
//! RK4 on the pairs `(u, dt u)`. The outer nodes carry the radiation
//! condition in differentiated form: `dt^2 u = +d_* dt u` at the inner end
//! and `dt^2 u = -d_* dt u` at the outer end, imposed inside every stage.
//! Stationary solutions are left untouched by this condition.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::{self, EnergyOptions, EnergyRecord};
use crate::error::{Error, Result};
use crate::grid::Grid;
pub use crate::grid::GridSpec;
use crate::harmonics::ModeIndex;
use crate::modesystem::{
    self, derive_p, derive_q, gauge_residual, kerr_mode, pure_gauge_fields, GeneratorFields, ModeFields,
    RWFields, RwTensor,
};

/// Growth of the max-norm relative to the initial data that aborts a run.
pub const INSTABILITY_GROWTH: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum System {
    Coupled,
    Rw,
    Generator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    MomentarilyStaticBump,
    PureGauge,
    Kerr,
    RwBump,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetField {
    H1,
    H2,
    P,
    Q,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialDataSpec {
    pub kind: InitialKind,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub target: TargetField,
}

impl InitialDataSpec {
    pub fn system(&self) -> System {
        match self.kind {
            InitialKind::RwBump => System::Rw,
            _ => System::Coupled,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub system: System,
    pub mode: ModeIndex,
    pub t_final: f64,
    pub snapshot_stride: usize,
    /// Areal radii of the probes.
    pub probe_radii: Vec<f64>,
    pub initial_data: InitialDataSpec,
    /// Reject runs in which boundary signals can reach a probe.
    pub causally_clean: bool,
    /// Energies recorded at every step, if any.
    pub energy: Option<EnergyOptions>,
    /// Test hook: drop every zeroth-order term of the decoupled equations.
    pub potential_off: bool,
}

/// A state of any of the three systems.
#[derive(Clone, Debug)]
pub enum State {
    Coupled(ModeFields),
    Rw(RWFields),
    Generator(GeneratorFields),
}

impl State {
    pub fn time(&self) -> f64 {
        match self {
            State::Coupled(s) => s.time,
            State::Rw(s) => s.time,
            State::Generator(s) => s.time,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            State::Coupled(s) => &s.grid,
            State::Rw(s) => &s.grid,
            State::Generator(s) => &s.grid,
        }
    }

    pub fn mode(&self) -> ModeIndex {
        match self {
            State::Coupled(s) => s.mode,
            State::Rw(s) => s.mode,
            State::Generator(s) => s.mode,
        }
    }

    pub fn system(&self) -> System {
        match self {
            State::Coupled(_) => System::Coupled,
            State::Rw(_) => System::Rw,
            State::Generator(_) => System::Generator,
        }
    }

    /// Evolved fields and their time derivatives, in a fixed order.
    pub fn pairs(&self) -> Vec<(&[f64], &[f64])> {
        match self {
            State::Coupled(s) => {
                let mut v: Vec<(&[f64], &[f64])> = vec![(&s.h0, &s.dth0), (&s.h1, &s.dth1)];
                if let Some(t) = &s.tensor {
                    v.push((&t.h2, &t.dth2));
                }
                v
            }
            State::Rw(s) => {
                let mut v: Vec<(&[f64], &[f64])> = vec![(&s.p, &s.dtp)];
                if let Some(t) = &s.tensor {
                    v.push((&t.q, &t.dtq));
                }
                v
            }
            State::Generator(s) => vec![(&s.x, &s.dtx)],
        }
    }

    fn pairs_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            State::Coupled(s) => {
                let mut v = vec![(&mut s.h0, &mut s.dth0), (&mut s.h1, &mut s.dth1)];
                if let Some(t) = &mut s.tensor {
                    v.push((&mut t.h2, &mut t.dth2));
                }
                v
            }
            State::Rw(s) => {
                let mut v = vec![(&mut s.p, &mut s.dtp)];
                if let Some(t) = &mut s.tensor {
                    v.push((&mut t.q, &mut t.dtq));
                }
                v
            }
            State::Generator(s) => vec![(&mut s.x, &mut s.dtx)],
        }
    }

    fn set_time(&mut self, t: f64) {
        match self {
            State::Coupled(s) => s.time = t,
            State::Rw(s) => s.time = t,
            State::Generator(s) => s.time = t,
        }
    }

    /// Largest absolute value over all evolved arrays.
    pub fn max_norm(&self) -> f64 {
        self.pairs()
            .iter()
            .flat_map(|(u, v)| u.iter().chain(v.iter()))
            .fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
    }

    /// Sum of squares of the evolved fields (not their time derivatives).
    pub fn field_l2(&self) -> f64 {
        let h = self.grid().h();
        libm::sqrt(self.pairs().iter().flat_map(|(u, _)| u.iter()).map(|x| x * x).sum::<f64>() * h)
    }

    pub fn as_coupled(&self) -> Option<&ModeFields> {
        match self {
            State::Coupled(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_rw(&self) -> Option<&RWFields> {
        match self {
            State::Rw(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_generator(&self) -> Option<&GeneratorFields> {
        match self {
            State::Generator(s) => Some(s),
            _ => None,
        }
    }
}

/// Options of the right-hand side that are not part of the state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepOptions {
    pub potential_off: bool,
}

fn accel(state: &State, opts: StepOptions) -> Result<Vec<Vec<f64>>> {
    let mut acc = match state {
        State::Coupled(s) => {
            let a = modesystem::rhs_coupled(s)?;
            let mut v = vec![a.ddth0, a.ddth1];
            v.extend(a.ddth2);
            v
        }
        State::Rw(s) => {
            let a = if opts.potential_off {
                modesystem::rhs_rw_without_potential(s)?
            } else {
                modesystem::rhs_rw(s)?
            };
            let mut v = vec![a.ddtp];
            v.extend(a.ddtq);
            v
        }
        State::Generator(s) => vec![modesystem::rhs_gauge_generator(s)?],
    };
    let g = state.grid();
    for (a, (_, v)) in acc.iter_mut().zip(state.pairs()) {
        boundary_accel(g, v, a);
    }
    if let State::Coupled(s) = state {
        gauge_boundary_accel(g, s, &mut acc[0]);
    }
    Ok(acc)
}

/// At the inner node `h0` is driven so that the time derivative of the gauge
/// constraint vanishes there.
fn gauge_boundary_accel(g: &Grid, s: &ModeFields, a: &mut [f64]) {
    let v = &s.dth1;
    let d = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * g.h());
    let (r, f) = (g.r[0], g.lapse[0]);
    let mut c = 2.0 / r * v[0];
    if let Some(t) = &s.tensor {
        c += (s.mode.lambda() - 2.0) / (r * r) * t.dth2[0];
    }
    a[0] = d + f * c;
}

/// Radiation condition on the time derivative at the two outer nodes.
fn boundary_accel(g: &Grid, v: &[f64], a: &mut [f64]) {
    let n = v.len();
    let s = 1.0 / (12.0 * g.h());
    a[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) * s;
    a[n - 1] = -(25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4] + 3.0 * v[n - 5]) * s;
}

/// Impose `dt u = +d_* u` at the inner and `dt u = -d_* u` at the outer node.
pub fn apply_boundary(state: &mut State) {
    let g = state.grid().clone();
    for (u, v) in state.pairs_mut() {
        let d = g.d1(u);
        let n = u.len();
        v[0] = d[0];
        v[n - 1] = -d[n - 1];
    }
}

fn axpy_state(base: &State, k: &[(Vec<f64>, Vec<f64>)], c: f64) -> State {
    let mut out = base.clone();
    for ((u, v), (du, dv)) in out.pairs_mut().into_iter().zip(k) {
        for i in 0..u.len() {
            u[i] += c * du[i];
            v[i] += c * dv[i];
        }
    }
    out
}

fn stage(state: &State, opts: StepOptions) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let acc = accel(state, opts)?;
    Ok(state.pairs().into_iter().zip(acc).map(|((_, v), a)| (v.to_vec(), a)).collect())
}

/// One classical RK4 step.
pub fn step(state: &State, dt: f64, opts: StepOptions) -> Result<State> {
    let k1 = stage(state, opts)?;
    let k2 = stage(&axpy_state(state, &k1, 0.5 * dt), opts)?;
    let k3 = stage(&axpy_state(state, &k2, 0.5 * dt), opts)?;
    let k4 = stage(&axpy_state(state, &k3, dt), opts)?;
    let mut out = state.clone();
    let w = dt / 6.0;
    for (j, (u, v)) in out.pairs_mut().into_iter().enumerate() {
        for i in 0..u.len() {
            u[i] += w * (k1[j].0[i] + 2.0 * k2[j].0[i] + 2.0 * k3[j].0[i] + k4[j].0[i]);
            v[i] += w * (k1[j].1[i] + 2.0 * k2[j].1[i] + 2.0 * k3[j].1[i] + k4[j].1[i]);
        }
    }
    out.set_time(state.time() + dt);
    Ok(out)
}

fn gaussian(g: &Grid, center: f64, width: f64, amplitude: f64) -> Vec<f64> {
    g.rstar
        .iter()
        .map(|s| {
            let z = (s - center) / width;
            amplitude * libm::exp(-z * z)
        })
        .collect()
}

/// Builds initial data of the requested kind for `system`.
pub fn initial_data(spec: &InitialDataSpec, system: System, grid: Arc<Grid>, mode: ModeIndex) -> Result<State> {
    if !(spec.width > 0.0) || !spec.width.is_finite() {
        return Err(Error::InvalidConfig("initial data width must be positive"));
    }
    if !spec.amplitude.is_finite() || !spec.center.is_finite() {
        return Err(Error::InvalidConfig("initial data must be finite"));
    }
    let bump = gaussian(&grid, spec.center, spec.width, spec.amplitude);
    let mismatch = Error::InvalidConfig("initial data kind does not fit the system or mode");
    use InitialKind as K;
    use TargetField as T;
    match (system, spec.kind, spec.target) {
        (System::Coupled, K::MomentarilyStaticBump, target @ (T::H1 | T::H2)) => {
            let mut s = ModeFields::zeros(mode, grid.clone());
            match (target, s.tensor.as_mut()) {
                (T::H1, _) => s.h1 = bump,
                (T::H2, Some(t)) => t.h2 = bump,
                _ => return Err(Error::EmptyTensorSection),
            }
            // dth0 chosen so that the gauge constraint vanishes with this stencil
            let d = grid.d1(&s.h1);
            let lambda = mode.lambda();
            for i in 0..grid.len() {
                let (r, f) = (grid.r[i], grid.lapse[i]);
                let mut c = 2.0 / r * s.h1[i];
                if let Some(t) = &s.tensor {
                    c += (lambda - 2.0) / (r * r) * t.h2[i];
                }
                s.dth0[i] = d[i] + f * c;
            }
            Ok(State::Coupled(s))
        }
        (System::Coupled, K::PureGauge, T::X) => {
            let mut gen = GeneratorFields::zeros(mode, grid);
            gen.x = bump;
            Ok(State::Coupled(pure_gauge_fields(&gen)?))
        }
        (System::Generator, K::PureGauge, T::X) => {
            let mut gen = GeneratorFields::zeros(mode, grid);
            gen.x = bump;
            Ok(State::Generator(gen))
        }
        (System::Coupled, K::Kerr, _) => {
            if mode.ell() != 1 {
                return Err(mismatch);
            }
            let mut s = kerr_mode(grid, mode.m())?;
            for v in s.h0.iter_mut().chain(s.h1.iter_mut()) {
                *v *= spec.amplitude;
            }
            Ok(State::Coupled(s))
        }
        (System::Rw, K::RwBump, target @ (T::P | T::Q)) => {
            let mut s = RWFields::zeros(mode, grid);
            match (target, s.tensor.as_mut()) {
                (T::P, _) => s.p = bump,
                (T::Q, Some(t)) => *t = RwTensor { q: bump, dtq: t.dtq.clone() },
                _ => return Err(Error::EmptyTensorSection),
            }
            Ok(State::Rw(s))
        }
        _ => Err(mismatch),
    }
}

/// Values at one probe.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeValue {
    /// Requested radius.
    pub radius: f64,
    /// Node actually sampled.
    pub index: usize,
    pub r: f64,
    pub rstar: f64,
    /// Evolved fields in the order of [`State::pairs`].
    pub fields: Vec<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
}

/// Diagnostics recorded after every step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub probes: Vec<ProbeValue>,
    pub gauge_residual_l2: Option<f64>,
    pub field_l2: f64,
    pub energies: Vec<EnergyRecord>,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub snapshots: Vec<State>,
    pub records: Vec<StepRecord>,
    /// Set when the run was aborted; the output up to that point is kept.
    pub failure: Option<Error>,
}

impl Evolution {
    pub fn final_state(&self) -> Option<&State> {
        self.snapshots.last()
    }
}

impl EvolutionConfig {
    pub fn validate(&self, grid: &Grid) -> Result<Vec<usize>> {
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidConfig("t_final must be non-negative"));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidConfig("snapshot_stride must be positive"));
        }
        let mut idx = Vec::with_capacity(self.probe_radii.len());
        for &r in &self.probe_radii {
            let i = grid.index_of_radius(r).ok_or(Error::ProbeOutsideGrid(r))?;
            if self.causally_clean {
                let s = grid.rstar[i];
                let room = (grid.spec().rstar_max - s).min(s - grid.spec().rstar_min);
                if self.t_final > room {
                    return Err(Error::InvalidConfig("t_final exceeds the causally clean window"));
                }
            }
            idx.push(i);
        }
        Ok(idx)
    }
}

fn record(step: usize, state: &State, probes: &[(f64, usize)], cfg: &EvolutionConfig) -> Result<StepRecord> {
    let g = state.grid();
    let (pv, qv, gres) = match state {
        State::Coupled(s) => {
            let p = derive_p(s);
            let q = derive_q(s).ok();
            let c = gauge_residual(s);
            let l2 = libm::sqrt(c.iter().map(|x| x * x).sum::<f64>() * g.h());
            (Some(p), q, Some(l2))
        }
        State::Rw(s) => (Some(s.p.clone()), s.tensor.as_ref().map(|t| t.q.clone()), None),
        State::Generator(_) => (None, None, None),
    };
    let pairs = state.pairs();
    let probes = probes
        .iter()
        .map(|&(radius, i)| ProbeValue {
            radius,
            index: i,
            r: g.r[i],
            rstar: g.rstar[i],
            fields: pairs.iter().map(|(u, _)| u[i]).collect(),
            p: pv.as_ref().map(|p| p[i]),
            q: qv.as_ref().map(|q| q[i]),
        })
        .collect();
    let energies = match &cfg.energy {
        Some(opts) => diagnostics::state_energies(state, opts)?,
        None => Vec::new(),
    };
    Ok(StepRecord { step, time: state.time(), probes, gauge_residual_l2: gres, field_l2: state.field_l2(), energies })
}

/// Runs the configured evolution from `initial` up to `t_final`.
pub fn evolve_from(initial: State, cfg: &EvolutionConfig) -> Result<Evolution> {
    let grid = initial.grid().clone();
    let idx = cfg.validate(&grid)?;
    if initial.system() != cfg.system {
        return Err(Error::InvalidConfig("initial state does not belong to the configured system"));
    }
    let probes: Vec<(f64, usize)> = cfg.probe_radii.iter().cloned().zip(idx).collect();
    let dt = grid.dt();
    let n_steps = libm::ceil(cfg.t_final / dt - 1e-9).max(0.0) as usize;
    let opts = StepOptions { potential_off: cfg.potential_off };
    let norm0 = initial.max_norm();
    let mut out = Evolution { snapshots: vec![initial.clone()], records: Vec::new(), failure: None };
    out.records.push(record(0, &initial, &probes, cfg)?);
    let mut state = initial;
    for k in 1..=n_steps {
        let next = match step(&state, dt, opts) {
            Ok(s) => s,
            Err(e) => {
                out.failure = Some(e);
                break;
            }
        };
        // time from the step count avoids accumulated rounding
        let mut next = next;
        next.set_time(k as f64 * dt);
        let norm = next.max_norm();
        if !norm.is_finite() {
            out.failure = Some(Error::Instability { t: next.time(), reason: "non-finite field value" });
            out.snapshots.push(next);
            break;
        }
        if norm > INSTABILITY_GROWTH * norm0.max(f64::MIN_POSITIVE) && norm0 > 0.0 {
            out.failure = Some(Error::Instability { t: next.time(), reason: "norm grew by more than 1e6" });
            out.snapshots.push(next);
            break;
        }
        out.records.push(record(k, &next, &probes, cfg)?);
        if k % cfg.snapshot_stride == 0 || k == n_steps {
            out.snapshots.push(next.clone());
        }
        state = next;
    }
    Ok(out)
}

/// Builds the initial data from the configuration and evolves it.
pub fn evolve(cfg: &EvolutionConfig, grid: Arc<Grid>) -> Result<Evolution> {
    let init = initial_data(&cfg.initial_data, cfg.system, grid, cfg.mode)?;
    evolve_from(init, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Background;

    #[test]
    fn zero_state_stays_zero() {
        let g = Arc::new(Grid::new(GridSpec { rstar_min: -20.0, rstar_max: 40.0, n_points: 128, cfl: 0.5 }, Background::default()).unwrap());
        let s = State::Rw(RWFields::zeros(ModeIndex::new(2, 0).unwrap(), g.clone()));
        let next = step(&s, g.dt(), StepOptions::default()).unwrap();
        assert_eq!(next.max_norm(), 0.0);
    }
}
