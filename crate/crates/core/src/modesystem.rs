//! Radial equations for a single odd-parity mode.
//!
//! Every field lives on a [`Grid`] in `r*`. Radial derivatives are taken with
//! `d/dr = f^-1 d/dr*`, and second-order operators are written directly in
//! `r*` so that no factor of `f^-1` appears in the evolution equations.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::PotentialKind;
use crate::grid::Grid;
use crate::harmonics::ModeIndex;

/// Tensor-harmonic part of a mode (absent for `ell = 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct TensorPart {
    pub h2: Vec<f64>,
    pub dth2: Vec<f64>,
}

/// Mode coefficients of the metric perturbation and their time derivatives.
#[derive(Clone, Debug)]
pub struct ModeFields {
    pub mode: ModeIndex,
    pub grid: Arc<Grid>,
    pub time: f64,
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    pub dth0: Vec<f64>,
    pub dth1: Vec<f64>,
    pub tensor: Option<TensorPart>,
}

/// Second time derivatives of a [`ModeFields`] state.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledAccel {
    pub ddth0: Vec<f64>,
    pub ddth1: Vec<f64>,
    pub ddth2: Option<Vec<f64>>,
}

/// The quadrupole-and-higher gauge invariant and its time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct RwTensor {
    pub q: Vec<f64>,
    pub dtq: Vec<f64>,
}

/// Gauge-invariant mode amplitudes.
#[derive(Clone, Debug)]
pub struct RWFields {
    pub mode: ModeIndex,
    pub grid: Arc<Grid>,
    pub time: f64,
    pub p: Vec<f64>,
    pub dtp: Vec<f64>,
    pub tensor: Option<RwTensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RwAccel {
    pub ddtp: Vec<f64>,
    pub ddtq: Option<Vec<f64>>,
}

/// Scalar amplitude of an odd gauge vector field `x Z`.
#[derive(Clone, Debug)]
pub struct GeneratorFields {
    pub mode: ModeIndex,
    pub grid: Arc<Grid>,
    pub time: f64,
    pub x: Vec<f64>,
    pub dtx: Vec<f64>,
}

fn check_len(grid: &Grid, a: &[f64], what: &'static str) -> Result<()> {
    if a.len() != grid.len() {
        return Err(Error::ShapeMismatch(what));
    }
    Ok(())
}

fn check_tensor(mode: ModeIndex, present: bool) -> Result<()> {
    match (mode.has_tensor(), present) {
        (true, true) | (false, false) => Ok(()),
        (false, true) => Err(Error::EmptyTensorSection),
        (true, false) => Err(Error::ShapeMismatch("ell >= 2 needs the tensor part")),
    }
}

impl ModeFields {
    pub fn zeros(mode: ModeIndex, grid: Arc<Grid>) -> Self {
        let n = grid.len();
        let tensor = mode.has_tensor().then(|| TensorPart { h2: vec![0.0; n], dth2: vec![0.0; n] });
        ModeFields {
            mode,
            grid,
            time: 0.0,
            h0: vec![0.0; n],
            h1: vec![0.0; n],
            dth0: vec![0.0; n],
            dth1: vec![0.0; n],
            tensor,
        }
    }

    pub fn h2(&self) -> Option<&[f64]> {
        self.tensor.as_ref().map(|t| t.h2.as_slice())
    }

    pub fn dth2(&self) -> Option<&[f64]> {
        self.tensor.as_ref().map(|t| t.dth2.as_slice())
    }

    /// Checks array lengths, the tensor part against `ell`, and finiteness.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        check_len(g, &self.h0, "h0")?;
        check_len(g, &self.h1, "h1")?;
        check_len(g, &self.dth0, "dth0")?;
        check_len(g, &self.dth1, "dth1")?;
        check_tensor(self.mode, self.tensor.is_some())?;
        if let Some(t) = &self.tensor {
            check_len(g, &t.h2, "h2")?;
            check_len(g, &t.dth2, "dth2")?;
        }
        if !self.arrays().all(|a| a.iter().all(|v| v.is_finite())) {
            return Err(Error::Instability { t: self.time, reason: "non-finite field value" });
        }
        Ok(())
    }

    fn arrays(&self) -> impl Iterator<Item = &Vec<f64>> {
        let t = self.tensor.iter().flat_map(|t| [&t.h2, &t.dth2]);
        [&self.h0, &self.h1, &self.dth0, &self.dth1].into_iter().chain(t)
    }
}

impl RWFields {
    pub fn zeros(mode: ModeIndex, grid: Arc<Grid>) -> Self {
        let n = grid.len();
        let tensor = mode.has_tensor().then(|| RwTensor { q: vec![0.0; n], dtq: vec![0.0; n] });
        RWFields { mode, grid, time: 0.0, p: vec![0.0; n], dtp: vec![0.0; n], tensor }
    }

    pub fn validate(&self) -> Result<()> {
        check_len(&self.grid, &self.p, "p")?;
        check_len(&self.grid, &self.dtp, "dtp")?;
        check_tensor(self.mode, self.tensor.is_some())?;
        if let Some(t) = &self.tensor {
            check_len(&self.grid, &t.q, "q")?;
            check_len(&self.grid, &t.dtq, "dtq")?;
        }
        Ok(())
    }
}

impl GeneratorFields {
    pub fn zeros(mode: ModeIndex, grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GeneratorFields { mode, grid, time: 0.0, x: vec![0.0; n], dtx: vec![0.0; n] }
    }

    pub fn validate(&self) -> Result<()> {
        check_len(&self.grid, &self.x, "x")?;
        check_len(&self.grid, &self.dtx, "dtx")
    }
}

/// Which zeroth-order terms enter the one-form wave operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Zeroth {
    Full(PotentialKind),
    /// Only the Killing-compatible combination used by gauge generators.
    Generator,
    None,
}

/// `f [box1 u - V u]` in `r*` form: `u_** + f (c(r) u)`.
pub(crate) fn one_form_wave(grid: &Grid, lambda: f64, u: &[f64], zeroth: Zeroth) -> Vec<f64> {
    let m = grid.mass();
    let mut out = grid.d2(u);
    for i in 0..out.len() {
        let r = grid.r[i];
        let f = grid.lapse[i];
        let c = match zeroth {
            Zeroth::Full(v) => (1.0 - lambda) / (r * r) - 2.0 * m / (r * r * r) - v.eval(m, r),
            Zeroth::Generator => -lambda / (r * r),
            Zeroth::None => 0.0,
        };
        out[i] += f * c * u[i];
    }
    out
}

/// `f [box2 u - V u]` in `r*` form: `u_** - (2f/r) u_* + f (c(r) u)`.
pub(crate) fn tensor_wave(grid: &Grid, lambda: f64, u: &[f64], zeroth: Zeroth) -> Vec<f64> {
    let m = grid.mass();
    let d1 = grid.d1(u);
    let mut out = grid.d2(u);
    for i in 0..out.len() {
        let r = grid.r[i];
        let f = grid.lapse[i];
        let c = match zeroth {
            Zeroth::Full(v) => (4.0 - lambda) / (r * r) + 2.0 / (r * r) * (1.0 - 4.0 * m / r) - v.eval(m, r),
            Zeroth::Generator | Zeroth::None => 0.0,
        };
        out[i] += -2.0 * f / r * d1[i] + f * c * u[i];
    }
    out
}

/// `f p` for the state; regular up to the horizon.
fn lapse_times_p(s: &ModeFields, dh0: &[f64]) -> Vec<f64> {
    let g = &s.grid;
    (0..g.len())
        .map(|i| g.r[i] * (s.dth1[i] - dh0[i]) + 2.0 * g.lapse[i] * s.h0[i])
        .collect()
}

/// Second time derivatives of the gauged linearised field equations.
pub fn rhs_coupled(state: &ModeFields) -> Result<CoupledAccel> {
    state.validate()?;
    let g = &*state.grid;
    let m = g.mass();
    let lambda = state.mode.lambda();

    let dh0 = g.d1(&state.h0);
    let fp = lapse_times_p(state, &dh0);
    let mut ddth0 = one_form_wave(g, lambda, &state.h0, Zeroth::Full(PotentialKind::V0));
    for i in 0..ddth0.len() {
        let r = g.r[i];
        ddth0[i] += 2.0 * m / (r * r * r) * fp[i];
    }

    let mut ddth1 = one_form_wave(g, lambda, &state.h1, Zeroth::Full(PotentialKind::V1));
    let ddth2 = state.tensor.as_ref().map(|t| {
        let mut a = tensor_wave(g, lambda, &t.h2, Zeroth::Full(PotentialKind::V2));
        for i in 0..a.len() {
            let r = g.r[i];
            let f = g.lapse[i];
            ddth1[i] -= f / (r * r) * (1.0 - 3.0 * m / r) * (2.0 * (lambda - 2.0) / r) * t.h2[i];
            a[i] -= f * 2.0 / r * state.h1[i];
        }
        a
    });
    Ok(CoupledAccel { ddth0, ddth1, ddth2 })
}

/// Time derivative of a coupled state: `(dt h, dt^2 h)` at the same time.
///
/// The equations have time-independent coefficients, so any linear derived
/// quantity of the result is the time derivative of that quantity.
pub fn time_derivative(state: &ModeFields) -> Result<ModeFields> {
    let acc = rhs_coupled(state)?;
    let tensor = state.tensor.as_ref().zip(acc.ddth2).map(|(t, dd)| TensorPart { h2: t.dth2.clone(), dth2: dd });
    Ok(ModeFields {
        mode: state.mode,
        grid: state.grid.clone(),
        time: state.time,
        h0: state.dth0.clone(),
        h1: state.dth1.clone(),
        dth0: acc.ddth0,
        dth1: acc.ddth1,
        tensor,
    })
}

/// Decoupled equations for the gauge invariants.
pub fn rhs_rw(state: &RWFields) -> Result<RwAccel> {
    rw_accel(state, true)
}

/// Free `r*` wave equation on the same fields, used to test propagation.
pub fn rhs_rw_without_potential(state: &RWFields) -> Result<RwAccel> {
    rw_accel(state, false)
}

fn rw_accel(state: &RWFields, with_potential: bool) -> Result<RwAccel> {
    state.validate()?;
    let g = &*state.grid;
    let lambda = state.mode.lambda();
    let (zp, zq) = if with_potential {
        (Zeroth::Full(PotentialKind::VP), Zeroth::Full(PotentialKind::VQ))
    } else {
        (Zeroth::None, Zeroth::None)
    };
    let ddtp = one_form_wave(g, lambda, &state.p, zp);
    let ddtq = state.tensor.as_ref().map(|t| {
        if with_potential {
            tensor_wave(g, lambda, &t.q, zq)
        } else {
            g.d2(&t.q)
        }
    });
    Ok(RwAccel { ddtp, ddtq })
}

/// Wave equation solved by the amplitude of a gauge vector field.
pub fn rhs_gauge_generator(state: &GeneratorFields) -> Result<Vec<f64>> {
    state.validate()?;
    Ok(one_form_wave(&state.grid, state.mode.lambda(), &state.x, Zeroth::Generator))
}

/// Harmonic-gauge constraint.
pub fn gauge_residual(state: &ModeFields) -> Vec<f64> {
    let dh1 = state.grid.d1(&state.h1);
    residual_from(state, &dh1)
}

/// [`gauge_residual`] with a supplied `r*`-derivative of `h1`, e.g. an exact one.
pub fn gauge_residual_with_derivative(state: &ModeFields, dh1: &[f64]) -> Result<Vec<f64>> {
    check_len(&state.grid, dh1, "dh1")?;
    Ok(residual_from(state, dh1))
}

fn residual_from(state: &ModeFields, dh1: &[f64]) -> Vec<f64> {
    let g = &*state.grid;
    let lambda = state.mode.lambda();
    (0..g.len())
        .map(|i| {
            let r = g.r[i];
            let mut c = (dh1[i] - state.dth0[i]) / g.lapse[i] + 2.0 / r * state.h1[i];
            if let Some(t) = &state.tensor {
                c += (lambda - 2.0) / (r * r) * t.h2[i];
            }
            c
        })
        .collect()
}

/// Pointwise magnitude of the terms summed in [`gauge_residual`].
pub fn gauge_residual_scale(state: &ModeFields) -> Vec<f64> {
    let g = &*state.grid;
    let lambda = state.mode.lambda();
    let dh1 = g.d1(&state.h1);
    (0..g.len())
        .map(|i| {
            let r = g.r[i];
            let mut c = (dh1[i].abs() + state.dth0[i].abs()) / g.lapse[i] + 2.0 / r * state.h1[i].abs();
            if let Some(t) = &state.tensor {
                c += ((lambda - 2.0) / (r * r) * t.h2[i]).abs();
            }
            c
        })
        .collect()
}

/// Gauge-invariant one-form amplitude.
pub fn derive_p(state: &ModeFields) -> Vec<f64> {
    let g = &*state.grid;
    let dh0 = g.d1(&state.h0);
    (0..g.len())
        .map(|i| g.r[i] / g.lapse[i] * (state.dth1[i] - dh0[i]) + 2.0 * state.h0[i])
        .collect()
}

/// Pointwise magnitude of the terms summed in [`derive_p`].
pub fn derive_p_scale(state: &ModeFields) -> Vec<f64> {
    let g = &*state.grid;
    let dh0 = g.d1(&state.h0);
    (0..g.len())
        .map(|i| g.r[i] / g.lapse[i] * (state.dth1[i].abs() + dh0[i].abs()) + 2.0 * state.h0[i].abs())
        .collect()
}

/// Gauge-invariant tensor amplitude; undefined for `ell = 1`.
pub fn derive_q(state: &ModeFields) -> Result<Vec<f64>> {
    let t = state.tensor.as_ref().ok_or(Error::EmptyTensorSection)?;
    Ok(q_of(&state.grid, &state.h1, &t.h2))
}

/// Pointwise magnitude of the terms summed in [`derive_q`].
pub fn derive_q_scale(state: &ModeFields) -> Result<Vec<f64>> {
    let t = state.tensor.as_ref().ok_or(Error::EmptyTensorSection)?;
    let g = &*state.grid;
    let dh2 = g.d1(&t.h2);
    Ok((0..g.len())
        .map(|i| state.h1[i].abs() + dh2[i].abs() + (2.0 * g.lapse[i] / g.r[i] * t.h2[i]).abs())
        .collect())
}

fn q_of(g: &Grid, h1: &[f64], h2: &[f64]) -> Vec<f64> {
    let dh2 = g.d1(h2);
    (0..g.len())
        .map(|i| h1[i] + (dh2[i] - 2.0 * g.lapse[i] / g.r[i] * h2[i]))
        .collect()
}

/// Gauge invariants of a coupled state together with their time derivatives.
pub fn derive_rw(state: &ModeFields) -> Result<RWFields> {
    let dt = time_derivative(state)?;
    let tensor = match &state.tensor {
        Some(_) => Some(RwTensor { q: derive_q(state)?, dtq: derive_q(&dt)? }),
        None => None,
    };
    Ok(RWFields {
        mode: state.mode,
        grid: state.grid.clone(),
        time: state.time,
        p: derive_p(state),
        dtp: derive_p(&dt),
        tensor,
    })
}

/// Stationary `ell = 1` solution generated by an infinitesimal rotation.
pub fn kerr_mode(grid: Arc<Grid>, m: i32) -> Result<ModeFields> {
    let mode = ModeIndex::new(1, m)?;
    let mass = grid.mass();
    let mut s = ModeFields::zeros(mode, grid);
    for i in 0..s.h0.len() {
        let r = s.grid.r[i];
        s.h0[i] = 1.0 / r;
        s.h1[i] = 2.0 * mass / (r * r);
    }
    Ok(s)
}

/// Fields of the pure-gauge perturbation generated by `x`, taking
/// `dt^2 x` from the generator wave equation.
pub fn pure_gauge_fields(gen: &GeneratorFields) -> Result<ModeFields> {
    let ddtx = rhs_gauge_generator(gen)?;
    pure_gauge_fields_with(gen, &ddtx)
}

/// As [`pure_gauge_fields`] with an explicitly supplied `dt^2 x`.
pub fn pure_gauge_fields_with(gen: &GeneratorFields, ddtx: &[f64]) -> Result<ModeFields> {
    gen.validate()?;
    check_len(&gen.grid, ddtx, "ddtx")?;
    let g = &*gen.grid;
    let shifted = |u: &[f64]| -> Vec<f64> {
        let d = g.d1(u);
        (0..g.len()).map(|i| d[i] - 2.0 * g.lapse[i] / g.r[i] * u[i]).collect()
    };
    let tensor = gen.mode.has_tensor().then(|| TensorPart {
        h2: gen.x.iter().map(|v| -v).collect(),
        dth2: gen.dtx.iter().map(|v| -v).collect(),
    });
    Ok(ModeFields {
        mode: gen.mode,
        grid: gen.grid.clone(),
        time: gen.time,
        h0: gen.dtx.clone(),
        h1: shifted(&gen.x),
        dth0: ddtx.to_vec(),
        dth1: shifted(&gen.dtx),
        tensor,
    })
}

/// First-order relations between `h0` and `h1` at `ell = 1`.
///
/// `res_r` coincides with the gauge constraint and `res_t = (f/r) p`.
pub fn l1_relation_residuals(state: &ModeFields) -> Result<(Vec<f64>, Vec<f64>)> {
    if state.mode.ell() != 1 {
        return Err(Error::InvalidMode { ell: state.mode.ell(), m: state.mode.m() });
    }
    let g = &*state.grid;
    let dh0 = g.d1(&state.h0);
    let dh1 = g.d1(&state.h1);
    let mut res_r = Vec::with_capacity(g.len());
    let mut res_t = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let (r, f) = (g.r[i], g.lapse[i]);
        res_r.push((dh1[i] - state.dth0[i]) / f + 2.0 / r * state.h1[i]);
        res_t.push(state.dth1[i] - (dh0[i] - 2.0 * f / r * state.h0[i]));
    }
    Ok((res_r, res_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Background;
    use crate::grid::GridSpec;

    fn grid(m: f64, lo: f64, hi: f64, n: usize) -> Arc<Grid> {
        let bg = if m == 0.0 { Background::flat() } else { Background::new(m).unwrap() };
        Arc::new(Grid::new(GridSpec { rstar_min: lo, rstar_max: hi, n_points: n, cfl: 0.5 }, bg).unwrap())
    }

    #[test]
    fn ell_one_rejects_tensor_part() {
        let g = grid(1.0, -20.0, 40.0, 64);
        let mut s = ModeFields::zeros(ModeIndex::new(1, 0).unwrap(), g.clone());
        s.tensor = Some(TensorPart { h2: vec![0.0; 64], dth2: vec![0.0; 64] });
        assert_eq!(rhs_coupled(&s).unwrap_err(), Error::EmptyTensorSection);
        assert!(derive_q(&ModeFields::zeros(ModeIndex::new(1, 1).unwrap(), g)).is_err());
    }

    #[test]
    fn gauge_residual_hand_value() {
        // h1 = r at r = 5: 1 + 2 = 3
        let g = grid(1.0, -20.0, 40.0, 801);
        let mut s = ModeFields::zeros(ModeIndex::new(2, 0).unwrap(), g.clone());
        s.h1 = g.r.clone();
        let c = gauge_residual(&s);
        let i = g.index_of_radius(5.0).unwrap();
        let want = 1.0 + 2.0;
        // nearest node is not exactly r = 5, but the residual is constant
        assert!((c[i] - want).abs() < 1e-6, "{}", c[i]);
    }
}
