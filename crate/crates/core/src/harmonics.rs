//! Angular constants of the odd-parity harmonics and a quadrature check of
//! them against explicitly constructed sections on the unit sphere.
//!
//! Conventions: `Y` is a real spherical harmonic of unit `L^2(S^2)` norm,
//! `Z_a = eps_a^b grad_b Y` and `Z_ab = grad_a Z_b + grad_b Z_a`. Bundle
//! inner products contract with the spacetime metric `r^2 sigma`, so a
//! one-form picks up `r^-2` and a two-tensor `r^-4`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Angular mode label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    ell: u32,
    m: i32,
}

impl ModeIndex {
    pub fn new(ell: u32, m: i32) -> Result<Self> {
        if ell >= 1 && m.unsigned_abs() <= ell {
            Ok(ModeIndex { ell, m })
        } else {
            Err(Error::InvalidMode { ell, m })
        }
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn m(&self) -> i32 {
        self.m
    }

    /// Whether the traceless two-tensor harmonic exists (`ell >= 2`).
    pub fn has_tensor(&self) -> bool {
        self.ell >= 2
    }

    pub fn lambda(&self) -> f64 {
        let l = self.ell as f64;
        l * (l + 1.0)
    }
}

/// Closed-form per-mode constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeWeights {
    pub lambda: f64,
    /// Eigenvalue of the connection Laplacian on `Z_a`.
    pub eig1: f64,
    /// Eigenvalue of the connection Laplacian on `Z_ab`.
    pub eig2: f64,
    /// `int sigma^ab Z_a Z_b`.
    pub n1: f64,
    /// `int Z_ab Z^ab`.
    pub n2: f64,
    /// `int |grad Z_a|^2`.
    pub grad1: f64,
    /// `int |grad Z_ab|^2`.
    pub grad2: f64,
}

pub fn weights(mode: ModeIndex) -> ModeWeights {
    let lambda = mode.lambda();
    let n2 = if mode.has_tensor() { 2.0 * lambda * (lambda - 2.0) } else { 0.0 };
    ModeWeights {
        lambda,
        eig1: 1.0 - lambda,
        eig2: 4.0 - lambda,
        n1: lambda,
        n2,
        grad1: lambda * (lambda - 1.0),
        grad2: (lambda - 4.0) * n2,
    }
}

/// `D(u Z_a) = (c u) Z_ab`. Returns `(c, trivial)`; for `ell = 1` the target
/// section is empty and the coefficient is reported as `0` with the flag set.
pub fn d_coefficient(mode: ModeIndex, r: f64) -> (f64, bool) {
    if mode.has_tensor() {
        (r, false)
    } else {
        (0.0, true)
    }
}

/// `D^dagger(w Z_ab) = (c w) Z_a` with `c = 2(lambda - 2)/r`.
pub fn ddag_coefficient(mode: ModeIndex, r: f64) -> Result<f64> {
    if mode.has_tensor() {
        Ok(2.0 * (mode.lambda() - 2.0) / r)
    } else {
        Err(Error::EmptyTensorSection)
    }
}

// ---------------------------------------------------------------------------
// Quadrature self-test
// ---------------------------------------------------------------------------

/// Taylor order carried by the jets; four derivatives of `Y` reach the
/// Laplacian of `Z_ab`.
const ORDER: usize = 4;
const W: usize = ORDER + 1;

/// Truncated bivariate Taylor jet in `(theta, phi)`; `c[a][b]` multiplies
/// `dtheta^a dphi^b`, entries with `a + b > ORDER` are ignored.
#[derive(Clone, Copy, Debug)]
struct Jet {
    c: [[f64; W]; W],
}

impl Jet {
    fn zero() -> Self {
        Jet { c: [[0.0; W]; W] }
    }

    fn constant(v: f64) -> Self {
        let mut j = Jet::zero();
        j.c[0][0] = v;
        j
    }

    fn value(&self) -> f64 {
        self.c[0][0]
    }

    fn outer(theta: &[f64; W], phi: &[f64; W]) -> Self {
        let mut j = Jet::zero();
        for a in 0..W {
            for b in 0..W - a {
                j.c[a][b] = theta[a] * phi[b];
            }
        }
        j
    }

    fn add(&self, o: &Jet) -> Jet {
        let mut j = *self;
        for a in 0..W {
            for b in 0..W - a {
                j.c[a][b] += o.c[a][b];
            }
        }
        j
    }

    fn sub(&self, o: &Jet) -> Jet {
        self.add(&o.scale(-1.0))
    }

    fn scale(&self, s: f64) -> Jet {
        let mut j = *self;
        for a in 0..W {
            for b in 0..W - a {
                j.c[a][b] *= s;
            }
        }
        j
    }

    fn mul(&self, o: &Jet) -> Jet {
        let mut j = Jet::zero();
        for a1 in 0..W {
            for b1 in 0..W - a1 {
                let x = self.c[a1][b1];
                if x == 0.0 {
                    continue;
                }
                for a2 in 0..W - a1 - b1 {
                    for b2 in 0..W - a1 - b1 - a2 {
                        j.c[a1 + a2][b1 + b2] += x * o.c[a2][b2];
                    }
                }
            }
        }
        j
    }

    fn d_theta(&self) -> Jet {
        let mut j = Jet::zero();
        for a in 0..ORDER {
            for b in 0..W - a - 1 {
                j.c[a][b] = (a + 1) as f64 * self.c[a + 1][b];
            }
        }
        j
    }

    fn d_phi(&self) -> Jet {
        let mut j = Jet::zero();
        for a in 0..ORDER {
            for b in 0..W - a - 1 {
                j.c[a][b] = (b + 1) as f64 * self.c[a][b + 1];
            }
        }
        j
    }

    fn d(&self, dir: usize) -> Jet {
        if dir == 0 {
            self.d_theta()
        } else {
            self.d_phi()
        }
    }
}

/// Univariate jet helpers (Taylor coefficients in `dtheta`).
fn jet1_mul(a: &[f64; W], b: &[f64; W]) -> [f64; W] {
    let mut out = [0.0; W];
    for i in 0..W {
        for j in 0..W - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn jet1_recip(a: &[f64; W]) -> [f64; W] {
    let mut out = [0.0; W];
    out[0] = 1.0 / a[0];
    for n in 1..W {
        let mut s = 0.0;
        for k in 1..=n {
            s += a[k] * out[n - k];
        }
        out[n] = -s / a[0];
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Taylor coefficients of `cos` and `sin` about `t0`.
fn trig_jets(t0: f64) -> ([f64; W], [f64; W]) {
    let (s, c) = (libm::sin(t0), libm::cos(t0));
    let cyc_c = [c, -s, -c, s];
    let cyc_s = [s, c, -s, -c];
    let mut jc = [0.0; W];
    let mut js = [0.0; W];
    for k in 0..W {
        jc[k] = cyc_c[k % 4] / factorial(k);
        js[k] = cyc_s[k % 4] / factorial(k);
    }
    (jc, js)
}

/// Coefficients of the Legendre polynomial `P_l` in powers of `u`.
fn legendre_coeffs(l: usize) -> Vec<f64> {
    let mut p0 = vec![1.0];
    if l == 0 {
        return p0;
    }
    let mut p1 = vec![0.0, 1.0];
    for n in 1..l {
        // (n+1) P_{n+1} = (2n+1) u P_n - n P_{n-1}
        let mut next = vec![0.0; n + 2];
        for (k, &c) in p1.iter().enumerate() {
            next[k + 1] += (2 * n + 1) as f64 * c;
        }
        for (k, &c) in p0.iter().enumerate() {
            next[k] -= n as f64 * c;
        }
        for c in next.iter_mut() {
            *c /= (n + 1) as f64;
        }
        p0 = p1;
        p1 = next;
    }
    p1
}

/// Real spherical harmonic as a jet at `(theta0, phi0)`:
/// `N sin^|m|(theta) P_l^(|m|)(cos theta) * {1, cos m phi, sin |m| phi}`.
fn harmonic_jet(l: usize, m: i32, theta0: f64, phi0: f64) -> Jet {
    let am = m.unsigned_abs() as usize;
    let mut q = legendre_coeffs(l);
    for _ in 0..am {
        q = q.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect();
    }
    let (cj, sj) = trig_jets(theta0);
    // Q(cos theta) by Horner in jets.
    let mut qj = [0.0; W];
    for &c in q.iter().rev() {
        qj = jet1_mul(&qj, &cj);
        qj[0] += c;
    }
    let mut th = qj;
    for _ in 0..am {
        th = jet1_mul(&th, &sj);
    }
    let mut norm = (2 * l + 1) as f64 / (4.0 * core::f64::consts::PI) * factorial(l - am)
        / factorial(l + am);
    if m != 0 {
        norm *= 2.0;
    }
    let norm = libm::sqrt(norm);
    let (pc, ps) = trig_jets(am as f64 * phi0);
    let mut ph = [0.0; W];
    for k in 0..W {
        let scale = libm::pow(am as f64, k as f64);
        ph[k] = match m.signum() {
            0 => {
                if k == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            1 => pc[k] * scale,
            _ => ps[k] * scale,
        };
    }
    Jet::outer(&th, &ph).scale(norm)
}

/// Covariant tensor with all indices down; component index bits are
/// `0 = theta`, `1 = phi`, leftmost index in the highest bit.
#[derive(Clone, Debug)]
struct Tensor {
    rank: usize,
    comps: Vec<Jet>,
}

/// Background data of the round metric at one node.
struct Chart {
    sin: Jet,
    cos: Jet,
    inv_sin: Jet,
    inv_sin2: Jet,
}

impl Chart {
    fn new(theta0: f64) -> Self {
        let (cj, sj) = trig_jets(theta0);
        let zero = [0.0; W];
        let inv = jet1_recip(&sj);
        let inv2 = jet1_mul(&inv, &inv);
        let mut unit = [0.0; W];
        unit[0] = 1.0;
        let _ = zero;
        Chart {
            sin: Jet::outer(&sj, &unit),
            cos: Jet::outer(&cj, &unit),
            inv_sin: Jet::outer(&inv, &unit),
            inv_sin2: Jet::outer(&inv2, &unit),
        }
    }

    /// `sigma^{aa}` (diagonal).
    fn inv_metric(&self, a: usize) -> Jet {
        if a == 0 {
            Jet::constant(1.0)
        } else {
            self.inv_sin2
        }
    }

    fn metric(&self, a: usize, b: usize) -> Jet {
        match (a, b) {
            (0, 0) => Jet::constant(1.0),
            (1, 1) => self.sin.mul(&self.sin),
            _ => Jet::zero(),
        }
    }

    /// `Gamma^c_{ab}`.
    fn christoffel(&self, c: usize, a: usize, b: usize) -> Jet {
        match (c, a, b) {
            (0, 1, 1) => self.sin.mul(&self.cos).scale(-1.0),
            (1, 0, 1) | (1, 1, 0) => self.cos.mul(&self.inv_sin),
            _ => Jet::zero(),
        }
    }

    fn scalar_grad(&self, y: &Jet) -> Tensor {
        Tensor { rank: 1, comps: vec![y.d_theta(), y.d_phi()] }
    }

    /// `eps_a^b v_b` with `eps_{theta phi} = sin theta`.
    fn rotate(&self, v: &Tensor) -> Tensor {
        let zt = v.comps[1].mul(&self.inv_sin);
        let zp = v.comps[0].mul(&self.sin).scale(-1.0);
        Tensor { rank: 1, comps: vec![zt, zp] }
    }

    fn cov(&self, t: &Tensor) -> Tensor {
        let k = t.rank;
        let mut comps = Vec::with_capacity(1 << (k + 1));
        for j in 0..2 {
            for idx in 0..(1usize << k) {
                let mut v = t.comps[idx].d(j);
                for s in 0..k {
                    let bit = k - 1 - s;
                    let is = (idx >> bit) & 1;
                    for c in 0..2 {
                        let gam = self.christoffel(c, j, is);
                        if gam.value() == 0.0 && gam.c == Jet::zero().c {
                            continue;
                        }
                        let swapped = (idx & !(1 << bit)) | (c << bit);
                        v = v.sub(&gam.mul(&t.comps[swapped]));
                    }
                }
                comps.push(v);
            }
        }
        Tensor { rank: k + 1, comps }
    }

    /// Contract slots `s1 < s2` with the inverse metric.
    fn trace(&self, t: &Tensor, s1: usize, s2: usize) -> Tensor {
        let k = t.rank;
        let b1 = k - 1 - s1;
        let b2 = k - 1 - s2;
        let mut comps = Vec::with_capacity(1 << (k - 2));
        for out in 0..(1usize << (k - 2)) {
            // Re-insert two zero bits at positions b1 > b2.
            let low = out & ((1 << b2) - 1);
            let mid = (out >> b2) & ((1 << (b1 - b2 - 1)) - 1);
            let high = out >> (b1 - 1);
            let base = low | (mid << (b2 + 1)) | (high << (b1 + 1));
            let mut v = Jet::zero();
            for a in 0..2 {
                let idx = base | (a << b1) | (a << b2);
                v = v.add(&self.inv_metric(a).mul(&t.comps[idx]));
            }
            comps.push(v);
        }
        Tensor { rank: k - 2, comps }
    }

    /// Full contraction value `T . U` on the unit sphere.
    fn dot(&self, t: &Tensor, u: &Tensor) -> f64 {
        let mut s = 0.0;
        for idx in 0..(1usize << t.rank) {
            let mut w = 1.0;
            for bit in 0..t.rank {
                w *= self.inv_metric((idx >> bit) & 1).value();
            }
            s += w * t.comps[idx].value() * u.comps[idx].value();
        }
        s
    }

    fn laplacian(&self, t: &Tensor) -> Tensor {
        self.trace(&self.cov(&self.cov(t)), 0, 1)
    }

    /// `grad_a v_b + grad_b v_a - (div v) sigma_ab` on the unit sphere.
    fn sym_traceless(&self, v: &Tensor) -> Tensor {
        let g = self.cov(v);
        let div = self.trace(&g, 0, 1).comps[0];
        let mut comps = Vec::with_capacity(4);
        for a in 0..2 {
            for b in 0..2 {
                let s = g.comps[2 * a + b].add(&g.comps[2 * b + a]);
                comps.push(s.sub(&div.mul(&self.metric(a, b))));
            }
        }
        Tensor { rank: 2, comps }
    }

    /// `sigma^{cb} grad_c T_ab`.
    fn divergence2(&self, t: &Tensor) -> Tensor {
        self.trace(&self.cov(t), 0, 2)
    }

    /// Trace-free Hessian of a scalar.
    fn hessian_tf(&self, y: &Jet) -> Tensor {
        let h = self.cov(&self.scalar_grad(y));
        let tr = self.trace(&h, 0, 1).comps[0].scale(0.5);
        let mut comps = Vec::with_capacity(4);
        for a in 0..2 {
            for b in 0..2 {
                comps.push(h.comps[2 * a + b].sub(&tr.mul(&self.metric(a, b))));
            }
        }
        Tensor { rank: 2, comps }
    }
}

fn tensor_lin(a: &Tensor, sa: f64, b: &Tensor, sb: f64) -> Tensor {
    let comps = a.comps.iter().zip(&b.comps).map(|(x, y)| x.scale(sa).add(&y.scale(sb))).collect();
    Tensor { rank: a.rank, comps }
}

fn tensor_scale(a: &Tensor, s: f64) -> Tensor {
    Tensor { rank: a.rank, comps: a.comps.iter().map(|x| x.scale(s)).collect() }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if libm::fabs(dz) < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Outcome of one identity in the self-test.
#[derive(Clone, Debug, PartialEq)]
pub enum CheckStatus {
    Passed,
    Failed,
    Skipped(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub ell: Option<u32>,
    /// Relative residual (`|lhs - rhs| / max(1, |rhs|)` or an `L^2` ratio).
    pub residual: f64,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestReport {
    pub ell_max: u32,
    pub n_theta: usize,
    pub n_phi: usize,
    pub tolerance: f64,
    pub checks: Vec<IdentityCheck>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Failed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| !matches!(c.status, CheckStatus::Skipped(_)))
            .map(|c| c.residual)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelftestOptions {
    pub tolerance: f64,
    /// Added to every closed-form constant before comparison. Non-zero only
    /// in negative-control tests.
    pub constant_perturbation: f64,
    /// Radius at which the `D`, `D^dagger` identities are evaluated.
    pub radius: f64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions { tolerance: 1e-10, constant_perturbation: 0.0, radius: 1.0 }
    }
}

/// Sections of one harmonic at one node.
struct NodeFields {
    y: Jet,
    z1: Tensor,
    z2: Tensor,
    y1: Tensor,
    y2: Tensor,
}

/// Deterministic coefficients in `[-1, 1)` for random linear combinations.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

/// Build harmonics on a Gauss-Legendre x uniform grid and compare every
/// closed-form constant and identity with its quadrature value.
pub fn quadrature_selftest(ell_max: u32, n_theta: usize, n_phi: usize) -> Result<SelftestReport> {
    quadrature_selftest_with(ell_max, n_theta, n_phi, SelftestOptions::default())
}

pub fn quadrature_selftest_with(
    ell_max: u32,
    n_theta: usize,
    n_phi: usize,
    opts: SelftestOptions,
) -> Result<SelftestReport> {
    if ell_max == 0 || ell_max > 6 {
        return Err(Error::InvalidConfig("selftest needs 1 <= ell_max <= 6"));
    }
    if n_theta < 2 * ell_max as usize + 2 || n_phi < 2 * ell_max as usize + 1 {
        return Err(Error::InvalidConfig("selftest grid too coarse for ell_max"));
    }
    let (xs, ws) = gauss_legendre(n_theta);
    let dphi = 2.0 * core::f64::consts::PI / n_phi as f64;
    let r = opts.radius;

    let modes: Vec<(u32, i32)> =
        (1..=ell_max).flat_map(|l| (-(l as i32)..=l as i32).map(move |m| (l, m))).collect();

    // Accumulators per ell: norms, gradients, eigen residual energies.
    let nl = ell_max as usize + 1;
    let mut acc = vec![Acc::default(); nl];
    // Random-combination identities and orthonormality.
    let mut gram_err: f64 = 0.0;
    let mut id = IdAcc::default();
    let mut rng = Lcg(0x5eed);
    let coeffs: Vec<[f64; 4]> = modes.iter().map(|_| [rng.next(), rng.next(), rng.next(), rng.next()]).collect();
    let nm = modes.len();
    let mut gram = vec![0.0; nm * nm];
    let mut gram_z = vec![0.0; nm * nm];

    for (i, &xt) in xs.iter().enumerate() {
        let theta = libm::acos(xt);
        let chart = Chart::new(theta);
        for j in 0..n_phi {
            let phi = j as f64 * dphi;
            let w = ws[i] * dphi;
            let fields: Vec<NodeFields> = modes
                .iter()
                .map(|&(l, m)| {
                    let y = harmonic_jet(l as usize, m, theta, phi);
                    let y1 = chart.scalar_grad(&y);
                    let z1 = chart.rotate(&y1);
                    let z2 = {
                        let g = chart.cov(&z1);
                        let comps = (0..2)
                            .flat_map(|a| (0..2).map(move |b| (a, b)))
                            .map(|(a, b)| g.comps[2 * a + b].add(&g.comps[2 * b + a]))
                            .collect();
                        Tensor { rank: 2, comps }
                    };
                    let y2 = chart.hessian_tf(&y);
                    NodeFields { y, z1, z2, y1, y2 }
                })
                .collect();

            for (k, nf) in fields.iter().enumerate() {
                let (l, _) = modes[k];
                let lam = (l * (l + 1)) as f64;
                let a = &mut acc[l as usize];
                a.n1 += w * chart.dot(&nf.z1, &nf.z1);
                a.n2 += w * chart.dot(&nf.z2, &nf.z2);
                let gz1 = chart.cov(&nf.z1);
                let gz2 = chart.cov(&nf.z2);
                a.grad1 += w * chart.dot(&gz1, &gz1);
                a.grad2 += w * chart.dot(&gz2, &gz2);
                let lap1 = chart.laplacian(&nf.z1);
                let res1 = tensor_lin(&lap1, 1.0, &nf.z1, lam - 1.0);
                a.eig1_res += w * chart.dot(&res1, &res1);
                let lap2 = chart.laplacian(&nf.z2);
                let res2 = tensor_lin(&lap2, 1.0, &nf.z2, lam - 4.0);
                a.eig2_res += w * chart.dot(&res2, &res2);
                let lapy1 = chart.laplacian(&nf.y1);
                let resy1 = tensor_lin(&lapy1, 1.0, &nf.y1, lam - 1.0);
                a.eigy1_res += w * chart.dot(&resy1, &resy1);
                a.ny1 += w * chart.dot(&nf.y1, &nf.y1);
                // D Z = r Z_ab and D^dagger Z_ab = 2(lambda-2)/r Z_a.
                let dz = tensor_scale(&chart.sym_traceless(&nf.z1), r);
                let dres = tensor_lin(&dz, 1.0, &nf.z2, -r);
                a.d_res += w * chart.dot(&dres, &dres);
                let ddz = tensor_scale(&chart.divergence2(&nf.z2), -2.0 / r);
                let ddres = tensor_lin(&ddz, 1.0, &nf.z1, -2.0 * (lam - 2.0) / r);
                a.ddag_res += w * chart.dot(&ddres, &ddres);
                for (k2, nf2) in fields.iter().enumerate() {
                    gram[k * nm + k2] += w * nf.y.value() * nf2.y.value();
                    gram_z[k * nm + k2] += w * chart.dot(&nf.z1, &nf2.z1);
                }
            }

            // Random sections mixing odd and even parts of every harmonic.
            let mut phi1 = Tensor { rank: 1, comps: vec![Jet::zero(); 2] };
            let mut psi2 = Tensor { rank: 2, comps: vec![Jet::zero(); 4] };
            for (k, nf) in fields.iter().enumerate() {
                let c = coeffs[k];
                phi1 = tensor_lin(&phi1, 1.0, &tensor_lin(&nf.z1, c[0], &nf.y1, c[1]), 1.0);
                if modes[k].0 >= 2 {
                    psi2 = tensor_lin(&psi2, 1.0, &tensor_lin(&nf.z2, c[2], &nf.y2, c[3]), 1.0);
                }
            }
            // Spacetime contractions: r^-2 per angular index.
            let s1 = 1.0 / (r * r);
            let s2 = s1 * s1;
            let d_phi = tensor_scale(&chart.sym_traceless(&phi1), r);
            let dd_psi = tensor_scale(&chart.divergence2(&psi2), -2.0 / r);
            let g_phi = chart.cov(&phi1);
            let g_psi = chart.cov(&psi2);
            id.dphi_sq += w * s2 * chart.dot(&d_phi, &d_phi);
            id.grad_phi_sq += w * s2 * chart.dot(&g_phi, &g_phi);
            id.phi_sq += w * s1 * chart.dot(&phi1, &phi1);
            id.ddpsi_sq += w * s1 * chart.dot(&dd_psi, &dd_psi);
            id.grad_psi_sq += w * s2 * s1 * chart.dot(&g_psi, &g_psi);
            id.psi_sq += w * s2 * chart.dot(&psi2, &psi2);
            id.dphi_psi += w * s2 * chart.dot(&d_phi, &psi2);
            id.phi_ddpsi += w * s1 * chart.dot(&phi1, &dd_psi);
        }
    }

    for k in 0..nm {
        for k2 in 0..nm {
            let expect = if k == k2 { 1.0 } else { 0.0 };
            gram_err = gram_err.max(libm::fabs(gram[k * nm + k2] - expect));
            let lam = (modes[k].0 * (modes[k].0 + 1)) as f64;
            let expect_z = if k == k2 { lam } else { 0.0 };
            gram_err = gram_err.max(libm::fabs(gram_z[k * nm + k2] - expect_z) / lam);
        }
    }

    let tol = opts.tolerance;
    let eps = opts.constant_perturbation;
    let mut checks = Vec::new();
    let push = |checks: &mut Vec<IdentityCheck>, name: &str, ell: Option<u32>, residual: f64| {
        let status = if residual <= tol { CheckStatus::Passed } else { CheckStatus::Failed };
        checks.push(IdentityCheck { name: String::from(name), ell, residual, status });
    };
    push(&mut checks, "orthonormality", None, gram_err);

    // Each mode m contributes equally, so per-ell sums divide by 2l+1.
    for l in 1..=ell_max {
        let a = &acc[l as usize];
        let count = (2 * l + 1) as f64;
        let wts = weights(ModeIndex::new(l, 0)?);
        let rel = |q: f64, c: f64| libm::fabs(q / count - (c + eps)) / libm::fabs(c + eps).max(1.0);
        let same = |a: f64, b: f64| libm::fabs(a - b) / libm::fabs(b).max(1.0);
        push(&mut checks, "n1", Some(l), rel(a.n1, wts.n1));
        push(&mut checks, "grad1", Some(l), rel(a.grad1, wts.grad1));
        push(&mut checks, "eig1", Some(l), libm::sqrt(a.eig1_res / a.n1) / (1.0 - wts.eig1));
        push(&mut checks, "eig_even1", Some(l), libm::sqrt(a.eigy1_res / a.ny1) / (1.0 - wts.eig1));
        if l >= 2 {
            push(&mut checks, "n2", Some(l), rel(a.n2, wts.n2));
            push(&mut checks, "grad2", Some(l), rel(a.grad2, wts.grad2));
            push(&mut checks, "eig2", Some(l), libm::sqrt(a.eig2_res / a.n2) / (1.0 + libm::fabs(wts.eig2)));
            push(&mut checks, "d_coefficient", Some(l), libm::sqrt(a.d_res / a.n2) / r);
            push(&mut checks, "ddag_coefficient", Some(l), libm::sqrt(a.ddag_res / a.n1) * r / (2.0 * (wts.lambda - 2.0)));
            push(&mut checks, "l2_identity_d", Some(l), same(wts.n2, 2.0 * wts.grad1 - 2.0 * wts.n1 - eps));
            push(
                &mut checks,
                "l2_identity_ddag",
                Some(l),
                same(
                    4.0 * (wts.lambda - 2.0) * (wts.lambda - 2.0) * wts.n1,
                    2.0 * wts.grad2 + 4.0 * wts.n2 - eps,
                ),
            );
            push(&mut checks, "adjoint", Some(l), same(r * wts.n2 / libm::pow(r, 4.0), 2.0 * (wts.lambda - 2.0) / r * wts.n1 / (r * r) - eps));
        } else {
            let n2 = libm::fabs(a.n2 / count);
            let status = if n2 <= tol { CheckStatus::Skipped("empty basis, skipped") } else { CheckStatus::Failed };
            checks.push(IdentityCheck { name: String::from("tensor_section"), ell: Some(l), residual: n2, status });
        }
    }

    let scale1 = libm::fabs(id.dphi_sq).max(1.0);
    push(
        &mut checks,
        "l2_identity_d_sections",
        None,
        libm::fabs(id.dphi_sq - (2.0 * r * r * id.grad_phi_sq - 2.0 * id.phi_sq)) / scale1,
    );
    if ell_max >= 2 {
        let scale2 = libm::fabs(id.ddpsi_sq).max(1.0);
        push(
            &mut checks,
            "l2_identity_ddag_sections",
            None,
            libm::fabs(id.ddpsi_sq - (2.0 * r * r * id.grad_psi_sq + 4.0 * id.psi_sq)) / scale2,
        );
        let scale3 = libm::fabs(id.dphi_psi).max(1.0);
        push(&mut checks, "adjoint_sections", None, libm::fabs(id.dphi_psi - id.phi_ddpsi) / scale3);
    }

    Ok(SelftestReport { ell_max, n_theta, n_phi, tolerance: tol, checks })
}

#[derive(Clone, Copy, Default)]
struct Acc {
    n1: f64,
    n2: f64,
    grad1: f64,
    grad2: f64,
    eig1_res: f64,
    eig2_res: f64,
    eigy1_res: f64,
    ny1: f64,
    d_res: f64,
    ddag_res: f64,
}

#[derive(Default)]
struct IdAcc {
    dphi_sq: f64,
    grad_phi_sq: f64,
    phi_sq: f64,
    ddpsi_sq: f64,
    grad_psi_sq: f64,
    psi_sq: f64,
    dphi_psi: f64,
    phi_ddpsi: f64,
}
