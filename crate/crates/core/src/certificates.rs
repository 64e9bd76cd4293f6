//! Exact positivity certificates for the radial polynomials behind the
//! coercivity of the Morawetz and boundary currents.
//!
//! Every expression is written in `x = M/r` with `M = 1`, so `[2M, inf)`
//! becomes `(0, 1/2]` and `[3M, inf)` becomes `(0, 1/3]`. Claims state that a
//! polynomial is positive on an open interval. Roots at the endpoints are
//! divided out exactly and reported; the cofactor is then bounded below on
//! dyadic subintervals by a Taylor expansion about the midpoint evaluated in
//! exact rationals, so no floating-point value enters a decision.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::geometry::{profiles, PotentialKind, Sector};
use crate::poly::{Poly, Scalar};

type Q = BigRational;
type P = Poly<Q>;

/// Default cap on the number of subintervals examined for one claim.
pub const MAX_SUBINTERVALS: u64 = 1 << 24;

/// Smaller budget for the optional exact-minimum refinement.
const REFINE_SUBINTERVALS: u64 = 1 << 16;

fn q(n: i64, d: i64) -> Q {
    Q::ratio(n, d)
}

/// A polynomial that should be positive on the open interval `(lo, hi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    pub id: String,
    pub poly: P,
    pub lo: Q,
    pub hi: Q,
}

impl Claim {
    pub fn new(id: impl Into<String>, poly: P, lo: Q, hi: Q) -> Self {
        Claim { id: id.into(), poly, lo, hi }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Certified,
    Failed,
    Inconclusive,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Certified => "certified",
            Status::Failed => "failed",
            Status::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub id: String,
    pub lo: Q,
    pub hi: Q,
    /// Subintervals on which the cofactor bound was established.
    pub subdivisions: u64,
    /// A rational lower bound for the polynomial on `[lo, hi]`.
    pub lower_bound: Q,
    /// Whether `lower_bound` is the exact minimum, attained at an endpoint.
    pub exact_minimum: bool,
    /// Multiplicity of the root at `lo` and at `hi` (0 if the value is nonzero).
    pub endpoint_orders: (u32, u32),
    pub status: Status,
    /// A point where the claim is violated, for failed claims.
    pub witness: Option<Q>,
}

impl CertificateReport {
    pub fn lower_bound_f64(&self) -> f64 {
        self.lower_bound.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }

    /// One-line description of the endpoint behaviour.
    pub fn boundary_note(&self) -> String {
        let (a, b) = self.endpoint_orders;
        match (a, b) {
            (0, 0) => String::from("nonzero at both endpoints"),
            (a, 0) => format!("root of order {a} at x = {}", self.lo),
            (0, b) => format!("root of order {b} at x = {}", self.hi),
            (a, b) => format!("roots of order {a} at x = {} and {b} at x = {}", self.lo, self.hi),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CertifyOptions {
    pub max_subintervals: u64,
    /// Try to prove that the smaller endpoint value is the exact minimum.
    pub refine_minimum: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { max_subintervals: MAX_SUBINTERVALS, refine_minimum: true }
    }
}

/// Divide out the root at `e` as often as it occurs.
fn strip_root(p: &P, e: &Q) -> (P, u32) {
    let mut p = p.clone();
    let mut k = 0;
    while !p.is_zero() && p.eval(e).is_zero() {
        p = p.div_linear(e).0;
        k += 1;
    }
    (p, k)
}

/// Coefficients of `p(c + t)` in powers of `t`.
fn taylor_shift(p: &P, c: &Q) -> Vec<Q> {
    let mut d: Vec<Q> = p.coeffs().to_vec();
    let n = d.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let add = d[j + 1].clone() * c.clone();
            d[j] = d[j].clone() + add;
        }
    }
    d
}

/// Lower bound of `sum d_k t^k` over `|t| <= w`. Even powers with positive
/// coefficients are dropped, every other term is bounded by `-|d_k| w^k`.
fn local_lower_bound(d: &[Q], w: &Q) -> Q {
    let mut bound = d.first().cloned().unwrap_or_else(Q::zero);
    let mut wk = Q::one();
    for (k, dk) in d.iter().enumerate().skip(1) {
        wk = wk * w.clone();
        if k % 2 == 0 && !dk.is_negative() {
            continue;
        }
        bound = bound - dk.abs() * wk.clone();
    }
    bound
}

enum Outcome {
    Positive { leaves: u64, bound: Q },
    Counterexample(Q),
    Exhausted,
}

/// Prove `p > 0` on the closed interval `[lo, hi]` by dyadic bisection.
fn bisect_positive(p: &P, lo: &Q, hi: &Q, cap: u64) -> Outcome {
    for e in [lo, hi] {
        if !p.eval(e).is_positive() {
            return Outcome::Counterexample(e.clone());
        }
    }
    let two = Q::int(2);
    let mut stack = vec![(lo.clone(), hi.clone())];
    let (mut visited, mut leaves) = (0u64, 0u64);
    let mut bound: Option<Q> = None;
    while let Some((a, b)) = stack.pop() {
        visited += 1;
        if visited > cap {
            return Outcome::Exhausted;
        }
        let c = (a.clone() + b.clone()) / two.clone();
        let d = taylor_shift(p, &c);
        if !d[0].is_positive() {
            return Outcome::Counterexample(c);
        }
        let lb = local_lower_bound(&d, &((b.clone() - a.clone()) / two.clone()));
        if lb.is_positive() {
            leaves += 1;
            bound = Some(match bound {
                Some(m) if m <= lb => m,
                _ => lb,
            });
        } else {
            // right half first on the stack so the left half is examined first
            stack.push((c.clone(), b));
            stack.push((a, c));
        }
    }
    Outcome::Positive { leaves, bound: bound.unwrap_or_else(Q::zero) }
}

/// Certify a single claim.
pub fn certify(claim: &Claim, opts: &CertifyOptions) -> CertificateReport {
    let (lo, hi) = (&claim.lo, &claim.hi);
    let mut report = CertificateReport {
        id: claim.id.clone(),
        lo: lo.clone(),
        hi: hi.clone(),
        subdivisions: 0,
        lower_bound: Q::zero(),
        exact_minimum: false,
        endpoint_orders: (0, 0),
        status: Status::Inconclusive,
        witness: None,
    };
    if claim.poly.is_zero() || lo >= hi {
        report.status = Status::Failed;
        report.witness = Some(lo.clone());
        return report;
    }
    let (p1, a) = strip_root(&claim.poly, lo);
    let (mut cof, b) = strip_root(&p1, hi);
    report.endpoint_orders = (a, b);
    // on (lo, hi) the factor (x - hi)^b has sign (-1)^b
    if b % 2 == 1 {
        cof = -cof;
    }
    match bisect_positive(&cof, lo, hi, opts.max_subintervals) {
        Outcome::Counterexample(w) => {
            report.status = Status::Failed;
            report.witness = Some(w);
            return report;
        }
        Outcome::Exhausted => return report,
        Outcome::Positive { leaves, bound } => {
            report.status = Status::Certified;
            report.subdivisions = leaves;
            // p = (x-lo)^a (x-hi)^b cof, so with no endpoint root the cofactor bound is a bound for p
            report.lower_bound = if a == 0 && b == 0 { bound } else { Q::zero() };
            report.exact_minimum = a > 0 || b > 0;
        }
    }
    if opts.refine_minimum && !report.exact_minimum {
        let (vlo, vhi) = (claim.poly.eval(lo), claim.poly.eval(hi));
        let (m, at) = if vlo <= vhi { (vlo, lo) } else { (vhi, hi) };
        let shifted = &claim.poly - &P::constant(m.clone());
        let probe = Claim::new(String::new(), shifted, lo.clone(), hi.clone());
        let sub = certify(&probe, &CertifyOptions { max_subintervals: REFINE_SUBINTERVALS, refine_minimum: false });
        let root_at_min = if at == lo { sub.endpoint_orders.0 } else { sub.endpoint_orders.1 };
        if sub.is_certified() && root_at_min > 0 {
            report.lower_bound = m;
            report.exact_minimum = true;
        }
    }
    report
}

fn lambda_of(ell: u32) -> Q {
    Q::int(ell as i64 * (ell as i64 + 1))
}

fn x_poly() -> P {
    P::monomial(1)
}

fn lapse() -> P {
    profiles::lapse::<Q>()
}

fn photon() -> P {
    P::from_ints(&[1, -3])
}

/// The transcribed quintic `8 - 24x - 54x^2 + 108x^3 + 513x^4 - 891x^5`.
pub fn quintic() -> P {
    P::from_ints(&[8, -24, -54, 108, 513, -891])
}

/// The `H0` Morawetz bulk coefficient of `|H0|^2`, angular term bounded below
/// by `|H0|^2 / r^2`, times `4 r^3`. Built from the multiplier profiles, it
/// must reproduce [`quintic`].
pub fn morawetz_h0_coefficient() -> P {
    let f = profiles::f::<Q>(Sector::H0);
    let omega = profiles::omega::<Q>(Sector::H0);
    let v = PotentialKind::V0.poly::<Q>();
    let c = bulk_zeroth(&f, &omega, &v) + &(&f * &P::monomial(3)) * &photon();
    c.shift_down(3).scale(&Q::int(4))
}

/// `-box(omega)/4 - (1/2) f F dV/dr - x^2 f V`.
fn bulk_zeroth(f: &P, omega: &P, v: &P) -> P {
    let box_omega = profiles::box_static(omega);
    let a = box_omega.scale(&q(-1, 4));
    let b = (&(f * &lapse()) * &v.d_dr()).scale(&q(-1, 2));
    let c = -(&(&P::monomial(2) * f) * v);
    &(&a + &b) + &c
}

pub fn quintic_claim() -> Claim {
    Claim::new("quintic", quintic(), Q::zero(), q(1, 2))
}

/// Positivity of the Morawetz `H0` coefficient on `[2M, inf)`.
pub fn verify_quintic() -> CertificateReport {
    certify(&quintic_claim(), &CertifyOptions::default())
}

/// Determinant of the boundary energy form in `(|H1|, |H2|)`, with diagonal
/// `h1 (lambda + 4 - 18x)` and `(lambda - 2)/2` and off-diagonal `-(2 lambda - 4)^{1/2}`.
pub fn boundary_form_determinant(ell: u32, h1: i64) -> P {
    let lam = lambda_of(ell);
    let two = Q::int(2);
    (&boundary_form_diagonal(ell, h1) * &P::constant((lam.clone() - two.clone()) / two.clone()))
        - P::constant(two * lam - Q::int(4))
}

/// First diagonal entry `h1 (lambda + 4 - 18x)` of the boundary form.
pub fn boundary_form_diagonal(ell: u32, h1: i64) -> P {
    P::new(vec![lambda_of(ell) + Q::int(4), Q::int(-18)]).scale(&Q::int(h1))
}

fn boundary_claims(ell: u32) -> Result<Vec<Claim>> {
    if ell < 2 {
        return Err(Error::InvalidMode { ell, m: 0 });
    }
    let mut out = Vec::new();
    let mut push = |h1: i64, lo: Q, hi: Q, tag: &str| {
        out.push(Claim::new(format!("boundary-form/l{ell}/h1={h1}/{tag}/diagonal"), boundary_form_diagonal(ell, h1), lo.clone(), hi.clone()));
        out.push(Claim::new(format!("boundary-form/l{ell}/h1={h1}/{tag}/determinant"), boundary_form_determinant(ell, h1), lo, hi));
    };
    if ell == 2 {
        push(5, q(1, 4), q(1, 2), "r-2M-4M");
        push(1, Q::zero(), q(1, 3), "r-3M-inf");
    } else {
        push(1, Q::zero(), q(1, 2), "r-2M-inf");
    }
    Ok(out)
}

/// Positivity of the boundary energy form: for `l = 2` with weight 5 on
/// `[2M, 4M]` and weight 1 on `[3M, inf)`, for `l >= 3` with weight 1 on `[2M, inf)`.
pub fn verify_h0_boundary_form(ell: u32) -> Result<Vec<CertificateReport>> {
    Ok(boundary_claims(ell)?.iter().map(|c| certify(c, &CertifyOptions::default())).collect())
}

/// Radial building blocks of the coupled-pair Morawetz bulk.
struct PairBulk {
    f: P,
    df: P,
    b1: P,
    b2: P,
    /// `(f / r^3)(1 - 3M/r)`.
    g: P,
    /// `4 - 18x + 12x^2`.
    k: P,
    /// Denominator of the Cauchy-Schwarz remainder `A1`.
    den: P,
    /// Numerator of `A1`.
    num: P,
}

impl PairBulk {
    fn new() -> Self {
        let f = profiles::f::<Q>(Sector::H12);
        let omega = profiles::omega::<Q>(Sector::H12);
        let df = f.d_dr();
        let b1 = bulk_zeroth(&f, &omega, &PotentialKind::V1.poly());
        let b2 = bulk_zeroth(&f, &omega, &PotentialKind::V2.poly());
        let lap = lapse();
        let x = x_poly();
        let g = &(&f * &P::monomial(3)) * &photon();
        let k = P::from_ints(&[4, -18, 12]);
        let lap_f = &lap * &f;
        let den = {
            let a = &(&lap * &lap) * &df.scale(&Q::int(2));
            let b = (&(&x * &lap) * &df).scale(&q(-1, 2));
            let c = (&P::monomial(2) * &lap_f).scale(&Q::int(12));
            (&(&a + &b) + &c).scale(&Q::int(4))
        };
        let num = {
            let t = (&P::monomial(3) * &lap_f).scale(&Q::int(36));
            &t * &t
        };
        PairBulk { f, df, b1, b2, g, k, den, num }
    }

    /// `-D_out` times the positive denominator of `A1`.
    fn dout(&self, lam: &Q) -> P {
        let one = Q::one();
        let first = &(&self.den * &(&self.b1.scale(&Q::int(2)) + &self.g.scale(&(Q::int(2) * (lam.clone() - one))))) - &self.num;
        let second = &self.b2 + &self.g.scale(&(lam.clone() - Q::int(4)));
        let cross = &(&(&self.den * &(&self.f * &self.f)) * &P::monomial(6)) * &(&self.k * &self.k);
        (&first * &second).scale(&Q::int(4)) - cross.scale(&(Q::int(2) * lam.clone() - Q::int(4)))
    }

    /// `(2 B1 - A1) B2 + 2 g^2 lambda^2`, cleared of the `A1` denominator.
    fn near_first(&self, lam: &Q) -> P {
        let a = &(&(&self.den * &self.b1.scale(&Q::int(2))) - &self.num) * &self.b2;
        let b = (&self.den * &(&self.g * &self.g)).scale(&(Q::int(2) * lam.clone() * lam.clone()));
        &a + &b
    }

    /// `4 (2 B1 + 2 B2 - A1) - 2 f K^2 / (r^3 (1 - 3M/r))`, cleared of the `A1` denominator.
    fn near_second(&self) -> P {
        let sum = (&self.b1 + &self.b2).scale(&Q::int(2));
        let a = (&(&self.den * &sum) - &self.num).scale(&Q::int(4));
        let (f_reduced, rem) = self.f.div_linear(&q(1, 3));
        debug_assert!(rem.is_zero());
        // 1 - 3x = -3 (x - 1/3)
        let f_over = f_reduced.scale(&q(-1, 3));
        let b = (&(&self.den * &f_over) * &(&P::monomial(3) * &(&self.k * &self.k))).scale(&Q::int(2));
        &a - &b
    }
}

/// The two polynomials whose positivity yields `|K| <= 4 (1 - 3x)` on `(0, 10/33]`.
fn tail_bound_claims() -> Vec<Claim> {
    let k = P::from_ints(&[4, -18, 12]);
    let four_ph = photon().scale(&Q::int(4));
    let hi = q(10, 33);
    vec![
        Claim::new("dout/tail/upper", &four_ph - &k, Q::zero(), hi.clone()),
        Claim::new("dout/tail/lower", &four_ph + &k, Q::zero(), hi),
    ]
}

/// `l = 2` quadratic form in `(H2, d_r H2)` on `[2M, 3M]`: entries and determinant.
fn inner_form_claims() -> Vec<Claim> {
    let pb = PairBulk::new();
    let lap = lapse();
    let lap2 = &lap * &lap;
    let a = &(&pb.df - &(&P::monomial(2) * &pb.f).scale(&Q::int(6))) * &lap2;
    let c = &pb.g.scale(&Q::int(2)) + &pb.b2;
    let b = {
        let t1 = (&(&P::monomial(2) * &lap2) * &pb.df).scale(&Q::int(-3));
        let ph2 = &photon() * &photon();
        let t2 = (&(&(&pb.f * &P::monomial(2)) * &lap) * &ph2).scale(&Q::int(-4));
        &t1 + &t2
    };
    let det = &(&a * &c).scale(&Q::int(4)) - &(&b * &b);
    let (lo, hi) = (q(1, 3), q(1, 2));
    vec![
        Claim::new("dout/l2/inner/gradient", a, lo.clone(), hi.clone()),
        Claim::new("dout/l2/inner/zeroth", c, lo.clone(), hi.clone()),
        Claim::new("dout/l2/inner/determinant", det, lo, hi),
    ]
}

/// `l = 2` quadratic form in `(d_r H1, H2, H1)` on `[3M, inf)`: leading minors.
fn outer_form_claims() -> Vec<Claim> {
    let pb = PairBulk::new();
    let lap = lapse();
    let lap_f = &lap * &pb.f;
    let p = {
        let a = (&(&lap * &lap) * &pb.df).scale(&Q::int(2));
        let b = (&P::monomial(2) * &lap_f).scale(&Q::int(12));
        &a + &b
    };
    let r = {
        let a = pb.g.scale(&Q::int(10));
        let b = pb.b1.scale(&Q::int(2));
        let c = (&(&P::monomial(3) * &lap) * &pb.df).scale(&Q::int(18));
        &(&a + &b) + &c
    };
    let s = {
        let a = (&P::monomial(3) * &lap_f).scale(&Q::int(36));
        let b = (&(&P::monomial(2) * &lap) * &pb.df).scale(&Q::int(6));
        &a + &b
    };
    let t = &pb.g.scale(&Q::int(2)) + &pb.b2;
    // square of the H1-H2 coupling (f/r^3)|K| (2 lambda - 4)^{1/2} at lambda = 6
    let k2 = (&(&(&pb.f * &pb.f) * &P::monomial(6)) * &(&pb.k * &pb.k)).scale(&Q::int(8));
    let det = {
        let a = (&(&p * &t) * &r).scale(&Q::int(4));
        let b = &p * &k2;
        let c = &t * &(&s * &s);
        &(&a - &b) - &c
    };
    let (lo, hi) = (Q::zero(), q(1, 3));
    vec![
        Claim::new("dout/l2/outer/gradient", p, lo.clone(), hi.clone()),
        Claim::new("dout/l2/outer/tensor", t, lo.clone(), hi.clone()),
        Claim::new("dout/l2/outer/determinant", det, lo, hi),
    ]
}

/// Positivity claims for the coupled-pair Morawetz bulk at harmonic number `l`.
pub fn dout_claims(ell: u32) -> Result<Vec<Claim>> {
    if ell < 2 {
        return Err(Error::InvalidMode { ell, m: 0 });
    }
    if ell == 2 {
        let mut v = inner_form_claims();
        v.extend(outer_form_claims());
        return Ok(v);
    }
    let pb = PairBulk::new();
    let lam = lambda_of(ell);
    let (zero, third, near) = (Q::zero(), q(1, 3), q(10, 33));
    let mut v = vec![
        Claim::new("dout/denominator", pb.den.clone(), zero.clone(), third.clone()),
        Claim::new(format!("dout/l{ell}"), pb.dout(&lam), zero, third.clone()),
        Claim::new(format!("dout/l{ell}/near/first"), pb.near_first(&lam), near.clone(), third.clone()),
        Claim::new("dout/near/second", pb.near_second(), near, third),
    ];
    if ell >= 4 {
        v.extend(tail_bound_claims());
    }
    Ok(v)
}

/// Coefficients of `-D_out` (cleared) as a quadratic in `mu = lambda - lambda_0`.
pub fn dout_in_mu(lambda0: &Q) -> [P; 3] {
    let pb = PairBulk::new();
    let d0 = pb.dout(lambda0);
    let d1 = pb.dout(&(lambda0.clone() + Q::one()));
    let d2 = pb.dout(&(lambda0.clone() + Q::int(2)));
    let c2 = (&(&d2 - &d1.scale(&Q::int(2))) + &d0).scale(&q(1, 2));
    let c1 = &(&d1 - &d0) - &c2;
    [d0, c1, c2]
}

/// Claims covering every `l >= 7` at once: each coefficient of `-D_out` as a
/// quadratic in `lambda - 56` is positive on `(0, 1/3)`.
pub fn dout_large_l_claims() -> Vec<Claim> {
    let [c0, c1, c2] = dout_in_mu(&lambda_of(7));
    let (lo, hi) = (Q::zero(), q(1, 3));
    vec![
        Claim::new("dout/l>=7/constant", c0, lo.clone(), hi.clone()),
        Claim::new("dout/l>=7/linear", c1, lo.clone(), hi.clone()),
        Claim::new("dout/l>=7/quadratic", c2, lo, hi),
    ]
}

/// Certify the coupled-pair Morawetz positivity claims at harmonic number `l`.
pub fn verify_dout(ell: u32) -> Result<Vec<CertificateReport>> {
    Ok(dout_claims(ell)?.iter().map(|c| certify(c, &CertifyOptions::default())).collect())
}

/// Every claim: the quintic, the boundary forms for `l = 2, 3`, the
/// pair-bulk claims for `2 <= l <= 6` and the family covering `l >= 7`.
/// Duplicates shared between harmonic numbers appear once.
pub fn all_claims() -> Vec<Claim> {
    let mut out = vec![quintic_claim()];
    for ell in [2, 3] {
        out.extend(boundary_claims(ell).unwrap_or_default());
    }
    for ell in 2..=6 {
        for c in dout_claims(ell).unwrap_or_default() {
            if !out.iter().any(|o| o.id == c.id) {
                out.push(c);
            }
        }
    }
    out.extend(dout_large_l_claims());
    out
}

/// Rational from a decimal or fraction string such as `1/3` or `0.25`.
pub fn parse_rational(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        return (!d.is_zero()).then(|| Q::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let neg = int.starts_with('-');
    let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
    let n: BigInt = digits.parse().ok()?;
    let d = num_traits::pow(BigInt::from(10), frac.len());
    let v = Q::new(n, d);
    Some(if neg { -v } else { v })
}
