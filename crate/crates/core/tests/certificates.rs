use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use oddpert_core::certificates::*;
use oddpert_core::poly::{Poly, Scalar};
use proptest::prelude::*;

type Q = BigRational;

fn q(n: i64, d: i64) -> Q {
    Q::ratio(n, d)
}

fn find<'a>(reports: &'a [CertificateReport], id: &str) -> &'a CertificateReport {
    reports.iter().find(|r| r.id == id).unwrap_or_else(|| panic!("no report {id}"))
}

#[test]
fn quintic_endpoint_values() {
    let p = quintic();
    assert_eq!(p.eval(&Q::zero()), Q::int(8));
    // 8 - 12 - 27/2 + 27/2 + 513/16 - 891/32
    assert_eq!(p.eval(&q(1, 2)), q(7, 32));
}

#[test]
fn quintic_is_the_morawetz_coefficient() {
    assert_eq!(morawetz_h0_coefficient(), quintic());
}

#[test]
fn quintic_certifies_with_exact_minimum() {
    let r = verify_quintic();
    assert_eq!(r.status, Status::Certified, "{r:?}");
    assert!(r.exact_minimum);
    assert_eq!(r.lower_bound, q(7, 32));
    assert!(r.subdivisions <= 1 << 20);
    assert_eq!(r.endpoint_orders, (0, 0));
}

#[test]
fn boundary_form_determinant_by_hand() {
    // (lambda - 2) [h1 (lambda + 4 - 18x) / 2 - 2]
    assert_eq!(boundary_form_determinant(2, 5), Poly::from_ints(&[92, -180]));
    assert_eq!(boundary_form_determinant(2, 1), Poly::from_ints(&[12, -36]));
    assert_eq!(boundary_form_determinant(3, 1), Poly::from_ints(&[60, -90]));
}

#[test]
fn boundary_form_claims() {
    let l2 = verify_h0_boundary_form(2).unwrap();
    assert!(l2.iter().all(|r| r.is_certified()), "{l2:?}");
    let near = find(&l2, "boundary-form/l2/h1=5/r-2M-4M/determinant");
    assert_eq!(near.endpoint_orders, (0, 0));
    assert!(near.lower_bound > Q::zero());
    // weight 1 is only semidefinite: the determinant vanishes at the photon sphere
    let far = find(&l2, "boundary-form/l2/h1=1/r-3M-inf/determinant");
    assert_eq!(far.endpoint_orders, (0, 1));
    let l3 = verify_h0_boundary_form(3).unwrap();
    assert!(l3.iter().all(|r| r.is_certified() && r.endpoint_orders == (0, 0)), "{l3:?}");
    assert!(verify_h0_boundary_form(1).is_err());
}

#[test]
fn unit_weight_fails_inside_the_photon_sphere_for_l2() {
    let det = boundary_form_determinant(2, 1);
    assert!(det.eval(&(q(1, 3) + q(1, 100))) < Q::zero());
    let r = certify(&Claim::new("probe", det, q(1, 4), q(1, 2)), &CertifyOptions::default());
    assert_eq!(r.status, Status::Failed);
    let w = r.witness.unwrap();
    assert!(boundary_form_determinant(2, 1).eval(&w) <= Q::zero());
}

#[test]
fn pair_bulk_claims_certify_for_low_harmonics() {
    for ell in 2..=6 {
        let reports = verify_dout(ell).unwrap();
        for r in &reports {
            assert_eq!(r.status, Status::Certified, "l = {ell}: {r:?}");
        }
    }
    assert!(verify_dout(1).is_err());
}

#[test]
fn pair_bulk_boundary_behaviour() {
    let l3 = verify_dout(3).unwrap();
    // the cleared discriminant keeps the x^8 factor from r -> inf but is nonzero at r = 3M
    assert_eq!(find(&l3, "dout/l3").endpoint_orders, (8, 0));
    assert_eq!(find(&l3, "dout/denominator").endpoint_orders, (2, 0));
    let l2 = verify_dout(2).unwrap();
    // the inner form degenerates on the horizon
    assert_eq!(find(&l2, "dout/l2/inner/gradient").endpoint_orders, (0, 2));
    assert_eq!(find(&l2, "dout/l2/inner/determinant").endpoint_orders, (0, 2));
    assert_eq!(find(&l2, "dout/l2/inner/zeroth").endpoint_orders, (0, 0));
}

#[test]
fn tail_bound_is_tight_at_the_matching_radius() {
    let reports = verify_dout(4).unwrap();
    let lower = find(&reports, "dout/tail/lower");
    assert!(lower.is_certified());
    // 8 - 30x + 12x^2 at x = 10/33
    let p = Poly::<Q>::from_ints(&[8, -30, 12]);
    assert_eq!(p.eval(&q(10, 33)), q(12, 1089));
    assert!(lower.lower_bound <= q(12, 1089));
}

#[test]
fn discriminant_changes_sign_for_l2() {
    let [c0, _, _] = dout_in_mu(&Q::int(6));
    let r = certify(&Claim::new("l2", c0, Q::zero(), q(1, 3)), &CertifyOptions::default());
    assert_eq!(r.status, Status::Failed);
}

#[test]
fn large_harmonic_family() {
    let [c0, c1, c2] = dout_in_mu(&Q::int(56));
    // l = 8 has lambda = 72 = 56 + 16
    let direct = dout_claims(8).unwrap().into_iter().find(|c| c.id == "dout/l8").unwrap().poly;
    let mu = Q::int(16);
    let recombined = &(&c0 + &c1.scale(&mu)) + &c2.scale(&(mu.clone() * mu));
    assert_eq!(direct, recombined);
    for c in dout_large_l_claims() {
        let r = certify(&c, &CertifyOptions::default());
        assert!(r.is_certified(), "{r:?}");
    }
}

/// `-D_out` from the displayed formulas in f64 with numerical radial derivatives.
fn dout_f64(ell: u32, r: f64) -> f64 {
    let lam = (ell * (ell + 1)) as f64;
    let lapse = |r: f64| 1.0 - 2.0 / r;
    let f = |r: f64| (1.0 + 3.0 / r + 2.0 / (r * r)) * (1.0 - 3.0 / r);
    // f = 1 - 7/r^2 - 6/r^3 expanded by hand
    let df = |r: f64| 14.0 / r.powi(3) + 18.0 / r.powi(4);
    let d = |g: &dyn Fn(f64) -> f64, r: f64| {
        let h = 1e-2;
        (g(r - 2.0 * h) - 8.0 * g(r - h) + 8.0 * g(r + h) - g(r + 2.0 * h)) / (12.0 * h)
    };
    let d2 = |g: &dyn Fn(f64) -> f64, r: f64| {
        let h = 1e-2;
        (-g(r - 2.0 * h) + 16.0 * g(r - h) - 30.0 * g(r) + 16.0 * g(r + h) - g(r + 2.0 * h)) / (12.0 * h * h)
    };
    let omega = |r: f64| lapse(r) * (df(r) + 2.0 * f(r) / r);
    let box_omega = lapse(r) * d2(&omega, r) + 2.0 / (r * r) * d(&omega, r) + 2.0 * lapse(r) / r * d(&omega, r);
    let v1 = |r: f64| (5.0 - 18.0 / r) / (r * r);
    let v2 = |r: f64| 2.0 / (r * r);
    let b = |v: &dyn Fn(f64) -> f64| -0.25 * box_omega - 0.5 * f(r) * lapse(r) * d(v, r) - f(r) / (r * r) * v(r);
    let (b1, b2) = (b(&v1), b(&v2));
    let fp = df(r);
    let a1 = (36.0 / r.powi(3) * lapse(r) * f(r)).powi(2)
        / (4.0 * (2.0 * lapse(r).powi(2) * fp - 0.5 / r * lapse(r) * fp + 12.0 / (r * r) * lapse(r) * f(r)));
    let g = f(r) / r.powi(3) * (1.0 - 3.0 / r);
    let k = 4.0 - 18.0 / r + 12.0 / (r * r);
    4.0 * (2.0 * b1 - a1 + 2.0 * g * (lam - 1.0)) * (b2 + g * (lam - 4.0)) - (f(r) / r.powi(3) * k).powi(2) * (2.0 * lam - 4.0)
}

#[test]
fn cleared_discriminant_matches_the_displayed_formula() {
    let claims = dout_claims(3).unwrap();
    let cleared = &claims.iter().find(|c| c.id == "dout/l3").unwrap().poly;
    let den = &claims.iter().find(|c| c.id == "dout/denominator").unwrap().poly;
    for r in [3.2f64, 3.5, 5.0, 10.0, 40.0] {
        let x = Q::ratio((1e6 / r).round() as i64, 1_000_000);
        let rr = 1.0 / x.to_f64().unwrap();
        let mine = (cleared.eval(&x) / den.eval(&x)).to_f64().unwrap();
        let oracle = dout_f64(3, rr);
        assert!((mine - oracle).abs() < 1e-7 * oracle.abs(), "r = {rr}: {mine} vs {oracle}");
        assert!(oracle > 0.0);
    }
}

#[test]
fn all_claims_have_unique_ids() {
    let claims = all_claims();
    for (i, a) in claims.iter().enumerate() {
        assert!(claims[i + 1..].iter().all(|b| b.id != a.id), "{}", a.id);
    }
}

#[test]
fn exhausted_budget_is_inconclusive() {
    // (x - 1/3)^2 + 1e-12 is positive but needs a fine subdivision near 1/3
    let p = &Poly::from_ints(&[-1, 3]) * &Poly::from_ints(&[-1, 3]);
    let p = &p + &Poly::constant(q(1, 1_000_000_000_000));
    let opts = CertifyOptions { max_subintervals: 8, refine_minimum: false };
    let r = certify(&Claim::new("tight", p.clone(), Q::zero(), Q::int(1)), &opts);
    assert_eq!(r.status, Status::Inconclusive);
    let r = certify(&Claim::new("tight", p, Q::zero(), Q::int(1)), &CertifyOptions::default());
    assert_eq!(r.status, Status::Certified);
}

fn small_rational() -> impl Strategy<Value = Q> {
    (1i64..200, 1i64..200).prop_map(|(n, d)| q(n, d + n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn certified_bounds_hold_at_sampled_points(num in 0i64..=1000) {
        let claims = all_claims();
        let claim = &claims[(num as usize) % claims.len()];
        let r = certify(claim, &CertifyOptions { refine_minimum: false, ..CertifyOptions::default() });
        prop_assert!(r.is_certified());
        let x = claim.lo.clone() + (claim.hi.clone() - claim.lo.clone()) * q(num, 1000);
        prop_assert!(claim.poly.eval(&x) >= r.lower_bound);
    }

    #[test]
    fn products_of_positive_factors_certify(roots in proptest::collection::vec(small_rational(), 1..5)) {
        // every factor (x + a) with a > 0 is positive on [0, 1]
        let mut p = Poly::constant(Q::int(1));
        for a in &roots {
            p = &p * &Poly::new(vec![a.clone(), Q::int(1)]);
        }
        let c = Claim::new("product", p, Q::zero(), Q::int(1));
        let a = certify(&c, &CertifyOptions::default());
        prop_assert!(a.is_certified());
        prop_assert_eq!(a, certify(&c, &CertifyOptions::default()));
    }

    #[test]
    fn interior_roots_are_found(root in small_rational()) {
        // (x - a)(x + 1) with a in (0, 1) is negative just left of a
        let p = &Poly::new(vec![-root.clone(), Q::int(1)]) * &Poly::from_ints(&[1, 1]);
        let r = certify(&Claim::new("root", p.clone(), Q::zero(), Q::int(1)), &CertifyOptions::default());
        prop_assert_eq!(r.status, Status::Failed);
        prop_assert!(p.eval(r.witness.as_ref().unwrap()) <= Q::zero());
    }
}
