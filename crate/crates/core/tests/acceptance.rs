//! End-to-end acceptance suite. Runs every criterion at its stated tolerance,
//! prints one line per criterion and exits nonzero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use oddpert_core::certificates::{self, CertificateReport};
use oddpert_core::diagnostics::*;
use oddpert_core::evolve::*;
use oddpert_core::geometry::Background;
use oddpert_core::grid::Grid;
use oddpert_core::harmonics::{quadrature_selftest, ModeIndex};
use oddpert_core::modesystem::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn grid(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
    let spec = GridSpec { rstar_min: lo, rstar_max: hi, n_points: n, cfl: 0.5 };
    Arc::new(Grid::new(spec, Background::new(1.0).unwrap()).unwrap())
}

fn mode(l: u32) -> ModeIndex {
    ModeIndex::new(l, 0).unwrap()
}

fn config(system: System, l: u32, t_final: f64, data: InitialDataSpec) -> EvolutionConfig {
    EvolutionConfig {
        system,
        mode: mode(l),
        t_final,
        snapshot_stride: usize::MAX,
        probe_radii: Vec::new(),
        initial_data: data,
        causally_clean: false,
        energy: None,
        potential_off: false,
    }
}

fn bump(center: f64, width: f64) -> InitialDataSpec {
    InitialDataSpec { kind: InitialKind::MomentarilyStaticBump, center, width, amplitude: 1.0, target: TargetField::H1 }
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn l2(g: &Grid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * g.h()).sqrt()
}

fn step_n(mut s: State, n: usize) -> Vec<State> {
    let g = s.grid().clone();
    let mut out = vec![s.clone()];
    for _ in 0..n {
        s = step(&s, g.dt(), StepOptions::default()).unwrap();
        out.push(s.clone());
    }
    out
}

fn criterion_1() -> Outcome {
    let report = quadrature_selftest(4, 16, 33).unwrap();
    let worst = report.max_residual();
    outcome(report.passed() && worst <= 1e-10, format!("max identity residual {worst:.2e} (tol 1e-10)"))
}

fn smooth_profile(rng: &mut StdRng, g: &Grid) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-20.0..60.0), rng.random_range(1.5..6.0))).collect();
    g.rstar
        .iter()
        .map(|s| terms.iter().map(|(a, c, w)| a * (-((s - c) / w).powi(2)).exp()).sum())
        .collect()
}

/// Pointwise `|v| / scale`. Below `MIN_POSITIVE / EPSILON` the scale itself
/// has lost relative precision to gradual underflow, so it is floored there.
fn worst_relative(v: &[f64], scale: &[f64]) -> f64 {
    let floor = f64::MIN_POSITIVE / f64::EPSILON;
    v.iter().zip(scale).map(|(a, s)| a.abs() / s.max(floor)).fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let g = grid(-40.0, 80.0, 800);
    let mut rng = StdRng::seed_from_u64(20_240_917);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let ell = 1 + (k % 4) as u32;
        let mut gen = GeneratorFields::zeros(mode(ell), g.clone());
        gen.x = smooth_profile(&mut rng, &g);
        gen.dtx = smooth_profile(&mut rng, &g);
        let s = pure_gauge_fields(&gen).unwrap();
        worst = worst.max(worst_relative(&derive_p(&s), &derive_p_scale(&s)));
        if ell >= 2 {
            worst = worst.max(worst_relative(&derive_q(&s).unwrap(), &derive_q_scale(&s).unwrap()));
        }
    }
    outcome(worst <= 1e-12, format!("100 generators, worst relative p/q {worst:.2e} (tol 1e-12)"))
}

const KERR_DOMAIN: (f64, f64) = (-80.0, 300.0);
const KERR_GRIDS: [usize; 3] = [2048, 4096, 8192];

fn criterion_3() -> Outcome {
    let g0 = grid(KERR_DOMAIN.0, KERR_DOMAIN.1, KERR_GRIDS[0]);
    let k = kerr_mode(g0.clone(), 0).unwrap();
    // exact d/dr* of 2M/r^2 is -4M f / r^3
    let dh1: Vec<f64> = (0..g0.len()).map(|i| -4.0 * g0.lapse[i] / g0.r[i].powi(3)).collect();
    let c = gauge_residual_with_derivative(&k, &dh1).unwrap();
    let exact_res = c.iter().zip(&g0.r).map(|(c, r)| (c * r.powi(3)).abs()).fold(0.0, f64::max);

    let probes = [10.0, 20.0, 40.0, 100.0];
    let probe_error = |rec: &StepRecord| rec.probes.iter().map(|pv| (pv.p.unwrap() * pv.r / 3.0 - 1.0).abs()).fold(0.0, f64::max);
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let mut drift = Vec::new();
    let mut evolved_p = Vec::new();
    let mut sampled_p = 0.0;
    for n in KERR_GRIDS {
        let g = grid(KERR_DOMAIN.0, KERR_DOMAIN.1, n);
        let init = State::Coupled(kerr_mode(g.clone(), 0).unwrap());
        let mut cfg = config(System::Coupled, 1, 50.0, InitialDataSpec { kind: InitialKind::Kerr, center: 0.0, width: 1.0, amplitude: 1.0, target: TargetField::H1 });
        cfg.probe_radii = probes.to_vec();
        let run = evolve_from(init.clone(), &cfg).unwrap();
        let (a, b) = (init.as_coupled().unwrap(), run.final_state().unwrap().as_coupled().unwrap());
        drift.push(diff(&a.h0, &b.h0).max(diff(&a.h1, &b.h1)).max(diff(&a.dth0, &b.dth0)).max(diff(&a.dth1, &b.dth1)));
        sampled_p = probe_error(&run.records[0]);
        evolved_p.push(probe_error(run.records.last().unwrap()));
    }
    let (o1, o2) = (order(drift[0], drift[1]), order(drift[1], drift[2]));
    let p_order = order(evolved_p[1], evolved_p[2]);
    let pass = exact_res <= 1e-12 && o1 >= 3.5 && o2 >= 3.5 && sampled_p <= 1e-10 && p_order >= 3.5;
    outcome(
        pass,
        format!(
            "exact-derivative residual {exact_res:.1e}; drift {:.2e}/{:.2e}/{:.2e}, orders {o1:.2}/{o2:.2}; \
             max |r p/3 - 1| at probes {sampled_p:.1e} sampled, {:.1e} after t = 50 (order {p_order:.2})",
            drift[0], drift[1], drift[2], evolved_p[2]
        ),
    )
}

const CONSTRAINT_GRIDS: [usize; 3] = [2000, 4000, 8000];

struct ConstraintRun {
    ratio: f64,
    rw_p: f64,
    rw_q: f64,
}

fn constraint_run(n: usize) -> ConstraintRun {
    let g = grid(-30.0, 170.0, n);
    let cfg = config(System::Coupled, 2, 100.0, bump(20.0, 3.0));
    let run = evolve(&cfg, g.clone()).unwrap();
    assert!(run.failure.is_none());
    let last = run.final_state().unwrap().clone();
    let c = gauge_residual(last.as_coupled().unwrap());
    let ratio = l2(&g, &c) / last.field_l2();
    // time stencil on every other step: still proportional to the grid, but
    // clear of the roundoff floor of a second difference over one step
    let series: Vec<ModeFields> =
        step_n(last, 8).into_iter().step_by(2).map(|s| s.as_coupled().unwrap().clone()).collect();
    let res = rw_consistency(&series, Window { rstar_min: -20.0, rstar_max: 160.0 }).unwrap();
    let r = &res[0];
    ConstraintRun { ratio, rw_p: r.p_l2, rw_q: r.q_l2.unwrap() }
}

fn criteria_4_and_5() -> (Outcome, Outcome) {
    let runs: Vec<ConstraintRun> = CONSTRAINT_GRIDS.into_iter().map(constraint_run).collect();
    let o = order(runs[1].ratio, runs[2].ratio);
    let h = 200.0 / (CONSTRAINT_GRIDS[2] - 1) as f64;
    let k = runs[2].ratio / h.powi(4);
    let c4 = outcome(
        o >= 3.5,
        format!(
            "|C|/|u| at t=100M: {:.2e}/{:.2e}/{:.2e}, order {o:.2} (K = {k:.2e})",
            runs[0].ratio, runs[1].ratio, runs[2].ratio
        ),
    );
    let op = order(runs[1].rw_p, runs[2].rw_p);
    let oq = order(runs[1].rw_q, runs[2].rw_q);
    let c5 = outcome(
        op >= 3.5 && oq >= 3.5,
        format!(
            "RW residual p {:.2e}/{:.2e}/{:.2e} order {op:.2}; q {:.2e}/{:.2e}/{:.2e} order {oq:.2}",
            runs[0].rw_p, runs[1].rw_p, runs[2].rw_p, runs[0].rw_q, runs[1].rw_q, runs[2].rw_q
        ),
    );
    (c4, c5)
}

fn criterion_6() -> Outcome {
    let g = Arc::new(Grid::new(GridSpec::default(), Background::new(1.0).unwrap()).unwrap());
    let mut cfg = config(System::Coupled, 2, 60.0, bump(20.0, 3.0));
    cfg.snapshot_stride = 4;
    let run = evolve(&cfg, g.clone()).unwrap();
    // the final snapshot may follow a shortened step; keep the equally spaced ones
    let dt = g.dt();
    let series: Vec<State> =
        run.snapshots.iter().filter(|s| ((s.time() / (4.0 * dt)) - (s.time() / (4.0 * dt)).round()).abs() < 1e-6).cloned().collect();
    let w = Window { rstar_min: -10.0, rstar_max: 120.0 };
    let b = flux_balance(CurrentSector::H0, &series, w).unwrap();
    let (with, without) = (b.relative(), b.relative_without_source());
    let pass = with <= 0.01 && without >= 10.0 * with;
    outcome(pass, format!("H0 defect {:.2e} of E0 with source work, {:.2e} without (ratio {:.1})", with, without, without / with))
}

fn criterion_7() -> Outcome {
    let w = Window { rstar_min: -20.0, rstar_max: 60.0 };
    let mut worst = f64::INFINITY;
    let mut lines = Vec::new();
    for sector in [CurrentSector::H0, CurrentSector::H12] {
        for tag in [CurrentTag::T, CurrentTag::Redshift, CurrentTag::Morawetz, CurrentTag::Rp(DELTA), CurrentTag::Rp(2.0 - DELTA)] {
            let res: Vec<f64> = [1200, 2400, 4800]
                .into_iter()
                .map(|n| {
                    let g = grid(-40.0, 80.0, n);
                    let s0 = initial_data(&bump(10.0, 3.0), System::Coupled, g.clone(), mode(2)).unwrap();
                    let steps = (30.0 / g.dt()).round() as usize;
                    let s = step_n(s0, steps).pop().unwrap();
                    let series = step_n(s, 4);
                    divergence_check(CurrentKind { tag, sector }, &series, &CurrentParams::for_mass(1.0), w).unwrap()
                })
                .collect();
            let o = order(res[0], res[1]).min(order(res[1], res[2]));
            worst = worst.min(o);
            lines.push(format!("{sector:?}/{tag:?} {o:.2}"));
        }
    }
    outcome(worst >= 3.0, format!("lowest order {worst:.2} ({})", lines.join(", ")))
}

fn certificate_run() -> Vec<CertificateReport> {
    let mut out = vec![certificates::verify_quintic()];
    for ell in [2, 3] {
        out.extend(certificates::verify_h0_boundary_form(ell).unwrap());
    }
    for ell in 2..=6 {
        out.extend(certificates::verify_dout(ell).unwrap());
    }
    out
}

fn criterion_8() -> Outcome {
    let a = certificate_run();
    let b = certificate_run();
    let quintic = &a[0];
    let failed: Vec<&str> = a.iter().filter(|r| !r.is_certified()).map(|r| r.id.as_str()).collect();
    let quintic_ok = quintic.is_certified()
        && quintic.exact_minimum
        && quintic.lower_bound >= certificates::parse_rational("7/32").unwrap();
    let pass = failed.is_empty() && quintic_ok && a == b;
    outcome(
        pass,
        format!(
            "{} claims, {} not certified {:?}; quintic minimum {} exact={}; deterministic={}",
            a.len(),
            failed.len(),
            failed,
            quintic.lower_bound,
            quintic.exact_minimum,
            a == b
        ),
    )
}

fn criterion_9() -> Outcome {
    let g = grid(-80.0, 300.0, 4096);
    let mut state = kerr_mode(g.clone(), 0).unwrap();
    for i in 0..g.len() {
        state.h0[i] *= 2.5;
        state.h1[i] *= 2.5;
    }
    let pulse_spec = InitialDataSpec { kind: InitialKind::PureGauge, center: 30.0, width: 3.0, amplitude: 1.0, target: TargetField::X };
    let pulse = initial_data(&pulse_spec, System::Coupled, g.clone(), mode(1)).unwrap();
    let pulse = pulse.as_coupled().unwrap();
    let add = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    add(&mut state.h0, &pulse.h0);
    add(&mut state.h1, &pulse.h1);
    add(&mut state.dth0, &pulse.dth0);
    add(&mut state.dth1, &pulse.dth1);
    let mut cfg = config(System::Coupled, 1, 120.0, pulse_spec);
    cfg.probe_radii = vec![10.0, 20.0, 40.0];
    let run = evolve_from(State::Coupled(state), &cfg).unwrap();
    // the outgoing half of the pulse passes r = 40 (r* ~ 44) by t ~ 30
    let window = (60.0, 120.0);
    let est = extract_dm(&run.records, window).unwrap();
    let err = (est.value / 2.5 - 1.0).abs();
    let cleaned = subtract_kerr(run.final_state().unwrap().as_coupled().unwrap(), est.value).unwrap();
    let p = derive_p(&cleaned);
    let residual = cfg
        .probe_radii
        .iter()
        .map(|&r| {
            let i = g.index_of_radius(r).unwrap();
            (g.r[i] * p[i] / 3.0).abs()
        })
        .fold(0.0, f64::max);
    let pass = err <= 0.01 && residual <= 0.01 * 2.5;
    outcome(pass, format!("d_m = {:.6} (rel err {err:.1e}); static 3/r amplitude after subtraction {residual:.1e}", est.value))
}

fn criterion_10() -> Outcome {
    let g = grid(-30.0, 300.0, 13200);
    let mut cfg = config(System::Coupled, 2, 150.0, bump(20.0, 3.0));
    cfg.snapshot_stride = (4.0 / g.dt()).round() as usize;
    let run = evolve(&cfg, g.clone()).unwrap();
    assert!(run.failure.is_none());
    let opts = EnergyOptions { p_exponent: DELTA, r_min: 2.0, r_max: 10.0, ..EnergyOptions::default() };
    let mut times = Vec::new();
    let mut energies = Vec::new();
    for s in &run.snapshots {
        let rec = state_energies(s, &opts).unwrap();
        times.push(s.time());
        // energies of the metric components; the derived invariants are not
        // usable next to the truncated inner boundary
        energies.push(rec.iter().filter(|e| matches!(e.field_id, FieldId::H0 | FieldId::H1H2)).map(|e| e.value).sum::<f64>());
    }
    let window = (50.0, 150.0);
    let inside: Vec<f64> = times.iter().zip(&energies).filter(|(t, _)| **t >= window.0 && **t <= window.1).map(|(_, e)| *e).collect();
    let monotone = inside.windows(2).all(|w| w[1] < w[0]);
    let fit = fit_decay(&times, &energies, window).unwrap();
    let pass = monotone && fit.slope <= -1.5;
    outcome(
        pass,
        format!(
            "H0 + H1H2, {} samples in [50M,150M], monotone={monotone}, log-log slope {:.2} (qualitative stand-in, target <= -1.5)",
            inside.len(),
            fit.slope
        ),
    )
}

fn report(n: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    report_timed(n, budget, t.elapsed(), o)
}

fn report_timed(n: &str, budget: Duration, el: Duration, o: Outcome) -> bool {
    let in_time = el <= budget;
    let pass = o.pass && in_time;
    println!(
        "acceptance {n:>2}: {} [{:.1} s, budget {} s] {}",
        if pass { "PASS" } else { "FAIL" },
        el.as_secs_f64(),
        budget.as_secs(),
        o.detail
    );
    pass
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: &str| filter.is_empty() || filter.iter().any(|f| f == n);
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut ok = true;
    if wanted("1") {
        ok &= report("1", Duration::from_secs(5), criterion_1);
    }
    if wanted("2") {
        ok &= report("2", Duration::from_secs(5), criterion_2);
    }
    if wanted("3") {
        ok &= report("3", min(3), criterion_3);
    }
    if wanted("4") || wanted("5") {
        // criterion 5 reuses the runs of criterion 4, so both report the shared time
        let t = Instant::now();
        let (c4, c5) = criteria_4_and_5();
        let el = t.elapsed();
        ok &= report_timed("4", min(5), el, c4);
        ok &= report_timed("5", min(5), el, c5);
    }
    if wanted("6") {
        ok &= report("6", min(5), criterion_6);
    }
    if wanted("7") {
        ok &= report("7", min(10), criterion_7);
    }
    if wanted("8") {
        ok &= report("8", min(2), criterion_8);
    }
    if wanted("9") {
        ok &= report("9", min(3), criterion_9);
    }
    if wanted("10") {
        ok &= report("10", min(10), criterion_10);
    }
    if !ok {
        std::process::exit(1);
    }
}
