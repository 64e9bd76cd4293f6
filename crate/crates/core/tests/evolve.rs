use std::sync::Arc;

use oddpert_core::evolve::*;
use oddpert_core::geometry::Background;
use oddpert_core::grid::Grid;
use oddpert_core::harmonics::ModeIndex;
use oddpert_core::modesystem::{gauge_residual, kerr_mode, ModeFields};
use oddpert_core::Error;

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

fn bump(kind: InitialKind, target: TargetField, center: f64, width: f64) -> InitialDataSpec {
    InitialDataSpec { kind, center, width, amplitude: 1.0, target }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2(g: &Grid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * g.h()).sqrt()
}

fn kerr_drift(n: usize) -> f64 {
    let g = grid(-40.0, 120.0, n);
    let init = State::Coupled(kerr_mode(g.clone(), 0).unwrap());
    let cfg = config(System::Coupled, 1, 10.0, bump(InitialKind::Kerr, TargetField::H1, 0.0, 1.0));
    let run = evolve_from(init.clone(), &cfg).unwrap();
    assert!(run.failure.is_none());
    let end = run.final_state().unwrap();
    let (a, b) = (init.as_coupled().unwrap(), end.as_coupled().unwrap());
    max_diff(&a.h0, &b.h0).max(max_diff(&a.h1, &b.h1)).max(max_diff(&a.dth0, &b.dth0))
}

#[test]
fn kerr_mode_drifts_at_fourth_order() {
    let d: Vec<f64> = [400, 800, 1600].into_iter().map(kerr_drift).collect();
    let o1 = (d[0] / d[1]).log2();
    let o2 = (d[1] / d[2]).log2();
    assert!(o1 > 3.5 && o2 > 3.5, "{d:?} orders {o1} {o2}");
}

#[test]
fn flat_pulse_moves_at_unit_speed() {
    let g = grid(-100.0, 300.0, 4001);
    let mut cfg = config(System::Rw, 2, 50.0, bump(InitialKind::RwBump, TargetField::P, 100.0, 3.0));
    cfg.potential_off = true;
    let run = evolve(&cfg, g.clone()).unwrap();
    let end = run.final_state().unwrap().as_rw().unwrap();
    assert!((end.time - 50.0).abs() < 1e-9);
    // d'Alembert: two half-amplitude copies centred at 50 and 150
    for (i, s) in g.rstar.iter().enumerate() {
        let z1 = (s - 50.0) / 3.0;
        let z2 = (s - 150.0) / 3.0;
        let exact = 0.5 * ((-z1 * z1).exp() + (-z2 * z2).exp());
        assert!((end.p[i] - exact).abs() < 1e-5, "{s}: {} vs {exact}", end.p[i]);
    }
}

#[test]
fn outgoing_pulse_leaves_through_the_boundaries() {
    let g = grid(-60.0, 60.0, 1201);
    let mut cfg = config(System::Rw, 2, 140.0, bump(InitialKind::RwBump, TargetField::P, 0.0, 3.0));
    cfg.potential_off = true;
    let run = evolve(&cfg, g.clone()).unwrap();
    let end = run.final_state().unwrap().as_rw().unwrap();
    let left = end.p.iter().chain(&end.dtp).fold(0.0f64, |a, x| a.max(x.abs()));
    assert!(left < 1e-3, "reflected amplitude {left}");
}

fn constraint_ratio(n: usize) -> f64 {
    let g = grid(-40.0, 80.0, n);
    let cfg = config(System::Coupled, 2, 20.0, bump(InitialKind::MomentarilyStaticBump, TargetField::H1, 15.0, 3.0));
    let run = evolve(&cfg, g.clone()).unwrap();
    assert!(run.failure.is_none());
    let s = run.final_state().unwrap();
    let c = gauge_residual(s.as_coupled().unwrap());
    l2(&g, &c) / s.field_l2()
}

#[test]
fn gauge_constraint_stays_at_truncation_level() {
    let r: Vec<f64> = [480, 960, 1920].into_iter().map(constraint_ratio).collect();
    let o = (r[1] / r[2]).log2();
    assert!(r[2] < 1e-5, "{r:?}");
    assert!(o > 3.5, "{r:?} order {o}");
}

#[test]
fn evolution_is_linear() {
    let g = grid(-30.0, 60.0, 600);
    let a = initial_data(&bump(InitialKind::MomentarilyStaticBump, TargetField::H1, 10.0, 3.0), System::Coupled, g.clone(), mode(2)).unwrap();
    let b = initial_data(&bump(InitialKind::MomentarilyStaticBump, TargetField::H2, 5.0, 2.0), System::Coupled, g.clone(), mode(2)).unwrap();
    let combine = |x: &ModeFields, y: &ModeFields, ca: f64, cb: f64| {
        let mut out = x.clone();
        let lin = |u: &mut Vec<f64>, w: &[f64]| u.iter_mut().zip(w).for_each(|(a, b)| *a = ca * *a + cb * b);
        lin(&mut out.h0, &y.h0);
        lin(&mut out.h1, &y.h1);
        lin(&mut out.dth0, &y.dth0);
        lin(&mut out.dth1, &y.dth1);
        let (t, ty) = (out.tensor.as_mut().unwrap(), y.tensor.as_ref().unwrap());
        lin(&mut t.h2, &ty.h2);
        lin(&mut t.dth2, &ty.dth2);
        out
    };
    let sum = State::Coupled(combine(a.as_coupled().unwrap(), b.as_coupled().unwrap(), 2.0, -3.0));
    let opts = StepOptions::default();
    let (mut sa, mut sb, mut ss) = (a, b, sum);
    for _ in 0..40 {
        sa = step(&sa, g.dt(), opts).unwrap();
        sb = step(&sb, g.dt(), opts).unwrap();
        ss = step(&ss, g.dt(), opts).unwrap();
    }
    let lin = combine(sa.as_coupled().unwrap(), sb.as_coupled().unwrap(), 2.0, -3.0);
    let direct = ss.as_coupled().unwrap();
    let scale = direct.h1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(max_diff(&lin.h1, &direct.h1) < 1e-12 * scale);
    assert!(max_diff(&lin.h0, &direct.h0) < 1e-12 * scale);
}

#[test]
fn interior_values_ignore_a_distant_boundary() {
    // same spacing, different outer boundary
    let small = grid(-80.0, 300.0, 3801);
    let large = grid(-80.0, 400.0, 4801);
    assert_eq!(small.h(), large.h());
    let data = bump(InitialKind::MomentarilyStaticBump, TargetField::H1, 30.0, 3.0);
    let mut cfg = config(System::Coupled, 2, 100.0, data);
    cfg.probe_radii = vec![40.0];
    cfg.causally_clean = true;
    let a = evolve(&cfg, small).unwrap();
    let b = evolve(&cfg, large).unwrap();
    assert_eq!(a.records.len(), b.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.probes[0].r, rb.probes[0].r);
        assert_eq!(ra.probes[0].fields, rb.probes[0].fields, "t = {}", ra.time);
    }
}

#[test]
fn overflowing_state_aborts_with_partial_output() {
    let g = grid(-20.0, 40.0, 400);
    let mut data = bump(InitialKind::RwBump, TargetField::P, 10.0, 0.2);
    data.amplitude = 1e307;
    let mut cfg = config(System::Rw, 2, 20.0, data);
    cfg.snapshot_stride = 1;
    let run = evolve(&cfg, g).unwrap();
    assert!(matches!(run.failure, Some(Error::Instability { .. })), "{:?}", run.failure);
    assert!(!run.records.is_empty());
    assert!(run.records.last().unwrap().time < 20.0);
}

#[test]
fn configuration_errors() {
    let g = grid(-20.0, 40.0, 400);
    let data = bump(InitialKind::MomentarilyStaticBump, TargetField::H1, 10.0, 2.0);
    let mut cfg = config(System::Coupled, 2, 10.0, data);
    cfg.probe_radii = vec![1e6];
    assert!(matches!(evolve(&cfg, g.clone()), Err(Error::ProbeOutsideGrid(_))));
    cfg.probe_radii = vec![10.0];
    cfg.causally_clean = true;
    cfg.t_final = 100.0;
    assert!(evolve(&cfg, g.clone()).is_err());
    let mut cfg = config(System::Coupled, 1, 10.0, bump(InitialKind::MomentarilyStaticBump, TargetField::H2, 10.0, 2.0));
    assert!(matches!(evolve(&cfg, g.clone()), Err(Error::EmptyTensorSection)));
    cfg.initial_data.kind = InitialKind::Kerr;
    cfg.mode = mode(2);
    assert!(evolve(&cfg, g).is_err());
}

#[test]
fn snapshots_follow_the_stride() {
    let g = grid(-20.0, 40.0, 400);
    let mut cfg = config(System::Rw, 2, 50.0 * g.dt(), bump(InitialKind::RwBump, TargetField::P, 10.0, 2.0));
    cfg.snapshot_stride = 20;
    let run = evolve(&cfg, g.clone()).unwrap();
    let times: Vec<f64> = run.snapshots.iter().map(|s| s.time()).collect();
    let dt = g.dt();
    assert_eq!(times, vec![0.0, 20.0 * dt, 40.0 * dt, 50.0 * dt]);
    assert_eq!(run.records.len(), 51);
}
