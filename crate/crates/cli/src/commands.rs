use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use oddpert_core::certificates::{self, CertificateReport, CertifyOptions, Status};
use oddpert_core::diagnostics::{self, EnergyRecord};
use oddpert_core::evolve::{self, State, StepRecord};
use oddpert_core::harmonics::{self, CheckStatus, SelftestOptions};

use crate::config::RunConfig;
use crate::error::{CliError, ExitCode};
use crate::output::{create_dir, float, parallel_map, workers, CsvOut};

pub const SELFTEST_FILE: &str = "harmonics_selftest.csv";
pub const CERTIFICATE_FILE: &str = "certificates.csv";
pub const PROBE_FILE: &str = "probes.csv";
pub const ENERGY_FILE: &str = "energies.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Quadrature tolerance of the harmonic self-test.
pub const SELFTEST_TOLERANCE: f64 = 1e-10;

fn say(out: &mut dyn Write, line: std::fmt::Arguments) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::io("stdout", e))
}

pub struct SelftestArgs {
    pub ell_max: u32,
    pub n_theta: usize,
    pub n_phi: usize,
    pub out_dir: PathBuf,
    pub perturb_constant: f64,
}

pub fn harmonics_selftest(args: &SelftestArgs, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let opts = SelftestOptions { tolerance: SELFTEST_TOLERANCE, constant_perturbation: args.perturb_constant, ..SelftestOptions::default() };
    let report = harmonics::quadrature_selftest_with(args.ell_max, args.n_theta, args.n_phi, opts)
        .map_err(|e| CliError::new(ExitCode::Usage, e.to_string()))?;
    create_dir(&args.out_dir)?;
    let header: Vec<String> = ["check", "ell", "residual", "status"].map(String::from).to_vec();
    let mut csv = CsvOut::create(&args.out_dir.join(SELFTEST_FILE), &header)?;
    say(out, format_args!("{:<28} {:>3} {:>10} status", "check", "ell", "residual"))?;
    for c in &report.checks {
        let ell = c.ell.map(|l| l.to_string()).unwrap_or_default();
        let status = match c.status {
            CheckStatus::Passed => "passed",
            CheckStatus::Failed => "failed",
            CheckStatus::Skipped(_) => "skipped",
        };
        csv.row(&[c.name.clone(), ell.clone(), float(c.residual), status.to_string()])?;
        say(out, format_args!("{:<28} {:>3} {:>10.3e} {status}", c.name, ell, c.residual))?;
        if let (CheckStatus::Skipped(why), Some(l)) = (&c.status, c.ell) {
            say(out, format_args!("note: L(-2) skipped for ell = {l} ({why})"))?;
        }
    }
    csv.finish()?;
    let pass = report.passed();
    say(
        out,
        format_args!("{} checks, max residual {:.3e}, tolerance {:.0e}: {}", report.checks.len(), report.max_residual(), report.tolerance, if pass { "passed" } else { "FAILED" }),
    )?;
    Ok(if pass { ExitCode::Success } else { ExitCode::Failed })
}

pub struct CertifyArgs {
    pub filter: Option<String>,
    pub out_dir: PathBuf,
    pub max_subintervals: u64,
}

fn certificate_row(r: &CertificateReport) -> Vec<String> {
    vec![
        r.id.clone(),
        r.lo.to_string(),
        r.hi.to_string(),
        r.lower_bound.to_string(),
        float(r.lower_bound_f64()),
        r.exact_minimum.to_string(),
        r.subdivisions.to_string(),
        r.endpoint_orders.0.to_string(),
        r.endpoint_orders.1.to_string(),
        r.status.name().to_string(),
        r.witness.as_ref().map(|w| w.to_string()).unwrap_or_default(),
    ]
}

pub fn certify(args: &CertifyArgs, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let n_workers = workers()?;
    let claims: Vec<_> = certificates::all_claims()
        .into_iter()
        .filter(|c| args.filter.as_deref().is_none_or(|f| c.id.contains(f)))
        .collect();
    let opts = CertifyOptions { max_subintervals: args.max_subintervals, ..CertifyOptions::default() };
    let reports = parallel_map(&claims, n_workers, |c| certificates::certify(c, &opts));

    create_dir(&args.out_dir)?;
    let header: Vec<String> = [
        "claim_id", "lo", "hi", "lower_bound", "lower_bound_decimal", "exact_minimum", "subdivisions",
        "root_order_lo", "root_order_hi", "status", "witness",
    ]
    .map(String::from)
    .to_vec();
    let mut csv = CsvOut::create(&args.out_dir.join(CERTIFICATE_FILE), &header)?;
    if reports.is_empty() {
        eprintln!("warning: no claim matches {:?}", args.filter.as_deref().unwrap_or(""));
    }
    for r in &reports {
        csv.row(&certificate_row(r))?;
        let bound = if r.exact_minimum { "min" } else { ">=" };
        say(
            out,
            format_args!(
                "{:<44} x in ({}, {}) {bound} {} ({:.6e}) [{} subintervals] {}; {}",
                r.id, r.lo, r.hi, r.lower_bound, r.lower_bound_f64(), r.subdivisions, r.status.name(), r.boundary_note()
            ),
        )?;
    }
    csv.finish()?;
    let count = |s: Status| reports.iter().filter(|r| r.status == s).count();
    let (failed, inconclusive) = (count(Status::Failed), count(Status::Inconclusive));
    say(out, format_args!("{} claims: {} certified, {failed} failed, {inconclusive} inconclusive", reports.len(), count(Status::Certified)))?;
    Ok(if failed > 0 {
        ExitCode::Failed
    } else if inconclusive > 0 {
        ExitCode::Inconclusive
    } else {
        ExitCode::Success
    })
}

fn field_names(state: &State) -> Vec<&'static str> {
    let names: &[&'static str] = match state {
        State::Coupled(_) => &["h0", "h1", "h2"],
        State::Rw(_) => &["p", "q"],
        State::Generator(_) => &["x"],
    };
    names[..state.pairs().len()].to_vec()
}

fn write_probes(path: &Path, state: &State, records: &[StepRecord]) -> Result<(), CliError> {
    let names = field_names(state);
    let coupled = matches!(state, State::Coupled(_));
    let first = records.first();
    let with_q = coupled && first.is_some_and(|r| r.probes.iter().any(|p| p.q.is_some()));
    let mut header = vec![String::from("time")];
    if coupled {
        header.push(String::from("gauge_residual_l2"));
    }
    for pv in first.map(|r| r.probes.as_slice()).unwrap_or_default() {
        for n in &names {
            header.push(format!("{n}@r={}", pv.radius));
        }
        if coupled {
            header.push(format!("p@r={}", pv.radius));
            if with_q {
                header.push(format!("q@r={}", pv.radius));
            }
        }
    }
    let mut csv = CsvOut::create(path, &header)?;
    let opt = |v: Option<f64>| v.map(float).unwrap_or_default();
    for rec in records {
        let mut row = vec![float(rec.time)];
        if coupled {
            row.push(opt(rec.gauge_residual_l2));
        }
        for pv in &rec.probes {
            row.extend(pv.fields.iter().map(|v| float(*v)));
            if coupled {
                row.push(opt(pv.p));
                if with_q {
                    row.push(opt(pv.q));
                }
            }
        }
        csv.row(&row)?;
    }
    csv.finish()
}

fn write_snapshot(path: &Path, state: &State) -> Result<(), CliError> {
    let names = field_names(state);
    let mut header: Vec<String> = ["time", "rstar", "r"].map(String::from).to_vec();
    for n in &names {
        header.push(n.to_string());
        header.push(format!("dt_{n}"));
    }
    let mut csv = CsvOut::create(path, &header)?;
    let g = state.grid();
    let pairs = state.pairs();
    let t = float(state.time());
    for i in 0..g.len() {
        let mut row = vec![t.clone(), float(g.rstar[i]), float(g.r[i])];
        for (u, ut) in &pairs {
            row.push(float(u[i]));
            row.push(float(ut[i]));
        }
        csv.row(&row)?;
    }
    csv.finish()
}

fn snapshot_energies(state: &State, cfg: &RunConfig) -> Result<Vec<(EnergyRecord, EnergyRecord)>, oddpert_core::Error> {
    let mut rows = Vec::new();
    for &p in &cfg.energies {
        let full = diagnostics::state_energies(state, &cfg.energy_options(p, false))?;
        let deg = diagnostics::state_energies(state, &cfg.energy_options(p, true))?;
        rows.extend(full.into_iter().zip(deg));
    }
    Ok(rows)
}

pub fn evolve(config_path: &Path, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let grid = cfg.grid()?;
    let ecfg = cfg.evolution()?;
    let run = evolve::evolve(&ecfg, grid).map_err(CliError::config)?;
    let n_workers = workers()?;

    let dir = &cfg.outputs;
    create_dir(&dir.join(SNAPSHOT_DIR))?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.print()).map_err(|e| CliError::io(CONFIG_FILE, e))?;
    let first = run.snapshots.first().expect("the initial state is always kept");
    write_probes(&dir.join(PROBE_FILE), first, &run.records)?;
    for (k, s) in run.snapshots.iter().enumerate() {
        write_snapshot(&dir.join(SNAPSHOT_DIR).join(format!("snapshot_{k:05}.csv")), s)?;
    }

    let energies = parallel_map(&run.snapshots, n_workers, |s| snapshot_energies(s, &cfg));
    let header: Vec<String> = ["time", "field_id", "p", "energy", "degenerate_energy"].map(String::from).to_vec();
    let mut csv = CsvOut::create(&dir.join(ENERGY_FILE), &header)?;
    for rows in energies {
        let rows = rows.map_err(|e| CliError::new(ExitCode::Software, format!("energy: {e}")))?;
        for (full, deg) in rows {
            csv.row(&[float(full.time), full.field_id.name().to_string(), float(full.p_exponent), float(full.value), float(deg.value)])?;
        }
    }
    csv.finish()?;

    let t_end = run.snapshots.last().map(State::time).unwrap_or(0.0);
    say(out, format_args!("{} steps, {} snapshots, t = {t_end:.6} written to {}", run.records.len() - 1, run.snapshots.len(), dir.display()))?;
    match run.failure {
        Some(e) => Err(CliError::new(ExitCode::Software, format!("evolution aborted, partial output kept: {e}"))),
        None => Ok(ExitCode::Success),
    }
}

pub struct ReportArgs {
    pub energy_csv: PathBuf,
    pub window: (f64, f64),
    pub delta: f64,
    pub degenerate: bool,
    pub out: Option<PathBuf>,
}

/// Decay exponent of the weighted energy with weight `r^p`.
pub fn target_slope(p: f64, delta: f64) -> f64 {
    -2.0 + p + delta
}

struct Series {
    field_id: String,
    p: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

fn read_energy_csv(path: &Path, degenerate: bool) -> Result<Vec<Series>, CliError> {
    let data = |m: String| CliError::new(ExitCode::Data, format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| data(e.to_string()))?;
    let headers = reader.headers().map_err(|e| data(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| data(format!("missing column {name}")));
    let value_col = if degenerate { "degenerate_energy" } else { "energy" };
    let (it, ifield, ip, iv) = (column("time")?, column("field_id")?, column("p")?, column(value_col)?);
    let mut series: Vec<Series> = Vec::new();
    let mut index: HashMap<(String, u64), usize> = HashMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data(e.to_string()))?;
        let num = |i: usize| -> Result<f64, CliError> {
            let s = rec.get(i).unwrap_or("");
            s.trim().parse::<f64>().map_err(|_| data(format!("row {}: not a number: {s:?}", line + 2)))
        };
        let field = rec.get(ifield).unwrap_or("").to_string();
        let (t, p, v) = (num(it)?, num(ip)?, num(iv)?);
        let k = *index.entry((field.clone(), p.to_bits())).or_insert_with(|| {
            series.push(Series { field_id: field, p, times: Vec::new(), values: Vec::new() });
            series.len() - 1
        });
        series[k].times.push(t);
        series[k].values.push(v);
    }
    Ok(series)
}

pub fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let (lo, hi) = args.window;
    if !(lo < hi) {
        return Err(CliError::new(ExitCode::Usage, format!("empty fit window [{lo}, {hi}]")));
    }
    let series = read_energy_csv(&args.energy_csv, args.degenerate)?;
    if series.is_empty() {
        return Err(CliError::new(ExitCode::Data, format!("{}: no energy rows", args.energy_csv.display())));
    }
    let header: Vec<String> = ["field_id", "p", "window_start", "window_end", "samples", "slope", "intercept", "residual", "target", "above_target"]
        .map(String::from)
        .to_vec();
    let mut csv = match &args.out {
        Some(path) => Some(CsvOut::create(path, &header)?),
        None => None,
    };
    say(out, format_args!("{:<6} {:>8} {:>7} {:>10} {:>8}  flag", "field", "p", "samples", "slope", "target"))?;
    for s in &series {
        let inside = || s.times.iter().zip(&s.values).filter(|(t, _)| **t >= lo && **t <= hi);
        if inside().next().is_some() && inside().all(|(_, v)| *v == 0.0) {
            say(out, format_args!("{:<6} {:>8.4}  identically zero in the window, not fitted", s.field_id, s.p))?;
            continue;
        }
        let fit = diagnostics::fit_decay(&s.times, &s.values, args.window)
            .map_err(|e| CliError::new(ExitCode::Data, format!("{} p = {}: {e}", s.field_id, s.p)))?;
        let samples = inside().count();
        let target = target_slope(s.p, args.delta);
        let above = fit.slope > target;
        let line = format!(
            "{:<6} {:>8.4} {:>7} {:>10.4} {:>8.4}  {}",
            s.field_id, s.p, samples, fit.slope, target, if above { "above target" } else { "" }
        );
        say(out, format_args!("{}", line.trim_end()))?;
        if let Some(csv) = csv.as_mut() {
            csv.row(&[
                s.field_id.clone(),
                float(s.p),
                float(lo),
                float(hi),
                samples.to_string(),
                float(fit.slope),
                float(fit.intercept),
                float(fit.residual),
                float(target),
                above.to_string(),
            ])?;
        }
    }
    if let Some(csv) = csv {
        csv.finish()?;
    }
    Ok(ExitCode::Success)
}
