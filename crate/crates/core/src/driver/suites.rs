//! Invariant suites, one per module, as run by `verify` and the per-module tasks.

use super::optimize::{directional_error, gradient_check, Objective};
use super::{lie_data, rng_for, RunConfig, TaskOutput};
use crate::algebroid::{self, AlgebroidForm, GeneralizedConnection, MetricTriple};
use crate::error::Result;
use crate::gravity::{self, Chart, MetricPreset, Signature, TetradField, SPHERE_THETA};
use crate::latticeymh::{self, DriftStart, GaugeFieldA, ScalarMultipletB, YMHParams};
use crate::liealg::validate_lie_data;
use crate::linalg::{self, c, RMat};
use crate::ncforms::{canonical_theta, involution, koszul_d, random_form, wedge, MatrixForm};
use crate::ncgauge::{self, MatrixConnection};
use crate::report::Check;
use crate::spectral::{self, FiniteSpectralTriple};
use rand::Rng;
use serde_json::json;

const EXACT: f64 = 1e-13;
const ROUNDOFF: f64 = 1e-10;
const GRADIENT_TOL: f64 = 1e-5;

fn skip_all(names: &[&str], why: &str) -> TaskOutput {
    let mut out = TaskOutput::new();
    for n in names {
        out.report.push(Check::skipped(*n, why));
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub(crate) fn liealg_suite(cfg: &RunConfig, n: usize) -> Result<TaskOutput> {
    let lie = lie_data(n, &cfg.fault)?;
    let mut out = TaskOutput::new();
    out.results.insert("dim".into(), json!(lie.dim()));
    if lie.dim() > 0 {
        out.results.insert("jacobi_residual".into(), json!(crate::liealg::jacobi_residual(&lie)));
    }
    out.report.extend(validate_lie_data(&lie));
    Ok(out)
}

const NCFORMS_CHECKS: [&str; 5] =
    ["ncforms.d_squared", "ncforms.leibniz", "ncforms.degree0", "ncforms.maurer_cartan", "ncforms.reality"];

pub(crate) fn ncforms_suite(cfg: &RunConfig, n: usize) -> Result<TaskOutput> {
    if n < 2 {
        return Ok(skip_all(&NCFORMS_CHECKS, "su(1) is empty"));
    }
    let lie = lie_data(n, &cfg.fault)?;
    let dim = lie.dim();
    let mut rng = rng_for(cfg, "ncforms", &n.to_string());
    let th = canonical_theta(&lie)?;
    let top = dim.saturating_sub(2).min(2);
    let (mut dd, mut leib, mut deg0, mut real) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..cfg.samples {
        for p in 0..=top {
            let f = random_form(&lie, p, &mut rng);
            dd = dd.max(koszul_d(&koszul_d(&f)).max_abs());
            real = real.max(koszul_d(&involution(&f)).sub(&involution(&koszul_d(&f)))?.max_abs());
        }
        for (p, q) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            if p + q + 1 > dim {
                continue;
            }
            let (f, g) = (random_form(&lie, p, &mut rng), random_form(&lie, q, &mut rng));
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            let lhs = koszul_d(&wedge(&f, &g)?);
            let rhs = wedge(&koszul_d(&f), &g)?.add(&wedge(&f, &koszul_d(&g))?.scale(c(sign, 0.0)))?;
            leib = leib.max(lhs.sub(&rhs)?.max_abs());
        }
        let a = MatrixForm::scalar(&lie, linalg::random_complex(n, &mut rng));
        let comm = wedge(&th, &a)?.sub(&wedge(&a, &th)?)?;
        deg0 = deg0.max(koszul_d(&a).sub(&comm)?.max_abs());
    }
    let mc = koszul_d(&th).sub(&wedge(&th, &th)?)?.max_abs();
    let mut out = TaskOutput::new();
    let r = &mut out.report;
    r.push(Check::at_most("ncforms.d_squared", dd, ROUNDOFF));
    r.push(Check::at_most("ncforms.leibniz", leib, ROUNDOFF));
    r.push(Check::at_most("ncforms.degree0", deg0, ROUNDOFF));
    r.push(Check::at_most("ncforms.maurer_cartan", mc, ROUNDOFF));
    r.push(Check::at_most("ncforms.reality", real, ROUNDOFF));
    out.results.insert("samples".into(), json!(cfg.samples));
    Ok(out)
}

const MATRIX_CHECKS: [&str; 7] = [
    "ncgauge.orbit1_zero",
    "ncgauge.orbit2_zero",
    "ncgauge.gauge_invariance",
    "ncgauge.positivity",
    "ncgauge.bianchi",
    "ncgauge.gradient",
    "ncgauge.gradient_tangent",
];

fn random_connection<R: Rng + ?Sized>(lie: &std::sync::Arc<crate::liealg::LieData>, rng: &mut R) -> Result<MatrixConnection> {
    MatrixConnection::new(lie, (0..lie.dim()).map(|_| linalg::random_anti_hermitian(lie.n, rng)).collect())
}

pub(crate) fn matrix_model_suite(cfg: &RunConfig, n: usize) -> Result<TaskOutput> {
    if n < 2 {
        return Ok(skip_all(&MATRIX_CHECKS, "su(1) is empty"));
    }
    let lie = lie_data(n, &cfg.fault)?;
    let mut rng = rng_for(cfg, "ncgauge", &n.to_string());
    let s0 = ncgauge::action(&MatrixConnection::zero(&lie))?;
    let s1 = ncgauge::action(&MatrixConnection::derivation(&lie))?;
    let (mut inv, mut neg, mut bianchi) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut actions = Vec::new();
    for _ in 0..cfg.samples {
        let conn = random_connection(&lie, &mut rng)?;
        let g = linalg::random_unitary(n, &mut rng);
        let s = ncgauge::action(&conn)?;
        inv = inv.max(rel(ncgauge::action(&ncgauge::gauge_transform(&conn, &g)?)?, s));
        neg = neg.max(-s);
        bianchi = bianchi.max(ncgauge::bianchi_residual(&conn)?);
        actions.push(s);
    }
    let obj = Objective::matrix_model(&lie);
    let (mut grad, mut tangent) = (0.0_f64, 0.0_f64);
    for _ in 0..cfg.samples {
        let x = obj.encode(&super::ActionPoint::Matrix(random_connection(&lie, &mut rng)?));
        let gc = gradient_check(&obj, &x, cfg.optimizer.fd_step)?.expect("matrix model has an analytic gradient");
        grad = grad.max(gc.relative_error);
        tangent = tangent.max(gc.tangent_residual);
    }
    let mut out = TaskOutput::new();
    out.results.insert("action_orbit1".into(), json!(s0));
    out.results.insert("action_orbit2".into(), json!(s1));
    out.results.insert("random_actions".into(), json!(actions));
    let r = &mut out.report;
    r.push(Check::at_most("ncgauge.orbit1_zero", s0, EXACT));
    r.push(Check::at_most("ncgauge.orbit2_zero", s1, EXACT));
    r.push(Check::at_most("ncgauge.gauge_invariance", inv, ROUNDOFF));
    r.push(Check::at_most("ncgauge.positivity", neg, 1e-12));
    r.push(Check::at_most("ncgauge.bianchi", bianchi, ROUNDOFF));
    r.push(Check::at_most("ncgauge.gradient", grad, GRADIENT_TOL));
    r.push(Check::at_most("ncgauge.gradient_tangent", tangent, 1e-12));
    Ok(out)
}

const LATTICE_CHECKS: [&str; 8] = [
    "latticeymh.orbit1_zero",
    "latticeymh.orbit2_zero",
    "latticeymh.constant_gauge_invariance",
    "latticeymh.zero_modes",
    "latticeymh.mass_ratio",
    "latticeymh.gradient",
    "latticeymh.gradient_tangent",
    "latticeymh.drift_order",
];

pub(crate) fn lattice_suite(cfg: &RunConfig, n: usize, grid: &[usize]) -> Result<TaskOutput> {
    if n < 2 {
        return Ok(skip_all(&LATTICE_CHECKS, "su(1) is empty"));
    }
    let lie = lie_data(n, &cfg.fault)?;
    let lat = cfg.lattice(grid)?;
    let p = YMHParams::new(cfg.mu, &lie)?;
    let mut rng = rng_for(cfg, "latticeymh", &format!("{n}/{grid:?}"));
    let d = lat.d;

    let g = linalg::random_unitary(n, &mut rng);
    let gs = vec![g; lat.sites()];
    let zero = GaugeFieldA::zero(&lat, n);
    let t1 = latticeymh::gauge_transform_lattice(&zero, &ScalarMultipletB::zero(&lat, n), &gs)?;
    let t2 = latticeymh::gauge_transform_lattice(&zero, &ScalarMultipletB::vacuum(&lat, &lie), &gs)?;
    let s1 = latticeymh::ymh_action(&t1.a, &t1.b, &p)?;
    let s2 = latticeymh::ymh_action(&t2.a, &t2.b, &p)?;

    let a = GaugeFieldA::random(&lat, n, 0.5, &mut rng);
    let b = ScalarMultipletB::random(&lat, n, 0.5, &mut rng);
    let s = latticeymh::ymh_action(&a, &b, &p)?;
    let t = latticeymh::gauge_transform_lattice(&a, &b, &gs)?;
    let inv = rel(latticeymh::ymh_action(&t.a, &t.b, &p)?, s);

    let vac = ScalarMultipletB::vacuum(&lat, &lie);
    let ev1 = latticeymh::mass_spectrum(&vac, &p)?;
    let ev2 = latticeymh::mass_spectrum(&vac, &YMHParams::new(2.0 * cfg.mu, &lie)?)?;
    let scale = ev1.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let zero_modes = ev1.iter().filter(|e| e.abs() <= 1e-10 * scale).count();
    let ratio = ev1
        .iter()
        .zip(&ev2)
        .filter(|(e, _)| e.abs() > 1e-10 * scale)
        .map(|(e1, e2)| (e2 / e1 - 4.0).abs())
        .fold(0.0, f64::max);

    let obj = Objective::lattice(&lat, &p);
    let (mut grad, mut tangent) = (0.0_f64, 0.0_f64);
    for _ in 0..cfg.samples {
        let pa = GaugeFieldA::random(&lat, n, 0.5, &mut rng);
        let pb = ScalarMultipletB::random(&lat, n, 0.5, &mut rng);
        let x = obj.encode(&super::ActionPoint::Lattice(pa, pb));
        let gv = obj.analytic_gradient(&x).expect("lattice action has an analytic gradient")?;
        grad = grad.max(directional_error(&obj, &x, &gv, cfg.optimizer.fd_step, &mut rng)?);
        let nb = n * n;
        tangent = tangent.max(
            gv.chunks(nb)
                .map(|ch| {
                    let m = ch.iter().zip(latticeymh::u_n_basis(&lie)).fold(linalg::zeros(n), |acc, (v, u)| acc + u * c(*v, 0.0));
                    linalg::anti_hermitian_residual(&m)
                })
                .fold(0.0, f64::max),
        );
    }

    let mut out = TaskOutput::new();
    out.results.insert("sites".into(), json!(lat.sites()));
    out.results.insert("action_orbit1".into(), json!(s1));
    out.results.insert("action_orbit2".into(), json!(s2));
    out.results.insert("random_action".into(), json!(s));
    out.results.insert("mass_spectrum".into(), json!(ev1));
    let r = &mut out.report;
    r.push(Check::at_most("latticeymh.orbit1_zero", s1, EXACT));
    r.push(Check::at_most("latticeymh.orbit2_zero", s2, EXACT));
    r.push(Check::at_most("latticeymh.constant_gauge_invariance", inv, ROUNDOFF));
    r.push(
        Check::at_most("latticeymh.zero_modes", (zero_modes as f64 - d as f64).abs(), 0.0)
            .with_note(format!("{zero_modes} zero modes for {d} directions")),
    );
    r.push(Check::at_most("latticeymh.mass_ratio", ratio, 1e-6));
    r.push(Check::at_most("latticeymh.gradient", grad, GRADIENT_TOL).with_note("random directional derivatives"));
    r.push(Check::at_most("latticeymh.gradient_tangent", tangent, 1e-12));

    if d <= 3 {
        let base = grid[0];
        let drifts: Vec<f64> = [base, 2 * base, 4 * base]
            .iter()
            .map(|&m| latticeymh::gauge_drift(DriftStart::Vacuum, d, m, &p, 0.8))
            .collect::<Result<_>>()?;
        let orders = latticeymh::empirical_orders(&drifts);
        out.results.insert("gauge_drift".into(), json!(drifts));
        out.results.insert("gauge_drift_orders".into(), json!(orders));
        out.report.push(Check::at_least("latticeymh.drift_order", orders.iter().copied().fold(f64::INFINITY, f64::min), 0.9));
    } else {
        out.report.push(Check::skipped("latticeymh.drift_order", "refinement only up to three dimensions"));
    }
    Ok(out)
}

const ALGEBROID_CHECKS: [&str; 8] = [
    "algebroid.d_squared",
    "algebroid.reduction",
    "algebroid.reassembly",
    "algebroid.r_identity",
    "algebroid.r_zero",
    "algebroid.round_trip",
    "algebroid.calibration",
    "algebroid.gradient",
];

fn random_field<R: Rng + ?Sized>(len: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

pub(crate) fn algebroid_suite(cfg: &RunConfig, n: usize, grid: &[usize]) -> Result<TaskOutput> {
    if n < 2 {
        return Ok(skip_all(&ALGEBROID_CHECKS, "su(1) is empty"));
    }
    let lie = lie_data(n, &cfg.fault)?;
    let lat = cfg.lattice(grid)?;
    let (d, dim, sites) = (lat.d, lie.dim(), lat.sites());
    let scale = cfg.algebroid.scale;
    let mut rng = rng_for(cfg, "algebroid", &format!("{n}/{grid:?}"));
    let samples = cfg.samples.min(5);

    let mut dd = 0.0_f64;
    for p in 0..=1 {
        let f = AlgebroidForm::random(&lat, &lie, p, &mut rng);
        dd = dd.max(algebroid::differential(&algebroid::differential(&f)).max_abs());
    }

    let standard = MetricTriple::standard(&lat, &lie);
    let (mut red, mut reas) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let w = GeneralizedConnection::ordinary(&lat, &lie, random_field(sites * d * dim, scale, &mut rng))?;
        let (a, _) = algebroid::to_lattice_fields(&w);
        red = red.max(rel(algebroid::action_generalized(&w, &standard)?, latticeymh::ym_action(&a)));

        let phi = RMat::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let w = GeneralizedConnection::random(&lat, &lie, scale, &mut rng).with_constant_phi(&phi);
        let bg = GeneralizedConnection::ordinary(&lat, &lie, random_field(sites * d * dim, scale, &mut rng))?;
        let m = MetricTriple::standard(&lat, &lie).with_background(bg.clone())?;
        let dec = algebroid::decompose(&w, &m)?;
        let diff = algebroid::curvature_generalized(&w).sub(&algebroid::reassemble(&dec, &bg))?;
        reas = reas.max(diff.max_abs());
    }

    let base = GeneralizedConnection::trivial(&lat, &lie);
    let r_id = algebroid::decompose(&base.clone().with_constant_phi(&RMat::zeros(dim, dim)), &standard)?
        .r_tau
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let r_zero = algebroid::decompose(&base, &standard)?.r_tau.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let p = YMHParams::new(cfg.mu, &lie)?;
    let calibrated = MetricTriple::ymh_calibrated(&lat, &lie, cfg.mu)?;
    let (mut trip, mut cal) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let w = GeneralizedConnection::random(&lat, &lie, scale, &mut rng);
        let (a, b) = algebroid::to_lattice_fields(&w);
        let back = algebroid::from_lattice_fields(&a, &b, &lie)?;
        let size = w.omega.iter().chain(&w.phi).fold(1.0_f64, |m, v| m.max(v.abs()));
        let dev = w.omega.iter().chain(&w.phi).zip(back.omega.iter().chain(&back.phi)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        trip = trip.max(dev / (size * f64::EPSILON));
        let ymh = latticeymh::ymh_action(&a, &b, &p)?;
        cal = cal.max(rel(algebroid::action_generalized(&w, &calibrated)?, ymh));
    }

    let obj = Objective::algebroid(&lat, &lie, calibrated);
    let mut grad = 0.0_f64;
    for _ in 0..samples {
        let x = obj.encode(&super::ActionPoint::Algebroid(GeneralizedConnection::random(&lat, &lie, scale, &mut rng)));
        let gv = obj.analytic_gradient(&x).expect("algebroid action has an analytic gradient")?;
        grad = grad.max(directional_error(&obj, &x, &gv, cfg.optimizer.fd_step, &mut rng)?);
    }

    let mut out = TaskOutput::new();
    out.results.insert("sites".into(), json!(sites));
    let r = &mut out.report;
    r.push(Check::at_most("algebroid.d_squared", dd, ROUNDOFF));
    r.push(Check::at_most("algebroid.reduction", red, ROUNDOFF));
    r.push(Check::at_most("algebroid.reassembly", reas, ROUNDOFF));
    r.push(Check::at_most("algebroid.r_identity", r_id, 0.0));
    r.push(Check::at_most("algebroid.r_zero", r_zero, 0.0));
    r.push(Check::at_most("algebroid.round_trip", trip, 4.0).with_note("deviation in units of ε·max|entry|"));
    r.push(Check::at_most("algebroid.calibration", cal, 1e-8));
    r.push(Check::at_most("algebroid.gradient", grad, GRADIENT_TOL).with_note("random directional derivatives"));
    Ok(out)
}

fn fluctuation_checks<R: Rng + ?Sized>(t: &FiniteSpectralTriple, samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    let (mut coincide, mut invariant) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let w = spectral::random_hermitian_one_form(t, 2, rng);
        let u = t.rep.algebra.random_unitary(rng);
        let tw = spectral::fluctuate(t, &w)?;
        let lhs = spectral::gauge_transform_spectral(&tw, &u)?;
        let wu = spectral::gauge_one_form(t, &w, &u)?;
        let wu = (&wu + linalg::dagger(&wu)) * c(0.5, 0.0);
        let rhs = spectral::fluctuate(t, &wu)?;
        coincide = coincide.max(linalg::max_abs(&(&lhs.d - &rhs.d)));
        for chi in [spectral::Cutoff::SmoothBump, spectral::Cutoff::Gaussian] {
            let f = |x: f64| chi.eval(x);
            let a = spectral::spectral_action(&tw, &f, 2.0)?;
            let b = spectral::spectral_action(&lhs, &f, 2.0)?;
            invariant = invariant.max((a - b).abs());
        }
    }
    Ok((coincide, invariant))
}

pub(crate) fn spectral_suite(cfg: &RunConfig) -> Result<TaskOutput> {
    let sc = &cfg.spectral;
    let t = sc.triple.build()?;
    let mut rng = rng_for(cfg, "spectral", "");
    let mut out = TaskOutput::new();
    for ch in spectral::check_axioms(&t)?.checks {
        out.report.push(Check { name: format!("spectral.axiom.{}", ch.name), ..ch });
    }
    let (coincide, invariant) = fluctuation_checks(&t, sc.samples, &mut rng)?;
    out.report.push(Check::at_most("spectral.gauge_fluctuation", coincide, spectral::AXIOM_TOL));
    out.report.push(Check::at_most("spectral.action_invariance", invariant, spectral::AXIOM_TOL));

    // each wrong KO-dimension must be rejected
    let mut missed = 0;
    if t.gamma.is_some() && t.j.is_some() {
        for ko in (0..8u8).filter(|&k| k != t.ko_dim % 8) {
            let mut bad = t.clone();
            bad.ko_dim = ko;
            if let Ok(rep) = spectral::check_axioms(&bad) {
                if rep.passed() {
                    missed += 1;
                }
            }
        }
        out.report.push(Check::at_most("spectral.sign_misuse", missed as f64, 0.0));
    } else {
        out.report.push(Check::skipped("spectral.sign_misuse", "needs both grading and real structure"));
    }

    let chi = |x: f64| sc.cutoff.eval(x);
    out.results.insert("hilbert_dim".into(), json!(t.hilbert_dim()));
    out.results.insert("ko_dim".into(), json!(t.ko_dim));
    out.results.insert("dirac_eigenvalues".into(), json!(linalg::hermitian_eigenvalues(&t.d)));
    out.results.insert("spectral_action".into(), json!(spectral::spectral_action(&t, &chi, sc.lambda)?));
    Ok(out)
}

/// Closed-form scalar curvature of a preset.
fn exact_scalar(preset: &MetricPreset, x: &[f64]) -> f64 {
    match *preset {
        MetricPreset::Flat { .. } => 0.0,
        MetricPreset::Sphere { radius } => 2.0 / (radius * radius),
        MetricPreset::Conformal { amplitude } => {
            // R = −2e^{−2λ}Δλ with Δλ = −13λ
            let l = amplitude * (2.0 * x[0]).sin() * (3.0 * x[1]).cos();
            26.0 * l * (-2.0 * l).exp()
        }
    }
}

/// `∂_ρ g_{μν}` by a fine central difference of the closed-form metric.
fn metric_derivative(preset: &MetricPreset, x: &[f64], rho: usize) -> RMat {
    let eps = 1e-5;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[rho] += eps;
    xm[rho] -= eps;
    (preset.metric_at(&xp) - preset.metric_at(&xm)) / (2.0 * eps)
}

/// Sites of `chart` sitting on the interior points of the `probe`-point grid.
fn probe_sites(chart: &Chart, probe: usize, margin: usize) -> Result<Vec<usize>> {
    let coarse = Chart::new(chart.lo.clone(), chart.hi.clone(), vec![probe; chart.d()])?;
    Ok(coarse
        .interior_sites(margin)
        .into_iter()
        .map(|s| {
            let c: Vec<usize> = coarse.coords(s).iter().zip(&chart.points).map(|(&k, &p)| k * (p - 1) / (probe - 1)).collect();
            chart.index(&c)
        })
        .collect())
}

fn random_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> RMat {
    let m = RMat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let mut q = m.qr().q();
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

fn orders_min(errs: &[f64]) -> f64 {
    latticeymh::empirical_orders(errs).into_iter().fold(f64::INFINITY, f64::min)
}

pub(crate) fn gravity_suite(cfg: &RunConfig) -> Result<TaskOutput> {
    let gc = &cfg.gravity;
    let preset = &gc.preset;
    let d = preset.d();
    let mut out = TaskOutput::new();
    let mut rng = rng_for(cfg, "gravity", "");

    let flat = MetricPreset::Flat { d: 3, length: 1.0 }.build(6)?;
    let fc = gravity::curvature_tensors(&gravity::christoffel(&flat)?);
    let flat_max = fc.riemann.iter().chain(&fc.torsion).chain(&fc.ricci).fold(0.0_f64, |m, v| m.max(v.abs()));
    out.report.push(Check::at_most("gravity.flat_curvature", flat_max, 1e-12));

    // the fixed probe points need nested grids
    let nested = gc.points.iter().all(|&p| (p - 1) % 16 == 0);
    let (mut scal_errs, mut compat_errs, mut torsion) = (Vec::new(), Vec::new(), 0.0_f64);
    let mut finest = None;
    for &pts in &gc.points {
        let m = preset.build(pts)?;
        let gamma = gravity::christoffel(&m)?;
        let ct = gravity::curvature_tensors(&gamma);
        torsion = torsion.max(ct.torsion.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
        let sc = ct.scalar(&m)?;
        let sites = if nested { probe_sites(&m.chart, 17, 2)? } else { m.chart.interior_sites(2) };
        let err = |s: usize| (sc[s] - exact_scalar(preset, &m.chart.position(s))).abs();
        scal_errs.push(sites.iter().map(|&s| err(s)).fold(0.0, f64::max));
        let csites = if nested { probe_sites(&m.chart, 17, 1)? } else { m.chart.interior_sites(1) };
        let mut ce = 0.0_f64;
        for &s in &csites {
            let x = m.chart.position(s);
            let g = &m.g[s];
            for rho in 0..d {
                let dg = metric_derivative(preset, &x, rho);
                for mu in 0..d {
                    for nu in 0..d {
                        let mut v = dg[(mu, nu)];
                        for sg in 0..d {
                            v -= gamma.get(s, sg, rho, mu) * g[(sg, nu)] + gamma.get(s, sg, rho, nu) * g[(mu, sg)];
                        }
                        ce = ce.max(v.abs());
                    }
                }
            }
        }
        compat_errs.push(ce);
        let all = m.chart.interior_sites(2);
        let worst = all.iter().map(|&s| err(s)).fold(0.0, f64::max);
        let size = all.iter().map(|&s| exact_scalar(preset, &m.chart.position(s)).abs()).fold(0.0, f64::max);
        let eh = gravity::eh_action(&m, gc.g_newton)?;
        finest = Some((pts, worst, size, eh));
    }
    let (pts, worst, size, eh) = finest.expect("at least one resolution");
    out.results.insert("points".into(), json!(gc.points));
    out.results.insert("scalar_errors".into(), json!(scal_errs));
    out.results.insert("compatibility_errors".into(), json!(compat_errs));
    out.results.insert("eh_action".into(), json!(eh.value));
    if let Some(w) = &eh.warning {
        out.results.insert("eh_warning".into(), json!(w));
    }
    out.report.push(Check::at_most("gravity.torsion", torsion, 1e-12));
    let r = &mut out.report;
    if size > 0.0 {
        r.push(Check::at_most("gravity.scalar_curvature", worst / size, 0.01).with_note(format!("relative, {pts} points")));
    } else {
        r.push(Check::at_most("gravity.scalar_curvature", worst, 1e-12));
    }
    let resolvable = |errs: &[f64]| errs.len() >= 2 && errs.iter().all(|&e| e > 1e-11);
    if resolvable(&scal_errs) {
        r.push(Check::at_least("gravity.scalar_order", orders_min(&scal_errs), 1.8));
    } else {
        r.push(Check::skipped("gravity.scalar_order", "errors at roundoff or single resolution"));
    }
    if resolvable(&compat_errs) {
        r.push(Check::at_least("gravity.compatibility_order", orders_min(&compat_errs), 1.8));
    } else {
        r.push(Check::skipped("gravity.compatibility_order", "errors at roundoff or single resolution"));
    }

    // tetrads: S² × T² with Λ = diag(r, r sin θ, 1, 1)
    let radius = 1.3;
    let chart = Chart::new(vec![SPHERE_THETA.0, 0.0, 0.0, 0.0], vec![SPHERE_THETA.1, 1.0, 1.0, 1.0], vec![25, 13, 5, 5])?;
    let t = TetradField::from_fn(chart, Signature::Euclidean, |x| {
        RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![radius, radius * x[0].sin(), 1.0, 1.0]))
    })?
    .with_levi_civita()?;
    let sp = gravity::palatini_action(&t, gc.g_newton)?;
    let se = gravity::eh_action(&gravity::metric_from_tetrad(&t)?, gc.g_newton)?.value;
    out.results.insert("palatini_action".into(), json!(sp));
    out.results.insert("palatini_eh_action".into(), json!(se));
    out.report.push(Check::at_most("gravity.palatini_vs_eh", rel(sp, se), 0.03));

    let c3 = Chart::new(vec![0.0; 3], vec![1.0; 3], vec![5; 3])?;
    let mut t3 = TetradField::from_fn(c3.clone(), Signature::Euclidean, |x| {
        RMat::from_fn(3, 3, |a, m| if a == m { 1.5 } else { 0.0 } + 0.2 * ((a + 1) as f64 * x[m]).sin())
    })?;
    t3.gamma_spin = Some((0..c3.sites() * 3).map(|_| RMat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0))).collect());
    let h = random_rotation(3, &mut rng);
    let (g1, g2) = (gravity::composite_field(&t3)?, gravity::composite_field(&t3.rotated(&h)?)?);
    let rot = g1.gamma.iter().zip(&g2.gamma).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    out.report.push(Check::at_most("gravity.composite_rotation", rot, 1e-12));
    Ok(out)
}
