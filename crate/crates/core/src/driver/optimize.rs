//! Real-coefficient objectives, backtracking gradient descent and vacuum classification.

use super::snapshot::{LatticeSnapshot, MatrixModelSnapshot};
use super::{grid_label, lie_data, rng_for, ActionKind, GradientMode, OptimizerConfig, RunConfig, Start, TaskOutput};
use crate::algebroid::{self, GeneralizedConnection, MetricTriple};
use crate::error::{Error, Result};
use crate::latticeymh::{self, GaugeFieldA, LatticeSpec, ScalarMultipletB, YMHParams};
use crate::liealg::LieData;
use crate::linalg::{self, c, CMat};
use crate::ncgauge::{self, MatrixConnection};
use crate::report::Check;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::Arc;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;

/// Fields of one action kind.
#[derive(Debug, Clone)]
pub enum ActionPoint {
    Matrix(MatrixConnection),
    Lattice(GaugeFieldA, ScalarMultipletB),
    Algebroid(GeneralizedConnection),
}

enum Model {
    Matrix,
    Lattice { lattice: LatticeSpec, params: YMHParams },
    Algebroid { lattice: LatticeSpec, metric: MetricTriple },
}

/// An action as a function of real coefficients.
///
/// Matrix and lattice fields use the Frobenius-orthonormal basis `{iE_k/√2, i𝟙/√n}` of `u(n)`;
/// algebroid connections use `(ω, φ)` directly.
pub struct Objective {
    lie: Arc<LieData>,
    basis: Vec<CMat>,
    model: Model,
}

impl Objective {
    pub fn matrix_model(lie: &Arc<LieData>) -> Self {
        Objective { lie: lie.clone(), basis: latticeymh::u_n_basis(lie), model: Model::Matrix }
    }

    pub fn lattice(lattice: &LatticeSpec, params: &YMHParams) -> Self {
        let lie = params.lie.clone();
        Objective {
            basis: latticeymh::u_n_basis(&lie),
            lie,
            model: Model::Lattice { lattice: lattice.clone(), params: params.clone() },
        }
    }

    pub fn algebroid(lattice: &LatticeSpec, lie: &Arc<LieData>, metric: MetricTriple) -> Self {
        Objective {
            lie: lie.clone(),
            basis: latticeymh::u_n_basis(lie),
            model: Model::Algebroid { lattice: lattice.clone(), metric },
        }
    }

    pub fn kind(&self) -> ActionKind {
        match self.model {
            Model::Matrix => ActionKind::MatrixModel,
            Model::Lattice { .. } => ActionKind::LatticeYmh,
            Model::Algebroid { .. } => ActionKind::Algebroid,
        }
    }

    pub fn len(&self) -> usize {
        parameter_count(self)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn encode_matrix(&self, m: &CMat, out: &mut Vec<f64>) {
        out.extend(self.basis.iter().map(|u| linalg::real_inner(u, m)));
    }

    fn decode_matrix(&self, x: &[f64]) -> CMat {
        let n = self.lie.n;
        let mut m = linalg::zeros(n);
        for (u, &v) in self.basis.iter().zip(x) {
            m += u * c(v, 0.0);
        }
        m
    }

    pub fn encode(&self, p: &ActionPoint) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        match p {
            ActionPoint::Matrix(conn) => conn.a.iter().for_each(|m| self.encode_matrix(m, &mut x)),
            ActionPoint::Lattice(a, b) => {
                a.a.iter().flatten().for_each(|m| self.encode_matrix(m, &mut x));
                b.b.iter().flatten().for_each(|m| self.encode_matrix(m, &mut x));
            }
            ActionPoint::Algebroid(w) => {
                x.extend(&w.omega);
                x.extend(&w.phi);
            }
        }
        x
    }

    pub fn decode(&self, x: &[f64]) -> Result<ActionPoint> {
        if x.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: x.len() });
        }
        let nb = self.basis.len();
        let dim = self.lie.dim();
        Ok(match &self.model {
            Model::Matrix => {
                let a = x.chunks(nb).map(|ch| self.decode_matrix(ch)).collect();
                ActionPoint::Matrix(MatrixConnection::new(&self.lie, a)?)
            }
            Model::Lattice { lattice, .. } => {
                let (sites, d) = (lattice.sites(), lattice.d);
                let split = sites * d * nb;
                let a = x[..split].chunks(d * nb).map(|s| s.chunks(nb).map(|ch| self.decode_matrix(ch)).collect()).collect();
                let b = x[split..].chunks(dim * nb).map(|s| s.chunks(nb).map(|ch| self.decode_matrix(ch)).collect()).collect();
                ActionPoint::Lattice(
                    GaugeFieldA::new(lattice.clone(), self.lie.n, a)?,
                    ScalarMultipletB::new(lattice.clone(), self.lie.n, b)?,
                )
            }
            Model::Algebroid { lattice, .. } => {
                let split = lattice.sites() * lattice.d * dim;
                ActionPoint::Algebroid(GeneralizedConnection::new(lattice, &self.lie, x[..split].to_vec(), x[split..].to_vec())?)
            }
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        match (self.decode(x)?, &self.model) {
            (ActionPoint::Matrix(conn), _) => ncgauge::action(&conn),
            (ActionPoint::Lattice(a, b), Model::Lattice { params, .. }) => latticeymh::ymh_action(&a, &b, params),
            (ActionPoint::Algebroid(w), Model::Algebroid { metric, .. }) => algebroid::action_generalized(&w, metric),
            _ => unreachable!("decode follows the model"),
        }
    }

    /// Analytic gradient in coefficient space, where available.
    pub fn analytic_gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        let project = |gs: &mut dyn Iterator<Item = &CMat>| {
            let mut out = Vec::with_capacity(self.len());
            for g in gs {
                self.encode_matrix(g, &mut out);
            }
            out
        };
        match &self.model {
            Model::Algebroid { metric, .. } => Some(self.decode(x).and_then(|p| match p {
                ActionPoint::Algebroid(w) => {
                    let (g_omega, g_phi) = algebroid::action_gradient(&w, metric)?;
                    Ok(g_omega.into_iter().chain(g_phi).collect())
                }
                _ => unreachable!(),
            })),
            Model::Matrix => Some(self.decode(x).map(|p| match p {
                ActionPoint::Matrix(conn) => project(&mut ncgauge::action_gradient(&conn).iter()),
                _ => unreachable!(),
            })),
            Model::Lattice { params, .. } => Some(self.decode(x).and_then(|p| match p {
                ActionPoint::Lattice(a, b) => {
                    let (ga, gb) = latticeymh::ymh_gradient(&a, &b, params)?;
                    Ok(project(&mut ga.iter().flatten().chain(gb.iter().flatten())))
                }
                _ => unreachable!(),
            })),
        }
    }

    /// Central differences, one coordinate at a time; parallel over coordinates.
    pub fn fd_gradient(&self, x: &[f64], step: f64) -> Result<Vec<f64>> {
        (0..x.len())
            .into_par_iter()
            .map(|i| {
                let h = step * x[i].abs().max(1.0);
                let mut y = x.to_vec();
                y[i] = x[i] + h;
                let fp = self.value(&y)?;
                y[i] = x[i] - h;
                let fm = self.value(&y)?;
                Ok((fp - fm) / (2.0 * h))
            })
            .collect()
    }
}

pub fn parameter_count(obj: &Objective) -> usize {
    let nb = obj.basis.len();
    let dim = obj.lie.dim();
    match &obj.model {
        Model::Matrix => dim * nb,
        Model::Lattice { lattice, .. } => lattice.sites() * (lattice.d + dim) * nb,
        Model::Algebroid { lattice, .. } => lattice.sites() * (lattice.d + dim) * dim,
    }
}

/// Gradient in the requested mode; kinds without an analytic gradient fall back to central differences.
pub fn gradient(obj: &Objective, x: &[f64], mode: GradientMode, fd_step: f64) -> Result<Vec<f64>> {
    match (mode, obj.analytic_gradient(x)) {
        (GradientMode::Analytic, Some(g)) => g,
        _ => obj.fd_gradient(x, fd_step),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `‖g_analytic − g_fd‖ / ‖g_analytic‖`.
    pub relative_error: f64,
    pub analytic_norm: f64,
    /// Largest `‖G + G†‖` over the matrix-valued gradient.
    pub tangent_residual: f64,
}

/// Compare the analytic gradient with central differences at `x`.
pub fn gradient_check(obj: &Objective, x: &[f64], fd_step: f64) -> Result<Option<GradientCheck>> {
    let Some(ga) = obj.analytic_gradient(x) else { return Ok(None) };
    let ga = ga?;
    let gf = obj.fd_gradient(x, fd_step)?;
    let diff: Vec<f64> = ga.iter().zip(&gf).map(|(a, b)| a - b).collect();
    let an = norm(&ga);
    let nb = obj.basis.len();
    // algebroid coordinates are real coefficients of iE_k, tangent by construction
    let tangent = if obj.kind() == ActionKind::Algebroid { 0.0 } else { ga.chunks(nb).map(|ch| linalg::anti_hermitian_residual(&obj.decode_matrix(ch))).fold(0.0, f64::max) };
    Ok(Some(GradientCheck { relative_error: norm(&diff) / an, analytic_norm: an, tangent_residual: tangent }))
}

/// `|⟨g, v⟩ − directional central difference| / ‖g‖` for a random unit direction `v`.
pub(crate) fn directional_error<R: Rng + ?Sized>(obj: &Objective, x: &[f64], g: &[f64], step: f64, rng: &mut R) -> Result<f64> {
    let mut v: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
    let fd = (obj.value(&shifted(step))? - obj.value(&shifted(-step))?) / (2.0 * step);
    let an: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
    Ok((an - fd).abs() / norm(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTol,
    MaxIter,
    /// The line search ran out of halvings without increasing the action.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimized {
    pub x: Vec<f64>,
    /// Action after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub stop: StopReason,
}

impl Minimized {
    pub fn final_action(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradientTol
    }
}

/// Steepest descent with Armijo backtracking (`c = 1e-4`, halving).
///
/// The first search tries `opt.step`; later searches start from the Barzilai-Borwein
/// step `sᵀs / sᵀy` of the last accepted move.
pub fn minimize(obj: &Objective, x0: &[f64], opt: &OptimizerConfig) -> Result<Minimized> {
    let mut x = x0.to_vec();
    let mut f = obj.value(&x)?;
    let mut trace = vec![f];
    let mut g = gradient(obj, &x, opt.gradient, opt.fd_step)?;
    let mut t = opt.step;
    let mut iterations = 0;
    loop {
        let gn = norm(&g);
        if gn <= opt.tol {
            return Ok(Minimized { x, trace, iterations, gradient_norm: gn, stop: StopReason::GradientTol });
        }
        if iterations >= opt.max_iter {
            return Ok(Minimized { x, trace, iterations, gradient_norm: gn, stop: StopReason::MaxIter });
        }
        let mut accepted = None;
        let mut best = f64::INFINITY;
        for _ in 0..MAX_HALVINGS {
            let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let fy = obj.value(&y)?;
            best = best.min(fy);
            if fy <= f - ARMIJO_C * t * gn * gn {
                accepted = Some((y, fy));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((y, fy)) => {
                let gy = gradient(obj, &y, opt.gradient, opt.fd_step)?;
                // Barzilai-Borwein trial step for the next search
                let (mut ss, mut sy) = (0.0, 0.0);
                for i in 0..x.len() {
                    let (si, yi) = (y[i] - x[i], gy[i] - g[i]);
                    ss += si * si;
                    sy += si * yi;
                }
                t = if sy > 0.0 && (ss / sy).is_finite() { ss / sy } else { (2.0 * t).min(opt.step) };
                x = y;
                f = fy;
                g = gy;
                trace.push(f);
                iterations += 1;
            }
            None if best <= f => {
                return Ok(Minimized { x, trace, iterations, gradient_norm: gn, stop: StopReason::Stalled });
            }
            None => {
                return Err(Error::OptimizationFailure {
                    iterations,
                    message: format!("line search exhausted; action rises above {f:e}"),
                    trace,
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orbit {
    Orbit1,
    Orbit2,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub orbit: Orbit,
    /// Frobenius distance of the Gram matrix from `0`.
    pub distance_orbit1: f64,
    /// Frobenius distance of the Gram matrix from `2δ`.
    pub distance_orbit2: f64,
    pub max_site_deviation: f64,
    pub gram: Vec<Vec<f64>>,
}

fn classify_sites(sites: &[Vec<CMat>], deviation: f64, tol: f64) -> Classification {
    let m = sites.first().map_or(0, Vec::len);
    let mut gram = vec![vec![0.0; m]; m];
    for s in sites {
        for k in 0..m {
            for l in 0..m {
                gram[k][l] += linalg::real_inner(&s[k], &s[l]);
            }
        }
    }
    let count = sites.len().max(1) as f64;
    gram.iter_mut().flatten().for_each(|g| *g /= count);
    let (mut d1, mut d2) = (0.0, 0.0);
    for k in 0..m {
        for l in 0..m {
            let target = if k == l { 2.0 } else { 0.0 };
            d1 += gram[k][l] * gram[k][l];
            d2 += (gram[k][l] - target) * (gram[k][l] - target);
        }
    }
    let (d1, d2) = (f64::sqrt(d1), f64::sqrt(d2));
    let orbit = if d1 <= tol && d1 <= d2 {
        Orbit::Orbit1
    } else if d2 <= tol {
        Orbit::Orbit2
    } else {
        Orbit::Other
    };
    Classification { orbit, distance_orbit1: d1, distance_orbit2: d2, max_site_deviation: deviation, gram }
}

/// Gauge-invariant classification through the site-averaged Gram matrix `tr(b_k†b_l)`.
pub fn classify_vacuum(b: &ScalarMultipletB, tol: f64) -> Classification {
    classify_sites(&b.b, b.max_site_deviation(), tol)
}

fn classify_point(p: &ActionPoint, tol: f64) -> Classification {
    match p {
        ActionPoint::Matrix(conn) => classify_sites(std::slice::from_ref(&conn.a), 0.0, tol),
        ActionPoint::Lattice(_, b) => classify_vacuum(b, tol),
        ActionPoint::Algebroid(w) => classify_vacuum(&algebroid::to_lattice_fields(w).1, tol),
    }
}

fn start_point(obj: &Objective, start: Start, lattice: Option<&LatticeSpec>, rng: &mut impl Rng) -> Result<ActionPoint> {
    let lie = &obj.lie;
    let n = lie.n;
    let traceless = |m: CMat| &m - linalg::identity(n) * (m.trace() / n as f64);
    Ok(match (obj.kind(), lattice) {
        (ActionKind::MatrixModel, _) => ActionPoint::Matrix(match start {
            Start::Orbit1 => MatrixConnection::zero(lie),
            Start::Orbit2 => MatrixConnection::derivation(lie),
            Start::Random => {
                MatrixConnection::new(lie, (0..lie.dim()).map(|_| linalg::random_anti_hermitian(n, rng)).collect())?
            }
        }),
        (ActionKind::LatticeYmh, Some(lat)) => {
            let b = match start {
                Start::Orbit1 => ScalarMultipletB::zero(lat, n),
                Start::Orbit2 => ScalarMultipletB::vacuum(lat, lie),
                Start::Random => ScalarMultipletB::random(lat, n, 1.0, rng),
            };
            let a = match start {
                Start::Random => GaugeFieldA::random(lat, n, 1.0, rng),
                _ => GaugeFieldA::zero(lat, n),
            };
            ActionPoint::Lattice(a, b)
        }
        (ActionKind::Algebroid, Some(lat)) => {
            let a = GaugeFieldA::zero(lat, n);
            let mut b = match start {
                Start::Orbit1 => ScalarMultipletB::zero(lat, n),
                Start::Orbit2 => ScalarMultipletB::vacuum(lat, lie),
                Start::Random => ScalarMultipletB::random(lat, n, 1.0, rng),
            };
            b.b.iter_mut().flatten().for_each(|m| *m = traceless(m.clone()));
            let mut w = algebroid::from_lattice_fields(&a, &b, lie)?;
            if start == Start::Random {
                w.omega.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            ActionPoint::Algebroid(w)
        }
        _ => unreachable!("lattice kinds carry a lattice"),
    })
}

fn snapshot(p: &ActionPoint) -> Value {
    match p {
        ActionPoint::Matrix(conn) => json!(MatrixModelSnapshot::from_connection(conn)),
        ActionPoint::Lattice(a, b) => json!(LatticeSnapshot::from_fields(a, b)),
        ActionPoint::Algebroid(w) => {
            let (a, b) = algebroid::to_lattice_fields(w);
            json!(LatticeSnapshot::from_fields(&a, &b))
        }
    }
}

fn minimize_case(cfg: &RunConfig, obj: &Objective, lattice: Option<&LatticeSpec>, label: &str) -> Result<TaskOutput> {
    let mc = &cfg.minimize;
    let start = mc.start();
    let mut rng = rng_for(cfg, "minimize", label);
    let p0 = start_point(obj, start, lattice, &mut rng)?;
    let mut x0 = obj.encode(&p0);
    for v in &mut x0 {
        *v += mc.perturbation * rng.random_range(-1.0..1.0);
    }
    let m = minimize(obj, &x0, &cfg.optimizer)?;
    let fin = obj.decode(&m.x)?;
    let cl = classify_point(&fin, mc.classify_tol);
    let rise = m.trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);

    let mut out = TaskOutput::new();
    let r = &mut out.results;
    r.insert("kind".into(), json!(obj.kind()));
    r.insert("start".into(), json!(start));
    r.insert("parameters".into(), json!(obj.len()));
    r.insert("iterations".into(), json!(m.iterations));
    r.insert("stop".into(), json!(m.stop));
    r.insert("converged".into(), json!(m.converged()));
    r.insert("initial_action".into(), json!(m.trace[0]));
    r.insert("final_action".into(), json!(m.final_action()));
    r.insert("gradient_norm".into(), json!(m.gradient_norm));
    r.insert("classification".into(), json!(cl));
    r.insert("trace".into(), json!(m.trace));
    if mc.fields {
        r.insert("fields".into(), snapshot(&fin));
    }
    let rep = &mut out.report;
    rep.push(Check::at_most("minimize.monotone", rise, 0.0));
    rep.push(Check::at_most("minimize.action", m.final_action(), mc.target_action));
    match start {
        Start::Orbit1 => rep.push(Check::at_most("minimize.orbit", cl.distance_orbit1, mc.classify_tol)),
        Start::Orbit2 => rep.push(Check::at_most("minimize.orbit", cl.distance_orbit2, mc.classify_tol)),
        Start::Random => rep.push(Check::skipped("minimize.orbit", "random start")),
    }
    Ok(out)
}

pub(crate) fn run_minimize(cfg: &RunConfig) -> Result<TaskOutput> {
    let mut out = TaskOutput::new();
    for &n in &cfg.n {
        if n < 2 {
            let mut skip = TaskOutput::new();
            skip.report.push(Check::skipped("minimize", "su(1) is empty"));
            out.merge_labelled(&format!("n{n}"), skip);
            continue;
        }
        let lie = lie_data(n, &cfg.fault)?;
        match cfg.minimize.kind {
            ActionKind::MatrixModel => {
                let label = format!("n{n}");
                out.merge_labelled(&label, minimize_case(cfg, &Objective::matrix_model(&lie), None, &label)?);
            }
            kind => {
                for g in &cfg.grids {
                    let lat = cfg.lattice(g)?;
                    let obj = if kind == ActionKind::LatticeYmh {
                        Objective::lattice(&lat, &YMHParams::new(cfg.mu, &lie)?)
                    } else {
                        Objective::algebroid(&lat, &lie, cfg.algebroid.metric_triple(&lat, &lie, cfg.mu)?)
                    };
                    let label = format!("n{n}_{}", grid_label(g));
                    out.merge_labelled(&label, minimize_case(cfg, &obj, Some(&lat), &label)?);
                }
            }
        }
    }
    Ok(out)
}
