//! Tensor calculus on rectangular, non-periodic charts.
//!
//! Sites are ordered lexicographically with the last axis fastest. Derivatives
//! are central differences, so every output lives on interior sites only; the
//! remaining sites hold zeros.

use crate::error::{Error, Result};
use crate::linalg::RMat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    Euclidean,
    Lorentzian,
}

impl Signature {
    /// `δ`, or `diag(−1, 1, …, 1)`.
    pub fn eta(self, d: usize) -> RMat {
        let mut e = RMat::identity(d, d);
        if self == Signature::Lorentzian {
            e[(0, 0)] = -1.0;
        }
        e
    }
}

/// Grid `lo[i] + k·(hi[i] − lo[i])/(points[i] − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

impl Chart {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d || points.len() != d {
            return Err(Error::Dimension { expected: d, got: hi.len().min(points.len()) });
        }
        if points.iter().any(|&p| p < 3) {
            return Err(Error::InvalidArgument("need at least 3 points per axis".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument("empty or non-finite chart range".into()));
        }
        Ok(Chart { lo, hi, points })
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.points[axis] - 1) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.d()).map(|i| self.spacing(i)).product()
    }

    pub fn sites(&self) -> usize {
        self.points.iter().product()
    }

    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut c = vec![0; self.d()];
        for i in (0..self.d()).rev() {
            c[i] = site % self.points[i];
            site /= self.points[i];
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.points).fold(0, |acc, (&c, &p)| acc * p + c)
    }

    pub fn position(&self, site: usize) -> Vec<f64> {
        self.coords(site).iter().enumerate().map(|(i, &k)| self.lo[i] + k as f64 * self.spacing(i)).collect()
    }

    pub fn is_interior(&self, site: usize, margin: usize) -> bool {
        self.coords(site).iter().zip(&self.points).all(|(&k, &p)| k >= margin && k + margin < p)
    }

    pub fn interior_sites(&self, margin: usize) -> Vec<usize> {
        (0..self.sites()).filter(|&s| self.is_interior(s, margin)).collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..].iter().product()
    }

    /// Central difference of a field with `comps` entries per site, at an interior site.
    fn diff_at(&self, f: &[f64], comps: usize, site: usize, axis: usize) -> Vec<f64> {
        let st = self.stride(axis);
        let (p, m) = ((site + st) * comps, (site - st) * comps);
        let inv = 1.0 / (2.0 * self.spacing(axis));
        (0..comps).map(|c| (f[p + c] - f[m + c]) * inv).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGrid {
    pub chart: Chart,
    pub g: Vec<RMat>,
    pub signature: Signature,
}

impl MetricGrid {
    pub fn from_fn(chart: Chart, signature: Signature, f: impl Fn(&[f64]) -> RMat) -> Result<Self> {
        let d = chart.d();
        let mut g = Vec::with_capacity(chart.sites());
        for s in 0..chart.sites() {
            let m = f(&chart.position(s));
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension { expected: d, got: m.nrows() });
            }
            g.push((&m + m.transpose()) * 0.5);
        }
        Ok(MetricGrid { chart, g, signature })
    }

    pub fn d(&self) -> usize {
        self.chart.d()
    }

    fn inverse_at(&self, site: usize) -> Result<RMat> {
        let g = &self.g[site];
        if !(g.determinant().abs() > 1e-10) {
            return Err(Error::DegenerateMetric { site });
        }
        g.clone().try_inverse().ok_or(Error::DegenerateMetric { site })
    }

    fn flat_components(&self) -> Vec<f64> {
        self.g.iter().flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>()).collect()
    }
}

/// Named analytic metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricPreset {
    /// `δ` on `[0, length]^d`.
    Flat { d: usize, length: f64 },
    /// Round 2-sphere in `(θ, φ)` on `[0.3, π − 0.3] × [0, 1]`.
    Sphere { radius: f64 },
    /// `e^{2λ}δ` on `[0, 1]²` with `λ = a·sin(2x)·cos(3y)`.
    Conformal { amplitude: f64 },
}

pub const SPHERE_THETA: (f64, f64) = (0.3, PI - 0.3);

impl MetricPreset {
    pub fn d(&self) -> usize {
        match self {
            MetricPreset::Flat { d, .. } => *d,
            _ => 2,
        }
    }

    pub fn chart(&self, points: usize) -> Result<Chart> {
        let d = self.d();
        match self {
            MetricPreset::Flat { length, .. } => Chart::new(vec![0.0; d], vec![*length; d], vec![points; d]),
            MetricPreset::Sphere { .. } => Chart::new(vec![SPHERE_THETA.0, 0.0], vec![SPHERE_THETA.1, 1.0], vec![points; 2]),
            MetricPreset::Conformal { .. } => Chart::new(vec![0.0; 2], vec![1.0; 2], vec![points; 2]),
        }
    }

    pub fn metric_at(&self, x: &[f64]) -> RMat {
        match *self {
            MetricPreset::Flat { d, .. } => RMat::identity(d, d),
            MetricPreset::Sphere { radius } => {
                RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![radius * radius, (radius * x[0].sin()).powi(2)]))
            }
            MetricPreset::Conformal { amplitude } => {
                let l = amplitude * (2.0 * x[0]).sin() * (3.0 * x[1]).cos();
                RMat::identity(2, 2) * (2.0 * l).exp()
            }
        }
    }

    pub fn build(&self, points: usize) -> Result<MetricGrid> {
        match self {
            MetricPreset::Sphere { radius } | MetricPreset::Conformal { amplitude: radius } if !radius.is_finite() => {
                return Err(Error::InvalidArgument("non-finite preset parameter".into()))
            }
            MetricPreset::Sphere { radius } if !(*radius > 0.0) => {
                return Err(Error::InvalidArgument("sphere radius must be positive".into()))
            }
            _ => {}
        }
        MetricGrid::from_fn(self.chart(points)?, Signature::Euclidean, |x| self.metric_at(x))
    }
}

/// `Γ^ρ_{μν}` at `((site·d + ρ)·d + μ)·d + ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionField {
    pub chart: Chart,
    /// Sites closer than this to the boundary hold zeros.
    pub margin: usize,
    pub gamma: Vec<f64>,
}

impl ConnectionField {
    pub fn zeros(chart: &Chart, margin: usize) -> Self {
        let d = chart.d();
        ConnectionField { chart: chart.clone(), margin, gamma: vec![0.0; chart.sites() * d * d * d] }
    }

    pub fn get(&self, site: usize, rho: usize, mu: usize, nu: usize) -> f64 {
        let d = self.chart.d();
        self.gamma[((site * d + rho) * d + mu) * d + nu]
    }

    pub fn set(&mut self, site: usize, rho: usize, mu: usize, nu: usize, v: f64) {
        let d = self.chart.d();
        self.gamma[((site * d + rho) * d + mu) * d + nu] = v;
    }

    pub fn at(&self, site: usize) -> &[f64] {
        let n = self.chart.d().pow(3);
        &self.gamma[site * n..(site + 1) * n]
    }
}

pub fn christoffel(m: &MetricGrid) -> Result<ConnectionField> {
    let chart = &m.chart;
    let d = chart.d();
    let flat = m.flat_components();
    let mut out = ConnectionField::zeros(chart, 1);
    for s in chart.interior_sites(1) {
        let ginv = m.inverse_at(s)?;
        // dg[λ][σ·d + μ] = ∂_λ g_{σμ}
        let dg: Vec<Vec<f64>> = (0..d).map(|l| chart.diff_at(&flat, d * d, s, l)).collect();
        for rho in 0..d {
            for mu in 0..d {
                for nu in mu..d {
                    let mut acc = 0.0;
                    for sg in 0..d {
                        let gi = ginv[(rho, sg)];
                        if gi != 0.0 {
                            acc += gi * (dg[nu][sg * d + mu] + dg[mu][sg * d + nu] - dg[sg][mu * d + nu]);
                        }
                    }
                    out.set(s, rho, mu, nu, 0.5 * acc);
                    out.set(s, rho, nu, mu, 0.5 * acc);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensors {
    pub chart: Chart,
    pub margin: usize,
    /// `R^ρ_{σμν}` at `(((site·d + ρ)·d + σ)·d + μ)·d + ν`.
    pub riemann: Vec<f64>,
    /// `T^ρ_{μν}` in the connection layout.
    pub torsion: Vec<f64>,
    /// `R_{σν}` at `(site·d + σ)·d + ν`.
    pub ricci: Vec<f64>,
}

impl CurvatureTensors {
    pub fn riemann_at(&self, site: usize, rho: usize, sigma: usize, mu: usize, nu: usize) -> f64 {
        let d = self.chart.d();
        self.riemann[(((site * d + rho) * d + sigma) * d + mu) * d + nu]
    }

    pub fn ricci_at(&self, site: usize, sigma: usize, nu: usize) -> f64 {
        let d = self.chart.d();
        self.ricci[(site * d + sigma) * d + nu]
    }

    /// `R = g^{σν} R_{σν}` at interior sites.
    pub fn scalar(&self, m: &MetricGrid) -> Result<Vec<f64>> {
        let d = self.chart.d();
        let mut out = vec![0.0; self.chart.sites()];
        for s in self.chart.interior_sites(self.margin) {
            let gi = m.inverse_at(s)?;
            out[s] = (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).map(|(a, b)| gi[(a, b)] * self.ricci_at(s, a, b)).sum();
        }
        Ok(out)
    }
}

pub fn curvature_tensors(gamma: &ConnectionField) -> CurvatureTensors {
    let chart = &gamma.chart;
    let d = chart.d();
    let d3 = d * d * d;
    let margin = gamma.margin + 1;
    let sites = chart.sites();
    let mut riemann = vec![0.0; sites * d3 * d];
    let mut torsion = vec![0.0; sites * d3];
    let mut ricci = vec![0.0; sites * d * d];
    for s in chart.interior_sites(gamma.margin) {
        for rho in 0..d {
            for mu in 0..d {
                for nu in 0..d {
                    torsion[s * d3 + (rho * d + mu) * d + nu] = gamma.get(s, rho, mu, nu) - gamma.get(s, rho, nu, mu);
                }
            }
        }
    }
    for s in chart.interior_sites(margin) {
        let dg: Vec<Vec<f64>> = (0..d).map(|l| chart.diff_at(&gamma.gamma, d3, s, l)).collect();
        let g = gamma.at(s);
        let gm = |r: usize, m: usize, n: usize| g[(r * d + m) * d + n];
        for rho in 0..d {
            for sigma in 0..d {
                for mu in 0..d {
                    for nu in mu + 1..d {
                        let mut v = dg[mu][(rho * d + nu) * d + sigma] - dg[nu][(rho * d + mu) * d + sigma];
                        for eta in 0..d {
                            v += gm(rho, mu, eta) * gm(eta, nu, sigma) - gm(rho, nu, eta) * gm(eta, mu, sigma);
                        }
                        riemann[(((s * d + rho) * d + sigma) * d + mu) * d + nu] = v;
                        riemann[(((s * d + rho) * d + sigma) * d + nu) * d + mu] = -v;
                    }
                }
            }
        }
        for sigma in 0..d {
            for nu in 0..d {
                ricci[(s * d + sigma) * d + nu] =
                    (0..d).map(|rho| riemann[(((s * d + rho) * d + sigma) * d + rho) * d + nu]).sum();
            }
        }
    }
    CurvatureTensors { chart: chart.clone(), margin, riemann, torsion, ricci }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhAction {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

/// `(−1/16πG) Σ R √|det g| h^d` over sites two away from the boundary.
pub fn eh_action(m: &MetricGrid, g_newton: f64) -> Result<EhAction> {
    if !(g_newton > 0.0) || !g_newton.is_finite() {
        return Err(Error::InvalidArgument("G must be positive".into()));
    }
    let curv = curvature_tensors(&christoffel(m)?);
    let r = curv.scalar(m)?;
    let cell = m.chart.cell_volume();
    let sum: f64 = m.chart.interior_sites(2).iter().map(|&s| r[s] * m.g[s].determinant().abs().sqrt()).sum();
    let warning = (m.d() != 4).then(|| format!("dimension {} (4 expected)", m.d()));
    Ok(EhAction { value: -sum * cell / (16.0 * PI * g_newton), warning })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetradField {
    pub chart: Chart,
    /// `Λ^a_μ` at `(a, μ)`.
    pub lambda: Vec<RMat>,
    /// `(Γ_μ)^a_b` at `[site·d + μ]`.
    pub gamma_spin: Option<Vec<RMat>>,
    pub eta: RMat,
}

impl TetradField {
    pub fn from_fn(chart: Chart, signature: Signature, f: impl Fn(&[f64]) -> RMat) -> Result<Self> {
        let d = chart.d();
        let lambda: Vec<RMat> = (0..chart.sites()).map(|s| f(&chart.position(s))).collect();
        if lambda.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::Dimension { expected: d, got: lambda[0].nrows() });
        }
        Ok(TetradField { chart, lambda, gamma_spin: None, eta: signature.eta(d) })
    }

    pub fn d(&self) -> usize {
        self.chart.d()
    }

    fn inverse_lambda(&self, site: usize) -> Result<RMat> {
        let l = &self.lambda[site];
        if !(l.determinant().abs() > 1e-10) {
            return Err(Error::DegenerateTetrad { site });
        }
        l.clone().try_inverse().ok_or(Error::DegenerateTetrad { site })
    }

    fn flat_lambda(&self) -> Vec<f64> {
        self.lambda.iter().flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>()).collect()
    }

    /// `Λ ↦ h⁻¹Λ`, `Γ ↦ h⁻¹Γh` for a constant `h`.
    pub fn rotated(&self, h: &RMat) -> Result<Self> {
        let hi = h.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("singular rotation".into()))?;
        Ok(TetradField {
            chart: self.chart.clone(),
            lambda: self.lambda.iter().map(|l| &hi * l).collect(),
            gamma_spin: self.gamma_spin.as_ref().map(|g| g.iter().map(|m| &hi * m * h).collect()),
            eta: self.eta.clone(),
        })
    }

    pub fn with_levi_civita(mut self) -> Result<Self> {
        self.gamma_spin = Some(levi_civita_spin_connection(&self)?);
        Ok(self)
    }
}

pub fn metric_from_tetrad(t: &TetradField) -> Result<MetricGrid> {
    let mut g = Vec::with_capacity(t.lambda.len());
    for (s, l) in t.lambda.iter().enumerate() {
        if !(l.determinant().abs() > 1e-10) {
            return Err(Error::DegenerateTetrad { site: s });
        }
        let m = l.transpose() * &t.eta * l;
        g.push((&m + m.transpose()) * 0.5);
    }
    let lorentz = t.eta.determinant() < 0.0;
    Ok(MetricGrid {
        chart: t.chart.clone(),
        g,
        signature: if lorentz { Signature::Lorentzian } else { Signature::Euclidean },
    })
}

/// Solves `η`-compatibility and vanishing torsion for `Γ_μ` at each site one away from the boundary.
pub fn levi_civita_spin_connection(t: &TetradField) -> Result<Vec<RMat>> {
    let chart = &t.chart;
    let d = t.d();
    let n = d * d * d;
    let unknown = |a: usize, b: usize, mu: usize| (a * d + b) * d + mu;
    let flat = t.flat_lambda();
    let mut out = vec![RMat::zeros(d, d); chart.sites() * d];
    for s in chart.interior_sites(1) {
        t.inverse_lambda(s)?;
        let l = &t.lambda[s];
        // dl[μ][a·d + ν] = ∂_μ Λ^a_ν
        let dl: Vec<Vec<f64>> = (0..d).map(|mu| chart.diff_at(&flat, d * d, s, mu)).collect();
        let mut sys = RMat::zeros(n, n);
        let mut rhs = nalgebra::DVector::zeros(n);
        let mut row = 0;
        for mu in 0..d {
            for a in 0..d {
                for b in a..d {
                    for c in 0..d {
                        sys[(row, unknown(c, b, mu))] += t.eta[(a, c)];
                        sys[(row, unknown(c, a, mu))] += t.eta[(b, c)];
                    }
                    row += 1;
                }
            }
        }
        for a in 0..d {
            for mu in 0..d {
                for nu in mu + 1..d {
                    for b in 0..d {
                        sys[(row, unknown(a, b, mu))] += l[(b, nu)];
                        sys[(row, unknown(a, b, nu))] -= l[(b, mu)];
                    }
                    rhs[row] = -(dl[mu][a * d + nu] - dl[nu][a * d + mu]);
                    row += 1;
                }
            }
        }
        let sol = sys.lu().solve(&rhs).ok_or(Error::DegenerateTetrad { site: s })?;
        for mu in 0..d {
            out[s * d + mu] = RMat::from_fn(d, d, |a, b| sol[unknown(a, b, mu)]);
        }
    }
    Ok(out)
}

fn spin_field(t: &TetradField) -> Result<&Vec<RMat>> {
    t.gamma_spin
        .as_ref()
        .ok_or_else(|| Error::PreconditionViolation("tetrad has no spin connection".into()))
}

/// `Γ̃_μ = Λ⁻¹Γ_μΛ + Λ⁻¹∂_μΛ`, laid out as `Γ̃^ρ_{μν}`, one site away from the boundary.
pub fn composite_field(t: &TetradField) -> Result<ConnectionField> {
    let spin = spin_field(t)?;
    let chart = &t.chart;
    let d = t.d();
    let flat = t.flat_lambda();
    let mut out = ConnectionField::zeros(chart, 1);
    for s in chart.interior_sites(1) {
        let li = t.inverse_lambda(s)?;
        for mu in 0..d {
            let dl = chart.diff_at(&flat, d * d, s, mu);
            let dlm = RMat::from_fn(d, d, |a, nu| dl[a * d + nu]);
            let g = &li * (&spin[s * d + mu] * &t.lambda[s] + dlm);
            for rho in 0..d {
                for nu in 0..d {
                    out.set(s, rho, mu, nu, g[(rho, nu)]);
                }
            }
        }
    }
    Ok(out)
}

fn permutations4() -> Vec<([usize; 4], f64)> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    if let Some((_, sign)) = crate::linalg::sort_with_sign(&p) {
                        out.push((p, sign));
                    }
                }
            }
        }
    }
    out
}

/// `(−1/32πG) Σ ½ ε̃^{μνσρ} ε_{abcd} R^{ab}_{μν} Λ^c_σ Λ^d_ρ · sgn det Λ · h⁴`, with `R^{ab} = R^a_c η^{cb}`.
pub fn palatini_action(t: &TetradField, g_newton: f64) -> Result<f64> {
    let d = t.d();
    if d != 4 {
        return Err(Error::Dimension { expected: 4, got: d });
    }
    if !(g_newton > 0.0) || !g_newton.is_finite() {
        return Err(Error::InvalidArgument("G must be positive".into()));
    }
    let spin = spin_field(t)?;
    let chart = &t.chart;
    let eta_inv = t.eta.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("singular η".into()))?;
    let flat: Vec<f64> = spin.iter().flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>()).collect();
    let perms = permutations4();
    let mut total = 0.0;
    for s in chart.interior_sites(2) {
        let det = t.lambda[s].determinant();
        if !(det.abs() > 1e-10) {
            return Err(Error::DegenerateTetrad { site: s });
        }
        let dw: Vec<Vec<f64>> = (0..d).map(|mu| chart.diff_at(&flat, d * d * d, s, mu)).collect();
        let w = |mu: usize| &spin[s * d + mu];
        // r[μ][ν] = (R_{μν})^{ab}
        let mut r = vec![vec![RMat::zeros(d, d); d]; d];
        for mu in 0..d {
            for nu in 0..d {
                if mu == nu {
                    continue;
                }
                let rm = RMat::from_fn(d, d, |a, b| {
                    dw[mu][(nu * d + a) * d + b] - dw[nu][(mu * d + a) * d + b]
                }) + w(mu) * w(nu)
                    - w(nu) * w(mu);
                r[mu][nu] = rm * &eta_inv;
            }
        }
        let l = &t.lambda[s];
        let mut dens = 0.0;
        for (x, sx) in &perms {
            let (mu, nu, sg, rh) = (x[0], x[1], x[2], x[3]);
            for (y, sy) in &perms {
                let (a, b, c, dd) = (y[0], y[1], y[2], y[3]);
                dens += sx * sy * r[mu][nu][(a, b)] * l[(c, sg)] * l[(dd, rh)];
            }
        }
        total += 0.5 * dens * det.signum();
    }
    Ok(-total * chart.cell_volume() / (32.0 * PI * g_newton))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere(r: f64, n: usize) -> MetricGrid {
        MetricPreset::Sphere { radius: r }.build(n).unwrap()
    }

    fn max_over<F: Fn(usize) -> f64>(sites: &[usize], f: F) -> f64 {
        sites.iter().map(|&s| f(s)).fold(0.0, f64::max)
    }

    /// Sites of a `(2^k·16 + 1)`-point grid that coincide with interior sites of the 17-point grid.
    fn common_sites(chart: &Chart, margin: usize) -> Vec<usize> {
        let coarse = Chart::new(chart.lo.clone(), chart.hi.clone(), vec![17; chart.d()]).unwrap();
        coarse
            .interior_sites(margin)
            .into_iter()
            .map(|s| {
                let c: Vec<usize> = coarse.coords(s).iter().zip(&chart.points).map(|(&k, &p)| k * (p - 1) / 16).collect();
                chart.index(&c)
            })
            .collect()
    }

    fn random_rotation<R: Rng>(d: usize, rng: &mut R) -> RMat {
        let m = RMat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let mut q = m.qr().q();
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let m = MetricPreset::Flat { d: 3, length: 2.0 }.build(6).unwrap();
        let g = christoffel(&m).unwrap();
        assert!(g.gamma.iter().all(|&v| v == 0.0));
        let c = curvature_tensors(&g);
        assert!(c.riemann.iter().chain(&c.torsion).chain(&c.ricci).all(|&v| v.abs() <= 1e-12));
        assert_eq!(eh_action(&m, 1.0).unwrap().value, 0.0);
        assert!(eh_action(&m, 1.0).unwrap().warning.is_some());
    }

    #[test]
    fn sphere_christoffels_converge() {
        let mut errs = Vec::new();
        for n in [17, 33, 65] {
            let m = sphere(1.7, n);
            let g = christoffel(&m).unwrap();
            let sites = common_sites(&m.chart, 1);
            let e = max_over(&sites, |s| {
                let th = m.chart.position(s)[0];
                let e1 = (g.get(s, 0, 1, 1) + th.sin() * th.cos()).abs();
                let e2 = (g.get(s, 1, 0, 1) - th.cos() / th.sin()).abs();
                let e3 = (g.get(s, 1, 1, 0) - th.cos() / th.sin()).abs();
                e1.max(e2).max(e3).max(g.get(s, 0, 0, 0).abs())
            });
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9, "{errs:?}");
        }
    }

    #[test]
    fn conformal_christoffels_match_closed_form() {
        let a = 0.4;
        let lam_grad = |x: &[f64]| [2.0 * a * (2.0 * x[0]).cos() * (3.0 * x[1]).cos(), -3.0 * a * (2.0 * x[0]).sin() * (3.0 * x[1]).sin()];
        let mut errs = Vec::new();
        for n in [17, 33, 65] {
            let m = MetricPreset::Conformal { amplitude: a }.build(n).unwrap();
            let g = christoffel(&m).unwrap();
            let sites = m.chart.interior_sites(1);
            errs.push(max_over(&sites, |s| {
                let dl = lam_grad(&m.chart.position(s));
                let mut e: f64 = 0.0;
                for r in 0..2 {
                    for mu in 0..2 {
                        for nu in 0..2 {
                            let kd = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                            let exact = kd(r, mu) * dl[nu] + kd(r, nu) * dl[mu] - kd(mu, nu) * dl[r];
                            e = e.max((g.get(s, r, mu, nu) - exact).abs());
                        }
                    }
                }
                e
            }));
        }
        assert!(errs[2] < 1e-3);
        assert!((errs[1] / errs[2]).log2() > 1.8, "{errs:?}");
    }

    #[test]
    fn sphere_scalar_curvature_and_action() {
        let r = 1.7;
        let mut errs = Vec::new();
        for n in [65, 129, 257] {
            let m = sphere(r, n);
            let sc = curvature_tensors(&christoffel(&m).unwrap()).scalar(&m).unwrap();
            errs.push(max_over(&common_sites(&m.chart, 2), |s| (sc[s] * r * r / 2.0 - 1.0).abs()));
            if n == 257 {
                let all = m.chart.interior_sites(2);
                assert!(max_over(&all, |s| (sc[s] * r * r / 2.0 - 1.0).abs()) < 0.01);
                let (mx, mn) = all.iter().fold((f64::MIN, f64::MAX), |(a, b), &s| (a.max(sc[s]), b.min(sc[s])));
                let mean = all.iter().map(|&s| sc[s]).sum::<f64>() / all.len() as f64;
                assert!(mx - mn <= 0.02 * mean);
            }
        }
        assert!((errs[0] / errs[1]).log2() > 1.9 && (errs[1] / errs[2]).log2() > 1.9, "{errs:?}");

        let mut act_errs = Vec::new();
        for n in [129, 257, 513] {
            let m = sphere(r, n);
            // the quadrature covers the cells of sites 2..n-3
            let (h, hp) = (m.chart.spacing(0), m.chart.spacing(1));
            let (t0, t1) = (SPHERE_THETA.0 + 1.5 * h, SPHERE_THETA.1 - 1.5 * h);
            let area = r * r * (t0.cos() - t1.cos()) * (1.0 - 3.0 * hp);
            let exact = -(2.0 / (r * r)) * area / (16.0 * PI);
            act_errs.push(((eh_action(&m, 1.0).unwrap().value - exact) / exact).abs());
        }
        assert!(act_errs[0] < 0.02, "{act_errs:?}");
        assert!((act_errs[0] / act_errs[1]).log2() > 1.7 && (act_errs[1] / act_errs[2]).log2() > 1.7, "{act_errs:?}");
    }

    #[test]
    fn levi_civita_properties() {
        let a = 0.4;
        let exact_dg = |x: &[f64]| {
            let l = a * (2.0 * x[0]).sin() * (3.0 * x[1]).cos();
            let dl = [2.0 * a * (2.0 * x[0]).cos() * (3.0 * x[1]).cos(), -3.0 * a * (2.0 * x[0]).sin() * (3.0 * x[1]).sin()];
            [2.0 * dl[0] * (2.0 * l).exp(), 2.0 * dl[1] * (2.0 * l).exp()]
        };
        let mut errs = Vec::new();
        for n in [17, 33, 65] {
            let m = MetricPreset::Conformal { amplitude: a }.build(n).unwrap();
            let g = christoffel(&m).unwrap();
            let c = curvature_tensors(&g);
            assert!(c.torsion.iter().all(|&v| v.abs() <= 1e-12));
            let sites = m.chart.interior_sites(1);
            errs.push(max_over(&sites, |s| {
                let dg = exact_dg(&m.chart.position(s));
                let gm = &m.g[s];
                let mut e: f64 = 0.0;
                for rho in 0..2 {
                    for mu in 0..2 {
                        for nu in 0..2 {
                            let mut v = if mu == nu { dg[rho] } else { 0.0 };
                            for sg in 0..2 {
                                v -= g.get(s, sg, rho, mu) * gm[(sg, nu)] + g.get(s, sg, rho, nu) * gm[(mu, sg)];
                            }
                            e = e.max(v.abs());
                        }
                    }
                }
                e
            }));
            // first Bianchi
            let bianchi = max_over(&m.chart.interior_sites(2), |s| {
                let mut e: f64 = 0.0;
                for r in 0..2 {
                    for sg in 0..2 {
                        for mu in 0..2 {
                            for nu in 0..2 {
                                let v = c.riemann_at(s, r, sg, mu, nu) + c.riemann_at(s, r, mu, nu, sg) + c.riemann_at(s, r, nu, sg, mu);
                                e = e.max(v.abs());
                            }
                        }
                    }
                }
                e
            });
            assert!(bianchi < 1e-12);
        }
        assert!((errs[0] / errs[1]).log2() > 1.8 && (errs[1] / errs[2]).log2() > 1.8, "{errs:?}");
    }

    #[test]
    fn torsion_of_hand_made_connection() {
        let chart = Chart::new(vec![0.0; 2], vec![1.0; 2], vec![5, 5]).unwrap();
        let mut g = ConnectionField::zeros(&chart, 1);
        for s in chart.interior_sites(1) {
            g.set(s, 0, 0, 1, 0.7);
            g.set(s, 0, 1, 0, -0.2);
        }
        let c = curvature_tensors(&g);
        let s = chart.index(&[2, 2]);
        let d = 2;
        assert!((c.torsion[s * 8 + (0 * d + 0) * d + 1] - 0.9).abs() < 1e-15);
        assert!((c.torsion[s * 8 + (0 * d + 1) * d + 0] + 0.9).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let chart = Chart::new(vec![0.0; 2], vec![1.0; 2], vec![4, 4]).unwrap();
        let m = MetricGrid::from_fn(chart.clone(), Signature::Euclidean, |_| RMat::zeros(2, 2)).unwrap();
        assert!(matches!(christoffel(&m), Err(Error::DegenerateMetric { .. })));
        let t = TetradField::from_fn(chart, Signature::Euclidean, |_| RMat::zeros(2, 2)).unwrap();
        assert!(matches!(metric_from_tetrad(&t), Err(Error::DegenerateTetrad { .. })));
        assert!(matches!(levi_civita_spin_connection(&t), Err(Error::DegenerateTetrad { .. })));
    }

    #[test]
    fn tetrad_metric_examples() {
        let chart = Chart::new(vec![1.0, 0.5, 0.0], vec![2.0, 2.5, 1.0], vec![4, 5, 3]).unwrap();
        let t = TetradField::from_fn(chart.clone(), Signature::Euclidean, |x| {
            RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, x[0], x[0] * x[1].sin()]))
        })
        .unwrap();
        let m = metric_from_tetrad(&t).unwrap();
        for s in 0..chart.sites() {
            let x = chart.position(s);
            let e = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, x[0] * x[0], (x[0] * x[1].sin()).powi(2)]));
            assert!((&m.g[s] - e).amax() < 1e-14);
        }
        let unit = TetradField::from_fn(chart.clone(), Signature::Euclidean, |_| RMat::identity(3, 3)).unwrap();
        assert!(metric_from_tetrad(&unit).unwrap().g.iter().all(|g| *g == RMat::identity(3, 3)));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base: Vec<RMat> = (0..chart.sites()).map(|_| RMat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)) + RMat::identity(3, 3) * 2.0).collect();
        let t = TetradField { chart: chart.clone(), lambda: base, gamma_spin: None, eta: Signature::Euclidean.eta(3) };
        let h = random_rotation(3, &mut rng);
        let (g1, g2) = (metric_from_tetrad(&t).unwrap(), metric_from_tetrad(&t.rotated(&h).unwrap()).unwrap());
        for (a, b) in g1.g.iter().zip(&g2.g) {
            assert!((a - b).amax() <= 1e-12);
        }
        // site-dependent rotations too
        let local: Vec<RMat> = t.lambda.iter().map(|l| random_rotation(3, &mut rng).transpose() * l).collect();
        let g3 = metric_from_tetrad(&TetradField { lambda: local, ..t.clone() }).unwrap();
        for (a, b) in g1.g.iter().zip(&g3.g) {
            assert!((a - b).amax() <= 1e-12);
        }
    }

    fn smooth_tetrad(chart: &Chart) -> TetradField {
        let d = chart.d();
        TetradField::from_fn(chart.clone(), Signature::Euclidean, |x| {
            RMat::from_fn(d, d, |a, m| {
                let base = if a == m { 1.5 } else { 0.0 };
                base + 0.2 * ((a + 1) as f64 * x[m % d] + 0.3 * m as f64).sin() * (x[(m + 1) % d]).cos()
            })
        })
        .unwrap()
    }

    #[test]
    fn composite_field_examples() {
        let chart = Chart::new(vec![0.0; 3], vec![1.0; 3], vec![5; 3]).unwrap();
        let mut t = TetradField::from_fn(chart.clone(), Signature::Euclidean, |_| RMat::identity(3, 3)).unwrap();
        t.gamma_spin = Some(vec![RMat::zeros(3, 3); chart.sites() * 3]);
        assert!(composite_field(&t).unwrap().gamma.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = smooth_tetrad(&chart);
        t.gamma_spin = Some((0..chart.sites() * 3).map(|_| RMat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0))).collect());
        let h = random_rotation(3, &mut rng);
        let (a, b) = (composite_field(&t).unwrap(), composite_field(&t.rotated(&h).unwrap()).unwrap());
        let e = a.gamma.iter().zip(&b.gamma).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(e <= 1e-12, "{e}");
        assert!(matches!(composite_field(&smooth_tetrad(&chart)), Err(Error::PreconditionViolation(_))));
    }

    #[test]
    fn composite_field_under_smooth_rotations() {
        // h(x) = rotation by α(x) in the (0,1) plane
        let alpha = |x: &[f64]| 0.8 * (2.0 * x[0]).sin() + 0.5 * x[1];
        let dalpha = |x: &[f64], mu: usize| [1.6 * (2.0 * x[0]).cos(), 0.5, 0.0][mu];
        let rot = |a: f64| {
            let mut m = RMat::identity(3, 3);
            m[(0, 0)] = a.cos();
            m[(0, 1)] = -a.sin();
            m[(1, 0)] = a.sin();
            m[(1, 1)] = a.cos();
            m
        };
        let gen = {
            let mut m = RMat::zeros(3, 3);
            m[(0, 1)] = -1.0;
            m[(1, 0)] = 1.0;
            m
        };
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let chart = Chart::new(vec![0.0; 3], vec![1.0; 3], vec![n; 3]).unwrap();
            let t = smooth_tetrad(&chart).with_levi_civita().unwrap();
            let spin = t.gamma_spin.clone().unwrap();
            let mut tr = t.clone();
            for s in 0..chart.sites() {
                let x = chart.position(s);
                let h = rot(alpha(&x));
                let hi = h.transpose();
                tr.lambda[s] = &hi * &t.lambda[s];
                for mu in 0..3 {
                    // h⁻¹∂h = ∂α · gen
                    tr.gamma_spin.as_mut().unwrap()[s * 3 + mu] = &hi * &spin[s * 3 + mu] * &h + &gen * dalpha(&x, mu);
                }
            }
            let (a, b) = (composite_field(&t).unwrap(), composite_field(&tr).unwrap());
            errs.push(a.gamma.iter().zip(&b.gamma).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        assert!((errs[0] / errs[1]).log2() >= 1.0 && (errs[1] / errs[2]).log2() >= 1.0, "{errs:?}");
    }

    #[test]
    fn spin_connection_reproduces_christoffels() {
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let chart = Chart::new(vec![0.0; 3], vec![1.0; 3], vec![n; 3]).unwrap();
            let t = smooth_tetrad(&chart).with_levi_civita().unwrap();
            for s in chart.interior_sites(1) {
                let eta = &t.eta;
                for w in &t.gamma_spin.as_ref().unwrap()[s * 3..s * 3 + 3] {
                    assert!((eta * w + (eta * w).transpose()).amax() < 1e-12);
                }
            }
            let comp = composite_field(&t).unwrap();
            let c = curvature_tensors(&comp);
            assert!(c.torsion.iter().all(|v| v.abs() < 1e-12));
            let lc = christoffel(&metric_from_tetrad(&t).unwrap()).unwrap();
            errs.push(comp.gamma.iter().zip(&lc.gamma).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        assert!(errs[2] < 1e-2);
        assert!((errs[0] / errs[1]).log2() >= 1.0 && (errs[1] / errs[2]).log2() >= 1.0, "{errs:?}");
    }

    /// `S² × T²` with `Λ = diag(r, r sin θ, 1, 1)`.
    pub(crate) fn sphere_times_flat(r: f64, n: usize) -> TetradField {
        let chart = Chart::new(vec![SPHERE_THETA.0, 0.0, 0.0, 0.0], vec![SPHERE_THETA.1, 1.0, 1.0, 1.0], vec![n, n / 2 + 1, 5, 5]).unwrap();
        TetradField::from_fn(chart, Signature::Euclidean, |x| {
            RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![r, r * x[0].sin(), 1.0, 1.0]))
        })
        .unwrap()
    }

    #[test]
    fn palatini_matches_einstein_hilbert() {
        let t = sphere_times_flat(1.3, 25).with_levi_civita().unwrap();
        let sp = palatini_action(&t, 1.0).unwrap();
        let se = eh_action(&metric_from_tetrad(&t).unwrap(), 1.0).unwrap().value;
        assert!(((sp - se) / se).abs() < 0.03, "{sp} vs {se}");
        assert!(se < 0.0);

        let chart = Chart::new(vec![0.0; 4], vec![1.0; 4], vec![5; 4]).unwrap();
        let mut flat = TetradField::from_fn(chart.clone(), Signature::Euclidean, |_| RMat::identity(4, 4)).unwrap();
        flat.gamma_spin = Some(vec![RMat::zeros(4, 4); chart.sites() * 4]);
        assert_eq!(palatini_action(&flat, 1.0).unwrap(), 0.0);

        let c3 = Chart::new(vec![0.0; 3], vec![1.0; 3], vec![5; 3]).unwrap();
        let t3 = smooth_tetrad(&c3).with_levi_civita().unwrap();
        assert!(matches!(palatini_action(&t3, 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn palatini_is_rotation_invariant() {
        let chart = Chart::new(vec![0.0; 4], vec![1.0; 4], vec![5; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = smooth_tetrad(&chart).with_levi_civita().unwrap();
        let mut t = t;
        // perturb off the Levi-Civita point
        for w in t.gamma_spin.as_mut().unwrap() {
            let a = RMat::from_fn(4, 4, |_, _| rng.random_range(-0.1..0.1));
            *w += &a - a.transpose();
        }
        let s0 = palatini_action(&t, 1.0).unwrap();
        for _ in 0..3 {
            let h = random_rotation(4, &mut rng);
            let s1 = palatini_action(&t.rotated(&h).unwrap(), 1.0).unwrap();
            assert!((s1 - s0).abs() <= 1e-12 * s0.abs().max(1.0), "{s0} {s1}");
        }
    }
}
