//! The `C∞(M) ⊗ M_n` calculus on a periodic grid: Yang-Mills, Chern-Simons and
//! Yang-Mills-Higgs actions, lattice gauge transformations and mass spectra.
//!
//! Fields live on sites, not links. Derivatives are central differences with
//! periodic wraparound. Site sums are evaluated in parallel into a per-site
//! buffer and reduced sequentially in lexicographic order, so results do not
//! depend on the worker count.

use crate::error::{Error, Result};
use crate::liealg::LieData;
use crate::linalg::{self, c, CMat, RMat, I};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-12;

/// Values per site, one matrix per component.
pub type SiteTable = Vec<Vec<CMat>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub d: usize,
    pub extents: Vec<usize>,
    pub h: f64,
}

impl LatticeSpec {
    pub fn new(extents: Vec<usize>, h: f64) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::InvalidArgument("lattice needs at least one direction".into()));
        }
        if let Some(&bad) = extents.iter().find(|&&e| e < 3) {
            return Err(Error::InvalidArgument(format!("extent {bad} < 3")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("spacing {h} must be positive")));
        }
        Ok(LatticeSpec { d: extents.len(), extents, h })
    }

    /// `N^d` sites covering a periodic box of side `length`.
    pub fn cubic(d: usize, n: usize, length: f64) -> Result<Self> {
        Self::new(vec![n; d], length / n as f64)
    }

    pub fn sites(&self) -> usize {
        self.extents.iter().product()
    }

    /// `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.sites() as f64
    }

    pub fn length(&self, mu: usize) -> f64 {
        self.extents[mu] as f64 * self.h
    }

    /// Lexicographic coordinates, last direction fastest.
    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut x = vec![0; self.d];
        for mu in (0..self.d).rev() {
            x[mu] = site % self.extents[mu];
            site /= self.extents[mu];
        }
        x
    }

    pub fn index(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.extents).fold(0, |acc, (&xi, &n)| acc * n + xi % n)
    }

    pub fn position(&self, site: usize) -> Vec<f64> {
        self.coords(site).into_iter().map(|x| x as f64 * self.h).collect()
    }

    /// Neighbour of `site` one step forward (`forward = true`) or backward along `mu`.
    pub fn neighbour(&self, site: usize, mu: usize, forward: bool) -> usize {
        let mut x = self.coords(site);
        let n = self.extents[mu];
        x[mu] = if forward { (x[mu] + 1) % n } else { (x[mu] + n - 1) % n };
        self.index(&x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeFieldA {
    pub lattice: LatticeSpec,
    pub n: usize,
    /// `a[site][μ]`.
    pub a: SiteTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMultipletB {
    pub lattice: LatticeSpec,
    pub n: usize,
    /// `b[site][k]`, `k < n² − 1`.
    pub b: SiteTable,
}

#[derive(Debug, Clone)]
pub struct YMHParams {
    pub mu: f64,
    pub lie: Arc<LieData>,
}

impl YMHParams {
    pub fn new(mu: f64, lie: &Arc<LieData>) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass parameter {mu} must be non-negative")));
        }
        Ok(YMHParams { mu, lie: lie.clone() })
    }
}

fn check_table(lat: &LatticeSpec, n: usize, t: &SiteTable, comps: usize) -> Result<()> {
    if t.len() != lat.sites() {
        return Err(Error::Dimension { expected: lat.sites(), got: t.len() });
    }
    for site in t {
        if site.len() != comps {
            return Err(Error::Dimension { expected: comps, got: site.len() });
        }
        for m in site {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidArgument(format!("site matrices must be {n}x{n}")));
            }
            let r = linalg::anti_hermitian_residual(m);
            if r > HERMITIAN_TOL {
                return Err(Error::PreconditionViolation(format!("field not anti-Hermitian (residual {r:e})")));
            }
        }
    }
    Ok(())
}

impl GaugeFieldA {
    pub fn new(lattice: LatticeSpec, n: usize, a: SiteTable) -> Result<Self> {
        check_table(&lattice, n, &a, lattice.d)?;
        Ok(GaugeFieldA { lattice, n, a })
    }

    pub fn zero(lattice: &LatticeSpec, n: usize) -> Self {
        let a = vec![vec![linalg::zeros(n); lattice.d]; lattice.sites()];
        GaugeFieldA { lattice: lattice.clone(), n, a }
    }

    /// Builds `a_μ(x) = f(x, μ)`, projecting onto anti-Hermitian matrices.
    pub fn from_fn(lattice: &LatticeSpec, n: usize, f: impl Fn(&[f64], usize) -> CMat) -> Self {
        let a = (0..lattice.sites())
            .map(|s| {
                let x = lattice.position(s);
                (0..lattice.d).map(|mu| linalg::anti_hermitian_part(&f(&x, mu))).collect()
            })
            .collect();
        GaugeFieldA { lattice: lattice.clone(), n, a }
    }

    pub fn random<R: rand::Rng + ?Sized>(lattice: &LatticeSpec, n: usize, scale: f64, rng: &mut R) -> Self {
        let a = (0..lattice.sites())
            .map(|_| (0..lattice.d).map(|_| linalg::random_anti_hermitian(n, rng) * c(scale, 0.0)).collect())
            .collect();
        GaugeFieldA { lattice: lattice.clone(), n, a }
    }
}

impl ScalarMultipletB {
    pub fn new(lattice: LatticeSpec, n: usize, b: SiteTable) -> Result<Self> {
        check_table(&lattice, n, &b, n * n - 1)?;
        Ok(ScalarMultipletB { lattice, n, b })
    }

    pub fn zero(lattice: &LatticeSpec, n: usize) -> Self {
        let b = vec![vec![linalg::zeros(n); n * n - 1]; lattice.sites()];
        ScalarMultipletB { lattice: lattice.clone(), n, b }
    }

    pub fn constant(lattice: &LatticeSpec, n: usize, values: &[CMat]) -> Result<Self> {
        let b = vec![values.to_vec(); lattice.sites()];
        Self::new(lattice.clone(), n, b)
    }

    /// `b_k = iE_k` at every site.
    pub fn vacuum(lattice: &LatticeSpec, lie: &LieData) -> Self {
        let v: Vec<CMat> = lie.basis.iter().map(|e| e * I).collect();
        ScalarMultipletB { lattice: lattice.clone(), n: lie.n, b: vec![v; lattice.sites()] }
    }

    pub fn from_fn(lattice: &LatticeSpec, n: usize, f: impl Fn(&[f64], usize) -> CMat) -> Self {
        let b = (0..lattice.sites())
            .map(|s| {
                let x = lattice.position(s);
                (0..n * n - 1).map(|k| linalg::anti_hermitian_part(&f(&x, k))).collect()
            })
            .collect();
        ScalarMultipletB { lattice: lattice.clone(), n, b }
    }

    pub fn random<R: rand::Rng + ?Sized>(lattice: &LatticeSpec, n: usize, scale: f64, rng: &mut R) -> Self {
        let b = (0..lattice.sites())
            .map(|_| (0..n * n - 1).map(|_| linalg::random_anti_hermitian(n, rng) * c(scale, 0.0)).collect())
            .collect();
        ScalarMultipletB { lattice: lattice.clone(), n, b }
    }

    /// Largest entry deviation from the value at site 0.
    pub fn max_site_deviation(&self) -> f64 {
        let first = &self.b[0];
        self.b
            .iter()
            .flat_map(|s| s.iter().zip(first).map(|(x, y)| linalg::max_abs(&(x - y))))
            .fold(0.0, f64::max)
    }
}

/// Central difference `(f(x+ê_μh) − f(x−ê_μh)) / 2h` of every component.
pub fn finite_diff(lat: &LatticeSpec, field: &SiteTable, mu: usize) -> Result<SiteTable> {
    if mu >= lat.d {
        return Err(Error::InvalidArgument(format!("direction {mu} out of range for d = {}", lat.d)));
    }
    if field.len() != lat.sites() {
        return Err(Error::Dimension { expected: lat.sites(), got: field.len() });
    }
    let s = c(1.0 / (2.0 * lat.h), 0.0);
    Ok((0..lat.sites())
        .into_par_iter()
        .map(|site| {
            let f = &field[lat.neighbour(site, mu, true)];
            let b = &field[lat.neighbour(site, mu, false)];
            f.iter().zip(b).map(|(x, y)| (x - y) * s).collect()
        })
        .collect())
}

/// The three curvature blocks per site.
#[derive(Debug, Clone)]
pub struct FieldStrength {
    pub d: usize,
    pub dim: usize,
    /// `geo[site][μ·d + ν]`.
    pub geo: SiteTable,
    /// `mix[site][μ·dim + k]`.
    pub mix: SiteTable,
    /// `alg[site][k·dim + ℓ]`.
    pub alg: SiteTable,
}

fn check_compatible(a: &GaugeFieldA, b: &ScalarMultipletB, lie: &LieData) -> Result<()> {
    if a.lattice != b.lattice || a.n != b.n || a.n != lie.n {
        return Err(Error::IncompatibleFields);
    }
    Ok(())
}

/// Per-direction derivative tables `∂_μ` of a field.
fn all_derivatives(lat: &LatticeSpec, t: &SiteTable) -> Vec<SiteTable> {
    (0..lat.d).map(|mu| finite_diff(lat, t, mu).expect("direction in range")).collect()
}

pub fn field_strength(a: &GaugeFieldA, b: &ScalarMultipletB, lie: &LieData) -> Result<FieldStrength> {
    check_compatible(a, b, lie)?;
    let lat = &a.lattice;
    let (d, dim, n) = (lat.d, lie.dim(), a.n);
    let da = all_derivatives(lat, &a.a);
    let db = all_derivatives(lat, &b.b);
    let blocks: Vec<(Vec<CMat>, Vec<CMat>, Vec<CMat>)> = (0..lat.sites())
        .into_par_iter()
        .map(|s| {
            let am = &a.a[s];
            let bm = &b.b[s];
            let mut geo = vec![linalg::zeros(n); d * d];
            for mu in 0..d {
                for nu in 0..d {
                    if mu != nu {
                        geo[mu * d + nu] = &da[mu][s][nu] - &da[nu][s][mu] + linalg::commutator(&am[mu], &am[nu]);
                    }
                }
            }
            let mut mix = Vec::with_capacity(d * dim);
            for mu in 0..d {
                for k in 0..dim {
                    mix.push(&db[mu][s][k] + linalg::commutator(&am[mu], &bm[k]));
                }
            }
            let mut alg = vec![linalg::zeros(n); dim * dim];
            for k in 0..dim {
                for l in 0..dim {
                    if k == l {
                        continue;
                    }
                    let mut x = linalg::commutator(&bm[k], &bm[l]);
                    for m in 0..dim {
                        let cm = lie.c(m, k, l);
                        if cm != 0.0 {
                            x -= &bm[m] * c(cm, 0.0);
                        }
                    }
                    alg[k * dim + l] = x;
                }
            }
            (geo, mix, alg)
        })
        .collect();
    let mut fs = FieldStrength { d, dim, geo: Vec::new(), mix: Vec::new(), alg: Vec::new() };
    for (g, m, al) in blocks {
        fs.geo.push(g);
        fs.mix.push(m);
        fs.alg.push(al);
    }
    Ok(fs)
}

fn block_sums(fs: &FieldStrength) -> Vec<[f64; 3]> {
    (0..fs.geo.len())
        .into_par_iter()
        .map(|s| {
            let g: f64 = fs.geo[s].iter().map(linalg::frobenius_sq).sum();
            let m: f64 = fs.mix[s].iter().map(linalg::frobenius_sq).sum();
            let a: f64 = fs.alg[s].iter().map(linalg::frobenius_sq).sum();
            [g, m, a]
        })
        .collect()
}

/// The three weighted terms of `S_YMH`, each already multiplied by `(1/4n)·h^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YMHTerms {
    pub geometric: f64,
    pub mixed: f64,
    pub algebraic: f64,
}

impl YMHTerms {
    pub fn total(&self) -> f64 {
        self.geometric + self.mixed + self.algebraic
    }
}

fn weights(n: usize, mu: f64) -> [f64; 3] {
    let nf = n as f64;
    [1.0, mu * mu / (2.0 * nf), mu.powi(4) / (4.0 * nf)]
}

pub fn ymh_terms(a: &GaugeFieldA, b: &ScalarMultipletB, p: &YMHParams) -> Result<YMHTerms> {
    let fs = field_strength(a, b, &p.lie)?;
    let per_site = block_sums(&fs);
    let mut tot = [0.0; 3];
    for s in &per_site {
        for i in 0..3 {
            tot[i] += s[i];
        }
    }
    let w = weights(a.n, p.mu);
    let pre = a.lattice.cell_volume() / (4.0 * a.n as f64);
    Ok(YMHTerms { geometric: pre * w[0] * tot[0], mixed: pre * w[1] * tot[1], algebraic: pre * w[2] * tot[2] })
}

/// `S = (1/4n)·h^d·Σ_x {Σ‖F^geo‖² + (μ²/2n)Σ‖F^mix‖² + (μ⁴/4n)Σ‖F^alg‖²}`.
pub fn ymh_action(a: &GaugeFieldA, b: &ScalarMultipletB, p: &YMHParams) -> Result<f64> {
    Ok(ymh_terms(a, b, p)?.total())
}

/// `½·h^d·Σ_x Σ_{μν} ‖F^geo_{μν}‖²`.
pub fn ym_action(a: &GaugeFieldA) -> f64 {
    let lat = &a.lattice;
    let d = lat.d;
    let da = all_derivatives(lat, &a.a);
    let per_site: Vec<f64> = (0..lat.sites())
        .into_par_iter()
        .map(|s| {
            let mut acc = 0.0;
            for mu in 0..d {
                for nu in 0..d {
                    if mu != nu {
                        let f = &da[mu][s][nu] - &da[nu][s][mu] + linalg::commutator(&a.a[s][mu], &a.a[s][nu]);
                        acc += linalg::frobenius_sq(&f);
                    }
                }
            }
            acc
        })
        .collect();
    0.5 * lat.cell_volume() * per_site.iter().sum::<f64>()
}

fn levi_civita3(m: usize, n: usize, r: usize) -> f64 {
    match (m, n, r) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// `S_CS = h³·Σ_x Σ ε^{μνρ} Re tr(a_μ∂_νa_ρ + ⅔ a_μa_νa_ρ)`.
pub fn chern_simons(a: &GaugeFieldA) -> Result<f64> {
    let lat = &a.lattice;
    if lat.d != 3 {
        return Err(Error::Dimension { expected: 3, got: lat.d });
    }
    let da = all_derivatives(lat, &a.a);
    let per_site: Vec<f64> = (0..lat.sites())
        .into_par_iter()
        .map(|s| {
            let am = &a.a[s];
            let mut acc = c(0.0, 0.0);
            for m in 0..3 {
                for n in 0..3 {
                    for r in 0..3 {
                        let e = levi_civita3(m, n, r);
                        if e == 0.0 {
                            continue;
                        }
                        let t = &am[m] * &da[n][s][r] + &am[m] * &am[n] * &am[r] * c(2.0 / 3.0, 0.0);
                        acc += t.trace() * e;
                    }
                }
            }
            acc.re
        })
        .collect();
    Ok(lat.cell_volume() * per_site.iter().sum::<f64>())
}

#[derive(Debug, Clone)]
pub struct GaugeTransformed {
    pub a: GaugeFieldA,
    pub b: ScalarMultipletB,
    /// Largest anti-Hermitian residual removed by the final projection.
    pub projection_residual: f64,
}

/// `a_μ ↦ g⁻¹a_μg + g⁻¹∂_μg`, `b_k ↦ g⁻¹b_kg`, followed by anti-Hermitian projection.
pub fn gauge_transform_lattice(a: &GaugeFieldA, b: &ScalarMultipletB, g: &[CMat]) -> Result<GaugeTransformed> {
    if a.lattice != b.lattice || a.n != b.n {
        return Err(Error::IncompatibleFields);
    }
    let lat = &a.lattice;
    if g.len() != lat.sites() {
        return Err(Error::Dimension { expected: lat.sites(), got: g.len() });
    }
    for gx in g {
        if gx.nrows() != a.n {
            return Err(Error::Dimension { expected: a.n, got: gx.nrows() });
        }
        let r = linalg::unitarity_residual(gx);
        if r > UNITARY_TOL {
            return Err(Error::InvalidGaugeElement { residual: r });
        }
    }
    let gt: SiteTable = g.iter().map(|m| vec![m.clone()]).collect();
    let dg = all_derivatives(lat, &gt);
    let res: Vec<(Vec<CMat>, Vec<CMat>, f64)> = (0..lat.sites())
        .into_par_iter()
        .map(|s| {
            let gi = g[s].adjoint();
            let mut resid: f64 = 0.0;
            let mut project = |x: CMat| {
                resid = resid.max(linalg::anti_hermitian_residual(&x));
                linalg::anti_hermitian_part(&x)
            };
            let an: Vec<CMat> =
                (0..lat.d).map(|mu| project(&gi * &a.a[s][mu] * &g[s] + &gi * &dg[mu][s][0])).collect();
            let bn: Vec<CMat> = b.b[s].iter().map(|bk| project(&gi * bk * &g[s])).collect();
            (an, bn, resid)
        })
        .collect();
    let mut out_a = Vec::with_capacity(lat.sites());
    let mut out_b = Vec::with_capacity(lat.sites());
    let mut resid: f64 = 0.0;
    for (x, y, r) in res {
        out_a.push(x);
        out_b.push(y);
        resid = resid.max(r);
    }
    Ok(GaugeTransformed {
        a: GaugeFieldA { lattice: lat.clone(), n: a.n, a: out_a },
        b: ScalarMultipletB { lattice: lat.clone(), n: a.n, b: out_b },
        projection_residual: resid,
    })
}

/// Frobenius-orthonormal basis `{iE_k/√2} ∪ {i𝟙/√n}` of `u(n)`.
pub fn u_n_basis(lie: &LieData) -> Vec<CMat> {
    let n = lie.n;
    let mut out: Vec<CMat> = lie.basis.iter().map(|e| e * c(0.0, 1.0 / 2f64.sqrt())).collect();
    out.push(linalg::identity(n) * c(0.0, 1.0 / (n as f64).sqrt()));
    out
}

/// Eigenvalues of `a ↦ (μ²/2n)Σ_k‖[a, b0_k]‖²` on constant `a_μ ∈ u(n)`, one ascending block per direction.
pub fn mass_spectrum(b0: &ScalarMultipletB, p: &YMHParams) -> Result<Vec<f64>> {
    if b0.n != p.lie.n {
        return Err(Error::IncompatibleFields);
    }
    let dev = b0.max_site_deviation();
    if dev > 1e-12 {
        return Err(Error::Unsupported(format!("mass spectrum needs constant b0 (deviation {dev:e})")));
    }
    let basis = u_n_basis(&p.lie);
    let bk = &b0.b[0];
    let comm: Vec<Vec<CMat>> =
        basis.iter().map(|u| bk.iter().map(|b| linalg::commutator(u, b)).collect()).collect();
    let w = p.mu * p.mu / (2.0 * p.lie.n as f64);
    let m = basis.len();
    let q = RMat::from_fn(m, m, |i, j| {
        w * comm[i].iter().zip(&comm[j]).map(|(x, y)| linalg::real_inner(x, y)).sum::<f64>()
    });
    let ev = linalg::symmetric_eigenvalues(&q);
    Ok((0..b0.lattice.d).flat_map(|_| ev.iter().copied()).collect())
}

/// Gradient of `ymh_action` in the `Re tr(G†·δ)` pairing, per site and component.
pub fn ymh_gradient(a: &GaugeFieldA, b: &ScalarMultipletB, p: &YMHParams) -> Result<(SiteTable, SiteTable)> {
    let fs = field_strength(a, b, &p.lie)?;
    let lat = &a.lattice;
    let (d, dim, n) = (lat.d, p.lie.dim(), a.n);
    let w = weights(n, p.mu);
    let pre = 2.0 * lat.cell_volume() / (4.0 * n as f64);
    let scale = |x: &CMat, k: usize| x * c(pre * w[k], 0.0);

    // Local contributions plus the cotangent tables that feed through ∂.
    // Through ∂: geo_{μν} carries ∂_μ a_ν − ∂_ν a_μ; mix_{μk} carries ∂_μ b_k.
    let local: Vec<(Vec<CMat>, Vec<CMat>, Vec<Vec<CMat>>, Vec<Vec<CMat>>)> = (0..lat.sites())
        .into_par_iter()
        .map(|s| {
            let am = &a.a[s];
            let bm = &b.b[s];
            let mut ga = vec![linalg::zeros(n); d];
            let mut gb = vec![linalg::zeros(n); dim];
            // cot_a[μ][ν]: cotangent multiplying ∂_μ a_ν
            let mut cot_a = vec![vec![linalg::zeros(n); d]; d];
            let mut cot_b = vec![vec![linalg::zeros(n); dim]; d];
            for mu in 0..d {
                for nu in 0..d {
                    if mu == nu {
                        continue;
                    }
                    let pm = scale(&fs.geo[s][mu * d + nu], 0);
                    ga[mu] += linalg::commutator(&pm, &am[nu].adjoint());
                    ga[nu] += linalg::commutator(&am[mu].adjoint(), &pm);
                    cot_a[mu][nu] += &pm;
                    cot_a[nu][mu] -= &pm;
                }
            }
            for mu in 0..d {
                for k in 0..dim {
                    let pm = scale(&fs.mix[s][mu * dim + k], 1);
                    ga[mu] += linalg::commutator(&pm, &bm[k].adjoint());
                    gb[k] += linalg::commutator(&am[mu].adjoint(), &pm);
                    cot_b[mu][k] += &pm;
                }
            }
            for k in 0..dim {
                for l in 0..dim {
                    if k == l {
                        continue;
                    }
                    let pm = scale(&fs.alg[s][k * dim + l], 2);
                    gb[k] += linalg::commutator(&pm, &bm[l].adjoint());
                    gb[l] += linalg::commutator(&bm[k].adjoint(), &pm);
                    for m in 0..dim {
                        let cm = p.lie.c(m, k, l);
                        if cm != 0.0 {
                            gb[m] -= &pm * c(cm, 0.0);
                        }
                    }
                }
            }
            (ga, gb, cot_a, cot_b)
        })
        .collect();

    let mut ga: SiteTable = Vec::with_capacity(lat.sites());
    let mut gb: SiteTable = Vec::with_capacity(lat.sites());
    let mut cot_a: Vec<SiteTable> = vec![Vec::with_capacity(lat.sites()); d];
    let mut cot_b: Vec<SiteTable> = vec![Vec::with_capacity(lat.sites()); d];
    for (x, y, ca, cb) in local {
        ga.push(x);
        gb.push(y);
        for (mu, (ca_mu, cb_mu)) in ca.into_iter().zip(cb).enumerate() {
            cot_a[mu].push(ca_mu);
            cot_b[mu].push(cb_mu);
        }
    }
    // The adjoint of the central difference is its negative.
    for mu in 0..d {
        let dca = finite_diff(lat, &cot_a[mu], mu)?;
        let dcb = finite_diff(lat, &cot_b[mu], mu)?;
        for s in 0..lat.sites() {
            for nu in 0..d {
                ga[s][nu] -= &dca[s][nu];
            }
            for k in 0..dim {
                gb[s][k] -= &dcb[s][k];
            }
        }
    }
    Ok((ga, gb))
}

const WAVEVECTORS: [[f64; 3]; 8] = [
    [1.0, 0.0, 1.0],
    [0.0, 1.0, -1.0],
    [1.0, 1.0, 0.0],
    [-1.0, 0.0, 1.0],
    [1.0, -1.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
    [1.0, 0.0, -1.0],
];

fn wavenumber(j: usize, mu: usize) -> f64 {
    WAVEVECTORS[j % 8][mu % 3]
}

/// Smooth periodic test configuration; every Fourier mode fits the box.
pub fn smooth_fields(lat: &LatticeSpec, lie: &LieData, amplitude: f64) -> (GaugeFieldA, ScalarMultipletB) {
    let two_pi = 2.0 * std::f64::consts::PI;
    let lengths: Vec<f64> = (0..lat.d).map(|mu| lat.length(mu)).collect();
    let phase = |x: &[f64], j: usize| -> f64 {
        x.iter()
            .enumerate()
            .map(|(mu, xi)| two_pi * xi / lengths[mu] * wavenumber(j, mu))
            .sum::<f64>()
            + 0.37 * j as f64
    };
    // products of modes give every component a broad, generic spectrum
    let profile = |x: &[f64], j: usize| phase(x, j).sin() + 0.5 * phase(x, j + 3).cos() * phase(x, j + 5).sin();
    let dim = lie.dim();
    let a = GaugeFieldA::from_fn(lat, lie.n, |x, mu| {
        let mut m = linalg::zeros(lie.n);
        for k in 0..dim {
            m += &lie.basis[k] * c(0.0, amplitude * profile(x, mu * dim + k) / (1 + k) as f64);
        }
        m
    });
    let b = ScalarMultipletB::from_fn(lat, lie.n, |x, k| {
        let mut m = &lie.basis[k] * I;
        for l in 0..dim {
            m += &lie.basis[l] * c(0.0, 0.5 * amplitude * profile(x, 7 + k * dim + l) / (1 + l + k) as f64);
        }
        m
    });
    (a, b)
}

/// `g(x) = exp(iα·sin(2πx₁/L)·E_last)`, a smooth gauge element along the first direction.
pub fn smooth_gauge(lat: &LatticeSpec, lie: &LieData, alpha: f64) -> Vec<CMat> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let gen = lie.basis.last().cloned().unwrap_or_else(|| linalg::identity(lie.n));
    let l0 = lat.length(0);
    (0..lat.sites())
        .map(|s| {
            let x = lat.position(s);
            linalg::exp_i_hermitian(&gen, alpha * (two_pi * x[0] / l0).sin())
        })
        .collect()
}

/// Starting configuration of a gauge drift study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftStart {
    /// `a = 0`, `b_k = iE_k`: the drift is the action of a discretely transformed vacuum.
    Vacuum,
    Smooth { amplitude: f64 },
}

/// `|S(gauge transformed) − S|` on an `N^d` box of side 1 under `smooth_gauge`.
pub fn gauge_drift(start: DriftStart, d: usize, n_sites: usize, p: &YMHParams, alpha: f64) -> Result<f64> {
    let lat = LatticeSpec::cubic(d, n_sites, 1.0)?;
    let (a, b) = match start {
        DriftStart::Vacuum => (GaugeFieldA::zero(&lat, p.lie.n), ScalarMultipletB::vacuum(&lat, &p.lie)),
        DriftStart::Smooth { amplitude } => smooth_fields(&lat, &p.lie, amplitude),
    };
    let g = smooth_gauge(&lat, &p.lie, alpha);
    let t = gauge_transform_lattice(&a, &b, &g)?;
    Ok((ymh_action(&t.a, &t.b, p)? - ymh_action(&a, &b, p)?).abs())
}

/// Empirical convergence orders `log2(e_i / e_{i+1})` for successive halvings of `h`.
pub fn empirical_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
