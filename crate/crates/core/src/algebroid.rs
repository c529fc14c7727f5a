//! Trivial transitive Lie algebroids `TLA(M, g) = TM ⊕ (M × g)` on a periodic grid.
//!
//! Kernel values are real coefficient vectors in the `iE_k` basis, so
//! `[γ, η]^m = C^m_{kl} γ^k η^l`. The algebroid acts on kernel-valued
//! functions by `(X ⊕ γ)·η = X(η) + [γ, η]`. Constant sections `∂_μ` and `e_k`
//! form a frame with `[e_k, e_l] = C^m_{kl} e_m` and all other brackets zero.
//!
//! Forms are stored on keys `(B, F)`: strictly increasing base and fiber
//! index sets, with the value on `(∂_B, e_F)` in that order (base slots first).

use crate::error::{Error, Result};
use crate::latticeymh::{GaugeFieldA, LatticeSpec, ScalarMultipletB};
use crate::liealg::LieData;
use crate::linalg::{self, RMat};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Kernel-valued lattice field, `field[site·dim + m]`.
pub type KernelField = Vec<f64>;

/// Central difference of a field with `comps` components per site.
fn diff(lat: &LatticeSpec, f: &[f64], comps: usize, mu: usize) -> Vec<f64> {
    let inv = 1.0 / (2.0 * lat.h);
    let mut out = vec![0.0; f.len()];
    for s in 0..lat.sites() {
        let p = lat.neighbour(s, mu, true) * comps;
        let m = lat.neighbour(s, mu, false) * comps;
        for c in 0..comps {
            out[s * comps + c] = (f[p + c] - f[m + c]) * inv;
        }
    }
    out
}

fn same_lie(a: &LieData, b: &LieData) -> bool {
    a.same_algebra(b)
}

#[derive(Debug, Clone)]
pub struct TLAElement {
    pub lattice: LatticeSpec,
    pub lie: Arc<LieData>,
    /// `x[site·d + μ]`.
    pub x: Vec<f64>,
    pub gamma: KernelField,
}

impl TLAElement {
    pub fn new(lattice: &LatticeSpec, lie: &Arc<LieData>, x: Vec<f64>, gamma: KernelField) -> Result<Self> {
        let sites = lattice.sites();
        if x.len() != sites * lattice.d {
            return Err(Error::Dimension { expected: sites * lattice.d, got: x.len() });
        }
        if gamma.len() != sites * lie.dim() {
            return Err(Error::Dimension { expected: sites * lie.dim(), got: gamma.len() });
        }
        if x.iter().chain(&gamma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite algebroid element".into()));
        }
        Ok(TLAElement { lattice: lattice.clone(), lie: lie.clone(), x, gamma })
    }

    /// `0 ⊕ γ`.
    pub fn fiber(lattice: &LatticeSpec, lie: &Arc<LieData>, gamma: KernelField) -> Result<Self> {
        Self::new(lattice, lie, vec![0.0; lattice.sites() * lattice.d], gamma)
    }

    /// The same `0 ⊕ γ` at every site.
    pub fn constant_fiber(lattice: &LatticeSpec, lie: &Arc<LieData>, gamma: &[f64]) -> Result<Self> {
        let field = (0..lattice.sites()).flat_map(|_| gamma.iter().copied()).collect();
        Self::fiber(lattice, lie, field)
    }

    pub fn is_fiber(&self) -> bool {
        self.x.iter().all(|&v| v == 0.0)
    }

    /// The anchor `ρ(X ⊕ γ) = X`.
    pub fn anchor(&self) -> &[f64] {
        &self.x
    }

    pub fn gamma_at(&self, site: usize) -> &[f64] {
        let dim = self.lie.dim();
        &self.gamma[site * dim..(site + 1) * dim]
    }

    /// `f·(X ⊕ γ)` for a scalar lattice function `f`.
    pub fn scaled_by(&self, f: &[f64]) -> TLAElement {
        let (d, dim) = (self.lattice.d, self.lie.dim());
        let mut out = self.clone();
        for (s, &fs) in f.iter().enumerate() {
            out.x[s * d..(s + 1) * d].iter_mut().for_each(|v| *v *= fs);
            out.gamma[s * dim..(s + 1) * dim].iter_mut().for_each(|v| *v *= fs);
        }
        out
    }
}

/// `X(f)` for a field with `comps` components: `X^μ ∂_μ f`.
fn directional(lat: &LatticeSpec, x: &[f64], f: &[f64], comps: usize) -> Vec<f64> {
    let d = lat.d;
    let mut out = vec![0.0; f.len()];
    for mu in 0..d {
        let df = diff(lat, f, comps, mu);
        for s in 0..lat.sites() {
            let xm = x[s * d + mu];
            if xm != 0.0 {
                for c in 0..comps {
                    out[s * comps + c] += xm * df[s * comps + c];
                }
            }
        }
    }
    out
}

/// `[X ⊕ γ, Y ⊕ η] = [X, Y] ⊕ (X·η − Y·γ + [γ, η])`.
pub fn bracket(u: &TLAElement, v: &TLAElement) -> Result<TLAElement> {
    if u.lattice != v.lattice || !same_lie(&u.lie, &v.lie) {
        return Err(Error::IncompatibleFields);
    }
    let lat = &u.lattice;
    let (d, dim) = (lat.d, u.lie.dim());
    let xy = directional(lat, &u.x, &v.x, d);
    let yx = directional(lat, &v.x, &u.x, d);
    let x: Vec<f64> = xy.iter().zip(&yx).map(|(a, b)| a - b).collect();
    let xeta = directional(lat, &u.x, &v.gamma, dim);
    let ygamma = directional(lat, &v.x, &u.gamma, dim);
    let mut gamma = vec![0.0; lat.sites() * dim];
    for s in 0..lat.sites() {
        let br = u.lie.bracket(u.gamma_at(s), v.gamma_at(s));
        for m in 0..dim {
            let i = s * dim + m;
            gamma[i] = xeta[i] - ygamma[i] + br[m];
        }
    }
    Ok(TLAElement { lattice: lat.clone(), lie: u.lie.clone(), x, gamma })
}

/// Key of a form coefficient: increasing base and fiber index sets.
pub type FormKey = (Vec<usize>, Vec<usize>);

#[derive(Debug, Clone)]
pub struct AlgebroidForm {
    pub lattice: LatticeSpec,
    pub lie: Arc<LieData>,
    degree: usize,
    coeffs: BTreeMap<FormKey, KernelField>,
}

/// A frame argument: `∂_μ` or `e_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Base(usize),
    Fiber(usize),
}

impl AlgebroidForm {
    pub fn zero(lattice: &LatticeSpec, lie: &Arc<LieData>, degree: usize) -> Self {
        AlgebroidForm { lattice: lattice.clone(), lie: lie.clone(), degree, coeffs: BTreeMap::new() }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn field_len(&self) -> usize {
        self.lattice.sites() * self.lie.dim()
    }

    /// Adds `field` to the coefficient on `(∂_base, e_fiber)`; indices may be unsorted.
    pub fn add_component(&mut self, base: &[usize], fiber: &[usize], field: &[f64]) -> Result<()> {
        if base.len() + fiber.len() != self.degree {
            return Err(Error::InvalidArgument(format!(
                "key of size {} in a {}-form",
                base.len() + fiber.len(),
                self.degree
            )));
        }
        if base.iter().any(|&m| m >= self.lattice.d) || fiber.iter().any(|&k| k >= self.lie.dim()) {
            return Err(Error::InvalidArgument("form index out of range".into()));
        }
        if field.len() != self.field_len() {
            return Err(Error::Dimension { expected: self.field_len(), got: field.len() });
        }
        let (Some((b, sb)), Some((f, sf))) = (linalg::sort_with_sign(base), linalg::sort_with_sign(fiber)) else {
            return Ok(());
        };
        let sign = sb * sf;
        let len = self.field_len();
        let entry = self.coeffs.entry((b, f)).or_insert_with(|| vec![0.0; len]);
        for (e, v) in entry.iter_mut().zip(field) {
            *e += sign * v;
        }
        Ok(())
    }

    pub fn set_component(&mut self, base: &[usize], fiber: &[usize], field: KernelField) -> Result<()> {
        if let (Some((b, _)), Some((f, _))) = (linalg::sort_with_sign(base), linalg::sort_with_sign(fiber)) {
            self.coeffs.remove(&(b, f));
        }
        self.add_component(base, fiber, &field)
    }

    pub fn get(&self, base: &[usize], fiber: &[usize]) -> Option<&KernelField> {
        self.coeffs.get(&(base.to_vec(), fiber.to_vec()))
    }

    /// Value on `(∂_base, e_fiber)` in the given order; zero when absent.
    pub fn component(&self, base: &[usize], fiber: &[usize]) -> KernelField {
        let zero = || vec![0.0; self.field_len()];
        let (Some((b, sb)), Some((f, sf))) = (linalg::sort_with_sign(base), linalg::sort_with_sign(fiber)) else {
            return zero();
        };
        match self.coeffs.get(&(b, f)) {
            Some(v) => v.iter().map(|x| x * sb * sf).collect(),
            None => zero(),
        }
    }

    /// Value on an arbitrary ordered list of frame arguments.
    pub fn value(&self, args: &[Slot]) -> KernelField {
        if args.len() != self.degree {
            return vec![0.0; self.field_len()];
        }
        // moving every base slot in front of the fiber slots
        let mut sign = 1.0;
        let mut fibers_seen = 0;
        let mut base = Vec::new();
        let mut fiber = Vec::new();
        for a in args {
            match *a {
                Slot::Base(m) => {
                    if fibers_seen % 2 == 1 {
                        sign = -sign;
                    }
                    base.push(m);
                }
                Slot::Fiber(k) => {
                    fibers_seen += 1;
                    fiber.push(k);
                }
            }
        }
        self.component(&base, &fiber).into_iter().map(|v| v * sign).collect()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FormKey, &KernelField)> {
        self.coeffs.iter()
    }

    /// Part of base degree `r`.
    pub fn bidegree_part(&self, r: usize) -> AlgebroidForm {
        let coeffs = self.coeffs.iter().filter(|(k, _)| k.0.len() == r).map(|(k, v)| (k.clone(), v.clone())).collect();
        AlgebroidForm { coeffs, ..AlgebroidForm::zero(&self.lattice, &self.lie, self.degree) }
    }

    fn check_same(&self, other: &AlgebroidForm) -> Result<()> {
        if self.lattice != other.lattice || !same_lie(&self.lie, &other.lie) {
            return Err(Error::IncompatibleFields);
        }
        if self.degree != other.degree {
            return Err(Error::InvalidArgument(format!("degree {} vs {}", self.degree, other.degree)));
        }
        Ok(())
    }

    pub fn add(&self, other: &AlgebroidForm) -> Result<AlgebroidForm> {
        self.check_same(other)?;
        let mut out = self.clone();
        for ((b, f), v) in &other.coeffs {
            out.add_component(b, f, v)?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &AlgebroidForm) -> Result<AlgebroidForm> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> AlgebroidForm {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= s));
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entry over sites at least `margin` away from every periodic seam.
    pub fn interior_max_abs(&self, margin: usize) -> f64 {
        let dim = self.lie.dim();
        let lat = &self.lattice;
        let mut m: f64 = 0.0;
        for s in 0..lat.sites() {
            let inside = lat.coords(s).iter().zip(&lat.extents).all(|(&x, &n)| x >= margin && x + margin < n);
            if inside {
                for v in self.coeffs.values() {
                    m = v[s * dim..(s + 1) * dim].iter().fold(m, |a, x| a.max(x.abs()));
                }
            }
        }
        m
    }

    pub fn random<R: rand::Rng + ?Sized>(lattice: &LatticeSpec, lie: &Arc<LieData>, degree: usize, rng: &mut R) -> Self {
        let mut out = AlgebroidForm::zero(lattice, lie, degree);
        let len = out.field_len();
        for r in 0..=degree.min(lattice.d) {
            if degree - r > lie.dim() {
                continue;
            }
            for b in linalg::combinations(lattice.d, r) {
                for f in linalg::combinations(lie.dim(), degree - r) {
                    let field: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
                    out.coeffs.insert((b.clone(), f), field);
                }
            }
        }
        out
    }
}

/// `[α, β]` with the kernel bracket as product: `Σ_shuffles ± [α(…), β(…)]`.
pub fn graded_bracket(alpha: &AlgebroidForm, beta: &AlgebroidForm) -> Result<AlgebroidForm> {
    if alpha.lattice != beta.lattice || !same_lie(&alpha.lie, &beta.lie) {
        return Err(Error::IncompatibleFields);
    }
    let lie = &alpha.lie;
    let dim = lie.dim();
    let mut out = AlgebroidForm::zero(&alpha.lattice, lie, alpha.degree + beta.degree);
    for ((b1, f1), v1) in &alpha.coeffs {
        for ((b2, f2), v2) in &beta.coeffs {
            let base: Vec<usize> = b1.iter().chain(b2).copied().collect();
            let fiber: Vec<usize> = f1.iter().chain(f2).copied().collect();
            let (Some(_), Some(_)) = (linalg::sort_with_sign(&base), linalg::sort_with_sign(&fiber)) else {
                continue;
            };
            let swap = if (f1.len() * b2.len()) % 2 == 1 { -1.0 } else { 1.0 };
            let mut field = vec![0.0; v1.len()];
            for s in 0..alpha.lattice.sites() {
                let br = lie.bracket(&v1[s * dim..(s + 1) * dim], &v2[s * dim..(s + 1) * dim]);
                for m in 0..dim {
                    field[s * dim + m] = swap * br[m];
                }
            }
            out.add_component(&base, &fiber, &field)?;
        }
    }
    Ok(out)
}

/// `(ad_{e_k} f)^m = C^m_{kl} f^l` at every site.
fn ad_basis(lie: &LieData, k: usize, f: &[f64]) -> Vec<f64> {
    let dim = lie.dim();
    let mut out = vec![0.0; f.len()];
    for s in 0..f.len() / dim {
        for m in 0..dim {
            let mut acc = 0.0;
            for l in 0..dim {
                acc += lie.c(m, k, l) * f[s * dim + l];
            }
            out[s * dim + m] = acc;
        }
    }
    out
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

/// De Rham part `d` on base indices.
pub fn base_differential(f: &AlgebroidForm) -> AlgebroidForm {
    let lat = &f.lattice;
    let dim = f.lie.dim();
    let mut out = AlgebroidForm::zero(lat, &f.lie, f.degree + 1);
    let mut fibers: Vec<&Vec<usize>> = f.coeffs.keys().map(|k| &k.1).collect();
    fibers.dedup();
    let fibers: std::collections::BTreeSet<Vec<usize>> = fibers.into_iter().cloned().collect();
    for fib in fibers {
        let r = f.degree - fib.len();
        if r + 1 > lat.d {
            continue;
        }
        for bp in linalg::combinations(lat.d, r + 1) {
            let mut acc = vec![0.0; f.field_len()];
            let mut any = false;
            for i in 0..bp.len() {
                let rest: Vec<usize> = bp.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &m)| m).collect();
                if let Some(v) = f.get(&rest, &fib) {
                    let dv = diff(lat, v, dim, bp[i]);
                    axpy(&mut acc, if i % 2 == 0 { 1.0 } else { -1.0 }, &dv);
                    any = true;
                }
            }
            if any {
                out.add_component(&bp, &fib, &acc).expect("valid key");
            }
        }
    }
    out
}

/// Chevalley-Eilenberg part `s′` (adjoint representation) on fiber indices, without the `(−1)^r` sign.
pub fn fiber_differential(f: &AlgebroidForm) -> AlgebroidForm {
    let lie = &f.lie;
    let dim = lie.dim();
    let mut out = AlgebroidForm::zero(&f.lattice, lie, f.degree + 1);
    let bases: std::collections::BTreeSet<Vec<usize>> = f.coeffs.keys().map(|k| k.0.clone()).collect();
    for base in bases {
        let s = f.degree - base.len();
        if s + 1 > dim {
            continue;
        }
        for fp in linalg::combinations(dim, s + 1) {
            let mut acc = vec![0.0; f.field_len()];
            for j in 0..fp.len() {
                let rest: Vec<usize> = fp.iter().enumerate().filter(|&(t, _)| t != j).map(|(_, &k)| k).collect();
                if let Some(v) = f.get(&base, &rest) {
                    axpy(&mut acc, if j % 2 == 0 { 1.0 } else { -1.0 }, &ad_basis(lie, fp[j], v));
                }
            }
            for i in 0..fp.len() {
                for j in i + 1..fp.len() {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    let rest: Vec<usize> =
                        fp.iter().enumerate().filter(|&(t, _)| t != i && t != j).map(|(_, &k)| k).collect();
                    for m in 0..dim {
                        let cm = lie.c(m, fp[i], fp[j]);
                        if cm == 0.0 {
                            continue;
                        }
                        let mut args = vec![m];
                        args.extend(&rest);
                        let v = f.component(&base, &args);
                        axpy(&mut acc, sign * cm, &v);
                    }
                }
            }
            if acc.iter().any(|&v| v != 0.0) {
                out.add_component(&base, &fp, &acc).expect("valid key");
            }
        }
    }
    out
}

/// `d̂ = d + (−1)^r s′` on each bidegree `(r, s)`.
pub fn differential(f: &AlgebroidForm) -> AlgebroidForm {
    let mut out = base_differential(f);
    for r in 0..=f.degree {
        let part = f.bidegree_part(r);
        if part.coeffs.is_empty() {
            continue;
        }
        let sp = fiber_differential(&part);
        let sp = if r % 2 == 1 { sp.scale(-1.0) } else { sp };
        out = out.add(&sp).expect("same lattice and degree");
    }
    out
}

/// `i_ξ` on a kernel field `ξ`, contracting the first slot.
pub fn interior(xi: &[f64], f: &AlgebroidForm) -> Result<AlgebroidForm> {
    let dim = f.lie.dim();
    if xi.len() != f.field_len() {
        return Err(Error::Dimension { expected: f.field_len(), got: xi.len() });
    }
    if f.degree == 0 {
        return Ok(AlgebroidForm::zero(&f.lattice, &f.lie, 0));
    }
    let mut out = AlgebroidForm::zero(&f.lattice, &f.lie, f.degree - 1);
    for ((b, fib), v) in &f.coeffs {
        let r_sign = if b.len() % 2 == 1 { -1.0 } else { 1.0 };
        for (t, &k) in fib.iter().enumerate() {
            let sign = r_sign * if t % 2 == 1 { -1.0 } else { 1.0 };
            let rest: Vec<usize> = fib.iter().enumerate().filter(|&(j, _)| j != t).map(|(_, &x)| x).collect();
            let mut field = v.clone();
            for s in 0..f.lattice.sites() {
                let w = sign * xi[s * dim + k];
                field[s * dim..(s + 1) * dim].iter_mut().for_each(|x| *x *= w);
            }
            out.add_component(b, &rest, &field)?;
        }
    }
    Ok(out)
}

/// `(i_ξ f, L_ξ f)` with `L_ξ = d̂ i_ξ + i_ξ d̂`.
pub fn cartan_operation(xi: &TLAElement, f: &AlgebroidForm) -> Result<(AlgebroidForm, AlgebroidForm)> {
    if !xi.is_fiber() {
        return Err(Error::Unsupported("Cartan operation needs a fiber-only element".into()));
    }
    if xi.lattice != f.lattice || !same_lie(&xi.lie, &f.lie) {
        return Err(Error::IncompatibleFields);
    }
    let i = interior(&xi.gamma, f)?;
    let di = differential(&i);
    let id = interior(&xi.gamma, &differential(f))?;
    let lie_derivative = if f.degree == 0 { id } else { di.add(&id)? };
    Ok((i, lie_derivative))
}

/// `ω̂ = ω + φ`: geometric part `ω_μ` and algebraic part `φ(e_k) = φ^m_k e_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedConnection {
    pub lattice: LatticeSpec,
    pub lie: Arc<LieData>,
    /// `omega[(site·d + μ)·dim + m]`.
    pub omega: Vec<f64>,
    /// `phi[(site·dim + k)·dim + m] = φ^m_k`.
    pub phi: Vec<f64>,
}

impl GeneralizedConnection {
    pub fn new(lattice: &LatticeSpec, lie: &Arc<LieData>, omega: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let (sites, d, dim) = (lattice.sites(), lattice.d, lie.dim());
        if omega.len() != sites * d * dim {
            return Err(Error::Dimension { expected: sites * d * dim, got: omega.len() });
        }
        if phi.len() != sites * dim * dim {
            return Err(Error::Dimension { expected: sites * dim * dim, got: phi.len() });
        }
        if omega.iter().chain(&phi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite connection".into()));
        }
        Ok(GeneralizedConnection { lattice: lattice.clone(), lie: lie.clone(), omega, phi })
    }

    fn minus_identity(sites: usize, dim: usize) -> Vec<f64> {
        let mut phi = vec![0.0; sites * dim * dim];
        for s in 0..sites {
            for k in 0..dim {
                phi[(s * dim + k) * dim + k] = -1.0;
            }
        }
        phi
    }

    /// Ordinary connection: `φ = −Id`.
    pub fn ordinary(lattice: &LatticeSpec, lie: &Arc<LieData>, omega: Vec<f64>) -> Result<Self> {
        let phi = Self::minus_identity(lattice.sites(), lie.dim());
        Self::new(lattice, lie, omega, phi)
    }

    /// `ω = 0`, `φ = −Id`.
    pub fn trivial(lattice: &LatticeSpec, lie: &Arc<LieData>) -> Self {
        let omega = vec![0.0; lattice.sites() * lattice.d * lie.dim()];
        Self::ordinary(lattice, lie, omega).expect("sizes match")
    }

    pub fn with_constant_phi(mut self, phi: &RMat) -> Self {
        let dim = self.lie.dim();
        for s in 0..self.lattice.sites() {
            for k in 0..dim {
                for m in 0..dim {
                    self.phi[(s * dim + k) * dim + m] = phi[(m, k)];
                }
            }
        }
        self
    }

    pub fn random<R: rand::Rng + ?Sized>(lattice: &LatticeSpec, lie: &Arc<LieData>, scale: f64, rng: &mut R) -> Self {
        let (sites, d, dim) = (lattice.sites(), lattice.d, lie.dim());
        let omega = (0..sites * d * dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let phi = (0..sites * dim * dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        GeneralizedConnection { lattice: lattice.clone(), lie: lie.clone(), omega, phi }
    }

    pub fn omega_at(&self, site: usize, mu: usize) -> &[f64] {
        let dim = self.lie.dim();
        let i = (site * self.lattice.d + mu) * dim;
        &self.omega[i..i + dim]
    }

    pub fn phi_at(&self, site: usize, k: usize) -> &[f64] {
        let dim = self.lie.dim();
        let i = (site * dim + k) * dim;
        &self.phi[i..i + dim]
    }

    pub fn is_ordinary(&self) -> bool {
        let dim = self.lie.dim();
        self.phi.iter().enumerate().all(|(i, &v)| {
            let (k, m) = ((i / dim) % dim, i % dim);
            v == if k == m { -1.0 } else { 0.0 }
        })
    }

    /// The degree-1 form with `(μ) ↦ ω_μ` and `(k) ↦ φ(e_k)`.
    pub fn as_form(&self) -> AlgebroidForm {
        let (sites, d, dim) = (self.lattice.sites(), self.lattice.d, self.lie.dim());
        let mut f = AlgebroidForm::zero(&self.lattice, &self.lie, 1);
        for mu in 0..d {
            let field: Vec<f64> = (0..sites).flat_map(|s| self.omega_at(s, mu).to_vec()).collect();
            f.coeffs.insert((vec![mu], vec![]), field);
        }
        for k in 0..dim {
            let field: Vec<f64> = (0..sites).flat_map(|s| self.phi_at(s, k).to_vec()).collect();
            f.coeffs.insert((vec![], vec![k]), field);
        }
        f
    }
}

/// `R̂ = d̂ω̂ + ½[ω̂, ω̂]`.
pub fn curvature_generalized(w: &GeneralizedConnection) -> AlgebroidForm {
    let f = w.as_form();
    let half = graded_bracket(&f, &f).expect("same form").scale(0.5);
    differential(&f).add(&half).expect("degree 2")
}

#[derive(Debug, Clone)]
pub struct MetricTriple {
    /// Metric on fiber form indices; raised with its inverse.
    pub fiber_h: RMat,
    /// Inner product on kernel values.
    pub value_metric: RMat,
    /// Weight of the `R_τ` term.
    pub potential_weight: f64,
    pub background: GeneralizedConnection,
    fiber_h_inv: RMat,
}

fn check_positive(m: &RMat, what: &str) -> Result<()> {
    if (m - m.transpose()).abs().max() > 1e-12 {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let min = linalg::symmetric_eigenvalues(m).first().copied().unwrap_or(1.0);
    if !(min > 0.0) {
        return Err(Error::InvalidArgument(format!("{what} is not positive-definite (min eigenvalue {min:e})")));
    }
    Ok(())
}

impl MetricTriple {
    pub fn new(fiber_h: RMat, value_metric: RMat, potential_weight: f64, background: GeneralizedConnection) -> Result<Self> {
        let dim = background.lie.dim();
        if fiber_h.nrows() != dim || value_metric.nrows() != dim {
            return Err(Error::Dimension { expected: dim, got: fiber_h.nrows() });
        }
        check_positive(&fiber_h, "fiber_h")?;
        check_positive(&value_metric, "value metric")?;
        if !(potential_weight >= 0.0) {
            return Err(Error::InvalidArgument("potential weight must be non-negative".into()));
        }
        if !background.is_ordinary() {
            return Err(Error::PreconditionViolation("background must have φ = −Id".into()));
        }
        let fiber_h_inv = fiber_h.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("fiber_h singular".into()))?;
        Ok(MetricTriple { fiber_h, value_metric, potential_weight, background, fiber_h_inv })
    }

    /// Killing-trace values `⟨iE_k, iE_l⟩ = tr(E_kE_l)`, unit fiber metric, trivial background.
    pub fn standard(lattice: &LatticeSpec, lie: &Arc<LieData>) -> Self {
        let dim = lie.dim();
        Self::new(RMat::identity(dim, dim), lie.trace_form.clone(), 1.0, GeneralizedConnection::trivial(lattice, lie))
            .expect("standard metric is valid")
    }

    /// The calibration under which `action_generalized` reproduces `ymh_action` with mass `μ`.
    pub fn ymh_calibrated(lattice: &LatticeSpec, lie: &Arc<LieData>, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument("calibration needs μ > 0".into()));
        }
        let dim = lie.dim();
        let n = lie.n as f64;
        Self::new(
            RMat::identity(dim, dim) * (4.0 * n / (mu * mu)),
            &lie.trace_form / (2.0 * n),
            4.0 * n,
            GeneralizedConnection::trivial(lattice, lie),
        )
    }

    pub fn with_background(mut self, background: GeneralizedConnection) -> Result<Self> {
        if !background.is_ordinary() {
            return Err(Error::PreconditionViolation("background must have φ = −Id".into()));
        }
        self.background = background;
        Ok(self)
    }

    pub fn fiber_h_inverse(&self) -> &RMat {
        &self.fiber_h_inv
    }
}

/// The pieces `τ, R_τ, ω_ord, Dτ, F̂` per site.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub d: usize,
    pub dim: usize,
    /// `tau[(site·dim + k)·dim + m] = τ^m_k`.
    pub tau: Vec<f64>,
    /// `r_tau[((site·dim + k)·dim + l)·dim + m] = R_τ(e_k, e_l)^m`.
    pub r_tau: Vec<f64>,
    pub omega_ord: GeneralizedConnection,
    /// `d_tau[((site·d + μ)·dim + k)·dim + m] = (D_μτ)(e_k)^m`.
    pub d_tau: Vec<f64>,
    /// `f_hat[((site·d + μ)·d + ν)·dim + m]`.
    pub f_hat: Vec<f64>,
}

impl Decomposition {
    pub fn tau_k(&self, s: usize, k: usize) -> &[f64] {
        let i = (s * self.dim + k) * self.dim;
        &self.tau[i..i + self.dim]
    }

    pub fn r_tau_kl(&self, s: usize, k: usize, l: usize) -> &[f64] {
        let i = ((s * self.dim + k) * self.dim + l) * self.dim;
        &self.r_tau[i..i + self.dim]
    }

    pub fn d_tau_mk(&self, s: usize, mu: usize, k: usize) -> &[f64] {
        let i = ((s * self.d + mu) * self.dim + k) * self.dim;
        &self.d_tau[i..i + self.dim]
    }

    pub fn f_hat_mn(&self, s: usize, mu: usize, nu: usize) -> &[f64] {
        let i = ((s * self.d + mu) * self.d + nu) * self.dim;
        &self.f_hat[i..i + self.dim]
    }

    /// `τ(γ)` at a site.
    pub fn apply_tau(&self, s: usize, gamma: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &g) in gamma.iter().enumerate() {
            if g != 0.0 {
                axpy(&mut out, g, self.tau_k(s, k));
            }
        }
        out
    }

    /// `(D_μτ)(γ)` at a site.
    pub fn d_tau_apply(&self, s: usize, mu: usize, gamma: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &g) in gamma.iter().enumerate() {
            if g != 0.0 {
                axpy(&mut out, g, self.d_tau_mk(s, mu, k));
            }
        }
        out
    }

    /// `R_τ(γ, η)` at a site.
    pub fn r_tau_apply(&self, s: usize, gamma: &[f64], eta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &g) in gamma.iter().enumerate() {
            for (l, &e) in eta.iter().enumerate() {
                if g != 0.0 && e != 0.0 {
                    axpy(&mut out, g * e, self.r_tau_kl(s, k, l));
                }
            }
        }
        out
    }
}

/// Ordinary curvature `∂_μω_ν − ∂_νω_μ + [ω_μ, ω_ν]` of the geometric part.
fn ordinary_curvature(w: &GeneralizedConnection) -> Vec<f64> {
    let lat = &w.lattice;
    let (sites, d, dim) = (lat.sites(), lat.d, w.lie.dim());
    let comps = d * dim;
    let dom: Vec<Vec<f64>> = (0..d).map(|mu| diff(lat, &w.omega, comps, mu)).collect();
    let mut out = vec![0.0; sites * d * d * dim];
    for s in 0..sites {
        for mu in 0..d {
            for nu in 0..d {
                if mu == nu {
                    continue;
                }
                let br = w.lie.bracket(w.omega_at(s, mu), w.omega_at(s, nu));
                for m in 0..dim {
                    out[((s * d + mu) * d + nu) * dim + m] =
                        dom[mu][s * comps + nu * dim + m] - dom[nu][s * comps + mu * dim + m] + br[m];
                }
            }
        }
    }
    out
}

pub fn decompose(w: &GeneralizedConnection, m: &MetricTriple) -> Result<Decomposition> {
    let bg = &m.background;
    if w.lattice != bg.lattice || !same_lie(&w.lie, &bg.lie) {
        return Err(Error::IncompatibleFields);
    }
    let lat = &w.lattice;
    let lie = &w.lie;
    let (sites, d, dim) = (lat.sites(), lat.d, lie.dim());

    let mut tau = w.phi.clone();
    for s in 0..sites {
        for k in 0..dim {
            tau[(s * dim + k) * dim + k] += 1.0;
        }
    }
    let mut dec = Decomposition {
        d,
        dim,
        tau,
        r_tau: vec![0.0; sites * dim * dim * dim],
        omega_ord: w.clone(),
        d_tau: vec![0.0; sites * d * dim * dim],
        f_hat: vec![0.0; sites * d * d * dim],
    };

    for s in 0..sites {
        for k in 0..dim {
            for l in 0..dim {
                let mut r = lie.bracket(dec.tau_k(s, k), dec.tau_k(s, l));
                for mm in 0..dim {
                    let cm = lie.c(mm, k, l);
                    if cm != 0.0 {
                        axpy(&mut r, -cm, dec.tau_k(s, mm));
                    }
                }
                let i = ((s * dim + k) * dim + l) * dim;
                dec.r_tau[i..i + dim].copy_from_slice(&r);
            }
        }
    }

    // ω_ord = ω̂ + τ∘ω̇, an ordinary connection
    let mut ord_omega = w.omega.clone();
    for s in 0..sites {
        for mu in 0..d {
            let t = dec.apply_tau(s, bg.omega_at(s, mu));
            let i = (s * d + mu) * dim;
            axpy(&mut ord_omega[i..i + dim], 1.0, &t);
        }
    }
    dec.omega_ord = GeneralizedConnection::ordinary(lat, lie, ord_omega)?;

    let r_ord = ordinary_curvature(&dec.omega_ord);
    let r_bg = ordinary_curvature(bg);
    for s in 0..sites {
        for mu in 0..d {
            for nu in 0..d {
                let i = ((s * d + mu) * d + nu) * dim;
                let t = dec.apply_tau(s, &r_bg[i..i + dim]);
                for mm in 0..dim {
                    dec.f_hat[i + mm] = r_ord[i + mm] - t[mm];
                }
            }
        }
    }

    let dtau: Vec<Vec<f64>> = (0..d).map(|mu| diff(lat, &dec.tau, dim * dim, mu)).collect();
    for s in 0..sites {
        for mu in 0..d {
            let wo = dec.omega_ord.omega_at(s, mu).to_vec();
            let wb = bg.omega_at(s, mu);
            for k in 0..dim {
                let base = (s * dim + k) * dim;
                let mut v = dtau[mu][base..base + dim].to_vec();
                axpy(&mut v, 1.0, &lie.bracket(&wo, dec.tau_k(s, k)));
                let mut ek = vec![0.0; dim];
                ek[k] = 1.0;
                let t = dec.apply_tau(s, &lie.bracket(wb, &ek));
                axpy(&mut v, -1.0, &t);
                let i = ((s * d + mu) * dim + k) * dim;
                dec.d_tau[i..i + dim].copy_from_slice(&v);
            }
        }
    }
    Ok(dec)
}

/// `ρ*F̂ − (ρ*Dτ)∘ω̇ + ω̇*R_τ` as a 2-form.
pub fn reassemble(dec: &Decomposition, background: &GeneralizedConnection) -> AlgebroidForm {
    let lat = &background.lattice;
    let (sites, d, dim) = (lat.sites(), dec.d, dec.dim);
    let mut out = AlgebroidForm::zero(lat, &background.lie, 2);
    for mu in 0..d {
        for nu in mu + 1..d {
            let mut field = vec![0.0; sites * dim];
            for s in 0..sites {
                let (wm, wn) = (background.omega_at(s, mu), background.omega_at(s, nu));
                let v = &mut field[s * dim..(s + 1) * dim];
                axpy(v, 1.0, dec.f_hat_mn(s, mu, nu));
                axpy(v, -1.0, &dec.d_tau_apply(s, mu, wn));
                axpy(v, 1.0, &dec.d_tau_apply(s, nu, wm));
                axpy(v, 1.0, &dec.r_tau_apply(s, wm, wn));
            }
            out.add_component(&[mu, nu], &[], &field).expect("valid key");
        }
    }
    for mu in 0..d {
        for k in 0..dim {
            let mut ek = vec![0.0; dim];
            ek[k] = 1.0;
            let mut field = vec![0.0; sites * dim];
            for s in 0..sites {
                let v = &mut field[s * dim..(s + 1) * dim];
                axpy(v, 1.0, dec.d_tau_mk(s, mu, k));
                axpy(v, -1.0, &dec.r_tau_apply(s, background.omega_at(s, mu), &ek));
            }
            out.add_component(&[mu], &[k], &field).expect("valid key");
        }
    }
    for k in 0..dim {
        for l in k + 1..dim {
            let field: Vec<f64> = (0..sites).flat_map(|s| dec.r_tau_kl(s, k, l).to_vec()).collect();
            out.add_component(&[], &[k, l], &field).expect("valid key");
        }
    }
    out
}

/// Per-term action contributions, each already multiplied by `h^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedActionTerms {
    pub curvature: f64,
    pub covariant: f64,
    pub potential: f64,
}

impl GeneralizedActionTerms {
    pub fn total(&self) -> f64 {
        self.curvature + self.covariant + self.potential
    }
}

fn metric_dot(g: &RMat, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..y.len() {
            acc += x[i] * g[(i, j)] * y[j];
        }
    }
    acc
}

pub fn action_terms(w: &GeneralizedConnection, m: &MetricTriple) -> Result<GeneralizedActionTerms> {
    let dec = decompose(w, m)?;
    let lat = &w.lattice;
    let (sites, d, dim) = (lat.sites(), lat.d, w.lie.dim());
    let v = &m.value_metric;
    let hi = m.fiber_h_inverse();
    let (mut geo, mut cov, mut pot) = (0.0, 0.0, 0.0);
    for s in 0..sites {
        for mu in 0..d {
            for nu in 0..d {
                if mu != nu {
                    let f = dec.f_hat_mn(s, mu, nu);
                    geo += 0.5 * metric_dot(v, f, f);
                }
            }
        }
        for mu in 0..d {
            for k in 0..dim {
                for kp in 0..dim {
                    let h = hi[(k, kp)];
                    if h != 0.0 {
                        cov += h * metric_dot(v, dec.d_tau_mk(s, mu, k), dec.d_tau_mk(s, mu, kp));
                    }
                }
            }
        }
        if m.potential_weight != 0.0 {
            // raise both fiber indices once, then contract
            let mut raised = vec![0.0; dim * dim * dim];
            for k in 0..dim {
                for l in 0..dim {
                    let r = dec.r_tau_kl(s, k, l);
                    for kp in 0..dim {
                        for lp in 0..dim {
                            let h = hi[(kp, k)] * hi[(lp, l)];
                            if h != 0.0 {
                                axpy(&mut raised[(kp * dim + lp) * dim..(kp * dim + lp + 1) * dim], h, r);
                            }
                        }
                    }
                }
            }
            let mut acc = 0.0;
            for k in 0..dim {
                for l in 0..dim {
                    acc += metric_dot(v, dec.r_tau_kl(s, k, l), &raised[(k * dim + l) * dim..(k * dim + l + 1) * dim]);
                }
            }
            pot += 0.5 * m.potential_weight * acc;
        }
    }
    let cell = lat.cell_volume();
    Ok(GeneralizedActionTerms { curvature: cell * geo, covariant: cell * cov, potential: cell * pot })
}

/// `S = h^d Σ_x [½‖F̂‖² + ‖Dτ‖² + λ·½‖R_τ‖²]` with fiber indices raised by `fiber_h⁻¹`.
pub fn action_generalized(w: &GeneralizedConnection, m: &MetricTriple) -> Result<f64> {
    Ok(action_terms(w, m)?.total())
}

/// Adds the pullback of `g` through `(a, b) ↦ [a, b]` to `ga` and `gb`.
fn bracket_adjoint(lie: &LieData, g: &[f64], a: &[f64], b: &[f64], ga: &mut [f64], gb: &mut [f64]) {
    let dim = lie.dim();
    for (m, &gm) in g.iter().enumerate() {
        if gm == 0.0 {
            continue;
        }
        for k in 0..dim {
            for l in 0..dim {
                let c = lie.c(m, k, l);
                if c != 0.0 {
                    ga[k] += gm * c * b[l];
                    gb[l] += gm * c * a[k];
                }
            }
        }
    }
}

/// Transpose of `diff`, accumulated into `out`.
fn diff_adjoint(lat: &LatticeSpec, g: &[f64], comps: usize, mu: usize, out: &mut [f64]) {
    let inv = 1.0 / (2.0 * lat.h);
    for s in 0..lat.sites() {
        let p = lat.neighbour(s, mu, true) * comps;
        let m = lat.neighbour(s, mu, false) * comps;
        for c in 0..comps {
            let v = g[s * comps + c] * inv;
            out[p + c] += v;
            out[m + c] -= v;
        }
    }
}

fn mat_vec(g: &RMat, x: &[f64], scale: f64) -> Vec<f64> {
    (0..x.len()).map(|i| scale * (0..x.len()).map(|j| g[(i, j)] * x[j]).sum::<f64>()).collect()
}

/// Exact gradient of `action_generalized` with respect to `(ω, φ)`, in their storage layouts.
pub fn action_gradient(w: &GeneralizedConnection, m: &MetricTriple) -> Result<(Vec<f64>, Vec<f64>)> {
    let dec = decompose(w, m)?;
    let lat = &w.lattice;
    let lie = &w.lie;
    let bg = &m.background;
    let (sites, d, dim) = (lat.sites(), lat.d, lie.dim());
    let cell = lat.cell_volume();
    let v = &m.value_metric;
    let hi = m.fiber_h_inverse();
    let r_bg = ordinary_curvature(bg);

    let mut g_tau = vec![0.0; sites * dim * dim];
    let mut g_big = vec![0.0; sites * d * dim];
    let mut g_dom = vec![vec![0.0; sites * d * dim]; d];
    let mut g_dtau = vec![vec![0.0; sites * dim * dim]; d];

    for s in 0..sites {
        let tau = |k: usize| dec.tau_k(s, k);
        let big = |mu: usize| dec.omega_ord.omega_at(s, mu);
        for mu in 0..d {
            for nu in 0..d {
                if mu == nu {
                    continue;
                }
                let gf = mat_vec(v, dec.f_hat_mn(s, mu, nu), cell);
                let rb = &r_bg[((s * d + mu) * d + nu) * dim..((s * d + mu) * d + nu + 1) * dim];
                for j in 0..dim {
                    if rb[j] != 0.0 {
                        axpy(&mut g_tau[(s * dim + j) * dim..(s * dim + j + 1) * dim], -rb[j], &gf);
                    }
                }
                for mm in 0..dim {
                    g_dom[mu][(s * d + nu) * dim + mm] += gf[mm];
                    g_dom[nu][(s * d + mu) * dim + mm] -= gf[mm];
                }
                let (mut ga, mut gb) = (vec![0.0; dim], vec![0.0; dim]);
                bracket_adjoint(lie, &gf, big(mu), big(nu), &mut ga, &mut gb);
                axpy(&mut g_big[(s * d + mu) * dim..(s * d + mu + 1) * dim], 1.0, &ga);
                axpy(&mut g_big[(s * d + nu) * dim..(s * d + nu + 1) * dim], 1.0, &gb);
            }
        }
        for mu in 0..d {
            let lowered: Vec<Vec<f64>> = (0..dim).map(|k| mat_vec(v, dec.d_tau_mk(s, mu, k), 2.0 * cell)).collect();
            for k in 0..dim {
                let mut gd = vec![0.0; dim];
                for kp in 0..dim {
                    let h = hi[(k, kp)];
                    if h != 0.0 {
                        axpy(&mut gd, h, &lowered[kp]);
                    }
                }
                let base = (s * dim + k) * dim;
                axpy(&mut g_dtau[mu][base..base + dim], 1.0, &gd);
                let (mut ga, mut gb) = (vec![0.0; dim], vec![0.0; dim]);
                bracket_adjoint(lie, &gd, big(mu), tau(k), &mut ga, &mut gb);
                axpy(&mut g_big[(s * d + mu) * dim..(s * d + mu + 1) * dim], 1.0, &ga);
                axpy(&mut g_tau[base..base + dim], 1.0, &gb);
                let mut ek = vec![0.0; dim];
                ek[k] = 1.0;
                let c = lie.bracket(bg.omega_at(s, mu), &ek);
                for j in 0..dim {
                    if c[j] != 0.0 {
                        axpy(&mut g_tau[(s * dim + j) * dim..(s * dim + j + 1) * dim], -c[j], &gd);
                    }
                }
            }
        }
        if m.potential_weight != 0.0 {
            let lowered: Vec<Vec<f64>> = (0..dim * dim)
                .map(|kl| mat_vec(v, dec.r_tau_kl(s, kl / dim, kl % dim), cell * m.potential_weight))
                .collect();
            for k in 0..dim {
                for l in 0..dim {
                    let mut gr = vec![0.0; dim];
                    for kp in 0..dim {
                        for lp in 0..dim {
                            let h = hi[(kp, k)] * hi[(lp, l)];
                            if h != 0.0 {
                                axpy(&mut gr, h, &lowered[kp * dim + lp]);
                            }
                        }
                    }
                    let (mut ga, mut gb) = (vec![0.0; dim], vec![0.0; dim]);
                    bracket_adjoint(lie, &gr, tau(k), tau(l), &mut ga, &mut gb);
                    axpy(&mut g_tau[(s * dim + k) * dim..(s * dim + k + 1) * dim], 1.0, &ga);
                    axpy(&mut g_tau[(s * dim + l) * dim..(s * dim + l + 1) * dim], 1.0, &gb);
                    for mm in 0..dim {
                        let c = lie.c(mm, k, l);
                        if c != 0.0 {
                            axpy(&mut g_tau[(s * dim + mm) * dim..(s * dim + mm + 1) * dim], -c, &gr);
                        }
                    }
                }
            }
        }
    }
    for mu in 0..d {
        diff_adjoint(lat, &g_dom[mu], d * dim, mu, &mut g_big);
        diff_adjoint(lat, &g_dtau[mu], dim * dim, mu, &mut g_tau);
    }
    // ω_ord = ω + τ∘ω̇
    for s in 0..sites {
        for mu in 0..d {
            let gb = g_big[(s * d + mu) * dim..(s * d + mu + 1) * dim].to_vec();
            let wb = bg.omega_at(s, mu);
            for j in 0..dim {
                if wb[j] != 0.0 {
                    axpy(&mut g_tau[(s * dim + j) * dim..(s * dim + j + 1) * dim], wb[j], &gb);
                }
            }
        }
    }
    Ok((g_big, g_tau))
}

/// `ω̂ ↦ ω̂ + ε(d̂ξ + [ω̂, ξ])`: `δω_μ = ∂_μξ + [ω_μ, ξ]`, `δφ(e_k) = [τ_k, ξ]`.
pub fn infinitesimal_gauge(w: &GeneralizedConnection, xi: &TLAElement, eps: f64) -> Result<GeneralizedConnection> {
    if !xi.is_fiber() {
        return Err(Error::Unsupported("gauge parameter must be fiber-only".into()));
    }
    if xi.lattice != w.lattice || !same_lie(&xi.lie, &w.lie) {
        return Err(Error::IncompatibleFields);
    }
    let lat = &w.lattice;
    let lie = &w.lie;
    let (sites, d, dim) = (lat.sites(), lat.d, lie.dim());
    let mut out = w.clone();
    for mu in 0..d {
        let dxi = diff(lat, &xi.gamma, dim, mu);
        for s in 0..sites {
            let br = lie.bracket(w.omega_at(s, mu), xi.gamma_at(s));
            let i = (s * d + mu) * dim;
            for m in 0..dim {
                out.omega[i + m] += eps * (dxi[s * dim + m] + br[m]);
            }
        }
    }
    for s in 0..sites {
        for k in 0..dim {
            let mut tau_k = w.phi_at(s, k).to_vec();
            tau_k[k] += 1.0;
            let br = lie.bracket(&tau_k, xi.gamma_at(s));
            let i = (s * dim + k) * dim;
            for m in 0..dim {
                out.phi[i + m] += eps * br[m];
            }
        }
    }
    Ok(out)
}

fn trace_residual(m: &linalg::CMat) -> f64 {
    m.trace().norm()
}

/// `ω^k_μ` from `a_μ = ω^k_μ iE_k` and `φ^m_k = b_k^m − δ^m_k` from `b_k = b_k^m iE_m`.
pub fn from_lattice_fields(a: &GaugeFieldA, b: &ScalarMultipletB, lie: &Arc<LieData>) -> Result<GeneralizedConnection> {
    if a.lattice != b.lattice || a.n != lie.n || b.n != lie.n {
        return Err(Error::IncompatibleFields);
    }
    let lat = &a.lattice;
    let (sites, d, dim) = (lat.sites(), lat.d, lie.dim());
    let worst = a.a.iter().chain(&b.b).flatten().map(trace_residual).fold(0.0, f64::max);
    if worst > 1e-12 {
        return Err(Error::NotRepresentable { residual: worst });
    }
    let mut omega = Vec::with_capacity(sites * d * dim);
    let mut phi = Vec::with_capacity(sites * dim * dim);
    for s in 0..sites {
        for mu in 0..d {
            omega.extend(lie.anti_hermitian_coords(&a.a[s][mu]));
        }
        for k in 0..dim {
            let mut c = lie.anti_hermitian_coords(&b.b[s][k]);
            c[k] -= 1.0;
            phi.extend(c);
        }
    }
    GeneralizedConnection::new(lat, lie, omega, phi)
}

/// Inverse of `from_lattice_fields`.
pub fn to_lattice_fields(w: &GeneralizedConnection) -> (GaugeFieldA, ScalarMultipletB) {
    let lat = &w.lattice;
    let lie = &w.lie;
    let (sites, d, dim) = (lat.sites(), lat.d, lie.dim());
    let a = (0..sites)
        .map(|s| (0..d).map(|mu| lie.from_anti_hermitian_coords(w.omega_at(s, mu))).collect())
        .collect();
    let b = (0..sites)
        .map(|s| {
            (0..dim)
                .map(|k| {
                    let mut tau = w.phi_at(s, k).to_vec();
                    tau[k] += 1.0;
                    lie.from_anti_hermitian_coords(&tau)
                })
                .collect()
        })
        .collect();
    (
        GaugeFieldA { lattice: lat.clone(), n: lie.n, a },
        ScalarMultipletB { lattice: lat.clone(), n: lie.n, b },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latticeymh::{self, YMHParams};
    use crate::liealg::su_basis;
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, extents: Vec<usize>) -> (LatticeSpec, Arc<LieData>) {
        (LatticeSpec::new(extents, 0.5).unwrap(), su_basis(n).unwrap().shared())
    }

    fn random_field<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Polynomial field `c0 + c·x` per component.
    fn linear_field<R: Rng>(lat: &LatticeSpec, comps: usize, rng: &mut R) -> Vec<f64> {
        let coef: Vec<Vec<f64>> = (0..comps).map(|_| random_field(lat.d + 1, rng)).collect();
        (0..lat.sites())
            .flat_map(|s| {
                let x = lat.position(s);
                coef.iter()
                    .map(|cc| cc[0] + x.iter().zip(&cc[1..]).map(|(a, b)| a * b).sum::<f64>())
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn interior_diff(lat: &LatticeSpec, a: &[f64], b: &[f64], comps: usize, margin: usize) -> f64 {
        let mut m: f64 = 0.0;
        for s in 0..lat.sites() {
            if lat.coords(s).iter().zip(&lat.extents).all(|(&x, &n)| x >= margin && x + margin < n) {
                m = m.max(max_diff(&a[s * comps..(s + 1) * comps], &b[s * comps..(s + 1) * comps]));
            }
        }
        m
    }

    #[test]
    fn fiber_bracket_is_pointwise() {
        let (lat, lie) = setup(3, vec![3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = lie.dim();
        let g = random_field(lat.sites() * dim, &mut rng);
        let h = random_field(lat.sites() * dim, &mut rng);
        let u = TLAElement::fiber(&lat, &lie, g.clone()).unwrap();
        let v = TLAElement::fiber(&lat, &lie, h.clone()).unwrap();
        let w = bracket(&u, &v).unwrap();
        assert!(w.is_fiber());
        for s in 0..lat.sites() {
            let expect = lie.bracket(&g[s * dim..(s + 1) * dim], &h[s * dim..(s + 1) * dim]);
            assert!(max_diff(w.gamma_at(s), &expect) < 1e-14);
        }
        let z = TLAElement::fiber(&lat, &lie, random_field(lat.sites() * dim, &mut rng)).unwrap();
        let jac = |a: &TLAElement, b: &TLAElement, c: &TLAElement| bracket(a, &bracket(b, c).unwrap()).unwrap().gamma;
        let (j1, j2, j3) = (jac(&u, &v, &z), jac(&v, &z, &u), jac(&z, &u, &v));
        let r = j1.iter().zip(&j2).zip(&j3).map(|((a, b), c)| (a + b + c).abs()).fold(0.0, f64::max);
        assert!(r < 1e-12);
    }

    #[test]
    fn constant_fields_drop_derivative_terms() {
        let (lat, lie) = setup(2, vec![4, 4]);
        let x: Vec<f64> = (0..lat.sites()).flat_map(|_| [0.3, -1.2]).collect();
        let u = TLAElement::new(&lat, &lie, x, vec![0.0; lat.sites() * 3]).unwrap();
        let v = TLAElement::constant_fiber(&lat, &lie, &[0.5, 0.1, -0.7]).unwrap();
        let w = bracket(&u, &v).unwrap();
        assert!(w.x.iter().chain(&w.gamma).all(|&e| e.abs() < 1e-15));
    }

    #[test]
    fn anchor_leibniz_and_jacobi_on_polynomial_data() {
        let (lat, lie) = setup(2, vec![9, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = lie.dim();
        let mk = |rng: &mut ChaCha8Rng| {
            TLAElement::new(&lat, &lie, linear_field(&lat, lat.d, rng), linear_field(&lat, dim, rng)).unwrap()
        };
        let (u, v, w) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));

        // ρ[u, v] = [ρu, ρv]
        let uv = bracket(&u, &v).unwrap();
        let xy = directional(&lat, &u.x, &v.x, 2);
        let yx = directional(&lat, &v.x, &u.x, 2);
        let vf: Vec<f64> = xy.iter().zip(&yx).map(|(a, b)| a - b).collect();
        assert!(max_diff(uv.anchor(), &vf) == 0.0);

        // [u, f v] = f [u, v] + (ρ(u)·f) v
        let f: Vec<f64> = linear_field(&lat, 1, &mut rng);
        let lhs = bracket(&u, &v.scaled_by(&f)).unwrap();
        let uf = directional(&lat, &u.x, &f, 1);
        let mut rhs = uv.scaled_by(&f);
        for s in 0..lat.sites() {
            for mu in 0..2 {
                rhs.x[s * 2 + mu] += uf[s] * v.x[s * 2 + mu];
            }
            for m in 0..dim {
                rhs.gamma[s * dim + m] += uf[s] * v.gamma[s * dim + m];
            }
        }
        assert!(interior_diff(&lat, &lhs.x, &rhs.x, 2, 1) < 1e-12);
        assert!(interior_diff(&lat, &lhs.gamma, &rhs.gamma, dim, 1) < 1e-12);

        // Jacobi away from the periodic seam
        let j = |a: &TLAElement, b: &TLAElement, c: &TLAElement| bracket(a, &bracket(b, c).unwrap()).unwrap();
        let (j1, j2, j3) = (j(&u, &v, &w), j(&v, &w, &u), j(&w, &u, &v));
        let sum = |a: &[f64], b: &[f64], c: &[f64]| a.iter().zip(b).zip(c).map(|((x, y), z)| x + y + z).collect::<Vec<_>>();
        let zx = vec![0.0; j1.x.len()];
        let zg = vec![0.0; j1.gamma.len()];
        assert!(interior_diff(&lat, &sum(&j1.x, &j2.x, &j3.x), &zx, 2, 2) < 1e-12);
        assert!(interior_diff(&lat, &sum(&j1.gamma, &j2.gamma, &j3.gamma), &zg, dim, 2) < 1e-12);
    }

    /// Direct Koszul formula on frame arguments.
    fn koszul_value(f: &AlgebroidForm, args: &[Slot]) -> Vec<f64> {
        let lie = &f.lie;
        let dim = lie.dim();
        let mut acc = vec![0.0; f.field_len()];
        for i in 0..args.len() {
            let rest: Vec<Slot> = args.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &a)| a).collect();
            let v = f.value(&rest);
            let acted = match args[i] {
                Slot::Base(mu) => diff(&f.lattice, &v, dim, mu),
                Slot::Fiber(k) => ad_basis(lie, k, &v),
            };
            axpy(&mut acc, if i % 2 == 0 { 1.0 } else { -1.0 }, &acted);
        }
        for i in 0..args.len() {
            for j in i + 1..args.len() {
                if let (Slot::Fiber(k), Slot::Fiber(l)) = (args[i], args[j]) {
                    for m in 0..dim {
                        let cm = lie.c(m, k, l);
                        if cm == 0.0 {
                            continue;
                        }
                        let mut a = vec![Slot::Fiber(m)];
                        a.extend(args.iter().enumerate().filter(|&(t, _)| t != i && t != j).map(|(_, &s)| s));
                        axpy(&mut acc, if (i + j) % 2 == 0 { cm } else { -cm }, &f.value(&a));
                    }
                }
            }
        }
        acc
    }

    fn all_keys(d: usize, dim: usize, p: usize) -> Vec<FormKey> {
        let mut out = Vec::new();
        for r in 0..=p.min(d) {
            if p - r > dim {
                continue;
            }
            for b in linalg::combinations(d, r) {
                for f in linalg::combinations(dim, p - r) {
                    out.push((b.clone(), f));
                }
            }
        }
        out
    }

    #[test]
    fn split_differential_matches_koszul() {
        let (lat, lie) = setup(2, vec![3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 0..=3 {
            let f = AlgebroidForm::random(&lat, &lie, p, &mut rng);
            let df = differential(&f);
            for (b, fi) in all_keys(2, 3, p + 1) {
                let mut args: Vec<Slot> = b.iter().map(|&m| Slot::Base(m)).collect();
                args.extend(fi.iter().map(|&k| Slot::Fiber(k)));
                let direct = koszul_value(&f, &args);
                assert!(max_diff(&df.component(&b, &fi), &direct) < 1e-12, "p={p} key {b:?},{fi:?}");
                // also with a fiber argument first
                if !b.is_empty() && !fi.is_empty() {
                    let mut perm = args.clone();
                    perm.rotate_left(b.len());
                    let sign = if (b.len() * fi.len()) % 2 == 1 { -1.0 } else { 1.0 };
                    let v: Vec<f64> = df.value(&perm).iter().map(|x| x * sign).collect();
                    assert!(max_diff(&v, &direct) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn differential_examples() {
        let (lat, lie) = setup(2, vec![5, 5]);
        let dim = lie.dim();
        let gamma = [0.4, -0.9, 0.25];
        let mut f = AlgebroidForm::zero(&lat, &lie, 0);
        let field: Vec<f64> = (0..lat.sites()).flat_map(|_| gamma).collect();
        f.set_component(&[], &[], field).unwrap();
        let df = differential(&f);
        assert!(df.bidegree_part(1).max_abs() < 1e-15);
        for l in 0..dim {
            let v = df.component(&[], &[l]);
            let mut el = vec![0.0; dim];
            el[l] = 1.0;
            let expect = lie.bracket(&el, &gamma);
            assert!(max_diff(&v[0..dim], &expect) < 1e-15);
        }

        // linear function times a fixed fiber vector: exact base part away from the seam
        let mut g = AlgebroidForm::zero(&lat, &lie, 0);
        let field: Vec<f64> = (0..lat.sites())
            .flat_map(|s| {
                let x = lat.position(s);
                let fx = 2.0 * x[0] - 3.0 * x[1];
                gamma.map(|v| v * fx)
            })
            .collect();
        g.set_component(&[], &[], field).unwrap();
        let dg = differential(&g);
        let expect0: Vec<f64> = (0..lat.sites()).flat_map(|_| gamma.map(|v| 2.0 * v)).collect();
        let expect1: Vec<f64> = (0..lat.sites()).flat_map(|_| gamma.map(|v| -3.0 * v)).collect();
        assert!(interior_diff(&lat, &dg.component(&[0], &[]), &expect0, dim, 1) < 1e-12);
        assert!(interior_diff(&lat, &dg.component(&[1], &[]), &expect1, dim, 1) < 1e-12);
    }

    #[test]
    fn d_hat_squares_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 2..=3 {
            let (lat, lie) = setup(n, vec![3, 4]);
            for p in 0..=2 {
                let f = AlgebroidForm::random(&lat, &lie, p, &mut rng);
                assert!(differential(&differential(&f)).max_abs() < 1e-10, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn cartan_relations() {
        let (lat, lie) = setup(2, vec![3, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = lie.dim();
        let xi_v = random_field(dim, &mut rng);
        let eta_v = random_field(dim, &mut rng);
        let xi = TLAElement::constant_fiber(&lat, &lie, &xi_v).unwrap();
        let eta = TLAElement::constant_fiber(&lat, &lie, &eta_v).unwrap();
        let br = TLAElement::constant_fiber(&lat, &lie, &lie.bracket(&xi_v, &eta_v)).unwrap();
        let ival = |x: &TLAElement, f: &AlgebroidForm| cartan_operation(x, f).unwrap().0;
        let lval = |x: &TLAElement, f: &AlgebroidForm| cartan_operation(x, f).unwrap().1;

        let f20 = AlgebroidForm::random(&lat, &lie, 2, &mut rng).bidegree_part(2);
        assert_eq!(ival(&xi, &f20).max_abs(), 0.0);

        for p in 1..=3 {
            let f = AlgebroidForm::random(&lat, &lie, p, &mut rng);
            assert!(ival(&xi, &ival(&xi, &f)).max_abs() < 1e-12);
            let anti = ival(&xi, &ival(&eta, &f)).add(&ival(&eta, &ival(&xi, &f))).unwrap();
            assert!(anti.max_abs() < 1e-12);

            // [L_ξ, i_η] = i_[ξ,η]
            let lhs = lval(&xi, &ival(&eta, &f)).sub(&ival(&eta, &lval(&xi, &f))).unwrap();
            assert!(lhs.sub(&ival(&br, &f)).unwrap().max_abs() < 1e-10, "p={p}");

            // [L_ξ, L_η] = L_[ξ,η]
            let lhs = lval(&xi, &lval(&eta, &f)).sub(&lval(&eta, &lval(&xi, &f))).unwrap();
            assert!(lhs.sub(&lval(&br, &f)).unwrap().max_abs() < 1e-10, "p={p}");

            // i_{gξ} = g i_ξ
            let g: Vec<f64> = random_field(lat.sites(), &mut rng);
            let gxi = xi.scaled_by(&g);
            let lhs = ival(&gxi, &f);
            let rhs = ival(&xi, &f);
            for ((k, v1), (k2, v2)) in lhs.terms().zip(rhs.terms()) {
                assert_eq!(k, k2);
                for s in 0..lat.sites() {
                    for m in 0..dim {
                        assert!((v1[s * dim + m] - g[s] * v2[s * dim + m]).abs() < 1e-14);
                    }
                }
            }
        }

        let not_fiber = TLAElement::new(&lat, &lie, vec![1.0; lat.sites() * 2], vec![0.0; lat.sites() * dim]).unwrap();
        let f = AlgebroidForm::random(&lat, &lie, 1, &mut rng);
        assert!(matches!(cartan_operation(&not_fiber, &f), Err(Error::Unsupported(_))));
    }

    /// Block formulas for the curvature of `ω̂`, written out by hand.
    fn curvature_blocks(w: &GeneralizedConnection) -> AlgebroidForm {
        let lat = &w.lattice;
        let lie = &w.lie;
        let (sites, d, dim) = (lat.sites(), lat.d, lie.dim());
        let mut out = AlgebroidForm::zero(lat, lie, 2);
        let comps = d * dim;
        for mu in 0..d {
            for nu in mu + 1..d {
                let dm = &diff(lat, &w.omega, comps, mu);
                let dn = &diff(lat, &w.omega, comps, nu);
                let field: Vec<f64> = (0..sites)
                    .flat_map(|s| {
                        let br = lie.bracket(w.omega_at(s, mu), w.omega_at(s, nu));
                        (0..dim).map(move |m| dm[s * comps + nu * dim + m] - dn[s * comps + mu * dim + m] + br[m]).collect::<Vec<_>>()
                    })
                    .collect();
                out.add_component(&[mu, nu], &[], &field).unwrap();
            }
        }
        let tau = |s: usize, k: usize| {
            let mut t = w.phi_at(s, k).to_vec();
            t[k] += 1.0;
            t
        };
        let tau_all: Vec<f64> = (0..sites).flat_map(|s| (0..dim).flat_map(move |k| tau(s, k))).collect();
        for mu in 0..d {
            let dt = diff(lat, &tau_all, dim * dim, mu);
            for k in 0..dim {
                let field: Vec<f64> = (0..sites)
                    .flat_map(|s| {
                        let br = lie.bracket(w.omega_at(s, mu), &tau(s, k));
                        let i = (s * dim + k) * dim;
                        (0..dim).map(|m| dt[i + m] + br[m]).collect::<Vec<_>>()
                    })
                    .collect();
                out.add_component(&[mu], &[k], &field).unwrap();
            }
        }
        for k in 0..dim {
            for l in k + 1..dim {
                let field: Vec<f64> = (0..sites)
                    .flat_map(|s| {
                        let mut r = lie.bracket(&tau(s, k), &tau(s, l));
                        for m in 0..dim {
                            let cm = lie.c(m, k, l);
                            for (x, t) in r.iter_mut().zip(tau(s, m)) {
                                *x -= cm * t;
                            }
                        }
                        r
                    })
                    .collect();
                out.add_component(&[], &[k, l], &field).unwrap();
            }
        }
        out
    }

    #[test]
    fn curvature_matches_block_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 2..=3 {
            let (lat, lie) = setup(n, vec![3, 4]);
            let w = GeneralizedConnection::random(&lat, &lie, 0.7, &mut rng);
            let r = curvature_generalized(&w);
            assert!(r.sub(&curvature_blocks(&w)).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_examples() {
        let (lat, lie) = setup(2, vec![4, 4]);
        let dim = lie.dim();
        assert!(curvature_generalized(&GeneralizedConnection::trivial(&lat, &lie)).max_abs() == 0.0);

        // constant ordinary connection: only [ω_μ, ω_ν] survives, and it is horizontal
        let w0 = [0.3, -0.2, 0.9];
        let w1 = [-0.5, 0.4, 0.1];
        let omega: Vec<f64> = (0..lat.sites()).flat_map(|_| w0.iter().chain(&w1).copied().collect::<Vec<_>>()).collect();
        let w = GeneralizedConnection::ordinary(&lat, &lie, omega).unwrap();
        let r = curvature_generalized(&w);
        let expect = lie.bracket(&w0, &w1);
        assert!(max_diff(&r.component(&[0, 1], &[])[0..dim], &expect) < 1e-15);
        assert!(r.bidegree_part(1).max_abs() < 1e-15 && r.bidegree_part(0).max_abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xi = TLAElement::fiber(&lat, &lie, random_field(lat.sites() * dim, &mut rng)).unwrap();
        assert!(cartan_operation(&xi, &r).unwrap().0.max_abs() < 1e-10);

        // site-dependent ordinary connection reproduces the lattice field strength
        let w = GeneralizedConnection::ordinary(&lat, &lie, random_field(lat.sites() * 2 * dim, &mut rng)).unwrap();
        let r = curvature_generalized(&w);
        let xi = TLAElement::fiber(&lat, &lie, random_field(lat.sites() * dim, &mut rng)).unwrap();
        assert!(cartan_operation(&xi, &r).unwrap().0.max_abs() < 1e-10);
        let (a, b) = to_lattice_fields(&w);
        let fs = latticeymh::field_strength(&a, &b, &lie).unwrap();
        let f01 = r.component(&[0, 1], &[]);
        for s in 0..lat.sites() {
            let m = lie.from_anti_hermitian_coords(&f01[s * dim..(s + 1) * dim]);
            assert!(linalg::max_abs(&(m - &fs.geo[s][1])) < 1e-12);
        }

        // τ = Id, ω = 0: flat
        let w = GeneralizedConnection::trivial(&lat, &lie).with_constant_phi(&RMat::zeros(dim, dim));
        assert!(curvature_generalized(&w).max_abs() < 1e-14);
    }

    #[test]
    fn decomposition_of_special_connections() {
        let (lat, lie) = setup(3, vec![3, 3]);
        let dim = lie.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = MetricTriple::standard(&lat, &lie);

        let w = GeneralizedConnection::ordinary(&lat, &lie, random_field(lat.sites() * 2 * dim, &mut rng)).unwrap();
        let dec = decompose(&w, &m).unwrap();
        assert!(dec.tau.iter().chain(&dec.r_tau).chain(&dec.d_tau).all(|&v| v == 0.0));
        assert_eq!(dec.omega_ord, w);
        let r = curvature_generalized(&w);
        for s in 0..lat.sites() {
            assert!(max_diff(dec.f_hat_mn(s, 0, 1), &r.component(&[0, 1], &[])[s * dim..(s + 1) * dim]) < 1e-12);
        }

        let w = w.with_constant_phi(&RMat::zeros(dim, dim));
        let dec = decompose(&w, &m).unwrap();
        assert!(dec.r_tau.iter().all(|v| v.abs() < 1e-14));
        for s in 0..lat.sites() {
            for k in 0..dim {
                assert!(dec.tau_k(s, k).iter().enumerate().all(|(j, &v)| v == if j == k { 1.0 } else { 0.0 }));
            }
        }
    }

    #[test]
    fn three_part_reassembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 2..=3 {
            let (lat, lie) = setup(n, vec![3, 4]);
            let dim = lie.dim();
            let phi = RMat::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
            let w = GeneralizedConnection::random(&lat, &lie, 0.8, &mut rng).with_constant_phi(&phi);
            let bg = GeneralizedConnection::ordinary(&lat, &lie, random_field(lat.sites() * 2 * dim, &mut rng)).unwrap();
            let m = MetricTriple::standard(&lat, &lie).with_background(bg.clone()).unwrap();
            let dec = decompose(&w, &m).unwrap();
            assert!(dec.omega_ord.is_ordinary());
            let diff = curvature_generalized(&w).sub(&reassemble(&dec, &bg)).unwrap();
            assert!(diff.max_abs() < 1e-10, "n={n} residual {}", diff.max_abs());
        }
    }

    #[test]
    fn ordinary_connection_action_is_yang_mills() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (lat, lie) = setup(2, vec![4, 4, 3]);
        let dim = lie.dim();
        let m = MetricTriple::standard(&lat, &lie);
        for _ in 0..3 {
            let w = GeneralizedConnection::ordinary(&lat, &lie, random_field(lat.sites() * 3 * dim, &mut rng)).unwrap();
            let s = action_generalized(&w, &m).unwrap();
            let (a, _) = to_lattice_fields(&w);
            let ym = latticeymh::ym_action(&a);
            assert!((s - ym).abs() <= 1e-10 * ym, "{s} vs {ym}");
        }
        assert_eq!(action_generalized(&GeneralizedConnection::trivial(&lat, &lie), &m).unwrap(), 0.0);
    }

    #[test]
    fn calibrated_action_matches_ymh() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=3 {
            let lat = LatticeSpec::new(vec![4, 3], 0.6).unwrap();
            let lie = su_basis(n).unwrap().shared();
            let p = YMHParams::new(1.3, &lie).unwrap();
            let a = latticeymh::GaugeFieldA::random(&lat, n, 0.5, &mut rng);
            let mut b = latticeymh::ScalarMultipletB::random(&lat, n, 0.5, &mut rng);
            let strip = |m: &linalg::CMat| m - linalg::identity(n) * (m.trace() / n as f64);
            b.b.iter_mut().flatten().for_each(|m| *m = strip(m));
            let mut a = a;
            a.a.iter_mut().flatten().for_each(|m| *m = strip(m));
            let w = from_lattice_fields(&a, &b, &lie).unwrap();
            let mt = MetricTriple::ymh_calibrated(&lat, &lie, p.mu).unwrap();
            let s = action_generalized(&w, &mt).unwrap();
            let ymh = latticeymh::ymh_action(&a, &b, &p).unwrap();
            assert!((s - ymh).abs() <= 1e-10 * ymh, "n={n}: {s} vs {ymh}");
        }
    }

    #[test]
    fn infinitesimal_gauge_examples() {
        let (lat, lie) = setup(2, vec![3, 4]);
        let dim = lie.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = GeneralizedConnection::random(&lat, &lie, 0.6, &mut rng);
        let zero = TLAElement::constant_fiber(&lat, &lie, &[0.0; 3]).unwrap();
        assert_eq!(infinitesimal_gauge(&w, &zero, 0.1).unwrap(), w);

        let xi_v = [0.2, -0.4, 0.7];
        let xi = TLAElement::constant_fiber(&lat, &lie, &xi_v).unwrap();
        let ord = GeneralizedConnection::ordinary(&lat, &lie, random_field(lat.sites() * 2 * dim, &mut rng)).unwrap();
        let eps = 0.01;
        let t = infinitesimal_gauge(&ord, &xi, eps).unwrap();
        for s in 0..lat.sites() {
            for mu in 0..2 {
                let expect: Vec<f64> = ord
                    .omega_at(s, mu)
                    .iter()
                    .zip(lie.bracket(ord.omega_at(s, mu), &xi_v))
                    .map(|(o, b)| o + eps * b)
                    .collect();
                assert!(max_diff(t.omega_at(s, mu), &expect) < 1e-15);
            }
        }
        // s′ξ(e_k) = [e_k, ξ] cancels [φ_k, ξ] = −[e_k, ξ]
        assert!(max_diff(&t.phi, &ord.phi) < 1e-15);

        let not_fiber = TLAElement::new(&lat, &lie, vec![1.0; lat.sites() * 2], vec![0.0; lat.sites() * dim]).unwrap();
        assert!(infinitesimal_gauge(&w, &not_fiber, 0.1).is_err());
    }

    #[test]
    fn action_is_gauge_stationary() {
        let (lat, lie) = setup(2, vec![4, 3]);
        let dim = lie.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let phi = RMat::from_fn(dim, dim, |_, _| rng.random_range(-0.5..0.5));
        let w = GeneralizedConnection::random(&lat, &lie, 0.6, &mut rng).with_constant_phi(&phi);
        let bg = GeneralizedConnection::ordinary(&lat, &lie, random_field(lat.sites() * 2 * dim, &mut rng)).unwrap();
        let m = MetricTriple::ymh_calibrated(&lat, &lie, 1.1).unwrap().with_background(bg).unwrap();
        let xi = TLAElement::constant_fiber(&lat, &lie, &[0.3, 0.8, -0.5]).unwrap();
        let s0 = action_generalized(&w, &m).unwrap();
        let drift = |eps: f64| (action_generalized(&infinitesimal_gauge(&w, &xi, eps).unwrap(), &m).unwrap() - s0).abs();
        let (e1, e2) = (drift(1e-3), drift(5e-4));
        assert!((e1 / e2 - 4.0).abs() < 0.05, "ratio {}", e1 / e2);
        assert!(s0 > 0.0);
    }

    #[test]
    fn action_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for n in 2..=3 {
            let (lat, lie) = setup(n, vec![3, 4]);
            let dim = lie.dim();
            let w = GeneralizedConnection::random(&lat, &lie, 0.6, &mut rng);
            let bg = GeneralizedConnection::ordinary(&lat, &lie, random_field(lat.sites() * 2 * dim, &mut rng)).unwrap();
            let q = RMat::from_fn(dim, dim, |_, _| rng.random_range(-0.3..0.3));
            let fiber_h = RMat::identity(dim, dim) + &q * q.transpose();
            let m = MetricTriple::new(fiber_h, lie.trace_form.clone() * 0.7, 1.9, bg).unwrap();
            let (g_om, g_phi) = action_gradient(&w, &m).unwrap();
            let eval = |om: &[f64], ph: &[f64]| {
                action_generalized(&GeneralizedConnection::new(&lat, &lie, om.to_vec(), ph.to_vec()).unwrap(), &m).unwrap()
            };
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            let scale = g_om.iter().chain(&g_phi).fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..w.omega.len() {
                let (mut p, mut q) = (w.omega.clone(), w.omega.clone());
                p[i] += h;
                q[i] -= h;
                worst = worst.max(((eval(&p, &w.phi) - eval(&q, &w.phi)) / (2.0 * h) - g_om[i]).abs());
            }
            for i in 0..w.phi.len() {
                let (mut p, mut q) = (w.phi.clone(), w.phi.clone());
                p[i] += h;
                q[i] -= h;
                worst = worst.max(((eval(&w.omega, &p) - eval(&w.omega, &q)) / (2.0 * h) - g_phi[i]).abs());
            }
            assert!(worst <= 1e-6 * scale, "n={n}: {worst:e} against {scale:e}");
        }
    }

    #[test]
    fn lattice_correspondence() {
        let (lat, lie) = setup(2, vec![3, 3]);
        let dim = lie.dim();
        let a0 = latticeymh::GaugeFieldA::zero(&lat, 2);
        let w = from_lattice_fields(&a0, &latticeymh::ScalarMultipletB::zero(&lat, 2), &lie).unwrap();
        assert!(w.is_ordinary() && w.omega.iter().all(|&v| v == 0.0));

        let vac = latticeymh::ScalarMultipletB::vacuum(&lat, &lie);
        let w = from_lattice_fields(&a0, &vac, &lie).unwrap();
        let dec = decompose(&w, &MetricTriple::standard(&lat, &lie)).unwrap();
        assert!(w.phi.iter().all(|v| v.abs() < 1e-15));
        assert!(dec.r_tau.iter().all(|v| v.abs() < 1e-14));

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let w = GeneralizedConnection::random(&lat, &lie, 0.9, &mut rng);
        let (a, b) = to_lattice_fields(&w);
        let back = from_lattice_fields(&a, &b, &lie).unwrap();
        assert!(max_diff(&back.omega, &w.omega) < 1e-15 && max_diff(&back.phi, &w.phi) < 1e-15);

        let mut bad = a.clone();
        bad.a[0][0] += linalg::identity(2) * c(0.0, 0.5);
        assert!(matches!(from_lattice_fields(&bad, &b, &lie), Err(Error::NotRepresentable { .. })));
        let _ = dim;
    }
}
