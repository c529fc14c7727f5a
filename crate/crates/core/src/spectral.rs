//! Finite real spectral triples over direct sums of matrix algebras.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::report::{Check, Report};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const AXIOM_TOL: f64 = 1e-12;

/// `(ε, ε′, ε″)` for `ko_dim mod 8`; `ε″` only in even dimensions.
pub fn table2_signs(ko_dim: u8) -> (f64, f64, Option<f64>) {
    const EPS: [f64; 8] = [1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0];
    const EPS1: [f64; 8] = [1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0];
    const EPS2: [Option<f64>; 8] = [Some(1.0), None, Some(-1.0), None, Some(1.0), None, Some(-1.0), None];
    let k = (ko_dim % 8) as usize;
    (EPS[k], EPS1[k], EPS2[k])
}

/// `⊕_b M_{dims[b]}(ℂ)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockAlgebra {
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    pub blocks: Vec<CMat>,
}

impl BlockAlgebra {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidArgument("blocks must be non-empty".into()));
        }
        Ok(BlockAlgebra { dims })
    }

    pub fn unit(&self) -> AlgebraElement {
        AlgebraElement { blocks: self.dims.iter().map(|&n| linalg::identity(n)).collect() }
    }

    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement { blocks: self.dims.iter().map(|&n| linalg::zeros(n)).collect() }
    }

    /// From scalars when every block is 1×1, e.g. `(a, b) ∈ ℂ ⊕ ℂ`.
    pub fn scalars(&self, values: &[Complex64]) -> Result<AlgebraElement> {
        if values.len() != self.dims.len() || self.dims.iter().any(|&n| n != 1) {
            return Err(Error::Dimension { expected: self.dims.len(), got: values.len() });
        }
        Ok(AlgebraElement { blocks: values.iter().map(|&v| CMat::from_element(1, 1, v)).collect() })
    }

    pub fn element(&self, blocks: Vec<CMat>) -> Result<AlgebraElement> {
        if blocks.len() != self.dims.len() {
            return Err(Error::Dimension { expected: self.dims.len(), got: blocks.len() });
        }
        for (b, &n) in blocks.iter().zip(&self.dims) {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::Dimension { expected: n, got: b.nrows() });
            }
        }
        Ok(AlgebraElement { blocks })
    }

    /// Matrix units of every block.
    pub fn spanning_set(&self) -> Vec<AlgebraElement> {
        let mut out = Vec::new();
        for (b, &n) in self.dims.iter().enumerate() {
            for p in 0..n {
                for q in 0..n {
                    let mut e = self.zero();
                    e.blocks[b][(p, q)] = c(1.0, 0.0);
                    out.push(e);
                }
            }
        }
        out
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> AlgebraElement {
        AlgebraElement { blocks: self.dims.iter().map(|&n| linalg::random_complex(n, rng)).collect() }
    }

    pub fn random_unitary<R: Rng + ?Sized>(&self, rng: &mut R) -> AlgebraElement {
        AlgebraElement { blocks: self.dims.iter().map(|&n| linalg::random_unitary(n, rng)).collect() }
    }
}

impl AlgebraElement {
    pub fn adjoint(&self) -> AlgebraElement {
        AlgebraElement { blocks: self.blocks.iter().map(linalg::dagger).collect() }
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.blocks.iter().map(linalg::unitarity_residual).fold(0.0, f64::max)
    }
}

/// `π` places a copy of block `b` at each listed offset of `H = ℂ^N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representation {
    pub algebra: BlockAlgebra,
    pub hilbert_dim: usize,
    /// `(block, offset)` pairs.
    pub copies: Vec<(usize, usize)>,
}

impl Representation {
    pub fn new(algebra: BlockAlgebra, hilbert_dim: usize, copies: Vec<(usize, usize)>) -> Result<Self> {
        let mut used = vec![false; hilbert_dim];
        for &(b, off) in &copies {
            let n = *algebra.dims.get(b).ok_or_else(|| Error::InvalidArgument(format!("no block {b}")))?;
            if off + n > hilbert_dim {
                return Err(Error::Dimension { expected: hilbert_dim, got: off + n });
            }
            for u in &mut used[off..off + n] {
                if *u {
                    return Err(Error::InvalidArgument("overlapping block copies".into()));
                }
                *u = true;
            }
        }
        Ok(Representation { algebra, hilbert_dim, copies })
    }

    pub fn pi(&self, a: &AlgebraElement) -> CMat {
        let mut m = linalg::zeros(self.hilbert_dim);
        for &(b, off) in &self.copies {
            let blk = &a.blocks[b];
            let n = blk.nrows();
            m.view_mut((off, off), (n, n)).copy_from(blk);
        }
        m
    }
}

/// `J(v) = K·conj(v)` with `K` unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct RealStructure {
    pub k: CMat,
}

impl RealStructure {
    /// `J X J⁻¹ = K X̄ K†` for a linear operator `X`.
    pub fn conjugate(&self, x: &CMat) -> CMat {
        &self.k * x.map(|z| z.conj()) * linalg::dagger(&self.k)
    }

    /// `J² = K K̄`.
    pub fn square(&self) -> CMat {
        &self.k * self.k.map(|z| z.conj())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSpectralTriple {
    pub rep: Representation,
    pub d: CMat,
    pub gamma: Option<CMat>,
    pub j: Option<RealStructure>,
    pub ko_dim: u8,
}

impl FiniteSpectralTriple {
    pub fn new(rep: Representation, d: CMat, gamma: Option<CMat>, j: Option<RealStructure>, ko_dim: u8) -> Result<Self> {
        let n = rep.hilbert_dim;
        let bad = |m: &CMat| m.nrows() != n || m.ncols() != n;
        if bad(&d) || gamma.as_ref().is_some_and(bad) || j.as_ref().is_some_and(|j| bad(&j.k)) {
            return Err(Error::Dimension { expected: n, got: d.nrows() });
        }
        Ok(FiniteSpectralTriple { rep, d, gamma, j, ko_dim: ko_dim % 8 })
    }

    pub fn hilbert_dim(&self) -> usize {
        self.rep.hilbert_dim
    }

    pub fn pi(&self, a: &AlgebraElement) -> CMat {
        self.rep.pi(a)
    }

    fn eps_prime(&self) -> f64 {
        table2_signs(self.ko_dim).1
    }

    /// `X + ε′ J X J⁻¹`, or `X` without a real structure.
    fn symmetrize(&self, x: &CMat) -> CMat {
        match &self.j {
            Some(j) => x + j.conjugate(x) * c(self.eps_prime(), 0.0),
            None => x.clone(),
        }
    }

    pub fn with_d(&self, d: CMat) -> Self {
        FiniteSpectralTriple { d, ..self.clone() }
    }
}

/// `V = ⊕ ℂ^{dims}` with `H = V ⊗ V̄`, `π(a) = 1 ⊗ a`, `J(v ⊗ w̄) = w ⊗ v̄`,
/// `D = 1 ⊗ X + J(1 ⊗ X)J⁻¹`. A grading `s` on `V` gives `γ = s ⊗ s`.
pub fn bimodule_triple(dims: Vec<usize>, x: &CMat, grading: Option<&[f64]>, ko_dim: u8) -> Result<FiniteSpectralTriple> {
    let algebra = BlockAlgebra::new(dims)?;
    let nv: usize = algebra.dims.iter().sum();
    if x.nrows() != nv || x.ncols() != nv {
        return Err(Error::Dimension { expected: nv, got: x.nrows() });
    }
    let n = nv * nv;
    // index j·nv + i stores e_i ⊗ ē_j
    let mut copies = Vec::new();
    for j in 0..nv {
        let mut off = j * nv;
        for (b, &db) in algebra.dims.iter().enumerate() {
            copies.push((b, off));
            off += db;
        }
    }
    let rep = Representation::new(algebra, n, copies)?;
    let mut k = linalg::zeros(n);
    for i in 0..nv {
        for j in 0..nv {
            k[(i * nv + j, j * nv + i)] = c(1.0, 0.0);
        }
    }
    let j = RealStructure { k };
    let mut dl = linalg::zeros(n);
    for b in 0..nv {
        dl.view_mut((b * nv, b * nv), (nv, nv)).copy_from(x);
    }
    let d = &dl + j.conjugate(&dl);
    let gamma = match grading {
        Some(s) => {
            if s.len() != nv {
                return Err(Error::Dimension { expected: nv, got: s.len() });
            }
            Some(CMat::from_fn(n, n, |r, col| if r == col { c(s[r % nv] * s[r / nv], 0.0) } else { c(0.0, 0.0) }))
        }
        None => None,
    };
    FiniteSpectralTriple::new(rep, d, gamma, Some(j), ko_dim)
}

/// `ℂ ⊕ ℂ` on `ℂ⁴ = ℂ² ⊗ ℂ̄²` with `X = [[0, m], [m, 0]]`, `γ = diag(1, −1)^{⊗2}`, KO-dimension 0.
pub fn two_point(m: f64) -> FiniteSpectralTriple {
    let x = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(m, 0.0), c(m, 0.0), c(0.0, 0.0)]);
    bimodule_triple(vec![1, 1], &x, Some(&[1.0, -1.0]), 0).expect("valid two-point data")
}

/// `ℂ ⊕ ℂ` on `ℂ²` with `π(a, b) = diag(a, b)`, `D = [[0, m], [m, 0]]`, `γ = diag(1, −1)`, no `J`.
pub fn two_point_minimal(m: f64) -> FiniteSpectralTriple {
    let rep = Representation::new(BlockAlgebra::new(vec![1, 1]).unwrap(), 2, vec![(0, 0), (1, 1)]).unwrap();
    let d = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(m, 0.0), c(m, 0.0), c(0.0, 0.0)]);
    let gamma = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
    FiniteSpectralTriple::new(rep, d, Some(gamma), None, 0).unwrap()
}

/// `M₂(ℂ) ⊕ ℂ` on `ℂ⁹` with the doublet-singlet coupling `y`.
pub fn m2_plus_c(y: [Complex64; 2]) -> FiniteSpectralTriple {
    let z = c(0.0, 0.0);
    let x = CMat::from_row_slice(3, 3, &[z, z, y[0], z, z, y[1], y[0].conj(), y[1].conj(), z]);
    bimodule_triple(vec![2, 1], &x, Some(&[1.0, 1.0, -1.0]), 0).expect("valid data")
}

fn sign_mat(s: f64) -> Complex64 {
    c(s, 0.0)
}

pub fn check_axioms(t: &FiniteSpectralTriple) -> Result<Report> {
    let (eps, eps1, eps2) = table2_signs(t.ko_dim);
    if t.gamma.is_some() && t.j.is_some() && eps2.is_none() {
        return Err(Error::SignTableGap { ko_dim: t.ko_dim });
    }
    let n = t.hilbert_dim();
    let id = linalg::identity(n);
    let basis = t.rep.algebra.spanning_set();
    let pis: Vec<CMat> = basis.iter().map(|a| t.pi(a)).collect();
    let d = &t.d;
    let mut rep = Report::new();
    rep.push(Check::at_most("d_hermitian", linalg::hermitian_residual(d), AXIOM_TOL));
    rep.push(Check::at_most("bounded_commutator", 0.0, AXIOM_TOL).with_note("finite dimension"));
    match &t.gamma {
        Some(g) => {
            rep.push(Check::at_most("gamma_hermitian", linalg::hermitian_residual(g), AXIOM_TOL));
            rep.push(Check::at_most("gamma_square", linalg::max_abs(&(g * g - &id)), AXIOM_TOL));
            rep.push(Check::at_most("gamma_anticommutes_d", linalg::max_abs(&(d * g + g * d)), AXIOM_TOL));
            let r = pis.iter().map(|p| linalg::max_abs(&linalg::commutator(g, p))).fold(0.0, f64::max);
            rep.push(Check::at_most("gamma_commutes_pi", r, AXIOM_TOL));
        }
        None => rep.push(Check::skipped("gamma", "no grading")),
    }
    match &t.j {
        Some(j) => {
            rep.push(Check::at_most("j_unitary", linalg::unitarity_residual(&j.k), AXIOM_TOL));
            rep.push(Check::at_most("j_square", linalg::max_abs(&(j.square() - &id * sign_mat(eps))), AXIOM_TOL));
            rep.push(Check::at_most("j_d", linalg::max_abs(&(j.conjugate(d) - d * sign_mat(eps1))), AXIOM_TOL));
            if let (Some(g), Some(e2)) = (&t.gamma, eps2) {
                rep.push(Check::at_most("j_gamma", linalg::max_abs(&(j.conjugate(g) - g * sign_mat(e2))), AXIOM_TOL));
            }
            let opp: Vec<CMat> = pis.iter().map(|p| j.conjugate(p)).collect();
            let comms: Vec<CMat> = pis.iter().map(|p| linalg::commutator(d, p)).collect();
            let mut commutant: f64 = 0.0;
            let mut first: f64 = 0.0;
            for o in &opp {
                for (p, cm) in pis.iter().zip(&comms) {
                    commutant = commutant.max(linalg::max_abs(&linalg::commutator(o, p)));
                    first = first.max(linalg::max_abs(&linalg::commutator(cm, o)));
                }
            }
            rep.push(Check::at_most("commutant", commutant, AXIOM_TOL));
            rep.push(Check::at_most("first_order", first, AXIOM_TOL));
        }
        None => rep.push(Check::skipped("real_structure", "no J")),
    }
    Ok(rep)
}

/// `π_D(Σ a_i db_i) = Σ π(a_i)[D, π(b_i)]`.
pub fn represent_one_form(t: &FiniteSpectralTriple, terms: &[(AlgebraElement, AlgebraElement)]) -> CMat {
    let mut out = linalg::zeros(t.hilbert_dim());
    for (a, b) in terms {
        out += t.pi(a) * linalg::commutator(&t.d, &t.pi(b));
    }
    out
}

/// `D_ω = D + ω + ε′ JωJ⁻¹`.
pub fn fluctuate(t: &FiniteSpectralTriple, omega: &CMat) -> Result<FiniteSpectralTriple> {
    if omega.nrows() != t.hilbert_dim() || omega.ncols() != t.hilbert_dim() {
        return Err(Error::Dimension { expected: t.hilbert_dim(), got: omega.nrows() });
    }
    let residual = linalg::hermitian_residual(omega);
    if !(residual <= AXIOM_TOL) {
        return Err(Error::InvalidFluctuation { residual });
    }
    Ok(t.with_d(&t.d + t.symmetrize(omega)))
}

fn check_unitary(u: &AlgebraElement) -> Result<()> {
    let residual = u.unitarity_residual();
    if !(residual <= AXIOM_TOL) {
        return Err(Error::InvalidGaugeElement { residual });
    }
    Ok(())
}

/// `D^u = D + π(u)[D, π(u)†] + ε′ J(π(u)[D, π(u)†])J⁻¹`.
pub fn gauge_transform_spectral(t: &FiniteSpectralTriple, u: &AlgebraElement) -> Result<FiniteSpectralTriple> {
    check_unitary(u)?;
    let pu = t.pi(u);
    let x = &pu * linalg::commutator(&t.d, &linalg::dagger(&pu));
    Ok(t.with_d(&t.d + t.symmetrize(&x)))
}

/// `ω^u = π(u)ωπ(u)† + π(u)[D, π(u)†]`.
pub fn gauge_one_form(t: &FiniteSpectralTriple, omega: &CMat, u: &AlgebraElement) -> Result<CMat> {
    check_unitary(u)?;
    let pu = t.pi(u);
    let pud = linalg::dagger(&pu);
    Ok(&pu * omega * &pud + &pu * linalg::commutator(&t.d, &pud))
}

/// Hermitian part of `π_D` of random one-form terms.
pub fn random_hermitian_one_form<R: Rng + ?Sized>(t: &FiniteSpectralTriple, terms: usize, rng: &mut R) -> CMat {
    let alg = &t.rep.algebra;
    let list: Vec<_> = (0..terms).map(|_| (alg.random(rng), alg.random(rng))).collect();
    let w = represent_one_form(t, &list);
    (&w + linalg::dagger(&w)) * c(0.5, 0.0)
}

/// `1` on `[0, 1]`, `0` on `[2, ∞)`, smooth in between.
pub fn smooth_bump(x: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let x = x.abs();
    let (a, b) = (f(2.0 - x), f(x - 1.0));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

pub fn gaussian(x: f64) -> f64 {
    (-x.abs()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    SmoothBump,
    Gaussian,
}

impl Cutoff {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Cutoff::SmoothBump => smooth_bump(x),
            Cutoff::Gaussian => gaussian(x),
        }
    }
}

/// `Σ_i χ(λ_i²/Λ)` over the eigenvalues of `D`.
pub fn spectral_action(t: &FiniteSpectralTriple, chi: &dyn Fn(f64) -> f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidCutoff(lambda));
    }
    Ok(linalg::hermitian_eigenvalues(&t.d).iter().map(|l| chi(l * l / lambda)).sum())
}

/// JSON form of a triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleJson {
    pub blocks: Vec<usize>,
    pub copies: Vec<(usize, usize)>,
    pub d: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub gamma: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    pub j_unitary: Option<Vec<Vec<[f64; 2]>>>,
    pub ko_dim: u8,
}

impl TripleJson {
    pub fn from_triple(t: &FiniteSpectralTriple) -> Self {
        TripleJson {
            blocks: t.rep.algebra.dims.clone(),
            copies: t.rep.copies.clone(),
            d: linalg::to_pairs(&t.d),
            gamma: t.gamma.as_ref().map(linalg::to_pairs),
            j_unitary: t.j.as_ref().map(|j| linalg::to_pairs(&j.k)),
            ko_dim: t.ko_dim,
        }
    }

    pub fn to_triple(&self) -> Result<FiniteSpectralTriple> {
        let mat = |rows: &[Vec<[f64; 2]>]| {
            linalg::from_pairs(rows).ok_or_else(|| Error::InvalidArgument("matrix rows must be square".into()))
        };
        let d = mat(&self.d)?;
        let rep = Representation::new(BlockAlgebra::new(self.blocks.clone())?, d.nrows(), self.copies.clone())?;
        let gamma = self.gamma.as_deref().map(mat).transpose()?;
        let j = self.j_unitary.as_deref().map(mat).transpose()?.map(|k| RealStructure { k });
        FiniteSpectralTriple::new(rep, d, gamma, j, self.ko_dim)
    }
}
