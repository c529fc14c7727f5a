//! Derivation-based differential calculus on `M_n`:
//! `Ω•(M_n) ≅ M_n ⊗ Λ• sl_n*`, with its graded product, the Koszul
//! differential `d′`, the involution and the canonical 1-form `iθ`.
//!
//! Forms are stored on strictly increasing multi-indices `k_1 < … < k_p`; a
//! missing key is a zero coefficient. The dual basis `θ^k` pairs with the real
//! derivations `∂_k = ad_{iE_k}`, and `θ^{k_1}⋯θ^{k_p}(∂_{k_1},…,∂_{k_p}) = 1`.

use crate::error::{Error, Result};
use crate::liealg::LieData;
use crate::linalg::{self, c, CMat, I};
use num_complex::Complex64;
use rand::Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct MatrixForm {
    lie: Arc<LieData>,
    degree: usize,
    coeffs: BTreeMap<Vec<usize>, CMat>,
}

impl MatrixForm {
    pub fn zero(lie: &Arc<LieData>, degree: usize) -> Self {
        MatrixForm { lie: lie.clone(), degree, coeffs: BTreeMap::new() }
    }

    /// Degree-0 form `a`.
    pub fn scalar(lie: &Arc<LieData>, a: CMat) -> Self {
        let mut f = Self::zero(lie, 0);
        f.coeffs.insert(Vec::new(), a);
        f
    }

    /// `Σ_k A_k ⊗ θ^k`.
    pub fn one_form(lie: &Arc<LieData>, a: &[CMat]) -> Result<Self> {
        if a.len() != lie.dim() {
            return Err(Error::Dimension { expected: lie.dim(), got: a.len() });
        }
        let mut f = Self::zero(lie, 1);
        for (k, m) in a.iter().enumerate() {
            f.set(vec![k], m.clone());
        }
        Ok(f)
    }

    /// `a ⊗ θ^{k_1}⋯θ^{k_p}` for an arbitrary (possibly unsorted) index list.
    pub fn monomial(lie: &Arc<LieData>, a: CMat, idx: &[usize]) -> Self {
        let mut f = Self::zero(lie, idx.len());
        if let Some((sorted, sign)) = linalg::sort_with_sign(idx) {
            f.set(sorted, a * c(sign, 0.0));
        }
        f
    }

    pub fn lie(&self) -> &Arc<LieData> {
        &self.lie
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n(&self) -> usize {
        self.lie.n
    }

    /// Stored coefficient at a sorted multi-index.
    pub fn get(&self, idx: &[usize]) -> Option<&CMat> {
        self.coeffs.get(idx)
    }

    pub fn coefficient(&self, idx: &[usize]) -> CMat {
        self.component(idx)
    }

    /// `ω(∂_{k_1}, …, ∂_{k_p})` for any index order (antisymmetric).
    pub fn component(&self, idx: &[usize]) -> CMat {
        match linalg::sort_with_sign(idx) {
            Some((sorted, sign)) => match self.coeffs.get(&sorted) {
                Some(m) => m * c(sign, 0.0),
                None => linalg::zeros(self.n()),
            },
            None => linalg::zeros(self.n()),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &CMat)> {
        self.coeffs.iter()
    }

    fn set(&mut self, idx: Vec<usize>, m: CMat) {
        self.coeffs.insert(idx, m);
    }

    fn accumulate(&mut self, idx: Vec<usize>, m: CMat) {
        match self.coeffs.get_mut(&idx) {
            Some(slot) => *slot += m,
            None => {
                self.coeffs.insert(idx, m);
            }
        }
    }

    fn check_compatible(&self, other: &MatrixForm) -> Result<()> {
        if self.lie.same_algebra(&other.lie) {
            Ok(())
        } else {
            Err(Error::IncompatibleAlgebras)
        }
    }

    pub fn add(&self, other: &MatrixForm) -> Result<MatrixForm> {
        self.check_compatible(other)?;
        if self.degree != other.degree {
            return Err(Error::InvalidArgument("cannot add forms of different degrees".into()));
        }
        let mut out = self.clone();
        for (k, m) in &other.coeffs {
            out.accumulate(k.clone(), m.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &MatrixForm) -> Result<MatrixForm> {
        self.add(&other.scale(c(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> MatrixForm {
        let mut out = self.clone();
        for m in out.coeffs.values_mut() {
            *m *= s;
        }
        out
    }

    /// Largest entry modulus over all coefficients.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(linalg::max_abs).fold(0.0, f64::max)
    }

    /// Multilinear antisymmetric evaluation on `(ad_{γ_1}, …, ad_{γ_p})`.
    ///
    /// Each traceless `γ = γ^k E_k` is the derivation `ad_γ = -iγ^k ∂_k`.
    pub fn evaluate(&self, gammas: &[CMat]) -> Result<CMat> {
        if gammas.len() != self.degree {
            return Err(Error::Dimension { expected: self.degree, got: gammas.len() });
        }
        let mut rows = Vec::with_capacity(gammas.len());
        for g in gammas {
            let tr = g.trace().norm();
            if tr > 1e-12 * (1.0 + linalg::max_abs(g)) {
                return Err(Error::InvalidDerivation { trace: tr });
            }
            let coords: Vec<Complex64> = self.lie.coords(g).into_iter().map(|z| -I * z).collect();
            rows.push(coords);
        }
        let p = self.degree;
        let mut out = linalg::zeros(self.n());
        for (idx, m) in &self.coeffs {
            let minor = CMat::from_fn(p, p, |i, j| rows[i][idx[j]]);
            let d = linalg::det(&minor);
            if d != c(0.0, 0.0) {
                out += m * d;
            }
        }
        Ok(out)
    }
}

/// Graded product; coefficients multiply as matrices and `θ^I θ^J` is re-sorted.
pub fn wedge(omega: &MatrixForm, eta: &MatrixForm) -> Result<MatrixForm> {
    omega.check_compatible(eta)?;
    let degree = omega.degree + eta.degree;
    let mut out = MatrixForm::zero(&omega.lie, degree);
    if degree > omega.lie.dim() {
        return Ok(out);
    }
    for (i, a) in &omega.coeffs {
        for (j, b) in &eta.coeffs {
            let joined: Vec<usize> = i.iter().chain(j.iter()).copied().collect();
            if let Some((k, sign)) = linalg::sort_with_sign(&joined) {
                out.accumulate(k, (a * b) * c(sign, 0.0));
            }
        }
    }
    Ok(out)
}

/// Koszul differential with `∂_k · a = [iE_k, a]` and `[∂_k, ∂_l] = C^m_{kl} ∂_m`.
pub fn koszul_d(omega: &MatrixForm) -> MatrixForm {
    let lie = &omega.lie;
    let dim = lie.dim();
    let p = omega.degree;
    let mut out = MatrixForm::zero(lie, p + 1);
    if p + 1 > dim || omega.coeffs.is_empty() {
        return out;
    }
    let ie: Vec<CMat> = lie.basis.iter().map(|e| e * I).collect();
    for k in linalg::combinations(dim, p + 1) {
        let mut acc = linalg::zeros(lie.n);
        for i in 0..=p {
            let rest: Vec<usize> = k.iter().enumerate().filter(|&(t, _)| t != i).map(|(_, &v)| v).collect();
            let val = omega.component(&rest);
            if linalg::max_abs(&val) == 0.0 {
                continue;
            }
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += linalg::commutator(&ie[k[i]], &val) * c(sign, 0.0);
        }
        for i in 0..=p {
            for j in i + 1..=p {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let rest: Vec<usize> =
                    k.iter().enumerate().filter(|&(t, _)| t != i && t != j).map(|(_, &v)| v).collect();
                for m in 0..dim {
                    let cm = lie.c(m, k[i], k[j]);
                    if cm == 0.0 {
                        continue;
                    }
                    let mut args = Vec::with_capacity(p);
                    args.push(m);
                    args.extend_from_slice(&rest);
                    let val = omega.component(&args);
                    acc += val * c(sign * cm, 0.0);
                }
            }
        }
        if linalg::max_abs(&acc) != 0.0 {
            out.set(k, acc);
        }
    }
    out
}

/// `iθ = iE_k ⊗ θ^k`, so that `iθ(ad_γ) = γ − tr(γ)/n`.
pub fn canonical_theta(lie: &Arc<LieData>) -> Result<MatrixForm> {
    if lie.n < 2 {
        return Err(Error::NoInnerDerivations);
    }
    let a: Vec<CMat> = lie.basis.iter().map(|e| e * I).collect();
    MatrixForm::one_form(lie, &a)
}

pub fn evaluate(omega: &MatrixForm, gammas: &[CMat]) -> Result<CMat> {
    omega.evaluate(gammas)
}

/// Coefficient-wise adjoint. With real `θ^k` the grading signs of
/// `(ω_p η_q)* = (−1)^{pq} η_q* ω_p*` cancel on each monomial, so
/// `(a ⊗ θ^I)* = a† ⊗ θ^I`.
pub fn involution(omega: &MatrixForm) -> MatrixForm {
    let mut out = omega.clone();
    for m in out.coeffs.values_mut() {
        *m = m.adjoint();
    }
    out
}

/// Seeded random form with unit-normal complex coefficients on every multi-index.
pub fn random_form<R: Rng + ?Sized>(lie: &Arc<LieData>, degree: usize, rng: &mut R) -> MatrixForm {
    let mut f = MatrixForm::zero(lie, degree);
    for k in linalg::combinations(lie.dim(), degree) {
        f.set(k, linalg::random_complex(lie.n, rng));
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::su_basis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lie(n: usize) -> Arc<LieData> {
        su_basis(n).unwrap().shared()
    }

    fn one(n: usize) -> CMat {
        linalg::identity(n)
    }

    /// Independent route to `d′`: generator formulas plus the graded Leibniz rule,
    /// `d′(a θ^I) = d′a ∧ θ^I + a d′θ^I`, with `d′a = -C^m_{kl} a^k E_m ⊗ θ^l`
    /// expanded from `[iE_l, a]` and `d′θ^k = -½ C^k_{lm} θ^l θ^m`.
    fn d_by_generators(omega: &MatrixForm) -> MatrixForm {
        let l = omega.lie().clone();
        let dim = l.dim();
        let mut out = MatrixForm::zero(&l, omega.degree() + 1);
        for (idx, a) in omega.terms() {
            // d′a ∧ θ^I
            for j in 0..dim {
                let da = linalg::commutator(&(&l.basis[j] * I), a);
                let mut full = vec![j];
                full.extend_from_slice(idx);
                out = out.add(&MatrixForm::monomial(&l, da, &full)).unwrap();
            }
            // a · d′θ^I = Σ_t (−1)^t θ^{i_1}⋯d′θ^{i_t}⋯
            for (t, &kt) in idx.iter().enumerate() {
                let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
                for p in 0..dim {
                    for q in 0..dim {
                        let cc = l.c(kt, p, q);
                        if cc == 0.0 {
                            continue;
                        }
                        let mut full: Vec<usize> = idx[..t].to_vec();
                        full.push(p);
                        full.push(q);
                        full.extend_from_slice(&idx[t + 1..]);
                        let term = MatrixForm::monomial(&l, a * c(-0.5 * cc * sign, 0.0), &full);
                        out = out.add(&term).unwrap();
                    }
                }
            }
        }
        out
    }

    #[test]
    fn wedge_of_basic_one_forms() {
        let l = lie(2);
        let t1 = MatrixForm::monomial(&l, one(2), &[0]);
        let t2 = MatrixForm::monomial(&l, one(2), &[1]);
        let w12 = wedge(&t1, &t2).unwrap();
        let w21 = wedge(&t2, &t1).unwrap();
        assert_eq!(w12.get(&[0, 1]).unwrap(), &one(2));
        assert_eq!(w21.get(&[0, 1]).unwrap(), &(-one(2)));
    }

    #[test]
    fn degree_zero_product_is_matrix_product() {
        let l = lie(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = linalg::random_complex(3, &mut rng);
        let b = linalg::random_complex(3, &mut rng);
        let ab = wedge(&MatrixForm::scalar(&l, a.clone()), &MatrixForm::scalar(&l, b.clone())).unwrap();
        assert!(linalg::max_abs(&(ab.coefficient(&[]) - a * b)) < 1e-14);
    }

    #[test]
    fn wedge_rejects_mixed_algebras() {
        let a = MatrixForm::scalar(&lie(2), one(2));
        let b = MatrixForm::scalar(&lie(3), one(3));
        assert_eq!(wedge(&a, &b).unwrap_err(), Error::IncompatibleAlgebras);
    }

    #[test]
    fn wedge_overflowing_degree_is_zero() {
        let l = lie(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_form(&l, 2, &mut rng);
        let g = random_form(&l, 2, &mut rng);
        let w = wedge(&f, &g).unwrap();
        assert_eq!(w.degree(), 4);
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn d_of_unit_vanishes() {
        let l = lie(3);
        assert_eq!(koszul_d(&MatrixForm::scalar(&l, one(3))).max_abs(), 0.0);
    }

    #[test]
    fn d_on_generators() {
        for n in 2..=3 {
            let l = lie(n);
            let dim = l.dim();
            for k in 0..dim {
                // d′E_k = −C^m_{kl} E_m ⊗ θ^l
                let de = koszul_d(&MatrixForm::scalar(&l, l.basis[k].clone()));
                for ll in 0..dim {
                    let mut expect = linalg::zeros(n);
                    for m in 0..dim {
                        expect -= &l.basis[m] * c(l.c(m, k, ll), 0.0);
                    }
                    assert!(linalg::max_abs(&(de.coefficient(&[ll]) - expect)) < 1e-13);
                }
                // d′θ^k = −½ C^k_{lm} θ^l θ^m, i.e. coefficient −C^k_{lm} on l<m
                let dt = koszul_d(&MatrixForm::monomial(&l, one(n), &[k]));
                for ll in 0..dim {
                    for m in ll + 1..dim {
                        let expect = one(n) * c(-l.c(k, ll, m), 0.0);
                        assert!(linalg::max_abs(&(dt.coefficient(&[ll, m]) - expect)) < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn koszul_matches_generator_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=3 {
            let l = lie(n);
            for p in 0..=2 {
                let f = random_form(&l, p, &mut rng);
                let lhs = koszul_d(&f);
                let rhs = d_by_generators(&f);
                let diff = lhs.sub(&rhs).unwrap().max_abs();
                assert!(diff < 1e-11, "n={n} p={p} diff={diff}");
            }
        }
    }

    #[test]
    fn canonical_theta_coefficients_and_evaluation() {
        let l = lie(2);
        let th = canonical_theta(&l).unwrap();
        for k in 0..3 {
            assert_eq!(th.coefficient(&[k]), &l.basis[k] * I);
        }
        let s3 = l.basis[2].clone();
        assert!(linalg::max_abs(&(th.evaluate(&[s3.clone()]).unwrap() - s3)) < 1e-15);
        assert!(matches!(th.evaluate(&[one(2)]), Err(Error::InvalidDerivation { .. })));
        assert!(matches!(canonical_theta(&lie(1)), Err(Error::NoInnerDerivations)));
    }

    #[test]
    fn theta_on_traceless_part() {
        // iθ(ad_γ) = γ − tr(γ)/n; the evaluate API takes the traceless part explicitly
        let l = lie(3);
        let th = canonical_theta(&l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = linalg::random_complex(3, &mut rng);
        let g0 = &g - one(3) * (g.trace() / 3.0);
        assert!(linalg::max_abs(&(th.evaluate(&[g0.clone()]).unwrap() - g0)) < 1e-13);
    }

    #[test]
    fn evaluation_pairs_with_dual_basis() {
        let l = lie(3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let em = linalg::random_complex(3, &mut rng);
        for k in 0..8 {
            let f = MatrixForm::monomial(&l, em.clone(), &[k]);
            // E_k = i·(iE_k)^… : ad_{E_k} = −i ∂_k, so evaluate on iE_k to get ∂_k
            let ik = &l.basis[k] * I;
            assert!(linalg::max_abs(&(f.evaluate(&[ik]).unwrap() - &em)) < 1e-14);
        }
    }

    #[test]
    fn two_form_on_repeated_argument_vanishes() {
        let l = lie(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_form(&l, 2, &mut rng);
        let g = linalg::random_hermitian(2, &mut rng);
        let g0 = &g - one(2) * (g.trace() / 2.0);
        assert!(linalg::max_abs(&f.evaluate(&[g0.clone(), g0]).unwrap()) < 1e-14);
    }

    #[test]
    fn degree_zero_differential_is_commutator_with_theta() {
        let l = lie(3);
        let th = canonical_theta(&l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = linalg::random_complex(3, &mut rng);
        let da = koszul_d(&MatrixForm::scalar(&l, a.clone()));
        let g = linalg::random_hermitian(3, &mut rng);
        let g0 = &g - one(3) * (g.trace() / 3.0);
        let lhs = da.evaluate(&[g0.clone()]).unwrap();
        let rhs = linalg::commutator(&th.evaluate(&[g0]).unwrap(), &a);
        assert!(linalg::max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn involution_is_involutive_and_d_is_real() {
        let l = lie(2);
        let th = canonical_theta(&l).unwrap();
        let back = involution(&involution(&th));
        assert_eq!(back.sub(&th).unwrap().max_abs(), 0.0);
        // (iθ)* = −iθ with anti-Hermitian coefficients
        assert!(involution(&th).add(&th).unwrap().max_abs() < 1e-15);
        for k in 0..3 {
            let e = MatrixForm::scalar(&l, l.basis[k].clone());
            let lhs = involution(&koszul_d(&e));
            let rhs = koszul_d(&involution(&e));
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-14);
        }
        let a = MatrixForm::scalar(&l, CMat::from_row_slice(2, 2, &[c(1., 2.), c(3., 4.), c(5., 6.), c(7., 8.)]));
        assert_eq!(involution(&a).coefficient(&[]), a.coefficient(&[]).adjoint());
    }

    #[test]
    fn maurer_cartan_identity() {
        for n in 2..=4 {
            let th = canonical_theta(&lie(n)).unwrap();
            let r = koszul_d(&th).sub(&wedge(&th, &th).unwrap()).unwrap().max_abs();
            assert!(r <= 1e-12, "n={n} residual {r}");
        }
    }
}
