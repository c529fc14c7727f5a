//! Hermitian traceless bases of `sl(n)` and their real structure constants.
//!
//! Convention: `[E_k, E_l] = -i C^m_{kl} E_m`, with the generalized Gell-Mann
//! basis normalized as `tr(E_k E_l) = 2 δ_{kl}`. For `n = 2` the basis is the
//! Pauli matrices and `C^m_{kl} = -2 ε_{klm}`.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, RMat, I};
use crate::report::{Check, Report};
use num_complex::Complex64;
use std::sync::Arc;

pub const LIE_TOL: f64 = 1e-12;
const CLOSURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LieData {
    pub n: usize,
    pub basis: Vec<CMat>,
    /// `C^m_{kl}` stored at `[(m * dim + k) * dim + l]`.
    c: Vec<f64>,
    pub trace_form: RMat,
}

impl LieData {
    /// Assemble from an explicit basis, computing `C` and the trace form.
    pub fn from_basis(n: usize, basis: Vec<CMat>) -> Result<Self> {
        if basis.iter().any(|e| e.nrows() != n || e.ncols() != n) {
            return Err(Error::InvalidArgument(format!("basis matrices must be {n}x{n}")));
        }
        let trace_form = trace_form(&basis);
        let c = structure_constants(&basis)?;
        Ok(LieData { n, basis, c, trace_form })
    }

    /// Assemble with a caller-provided structure-constant table (used for fault injection).
    pub fn with_structure_constants(mut self, c: Vec<f64>) -> Result<Self> {
        let d = self.dim();
        if c.len() != d * d * d {
            return Err(Error::Dimension { expected: d * d * d, got: c.len() });
        }
        self.c = c;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    #[inline]
    pub fn c(&self, m: usize, k: usize, l: usize) -> f64 {
        let d = self.dim();
        self.c[(m * d + k) * d + l]
    }

    pub fn structure_table(&self) -> &[f64] {
        &self.c
    }

    /// Overwrite `C^m_{kl}` and `C^m_{lk} = -C^m_{kl}` together.
    pub fn set_c(&mut self, m: usize, k: usize, l: usize, value: f64) {
        let d = self.dim();
        self.c[(m * d + k) * d + l] = value;
        self.c[(m * d + l) * d + k] = -value;
    }

    /// Real-coefficient bracket `[γ, η]^m = C^m_{kl} γ^k η^l` on the real form spanned by `iE_k`.
    pub fn bracket(&self, gamma: &[f64], eta: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (m, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..d {
                if gamma[k] == 0.0 {
                    continue;
                }
                for l in 0..d {
                    s += self.c(m, k, l) * gamma[k] * eta[l];
                }
            }
            *o = s;
        }
        out
    }

    /// `ad_γ` as a real `dim × dim` matrix: `(ad_γ)^m_l = C^m_{kl} γ^k`.
    pub fn ad_matrix(&self, gamma: &[f64]) -> RMat {
        let d = self.dim();
        RMat::from_fn(d, d, |m, l| (0..d).map(|k| self.c(m, k, l) * gamma[k]).sum())
    }

    /// Complex coordinates of `x` in the `E_k` basis (traceless part only).
    pub fn coords(&self, x: &CMat) -> Vec<Complex64> {
        let d = self.dim();
        let rhs: Vec<Complex64> = self.basis.iter().map(|e| (e * x).trace()).collect();
        if is_orthonormal_2(&self.trace_form) {
            return rhs.into_iter().map(|z| z * 0.5).collect();
        }
        let g = self.trace_form.map(|v| c(v, 0.0));
        let b = nalgebra::DVector::from_vec(rhs);
        let sol = g.lu().solve(&b).unwrap_or_else(|| nalgebra::DVector::zeros(d));
        sol.iter().copied().collect()
    }

    /// Real coordinates of an anti-Hermitian traceless matrix in the `iE_k` basis.
    pub fn anti_hermitian_coords(&self, x: &CMat) -> Vec<f64> {
        // x = y^k (i E_k)  =>  coords_E(x) = i y
        self.coords(x).into_iter().map(|z| z.im).collect()
    }

    /// `Σ_k y^k (i E_k)`.
    pub fn from_anti_hermitian_coords(&self, y: &[f64]) -> CMat {
        let mut out = linalg::zeros(self.n);
        for (e, &v) in self.basis.iter().zip(y) {
            if v != 0.0 {
                out += e * (I * v);
            }
        }
        out
    }

    pub fn from_coords(&self, z: &[Complex64]) -> CMat {
        let mut out = linalg::zeros(self.n);
        for (e, &v) in self.basis.iter().zip(z) {
            out += e * v;
        }
        out
    }

    pub fn shared(self) -> Arc<LieData> {
        Arc::new(self)
    }

    pub fn same_algebra(&self, other: &LieData) -> bool {
        std::ptr::eq(self, other) || (self.n == other.n && self.c == other.c)
    }
}

fn is_orthonormal_2(g: &RMat) -> bool {
    let d = g.nrows();
    (0..d).all(|i| (0..d).all(|j| (g[(i, j)] - if i == j { 2.0 } else { 0.0 }).abs() <= 1e-14))
}

fn trace_form(basis: &[CMat]) -> RMat {
    let d = basis.len();
    RMat::from_fn(d, d, |k, l| (&basis[k] * &basis[l]).trace().re)
}

/// Generalized Gell-Mann basis of `su(n)` with `tr(E_k E_l) = 2 δ_{kl}`.
pub fn su_basis(n: usize) -> Result<LieData> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    LieData::from_basis(n, gell_mann(n))
}

fn gell_mann(n: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(n * n - 1);
    for k in 1..n {
        for j in 0..k {
            let mut s = linalg::zeros(n);
            s[(j, k)] = c(1.0, 0.0);
            s[(k, j)] = c(1.0, 0.0);
            out.push(s);
            let mut a = linalg::zeros(n);
            a[(j, k)] = c(0.0, -1.0);
            a[(k, j)] = c(0.0, 1.0);
            out.push(a);
        }
        let norm = (2.0 / (k as f64 * (k as f64 + 1.0))).sqrt();
        let mut d = linalg::zeros(n);
        for j in 0..k {
            d[(j, j)] = c(norm, 0.0);
        }
        d[(k, k)] = c(-(k as f64) * norm, 0.0);
        out.push(d);
    }
    out
}

/// Solve `[E_k, E_l] = -i C^m_{kl} E_m` for the real table `C`.
///
/// Orthonormal (`tr(E_k E_l) = 2δ`) bases use the trace projection
/// `C^m_{kl} = (i/2) tr(E_m [E_k, E_l])`; other bases go through the Gram solve.
pub fn structure_constants(basis: &[CMat]) -> Result<Vec<f64>> {
    let d = basis.len();
    let mut table = vec![0.0; d * d * d];
    if d == 0 {
        return Ok(table);
    }
    let gram = trace_form(basis);
    let orthonormal = is_orthonormal_2(&gram);
    let lu = gram.clone().lu();
    if !orthonormal && lu.determinant().abs() < 1e-300 {
        return Err(Error::InvalidArgument("basis is linearly dependent".into()));
    }
    let mut worst = 0.0_f64;
    for k in 0..d {
        for l in k + 1..d {
            // i[E_k, E_l] = C^m E_m is Hermitian
            let x = linalg::commutator(&basis[k], &basis[l]) * I;
            let proj: Vec<Complex64> = basis.iter().map(|e| (e * &x).trace()).collect();
            let imag = proj.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()));
            let coeffs: Vec<f64> = if orthonormal {
                proj.iter().map(|z| z.re * 0.5).collect()
            } else {
                let b = nalgebra::DVector::from_iterator(d, proj.iter().map(|z| z.re));
                lu.solve(&b).expect("nonsingular gram").iter().copied().collect()
            };
            let mut rebuilt = linalg::zeros(basis[0].nrows());
            for (e, &v) in basis.iter().zip(&coeffs) {
                rebuilt += e * c(v, 0.0);
            }
            let residual = linalg::max_abs(&(&x - rebuilt));
            worst = worst.max(residual).max(if imag > LIE_TOL { imag } else { 0.0 });
            for (m, &v) in coeffs.iter().enumerate() {
                table[(m * d + k) * d + l] = v;
                table[(m * d + l) * d + k] = -v;
            }
        }
    }
    if worst > CLOSURE_TOL {
        return Err(Error::NotALieBasis { residual: worst });
    }
    Ok(table)
}

/// Max residuals of every `LieData` invariant; passes iff all are within `1e-12`.
pub fn validate_lie_data(d: &LieData) -> Report {
    let mut rep = Report::new();
    let dim = d.dim();
    if dim == 0 {
        rep.push(Check::skipped("lie.hermitian", "empty algebra"));
        rep.push(Check::skipped("lie.jacobi", "empty algebra"));
        return rep;
    }
    let herm = d.basis.iter().map(linalg::hermitian_residual).fold(0.0, f64::max);
    let trace = d.basis.iter().map(|e| e.trace().norm()).fold(0.0, f64::max);
    rep.push(Check::at_most("lie.hermitian", herm, LIE_TOL));
    rep.push(Check::at_most("lie.traceless", trace, LIE_TOL));

    let min_eig = linalg::symmetric_eigenvalues(&d.trace_form).first().copied().unwrap_or(0.0);
    let independent = if min_eig > 1e-10 { 0.0 } else { 1.0 / min_eig.abs().max(1e-300) };
    rep.push(
        Check::at_most("lie.independence", independent, LIE_TOL)
            .with_note(format!("min gram eigenvalue {min_eig:.6e}")),
    );

    let mut anti = 0.0_f64;
    for m in 0..dim {
        for k in 0..dim {
            for l in 0..dim {
                anti = anti.max((d.c(m, k, l) + d.c(m, l, k)).abs());
            }
        }
    }
    rep.push(Check::at_most("lie.antisymmetry", anti, 0.0));

    let mut comm = 0.0_f64;
    for k in 0..dim {
        for l in 0..dim {
            let lhs = linalg::commutator(&d.basis[k], &d.basis[l]);
            let mut rhs = linalg::zeros(d.n);
            for m in 0..dim {
                rhs += &d.basis[m] * c(0.0, -d.c(m, k, l));
            }
            comm = comm.max(linalg::max_abs(&(lhs - rhs)));
        }
    }
    rep.push(Check::at_most("lie.commutator", comm, LIE_TOL));
    rep.push(Check::at_most("lie.jacobi", jacobi_residual(d), LIE_TOL));
    rep
}

/// `max |Σ_p (C^p_{kl} C^q_{pm} + C^p_{lm} C^q_{pk} + C^p_{mk} C^q_{pl})|`.
pub fn jacobi_residual(d: &LieData) -> f64 {
    let dim = d.dim();
    let mut worst = 0.0_f64;
    for k in 0..dim {
        for l in 0..dim {
            for m in 0..dim {
                for q in 0..dim {
                    let mut s = 0.0;
                    for p in 0..dim {
                        s += d.c(p, k, l) * d.c(q, p, m)
                            + d.c(p, l, m) * d.c(q, p, k)
                            + d.c(p, m, k) * d.c(q, p, l);
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli() -> [CMat; 3] {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        [
            CMat::from_row_slice(2, 2, &[z, o, o, z]),
            CMat::from_row_slice(2, 2, &[z, c(0.0, -1.0), c(0.0, 1.0), z]),
            CMat::from_row_slice(2, 2, &[o, z, z, -o]),
        ]
    }

    fn levi_civita(k: usize, l: usize, m: usize) -> f64 {
        match (k, l, m) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
            _ => 0.0,
        }
    }

    #[test]
    fn n1_is_empty() {
        let d = su_basis(1).unwrap();
        assert_eq!(d.dim(), 0);
        assert!(d.structure_table().is_empty());
        assert!(validate_lie_data(&d).passed());
    }

    #[test]
    fn n0_is_rejected() {
        assert!(matches!(su_basis(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn su2_is_pauli_with_minus_two_epsilon() {
        let d = su_basis(2).unwrap();
        for (e, s) in d.basis.iter().zip(pauli().iter()) {
            assert_eq!(e, s);
        }
        // [σ1, σ2] = 2iσ3 = -i C^3_{12} σ3  =>  C^3_{12} = -2
        assert_eq!(d.c(2, 0, 1), -2.0);
        for k in 0..3 {
            for l in 0..3 {
                for m in 0..3 {
                    assert!((d.c(m, k, l) + 2.0 * levi_civita(k, l, m)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn su3_gell_mann() {
        let d = su_basis(3).unwrap();
        assert_eq!(d.dim(), 8);
        let two = RMat::identity(8, 8) * 2.0;
        assert!((&d.trace_form - two).amax() < 1e-15);
        // [λ1, λ2] = 2iλ3
        assert!((d.c(2, 0, 1) + 2.0).abs() < 1e-15);
        assert!(validate_lie_data(&d).passed());
    }

    #[test]
    fn diagonal_vanishes_and_antisymmetry_is_exact() {
        for n in 2..=4 {
            let d = su_basis(n).unwrap();
            for m in 0..d.dim() {
                for k in 0..d.dim() {
                    assert_eq!(d.c(m, k, k), 0.0);
                    for l in 0..d.dim() {
                        assert_eq!(d.c(m, k, l), -d.c(m, l, k));
                    }
                }
            }
        }
    }

    #[test]
    fn validator_passes_up_to_n4() {
        for n in 1..=4 {
            let d = su_basis(n).unwrap();
            let rep = validate_lie_data(&d);
            assert!(rep.passed(), "n={n}: {:?}", rep.failures().collect::<Vec<_>>());
            assert!(jacobi_residual(&d) <= 1e-12);
        }
        let rep = validate_lie_data(&su_basis(2).unwrap());
        for ch in &rep.checks {
            assert!(ch.residual <= 1e-14, "{}", ch.name);
        }
    }

    #[test]
    fn flipped_constant_is_detected() {
        let mut d = su_basis(2).unwrap();
        d.set_c(2, 0, 1, 2.0);
        let rep = validate_lie_data(&d);
        assert!(!rep.passed());
        let comm = rep.residual("lie.commutator");
        assert!((comm - 4.0).abs() < 1e-12, "commutator residual {comm}");
        // every 3-dimensional table of the form ε_{klm} λ_m satisfies Jacobi
        assert!(rep.residual("lie.jacobi") < 1e-12);

        let mut d3 = su_basis(3).unwrap();
        let v = d3.c(2, 0, 1);
        d3.set_c(2, 0, 1, -v);
        let rep = validate_lie_data(&d3);
        assert!(rep.residual("lie.jacobi") > 1.0);
        assert!((rep.residual("lie.commutator") - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_orthonormal_basis_uses_gram_solve() {
        let p = pauli();
        let basis = vec![p[0].clone() * c(2.0, 0.0), &p[0] + &p[1], p[2].clone()];
        let d = LieData::from_basis(2, basis).unwrap();
        assert!(validate_lie_data(&d).passed());
    }

    #[test]
    fn non_closed_basis_rejected() {
        // {σ1, σ2} alone does not close
        let p = pauli();
        let err = structure_constants(&[p[0].clone(), p[1].clone()]).unwrap_err();
        assert!(matches!(err, Error::NotALieBasis { .. }));
    }

    #[test]
    fn anti_hermitian_coordinates_round_trip() {
        let d = su_basis(3).unwrap();
        let y: Vec<f64> = (0..8).map(|k| 0.1 * k as f64 - 0.3).collect();
        let x = d.from_anti_hermitian_coords(&y);
        let back = d.anti_hermitian_coords(&x);
        for (a, b) in y.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn real_bracket_matches_matrix_commutator() {
        let d = su_basis(3).unwrap();
        let g: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
        let h: Vec<f64> = (0..8).map(|k| (k as f64 * 0.7).cos()).collect();
        let lhs = d.from_anti_hermitian_coords(&d.bracket(&g, &h));
        let rhs = linalg::commutator(&d.from_anti_hermitian_coords(&g), &d.from_anti_hermitian_coords(&h));
        assert!(linalg::max_abs(&(lhs - rhs)) < 1e-13);
    }
}
