//! Noncommutative connections on the right module `M = M_n`.
//!
//! A connection is `∇̂_X a = ∇̂^{−iθ}_X a + A(X) a` with `A = A_k ⊗ θ^k`.
//! Hermitian connections have anti-Hermitian `A_k`; gauge transformations act
//! homogeneously, `A_k ↦ g⁻¹ A_k g`.

use crate::error::{Error, Result};
use crate::liealg::LieData;
use crate::linalg::{self, c, CMat, I};
use crate::ncforms::{canonical_theta, MatrixForm};
use std::sync::Arc;

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeGroup {
    Unitary,
    /// `SU(n)`: unitary with determinant 1.
    Special,
}

#[derive(Debug, Clone)]
pub struct MatrixConnection {
    pub lie: Arc<LieData>,
    pub a: Vec<CMat>,
    pub hermitian: bool,
}

impl MatrixConnection {
    pub fn new(lie: &Arc<LieData>, a: Vec<CMat>) -> Result<Self> {
        if a.len() != lie.dim() {
            return Err(Error::Dimension { expected: lie.dim(), got: a.len() });
        }
        if a.iter().any(|m| m.nrows() != lie.n || m.ncols() != lie.n) {
            return Err(Error::InvalidArgument(format!("A_k must be {0}x{0}", lie.n)));
        }
        let hermitian = a.iter().all(|m| linalg::anti_hermitian_residual(m) <= HERMITIAN_TOL);
        Ok(MatrixConnection { lie: lie.clone(), a, hermitian })
    }

    /// `A = 0`, the canonical connection `∇̂^{−iθ}`.
    pub fn zero(lie: &Arc<LieData>) -> Self {
        let a = vec![linalg::zeros(lie.n); lie.dim()];
        MatrixConnection { lie: lie.clone(), a, hermitian: true }
    }

    /// `A_k = iE_k`, i.e. `A = iθ` and `∇̂_X a = X·a`.
    pub fn derivation(lie: &Arc<LieData>) -> Self {
        let a = lie.basis.iter().map(|e| e * I).collect();
        MatrixConnection { lie: lie.clone(), a, hermitian: true }
    }

    pub fn as_form(&self) -> MatrixForm {
        MatrixForm::one_form(&self.lie, &self.a).expect("length checked at construction")
    }

    /// `F_{kl} = [A_k, A_l] − C^m_{kl} A_m` for every ordered pair.
    pub fn curvature_components(&self) -> Vec<Vec<CMat>> {
        let d = self.lie.dim();
        let mut f = vec![vec![linalg::zeros(self.lie.n); d]; d];
        for k in 0..d {
            for l in k + 1..d {
                let mut x = linalg::commutator(&self.a[k], &self.a[l]);
                for m in 0..d {
                    let cm = self.lie.c(m, k, l);
                    if cm != 0.0 {
                        x -= &self.a[m] * c(cm, 0.0);
                    }
                }
                f[l][k] = -&x;
                f[k][l] = x;
            }
        }
        f
    }
}

/// `F = ½ F_{kl} ⊗ θ^k θ^l`, stored as `F_{kl}` on `k < l`.
pub fn curvature(conn: &MatrixConnection) -> MatrixForm {
    let f = conn.curvature_components();
    let d = conn.lie.dim();
    let mut out = MatrixForm::zero(&conn.lie, 2);
    for k in 0..d {
        for l in k + 1..d {
            out = out
                .add(&MatrixForm::monomial(&conn.lie, f[k][l].clone(), &[k, l]))
                .expect("same algebra");
        }
    }
    out
}

pub fn gauge_transform(conn: &MatrixConnection, g: &CMat) -> Result<MatrixConnection> {
    gauge_transform_in(conn, g, GaugeGroup::Unitary)
}

pub fn gauge_transform_in(conn: &MatrixConnection, g: &CMat, group: GaugeGroup) -> Result<MatrixConnection> {
    check_gauge_element(g, conn.lie.n, group)?;
    let ginv = g.adjoint();
    let a = conn.a.iter().map(|m| &ginv * m * g).collect();
    Ok(MatrixConnection { lie: conn.lie.clone(), a, hermitian: conn.hermitian })
}

pub(crate) fn check_gauge_element(g: &CMat, n: usize, group: GaugeGroup) -> Result<()> {
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::Dimension { expected: n, got: g.nrows() });
    }
    let r = linalg::unitarity_residual(g);
    if r > UNITARY_TOL {
        return Err(Error::InvalidGaugeElement { residual: r });
    }
    if group == GaugeGroup::Special {
        let d = (linalg::det(g) - c(1.0, 0.0)).norm();
        if d > UNITARY_TOL {
            return Err(Error::InvalidGaugeElement { residual: d });
        }
    }
    Ok(())
}

/// `S[A] = −(1/8n) Σ_{k,l} tr(F_{kl} F_{kl}) = (1/8n) Σ_{k,l} ‖F_{kl}‖²_F`.
pub fn action(conn: &MatrixConnection) -> Result<f64> {
    if !conn.hermitian {
        return Err(Error::PreconditionViolation("matrix-model action needs anti-Hermitian A_k".into()));
    }
    let f = conn.curvature_components();
    let s: f64 = f.iter().flatten().map(linalg::frobenius_sq).sum();
    Ok(s / (8.0 * conn.lie.n as f64))
}

/// `∇̂_X a = A(X) a − a γ` for `X = ad_γ`.
pub fn covariant_derivative(conn: &MatrixConnection, a: &CMat, gamma: &CMat) -> Result<CMat> {
    let ax = conn.as_form().evaluate(std::slice::from_ref(gamma))?;
    Ok(ax * a - a * gamma)
}

/// `d′F + ω∧F − F∧ω` with `ω = A − iθ`; vanishes identically.
pub fn bianchi_residual(conn: &MatrixConnection) -> Result<f64> {
    let omega = conn.as_form().sub(&canonical_theta(&conn.lie)?)?;
    let f = curvature(conn);
    let lhs = crate::ncforms::koszul_d(&f)
        .add(&crate::ncforms::wedge(&omega, &f)?)?
        .sub(&crate::ncforms::wedge(&f, &omega)?)?;
    Ok(lhs.max_abs())
}

/// Real gradient of `S[A]` with respect to each `A_p` in the `Re tr(G† dA)` pairing.
pub fn action_gradient(conn: &MatrixConnection) -> Vec<CMat> {
    let d = conn.lie.dim();
    let n = conn.lie.n as f64;
    let f = conn.curvature_components();
    let mut g = vec![linalg::zeros(conn.lie.n); d];
    for p in 0..d {
        let mut acc = linalg::zeros(conn.lie.n);
        for l in 0..d {
            acc += linalg::commutator(&f[p][l], &conn.a[l].adjoint()) * c(2.0, 0.0);
        }
        for k in 0..d {
            for l in 0..d {
                let cp = conn.lie.c(p, k, l);
                if cp != 0.0 {
                    acc -= &f[k][l] * c(cp, 0.0);
                }
            }
        }
        g[p] = acc * c(1.0 / (4.0 * n), 0.0);
    }
    g
}
