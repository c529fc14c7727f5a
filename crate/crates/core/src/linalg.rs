//! Small dense complex matrix helpers shared by every module.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn trace(a: &CMat) -> Complex64 {
    a.trace()
}

/// Largest entry modulus.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// `tr(X†X)`.
pub fn frobenius_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `Re tr(A†B)`, the real Frobenius inner product.
pub fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn hermitian_residual(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn anti_hermitian_residual(a: &CMat) -> f64 {
    max_abs(&(a + a.adjoint()))
}

/// `(X − X†)/2`.
pub fn anti_hermitian_part(a: &CMat) -> CMat {
    (a - a.adjoint()) * c(0.5, 0.0)
}

pub fn unitarity_residual(g: &CMat) -> f64 {
    let n = g.nrows();
    max_abs(&(g.adjoint() * g - identity(n)))
}

pub fn random_complex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    CMat::from_fn(n, n, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Random anti-Hermitian matrix with unit-normal real and imaginary parts.
pub fn random_anti_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    anti_hermitian_part(&random_complex(n, rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let a = random_complex(n, rng);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

/// Haar-like random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let z = random_complex(n, rng);
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `exp(i t H)` for Hermitian `H`, through its eigendecomposition.
pub fn exp_i_hermitian(h: &CMat, t: f64) -> CMat {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, t * l)));
    v * d * v.adjoint()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn symmetric_eigenvalues(m: &RMat) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Sort a multi-index, returning the permutation sign; `None` on a repeated entry.
pub fn sort_with_sign(idx: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    // insertion sort, counting transpositions
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some((v, sign))
    }
}

/// All strictly increasing multi-indices of length `p` drawn from `0..dim`.
pub fn combinations(dim: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if p > dim {
        return out;
    }
    let mut cur: Vec<usize> = (0..p).collect();
    loop {
        out.push(cur.clone());
        let mut i = p;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < dim - p + i {
                cur[i] += 1;
                for j in i + 1..p {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Complex determinant of a small square matrix given row-major.
pub fn det(m: &CMat) -> Complex64 {
    if m.nrows() == 0 {
        return c(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sort_sign_counts_transpositions() {
        assert_eq!(sort_with_sign(&[2, 0, 1]), Some((vec![0, 1, 2], 1.0)));
        assert_eq!(sort_with_sign(&[1, 0]), Some((vec![0, 1], -1.0)));
        assert_eq!(sort_with_sign(&[1, 1]), None);
        assert_eq!(sort_with_sign(&[]), Some((vec![], 1.0)));
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
        assert_eq!(combinations(4, 4), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..5 {
            let u = random_unitary(n, &mut rng);
            assert!(unitarity_residual(&u) < 1e-13);
        }
    }

    #[test]
    fn exp_of_pauli_z() {
        let s3 = CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
        let g = exp_i_hermitian(&s3, 0.3);
        assert!((g[(0, 0)] - Complex64::from_polar(1.0, 0.3)).norm() < 1e-15);
        assert!((g[(1, 1)] - Complex64::from_polar(1.0, -0.3)).norm() < 1e-15);
    }
}

/// `[[re, im], …]` rows for JSON output.
pub fn to_pairs(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

/// Inverse of `to_pairs`; rows must be square and of equal length.
pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> Option<CMat> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return None;
    }
    Some(CMat::from_fn(n, n, |i, j| c(rows[i][j][0], rows[i][j][1])))
}
