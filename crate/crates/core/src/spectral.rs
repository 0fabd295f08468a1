//! Spectral embedding and orthogonal alignment.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{max_asymmetry, ObservedMatrix};

const SYMMETRY_TOL: f64 = 1e-12;

/// Top-`d` eigenpairs by magnitude.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Scaled leading eigenvectors `X̃ = U_A S_A^{1/2}` of a data matrix.
///
/// Rows are also kept in a row-major buffer because every moment evaluation
/// walks all rows `x̃_j`.
#[derive(Debug, Clone)]
pub struct Embedding {
    xtilde: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    rows: Vec<f64>,
}

impl Embedding {
    /// Builds an embedding from an explicit factor matrix, e.g. a rotated copy of another one.
    pub fn from_parts(xtilde: DMatrix<f64>, eigenvalues: DVector<f64>) -> Result<Self> {
        if xtilde.ncols() != eigenvalues.len() || xtilde.ncols() == 0 {
            return Err(Error::invalid(format!(
                "embedding has {} columns but {} eigenvalues",
                xtilde.ncols(),
                eigenvalues.len()
            )));
        }
        let (n, d) = xtilde.shape();
        let mut rows = Vec::with_capacity(n * d);
        for j in 0..n {
            rows.extend(xtilde.row(j).iter());
        }
        Ok(Self {
            xtilde,
            eigenvalues,
            rows,
        })
    }

    pub fn n(&self) -> usize {
        self.xtilde.nrows()
    }

    pub fn d(&self) -> usize {
        self.xtilde.ncols()
    }

    pub fn xtilde(&self) -> &DMatrix<f64> {
        &self.xtilde
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        let d = self.d();
        &self.rows[j * d..(j + 1) * d]
    }

    pub fn row_vector(&self, j: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(j))
    }

    /// `U_A`, recovered as `X̃ diag(λ)^{-1/2}`.
    pub fn eigenvectors(&self) -> DMatrix<f64> {
        let mut u = self.xtilde.clone();
        for (k, mut col) in u.column_iter_mut().enumerate() {
            col /= self.eigenvalues[k].sqrt();
        }
        u
    }
}

/// The `d` eigenpairs of largest |λ|, sorted by |λ| descending.
///
/// Uses a full dense decomposition (Householder tridiagonalization followed by
/// implicit symmetric QR). Each eigenvector is signed so its entries sum to a
/// non-negative value, falling back to a positive largest-magnitude entry when
/// the sum vanishes.
pub fn top_eigen(a: &DMatrix<f64>, d: usize) -> Result<EigenPairs> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::invalid(format!("expected a square matrix, got {}x{}", n, a.ncols())));
    }
    if d == 0 || d > n {
        return Err(Error::invalid(format!("rank must satisfy 1 <= d <= n = {n}, got {d}")));
    }
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000).ok_or(Error::NoConvergence {
        context: "symmetric eigendecomposition",
        iterations: 10_000,
        residual: f64::NAN,
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    // Stable tie-break on the value itself keeps the ordering reproducible.
    order.sort_by(|&x, &y| {
        let (lx, ly) = (eig.eigenvalues[x], eig.eigenvalues[y]);
        ly.abs()
            .total_cmp(&lx.abs())
            .then(ly.total_cmp(&lx))
            .then(x.cmp(&y))
    });

    let mut values = DVector::zeros(d);
    let mut vectors = DMatrix::zeros(n, d);
    for (k, &idx) in order.iter().take(d).enumerate() {
        values[k] = eig.eigenvalues[idx];
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let total: f64 = v.iter().sum();
        let flip = if total.abs() > 1e-10 {
            total < 0.0
        } else {
            let imax = v.iamax();
            v[imax] < 0.0
        };
        if flip {
            v.neg_mut();
        }
        vectors.set_column(k, &v);
    }
    Ok(EigenPairs { values, vectors })
}

/// Spectral embedding of rank `d`. Every retained eigenvalue must be positive.
pub fn spectral_embed(observed: &ObservedMatrix, d: usize) -> Result<Embedding> {
    let pairs = top_eigen(observed.matrix(), d)?;
    for (k, &lambda) in pairs.values.iter().enumerate() {
        if lambda <= 0.0 {
            return Err(Error::IndefiniteSpectrum {
                index: k,
                value: lambda,
            });
        }
    }
    let mut xtilde = pairs.vectors;
    for (k, mut col) in xtilde.column_iter_mut().enumerate() {
        col *= pairs.values[k].sqrt();
    }
    Embedding::from_parts(xtilde, pairs.values)
}

/// An orthogonal d × d matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix(pub DMatrix<f64>);

impl AlignmentMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.0
    }
}

/// Orthogonal `W` minimizing `‖xhat W − xref‖_F` (Procrustes via the SVD of `xhatᵀ xref`).
pub fn align(xhat: &DMatrix<f64>, xref: &DMatrix<f64>) -> Result<AlignmentMatrix> {
    if xhat.shape() != xref.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch {:?} vs {:?}",
            xhat.shape(),
            xref.shape()
        )));
    }
    let cross = xhat.transpose() * xref;
    let svd = cross.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::RankDeficient { sigma_min: smin });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    Ok(AlignmentMatrix(u * v_t))
}

/// `min_W ‖xhat W − xref‖_F²` over orthogonal `W`.
pub fn sse(xhat: &DMatrix<f64>, xref: &DMatrix<f64>) -> Result<f64> {
    let w = align(xhat, xref)?;
    Ok((w.apply(xhat) - xref).norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_latent_curve, sample_rdpg};
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, 0);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = r.sample(StandardNormal);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn diagonal_and_rank_one() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let p = top_eigen(&a, 1).unwrap();
        assert!((p.values[0] - 3.0).abs() < 1e-12);
        assert!((p.vectors[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(p.vectors[(1, 0)].abs() < 1e-12);

        let b = DMatrix::from_element(2, 2, 1.0);
        let p = top_eigen(&b, 1).unwrap();
        assert!((p.values[0] - 2.0).abs() < 1e-12);
        let h = 1.0 / 2f64.sqrt();
        assert!((p.vectors[(0, 0)] - h).abs() < 1e-12 && (p.vectors[(1, 0)] - h).abs() < 1e-12);
    }

    #[test]
    fn selects_by_magnitude() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -5.0, 2.0]));
        let p = top_eigen(&a, 2).unwrap();
        assert_eq!(p.values.as_slice(), &[-5.0, 2.0]);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let mut a = DMatrix::from_element(3, 3, 1.0);
        a[(0, 2)] += 1e-9;
        assert!(matches!(top_eigen(&a, 1), Err(Error::NotSymmetric { .. })));
        assert!(top_eigen(&DMatrix::from_element(2, 2, 1.0), 3).is_err());
    }

    #[test]
    fn random_matrix_against_full_decomposition() {
        let a = random_symmetric(8, 21);
        let p = top_eigen(&a, 3).unwrap();
        let norm2 = a.clone().symmetric_eigenvalues().amax();
        // Oracle: the full spectrum sorted by magnitude.
        let mut all: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
        all.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
        for (k, lam) in all.iter().take(3).enumerate() {
            assert!((p.values[k] - lam).abs() < 1e-10);
            let u = p.vectors.column(k);
            let resid = (&a * u - u * p.values[k]).norm();
            assert!(resid <= 1e-8 * norm2, "residual {resid}");
        }
        let gram = p.vectors.transpose() * &p.vectors;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn identity_embedding_is_a_unit_vector() {
        let a = ObservedMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let e = spectral_embed(&a, 1).unwrap();
        let col: Vec<f64> = e.xtilde().iter().copied().collect();
        assert!((col.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_rank_one_recovers_factor() {
        let truth = generate_latent_curve(60).unwrap();
        let a = ObservedMatrix::new(truth.signal()).unwrap();
        let e = spectral_embed(&a, 1).unwrap();
        let diff = (e.xtilde() - &truth.x0).amax().min((e.xtilde() + &truth.x0).amax());
        assert!(diff < 1e-8, "diff {diff}");
        let u = e.eigenvectors();
        assert!(((u.transpose() * &u)[(0, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reconstruction_matches_retained_spectrum() {
        let mut a = random_symmetric(10, 3);
        a += DMatrix::from_element(10, 10, 3.0);
        let obs = ObservedMatrix::new(a.clone()).unwrap();
        let e = spectral_embed(&obs, 1).unwrap();
        let p = top_eigen(&a, 1).unwrap();
        let u = p.vectors.column(0);
        let rebuilt = u * u.transpose() * p.values[0];
        assert!((e.xtilde() * e.xtilde().transpose() - rebuilt).amax() < 1e-8);
    }

    #[test]
    fn indefinite_spectrum_is_an_error() {
        let a = ObservedMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![-4.0, 1.0])))
            .unwrap();
        match spectral_embed(&a, 1) {
            Err(Error::IndefiniteSpectrum { index: 0, value }) => assert_eq!(value, -4.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embedding_error_shrinks_with_n() {
        let err = |n: usize| {
            let truth = generate_latent_curve(n).unwrap();
            let a = sample_rdpg(&truth, &mut rng::stream(4, n as u64)).unwrap();
            let e = spectral_embed(&a, 1).unwrap();
            let w = align(e.xtilde(), &truth.x0).unwrap();
            (w.apply(e.xtilde()) - &truth.x0).amax()
        };
        let small = err(100);
        let large = err(1600);
        assert!(large < small, "{large} !< {small}");
        assert!(large < 0.15);
    }

    #[test]
    fn align_trivial_cases() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, -0.5]);
        assert_eq!(align(&x, &x).unwrap().0, DMatrix::identity(1, 1));
        assert_eq!(align(&(-&x), &x).unwrap().0[(0, 0)], -1.0);
        assert_eq!(sse(&x, &x).unwrap(), 0.0);
        assert_eq!(sse(&(-&x), &x).unwrap(), 0.0);
        assert!(matches!(
            align(&x, &DMatrix::zeros(3, 1)),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn align_undoes_rotation() {
        let mut r = rng::stream(8, 0);
        let xref = DMatrix::from_fn(12, 2, |_, _| r.sample::<f64, _>(StandardNormal));
        let rot = rotation(1.234);
        let w = align(&(&xref * &rot), &xref).unwrap();
        assert!((w.matrix() - rot.transpose()).amax() < 1e-10);
        let wtw = w.matrix().transpose() * w.matrix();
        assert!((wtw - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn sse_matches_angle_grid_oracle() {
        let mut r = rng::stream(10, 0);
        let xhat = DMatrix::from_fn(9, 2, |_, _| r.sample::<f64, _>(StandardNormal));
        let xref = DMatrix::from_fn(9, 2, |_, _| r.sample::<f64, _>(StandardNormal));
        let got = sse(&xhat, &xref).unwrap();
        // Brute force over rotations and reflections, then golden-section refine.
        let eval = |theta: f64, reflect: bool| {
            let mut q = rotation(theta);
            if reflect {
                q *= DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
            }
            (&xhat * q - &xref).norm_squared()
        };
        let mut best = f64::INFINITY;
        for reflect in [false, true] {
            let steps = 20_000;
            let mut arg = 0.0;
            let mut val = f64::INFINITY;
            for k in 0..steps {
                let th = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
                let v = eval(th, reflect);
                if v < val {
                    val = v;
                    arg = th;
                }
            }
            let h = 2.0 * std::f64::consts::PI / steps as f64;
            let (mut lo, mut hi) = (arg - h, arg + h);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..100 {
                let a = hi - g * (hi - lo);
                let b = lo + g * (hi - lo);
                if eval(a, reflect) < eval(b, reflect) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            best = best.min(eval(0.5 * (lo + hi), reflect));
        }
        assert!((got - best).abs() < 1e-6, "{got} vs {best}");
    }
}
