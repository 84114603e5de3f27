//! Numerical kernels shared by the samplers and statistics: Householder QR,
//! rotation-invariant orthonormal frames, residual projectors, symmetric PSD
//! square roots, and least squares.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Relative threshold on the QR diagonal below which a column is declared
/// linearly dependent on its predecessors.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// An n x d matrix with orthonormal columns.
#[derive(Debug, Clone)]
pub struct OrthonormalFrame {
    columns: DMatrix<f64>,
}

impl OrthonormalFrame {
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.columns
    }
}

/// Householder QR factorization of an m x k matrix (m >= k not required).
///
/// Reflectors are kept explicitly so the implicit full m x m Q can be applied
/// to arbitrary vectors; `r` holds the upper-triangular factor.
pub(crate) struct HouseholderQr {
    m: usize,
    k: usize,
    reflectors: Vec<Option<(DVector<f64>, f64)>>,
    r: DMatrix<f64>,
}

impl HouseholderQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, k) = a.shape();
        let mut r = a.clone();
        let steps = m.min(k);
        let mut reflectors = Vec::with_capacity(steps);
        for j in 0..steps {
            let mut v = DVector::from_fn(m - j, |i, _| r[(j + i, j)]);
            let norm = v.norm();
            if norm == 0.0 {
                reflectors.push(None);
                continue;
            }
            // Stable sign choice: v = x + sign(x0)*||x||*e1 never cancels.
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let beta = 2.0 / v.norm_squared();
            for c in j..k {
                let mut dot = 0.0;
                for i in j..m {
                    dot += v[i - j] * r[(i, c)];
                }
                let scale = beta * dot;
                for i in j..m {
                    r[(i, c)] -= scale * v[i - j];
                }
            }
            r[(j, j)] = alpha;
            for i in (j + 1)..m {
                r[(i, j)] = 0.0;
            }
            reflectors.push(Some((v, beta)));
        }
        Self { m, k, reflectors, r }
    }

    pub fn r_diag(&self, j: usize) -> f64 {
        self.r[(j, j)]
    }

    /// Indices of columns whose diagonal entry falls below the relative rank
    /// tolerance; empty means full column rank.
    pub fn deficient_columns(&self) -> Vec<usize> {
        let steps = self.m.min(self.k);
        let max_diag = (0..steps)
            .map(|j| self.r_diag(j).abs())
            .fold(0.0_f64, f64::max);
        let tol = RANK_TOL * max_diag;
        let mut out: Vec<usize> = (0..steps)
            .filter(|&j| self.r_diag(j).abs() <= tol)
            .collect();
        // Columns beyond the row count can never be independent.
        out.extend(steps..self.k);
        out
    }

    /// y <- Q^T y.
    pub fn apply_q_transpose(&self, y: &mut DVector<f64>) {
        for (j, refl) in self.reflectors.iter().enumerate() {
            if let Some((v, beta)) = refl {
                let mut dot = 0.0;
                for i in j..self.m {
                    dot += v[i - j] * y[i];
                }
                let scale = beta * dot;
                for i in j..self.m {
                    y[i] -= scale * v[i - j];
                }
            }
        }
    }

    /// y <- Q y.
    pub fn apply_q(&self, y: &mut DVector<f64>) {
        for (j, refl) in self.reflectors.iter().enumerate().rev() {
            if let Some((v, beta)) = refl {
                let mut dot = 0.0;
                for i in j..self.m {
                    dot += v[i - j] * y[i];
                }
                let scale = beta * dot;
                for i in j..self.m {
                    y[i] -= scale * v[i - j];
                }
            }
        }
    }

    /// First `d` columns of the implicit full Q (d <= m).
    pub fn q_columns(&self, d: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.m, d);
        for c in 0..d {
            let mut e = DVector::zeros(self.m);
            e[c] = 1.0;
            self.apply_q(&mut e);
            q.set_column(c, &e);
        }
        q
    }

    /// Solve R[0..k, 0..k] x = b[0..k] by back-substitution. Caller must have
    /// checked for rank deficiency.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let k = self.k;
        let mut x = DVector::zeros(k);
        for j in (0..k).rev() {
            let mut s = b[j];
            for c in (j + 1)..k {
                s -= self.r[(j, c)] * x[c];
            }
            x[j] = s / self.r[(j, j)];
        }
        x
    }
}

fn col_labels(names: Option<&[String]>, indices: &[usize]) -> Vec<String> {
    indices
        .iter()
        .map(|&j| match names {
            Some(ns) if j < ns.len() => ns[j].clone(),
            _ => format!("#{}", j + 1),
        })
        .collect()
}

/// Draw an orthonormal n x d frame from the rotation-invariant (Haar)
/// distribution: QR of a standard normal matrix with the triangular factor's
/// diagonal forced positive.
pub fn sample_haar_frame<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Result<OrthonormalFrame> {
    if d == 0 || d > n {
        return Err(Error::InvalidDimension(format!(
            "frame dimension d = {d} must satisfy 1 <= d <= n = {n}"
        )));
    }
    let g = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    let qr = HouseholderQr::new(&g);
    let mut q = qr.q_columns(d);
    for j in 0..d {
        if qr.r_diag(j) < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(OrthonormalFrame { columns: q })
}

/// Orthonormal basis of the orthogonal complement of a design's column span,
/// stored as the rows of an (n - s) x n matrix.
#[derive(Debug, Clone)]
pub struct ResidualProjector {
    basis: DMatrix<f64>,
    source_rank: usize,
}

impl ResidualProjector {
    /// The (n - s) x n basis matrix whose rows are orthonormal.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Number of projected-out columns s.
    pub fn source_rank(&self) -> usize {
        self.source_rank
    }

    /// Dimension n - s of the residual space.
    pub fn residual_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// P_R * m, mapping n-row data into residual coordinates.
    pub fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * m
    }

    pub fn project_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * v
    }

    /// P_R^T * m, lifting residual coordinates back to n rows.
    pub fn lift(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.basis.transpose() * m
    }
}

/// Build the residual projector for the columns of `xs`.
pub fn residual_projector(xs: &DataMatrix) -> Result<ResidualProjector> {
    residual_projector_raw(xs.values(), Some(xs.col_names()))
}

pub(crate) fn residual_projector_raw(
    xs: &DMatrix<f64>,
    names: Option<&[String]>,
) -> Result<ResidualProjector> {
    let (n, s) = xs.shape();
    if s == 0 {
        return Ok(ResidualProjector {
            basis: DMatrix::identity(n, n),
            source_rank: 0,
        });
    }
    if n <= s {
        return Err(Error::InvalidDimension(format!(
            "residual projector needs n > s, got n = {n}, s = {s}"
        )));
    }
    let qr = HouseholderQr::new(xs);
    let deficient = qr.deficient_columns();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient {
            columns: col_labels(names, &deficient),
        });
    }
    let q = qr.q_columns(n);
    let basis = q.columns(s, n - s).transpose();
    Ok(ResidualProjector {
        basis,
        source_rank: s,
    })
}

/// Symmetric square root of a positive semidefinite matrix. Eigenvalues in
/// [-tol, 0) are clamped to zero; materially negative ones are an error.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::InvalidDimension(format!(
            "psd_sqrt needs a square matrix, got {n}x{m}"
        )));
    }
    let amax = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let sym_tol = 1e-10 * amax.max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > sym_tol {
                return Err(Error::DegenerateInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let clamp_tol = 1e-10 * lam_max;
    let lam_min = eig.eigenvalues.min();
    if lam_min < -clamp_tol {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: lam_min,
        });
    }
    let sqrt_vals = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(0.0).sqrt());
    let b = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    Ok((&b + b.transpose()) * 0.5)
}

/// Ordinary least squares output.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residual: DVector<f64>,
}

/// Least squares of `response` on the columns of `design` (no implicit
/// intercept), with column names in rank-deficiency errors.
pub fn least_squares(design: &DataMatrix, response: &DVector<f64>) -> Result<LeastSquaresFit> {
    least_squares_raw(design.values(), response, Some(design.col_names()))
}

pub(crate) fn least_squares_raw(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    names: Option<&[String]>,
) -> Result<LeastSquaresFit> {
    let (n, k) = design.shape();
    if response.len() != n {
        return Err(Error::InvalidDimension(format!(
            "design has {n} rows but response has {} entries",
            response.len()
        )));
    }
    if k == 0 {
        return Ok(LeastSquaresFit {
            coefficients: DVector::zeros(0),
            fitted: DVector::zeros(n),
            residual: response.clone(),
        });
    }
    if k > n {
        return Err(Error::InvalidDimension(format!(
            "design has more columns ({k}) than rows ({n})"
        )));
    }
    let qr = HouseholderQr::new(design);
    let deficient = qr.deficient_columns();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient {
            columns: col_labels(names, &deficient),
        });
    }
    let mut qty = response.clone();
    qr.apply_q_transpose(&mut qty);
    let coefficients = qr.solve_upper(&qty);
    // Fitted values through Q so the residual is orthogonal to the column
    // span to machine precision even for ill-conditioned designs.
    let mut head = qty;
    for i in k..n {
        head[i] = 0.0;
    }
    qr.apply_q(&mut head);
    let fitted = head;
    let residual = response - &fitted;
    Ok(LeastSquaresFit {
        coefficients,
        fitted,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use approx::assert_relative_eq;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn haar_frame_is_orthonormal() {
        let mut rng = substream(11, Domain::MvnCopy, 0);
        for &(n, d) in &[(3usize, 3usize), (10, 4), (7, 1)] {
            let u = sample_haar_frame(&mut rng, n, d).unwrap();
            let gram = u.columns().transpose() * u.columns();
            assert!(max_abs(&(gram - DMatrix::identity(d, d))) <= 1e-10);
        }
    }

    #[test]
    fn haar_frame_rejects_bad_dims() {
        let mut rng = substream(1, Domain::MvnCopy, 0);
        assert!(sample_haar_frame(&mut rng, 3, 4).is_err());
        assert!(sample_haar_frame(&mut rng, 3, 0).is_err());
    }

    #[test]
    fn haar_on_o1_is_the_sign_measure() {
        // O(1) = {+1, -1}; chi-square on 1000 draws against fifty-fifty.
        let mut rng = substream(23, Domain::MvnCopy, 1);
        let mut plus = 0usize;
        let n = 1000;
        for _ in 0..n {
            let u = sample_haar_frame(&mut rng, 1, 1).unwrap();
            let v = u.columns()[(0, 0)];
            assert!((v.abs() - 1.0).abs() <= 1e-12);
            if v > 0.0 {
                plus += 1;
            }
        }
        let e = n as f64 / 2.0;
        let chi2 = (plus as f64 - e).powi(2) / e + ((n - plus) as f64 - e).powi(2) / e;
        // df = 1; critical value at p = 0.001 is 10.83.
        assert!(chi2 < 10.83, "chi2 = {chi2}, plus = {plus}");
    }

    #[test]
    fn haar_frame_is_rotation_invariant() {
        // Entry-wise distribution of B*U matches that of U for a fixed
        // rotation B: two-sample KS on U11 over 5000 draws.
        let n = 5;
        let d = 2;
        let reps = 5000;
        let mut rng_b = substream(37, Domain::MvnCopy, 2);
        let b = sample_haar_frame(&mut rng_b, n, n).unwrap();

        let mut rng = substream(37, Domain::MvnCopy, 3);
        let mut raw = Vec::with_capacity(reps);
        let mut rotated = Vec::with_capacity(reps);
        for _ in 0..reps {
            let u = sample_haar_frame(&mut rng, n, d).unwrap();
            raw.push(u.columns()[(0, 0)]);
            let bu = b.columns() * u.columns();
            let u2 = sample_haar_frame(&mut rng, n, d).unwrap();
            let _ = u2; // independent second sample comes from the rotation
            rotated.push(bu[(0, 0)]);
        }
        let (_, p) = crate::diagnostics::two_sample_ks(&raw, &rotated);
        assert!(p > 0.001, "KS p-value {p}");
    }

    #[test]
    fn residual_projector_axis_aligned() {
        // X_S = [1, 0]^T: complement is the second axis.
        let xs = DataMatrix::from_matrix(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let proj = residual_projector(&xs).unwrap();
        let b = proj.basis();
        assert_eq!(b.shape(), (1, 2));
        assert!(b[(0, 0)].abs() <= 1e-12);
        assert!((b[(0, 1)].abs() - 1.0).abs() <= 1e-12);
        let ptp = b.transpose() * b;
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(max_abs(&(ptp - expect)) <= 1e-12);
    }

    #[test]
    fn residual_projector_centering() {
        // Ones column: P_R^T P_R = I - J/n.
        let ones = DataMatrix::new(DMatrix::from_element(3, 1, 1.0), vec!["icpt".into()]).unwrap();
        let proj = residual_projector(&ones).unwrap();
        let ptp = proj.basis().transpose() * proj.basis();
        let expect = DMatrix::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert!(max_abs(&(ptp - expect)) <= 1e-10);
    }

    #[test]
    fn residual_projector_matches_hat_matrix_oracle() {
        // Independent oracle: hat matrix from explicit normal equations.
        let mut rng = substream(5, Domain::MvnCopy, 4);
        let xs_m = DMatrix::from_fn(10, 4, |_, _| StandardNormal.sample(&mut rng));
        let xs = DataMatrix::from_matrix(xs_m.clone()).unwrap();
        let proj = residual_projector(&xs).unwrap();

        let ppt = proj.basis() * proj.basis().transpose();
        assert!(max_abs(&(ppt - DMatrix::identity(6, 6))) <= 1e-8);

        let hat = &xs_m * (xs_m.transpose() * &xs_m).try_inverse().unwrap() * xs_m.transpose();
        let ptp = proj.basis().transpose() * proj.basis();
        assert!(max_abs(&(ptp + hat - DMatrix::identity(10, 10))) <= 1e-8);

        // P_R * X_S = 0.
        assert!(max_abs(&proj.project(&xs_m)) <= 1e-8 * max_abs(&xs_m));
    }

    #[test]
    fn residual_projector_errors() {
        // Duplicate column -> rank deficiency naming the offender.
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let xs = DataMatrix::new(m, vec!["a".into(), "b".into()]).unwrap();
        match residual_projector(&xs) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["b".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        // n <= s.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let xs = DataMatrix::from_matrix(m).unwrap();
        assert!(matches!(
            residual_projector(&xs),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn psd_sqrt_diagonal_and_identity() {
        let b = psd_sqrt(&DMatrix::identity(4, 4)).unwrap();
        assert!(max_abs(&(b.clone() - DMatrix::identity(4, 4))) <= 1e-12);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let b = psd_sqrt(&a).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!(max_abs(&(b - expect)) <= 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs_eigen_oracle() {
        // A = V^T D V for a random orthogonal V and D = diag(1, 2, 3).
        let mut rng = substream(9, Domain::MvnCopy, 5);
        let v = sample_haar_frame(&mut rng, 3, 3).unwrap().into_inner();
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let a = v.transpose() * d * &v;
        let b = psd_sqrt(&a).unwrap();
        assert!(max_abs(&(&b * &b - a)) <= 1e-8);
    }

    #[test]
    fn psd_sqrt_idempotent_on_projectors() {
        let ones = DataMatrix::new(DMatrix::from_element(5, 1, 1.0), vec!["c".into()]).unwrap();
        let proj = residual_projector(&ones).unwrap();
        let p = proj.basis().transpose() * proj.basis();
        let b = psd_sqrt(&p).unwrap();
        assert!(max_abs(&(&b * &b - p)) <= 1e-8);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(matches!(
            psd_sqrt(&a),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn least_squares_mean_fit() {
        let design = DataMatrix::new(DMatrix::from_element(3, 1, 1.0), vec!["c".into()]).unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = least_squares(&design, &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, max_relative = 1e-12);
        for i in 0..3 {
            assert_relative_eq!(fit.fitted[i], 2.0, max_relative = 1e-12);
        }
        let expect = [-1.0, 0.0, 1.0];
        for i in 0..3 {
            assert_relative_eq!(fit.residual[i], expect[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn least_squares_hand_normal_equations() {
        // S_xx = 5, S_xy = 6.5 -> slope 1.3, intercept -0.2.
        let design = DataMatrix::from_matrix(DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0],
        ))
        .unwrap();
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0, 4.0]);
        let fit = least_squares(&design, &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], -0.2, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficients[1], 1.3, epsilon = 1e-10);
        let res = [0.2, -0.1, -0.4, 0.3];
        for i in 0..4 {
            assert_relative_eq!(fit.residual[i], res[i], epsilon = 1e-10);
        }
        // fitted + residual = response exactly.
        for i in 0..4 {
            assert_eq!(fit.fitted[i] + fit.residual[i], y[i]);
        }
    }

    #[test]
    fn least_squares_saturated() {
        let design = DataMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
        let y = DVector::from_vec(vec![5.0, 7.0]);
        let fit = least_squares(&design, &y).unwrap();
        assert!(fit.residual.norm() <= 1e-12);
        assert_relative_eq!(fit.fitted[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(fit.fitted[1], 7.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_residual_orthogonality_and_rss_bound() {
        let mut rng = substream(2, Domain::MvnCopy, 6);
        for _ in 0..20 {
            let design = DMatrix::from_fn(12, 3, |_, _| StandardNormal.sample(&mut rng));
            let y = DVector::from_fn(12, |_, _| StandardNormal.sample(&mut rng));
            let fit = least_squares_raw(&design, &y, None).unwrap();
            let scale = max_abs(&design) * y.norm();
            for j in 0..3 {
                let dot: f64 = design.column(j).dot(&fit.residual);
                assert!(dot.abs() <= 1e-8 * scale.max(1.0));
            }
            assert!(fit.residual.norm_squared() <= y.norm_squared() + 1e-12);
        }
    }
}
