//! Graph-with-conductances parameters and the small dense linear algebra
//! every other module consumes: H_beta = 2*diag(beta) - W, the clock
//! matrix K_t = Id - diag(t)*W, solves, determinants and positivity.
//!
//! Matrices here are desk-scale (n up to a few dozen), stored dense and
//! row-major. K_t is nonsymmetric, so general solves go through
//! partial-pivot LU; H_beta is symmetric and uses a Cholesky-style
//! factorization for positivity checks and solves.

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot counts as zero when it falls below
/// this times the matrix max-norm.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::InvalidParam("matrix entries must be finite".into()));
                }
                data.push(v);
            }
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn transpose(&self) -> SquareMatrix {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        Ok((0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn mul_mat(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Solve M x = v via partial-pivot LU.
    ///
    /// Errors with [`Error::SingularMatrix`] when a pivot falls below
    /// `PIVOT_TOL` relative to the matrix max-norm; for clock matrices
    /// this signals that the clock left the validity region K_t > 0.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.lu()?.solve(v)
    }

    pub fn lu(&self) -> Result<LuFactors> {
        LuFactors::new(self)
    }

    /// Determinant via Gaussian elimination with partial pivoting, sign
    /// preserved. Returns 0 for singular input instead of erroring.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let c = a[i * n + k].abs();
                if c > best {
                    best = c;
                    p = i;
                }
            }
            if best == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            let pivot = a[k * n + k];
            det *= pivot;
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    /// True iff the symmetrized matrix admits a Cholesky factorization with
    /// every pivot above `PIVOT_TOL` relative to the max-norm.
    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }

    /// Cholesky factorization of the symmetrized matrix; `None` when a
    /// pivot falls at or below tolerance.
    pub fn cholesky(&self) -> Option<CholeskyFactor> {
        let n = self.n;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let tol = PIVOT_TOL * scale;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                // symmetrized entry
                let a = 0.5 * (self.get(i, j) + self.get(j, i));
                let mut s = a;
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= tol {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(CholeskyFactor { n, l })
    }
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl LuFactors {
    fn new(m: &SquareMatrix) -> Result<Self> {
        let n = m.n;
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        let tol = PIVOT_TOL * scale;
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let c = lu[i * n + k].abs();
                if c > best {
                    best = c;
                    p = i;
                }
            }
            if best <= tol {
                return Err(Error::SingularMatrix);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(LuFactors { n, lu, perm, sign })
    }

    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| v[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    pub fn determinant(&self) -> f64 {
        let mut det = self.sign;
        for k in 0..self.n {
            det *= self.lu[k * self.n + k];
        }
        det
    }
}

#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    l: Vec<f64>,
}

impl CholeskyFactor {
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        let mut x = v.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        Ok(x)
    }

    pub fn determinant(&self) -> f64 {
        let mut d = 1.0;
        for k in 0..self.n {
            let v = self.l[k * self.n + k];
            d *= v * v;
        }
        d
    }

    /// log det, numerically safer for the density prefactor 1/sqrt(|H|).
    pub fn log_determinant(&self) -> f64 {
        let mut s = 0.0;
        for k in 0..self.n {
            s += self.l[k * self.n + k].ln();
        }
        2.0 * s
    }
}

/// Reusable partial-pivot LU workspace for the per-step clock solves in
/// the path engines; avoids allocating in hot loops.
#[derive(Debug, Clone)]
pub struct DenseSolver {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseSolver {
    pub fn new(n: usize) -> Self {
        DenseSolver { n, lu: vec![0.0; n * n], piv: vec![0; n] }
    }

    /// Factor the matrix with entries `entry(i, j)` in place.
    pub fn factor(&mut self, entry: impl Fn(usize, usize) -> f64) -> Result<()> {
        let n = self.n;
        let mut scale = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let v = entry(i, j);
                self.lu[i * n + j] = v;
                scale = scale.max(v.abs());
            }
        }
        let tol = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut p = k;
            let mut best = self.lu[k * n + k].abs();
            for i in (k + 1)..n {
                let c = self.lu[i * n + k].abs();
                if c > best {
                    best = c;
                    p = i;
                }
            }
            if best <= tol {
                return Err(Error::SingularMatrix);
            }
            self.piv[k] = p;
            if p != k {
                for j in 0..n {
                    self.lu.swap(k * n + j, p * n + j);
                }
            }
            let pivot = self.lu[k * n + k];
            for i in (k + 1)..n {
                let f = self.lu[i * n + k] / pivot;
                self.lu[i * n + k] = f;
                for j in (k + 1)..n {
                    self.lu[i * n + j] -= f * self.lu[k * n + j];
                }
            }
        }
        Ok(())
    }

    /// Solve in place using the last factorization.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        for k in 0..n {
            x.swap(k, self.piv[k]);
            for i in (k + 1)..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s / self.lu[i * n + i];
        }
    }
}

/// The tuple (V, W, theta, eta) defining every SDE and measure in this
/// crate: a finite connected graph with nonnegative symmetric conductances
/// W (self-loops allowed), a strictly positive start vector theta and a
/// nonnegative drift vector eta.
#[derive(Debug, Clone)]
pub struct GraphPotentialParams {
    n: usize,
    w: SquareMatrix,
    theta: Vec<f64>,
    eta: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl GraphPotentialParams {
    pub fn new(w: SquareMatrix, theta: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        Self::build(w, theta, eta, None, true)
    }

    pub fn with_labels(
        w: SquareMatrix,
        theta: Vec<f64>,
        eta: Vec<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        Self::build(w, theta, eta, Some(labels), true)
    }

    /// Continuation parameters for a restarted system: start levels are
    /// allowed to be zero (a coordinate already absorbed stays absorbed).
    pub(crate) fn continuation(w: SquareMatrix, start: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        Self::build(w, start, eta, None, false)
    }

    fn build(
        w: SquareMatrix,
        theta: Vec<f64>,
        eta: Vec<f64>,
        labels: Option<Vec<String>>,
        strict_theta: bool,
    ) -> Result<Self> {
        let n = w.dim();
        if n == 0 {
            return Err(Error::InvalidParam("vertex count must be >= 1".into()));
        }
        if theta.len() != n {
            return Err(Error::InvalidParam(format!(
                "theta has length {}, expected {}",
                theta.len(),
                n
            )));
        }
        if eta.len() != n {
            return Err(Error::InvalidParam(format!("eta has length {}, expected {}", eta.len(), n)));
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::InvalidParam(format!(
                    "labels has length {}, expected {}",
                    l.len(),
                    n
                )));
            }
        }
        if !w.is_symmetric() {
            return Err(Error::InvalidParam("W must be symmetric".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let v = w.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParam(format!("W[{i}][{j}] must be finite and >= 0")));
                }
            }
        }
        for (i, &t) in theta.iter().enumerate() {
            let ok = if strict_theta { t > 0.0 } else { t >= 0.0 };
            if !ok || !t.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "theta[{i}] must be {} and finite",
                    if strict_theta { "> 0" } else { ">= 0" }
                )));
            }
        }
        for (i, &e) in eta.iter().enumerate() {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(Error::InvalidParam(format!("eta[{i}] must be >= 0 and finite")));
            }
        }
        if !connected(&w) {
            return Err(Error::InvalidParam(
                "graph induced by off-diagonal positive entries of W must be connected".into(),
            ));
        }
        Ok(GraphPotentialParams { n, w, theta, eta, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> &SquareMatrix {
        &self.w
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Same graph and theta, different eta (the kernel K shifts eta by 1/z).
    pub fn with_eta(&self, eta: Vec<f64>) -> Result<Self> {
        Self::build(self.w.clone(), self.theta.clone(), eta, self.labels.clone(), true)
    }

    /// H_beta = 2*diag(beta) - W.
    pub fn h_beta(&self, beta: &[f64]) -> Result<SquareMatrix> {
        if beta.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: beta.len() });
        }
        let mut m = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let v = if i == j { 2.0 * beta[i] - self.w.get(i, j) } else { -self.w.get(i, j) };
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    /// K_t = Id - diag(t)*W. Nonsymmetric; satisfies K_t = diag(t)*H_{1/(2t)}
    /// whenever every t_i > 0.
    pub fn k_t(&self, t: &[f64]) -> Result<SquareMatrix> {
        if t.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: t.len() });
        }
        let mut m = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let v = if i == j { 1.0 - t[i] * self.w.get(i, j) } else { -t[i] * self.w.get(i, j) };
                m.set(i, j, v);
            }
        }
        Ok(m)
    }
}

fn connected(w: &SquareMatrix) -> bool {
    let n = w.dim();
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if i != j && !seen[j] && w.get(i, j) > 0.0 {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_vertex(w12: f64) -> GraphPotentialParams {
        let w = SquareMatrix::from_rows(&[vec![0.0, w12], vec![w12, 0.0]]).unwrap();
        GraphPotentialParams::new(w, vec![1.0, 1.0], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn h_beta_diagonal_case() {
        let w = SquareMatrix::from_rows(&[vec![0.0]]).unwrap();
        let p = GraphPotentialParams::new(w, vec![1.0], vec![0.0]).unwrap();
        let h = p.h_beta(&[1.0]).unwrap();
        assert_eq!(h.get(0, 0), 2.0);
    }

    #[test]
    fn h_beta_two_vertices() {
        let p = two_vertex(1.0);
        let h = p.h_beta(&[1.0, 1.0]).unwrap();
        assert_eq!(h.row(0), &[2.0, -1.0]);
        assert_eq!(h.row(1), &[-1.0, 2.0]);
    }

    #[test]
    fn k_t_zero_clock_is_identity() {
        let p = two_vertex(1.0);
        let k = p.k_t(&[0.0, 0.0]).unwrap();
        assert_eq!(k, SquareMatrix::identity(2));
    }

    #[test]
    fn k_t_direct_arithmetic() {
        let p = two_vertex(1.0);
        let k = p.k_t(&[0.25, 0.25]).unwrap();
        assert_eq!(k.row(0), &[1.0, -0.25]);
        assert_eq!(k.row(1), &[-0.25, 1.0]);
    }

    #[test]
    fn k_t_equals_t_times_h_half_inverse_clock() {
        let p = two_vertex(1.0);
        let beta = [1.0, 1.0];
        let t: Vec<f64> = beta.iter().map(|b| 1.0 / (2.0 * b)).collect();
        let k = p.k_t(&t).unwrap();
        let h = p.h_beta(&beta).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((k.get(i, j) - t[i] * h.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn positive_definite_examples() {
        let m = SquareMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert!(m.is_positive_definite());
        let m = SquareMatrix::from_rows(&[vec![1.0, -2.0], vec![-2.0, 1.0]]).unwrap();
        assert!(!m.is_positive_definite());
    }

    #[test]
    fn boundary_eigenvalue_below_tolerance_rejected() {
        // H with smallest eigenvalue ~1e-14: [[1+e, -1], [-1, 1+e]] has
        // eigenvalues e and 2+e.
        let e = 1e-14;
        let m = SquareMatrix::from_rows(&[vec![1.0 + e, -1.0], vec![-1.0, 1.0 + e]]).unwrap();
        assert!(!m.is_positive_definite());
    }

    #[test]
    fn solve_identity_and_row_sums() {
        let id = SquareMatrix::identity(3);
        let x = id.solve(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);

        let m = SquareMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let x = m.solve(&[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn solve_singular_errors() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(m.solve(&[1.0, 0.0]), Err(Error::SingularMatrix)));
    }

    #[test]
    fn determinant_examples() {
        let m = SquareMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert!((m.determinant() - 3.0).abs() < 1e-14);
        assert!((SquareMatrix::identity(4).determinant() - 1.0).abs() < 1e-15);
        // sign preserved
        let m = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((m.determinant() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn validation_names_offending_field() {
        let w = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let err = GraphPotentialParams::new(w, vec![0.0, 1.0], vec![0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("theta[0]"));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let w = SquareMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let err = GraphPotentialParams::new(w, vec![1.0, 1.0], vec![0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("connected"));
    }

    #[test]
    fn self_loops_allowed() {
        let w = SquareMatrix::from_rows(&[vec![0.5, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(GraphPotentialParams::new(w, vec![1.0, 1.0], vec![0.0, 0.0]).is_ok());
    }
}
