//! Small dense linear algebra, low-degree polynomial roots and a fixed-step
//! RK4 integrator. Everything here is sized for 12-state models; nothing
//! tries to be a general-purpose linear algebra package.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

/// A complex root of a real polynomial.
pub type ComplexRoot = Complex64;

/// Relative tolerance used by [`rank`] when callers have no better choice.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {op} of {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    BadEntryCount {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("unsupported polynomial degree {0} (supported: 1 to 4)")]
    UnsupportedDegree(usize),
    #[error("polynomial has non-finite coefficients")]
    NonFiniteCoefficients,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("non-finite value produced by state derivative at t = {t}")]
    NonFinite { t: f64 },
}

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(NumericsError::BadEntryCount {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericsError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(NumericsError::BadEntryCount {
                    rows: n_rows,
                    cols: n_cols,
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(n_rows, n_cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat, NumericsError> {
        if self.shape() != other.shape() {
            return Err(NumericsError::DimensionMismatch {
                op: "sub",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Mat { data, ..*self })
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Mat) -> Result<Mat, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::DimensionMismatch {
                op: "hstack",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
            for j in 0..other.cols {
                out[(i, self.cols + j)] = other[(i, j)];
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if v.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                op: "mul_vec",
                lhs: self.shape(),
                rhs: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Result<Mat, NumericsError> {
    if a.cols != b.rows {
        return Err(NumericsError::DimensionMismatch {
            op: "mat_mul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..b.cols {
                out[(i, j)] += aik * b[(k, j)];
            }
        }
    }
    Ok(out)
}

/// Numerical rank by Gaussian elimination with partial pivoting.
///
/// A pivot counts when its magnitude exceeds `tol` times the largest absolute
/// entry of `m` (or `tol` itself for the zero matrix).
pub fn rank(m: &Mat, tol: f64) -> usize {
    debug_assert!(tol > 0.0);
    let scale = match m.max_abs() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let threshold = tol * scale;
    let mut work = m.clone();
    let (rows, cols) = m.shape();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot_row, pivot_abs) =
            (rank..rows)
                .map(|r| (r, work[(r, col)].abs()))
                .fold(
                    (rank, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot_abs <= threshold {
            continue;
        }
        if pivot_row != rank {
            for j in 0..cols {
                work.data.swap(pivot_row * cols + j, rank * cols + j);
            }
        }
        let pivot = work[(rank, col)];
        for r in rank + 1..rows {
            let factor = work[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..cols {
                let v = work[(rank, j)];
                work[(r, j)] -= factor * v;
            }
        }
        rank += 1;
    }
    rank
}

/// Real polynomial, coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Trailing (highest-degree) zero coefficients are dropped. The zero
    /// polynomial is kept as the constant `0`.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    /// Builds a polynomial from coefficients listed highest degree first.
    pub fn from_descending(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().rev().copied().collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.degree()]
    }

    pub fn monic(&self) -> Poly {
        let lead = self.leading();
        Poly {
            coeffs: self.coeffs.iter().map(|c| c / lead).collect(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.degree() == 0 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }
}

/// All complex roots of a polynomial of degree 1 to 4.
///
/// Exact zero roots are deflated first; quadratics use the cancellation-free
/// closed form and cubics/quartics the eigenvalues of the companion matrix
/// (Francis double-shift QR). Every root is then Newton-polished on the
/// original polynomial, and complex roots are returned as exact conjugate
/// pairs, positive imaginary part first.
pub fn poly_roots(p: &Poly) -> Result<Vec<ComplexRoot>, NumericsError> {
    if p.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(NumericsError::NonFiniteCoefficients);
    }
    let degree = p.degree();
    if degree == 0 || degree > 4 {
        return Err(NumericsError::UnsupportedDegree(degree));
    }
    let monic = p.monic();

    let zeros = monic.coeffs.iter().take_while(|&&c| c == 0.0).count();
    let reduced = Poly::new(monic.coeffs[zeros..].to_vec());

    let mut found: Vec<RootKind> = vec![RootKind::Real(0.0); zeros];
    match reduced.degree() {
        0 => {}
        1 => found.push(RootKind::Real(-reduced.coeffs[0])),
        2 => found.extend(quadratic_roots(
            reduced.coeffs[2],
            reduced.coeffs[1],
            reduced.coeffs[0],
        )),
        _ => found.extend(companion_roots(&reduced)?),
    }

    let deriv = monic.derivative();
    let mut roots = Vec::with_capacity(degree);
    for kind in found {
        match kind {
            RootKind::Real(x) => {
                let x = polish_real(&monic, &deriv, x);
                roots.push(Complex64::new(x, 0.0));
            }
            RootKind::Pair(z) => {
                let z = polish_complex(&monic, &deriv, z);
                // Polishing can collapse a nearly-real pair onto the axis.
                let im = z.im.abs();
                roots.push(Complex64::new(z.re, im));
                roots.push(Complex64::new(z.re, -im));
            }
        }
    }
    Ok(roots)
}

#[derive(Debug, Clone, Copy)]
enum RootKind {
    Real(f64),
    /// A conjugate pair, stored by its member with positive imaginary part.
    Pair(Complex64),
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<RootKind> {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return vec![RootKind::Real(0.0), RootKind::Real(0.0)];
        }
        vec![RootKind::Real(q / a), RootKind::Real(c / q)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a).abs();
        vec![RootKind::Pair(Complex64::new(re, im))]
    }
}

#[allow(clippy::needless_range_loop)]
fn companion_roots(monic: &Poly) -> Result<Vec<RootKind>, NumericsError> {
    let n = monic.degree();
    // 1-based storage to keep the QR sweep readable.
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for j in 1..=n {
        a[1][j] = -monic.coeffs[n - j];
    }
    for i in 2..=n {
        a[i][i - 1] = 1.0;
    }
    let (wr, wi) = hessenberg_eigenvalues(&mut a, n)?;
    let mut out = Vec::with_capacity(n);
    let mut i = 1;
    while i <= n {
        if wi[i] == 0.0 {
            out.push(RootKind::Real(wr[i]));
            i += 1;
        } else {
            // Pairs are emitted on consecutive slots.
            out.push(RootKind::Pair(Complex64::new(wr[i], wi[i].abs())));
            i += 2;
        }
    }
    Ok(out)
}

/// Eigenvalues of an upper Hessenberg matrix by the Francis double-shift QR
/// algorithm (EISPACK `hqr` lineage). `a` is 1-based and is destroyed.
#[allow(clippy::needless_range_loop)]
fn hessenberg_eigenvalues(
    a: &mut [Vec<f64>],
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                y = a[nn - 1][nn - 1];
                w = a[nn][nn - 1] * a[nn - 1][nn];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return Err(NumericsError::NoConvergence);
                    }
                    if its % 10 == 0 && its > 0 {
                        // Exceptional shift.
                        t += x;
                        for i in 1..=nn {
                            a[i][i] -= x;
                        }
                        let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    loop {
                        z = a[m][m];
                        let r0 = x - z;
                        let s0 = y - z;
                        p = (r0 * s0 - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r0 - s0;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nn {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    for k in m..nn {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = if k != nn - 1 { a[k + 2][k - 1] } else { 0.0 };
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nn - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nn - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                    }
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Ok((wr, wi))
}

const POLISH_ITERS: usize = 8;

fn polish_real(p: &Poly, dp: &Poly, mut x: f64) -> f64 {
    let mut best = p.eval(x).abs();
    for _ in 0..POLISH_ITERS {
        let d = dp.eval(x);
        if best == 0.0 || d == 0.0 {
            break;
        }
        let cand = x - p.eval(x) / d;
        let res = p.eval(cand).abs();
        if res.is_nan() || res >= best {
            break;
        }
        x = cand;
        best = res;
    }
    x
}

fn polish_complex(p: &Poly, dp: &Poly, mut z: Complex64) -> Complex64 {
    let mut best = p.eval_complex(z).norm();
    for _ in 0..POLISH_ITERS {
        let d = dp.eval_complex(z);
        if best == 0.0 || d.norm() == 0.0 {
            break;
        }
        let cand = z - p.eval_complex(z) / d;
        let res = p.eval_complex(cand).norm();
        if res.is_nan() || res >= best {
            break;
        }
        z = cand;
        best = res;
    }
    z
}

/// One classical fourth-order Runge-Kutta step.
///
/// The derivative may fail (the caller's error type is propagated); a
/// non-finite stage or result is reported as [`NumericsError::NonFinite`]
/// converted into the caller's error type.
pub fn rk4_step<const N: usize, E, F>(
    mut deriv: F,
    state: &[f64; N],
    t: f64,
    dt: f64,
) -> Result<[f64; N], E>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    E: From<NumericsError>,
{
    let offset = |base: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *base;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += h * ki;
        }
        out
    };
    let check = |k: [f64; N], at: f64| -> Result<[f64; N], E> {
        if k.iter().all(|v| v.is_finite()) {
            Ok(k)
        } else {
            Err(NumericsError::NonFinite { t: at }.into())
        }
    };
    let half = 0.5 * dt;
    let k1 = check(deriv(t, state)?, t)?;
    let k2 = check(deriv(t + half, &offset(state, &k1, half))?, t + half)?;
    let k3 = check(deriv(t + half, &offset(state, &k2, half))?, t + half)?;
    let k4 = check(deriv(t + dt, &offset(state, &k3, dt))?, t + dt)?;
    let mut next = *state;
    for i in 0..N {
        next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check(next, t + dt)
}
