//! Fixed-capacity vectors and matrices for one- and two-coordinate
//! configuration spaces.
//!
//! Everything here lives on the stack; the integrator evaluates drifts
//! hundreds of millions of times, so no allocation is allowed on that path.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

/// Largest supported configuration-space dimension.
pub const MAX_DIM: usize = 2;

const CZERO: Complex64 = Complex64::new(0.0, 0.0);
const CONE: Complex64 = Complex64::new(1.0, 0.0);

/// A real point in configuration space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    v: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1 or 2");
        Self { v: [0.0; MAX_DIM], dim }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut p = Self::zeros(xs.len());
        p.v[..xs.len()].copy_from_slice(xs);
        p
    }

    pub fn scalar(x: f64) -> Self {
        Self::from_slice(&[x])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v[..self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn to_complex(self) -> CVec {
        let mut out = CVec::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = Complex64::new(self.v[i], 0.0);
        }
        out
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.dim);
        &self.v[i]
    }
}

impl IndexMut<usize> for Point {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.dim);
        &mut self.v[i]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(mut self, rhs: Point) -> Point {
        for i in 0..self.dim {
            self.v[i] += rhs.v[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(mut self, rhs: Point) -> Point {
        for i in 0..self.dim {
            self.v[i] -= rhs.v[i];
        }
        self
    }
}

/// A complex vector of dimension 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CVec {
    v: [Complex64; MAX_DIM],
    dim: usize,
}

impl CVec {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1 or 2");
        Self { v: [CZERO; MAX_DIM], dim }
    }

    pub fn from_slice(xs: &[Complex64]) -> Self {
        let mut out = Self::zeros(xs.len());
        out.v[..xs.len()].copy_from_slice(xs);
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.v[..self.dim]
    }

    /// Bilinear (not sesquilinear) product.
    pub fn dot(&self, other: &CVec) -> Complex64 {
        (0..self.dim).map(|i| self.v[i] * other.v[i]).sum()
    }

    pub fn dot_real(&self, x: &Point) -> Complex64 {
        (0..self.dim).map(|i| self.v[i] * x[i]).sum()
    }

    pub fn conj(mut self) -> Self {
        for z in &mut self.v[..self.dim] {
            *z = z.conj();
        }
        self
    }

    pub fn scale(mut self, s: Complex64) -> Self {
        for z in &mut self.v[..self.dim] {
            *z *= s;
        }
        self
    }

    pub fn re(&self) -> Point {
        let mut p = Point::zeros(self.dim);
        for i in 0..self.dim {
            p[i] = self.v[i].re;
        }
        p
    }

    pub fn im(&self) -> Point {
        let mut p = Point::zeros(self.dim);
        for i in 0..self.dim {
            p[i] = self.v[i].im;
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|z| z.is_finite())
    }
}

impl Index<usize> for CVec {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        debug_assert!(i < self.dim);
        &self.v[i]
    }
}

impl IndexMut<usize> for CVec {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        debug_assert!(i < self.dim);
        &mut self.v[i]
    }
}

impl Add for CVec {
    type Output = CVec;
    fn add(mut self, rhs: CVec) -> CVec {
        for i in 0..self.dim {
            self.v[i] += rhs.v[i];
        }
        self
    }
}

impl Sub for CVec {
    type Output = CVec;
    fn sub(mut self, rhs: CVec) -> CVec {
        for i in 0..self.dim {
            self.v[i] -= rhs.v[i];
        }
        self
    }
}

/// A complex square matrix of dimension 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat {
    m: [[Complex64; MAX_DIM]; MAX_DIM],
    dim: usize,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1 or 2");
        Self { m: [[CZERO; MAX_DIM]; MAX_DIM], dim }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.m[i][i] = CONE;
        }
        out
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let mut out = Self::zeros(entries.len());
        for (i, &z) in entries.iter().enumerate() {
            out.m[i][i] = z;
        }
        out
    }

    pub fn real_diagonal(entries: &[f64]) -> Self {
        let mut out = Self::zeros(entries.len());
        for (i, &x) in entries.iter().enumerate() {
            out.m[i][i] = Complex64::new(x, 0.0);
        }
        out
    }

    /// Builds a matrix from row-major entries; `rows.len()` must be `dim * dim`.
    pub fn from_rows(dim: usize, rows: &[Complex64]) -> Self {
        assert_eq!(rows.len(), dim * dim);
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.m[i][j] = rows[i * dim + j];
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transpose(&self) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = self.m[i][j].conj();
            }
        }
        out
    }

    /// `(M + Mᵀ) / 2`; removes round-off asymmetry from products.
    pub fn symmetrized(&self) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = 0.5 * (self.m[i][j] + self.m[j][i]);
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] *= s;
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn det(&self) -> Complex64 {
        match self.dim {
            1 => self.m[0][0],
            _ => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
        }
    }

    /// Inverse, or `None` when the determinant underflows to zero.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let mut out = Self::zeros(self.dim);
        match self.dim {
            1 => out.m[0][0] = CONE / det,
            _ => {
                let inv = CONE / det;
                out.m[0][0] = self.m[1][1] * inv;
                out.m[1][1] = self.m[0][0] * inv;
                out.m[0][1] = -self.m[0][1] * inv;
                out.m[1][0] = -self.m[1][0] * inv;
            }
        }
        Some(out)
    }

    pub fn mul_vec(&self, v: &CVec) -> CVec {
        let mut out = CVec::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.m[i][j] * v[j]).sum();
        }
        out
    }

    pub fn mul_real_vec(&self, x: &Point) -> CVec {
        let mut out = CVec::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.m[i][j] * x[j]).sum();
        }
        out
    }

    /// `xᵀ M x` for a real vector `x`.
    pub fn quadratic_form(&self, x: &Point) -> Complex64 {
        self.mul_real_vec(x).dot_real(x)
    }

    /// `vᵀ M v` for a complex vector `v` (bilinear).
    pub fn bilinear(&self, v: &CVec) -> Complex64 {
        self.mul_vec(v).dot(v)
    }

    /// Eigenvalues of the 1×1 or 2×2 matrix.
    pub fn eigenvalues(&self) -> [Complex64; MAX_DIM] {
        match self.dim {
            1 => [self.m[0][0], CZERO],
            _ => {
                let half_tr = 0.5 * self.trace();
                let disc = (half_tr * half_tr - self.det()).sqrt();
                [half_tr + disc, half_tr - disc]
            }
        }
    }

    /// Real part, as a real symmetric matrix stored in complex form.
    pub fn re(&self) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = Complex64::new(self.m[i][j].re, 0.0);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.m[i][j].is_finite()))
    }

    /// True when the real part is negative definite.
    pub fn has_negative_definite_real_part(&self) -> bool {
        let a = self.m[0][0].re;
        match self.dim {
            1 => a < 0.0,
            _ => {
                let d = self.m[1][1].re;
                let b = 0.5 * (self.m[0][1].re + self.m[1][0].re);
                a < 0.0 && a * d - b * b > 0.0
            }
        }
    }

    /// Bit pattern of the entries; used as a cache key for propagation tables.
    pub fn bit_key(&self) -> [u64; 2 * MAX_DIM * MAX_DIM + 1] {
        let mut key = [0u64; 2 * MAX_DIM * MAX_DIM + 1];
        key[0] = self.dim as u64;
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                let z = self.m[i][j];
                key[1 + 2 * (i * MAX_DIM + j)] = z.re.to_bits();
                key[2 + 2 * (i * MAX_DIM + j)] = z.im.to_bits();
            }
        }
        key
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.m[i][j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.m[i][j]
    }
}

impl Add for CMat {
    type Output = CMat;
    fn add(mut self, rhs: CMat) -> CMat {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] += rhs.m[i][j];
            }
        }
        self
    }
}

impl Sub for CMat {
    type Output = CMat;
    fn sub(mut self, rhs: CMat) -> CMat {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] -= rhs.m[i][j];
            }
        }
        self
    }
}

impl Mul for CMat {
    type Output = CMat;
    fn mul(self, rhs: CMat) -> CMat {
        let mut out = CMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = (0..self.dim).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        out
    }
}

/// `sqrt(det(M))` continued from the positive reals, for a complex symmetric
/// `M` whose real part is positive definite (every eigenvalue then has a
/// positive real part, so the principal root of each is the right branch).
pub fn sqrt_det_positive(m: &CMat) -> Complex64 {
    let eig = m.eigenvalues();
    (0..m.dim()).map(|k| eig[k].sqrt()).product()
}

/// `ln det(M)` on the same branch as [`sqrt_det_positive`].
pub fn ln_det_positive(m: &CMat) -> Complex64 {
    let eig = m.eigenvalues();
    (0..m.dim()).map(|k| eig[k].ln()).sum()
}
