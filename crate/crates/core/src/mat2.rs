//! Dense 2x2 complex matrices for the two-level working medium.
//!
//! The basis is ordered (|0>, |1>) with |1> the excited state, so the number
//! operator is diag(0, 1) and `sigma_y` has +i in the (0,1) slot. Element
//! layout is row-major: `[m00, m01, m10, m11]`.

use num_complex::Complex64 as C64;
use std::ops::{Add, AddAssign, Mul, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([C64::new(0.0, 0.0); 4]);

    pub fn new(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        Mat2([m00, m01, m10, m11])
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Mat2([C64::new(a, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(b, 0.0)])
    }

    /// Ground-state projector |0><0|.
    pub fn ground() -> Self {
        Self::diag(1.0, 0.0)
    }

    /// Excited-state projector |1><1|.
    pub fn excited() -> Self {
        Self::diag(0.0, 1.0)
    }

    /// Maximally mixed state.
    pub fn mixed() -> Self {
        Self::diag(0.5, 0.5)
    }

    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    /// Excited-state population <1|m|1>.
    pub fn p1(&self) -> f64 {
        self.0[3].re
    }

    pub fn adjoint(&self) -> Mat2 {
        Mat2([self.0[0].conj(), self.0[2].conj(), self.0[1].conj(), self.0[3].conj()])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn herm_defect(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// sigma_x * m (row swap).
    pub fn sx_mul(&self) -> Mat2 {
        Mat2([self.0[2], self.0[3], self.0[0], self.0[1]])
    }

    /// m * sigma_x (column swap).
    pub fn mul_sx(&self) -> Mat2 {
        Mat2([self.0[1], self.0[0], self.0[3], self.0[2]])
    }

    /// [sigma_x, m].
    pub fn sx_comm(&self) -> Mat2 {
        self.sx_mul() - self.mul_sx()
    }

    /// Tr(sigma_y * m) with sigma_y = [[0, i], [-i, 0]] in the (|0>, |1>) basis.
    pub fn sigma_y_trace(&self) -> C64 {
        C64::i() * (self.0[2] - self.0[1])
    }

    pub fn scale(&self, s: C64) -> Mat2 {
        Mat2([self.0[0] * s, self.0[1] * s, self.0[2] * s, self.0[3] * s])
    }

    /// self += s * other, the propagator's workhorse.
    #[inline]
    pub fn axpy(&mut self, s: C64, other: &Mat2) {
        self.0[0] += s * other.0[0];
        self.0[1] += s * other.0[1];
        self.0[2] += s * other.0[2];
        self.0[3] += s * other.0[3];
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
            self.0[3] + rhs.0[3],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
            self.0[3] - rhs.0[3],
        ])
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, rhs: Mat2) {
        self.0[0] += rhs.0[0];
        self.0[1] += rhs.0[1];
        self.0[2] += rhs.0[2];
        self.0[3] += rhs.0[3];
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma_x() -> Mat2 {
        Mat2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    #[test]
    fn sx_products_match_explicit_multiplication() {
        let m = Mat2::new(
            C64::new(1.0, 2.0),
            C64::new(-0.5, 0.3),
            C64::new(0.2, -1.1),
            C64::new(0.7, 0.0),
        );
        assert_eq!(m.sx_mul(), sigma_x() * m);
        assert_eq!(m.mul_sx(), m * sigma_x());
        assert_eq!(m.sx_comm(), sigma_x() * m - m * sigma_x());
    }

    #[test]
    fn sigma_y_trace_matches_matrix_product() {
        // sigma_y in the (|0>, |1>) ordering: -i(sigma_+ - sigma_-).
        let sy = Mat2::new(
            C64::new(0.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, 0.0),
        );
        let m = Mat2::new(
            C64::new(0.3, -0.2),
            C64::new(1.5, 0.4),
            C64::new(-0.6, 0.9),
            C64::new(0.0, 1.0),
        );
        assert!(((sy * m).trace() - m.sigma_y_trace()).norm() < 1e-15);
    }

    #[test]
    fn hermiticity_defect_of_hermitian_matrix_is_zero() {
        let h = Mat2::new(
            C64::new(0.4, 0.0),
            C64::new(0.1, -0.7),
            C64::new(0.1, 0.7),
            C64::new(0.6, 0.0),
        );
        assert_eq!(h.herm_defect(), 0.0);
        assert!((h.trace() - C64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
