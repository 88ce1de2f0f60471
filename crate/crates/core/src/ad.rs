//! Forward-mode automatic differentiation.
//!
//! Model code is written once over the [`Scalar`] trait and evaluated with
//! `f64` for values, [`Dual<f64>`] for first derivatives and
//! `Dual<Dual<f64>>` for exact second derivatives.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }
    pub fn var(re: T) -> Self {
        Self { re, eps: T::cst(1.0) }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}
impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}
impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}
impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::cst(1.0) / o.re;
        let re = self.re * inv;
        Self::new(re, (self.eps - re * o.eps) * inv)
    }
}
impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}
impl<T: Scalar> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl<T: Scalar> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
impl<T: Scalar> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}
impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Self::new(self.re + o, self.eps)
    }
}
impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Self::new(self.re - o, self.eps)
    }
}
impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        Self::new(self.re * o, self.eps * o)
    }
}
impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        Self::new(self.re / o, self.eps / o)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::new(T::cst(v), T::cst(0.0))
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }
    #[inline]
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.eps * self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self::new(s, self.eps / (s * 2.0))
    }
}

/// A small vector-valued function that can be evaluated over any [`Scalar`].
///
/// Constraint blocks of the optimizers implement this so their Jacobians and
/// Lagrangian Hessians come out of forward-mode AD.
pub trait LocalFn {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]);

    /// Inputs that may carry second derivatives. `None` means all of them.
    fn curved_inputs(&self) -> Option<&[usize]> {
        None
    }
}

pub fn eval_f64<F: LocalFn>(f: &F, x: &[f64], out: &mut [f64]) {
    f.eval(x, out);
}

/// Dense row-major Jacobian (`n_out × n_in`).
pub fn jacobian<F: LocalFn>(f: &F, x: &[f64], jac: &mut [f64]) {
    let (n, m) = (f.n_in(), f.n_out());
    debug_assert_eq!(jac.len(), n * m);
    let mut xd: Vec<Dual<f64>> = x.iter().map(|&v| Dual::new(v, 0.0)).collect();
    let mut out = vec![Dual::<f64>::cst(0.0); m];
    for j in 0..n {
        xd[j].eps = 1.0;
        f.eval(&xd, &mut out);
        xd[j].eps = 0.0;
        for (i, o) in out.iter().enumerate() {
            jac[i * n + j] = o.eps;
        }
    }
}

/// Lower triangle (row-major, `i ≥ j`, dense `n_in × n_in` storage) of
/// `Σ_o w_o ∇² f_o(x)`.
pub fn weighted_hessian<F: LocalFn>(f: &F, x: &[f64], w: &[f64], hess: &mut [f64]) {
    let (n, m) = (f.n_in(), f.n_out());
    debug_assert_eq!(hess.len(), n * n);
    hess.iter_mut().for_each(|h| *h = 0.0);
    let all: Vec<usize>;
    let curved: &[usize] = match f.curved_inputs() {
        Some(c) => c,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    let mut xd: Vec<Dual<Dual<f64>>> = x
        .iter()
        .map(|&v| Dual::new(Dual::new(v, 0.0), Dual::new(0.0, 0.0)))
        .collect();
    let mut out = vec![Dual::<Dual<f64>>::cst(0.0); m];
    for (a, &i) in curved.iter().enumerate() {
        xd[i].eps.re = 1.0;
        for &j in &curved[..=a] {
            xd[j].re.eps = 1.0;
            f.eval(&xd, &mut out);
            xd[j].re.eps = 0.0;
            let v: f64 = out.iter().zip(w).map(|(o, wi)| o.eps.eps * wi).sum();
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            hess[r * n + c] = v;
        }
        xd[i].eps.re = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Poly;
    impl LocalFn for Poly {
        fn n_in(&self) -> usize {
            2
        }
        fn n_out(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
            out[0] = x[0] * x[0] * x[1] + x[1].sin();
            out[1] = (x[0] * x[1]).sqrt() / x[1];
        }
    }

    #[test]
    fn dual_matches_hand_derivatives() {
        let x = [1.3, 0.7];
        let mut j = [0.0; 4];
        jacobian(&Poly, &x, &mut j);
        assert!((j[0] - 2.0 * 1.3 * 0.7).abs() < 1e-14);
        assert!((j[1] - (1.3f64 * 1.3 + 0.7f64.cos())).abs() < 1e-14);
        // f1 = sqrt(x0) * x1^-1/2
        let d0 = 0.5 / (1.3f64.sqrt() * 0.7f64.sqrt());
        assert!((j[2] - d0).abs() < 1e-13);
    }

    #[test]
    fn hessian_of_weighted_sum() {
        let x = [1.3, 0.7];
        let mut h = [0.0; 4];
        weighted_hessian(&Poly, &x, &[2.0, 0.0], &mut h);
        // f0: d2/dx0dx0 = 2 x1, d2/dx1dx0 = 2 x0, d2/dx1dx1 = -sin x1
        assert!((h[0] - 2.0 * 2.0 * 0.7).abs() < 1e-13);
        assert!((h[2] - 2.0 * 2.0 * 1.3).abs() < 1e-13);
        assert!((h[3] + 2.0 * 0.7f64.sin()).abs() < 1e-13);
        assert_eq!(h[1], 0.0);
    }
}
