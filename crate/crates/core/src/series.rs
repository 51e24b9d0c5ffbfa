//! Truncated power series over complex coefficients.
//!
//! [`TruncatedSeries2`] is a bivariate series in `(y, z)` living in the
//! quotient ring `C[[y, z]] / (y^(M+1), z^(N+1))`. Every operation is exact in
//! that ring up to floating-point rounding: discarded higher-order terms never
//! feed back into retained coefficients. [`UniSeries`] is the univariate
//! specialisation obtained by fixing `y`.
//!
//! Storage is z-major, so the coefficient of `z^n` is a contiguous
//! polynomial in `y` of length `M + 1`. Products and quotients are carried out
//! row by row, which keeps the z-recurrences for division and exponentiation
//! cheap.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Number of Newton steps that is guaranteed to reach every retained
/// coefficient: each step doubles the total degree of the error term and the
/// ideal `(y, z)` is nilpotent of index `M + N + 1` in the quotient ring.
fn newton_steps(y_order: usize, trunc_order: usize) -> usize {
    let nil = (y_order + trunc_order + 1) as f64;
    nil.log2().ceil() as usize + 2
}

/// `out[i + j] += a[i] * b[j]` for all `i + j < out.len()`.
fn poly_mul_acc(a: &[C64], b: &[C64], out: &mut [C64]) {
    let len = out.len();
    for (i, &ai) in a.iter().enumerate().take(len) {
        if ai == ZERO {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(len - i) {
            out[i + j] += ai * bj;
        }
    }
}

/// Inverse of a univariate series with nonzero constant term, truncated to `len` terms.
fn poly_inv(a: &[C64], len: usize) -> Result<Vec<C64>> {
    let a0 = a.first().copied().unwrap_or(ZERO);
    if a0 == ZERO {
        return Err(Error::DivisionByNonUnit);
    }
    let c0 = a0.inv();
    let mut out = vec![ZERO; len];
    out[0] = c0;
    for k in 1..len {
        let mut acc = ZERO;
        for j in 1..=k.min(a.len() - 1) {
            acc += a[j] * out[k - j];
        }
        out[k] = -c0 * acc;
    }
    Ok(out)
}

/// Bivariate truncated power series `sum a[m, n] y^m z^n`, `m <= y_order`, `n <= trunc_order`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSeries2 {
    coeffs: Vec<C64>,
    y_order: usize,
    trunc_order: usize,
}

impl TruncatedSeries2 {
    pub fn zero(y_order: usize, trunc_order: usize) -> Self {
        Self {
            coeffs: vec![ZERO; (y_order + 1) * (trunc_order + 1)],
            y_order,
            trunc_order,
        }
    }

    pub fn constant(c: C64, y_order: usize, trunc_order: usize) -> Self {
        let mut s = Self::zero(y_order, trunc_order);
        s.coeffs[0] = c;
        s
    }

    pub fn one(y_order: usize, trunc_order: usize) -> Self {
        Self::constant(ONE, y_order, trunc_order)
    }

    /// Builds a series from `(m, n, coefficient)` triples. Terms outside the
    /// truncation window are dropped; repeated indices accumulate.
    pub fn from_terms<I>(terms: I, y_order: usize, trunc_order: usize) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut s = Self::zero(y_order, trunc_order);
        for (m, n, c) in terms {
            if m <= y_order && n <= trunc_order {
                let idx = s.index(m, n);
                s.coeffs[idx] += c;
            }
        }
        s
    }

    pub fn y_order(&self) -> usize {
        self.y_order
    }

    pub fn trunc_order(&self) -> usize {
        self.trunc_order
    }

    #[inline]
    fn index(&self, m: usize, n: usize) -> usize {
        n * (self.y_order + 1) + m
    }

    /// Coefficient of `y^m z^n`; structurally zero outside the window.
    pub fn coeff(&self, m: usize, n: usize) -> C64 {
        if m <= self.y_order && n <= self.trunc_order {
            self.coeffs[self.index(m, n)]
        } else {
            ZERO
        }
    }

    pub fn set_coeff(&mut self, m: usize, n: usize, c: C64) {
        assert!(
            m <= self.y_order && n <= self.trunc_order,
            "coefficient ({m}, {n}) outside truncation window"
        );
        let idx = self.index(m, n);
        self.coeffs[idx] = c;
    }

    /// The `z^n` coefficient as a polynomial in `y`.
    pub fn row(&self, n: usize) -> &[C64] {
        let w = self.y_order + 1;
        &self.coeffs[n * w..(n + 1) * w]
    }

    fn row_mut(&mut self, n: usize) -> &mut [C64] {
        let w = self.y_order + 1;
        &mut self.coeffs[n * w..(n + 1) * w]
    }

    /// Iterates over `(m, n, coefficient)` in row-major `(m, n)` order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..=self.y_order)
            .flat_map(move |m| (0..=self.trunc_order).map(move |n| (m, n, self.coeff(m, n))))
    }

    /// Restricts to a smaller window.
    pub fn truncate(&self, y_order: usize, trunc_order: usize) -> Self {
        let y_order = y_order.min(self.y_order);
        let trunc_order = trunc_order.min(self.trunc_order);
        let mut out = Self::zero(y_order, trunc_order);
        for n in 0..=trunc_order {
            out.row_mut(n).copy_from_slice(&self.row(n)[..=y_order]);
        }
        out
    }

    fn common_window(&self, other: &Self) -> (usize, usize) {
        (
            self.y_order.min(other.y_order),
            self.trunc_order.min(other.trunc_order),
        )
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&a| a * c).collect(),
            ..self.clone()
        }
    }

    /// Multiplies by `y^k`, dropping terms pushed past `y_order`.
    pub fn shift_y(&self, k: usize) -> Self {
        let mut out = Self::zero(self.y_order, self.trunc_order);
        for n in 0..=self.trunc_order {
            let src = self.row(n);
            let dst = out.row_mut(n);
            for m in 0..=self.y_order {
                if m + k <= self.y_order {
                    dst[m + k] = src[m];
                }
            }
        }
        out
    }

    /// Cauchy product, exact modulo the smaller of the two windows.
    pub fn ps_mul(&self, other: &Self) -> Self {
        let (my, nz) = self.common_window(other);
        let mut out = Self::zero(my, nz);
        for n1 in 0..=nz {
            let a = &self.row(n1)[..=my];
            if a.iter().all(|&c| c == ZERO) {
                continue;
            }
            for n2 in 0..=nz - n1 {
                let b = &other.row(n2)[..=my];
                poly_mul_acc(a, b, out.row_mut(n1 + n2));
            }
        }
        out
    }

    /// Quotient `self / divisor` by the z-recurrence
    /// `q_n = b_0^{-1} (a_n - sum_{k >= 1} b_k q_{n-k})`, where each `b_k` is a
    /// polynomial in `y` and `b_0` is inverted as a power series in `y`.
    pub fn ps_div(&self, divisor: &Self) -> Result<Self> {
        let (my, nz) = self.common_window(divisor);
        let w = my + 1;
        let inv_b0 = poly_inv(&divisor.row(0)[..w], w)?;
        let mut out = Self::zero(my, nz);
        let mut acc = vec![ZERO; w];
        for n in 0..=nz {
            acc.copy_from_slice(&self.row(n)[..w]);
            let mut sub = vec![ZERO; w];
            for k in 1..=n {
                poly_mul_acc(&divisor.row(k)[..w], out.row(n - k), &mut sub);
            }
            for (a, s) in acc.iter_mut().zip(&sub) {
                *a -= s;
            }
            poly_mul_acc(&inv_b0, &acc, out.row_mut(n));
        }
        Ok(out)
    }

    /// Principal square root: the unique root with constant term `+1`.
    ///
    /// Newton's iteration `r <- (r + a / r) / 2` from `r = 1`.
    pub fn ps_sqrt(&self) -> Result<Self> {
        let a00 = self.coeffs[0];
        if a00 != ONE {
            return Err(Error::BadConstantTerm {
                found: a00.to_string(),
                reason: "square root requires constant term exactly 1",
            });
        }
        let half = C64::new(0.5, 0.0);
        let mut r = Self::one(self.y_order, self.trunc_order);
        for _ in 0..newton_steps(self.y_order, self.trunc_order) {
            let q = self.ps_div(&r)?;
            r = (&r + &q).scale(half);
        }
        Ok(r)
    }

    /// `exp(self)`; the constant row `a_0(y)` is exponentiated as a y-series,
    /// then `n E_n = sum_{k=1}^{n} k a_k E_{n-k}` fills in the z-powers.
    pub fn ps_exp(&self) -> Self {
        let w = self.y_order + 1;
        let mut out = Self::zero(self.y_order, self.trunc_order);
        let a0 = self.row(0);
        {
            let e0 = out.row_mut(0);
            e0[0] = a0[0].exp();
            for k in 1..w {
                let mut acc = ZERO;
                for j in 1..=k {
                    acc += a0[j] * e0[k - j] * j as f64;
                }
                e0[k] = acc / k as f64;
            }
        }
        for n in 1..=self.trunc_order {
            let mut acc = vec![ZERO; w];
            for k in 1..=n {
                let ak: Vec<C64> = self.row(k).iter().map(|&c| c * k as f64).collect();
                poly_mul_acc(&ak, out.row(n - k), &mut acc);
            }
            let inv_n = 1.0 / n as f64;
            for (dst, a) in out.row_mut(n).iter_mut().zip(acc) {
                *dst = a * inv_n;
            }
        }
        out
    }

    /// `log(1 + self)` for a series with zero constant term.
    ///
    /// Newton's iteration on `exp(r) = 1 + a`: `r <- r + (1 + a) exp(-r) - 1`.
    pub fn ps_log1p(&self) -> Result<Self> {
        let a00 = self.coeffs[0];
        if a00 != ZERO {
            return Err(Error::BadConstantTerm {
                found: a00.to_string(),
                reason: "log1p requires zero constant term",
            });
        }
        let one = Self::one(self.y_order, self.trunc_order);
        let one_plus_a = &one + self;
        let mut r = self.clone();
        for _ in 0..newton_steps(self.y_order, self.trunc_order) {
            let correction = &one_plus_a.ps_mul(&(-&r).ps_exp()) - &one;
            r = &r + &correction;
        }
        Ok(r)
    }

    /// Divides the `z^n` coefficients by `n!`.
    pub fn borel_z(&self) -> Self {
        let mut out = self.clone();
        let mut fact = 1.0_f64;
        for n in 0..=self.trunc_order {
            if n > 0 {
                fact *= n as f64;
            }
            for c in out.row_mut(n) {
                *c /= fact;
            }
        }
        out
    }

    /// Multiplies the `z^n` coefficients by `n!`; inverse of [`Self::borel_z`].
    pub fn unborel_z(&self) -> Self {
        let mut out = self.clone();
        let mut fact = 1.0_f64;
        for n in 0..=self.trunc_order {
            if n > 0 {
                fact *= n as f64;
            }
            for c in out.row_mut(n) {
                *c *= fact;
            }
        }
        out
    }

    /// Formal z-derivative; the result is truncated one order lower.
    pub fn dz(&self) -> Self {
        let nz = self.trunc_order.saturating_sub(1);
        let mut out = Self::zero(self.y_order, nz);
        for n in 1..=self.trunc_order {
            let src: Vec<C64> = self.row(n).iter().map(|&c| c * n as f64).collect();
            out.row_mut(n - 1).copy_from_slice(&src);
        }
        out
    }

    /// Formal y-derivative, keeping the same window.
    pub fn dy(&self) -> Self {
        let mut out = Self::zero(self.y_order, self.trunc_order);
        for n in 0..=self.trunc_order {
            let src = self.row(n).to_vec();
            let dst = out.row_mut(n);
            for m in 1..=self.y_order {
                dst[m - 1] = src[m] * m as f64;
            }
        }
        out
    }

    /// Euler operator `y d/dy`: multiplies the `y^m` coefficient by `m`.
    ///
    /// With `y = e^{ix}`, `d/dx = i (y d/dy)`.
    pub fn euler_y(&self) -> Self {
        let mut out = self.clone();
        for n in 0..=self.trunc_order {
            for (m, c) in out.row_mut(n).iter_mut().enumerate() {
                *c *= m as f64;
            }
        }
        out
    }

    /// Substitutes `y = y0`, evaluating each z-row by Horner's rule.
    pub fn eval_y(&self, y0: C64) -> UniSeries {
        let coeffs = (0..=self.trunc_order)
            .map(|n| horner(self.row(n), y0))
            .collect();
        UniSeries {
            coeffs,
            trunc_order: self.trunc_order,
        }
    }

    /// Full evaluation at `(y0, z0)`.
    pub fn eval(&self, y0: C64, z0: C64) -> C64 {
        self.eval_y(y0).eval(z0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let (my, nz) = self.common_window(other);
        let mut worst = 0.0_f64;
        for n in 0..=nz {
            for m in 0..=my {
                worst = worst.max((self.coeff(m, n) - other.coeff(m, n)).norm());
            }
        }
        worst
    }

    /// Coefficient table as CSV with columns `m,n,re,im`, skipping exact zeros.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,re,im\n");
        for (m, n, c) in self.terms() {
            if c != ZERO {
                let _ = writeln!(out, "{m},{n},{:e},{:e}", c.re, c.im);
            }
        }
        out
    }
}

fn horner(poly: &[C64], x: C64) -> C64 {
    poly.iter().rev().fold(ZERO, |acc, &c| acc * x + c)
}

impl Add for &TruncatedSeries2 {
    type Output = TruncatedSeries2;

    fn add(self, rhs: Self) -> TruncatedSeries2 {
        let (my, nz) = self.common_window(rhs);
        let mut out = self.truncate(my, nz);
        for n in 0..=nz {
            for (dst, &b) in out.row_mut(n).iter_mut().zip(&rhs.row(n)[..=my]) {
                *dst += b;
            }
        }
        out
    }
}

impl Sub for &TruncatedSeries2 {
    type Output = TruncatedSeries2;

    fn sub(self, rhs: Self) -> TruncatedSeries2 {
        self + &(-rhs)
    }
}

impl Neg for &TruncatedSeries2 {
    type Output = TruncatedSeries2;

    fn neg(self) -> TruncatedSeries2 {
        self.scale(-ONE)
    }
}

impl Mul for &TruncatedSeries2 {
    type Output = TruncatedSeries2;

    fn mul(self, rhs: Self) -> TruncatedSeries2 {
        self.ps_mul(rhs)
    }
}

/// Univariate truncated power series `sum c_n z^n`, `n <= trunc_order`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniSeries {
    coeffs: Vec<C64>,
    trunc_order: usize,
}

impl UniSeries {
    pub fn zero(trunc_order: usize) -> Self {
        Self {
            coeffs: vec![ZERO; trunc_order + 1],
            trunc_order,
        }
    }

    /// Pads or truncates `coeffs` to `trunc_order + 1` terms.
    pub fn from_coeffs(mut coeffs: Vec<C64>, trunc_order: usize) -> Self {
        coeffs.resize(trunc_order + 1, ZERO);
        Self {
            coeffs,
            trunc_order,
        }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn trunc_order(&self) -> usize {
        self.trunc_order
    }

    pub fn coeff(&self, n: usize) -> C64 {
        self.coeffs.get(n).copied().unwrap_or(ZERO)
    }

    pub fn eval(&self, z: C64) -> C64 {
        horner(&self.coeffs, z)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&a| a * c).collect(),
            trunc_order: self.trunc_order,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.trunc_order.min(other.trunc_order);
        Self {
            coeffs: (0..=n).map(|i| self.coeffs[i] + other.coeffs[i]).collect(),
            trunc_order: n,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.trunc_order.min(other.trunc_order);
        let mut out = vec![ZERO; n + 1];
        poly_mul_acc(&self.coeffs[..=n], &other.coeffs[..=n], &mut out);
        Self {
            coeffs: out,
            trunc_order: n,
        }
    }

    pub fn div(&self, divisor: &Self) -> Result<Self> {
        let n = self.trunc_order.min(divisor.trunc_order);
        let inv = poly_inv(&divisor.coeffs[..=n], n + 1)?;
        let mut out = vec![ZERO; n + 1];
        poly_mul_acc(&self.coeffs[..=n], &inv, &mut out);
        Ok(Self {
            coeffs: out,
            trunc_order: n,
        })
    }

    pub fn derivative(&self) -> Self {
        let n = self.trunc_order.saturating_sub(1);
        let coeffs = (0..=n)
            .map(|k| self.coeff(k + 1) * (k + 1) as f64)
            .collect();
        Self {
            coeffs,
            trunc_order: n,
        }
    }
}
