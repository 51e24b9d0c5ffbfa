//! Drift `mu` and covariance `Sigma` of the Gaussian limit, read off the kernel
//! derivatives at `(x, z) = (0, 1)`:
//!
//! `mu_j = i g_{x_j}` and
//! `Sigma_{jk} = g_{x_j x_k} - i (mu_j g_{x_k z} + mu_k g_{x_j z}) + mu_j mu_k`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::coeffs;
use crate::error::{Error, Result};
use crate::kernel::{DerivMode, Jet, Kernel};
use crate::series::C64;

/// Eigenvalues of `Sigma` above this (and below zero) are rounding noise and clamped to 0.
pub const PSD_CLAMP: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    /// Largest imaginary part discarded when realising `mu` and `Sigma`.
    pub imag_residue: f64,
    /// Smallest eigenvalue of the symmetrised `Sigma` before clamping.
    pub psd_slack: f64,
}

pub fn compute_limits(k: &(impl Kernel + ?Sized)) -> Result<LimitParams> {
    let jet = kernel_jet(k, k.deriv_mode())?;
    Ok(limits_from_jet(&jet))
}

/// Jet at `(0, 1)` by the requested route.
pub fn kernel_jet(k: &(impl Kernel + ?Sized), mode: DerivMode) -> Result<Jet> {
    let x0 = vec![0.0; k.dim()];
    let z1 = C64::new(1.0, 0.0);
    match mode {
        DerivMode::Analytic => match k.analytic_jet(&x0, z1) {
            Some(jet) => jet,
            None => finite_diff_jet(k),
        },
        DerivMode::FiniteDifference => finite_diff_jet(k),
    }
}

pub fn limits_from_jet(jet: &Jet) -> LimitParams {
    let d = jet.dx.len();
    let i = C64::i();
    let mu_c: Vec<C64> = jet.dx.iter().map(|&g| i * g).collect();
    let mut imag_residue = mu_c.iter().map(|m| m.im.abs()).fold(0.0, f64::max);
    let mu: Vec<f64> = mu_c.iter().map(|m| m.re).collect();

    let mut raw = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            let s = jet.dxx[j][k] - i * (mu[j] * jet.dxz[k] + mu[k] * jet.dxz[j]) + mu[j] * mu[k];
            imag_residue = imag_residue.max(s.im.abs());
            raw[(j, k)] = s.re;
        }
    }
    let sym = (&raw + raw.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let psd_slack = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let sigma = if psd_slack < 0.0 && psd_slack > -PSD_CLAMP {
        let clamped = eig
            .eigenvalues
            .map(|v| if v < 0.0 && v > -PSD_CLAMP { 0.0 } else { v });
        let rebuilt =
            &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        (&rebuilt + rebuilt.transpose()) * 0.5
    } else {
        sym
    };
    LimitParams {
        mu,
        sigma: (0..d)
            .map(|j| (0..d).map(|k| sigma[(j, k)]).collect())
            .collect(),
        imag_residue,
        psd_slack,
    }
}

/// One x-partial requested from [`finite_diff_partials`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partial {
    X(usize),
    XX(usize, usize),
    Z,
    XZ(usize),
}

/// Step `h = 1e-4 max(1, x_box)`.
pub fn fd_step(k: &(impl Kernel + ?Sized)) -> f64 {
    1e-4 * k.x_box().max(1.0)
}

/// Partials of `g` at `(0, 1)` by central differences in `x` with one
/// Richardson level (`h` and `h / 2`); z-partials by Cauchy differentiation.
pub fn finite_diff_partials(k: &(impl Kernel + ?Sized), orders: &[Partial]) -> Result<Vec<C64>> {
    let h = fd_step(k);
    if 2.0 * h > k.x_box() {
        return Err(Error::Domain(format!(
            "x_box {} too small for finite-difference step {h}",
            k.x_box()
        )));
    }
    let d = k.dim();
    let z1 = C64::new(1.0, 0.0);
    let at = |shifts: &[(usize, f64)]| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for &(j, s) in shifts {
            x[j] += s;
        }
        x
    };
    let g = |x: Vec<f64>| k.eval(&x, z1);
    let gz = |x: Vec<f64>| -> Result<C64> { Ok(coeffs::cauchy_z_derivs(k, &x, 1)?[1]) };
    let richardson = |f: &dyn Fn(f64) -> Result<C64>| -> Result<C64> {
        let coarse = f(h)?;
        let fine = f(h / 2.0)?;
        Ok((4.0 * fine - coarse) / 3.0)
    };

    orders
        .iter()
        .map(|&p| match p {
            Partial::X(j) => {
                richardson(&|s| Ok((g(at(&[(j, s)]))? - g(at(&[(j, -s)]))?) / (2.0 * s)))
            }
            Partial::XX(j, l) if j == l => richardson(&|s| {
                Ok((g(at(&[(j, s)]))? - 2.0 * g(at(&[]))? + g(at(&[(j, -s)]))?) / (s * s))
            }),
            Partial::XX(j, l) => richardson(&|s| {
                let pp = g(at(&[(j, s), (l, s)]))?;
                let pm = g(at(&[(j, s), (l, -s)]))?;
                let mp = g(at(&[(j, -s), (l, s)]))?;
                let mm = g(at(&[(j, -s), (l, -s)]))?;
                Ok((pp - pm - mp + mm) / (4.0 * s * s))
            }),
            Partial::Z => gz(at(&[])),
            Partial::XZ(j) => {
                richardson(&|s| Ok((gz(at(&[(j, s)]))? - gz(at(&[(j, -s)]))?) / (2.0 * s)))
            }
        })
        .collect()
}

/// Full jet at `(0, 1)` assembled from [`finite_diff_partials`].
pub fn finite_diff_jet(k: &(impl Kernel + ?Sized)) -> Result<Jet> {
    let d = k.dim();
    let mut orders = vec![Partial::Z];
    orders.extend((0..d).map(Partial::X));
    orders.extend((0..d).map(Partial::XZ));
    for j in 0..d {
        for l in 0..d {
            orders.push(Partial::XX(j, l));
        }
    }
    let v = finite_diff_partials(k, &orders)?;
    let value = k.eval(&vec![0.0; d], C64::new(1.0, 0.0))?;
    let off = 1 + 2 * d;
    Ok(Jet {
        value,
        dz: v[0],
        dx: v[1..1 + d].to_vec(),
        dxz: v[1 + d..off].to_vec(),
        dxx: (0..d)
            .map(|j| v[off + j * d..off + (j + 1) * d].to_vec())
            .collect(),
    })
}
