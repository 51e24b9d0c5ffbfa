//! Recovery of the characteristic-function sequence `phi_{Y_n}(x)` as the
//! Taylor coefficients of `f(x, .) = 1 / g(x, .)`.
//!
//! Two independent routes: exact series division when the kernel has a
//! z-series, and the trapezoidal rule for the Cauchy integral on a circle
//! inside the dominant pole.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::Kernel;
use crate::series::{UniSeries, C64};
use crate::singularity;

/// Nodes used for Cauchy differentiation on small circles.
const CAUCHY_DIFF_NODES: usize = 64;
const MIN_NODES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiMethod {
    Series,
    Quadrature,
}

impl PhiMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PhiMethod::Series => "series",
            PhiMethod::Quadrature => "quadrature",
        }
    }
}

/// `phi_{Y_n}(x)` for `n = 0..=n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiSequence {
    pub x: Vec<f64>,
    pub values: Vec<C64>,
    pub method: PhiMethod,
}

impl PhiSequence {
    pub fn n_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn max_abs_diff(&self, other: &PhiSequence) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `n,re,im,method`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,re,im,method\n");
        self.write_csv_rows(&mut out);
        out
    }

    pub fn write_csv_rows(&self, out: &mut String) {
        for (n, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{n},{:e},{:e},{}", v.re, v.im, self.method.as_str());
        }
    }
}

/// Exact coefficients of `1 / g(x, .)` by series division.
pub fn phi_by_series(k: &(impl Kernel + ?Sized), x: &[f64], n_max: usize) -> Result<PhiSequence> {
    let g = k.z_series(x, n_max).ok_or_else(|| {
        Error::InvalidArgument(format!("kernel {} has no z-series form", k.name()))
    })??;
    let one = UniSeries::from_coeffs(vec![C64::new(1.0, 0.0)], n_max);
    let f = one.div(&g)?;
    Ok(PhiSequence {
        x: x.to_vec(),
        values: f.coeffs().to_vec(),
        method: PhiMethod::Series,
    })
}

/// Quadrature radius: `0.9 |b(x)|` when the dominant root can be tracked,
/// otherwise `0.9`.
pub fn default_quadrature_radius(k: &(impl Kernel + ?Sized), x: &[f64]) -> f64 {
    match singularity::track_root(k, x) {
        Ok(s) => 0.9 * s.b.norm(),
        Err(_) => 0.9,
    }
}

pub fn default_node_count(n_max: usize) -> usize {
    MIN_NODES.max(4 * n_max)
}

/// Trapezoidal Cauchy integral on `|w| = r`:
/// `phi_n ~= (1 / (m r^n)) sum_j f(x, r w_j) w_j^{-n}` with `w_j = e^{2 pi i j / m}`.
pub fn phi_by_quadrature(
    k: &(impl Kernel + ?Sized),
    x: &[f64],
    n_max: usize,
    r: f64,
    m_nodes: usize,
) -> Result<PhiSequence> {
    phi_by_quadrature_with(Execution::default(), k, x, n_max, r, m_nodes)
}

pub fn phi_by_quadrature_with(
    exec: Execution,
    k: &(impl Kernel + ?Sized),
    x: &[f64],
    n_max: usize,
    r: f64,
    m_nodes: usize,
) -> Result<PhiSequence> {
    if !(r > 0.0) || r >= k.z_radius() {
        return Err(Error::QuadratureDomain(format!(
            "radius {r} outside (0, {})",
            k.z_radius()
        )));
    }
    if m_nodes < 4 * n_max.max(1) {
        return Err(Error::InvalidArgument(format!(
            "{m_nodes} nodes cannot resolve {n_max} coefficients (need >= {})",
            4 * n_max.max(1)
        )));
    }
    let g_nodes = exec.map_range(m_nodes, |j| {
        k.eval(x, C64::from_polar(r, TAU * j as f64 / m_nodes as f64))
    });
    let g_nodes: Vec<C64> = g_nodes.into_iter().collect::<Result<_>>()?;

    let scale = g_nodes.iter().map(|g| g.norm()).fold(0.0, f64::max);
    if g_nodes.iter().any(|g| g.norm() <= 1e-12 * scale.max(1.0)) {
        return Err(Error::QuadratureDomain(format!(
            "kernel vanishes on the circle |w| = {r}"
        )));
    }
    // Argument principle: g is holomorphic inside the circle, so a nonzero
    // winding number means 1/g has a pole there.
    let winding: f64 = (0..m_nodes)
        .map(|j| (g_nodes[(j + 1) % m_nodes] / g_nodes[j]).arg())
        .sum::<f64>()
        / TAU;
    if winding.round() != 0.0 {
        return Err(Error::QuadratureDomain(format!(
            "{} pole(s) of 1/g inside |w| = {r}; choose a radius below the dominant root",
            winding.round()
        )));
    }

    let f_nodes: Vec<C64> = g_nodes.iter().map(|g| g.inv()).collect();
    let values = (0..=n_max)
        .map(|n| {
            let mut acc = C64::new(0.0, 0.0);
            for (j, fj) in f_nodes.iter().enumerate() {
                let angle = -TAU * ((j * n) % m_nodes) as f64 / m_nodes as f64;
                acc += fj * C64::from_polar(1.0, angle);
            }
            acc / (m_nodes as f64 * r.powi(n as i32))
        })
        .collect();
    Ok(PhiSequence {
        x: x.to_vec(),
        values,
        method: PhiMethod::Quadrature,
    })
}

/// z-derivatives `g, g_z, ..., d^order g / dz^order` at `z = 1` by Cauchy's
/// formula on a circle of radius `min(z_radius - 1, 0.5) / 2`.
pub fn cauchy_z_derivs(k: &(impl Kernel + ?Sized), x: &[f64], order: usize) -> Result<Vec<C64>> {
    let rho = (k.z_radius() - 1.0).min(0.5) / 2.0;
    cauchy_z_derivs_at(k, x, C64::new(1.0, 0.0), rho, order)
}

/// `k! / (2 pi i) oint g(w) / (w - z0)^(k+1) dw` by the trapezoidal rule.
pub fn cauchy_z_derivs_at(
    k: &(impl Kernel + ?Sized),
    x: &[f64],
    z0: C64,
    rho: f64,
    order: usize,
) -> Result<Vec<C64>> {
    if !(rho > 0.0) || z0.norm() + rho > k.z_radius() {
        return Err(Error::Domain(format!(
            "Cauchy circle |z - {z0}| = {rho} leaves the kernel radius {}",
            k.z_radius()
        )));
    }
    let m = CAUCHY_DIFF_NODES;
    let samples: Vec<C64> = (0..m)
        .map(|j| k.eval(x, z0 + C64::from_polar(rho, TAU * j as f64 / m as f64)))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(order + 1);
    let mut factorial = 1.0;
    for p in 0..=order {
        if p > 0 {
            factorial *= p as f64;
        }
        let mut acc = C64::new(0.0, 0.0);
        for (j, s) in samples.iter().enumerate() {
            acc += s * C64::from_polar(1.0, -TAU * ((j * p) % m) as f64 / m as f64);
        }
        out.push(acc * factorial / (m as f64 * rho.powi(p as i32)));
    }
    Ok(out)
}
