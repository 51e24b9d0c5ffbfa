//! The dominant root `b(x)` of `g(x, .)` near `z = 1` and the principal part
//! `a(x) / (1 - z / b(x))` of `1 / g`.
//!
//! Roots are followed from `x = 0`, where `b = 1`, along the segment to the
//! target frequency in steps of at most [`MAX_X_STEP`], warm-starting Newton at
//! the previous root so the tracked zero stays on the implicit-function branch.

use serde::{Deserialize, Serialize};

use crate::coeffs::{self, PhiSequence};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::Kernel;
use crate::limits::LimitParams;
use crate::series::C64;

pub const MAX_X_STEP: f64 = 0.05;
/// Largest accepted move of `b` per continuation step.
pub const MAX_ROOT_JUMP: f64 = 0.2;
pub const NEWTON_TOL: f64 = 1e-13;
pub const NEWTON_MAX_ITERS: usize = 50;
/// Required fitted order of the remainder of `log b(x)`.
pub const TAYLOR_ORDER_THRESHOLD: f64 = 1.8;
/// Errors below this are treated as rounding noise in decay fits.
pub const DECAY_NOISE_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub x: Vec<f64>,
    pub b: C64,
    pub a: C64,
    pub newton_iters: usize,
    pub residual: f64,
}

struct NewtonOutcome {
    z: C64,
    iters: usize,
    residual: f64,
}

fn newton(k: &(impl Kernel + ?Sized), x: &[f64], start: C64) -> Result<NewtonOutcome> {
    let fail = |reason: String| Error::Tracking {
        x: x.to_vec(),
        reason,
    };
    let mut z = start;
    let (mut g, mut gz) = k.eval_with_dz(x, z)?;
    for iter in 0..NEWTON_MAX_ITERS {
        if g.norm() < NEWTON_TOL {
            return Ok(NewtonOutcome {
                z,
                iters: iter,
                residual: g.norm(),
            });
        }
        if gz.norm() == 0.0 {
            return Err(fail(format!("g_z vanishes at z = {z}")));
        }
        let mut step = g / gz;
        // Rounding floor: the step no longer moves z and |g| is already tiny.
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) && g.norm() < 1e-12 {
            return Ok(NewtonOutcome {
                z,
                iters: iter,
                residual: g.norm(),
            });
        }
        let mut accepted = None;
        for _ in 0..30 {
            let trial = z - step;
            if trial.norm() > k.z_radius() {
                step *= 0.5;
                continue;
            }
            let (gt, gzt) = k.eval_with_dz(x, trial)?;
            if gt.norm() <= g.norm() {
                accepted = Some((trial, gt, gzt));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, gt, gzt)) => {
                z = trial;
                g = gt;
                gz = gzt;
            }
            None if g.norm() < 1e-12 => {
                return Ok(NewtonOutcome {
                    z,
                    iters: iter,
                    residual: g.norm(),
                })
            }
            None => {
                return Err(fail(format!(
                    "damped Newton stalled at |g| = {:e}",
                    g.norm()
                )))
            }
        }
    }
    if g.norm() < 1e-12 {
        return Ok(NewtonOutcome {
            z,
            iters: NEWTON_MAX_ITERS,
            residual: g.norm(),
        });
    }
    Err(fail(format!(
        "no convergence in {NEWTON_MAX_ITERS} iterations (|g| = {:e})",
        g.norm()
    )))
}

fn finish(k: &(impl Kernel + ?Sized), x: &[f64], outcome: NewtonOutcome) -> Result<Singularity> {
    let b = outcome.z;
    if b.norm() > k.z_radius() {
        return Err(Error::Domain(format!(
            "root |b| = {} escaped the kernel radius {}",
            b.norm(),
            k.z_radius()
        )));
    }
    let (_, gz) = k.eval_with_dz(x, b)?;
    Ok(Singularity {
        x: x.to_vec(),
        b,
        a: -(gz * b).inv(),
        newton_iters: outcome.iters,
        residual: outcome.residual,
    })
}

/// Tracks `b(x)` by continuation from `x = 0` and returns it with the
/// principal-part amplitude `a(x) = -1 / (b(x) g_z(x, b(x)))`, so that
/// `1 / g(x, z) = a(x) / (1 - z / b(x)) + (analytic near b)`.
pub fn track_root(k: &(impl Kernel + ?Sized), x: &[f64]) -> Result<Singularity> {
    Ok(track_path(k, x)?
        .pop()
        .expect("path has at least one point"))
}

/// Tracks several targets; each continuation is independent.
pub fn track_many(
    exec: Execution,
    k: &(impl Kernel + ?Sized),
    xs: &[Vec<f64>],
) -> Vec<Result<Singularity>> {
    exec.map(xs.to_vec(), |x| track_root(k, &x))
}

/// Every accepted continuation point from `x = 0` to `x`, ending at `x`.
pub fn track_path(k: &(impl Kernel + ?Sized), x: &[f64]) -> Result<Vec<Singularity>> {
    if x.len() != k.dim() {
        return Err(Error::InvalidArgument(format!(
            "x has dimension {}, kernel expects {}",
            x.len(),
            k.dim()
        )));
    }
    if x.iter().any(|v| !(v.abs() <= k.x_box())) {
        return Err(Error::Domain(format!(
            "x = {x:?} outside the kernel box |x| <= {}",
            k.x_box()
        )));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let point = |t: f64| -> Vec<f64> { x.iter().map(|v| v * t).collect() };

    let origin = point(0.0);
    let mut path = vec![finish(k, &origin, newton(k, &origin, C64::new(1.0, 0.0))?)?];
    if norm == 0.0 {
        return Ok(path);
    }

    let max_dt = MAX_X_STEP / norm;
    let mut t = 0.0_f64;
    let mut dt = max_dt.min(1.0);
    while t < 1.0 {
        let t_next = (t + dt).min(1.0);
        let xt = point(t_next);
        let prev = path.last().expect("nonempty").b;
        match newton(k, &xt, prev) {
            Ok(out) if (out.z - prev).norm() < MAX_ROOT_JUMP => {
                path.push(finish(k, &xt, out)?);
                t = t_next;
                dt = (dt * 2.0).min(max_dt);
            }
            Ok(_) | Err(Error::Tracking { .. }) if dt > 1e-6 / norm => dt *= 0.5,
            Ok(out) => {
                return Err(Error::Tracking {
                    x: xt,
                    reason: format!("root jumped from {prev} to {}", out.z),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(path)
}

/// Principal-part approximation `a b^{-n}` of `phi_{Y_n}(x)`.
pub fn principal_part_phi(s: &Singularity, n: usize) -> C64 {
    s.a * s.b.powi(-(n as i32))
}

/// Points `x0 / 2^k`, `k = 0..=k_max`.
pub fn halving_sequence(x0: &[f64], k_max: usize) -> Vec<Vec<f64>> {
    (0..=k_max)
        .map(|k| x0.iter().map(|v| v / f64::powi(2.0, k as i32)).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorFit {
    /// Euclidean norms of the probe points.
    pub x_norms: Vec<f64>,
    /// `|log b(x) + i <mu, x> - <x, Sigma x> / 2|` at each probe.
    pub remainders: Vec<f64>,
    /// Least-squares slope of `log |R|` against `log |x|`.
    pub fitted_order: f64,
    pub passed: bool,
}

/// Remainder of the second-order expansion
/// `log b(x) = -i <mu, x> + <x, Sigma x> / 2 + o(|x|^2)` along `xs`.
pub fn log_b_taylor(
    k: &(impl Kernel + ?Sized),
    lp: &LimitParams,
    xs: &[Vec<f64>],
) -> Result<TaylorFit> {
    let roots = track_many(Execution::default(), k, xs);
    let mut x_norms = Vec::with_capacity(xs.len());
    let mut remainders = Vec::with_capacity(xs.len());
    for (x, root) in xs.iter().zip(roots) {
        let s = root?;
        let drift: f64 = lp.mu.iter().zip(x).map(|(m, v)| m * v).sum();
        let quad: f64 = (0..x.len())
            .map(|j| {
                (0..x.len())
                    .map(|l| x[j] * lp.sigma[j][l] * x[l])
                    .sum::<f64>()
            })
            .sum();
        let r = s.b.ln() + C64::new(0.0, drift) - 0.5 * quad;
        x_norms.push(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        remainders.push(r.norm());
    }
    let pts: Vec<(f64, f64)> = x_norms
        .iter()
        .zip(&remainders)
        .filter(|(&xn, &r)| xn > 0.0 && r > 1e-15)
        .map(|(&xn, &r)| (xn.ln(), r.ln()))
        .collect();
    let fitted_order = slope(&pts).unwrap_or(f64::INFINITY);
    Ok(TaylorFit {
        x_norms,
        remainders,
        fitted_order,
        passed: fitted_order > TAYLOR_ORDER_THRESHOLD,
    })
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub x: Vec<f64>,
    pub b: C64,
    pub a: C64,
    pub residual: f64,
    /// `e_n = |phi_{Y_n}(x) - a b^{-n}|` for `n = 0..=n_max`.
    pub errors: Vec<f64>,
    pub n_lo: usize,
    pub n_hi: usize,
    /// Slope of `log e_n` against `n` over `[n_lo, n_hi]`; `None` when every
    /// error is at the rounding floor (a pure pole).
    pub slope: Option<f64>,
    /// `exp(-slope)`: the radius whose `r^{-n}` bound the tail decays like.
    pub r_fit: Option<f64>,
    pub passed: bool,
}

/// Fits the decay of `|phi_{Y_n}(x) - a b^{-n}|` over the tail `[n_max / 3, n_max]`.
pub fn decay_rate_check(k: &(impl Kernel + ?Sized), x: &[f64], n_max: usize) -> Result<DecayFit> {
    let s = track_root(k, x)?;
    let phi = exact_phi(k, x, n_max, Some(&s))?;
    Ok(decay_fit(&s, &phi, n_max / 3, n_max))
}

/// Coefficients from the series route when the kernel has one, else by quadrature.
pub fn exact_phi(
    k: &(impl Kernel + ?Sized),
    x: &[f64],
    n_max: usize,
    root: Option<&Singularity>,
) -> Result<PhiSequence> {
    match coeffs::phi_by_series(k, x, n_max) {
        Ok(phi) => Ok(phi),
        Err(Error::InvalidArgument(_)) => {
            let r = match root {
                Some(s) => 0.9 * s.b.norm(),
                None => coeffs::default_quadrature_radius(k, x),
            };
            coeffs::phi_by_quadrature(k, x, n_max, r, coeffs::default_node_count(n_max))
        }
        Err(e) => Err(e),
    }
}

pub fn decay_fit(s: &Singularity, phi: &PhiSequence, n_lo: usize, n_hi: usize) -> DecayFit {
    let errors: Vec<f64> = phi
        .values
        .iter()
        .enumerate()
        .map(|(n, v)| (v - principal_part_phi(s, n)).norm())
        .collect();
    let n_hi = n_hi.min(errors.len().saturating_sub(1));
    let pts: Vec<(f64, f64)> = (n_lo..=n_hi)
        .filter(|&n| errors[n] > DECAY_NOISE_FLOOR)
        .map(|n| (n as f64, errors[n].ln()))
        .collect();
    let fitted = if pts.len() >= 3 { slope(&pts) } else { None };
    let (slope, r_fit, passed) = match fitted {
        Some(sl) => (Some(sl), Some((-sl).exp()), sl < 0.0),
        None => (None, None, true),
    };
    DecayFit {
        x: s.x.clone(),
        b: s.b,
        a: s.a,
        residual: s.residual,
        errors,
        n_lo,
        n_hi,
        slope,
        r_fit,
        passed,
    }
}
