//! Kernels `g(x, z)`: the reciprocal of `sum_n phi_{Y_n}(x) z^n`.
//!
//! A kernel is holomorphic in `z` near the closed unit disc and twice
//! differentiable in the frequency `x`, with `g(0, z) = 1 - z`. Two kernels are
//! built in: the i.i.d. kernel `1 - phi_X(x) z` and the stack-sorting descent
//! kernel `-(1 + F^(e^{ix}, z)) / F^_z(e^{ix}, z)`. Black-box kernels can be
//! wrapped with [`FnKernel`] and coefficient tables with [`SeriesKernel`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs;
use crate::error::{Error, Result};
use crate::series::{TruncatedSeries2, UniSeries, C64};

/// Default z-truncation of the descent kernel.
pub const DEFAULT_DEFANT_TRUNC: usize = 64;
/// Half-width of the validated x-neighbourhood of the descent kernel.
pub const DEFANT_X_BOX: f64 = 0.75;
/// z-radius inside which the descent kernel's denominator stays away from zero for |x| <= 0.75.
pub const DEFANT_Z_RADIUS: f64 = 1.5;
pub const IID_Z_RADIUS: f64 = 2.0;
pub const IID_X_BOX: f64 = 1.0;

const SELF_CHECK_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivMode {
    Analytic,
    FiniteDifference,
}

/// Value and first/second partials of `g` at one point.
///
/// Only the partials entering the limit formulas are carried:
/// `g_z`, `g_{x_j}`, `g_{x_j z}` and `g_{x_j x_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: C64,
    pub dz: C64,
    pub dx: Vec<C64>,
    pub dxz: Vec<C64>,
    pub dxx: Vec<Vec<C64>>,
}

pub trait Kernel: Send + Sync {
    fn name(&self) -> String;

    /// Dimension `d` of the frequency vector `x`.
    fn dim(&self) -> usize;

    /// Radius in `z` (> 1) on which `g(x, .)` is holomorphic for `x` in the box.
    fn z_radius(&self) -> f64;

    /// Half-width of the box `|x_j| <= x_box` where `eval` is valid.
    fn x_box(&self) -> f64;

    fn deriv_mode(&self) -> DerivMode;

    fn eval(&self, x: &[f64], z: C64) -> Result<C64>;

    /// `(g, g_z)` at one point. The default differentiates numerically on a
    /// small circle around `z`.
    fn eval_with_dz(&self, x: &[f64], z: C64) -> Result<(C64, C64)> {
        let rho = (self.z_radius() - z.norm()).min(0.5) / 2.0;
        let d = coeffs::cauchy_z_derivs_at(self, x, z, rho, 1)?;
        Ok((d[0], d[1]))
    }

    /// Exact partials, for kernels with `DerivMode::Analytic`.
    fn analytic_jet(&self, _x: &[f64], _z: C64) -> Option<Result<Jet>> {
        None
    }

    /// Power series of `g(x, .)` in `z`, when the kernel has one.
    fn z_series(&self, _x: &[f64], _order: usize) -> Option<Result<UniSeries>> {
        None
    }
}

impl fmt::Debug for dyn Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name())
            .field("dim", &self.dim())
            .field("z_radius", &self.z_radius())
            .field("x_box", &self.x_box())
            .finish()
    }
}

pub(crate) fn check_domain(k: &(impl Kernel + ?Sized), x: &[f64], z: C64) -> Result<()> {
    if x.len() != k.dim() {
        return Err(Error::InvalidArgument(format!(
            "x has dimension {}, kernel expects {}",
            x.len(),
            k.dim()
        )));
    }
    if let Some(xj) = x.iter().find(|v| !(v.abs() <= k.x_box())) {
        return Err(Error::Domain(format!(
            "x component {xj} outside the kernel box |x| <= {}",
            k.x_box()
        )));
    }
    if !(z.norm() <= k.z_radius()) {
        return Err(Error::Domain(format!(
            "|z| = {} exceeds the kernel radius {}",
            z.norm(),
            k.z_radius()
        )));
    }
    Ok(())
}

/// Finite discrete distribution on `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    support: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        if support.is_empty() {
            return bad("empty support".into());
        }
        if support.len() != probs.len() {
            return bad(format!(
                "{} atoms but {} probabilities",
                support.len(),
                probs.len()
            ));
        }
        let d = support[0].len();
        if d == 0 || support.iter().any(|a| a.len() != d) {
            return bad("atoms must share a positive dimension".into());
        }
        if support.iter().flatten().any(|v| !v.is_finite()) {
            return bad("atoms must be finite".into());
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return bad("probabilities must be nonnegative".into());
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { support, probs })
    }

    /// Distribution on real atoms.
    pub fn univariate(atoms: &[f64], probs: &[f64]) -> Result<Self> {
        Self::new(atoms.iter().map(|&a| vec![a]).collect(), probs.to_vec())
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::univariate(&[0.0, 1.0], &[1.0 - p, p])
    }

    pub fn point_mass(atom: f64) -> Self {
        Self {
            support: vec![vec![atom]],
            probs: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Distribution of `c X`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            support: self
                .support
                .iter()
                .map(|a| a.iter().map(|v| v * c).collect())
                .collect(),
            probs: self.probs.clone(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (a, &p) in self.support.iter().zip(&self.probs) {
            for (mj, aj) in m.iter_mut().zip(a) {
                *mj += p * aj;
            }
        }
        m
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mean = self.mean();
        let mut cov = vec![vec![0.0; d]; d];
        for (a, &p) in self.support.iter().zip(&self.probs) {
            for j in 0..d {
                for k in 0..d {
                    cov[j][k] += p * (a[j] - mean[j]) * (a[k] - mean[k]);
                }
            }
        }
        cov
    }

    /// `phi(x) = E[exp(i <X, x>)]` with its gradient and Hessian.
    fn char_fn_jet(&self, x: &[f64]) -> (C64, Vec<C64>, Vec<Vec<C64>>) {
        let d = self.dim();
        let mut phi = C64::new(0.0, 0.0);
        let mut grad = vec![C64::new(0.0, 0.0); d];
        let mut hess = vec![vec![C64::new(0.0, 0.0); d]; d];
        for (a, &p) in self.support.iter().zip(&self.probs) {
            let phase: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
            let e = C64::from_polar(p, phase);
            phi += e;
            for j in 0..d {
                grad[j] += C64::i() * a[j] * e;
                for k in 0..d {
                    hess[j][k] -= a[j] * a[k] * e;
                }
            }
        }
        (phi, grad, hess)
    }
}

/// `g(x, z) = 1 - phi_X(x) z` for partial sums of i.i.d. copies of `X`.
#[derive(Clone, Debug)]
pub struct IidKernel {
    dist: DiscreteDist,
}

impl IidKernel {
    pub fn new(dist: DiscreteDist) -> Self {
        Self { dist }
    }

    pub fn dist(&self) -> &DiscreteDist {
        &self.dist
    }

    pub fn char_fn(&self, x: &[f64]) -> C64 {
        self.dist.char_fn_jet(x).0
    }
}

pub fn make_iid_kernel(dist: DiscreteDist) -> IidKernel {
    IidKernel::new(dist)
}

impl Kernel for IidKernel {
    fn name(&self) -> String {
        format!(
            "iid({} atoms, d = {})",
            self.dist.probs.len(),
            self.dist.dim()
        )
    }

    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn z_radius(&self) -> f64 {
        IID_Z_RADIUS
    }

    fn x_box(&self) -> f64 {
        IID_X_BOX
    }

    fn deriv_mode(&self) -> DerivMode {
        DerivMode::Analytic
    }

    fn eval(&self, x: &[f64], z: C64) -> Result<C64> {
        check_domain(self, x, z)?;
        Ok(1.0 - self.char_fn(x) * z)
    }

    fn eval_with_dz(&self, x: &[f64], z: C64) -> Result<(C64, C64)> {
        check_domain(self, x, z)?;
        let phi = self.char_fn(x);
        Ok((1.0 - phi * z, -phi))
    }

    fn analytic_jet(&self, x: &[f64], z: C64) -> Option<Result<Jet>> {
        Some(check_domain(self, x, z).map(|()| {
            let (phi, grad, hess) = self.dist.char_fn_jet(x);
            Jet {
                value: 1.0 - phi * z,
                dz: -phi,
                dx: grad.iter().map(|&g| -g * z).collect(),
                dxz: grad.iter().map(|&g| -g).collect(),
                dxx: hess
                    .iter()
                    .map(|row| row.iter().map(|&h| -h * z).collect())
                    .collect(),
            }
        }))
    }

    fn z_series(&self, x: &[f64], order: usize) -> Option<Result<UniSeries>> {
        Some(
            check_domain(self, x, C64::new(0.0, 0.0)).map(|()| {
                UniSeries::from_coeffs(vec![C64::new(1.0, 0.0), -self.char_fn(x)], order)
            }),
        )
    }
}

/// Sums `T[a][b] = sum_{m,n} (i m)^a n(n-1)..(n-b+1) s_{m,n} y^m z^(n-b)`
/// for `a, b` in `0..=2`, with `y = e^{ix}`.
///
/// `a` counts x-derivatives (each `d/dx` of `y^m` brings down `i m`), `b`
/// counts z-derivatives.
fn weighted_sums(s: &TruncatedSeries2, x: f64, z: C64) -> [[C64; 3]; 3] {
    let zero = C64::new(0.0, 0.0);
    let y = C64::from_polar(1.0, x);
    let nz = s.trunc_order();
    // rows[a][n] = sum_m (i m)^a s_{m,n} y^m
    let mut rows = vec![[zero; 3]; nz + 1];
    for (n, acc) in rows.iter_mut().enumerate() {
        let mut ym = C64::new(1.0, 0.0);
        for (m, &c) in s.row(n).iter().enumerate() {
            if c != zero {
                let t = c * ym;
                let im = C64::new(0.0, m as f64);
                acc[0] += t;
                acc[1] += im * t;
                acc[2] += im * im * t;
            }
            ym *= y;
        }
    }
    let mut out = [[zero; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            // Horner over n >= b of falling(n, b) rows[n][a] z^(n-b)
            let mut acc = zero;
            for n in (b..=nz).rev() {
                let falling = (0..b).map(|k| (n - k) as f64).product::<f64>();
                acc = acc * z + rows[n][a] * falling;
            }
            out[a][b] = acc;
        }
    }
    out
}

/// Kernel of the descent statistic `des(s(pi)) + 1` of stack-sorted permutations.
///
/// Built from `F(y, z) = (y / 2)(-1 - yz + sqrt(1 - 4z + 2yz + y^2 z^2))` and
/// its coefficient-wise Borel transform `F^`, then
/// `g(x, z) = -(1 + F^(e^{ix}, z)) / F^_z(e^{ix}, z)`.
#[derive(Clone, Debug)]
pub struct DefantKernel {
    f: TruncatedSeries2,
    fhat: TruncatedSeries2,
    trunc: usize,
}

impl DefantKernel {
    pub fn new(trunc: usize) -> Result<Self> {
        if trunc < 8 {
            return Err(Error::InvalidKernel(format!(
                "descent kernel truncation must be at least 8, got {trunc}"
            )));
        }
        let f = defant_f(trunc)?;
        let fhat = f.borel_z();
        Ok(Self { f, fhat, trunc })
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    /// `F(y, z)` as a truncated series.
    pub fn f_series(&self) -> &TruncatedSeries2 {
        &self.f
    }

    /// `F^(y, z)`, the z-Borel transform of `F`.
    pub fn fhat_series(&self) -> &TruncatedSeries2 {
        &self.fhat
    }

    fn singular(x: &[f64], z: C64) -> Error {
        Error::SingularKernel {
            x: x.to_vec(),
            z: z.to_string(),
            reason: "F^_z(e^{ix}, z) vanishes",
        }
    }
}

/// `F(y, z)` truncated at `z^trunc`, with `y`-window `trunc + 1`.
///
/// Every term of the radicand has `m <= n`, so the square root does too and
/// `F` satisfies `F_{m,n} = 0` for `m > n + 1`; the y-window loses nothing.
pub fn defant_f(trunc: usize) -> Result<TruncatedSeries2> {
    let my = trunc + 1;
    let one = C64::new(1.0, 0.0);
    let radicand = TruncatedSeries2::from_terms(
        [
            (0, 0, one),
            (0, 1, C64::new(-4.0, 0.0)),
            (1, 1, C64::new(2.0, 0.0)),
            (2, 2, one),
        ],
        my,
        trunc,
    );
    let root = radicand.ps_sqrt()?;
    let one_plus_yz = TruncatedSeries2::from_terms([(0, 0, one), (1, 1, one)], my, trunc);
    Ok((&root - &one_plus_yz).shift_y(1).scale(C64::new(0.5, 0.0)))
}

pub fn make_defant_kernel(trunc: usize) -> Result<DefantKernel> {
    DefantKernel::new(trunc)
}

impl Kernel for DefantKernel {
    fn name(&self) -> String {
        format!("defant(trunc = {})", self.trunc)
    }

    fn dim(&self) -> usize {
        1
    }

    fn z_radius(&self) -> f64 {
        DEFANT_Z_RADIUS
    }

    fn x_box(&self) -> f64 {
        DEFANT_X_BOX
    }

    fn deriv_mode(&self) -> DerivMode {
        DerivMode::Analytic
    }

    fn eval(&self, x: &[f64], z: C64) -> Result<C64> {
        check_domain(self, x, z)?;
        let s = self.fhat.eval_y(C64::from_polar(1.0, x[0]));
        let num = 1.0 + s.eval(z);
        let den = s.derivative().eval(z);
        if den.norm() < SINGULAR_TOL {
            return Err(Self::singular(x, z));
        }
        Ok(-num / den)
    }

    fn eval_with_dz(&self, x: &[f64], z: C64) -> Result<(C64, C64)> {
        let jet = self.analytic_jet(x, z).expect("analytic kernel")?;
        Ok((jet.value, jet.dz))
    }

    fn analytic_jet(&self, x: &[f64], z: C64) -> Option<Result<Jet>> {
        Some(check_domain(self, x, z).and_then(|()| {
            let t = weighted_sums(&self.fhat, x[0], z);
            // numerator N = 1 + F^, denominator D = F^_z
            let (n, n_x, n_xx, n_z, n_xz) = (1.0 + t[0][0], t[1][0], t[2][0], t[0][1], t[1][1]);
            let (d, d_x, d_xx, d_z, d_xz) = (t[0][1], t[1][1], t[2][1], t[0][2], t[1][2]);
            if d.norm() < SINGULAR_TOL {
                return Err(Self::singular(x, z));
            }
            let u = d.inv();
            let u2 = u * u;
            let u3 = u2 * u;
            let u_x = -d_x * u2;
            let u_z = -d_z * u2;
            let u_xx = -d_xx * u2 + 2.0 * d_x * d_x * u3;
            let u_xz = -d_xz * u2 + 2.0 * d_x * d_z * u3;
            Ok(Jet {
                value: -n * u,
                dz: -(n_z * u + n * u_z),
                dx: vec![-(n_x * u + n * u_x)],
                dxz: vec![-(n_xz * u + n_x * u_z + n_z * u_x + n * u_xz)],
                dxx: vec![vec![-(n_xx * u + 2.0 * n_x * u_x + n * u_xx)]],
            })
        }))
    }

    fn z_series(&self, x: &[f64], order: usize) -> Option<Result<UniSeries>> {
        Some(check_domain(self, x, C64::new(0.0, 0.0)).and_then(|()| {
            let avail = self.trunc - 1;
            if order > avail {
                return Err(Error::TruncationExceeded {
                    requested: order,
                    available: avail,
                });
            }
            let s = self.fhat.eval_y(C64::from_polar(1.0, x[0]));
            let one = UniSeries::from_coeffs(vec![C64::new(1.0, 0.0)], self.trunc);
            let num = one.add(&s);
            let den = s.derivative();
            let g = num
                .div(&den)
                .map_err(|_| Self::singular(x, C64::new(0.0, 0.0)))?;
            Ok(UniSeries::from_coeffs(
                g.scale(C64::new(-1.0, 0.0)).coeffs()[..=order].to_vec(),
                order,
            ))
        }))
    }
}

/// Which side of `f = 1/g` a coefficient table describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesSide {
    G,
    F,
}

/// Kernel given by a coefficient table in `(y, z)` with `y = e^{ix}`.
///
/// A table for `f` is inverted once at construction; `g` is then the
/// truncated series of `1 / f`.
#[derive(Clone, Debug)]
pub struct SeriesKernel {
    g: TruncatedSeries2,
    z_radius: f64,
    x_box: f64,
}

impl SeriesKernel {
    pub fn new(
        side: SeriesSide,
        table: TruncatedSeries2,
        z_radius: f64,
        x_box: f64,
    ) -> Result<Self> {
        if !(z_radius > 1.0) || !(x_box > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "need z_radius > 1 and x_box > 0, got {z_radius} and {x_box}"
            )));
        }
        let g = match side {
            SeriesSide::G => table,
            SeriesSide::F => {
                let one = TruncatedSeries2::one(table.y_order(), table.trunc_order());
                one.ps_div(&table)
                    .map_err(|_| Error::InvalidKernel("f table has zero constant term".into()))?
            }
        };
        Ok(Self { g, z_radius, x_box })
    }

    pub fn g_series(&self) -> &TruncatedSeries2 {
        &self.g
    }
}

impl Kernel for SeriesKernel {
    fn name(&self) -> String {
        format!(
            "series(y <= {}, z <= {})",
            self.g.y_order(),
            self.g.trunc_order()
        )
    }

    fn dim(&self) -> usize {
        1
    }

    fn z_radius(&self) -> f64 {
        self.z_radius
    }

    fn x_box(&self) -> f64 {
        self.x_box
    }

    fn deriv_mode(&self) -> DerivMode {
        DerivMode::Analytic
    }

    fn eval(&self, x: &[f64], z: C64) -> Result<C64> {
        check_domain(self, x, z)?;
        Ok(self.g.eval(C64::from_polar(1.0, x[0]), z))
    }

    fn eval_with_dz(&self, x: &[f64], z: C64) -> Result<(C64, C64)> {
        check_domain(self, x, z)?;
        let t = weighted_sums(&self.g, x[0], z);
        Ok((t[0][0], t[0][1]))
    }

    fn analytic_jet(&self, x: &[f64], z: C64) -> Option<Result<Jet>> {
        Some(check_domain(self, x, z).map(|()| {
            let t = weighted_sums(&self.g, x[0], z);
            Jet {
                value: t[0][0],
                dz: t[0][1],
                dx: vec![t[1][0]],
                dxz: vec![t[1][1]],
                dxx: vec![vec![t[2][0]]],
            }
        }))
    }

    fn z_series(&self, x: &[f64], order: usize) -> Option<Result<UniSeries>> {
        Some(check_domain(self, x, C64::new(0.0, 0.0)).and_then(|()| {
            let s = self.g.eval_y(C64::from_polar(1.0, x[0]));
            if order > s.trunc_order() {
                return Err(Error::TruncationExceeded {
                    requested: order,
                    available: s.trunc_order(),
                });
            }
            Ok(UniSeries::from_coeffs(s.coeffs()[..=order].to_vec(), order))
        }))
    }
}

type KernelFn = dyn Fn(&[f64], C64) -> C64 + Send + Sync;

/// Black-box kernel; every derivative is taken numerically.
#[derive(Clone)]
pub struct FnKernel {
    name: String,
    dim: usize,
    z_radius: f64,
    x_box: f64,
    f: Arc<KernelFn>,
}

impl FnKernel {
    pub fn new<F>(name: impl Into<String>, dim: usize, z_radius: f64, x_box: f64, f: F) -> Self
    where
        F: Fn(&[f64], C64) -> C64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            z_radius,
            x_box,
            f: Arc::new(f),
        }
    }
}

impl Kernel for FnKernel {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn z_radius(&self) -> f64 {
        self.z_radius
    }

    fn x_box(&self) -> f64 {
        self.x_box
    }

    fn deriv_mode(&self) -> DerivMode {
        DerivMode::FiniteDifference
    }

    fn eval(&self, x: &[f64], z: C64) -> Result<C64> {
        check_domain(self, x, z)?;
        Ok((self.f)(x, z))
    }
}

/// Outcome of [`kernel_self_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    /// `max |g(0, z) - (1 - z)|` over a 32-point grid in the closed unit disc.
    pub max_dev_identity: f64,
    /// `|g(0, 1)|`.
    pub g_at_origin: f64,
    /// `|g_z(0, 1) + 1|`.
    pub gz_dev: f64,
    pub passed: bool,
    pub error: Option<String>,
}

impl SelfCheck {
    pub fn max_deviation(&self) -> f64 {
        self.max_dev_identity.max(self.g_at_origin).max(self.gz_dev)
    }
}

/// The 32-point grid: four rings (radii 1/4 .. 1) of eight points each.
pub fn self_check_grid() -> Vec<C64> {
    (1..=4)
        .flat_map(|ring| {
            let r = ring as f64 / 4.0;
            (0..8).map(move |j| {
                let theta = std::f64::consts::TAU * (j as f64 + 0.5 * (ring % 2) as f64) / 8.0;
                C64::from_polar(r, theta)
            })
        })
        .collect()
}

/// Checks `g(0, z) = 1 - z`, `g(0, 1) = 0` and `g_z(0, 1) = -1`. Never fails;
/// evaluation errors are reported in the record.
pub fn kernel_self_check(k: &(impl Kernel + ?Sized)) -> SelfCheck {
    let x0 = vec![0.0; k.dim()];
    let run = || -> Result<(f64, f64, f64)> {
        let mut worst = 0.0_f64;
        for z in self_check_grid() {
            worst = worst.max((k.eval(&x0, z)? - (1.0 - z)).norm());
        }
        let (g, gz) = k.eval_with_dz(&x0, C64::new(1.0, 0.0))?;
        Ok((worst, g.norm(), (gz + 1.0).norm()))
    };
    match run() {
        Ok((dev, g, gz)) => SelfCheck {
            max_dev_identity: dev,
            g_at_origin: g,
            gz_dev: gz,
            passed: dev < SELF_CHECK_TOL && g < SELF_CHECK_TOL && gz < SELF_CHECK_TOL,
            error: None,
        },
        Err(e) => SelfCheck {
            max_dev_identity: f64::INFINITY,
            g_at_origin: f64::INFINITY,
            gz_dev: f64::INFINITY,
            passed: false,
            error: Some(e.to_string()),
        },
    }
}

/// Atom of an i.i.d. kernel spec: a real number or a d-vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Atom {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Atom {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Atom::Scalar(v) => vec![v],
            Atom::Vector(v) => v,
        }
    }
}

fn default_trunc() -> usize {
    DEFAULT_DEFANT_TRUNC
}

/// Kernel specification file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Iid {
        support: Vec<Atom>,
        probs: Vec<f64>,
    },
    Defant {
        #[serde(default = "default_trunc")]
        trunc: usize,
    },
    Series {
        which: SeriesSide,
        coeffs: Vec<[f64; 4]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_box: Option<f64>,
    },
}

impl KernelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidKernel(e.to_string()))
    }

    pub fn build(&self) -> Result<Box<dyn Kernel>> {
        match self {
            KernelSpec::Iid { support, probs } => {
                let support = support.iter().cloned().map(Atom::into_vec).collect();
                let dist = DiscreteDist::new(support, probs.clone())?;
                Ok(Box::new(IidKernel::new(dist)))
            }
            KernelSpec::Defant { trunc } => Ok(Box::new(DefantKernel::new(*trunc)?)),
            KernelSpec::Series {
                which,
                coeffs,
                z_radius,
                x_box,
            } => {
                let mut terms = Vec::with_capacity(coeffs.len());
                for &[m, n, re, im] in coeffs {
                    let index = |v: f64| -> Result<usize> {
                        if v >= 0.0 && v.fract() == 0.0 && v < 1e6 {
                            Ok(v as usize)
                        } else {
                            Err(Error::InvalidKernel(format!("bad coefficient index {v}")))
                        }
                    };
                    terms.push((index(m)?, index(n)?, C64::new(re, im)));
                }
                if terms.is_empty() {
                    return Err(Error::InvalidKernel("empty coefficient table".into()));
                }
                let my = terms.iter().map(|t| t.0).max().unwrap_or(0);
                let nz = terms.iter().map(|t| t.1).max().unwrap_or(0).max(2);
                let table = TruncatedSeries2::from_terms(terms, my, nz);
                Ok(Box::new(SeriesKernel::new(
                    *which,
                    table,
                    z_radius.unwrap_or(IID_Z_RADIUS),
                    x_box.unwrap_or(DEFANT_X_BOX),
                )?))
            }
        }
    }
}
