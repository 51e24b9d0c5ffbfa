//! Permutation laboratory: West's stack-sorting map, descents of sorted
//! permutations, exact and sampled distributions of `des(s(pi)) + 1`, and a
//! Kolmogorov-Smirnov distance to the normal limit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::defant_f;

/// Largest `n` enumerated exhaustively (`10! = 3_628_800`).
pub const MAX_EXACT_N: usize = 10;
/// Samples per independent RNG stream in Monte Carlo runs.
pub const MC_CHUNK: usize = 8192;

/// A permutation of `1..=n` in one-line notation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Permutation(Vec<u32>);

impl Permutation {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        let n = entries.len();
        let mut seen = vec![false; n];
        for &v in &entries {
            let idx = (v as usize).wrapping_sub(1);
            if idx >= n || seen[idx] {
                return Err(Error::InvalidArgument(format!(
                    "{entries:?} is not a permutation of 1..={n}"
                )));
            }
            seen[idx] = true;
        }
        Ok(Self(entries))
    }

    pub fn identity(n: usize) -> Self {
        Self((1..=n as u32).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }
}

impl TryFrom<Vec<u32>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<u32> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

fn stack_sort_rec(p: &[u32], out: &mut Vec<u32>) {
    let Some((pos, &max)) = p.iter().enumerate().max_by_key(|&(_, v)| *v) else {
        return;
    };
    stack_sort_rec(&p[..pos], out);
    stack_sort_rec(&p[pos + 1..], out);
    out.push(max);
}

/// West's stack-sorting map by its recursive characterisation
/// `s(L n R) = s(L) s(R) n`, `n` the largest entry.
pub fn stack_sort(p: &Permutation) -> Permutation {
    let mut out = Vec::with_capacity(p.len());
    stack_sort_rec(&p.0, &mut out);
    Permutation(out)
}

/// One pass through a stack: before pushing an entry, pop every smaller
/// entry to the output; empty the stack at the end.
pub fn stack_sort_single_pass(p: &Permutation) -> Permutation {
    let mut out = Vec::with_capacity(p.len());
    let mut stack: Vec<u32> = Vec::with_capacity(p.len());
    for &v in &p.0 {
        while let Some(&top) = stack.last() {
            if top >= v {
                break;
            }
            out.push(top);
            stack.pop();
        }
        stack.push(v);
    }
    out.extend(stack.into_iter().rev());
    Permutation(out)
}

fn descents_of(p: &[u32]) -> usize {
    p.windows(2).filter(|w| w[0] > w[1]).count()
}

/// Number of positions `i` with `p_i > p_{i+1}`.
pub fn descents(p: &Permutation) -> usize {
    descents_of(&p.0)
}

/// `des(s(p)) + 1`; the empty permutation gives 1.
pub fn sorted_descent_stat(p: &Permutation) -> usize {
    descents(&stack_sort(p)) + 1
}

/// `des(s(p)) + 1` via a streaming stack pass, without materialising `s(p)`.
/// `stack` is scratch space.
fn streamed_descent_stat(p: &[u32], stack: &mut Vec<u32>) -> usize {
    stack.clear();
    let mut last: Option<u32> = None;
    let mut des = 0;
    let mut emit = |v: u32| {
        if last.is_some_and(|l| l > v) {
            des += 1;
        }
        last = Some(v);
    };
    for &v in p {
        while let Some(&top) = stack.last() {
            if top >= v {
                break;
            }
            emit(top);
            stack.pop();
        }
        stack.push(v);
    }
    while let Some(top) = stack.pop() {
        emit(top);
    }
    des + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMode {
    Exact,
    MonteCarlo,
}

/// Distribution of an integer statistic over `S_n`: exact counts or sampled weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistTable {
    pub n: usize,
    pub mode: TableMode,
    pub seed: Option<u64>,
    pub counts: BTreeMap<i64, u64>,
}

impl DistTable {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn mean(&self) -> f64 {
        let total = self.total() as f64;
        self.counts
            .iter()
            .map(|(&v, &c)| v as f64 * c as f64)
            .sum::<f64>()
            / total
    }

    pub fn variance(&self) -> f64 {
        let total = self.total() as f64;
        let mean = self.mean();
        self.counts
            .iter()
            .map(|(&v, &c)| (v as f64 - mean).powi(2) * c as f64)
            .sum::<f64>()
            / total
    }

    /// Commutative merge of counts.
    pub fn merge(&mut self, other: &DistTable) {
        for (&v, &c) in &other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
    }

    /// CSV with columns `value,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (v, c) in &self.counts {
            let _ = writeln!(out, "{v},{c}");
        }
        out
    }
}

/// Advances `p` to the next permutation in lexicographic order; `false` after the last.
fn next_permutation(p: &mut [u32]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exact counts of `des(s(pi)) + 1` over all of `S_n` (with `S_0` the empty permutation).
pub fn exact_distribution(n: usize) -> Result<DistTable> {
    exact_distribution_with(Execution::default(), n)
}

pub fn exact_distribution_with(exec: Execution, n: usize) -> Result<DistTable> {
    if n > MAX_EXACT_N {
        return Err(Error::EnumerationTooLarge {
            n,
            limit: MAX_EXACT_N,
        });
    }
    let mut table = DistTable {
        n,
        mode: TableMode::Exact,
        seed: None,
        counts: BTreeMap::new(),
    };
    if n == 0 {
        table.counts.insert(1, 1);
        return Ok(table);
    }
    // One task per leading entry; each walks the remaining entries in lexicographic order.
    let partials = exec.map_range(n, |lead| {
        let lead = lead as u32 + 1;
        let mut rest: Vec<u32> = (1..=n as u32).filter(|&v| v != lead).collect();
        let mut perm = Vec::with_capacity(n);
        let mut sorted = Vec::with_capacity(n);
        let mut counts = vec![0u64; n + 1];
        loop {
            perm.clear();
            perm.push(lead);
            perm.extend_from_slice(&rest);
            sorted.clear();
            stack_sort_rec(&perm, &mut sorted);
            counts[descents_of(&sorted) + 1] += 1;
            if !next_permutation(&mut rest) {
                break;
            }
        }
        counts
    });
    for partial in partials {
        for (v, c) in partial.into_iter().enumerate().filter(|&(_, c)| c > 0) {
            *table.counts.entry(v as i64).or_insert(0) += c;
        }
    }
    Ok(table)
}

/// Uniform permutation by Fisher-Yates, written into `buf` (resized to `n`).
pub fn fisher_yates<R: Rng + ?Sized>(rng: &mut R, n: usize, buf: &mut Vec<u32>) {
    buf.clear();
    buf.extend(1..=n as u32);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        buf.swap(i, j);
    }
}

/// Sampled distribution of `des(s(pi)) + 1` over uniform `pi` in `S_n`.
///
/// Samples are split into chunks of [`MC_CHUNK`]; chunk `c` draws from the
/// ChaCha8 stream `c` under `seed`, so the table does not depend on how chunks
/// are scheduled.
pub fn mc_distribution(n: usize, samples: u64, seed: u64) -> Result<DistTable> {
    mc_distribution_with(Execution::default(), n, samples, seed)
}

pub fn mc_distribution_with(
    exec: Execution,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<DistTable> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let chunks = samples.div_ceil(MC_CHUNK as u64) as usize;
    let partials = exec.map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let start = c as u64 * MC_CHUNK as u64;
        let len = (samples - start).min(MC_CHUNK as u64);
        let mut perm = Vec::with_capacity(n);
        let mut stack = Vec::with_capacity(n);
        let mut counts = vec![0u64; n + 2];
        for _ in 0..len {
            fisher_yates(&mut rng, n, &mut perm);
            counts[streamed_descent_stat(&perm, &mut stack)] += 1;
        }
        counts
    });
    let mut table = DistTable {
        n,
        mode: TableMode::MonteCarlo,
        seed: Some(seed),
        counts: BTreeMap::new(),
    };
    for partial in partials {
        for (v, c) in partial.into_iter().enumerate().filter(|&(_, c)| c > 0) {
            *table.counts.entry(v as i64).or_insert(0) += c;
        }
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub n: usize,
    /// `max_m |n! [y^m z^n](-log(1 + F^)) - #{pi in S_{n-1} : des(s(pi)) + 1 = m}|`.
    pub discrepancy: f64,
    pub tolerance: f64,
    /// Series coefficients `n! [y^m z^n]`, `m = 0..=n`.
    pub series: Vec<f64>,
    /// Exhaustive counts for `m = 0..=n`.
    pub counts: Vec<u64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n_max: usize,
    pub rows: Vec<IdentityRow>,
    pub max_discrepancy: f64,
    pub passed: bool,
}

/// Checks `sum_{n>=1} (sum_{pi in S_{n-1}} y^{des(s(pi))+1}) z^n / n! = -log(1 + F^(y, z))`
/// coefficient by coefficient for `1 <= n <= n_max`.
pub fn verify_descent_identity(n_max: usize) -> Result<IdentityReport> {
    if n_max == 0 || n_max > MAX_EXACT_N {
        return Err(Error::InvalidArgument(format!(
            "n_max must lie in 1..={MAX_EXACT_N}, got {n_max}"
        )));
    }
    let fhat = defant_f(n_max)?.borel_z();
    let lhs = -&fhat.ps_log1p()?;
    let mut rows = Vec::with_capacity(n_max);
    let mut factorial = 1.0_f64;
    for n in 1..=n_max {
        factorial *= n as f64;
        let table = exact_distribution(n - 1)?;
        let series: Vec<f64> = (0..=lhs.y_order())
            .map(|m| lhs.coeff(m, n).re * factorial)
            .collect();
        let imag = (0..=lhs.y_order())
            .map(|m| lhs.coeff(m, n).im.abs() * factorial)
            .fold(0.0, f64::max);
        let counts: Vec<u64> = (0..=lhs.y_order())
            .map(|m| table.counts.get(&(m as i64)).copied().unwrap_or(0))
            .collect();
        let discrepancy = series
            .iter()
            .zip(&counts)
            .map(|(s, &c)| (s - c as f64).abs())
            .fold(imag, f64::max);
        let tolerance = 1e-9 * factorial;
        rows.push(IdentityRow {
            n,
            discrepancy,
            tolerance,
            series: series[..=n].to_vec(),
            counts: counts[..=n].to_vec(),
            passed: discrepancy < tolerance,
        });
    }
    let max_discrepancy = rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max);
    let passed = rows.iter().all(|r| r.passed);
    Ok(IdentityReport {
        n_max,
        rows,
        max_discrepancy,
        passed,
    })
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between the law of `(V - mu n) / sqrt(n)` and
/// `N(0, sigma2)`, taken on both sides of every jump of the empirical CDF.
pub fn ks_to_normal(t: &DistTable, mu: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if t.n == 0 {
        return Err(Error::InvalidArgument("table has n = 0".into()));
    }
    let atoms: Vec<(i64, u64)> = t
        .counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&v, &c)| (v, c))
        .collect();
    if atoms.len() < 2 {
        warn!(
            "degenerate table with {} atom(s); KS distance reported as 1",
            atoms.len()
        );
        return Ok(1.0);
    }
    let total = atoms.iter().map(|a| a.1).sum::<u64>() as f64;
    let n = t.n as f64;
    let sd = sigma2.sqrt();
    let mut below = 0u64;
    let mut worst = 0.0_f64;
    for (v, c) in atoms {
        let w = (v as f64 - mu * n) / n.sqrt();
        let cdf = normal_cdf(w / sd);
        let before = below as f64 / total;
        below += c;
        let after = below as f64 / total;
        worst = worst.max((before - cdf).abs()).max((after - cdf).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(v: &[u32]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    fn all_perms(n: usize) -> Vec<Permutation> {
        let mut p: Vec<u32> = (1..=n as u32).collect();
        let mut out = vec![Permutation(p.clone())];
        while next_permutation(&mut p) {
            out.push(Permutation(p.clone()));
        }
        out
    }

    #[test]
    fn stack_sort_examples() {
        assert_eq!(stack_sort(&perm(&[2, 3, 1])), perm(&[2, 1, 3]));
        assert_eq!(stack_sort(&perm(&[3, 2, 1])), perm(&[1, 2, 3]));
        assert_eq!(
            stack_sort(&Permutation::identity(5)),
            Permutation::identity(5)
        );
        assert_eq!(stack_sort_single_pass(&perm(&[2, 3, 1])), perm(&[2, 1, 3]));
        assert_eq!(stack_sort_single_pass(&perm(&[3, 2, 1])), perm(&[1, 2, 3]));
    }

    #[test]
    fn descent_examples() {
        assert_eq!(descents(&perm(&[1, 2, 3])), 0);
        assert_eq!(descents(&perm(&[3, 2, 1])), 2);
        assert_eq!(descents(&perm(&[2, 1, 3])), 1);
        assert_eq!(sorted_descent_stat(&Permutation::identity(0)), 1);
    }

    #[test]
    fn invalid_permutations_rejected() {
        assert!(Permutation::new(vec![1, 1]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
        assert!(Permutation::new(vec![1, 3]).is_err());
        assert!(serde_json::from_str::<Permutation>("[2, 2]").is_err());
    }

    #[test]
    fn recursive_and_single_pass_agree_exhaustively() {
        for n in 0..=8 {
            for p in all_perms(n) {
                let a = stack_sort(&p);
                assert_eq!(a, stack_sort_single_pass(&p), "{p:?}");
                let mut stack = Vec::new();
                assert_eq!(
                    streamed_descent_stat(p.entries(), &mut stack),
                    descents(&a) + 1
                );
            }
        }
    }

    #[test]
    fn repeated_sorting_reaches_identity() {
        for p in all_perms(6) {
            let mut q = p.clone();
            for _ in 0..5 {
                q = stack_sort(&q);
            }
            assert_eq!(q, Permutation::identity(6));
        }
    }

    #[test]
    fn small_exact_tables() {
        let t = exact_distribution(3).unwrap();
        assert_eq!(t.counts, BTreeMap::from([(1, 5), (2, 1)]));
        assert_eq!(
            exact_distribution(2).unwrap().counts,
            BTreeMap::from([(1, 2)])
        );
        assert_eq!(
            exact_distribution(1).unwrap().counts,
            BTreeMap::from([(1, 1)])
        );
        assert_eq!(
            exact_distribution(0).unwrap().counts,
            BTreeMap::from([(1, 1)])
        );
    }

    #[test]
    fn exact_totals_are_factorials() {
        let mut fact = 1u64;
        for n in 1..=8 {
            fact *= n as u64;
            assert_eq!(exact_distribution(n).unwrap().total(), fact);
        }
    }

    #[test]
    fn exact_refuses_large_n() {
        assert!(matches!(
            exact_distribution(11),
            Err(Error::EnumerationTooLarge { n: 11, .. })
        ));
    }

    #[test]
    fn sequential_and_parallel_tables_match() {
        let a = exact_distribution_with(Execution::Sequential, 7).unwrap();
        let b = exact_distribution(7).unwrap();
        assert_eq!(a, b);
        let a = mc_distribution_with(Execution::Sequential, 40, 20_000, 3).unwrap();
        let b = mc_distribution(40, 20_000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mc_is_deterministic_and_validated() {
        assert_eq!(
            mc_distribution(12, 5000, 11).unwrap(),
            mc_distribution(12, 5000, 11).unwrap()
        );
        assert_ne!(
            mc_distribution(12, 5000, 11).unwrap(),
            mc_distribution(12, 5000, 12).unwrap()
        );
        assert!(mc_distribution(5, 0, 1).is_err());
        assert_eq!(mc_distribution(5, 12345, 1).unwrap().total(), 12345);
    }

    #[test]
    fn mc_small_n_within_binomial_band() {
        let samples = 200_000u64;
        let t = mc_distribution(3, samples, 7).unwrap();
        let p = 5.0 / 6.0;
        let sd = (p * (1.0 - p) / samples as f64).sqrt();
        let freq = t.counts[&1] as f64 / samples as f64;
        assert!((freq - p).abs() < 3.0 * sd, "freq {freq}");
    }

    #[test]
    fn ks_degenerate_and_invalid() {
        let t = exact_distribution(2).unwrap();
        assert_eq!(ks_to_normal(&t, 0.28, 0.05).unwrap(), 1.0);
        assert!(ks_to_normal(&t, 0.28, 0.0).is_err());
    }

    #[test]
    fn ks_small_table_is_large() {
        let t = exact_distribution(3).unwrap();
        let mu = 3.0 - std::f64::consts::E;
        let s2 = 2.0 + 2.0 * std::f64::consts::E - std::f64::consts::E.powi(2);
        assert!(ks_to_normal(&t, mu, s2).unwrap() > 0.2);
    }

    #[test]
    fn ks_of_discretised_normal_is_small() {
        // Counts proportional to N(0, 1e6) cell masses around a center of 10_001.
        let sigma: f64 = 1000.0;
        let total = 1e9;
        let counts = (1..=20_001i64)
            .map(|v| {
                let w = (v - 10_001) as f64;
                let mass = normal_cdf((w + 0.5) / sigma) - normal_cdf((w - 0.5) / sigma);
                (v, (mass * total).round() as u64)
            })
            .collect();
        let t = DistTable {
            n: 1,
            mode: TableMode::Exact,
            seed: None,
            counts,
        };
        let d = ks_to_normal(&t, 10_001.0, sigma * sigma).unwrap();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn table_json_and_csv() {
        let t = exact_distribution(3).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            r#"{"n":3,"mode":"exact","seed":null,"counts":{"1":5,"2":1}}"#
        );
        assert_eq!(serde_json::from_str::<DistTable>(&json).unwrap(), t);
        assert_eq!(t.to_csv(), "value,count\n1,5\n2,1\n");
    }
}
