//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use gfclt::coeffs::{
    default_node_count, default_quadrature_radius, phi_by_quadrature, phi_by_series,
};
use gfclt::permlab::{self, Permutation};
use gfclt::singularity::{decay_fit, halving_sequence, log_b_taylor, track_root};
use gfclt::{
    compute_limits, defant_mu, defant_sigma2, make_defant_kernel, make_iid_kernel, DiscreteDist,
    Kernel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn gfclt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gfclt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn bernoulli_kernel() -> gfclt::IidKernel {
    make_iid_kernel(DiscreteDist::bernoulli(0.5).unwrap())
}

fn skewed_kernel() -> gfclt::IidKernel {
    make_iid_kernel(DiscreteDist::univariate(&[0.0, 1.0, 3.0], &[0.5, 0.3, 0.2]).unwrap())
}

fn c1_defant_limits() -> Verdict {
    let start = Instant::now();
    let out = gfclt(&["analyze", "--kernel", r#"{"type":"defant","trunc":64}"#]);
    let elapsed = start.elapsed();
    let v: serde_json::Value =
        serde_json::from_slice(&out.stdout).map_err(|e| format!("bad report: {e}"))?;
    let mu = v["limits"]["mu"][0].as_f64().unwrap_or(f64::NAN);
    let s2 = v["limits"]["sigma"][0][0].as_f64().unwrap_or(f64::NAN);
    let (dmu, ds2) = ((mu - defant_mu()).abs(), (s2 - defant_sigma2()).abs());
    check(
        out.status.code() == Some(0) && dmu < 1e-8 && ds2 < 1e-7 && within(elapsed, 5.0),
        format!("|mu - (3 - e)| = {dmu:.1e}, |Sigma - (2 + 2e - e^2)| = {ds2:.1e}, {elapsed:.2?}"),
    )
}

fn c2_iid_recovery() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let atoms = rng.random_range(1..=6);
        let support: Vec<f64> = (0..atoms).map(|_| rng.random_range(-3.0..3.0)).collect();
        let weights: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mean: f64 = support.iter().zip(&probs).map(|(s, p)| s * p).sum();
        let var: f64 = support
            .iter()
            .zip(&probs)
            .map(|(s, p)| p * (s - mean).powi(2))
            .sum();
        let dist = DiscreteDist::univariate(&support, &probs).map_err(|e| e.to_string())?;
        let lp = compute_limits(&make_iid_kernel(dist)).map_err(|e| e.to_string())?;
        worst = worst
            .max((lp.mu[0] - mean).abs())
            .max((lp.sigma[0][0] - var).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-9 && within(elapsed, 5.0),
        format!("50 laws, worst deviation {worst:.1e}, {elapsed:.2?}"),
    )
}

fn c3_descent_identity() -> Verdict {
    let start = Instant::now();
    let report = permlab::verify_descent_identity(9).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut factorial = 1.0;
    let mut ok = report.rows.len() == 9;
    let mut worst_rel = 0.0_f64;
    for row in &report.rows {
        factorial *= row.n as f64;
        ok &= row.discrepancy < 1e-9 * factorial;
        worst_rel = worst_rel.max(row.discrepancy / factorial);
    }
    check(
        ok && within(elapsed, 60.0),
        format!("n <= 9, max discrepancy / n! = {worst_rel:.1e}, {elapsed:.2?}"),
    )
}

/// All permutations of `1..=n` by Heap's algorithm.
fn heap_permutations(n: usize) -> Vec<Vec<u32>> {
    fn rec(k: usize, a: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            rec(k - 1, a, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            a.swap(j, k - 1);
        }
    }
    let mut a: Vec<u32> = (1..=n as u32).collect();
    let mut out = Vec::new();
    rec(n, &mut a, &mut out);
    out
}

fn oracle_table(n: usize) -> BTreeMap<i64, u64> {
    let mut counts = BTreeMap::new();
    for p in heap_permutations(n) {
        let sorted = permlab::stack_sort_single_pass(&Permutation::new(p).unwrap());
        let des = sorted.entries().windows(2).filter(|w| w[0] > w[1]).count();
        *counts.entry(des as i64 + 1).or_insert(0) += 1;
    }
    counts
}

fn c4_exact_tables() -> Verdict {
    let t3 = permlab::exact_distribution(3)
        .map_err(|e| e.to_string())?
        .counts;
    let t2 = permlab::exact_distribution(2)
        .map_err(|e| e.to_string())?
        .counts;
    let want3 = BTreeMap::from([(1, 5), (2, 1)]);
    let want2 = BTreeMap::from([(1, 2)]);
    check(
        t3 == want3 && t2 == want2 && oracle_table(3) == t3 && oracle_table(2) == t2,
        format!("S_3 -> {t3:?}, S_2 -> {t2:?}"),
    )
}

fn c5_principal_part_decay() -> Verdict {
    let k = make_defant_kernel(64).map_err(|e| e.to_string())?;
    let x = [0.2];
    let root = track_root(&k, &x).map_err(|e| e.to_string())?;
    let phi = phi_by_series(&k, &x, 48).map_err(|e| e.to_string())?;
    let fit = decay_fit(&root, &phi, 16, 48);
    let (slope, r_fit) = (fit.slope.unwrap_or(f64::NAN), fit.r_fit.unwrap_or(f64::NAN));
    check(
        slope < 0.0 && r_fit > 1.02,
        format!("x = 0.2, n in [16, 48]: slope {slope:.3}, r_fit {r_fit:.3}"),
    )
}

fn c6_dual_path() -> Verdict {
    let defant = make_defant_kernel(64).map_err(|e| e.to_string())?;
    let iid = skewed_kernel();
    let kernels: [&dyn Kernel; 2] = [&defant, &iid];
    let mut worst = 0.0_f64;
    for k in kernels {
        for x in [0.0, 0.2, -0.2, 0.5, -0.5] {
            let s = phi_by_series(k, &[x], 40).map_err(|e| e.to_string())?;
            let r = default_quadrature_radius(k, &[x]);
            let q = phi_by_quadrature(k, &[x], 40, r, default_node_count(40))
                .map_err(|e| e.to_string())?;
            worst = worst.max(s.max_abs_diff(&q));
        }
    }
    check(
        worst < 1e-8,
        format!("n <= 40, 5 probes x 2 kernels, worst {worst:.1e}"),
    )
}

fn c7_taylor_order() -> Verdict {
    let defant = make_defant_kernel(64).map_err(|e| e.to_string())?;
    let iid = skewed_kernel();
    let kernels: [&dyn Kernel; 2] = [&defant, &iid];
    let mut orders = Vec::new();
    for k in kernels {
        let lp = compute_limits(k).map_err(|e| e.to_string())?;
        let fit = log_b_taylor(k, &lp, &halving_sequence(&[0.4], 6)).map_err(|e| e.to_string())?;
        orders.push(fit.fitted_order);
    }
    check(
        orders.iter().all(|&o| o >= 1.8),
        format!(
            "remainder orders: defant {:.3}, i.i.d. {:.3}",
            orders[0], orders[1]
        ),
    )
}

fn c8_weak_convergence() -> Verdict {
    let start = Instant::now();
    let mut ks = Vec::new();
    for n in [50, 200, 1000, 2000] {
        let table = permlab::mc_distribution(n, 100_000, 7).map_err(|e| e.to_string())?;
        ks.push(
            permlab::ks_to_normal(&table, defant_mu(), defant_sigma2())
                .map_err(|e| e.to_string())?,
        );
    }
    let elapsed = start.elapsed();
    check(
        ks[3] < 0.05 && ks[3] <= ks[0] && within(elapsed, 120.0),
        format!(
            "KS at n = 50, 200, 1000, 2000: {:.4}, {:.4}, {:.4}, {:.4}, {elapsed:.2?}",
            ks[0], ks[1], ks[2], ks[3]
        ),
    )
}

fn c9_realness_psd() -> Verdict {
    let defant = make_defant_kernel(64).map_err(|e| e.to_string())?;
    let bern = bernoulli_kernel();
    let kernels: [&dyn Kernel; 2] = [&defant, &bern];
    let mut worst_imag = 0.0_f64;
    let mut worst_slack = f64::INFINITY;
    for k in kernels {
        let lp = compute_limits(k).map_err(|e| e.to_string())?;
        worst_imag = worst_imag.max(lp.imag_residue);
        worst_slack = worst_slack.min(lp.psd_slack);
    }
    check(
        worst_imag < 1e-8 && worst_slack > -1e-8,
        format!("imag_residue <= {worst_imag:.1e}, psd_slack >= {worst_slack:.3e}"),
    )
}

fn c10_determinism() -> Verdict {
    let args = [
        "simulate",
        "--n",
        "2000",
        "--samples",
        "100000",
        "--seed",
        "7",
    ];
    let a = gfclt(&args);
    let b = gfclt(&args);
    check(
        a.status.code() == Some(0) && !a.stdout.is_empty() && a.stdout == b.stdout,
        format!(
            "two runs, {} bytes each, identical: {}",
            a.stdout.len(),
            a.stdout == b.stdout
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("defant limit parameters", c1_defant_limits),
        ("i.i.d. limit recovery", c2_iid_recovery),
        ("descent identity", c3_descent_identity),
        ("exact small tables", c4_exact_tables),
        ("principal-part decay", c5_principal_part_decay),
        ("dual-path coefficients", c6_dual_path),
        ("Taylor order of log b", c7_taylor_order),
        ("weak-convergence trend", c8_weak_convergence),
        ("realness and PSD", c9_realness_psd),
        ("simulate determinism", c10_determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}: {name} ({detail})", i + 1);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
