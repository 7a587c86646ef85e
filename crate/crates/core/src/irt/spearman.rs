use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::IrtError;

/// Largest n for which the exact permutation distribution is enumerated.
pub const MAX_EXACT_N: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exact permutation for n < 10, t-approximation otherwise.
    #[default]
    Auto,
    Exact,
    TApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rho: f64,
    /// Two-sided.
    pub p_value: f64,
    /// One-sided, alternative rho > 0.
    pub p_value_upper: f64,
    pub method: PValueMethod,
    pub n: usize,
    pub ranking_ctt: Vec<String>,
    pub ranking_irt: Vec<String>,
}

/// 1-based average ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Spearman correlation of paired scores, average ranks for ties.
pub fn spearman_scores(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "paired samples must have equal length");
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Visits every permutation of 0..n (Heap's algorithm).
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// (two-sided, upper) exact permutation p-values given the observed sum of squared rank differences.
fn exact_p_values(n: usize, observed_d2: u64) -> (f64, f64) {
    let scale = (n * (n * n - 1)) as i64;
    let stat = |d2: u64| (scale - 6 * d2 as i64).abs();
    let observed = stat(observed_d2);
    let (mut total, mut two, mut upper) = (0u64, 0u64, 0u64);
    for_each_permutation(n, |p| {
        let d2: u64 = p
            .iter()
            .enumerate()
            .map(|(i, &r)| (i as i64 - r as i64).pow(2) as u64)
            .sum();
        total += 1;
        if stat(d2) >= observed {
            two += 1;
        }
        if d2 <= observed_d2 {
            upper += 1;
        }
    });
    (two as f64 / total as f64, upper as f64 / total as f64)
}

fn t_p_values(rho: f64, n: usize) -> (f64, f64) {
    if rho.abs() >= 1.0 {
        return (0.0, if rho > 0.0 { 0.0 } else { 1.0 });
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    ((2.0 * dist.sf(t.abs())).min(1.0), dist.sf(t))
}

/// Spearman correlation between two orderings of the same ids.
pub fn spearman_rho(
    ranks_a: &[String],
    ranks_b: &[String],
    method: PValueMethod,
) -> Result<ValidationReport, IrtError> {
    let n = ranks_a.len();
    let pos_b: BTreeMap<&str, usize> = ranks_b
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let pos_a: BTreeMap<&str, usize> = ranks_a
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    if n != ranks_b.len() || pos_a.len() != n || pos_b.len() != n || pos_a.keys().ne(pos_b.keys()) {
        return Err(IrtError::MismatchedIds);
    }
    if n < 3 {
        return Err(IrtError::TooFewItems(n));
    }
    let d2: u64 = ranks_a
        .iter()
        .enumerate()
        .map(|(i, id)| (i as i64 - pos_b[id.as_str()] as i64).pow(2) as u64)
        .sum();
    let nf = n as f64;
    let rho = 1.0 - 6.0 * d2 as f64 / (nf * (nf * nf - 1.0));
    let method = match method {
        PValueMethod::Auto if n < 10 => PValueMethod::Exact,
        PValueMethod::Auto => PValueMethod::TApprox,
        m => m,
    };
    let (p_value, p_value_upper) = match method {
        PValueMethod::Exact if n > MAX_EXACT_N => return Err(IrtError::ExactTooLarge(n)),
        PValueMethod::Exact => exact_p_values(n, d2),
        _ => t_p_values(rho, n),
    };
    Ok(ValidationReport {
        rho,
        p_value,
        p_value_upper,
        method,
        n,
        ranking_ctt: ranks_a.to_vec(),
        ranking_irt: ranks_b.to_vec(),
    })
}

/// Compares the CTT order (hardest first) with the IRT order.
pub fn validate_rankings(
    ctt_order: &[String],
    irt_order: &[String],
) -> Result<ValidationReport, IrtError> {
    spearman_rho(ctt_order, irt_order, PValueMethod::Auto)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_and_reverse() {
        let a = ids(&["a", "b", "c", "d", "e"]);
        let mut r = a.clone();
        r.reverse();
        assert_eq!(spearman_rho(&a, &a, PValueMethod::Auto).unwrap().rho, 1.0);
        assert_eq!(spearman_rho(&a, &r, PValueMethod::Auto).unwrap().rho, -1.0);
    }

    #[test]
    fn hand_computed_half() {
        // d^2 = (1, 1, 0): 1 - 6*2/(3*8) = 0.5
        let r = spearman_rho(
            &ids(&["1", "2", "3"]),
            &ids(&["2", "1", "3"]),
            PValueMethod::Auto,
        )
        .unwrap();
        assert!((r.rho - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_p_for_three() {
        // Of the six orderings only the identity reaches rho = 1; the reversal reaches -1.
        let a = ids(&["x", "y", "z"]);
        let r = spearman_rho(&a, &a, PValueMethod::Auto).unwrap();
        assert_eq!(r.method, PValueMethod::Exact);
        assert!((r.p_value_upper - 1.0 / 6.0).abs() < 1e-15);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn exact_matches_brute_force_rho_enumeration() {
        let a = ids(&["a", "b", "c", "d", "e", "f"]);
        let b = ids(&["b", "a", "d", "c", "f", "e"]);
        let rep = spearman_rho(&a, &b, PValueMethod::Exact).unwrap();
        // Oracle: enumerate orderings of b directly via the float rho formula.
        let mut count = 0;
        let mut total = 0;
        let base: Vec<String> = a.clone();
        let mut perm = base.clone();
        fn permute(k: usize, perm: &mut Vec<String>, f: &mut dyn FnMut(&[String])) {
            if k == perm.len() {
                f(perm);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                permute(k + 1, perm, f);
                perm.swap(k, i);
            }
        }
        permute(0, &mut perm, &mut |p| {
            total += 1;
            let r = spearman_rho(&base, p, PValueMethod::TApprox).unwrap().rho;
            if r.abs() >= rep.rho.abs() - 1e-12 {
                count += 1;
            }
        });
        assert_eq!(total, 720);
        assert!((rep.p_value - count as f64 / 720.0).abs() < 1e-15);
    }

    #[test]
    fn t_approximation_for_larger_n() {
        let a: Vec<String> = (0..20).map(|i| format!("q{i:02}")).collect();
        let mut b = a.clone();
        b.swap(0, 1);
        let r = spearman_rho(&a, &b, PValueMethod::Auto).unwrap();
        assert_eq!(r.method, PValueMethod::TApprox);
        assert!(r.rho > 0.99);
        assert!(r.p_value < 1e-5);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            spearman_rho(
                &ids(&["a", "b", "c"]),
                &ids(&["a", "b", "d"]),
                PValueMethod::Auto
            ),
            Err(IrtError::MismatchedIds)
        ));
        assert!(matches!(
            spearman_rho(&ids(&["a", "b"]), &ids(&["b", "a"]), PValueMethod::Auto),
            Err(IrtError::TooFewItems(2))
        ));
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 5.0]),
            vec![2.0, 3.5, 3.5, 1.0]
        );
        let rho = spearman_scores(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 3.0, 9.0]);
        assert!(rho > 0.94 && rho < 0.95, "{rho}");
    }
}
