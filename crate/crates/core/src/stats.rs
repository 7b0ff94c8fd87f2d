//! Two-sided hypothesis tests: Fisher's exact test, Mann-Whitney U,
//! Wilcoxon signed-rank and Student/Welch t-tests.
//!
//! Rank tests use midranks for ties. Exact distributions are counted over
//! doubled ranks, which are integers even with ties, so tail comparisons
//! need no floating tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exact Mann-Whitney enumeration is used up to this combined sample size.
pub const MWU_EXACT_MAX_TOTAL: usize = 20;
/// Exact signed-rank enumeration is used up to this many nonzero pairs.
pub const WILCOXON_EXACT_MAX_PAIRS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    FisherExact,
    MannWhitneyU,
    WilcoxonSignedRank,
    TTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult<T> {
    pub method: TestMethod,
    pub statistic: T,
    pub p_value: T,
    pub sided: Sided,
    pub exact: bool,
    /// Degenerate input (zero margin, no variation); p is 1 by convention.
    pub degenerate: bool,
    /// Zero differences dropped by the signed-rank test.
    pub zeros_dropped: usize,
}

impl<T: Scalar> TestResult<T> {
    fn new(method: TestMethod, statistic: T, p_value: T, exact: bool) -> Self {
        TestResult {
            method,
            statistic,
            p_value: p_value.max(T::zero()).min(T::one()),
            sided: Sided::TwoSided,
            exact,
            degenerate: false,
            zeros_dropped: 0,
        }
    }

    fn degenerate(method: TestMethod, statistic: T) -> Self {
        TestResult {
            degenerate: true,
            ..Self::new(method, statistic, T::one(), true)
        }
    }

    pub fn significant(&self, alpha: T) -> bool {
        !self.degenerate && self.p_value < alpha
    }
}

/// Complementary error function, accurate to roughly 1e-14 absolute.
pub fn erfc<T: Scalar>(x: T) -> T {
    let two = T::of(2.0);
    if x < T::zero() {
        return two - erfc(-x);
    }
    let sqrt_pi = T::PI().sqrt();
    if x < T::of(2.5) {
        // erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 0usize;
        while term > T::epsilon() * sum && n < 500 {
            n += 1;
            term = term * two * x2 / T::of_usize(2 * n + 1);
            sum = sum + term;
        }
        T::one() - two / sqrt_pi * (-x2).exp() * sum
    } else {
        let mut f = x;
        for k in (1..=80).rev() {
            f = x + T::of_usize(k) / two / f;
        }
        (-x * x).exp() / (sqrt_pi * f)
    }
}

/// Upper tail of the standard normal distribution.
pub fn normal_sf<T: Scalar>(z: T) -> T {
    T::of(0.5) * erfc(z / T::SQRT_2())
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < T::of(0.5) {
        // Reflection.
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::of(COEF[0]);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc = acc + T::of(c) / (x + T::of_usize(i));
    }
    let t = x + T::of(7.5);
    T::of(0.5) * (T::of(2.0) * T::PI()).ln() + (x + T::of(0.5)) * t.ln() - t + acc.ln()
}

fn beta_continued_fraction<T: Scalar>(a: T, b: T, x: T) -> T {
    let tiny = T::of(1e-300).max(T::min_positive_value());
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=300 {
        let m = T::of_usize(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() < T::epsilon() {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta<T: Scalar>(a: T, b: T, x: T) -> T {
    let one = T::one();
    if x <= T::zero() {
        return T::zero();
    }
    if x >= one {
        return one;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    if x < (a + one) / (a + b + T::of(2.0)) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        one - front * beta_continued_fraction(b, a, one - x) / b
    }
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided<T: Scalar>(t: T, df: T) -> T {
    let x = df / (df + t * t);
    incomplete_beta(df / T::of(2.0), T::of(0.5), x)
}

/// Cumulative `ln k!` for `k = 0..=n`.
fn ln_factorials<T: Scalar>(n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(T::zero());
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(T::of(acc));
    }
    out
}

/// Fisher's exact test on the table `[[a, b], [c, d]]`.
///
/// The two-sided p-value sums the hypergeometric probabilities of every
/// table with the observed margins that is no more likely than the
/// observed one. The statistic is the top-left count `a`.
pub fn fisher_exact<T: Scalar>(a: u64, b: u64, c: u64, d: u64) -> Result<TestResult<T>> {
    let total = a + b + c + d;
    if total == 0 {
        return Err(Error::Empty("contingency table"));
    }
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Ok(TestResult::degenerate(TestMethod::FisherExact, T::of(a as f64)));
    }
    let lf = ln_factorials::<T>(total as usize);
    let lc = |n: u64, k: u64| lf[n as usize] - lf[k as usize] - lf[(n - k) as usize];
    let denom = lc(total, c1);
    let log_p = |x: u64| lc(r1, x) + lc(r2, c1 - x) - denom;
    let observed = log_p(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    // Slack so tables tied with the observed one are not lost to rounding in
    // the log factorials. It stays at 1e-7 for f64 and widens for f32, whose
    // rounding error grows with ln(total!).
    let slack = T::of(1e-7).max(T::epsilon() * lf[total as usize] * T::of(16.0));
    let cutoff = observed + slack;
    let p: T = (lo..=hi)
        .map(log_p)
        .filter(|&lp| lp <= cutoff)
        .map(|lp| lp.exp())
        .sum();
    Ok(TestResult::new(TestMethod::FisherExact, T::of(a as f64), p, true))
}

/// Midranks (1-based) of `values`, doubled so they are integers, plus
/// the sizes of tie groups.
fn doubled_midranks<T: Scalar>(values: &[T]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("NaN in sample"));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share rank ((i+1) + (j+1)) / 2.
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
}

/// Mann-Whitney U test for two independent samples.
///
/// Exact permutation p-value when `n + m <= 20`, otherwise the normal
/// approximation with tie and continuity corrections. The reported
/// statistic is `min(U_x, U_y)`.
pub fn mann_whitney_u<T: Scalar>(x: &[T], y: &[T]) -> Result<TestResult<T>> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("Mann-Whitney sample"));
    }
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let combined: Vec<T> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = doubled_midranks(&combined);
    let r1_doubled: u64 = ranks[..n1].iter().sum();
    let u1 = r1_doubled as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let statistic = T::of(u1.min(u2));
    if ties.len() == 1 && ties[0] == n {
        return Ok(TestResult::degenerate(TestMethod::MannWhitneyU, statistic));
    }

    if n <= MWU_EXACT_MAX_TOTAL {
        // counts[k][s]: subsets of size k with doubled-rank sum s.
        let max_sum: usize = ranks.iter().sum::<u64>() as usize;
        let mut counts = vec![vec![0u64; max_sum + 1]; n1 + 1];
        counts[0][0] = 1;
        for &r in &ranks {
            let r = r as usize;
            for k in (1..=n1).rev() {
                for s in (r..=max_sum).rev() {
                    counts[k][s] += counts[k - 1][s - r];
                }
            }
        }
        // E[doubled rank sum] = n1 (n + 1); compare deviations exactly.
        let center = (n1 * (n + 1)) as i64;
        let obs_dev = (r1_doubled as i64 - center).abs();
        let total: u64 = counts[n1].iter().sum();
        let extreme: u64 = counts[n1]
            .iter()
            .enumerate()
            .filter(|&(s, _)| (s as i64 - center).abs() >= obs_dev)
            .map(|(_, &c)| c)
            .sum();
        let p = T::of(extreme as f64 / total as f64);
        return Ok(TestResult::new(TestMethod::MannWhitneyU, statistic, p, true));
    }

    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let mean = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_sum(&ties) / (nf * (nf - 1.0)));
    let z = T::of(((u1 - mean).abs() - 0.5).max(0.0) / var.sqrt());
    let p = T::of(2.0) * normal_sf(z);
    Ok(TestResult::new(TestMethod::MannWhitneyU, statistic, p, false))
}

/// Wilcoxon signed-rank test on `(pre, post)` pairs.
///
/// Zero differences are dropped and counted. Exact enumeration of sign
/// patterns for up to 15 nonzero pairs, normal approximation with tie and
/// continuity corrections beyond. The statistic is `min(W+, W-)`.
pub fn wilcoxon_signed_rank<T: Scalar>(pairs: &[(T, T)]) -> Result<TestResult<T>> {
    if pairs.is_empty() {
        return Err(Error::Empty("Wilcoxon pairs"));
    }
    let diffs: Vec<T> = pairs
        .iter()
        .map(|&(pre, post)| post - pre)
        .filter(|d| *d != T::zero())
        .collect();
    let zeros_dropped = pairs.len() - diffs.len();
    if diffs.is_empty() {
        let mut r = TestResult::degenerate(TestMethod::WilcoxonSignedRank, T::zero());
        r.zeros_dropped = zeros_dropped;
        return Ok(r);
    }
    let n = diffs.len();
    let magnitudes: Vec<T> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_midranks(&magnitudes);
    let total_doubled: u64 = ranks.iter().sum();
    let w_plus_doubled: u64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > T::zero())
        .map(|(r, _)| *r)
        .sum();
    let w_plus = w_plus_doubled as f64 / 2.0;
    let w_minus = (total_doubled - w_plus_doubled) as f64 / 2.0;
    let statistic = T::of(w_plus.min(w_minus));

    let mut result = if n <= WILCOXON_EXACT_MAX_PAIRS {
        let max_sum = total_doubled as usize;
        let mut counts = vec![0u64; max_sum + 1];
        counts[0] = 1;
        for &r in &ranks {
            let r = r as usize;
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        // Deviation of 2 * W+ from the total, in doubled units.
        let obs_dev = (2 * w_plus_doubled as i64 - total_doubled as i64).abs();
        let extreme: u64 = counts
            .iter()
            .enumerate()
            .filter(|&(s, _)| (2 * s as i64 - total_doubled as i64).abs() >= obs_dev)
            .map(|(_, &c)| c)
            .sum();
        let p = extreme as f64 / 2f64.powi(n as i32);
        TestResult::new(TestMethod::WilcoxonSignedRank, statistic, T::of(p), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let p = T::of(2.0) * normal_sf(T::of(z));
        TestResult::new(TestMethod::WilcoxonSignedRank, statistic, p, false)
    };
    result.zeros_dropped = zeros_dropped;
    Ok(result)
}

fn mean_var<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::of_usize(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let ss: T = xs.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let var = if xs.len() > 1 {
        ss / (n - T::one())
    } else {
        T::zero()
    };
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t_test<T: Scalar>(x: &[T], y: &[T]) -> Result<TestResult<T>> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Empty("t-test needs at least two values per sample"));
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let (nx, ny) = (T::of_usize(x.len()), T::of_usize(y.len()));
    let se2 = vx / nx + vy / ny;
    if se2 == T::zero() {
        return Ok(zero_variance_t(mx - my));
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / ((vx / nx) * (vx / nx) / (nx - T::one()) + (vy / ny) * (vy / ny) / (ny - T::one()));
    Ok(TestResult::new(
        TestMethod::TTest,
        t,
        student_t_two_sided(t, df),
        false,
    ))
}

/// Paired t-test on `(pre, post)` pairs.
pub fn paired_t_test<T: Scalar>(pairs: &[(T, T)]) -> Result<TestResult<T>> {
    if pairs.len() < 2 {
        return Err(Error::Empty("paired t-test needs at least two pairs"));
    }
    let diffs: Vec<T> = pairs.iter().map(|&(pre, post)| post - pre).collect();
    let (m, v) = mean_var(&diffs);
    if v == T::zero() {
        return Ok(zero_variance_t(m));
    }
    let n = T::of_usize(diffs.len());
    let t = m / (v / n).sqrt();
    Ok(TestResult::new(
        TestMethod::TTest,
        t,
        student_t_two_sided(t, n - T::one()),
        false,
    ))
}

fn zero_variance_t<T: Scalar>(delta: T) -> TestResult<T> {
    if delta == T::zero() {
        TestResult::degenerate(TestMethod::TTest, T::zero())
    } else {
        let inf = if delta > T::zero() {
            T::infinity()
        } else {
            T::neg_infinity()
        };
        TestResult::new(TestMethod::TTest, inf, T::zero(), false)
    }
}

/// Elementwise natural log; every value must be positive.
pub fn log_transform<T: Scalar>(sample: &[T]) -> Result<Vec<T>> {
    sample
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v > T::zero() {
                Ok(v.ln())
            } else {
                Err(Error::NonPositive {
                    index,
                    value: v.as_f64(),
                })
            }
        })
        .collect()
}

pub fn median<T: Scalar>(sample: &[T]) -> Option<T> {
    if sample.is_empty() {
        return None;
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / T::of(2.0)
    })
}

pub fn mean<T: Scalar>(sample: &[T]) -> Option<T> {
    if sample.is_empty() {
        None
    } else {
        Some(sample.iter().copied().sum::<T>() / T::of_usize(sample.len()))
    }
}

/// Geometric mean `exp(mean(ln x))`; values must be positive.
pub fn geometric_mean<T: Scalar>(sample: &[T]) -> Result<T> {
    let logs = log_transform(sample)?;
    mean(&logs).map(T::exp).ok_or(Error::Empty("geometric mean"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        let cases = [
            (0.0, 1.0),
            (0.5, 0.479_500_122_186_953_5),
            (1.0, 0.157_299_207_050_285_13),
            (2.0, 0.004_677_734_981_047_266),
            (3.0, 2.209_049_699_858_544e-5),
            (-1.0, 1.842_700_792_949_715),
        ];
        for (x, want) in cases {
            let got: f64 = erfc(x);
            assert!((got - want).abs() < 1e-14, "erfc({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let lf = ln_factorials::<f64>(20);
        for (k, want) in lf.iter().enumerate().skip(1) {
            let got: f64 = ln_gamma(k as f64 + 1.0);
            assert!((got - want).abs() < 1e-10, "k={k}");
        }
        let half: f64 = ln_gamma(0.5);
        assert!((half - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn student_t_reference() {
        // t = 2.0, df = 10: two-sided p = 0.07338803477074...
        let p: f64 = student_t_two_sided(2.0, 10.0);
        assert!((p - 0.073_388_034_770_740).abs() < 1e-9, "{p}");
    }

    #[test]
    fn fisher_degenerate_margin() {
        let r = fisher_exact::<f64>(0, 7, 0, 3).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
        assert!(fisher_exact::<f64>(0, 0, 0, 0).is_err());
    }

    #[test]
    fn fisher_perfect_split() {
        let r = fisher_exact::<f64>(5, 0, 0, 5).unwrap();
        assert!((r.p_value - 2.0 / 252.0).abs() < 1e-12);
    }

    #[test]
    fn mwu_identical_samples() {
        let x = [3.0, 1.0, 2.0, 2.0];
        let r = mann_whitney_u::<f64>(&x, &x).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = mann_whitney_u::<f64>(&[1.0, 1.0], &[1.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn mwu_separated_triples() {
        let r = mann_whitney_u::<f64>(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        assert!(mann_whitney_u::<f64>(&[], &[1.0]).is_err());
    }

    #[test]
    fn wilcoxon_all_equal_and_all_improving() {
        let same = [(1.0, 1.0), (2.0, 2.0)];
        let r = wilcoxon_signed_rank::<f64>(&same).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.zeros_dropped, 2);

        let improving = [(5.0, 4.0), (6.0, 4.5), (7.0, 3.0), (3.0, 2.9), (9.0, 1.0)];
        let r = wilcoxon_signed_rank::<f64>(&improving).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn log_transform_cases() {
        assert_eq!(log_transform(&[1.0f64]).unwrap(), vec![0.0]);
        let e = std::f64::consts::E;
        let v = log_transform(&[e, e * e]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 2.0).abs() < 1e-15);
        match log_transform(&[1.0f64, 0.0]) {
            Err(Error::NonPositive { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn t_tests() {
        let r = paired_t_test::<f64>(&[(1.0, 2.0), (2.0, 3.0), (3.0, 4.0)]).unwrap();
        assert_eq!(r.p_value, 0.0);
        let r = paired_t_test::<f64>(&[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert!(r.degenerate);
        // Symmetric samples: t = 0, p = 1.
        let r = welch_t_test::<f64>(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0f64, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0f64, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }
}
