//! Finite-time moment generating function `φ(t) = E[e^{−θS_t}]`.
//!
//! Three independent routes are provided: brute-force enumeration of
//! renewal count vectors, the linear recursion obtained by conditioning on
//! the first renewal, and the closed form over the roots of the
//! characteristic polynomial `z^K − Σ a_κ z^{K−κ}`.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::reward::{coefficients_a, RewardTable};

/// Cap on the number of count vectors [`phi_enumeration`] will visit.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;
/// Minimum pairwise distance between characteristic roots.
pub const ROOT_SEPARATION: f64 = 1e-8;

/// `φ(0), …, φ(T)` at a fixed `θ`, stored as logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSeries {
    pub theta: f64,
    pub log_values: Vec<f64>,
}

impl PhiSeries {
    pub fn value(&self, t: usize) -> f64 {
        self.log_values[t].exp()
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    /// `−ln φ(t) / (θt)`.
    pub fn capacity(&self, t: usize) -> f64 {
        -self.log_values[t] / (self.theta * t as f64)
    }
}

/// Number of count vectors `n ≥ 0` with `Σ kᵢnᵢ ≤ t`, saturating.
fn count_vectors(times: &[usize], t: usize) -> u64 {
    let mut ways = vec![0u64; t + 1];
    ways[0] = 1;
    for &k in times {
        for budget in k..=t {
            ways[budget] = ways[budget].saturating_add(ways[budget - k]);
        }
    }
    ways.iter().fold(0u64, |acc, &w| acc.saturating_add(w))
}

/// `ln φ(t)` summed over every renewal count vector that fits in `[0, t]`.
pub fn log_phi_enumeration(table: &RewardTable, theta: f64, t: usize) -> Result<f64> {
    let entries = table.entries();
    let times: Vec<usize> = entries.iter().map(|e| e.interarrival).collect();
    if count_vectors(&times, t) > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            limit: ENUMERATION_LIMIT,
        });
    }
    // ln q_i − θR_i, the log-weight of one renewal of kind i.
    let unit: Vec<f64> = entries
        .iter()
        .map(|e| e.prob.ln() - theta * e.reward)
        .collect();
    let log_tail: Vec<f64> = (0..table.max_interarrival())
        .map(|tau| table.survival(tau).ln())
        .collect();
    let k_max = table.max_interarrival();

    let mut terms = Vec::new();
    let mut counts = vec![0u64; entries.len()];
    enumerate(&times, 0, t, &mut counts, &mut |counts, used| {
        let tau = t - used;
        if tau >= k_max {
            return;
        }
        let n: u64 = counts.iter().sum();
        let mut log_term = ln_factorial(n) + log_tail[tau];
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                log_term += c as f64 * unit[i] - ln_factorial(c);
            }
        }
        terms.push(log_term);
    });
    Ok(log_sum_exp(terms))
}

fn enumerate<F: FnMut(&[u64], usize)>(
    times: &[usize],
    i: usize,
    budget: usize,
    counts: &mut [u64],
    visit: &mut F,
) {
    if i == times.len() {
        let used = counts
            .iter()
            .zip(times)
            .map(|(&c, &k)| c as usize * k)
            .sum();
        visit(counts, used);
        return;
    }
    for c in 0..=budget / times[i] {
        counts[i] = c as u64;
        enumerate(times, i + 1, budget - c * times[i], counts, visit);
    }
    counts[i] = 0;
}

/// `φ(t)` by multinomial enumeration.
pub fn phi_enumeration(table: &RewardTable, theta: f64, t: usize) -> Result<f64> {
    log_phi_enumeration(table, theta, t).map(f64::exp)
}

/// `φ(0..=T)` from `φ(t) = Σ_{κ ≤ min(t, K)} a_κ φ(t−κ) + Pr(X > t)`.
pub fn phi_recursion(table: &RewardTable, theta: f64, t_max: usize) -> PhiSeries {
    let log_a: Vec<f64> = coefficients_a(table, theta)
        .iter()
        .map(|a| a.ln())
        .collect();
    let k_max = table.max_interarrival();
    let mut log_values: Vec<f64> = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        let tail = if t < k_max {
            table.survival(t).ln()
        } else {
            f64::NEG_INFINITY
        };
        let terms = (1..=t.min(k_max)).map(|kappa| log_a[kappa - 1] + log_values[t - kappa]);
        log_values.push(log_sum_exp(terms.chain(std::iter::once(tail))).min(0.0));
    }
    PhiSeries { theta, log_values }
}

fn char_poly(a: &[f64], z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    // Horner on z^K − a₁z^{K−1} − … − a_K together with its derivative.
    let mut p = Complex::new(1.0, 0.0);
    let mut dp = Complex::new(0.0, 0.0);
    for &c in a {
        dp = dp * z + p;
        p = p * z - c;
    }
    (p, dp)
}

/// Roots of `z^K − Σ a_κ z^{K−κ}` as eigenvalues of the companion matrix,
/// Newton-polished and sorted by decreasing modulus with the Perron root
/// first.
pub fn characteristic_roots(table: &RewardTable, theta: f64) -> Vec<Complex<f64>> {
    let a = coefficients_a(table, theta);
    let k = a.len();
    let companion = DMatrix::from_fn(k, k, |i, j| {
        if i == 0 {
            a[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<Complex<f64>> = companion
        .complex_eigenvalues()
        .iter()
        .map(|&z| polish(&a, z))
        .collect();
    roots.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.re.total_cmp(&x.re)));
    if let Some(perron) = (0..k).max_by(|&i, &j| roots[i].re.total_cmp(&roots[j].re)) {
        roots[..=perron].rotate_right(1);
    }
    roots
}

fn polish(a: &[f64], mut z: Complex<f64>) -> Complex<f64> {
    let mut residual = char_poly(a, z).0.norm();
    for _ in 0..8 {
        let (p, dp) = char_poly(a, z);
        if dp.norm() == 0.0 {
            break;
        }
        let candidate = z - p / dp;
        let r = char_poly(a, candidate).0.norm();
        if r.partial_cmp(&residual) != Some(std::cmp::Ordering::Less) {
            break;
        }
        z = candidate;
        residual = r;
    }
    z
}

fn check_separation(roots: &[Complex<f64>]) -> Result<()> {
    let mut separation = f64::INFINITY;
    for i in 0..roots.len() {
        for j in 0..i {
            separation = separation.min((roots[i] - roots[j]).norm());
        }
    }
    if separation < ROOT_SEPARATION {
        Err(Error::CoincidentRoots { separation })
    } else {
        Ok(())
    }
}

fn initial_values(table: &RewardTable, theta: f64) -> Vec<f64> {
    let k = table.max_interarrival();
    phi_recursion(table, theta, k - 1).values()
}

fn check_horizon(table: &RewardTable, t: usize) -> Result<()> {
    if t < table.max_interarrival() {
        Err(Error::param(
            "t",
            format!("closed form needs t ≥ K = {}", table.max_interarrival()),
        ))
    } else {
        Ok(())
    }
}

/// `N_t(z) = Σ_κ Σ_{l ≤ κ} a_κ φ(K−l) z^{t+l−κ−1}`.
fn numerator(a: &[f64], phi0: &[f64], t: usize, z: Complex<f64>) -> Complex<f64> {
    let k_max = a.len();
    let mut sum = Complex::new(0.0, 0.0);
    for kappa in 1..=k_max {
        for l in 1..=kappa {
            let power = (t + l) as i32 - kappa as i32 - 1;
            sum += a[kappa - 1] * phi0[k_max - l] * z.powi(power);
        }
    }
    sum
}

/// `φ(t)`, `t ≥ K`, as the sum of residues at the characteristic roots.
///
/// Returns the real part together with the absolute imaginary residual.
pub fn phi_determinant_with_residual(
    table: &RewardTable,
    theta: f64,
    t: usize,
) -> Result<(f64, f64)> {
    check_horizon(table, t)?;
    let roots = characteristic_roots(table, theta);
    check_separation(&roots)?;
    let a = coefficients_a(table, theta);
    let phi0 = initial_values(table, theta);
    let mut sum = Complex::new(0.0, 0.0);
    for (i, &zi) in roots.iter().enumerate() {
        let denom: Complex<f64> = roots
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &zj)| zi - zj)
            .product();
        sum += numerator(&a, &phi0, t, zi) / denom;
    }
    Ok((sum.re, sum.im.abs()))
}

pub fn phi_determinant(table: &RewardTable, theta: f64, t: usize) -> Result<f64> {
    phi_determinant_with_residual(table, theta, t).map(|(re, _)| re)
}

/// Same value as [`phi_determinant`] written as `Σ_l φ(K−l) det B̃_l / det Ã`
/// with explicit complex determinants. `Ã` is the Vandermonde matrix of the
/// roots and `B̃_l` replaces its last column by `Σ_{κ≥l} a_κ z^{t+l−κ−1}`.
/// Numerically fragile beyond small `K`; kept as a cross-check.
pub fn phi_determinant_literal(table: &RewardTable, theta: f64, t: usize) -> Result<f64> {
    check_horizon(table, t)?;
    let roots = characteristic_roots(table, theta);
    check_separation(&roots)?;
    let a = coefficients_a(table, theta);
    let phi0 = initial_values(table, theta);
    let k = roots.len();
    let vandermonde = DMatrix::from_fn(k, k, |i, j| roots[i].powi(j as i32));
    let det_a = vandermonde.clone().determinant();
    let mut sum = Complex::new(0.0, 0.0);
    for l in 1..=k {
        let mut b = vandermonde.clone();
        for (i, &z) in roots.iter().enumerate() {
            b[(i, k - 1)] = (l..=k)
                .map(|kappa| a[kappa - 1] * z.powi((t + l) as i32 - kappa as i32 - 1))
                .sum();
        }
        sum += phi0[k - l] * b.determinant() / det_a;
    }
    Ok(sum.re)
}

/// `C_{e,t} = −ln φ(t)/(θt)` via the recursion.
pub fn effective_capacity_finite(table: &RewardTable, theta: f64, t: usize) -> Result<f64> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::param(
            "theta",
            format!("{theta} must be finite and positive"),
        ));
    }
    if t == 0 {
        return Err(Error::param("t", "must be at least 1"));
    }
    Ok(phi_recursion(table, theta, t).capacity(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{solve_zeta_variable, RewardEntry};
    use approx::assert_relative_eq;

    fn two_state() -> RewardTable {
        RewardTable::new(vec![
            RewardEntry::new(1, "S", 0.6, 1.0),
            RewardEntry::new(2, "S", 0.4, 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn periodic_table_puts_positive_root_first() {
        let table = RewardTable::new(vec![RewardEntry::new(2, "S", 1.0, 0.75)]).unwrap();
        let roots = characteristic_roots(&table, 0.5);
        let rho = (0.5f64 * 0.75).exp().recip().sqrt();
        assert_relative_eq!(roots[0].re, rho, max_relative = 1e-14);
        assert_relative_eq!(roots[1].re, -rho, max_relative = 1e-14);
    }

    fn single(r: f64) -> RewardTable {
        RewardTable::new(vec![RewardEntry::new(1, "S", 1.0, r)]).unwrap()
    }

    #[test]
    fn phi_at_zero_is_one() {
        assert_eq!(phi_enumeration(&two_state(), 1.0, 0).unwrap(), 1.0);
        assert_eq!(phi_recursion(&two_state(), 1.0, 0).value(0), 1.0);
    }

    #[test]
    fn deterministic_unit_renewals() {
        let t = single(1.5);
        let series = phi_recursion(&t, 0.4, 10);
        for s in 0..=10 {
            let exact = (-0.4 * 1.5 * s as f64).exp();
            assert_relative_eq!(series.value(s), exact, max_relative = 1e-14);
            assert_relative_eq!(
                phi_enumeration(&t, 0.4, s).unwrap(),
                exact,
                max_relative = 1e-14
            );
            if s >= 1 {
                assert_relative_eq!(
                    phi_determinant(&t, 0.4, s).unwrap(),
                    exact,
                    max_relative = 1e-12
                );
                assert_relative_eq!(series.capacity(s), 1.5, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn hand_enumeration_at_t2() {
        let em1 = (-1f64).exp();
        let em2 = (-2f64).exp();
        let expected = 0.36 * em2 + 0.6 * em1 * 0.4 + 0.4 * em2;
        assert_relative_eq!(
            phi_enumeration(&two_state(), 1.0, 2).unwrap(),
            expected,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            phi_recursion(&two_state(), 1.0, 2).value(2),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn recursion_matches_enumeration() {
        let series = phi_recursion(&two_state(), 1.0, 12);
        for t in 0..=12 {
            assert_relative_eq!(
                series.value(t),
                phi_enumeration(&two_state(), 1.0, t).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn residue_and_literal_determinant_match_recursion() {
        let series = phi_recursion(&two_state(), 1.0, 10);
        for t in 2..=10 {
            let (re, im) = phi_determinant_with_residual(&two_state(), 1.0, t).unwrap();
            assert_relative_eq!(re, series.value(t), max_relative = 1e-10);
            assert!(im <= 1e-8);
            assert_relative_eq!(
                phi_determinant_literal(&two_state(), 1.0, t).unwrap(),
                series.value(t),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn complex_roots_cancel() {
        // a = [0, 0, 0.5e^{-θ}] style tables give a full circle of roots.
        let t = RewardTable::new(vec![
            RewardEntry::new(1, "S", 0.2, 1.0),
            RewardEntry::new(3, "S", 0.7, 0.5),
            RewardEntry::new(3, "F", 0.1, 0.0),
        ])
        .unwrap();
        let series = phi_recursion(&t, 0.8, 20);
        for s in 3..=20 {
            let (re, im) = phi_determinant_with_residual(&t, 0.8, s).unwrap();
            assert_relative_eq!(re, series.value(s), max_relative = 1e-10);
            assert!(im <= 1e-8);
            assert_relative_eq!(
                phi_determinant_literal(&t, 0.8, s).unwrap(),
                series.value(s),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn dominant_root_is_reciprocal_zeta() {
        let t = two_state();
        let roots = characteristic_roots(&t, 1.0);
        assert!(roots[0].im.abs() < 1e-14 && roots[0].re > 0.0);
        assert_relative_eq!(
            1.0 / roots[0].re,
            solve_zeta_variable(&t, 1.0).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn coincident_roots_are_reported() {
        let z = Complex::new(0.5, 0.0);
        let near = Complex::new(0.5 + 1e-9, 0.0);
        assert!(matches!(
            check_separation(&[z, near]),
            Err(Error::CoincidentRoots { .. })
        ));
        assert!(check_separation(&[z, Complex::new(0.4, 0.0)]).is_ok());
    }

    #[test]
    fn enumeration_guard_trips() {
        let entries = (1..=8)
            .map(|k| RewardEntry::new(k, "S", 0.125, 1.0))
            .collect();
        let t = RewardTable::new(entries).unwrap();
        assert!(matches!(
            phi_enumeration(&t, 1.0, 200),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn finite_capacity_approaches_asymptote() {
        let t = two_state();
        let asymptotic = solve_zeta_variable(&t, 0.5).unwrap().ln() / 0.5;
        let c = effective_capacity_finite(&t, 0.5, 10_000).unwrap();
        assert!((c - asymptotic).abs() <= 1e-3 * asymptotic);
    }

    #[test]
    fn series_is_monotone() {
        let series = phi_recursion(&two_state(), 0.3, 50);
        assert_eq!(series.value(0), 1.0);
        for w in series.log_values.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
