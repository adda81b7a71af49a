//! Nested production and trade functions: CES aggregation (value added,
//! import composition), CET transformation (domestic/export and
//! destination allocation), wage curves, and Cobb-Douglas households.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FunctionError {
    #[error("non-positive price {0}")]
    NonPositivePrice(f64),
    #[error("unemployment rate {0} outside (0, 1)")]
    DomainError(f64),
    #[error("negative disposable income {0}")]
    NegativeDisposableIncome(f64),
}

fn check_prices(prices: &[f64]) -> Result<(), FunctionError> {
    for &p in prices {
        if !(p > 0.0) || !p.is_finite() {
            return Err(FunctionError::NonPositivePrice(p));
        }
    }
    Ok(())
}

/// CES aggregate `Q = B (Σ δ_i q_i^ρ)^(1/ρ)` with `ρ = (σ−1)/σ`.
/// σ = 1 is handled as the Cobb-Douglas limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CesNest {
    pub sigma: f64,
    pub shares: Vec<f64>,
    pub shift: f64,
}

impl CesNest {
    /// Share and shift parameters reproducing the base point
    /// (quantities, prices, aggregate quantity) as a cost minimum.
    pub fn calibrate(base_q: &[f64], base_p: &[f64], sigma: f64, base_quantity: f64) -> CesNest {
        assert!(sigma > 0.0);
        assert_eq!(base_q.len(), base_p.len());
        let mut shares: Vec<f64> = base_q
            .iter()
            .zip(base_p)
            .map(|(&q, &p)| if q > 0.0 { p * q.powf(1.0 / sigma) } else { 0.0 })
            .collect();
        let total: f64 = shares.iter().sum();
        for s in &mut shares {
            *s /= total;
        }
        let mut nest = CesNest {
            sigma,
            shares,
            shift: 1.0,
        };
        let raw = nest.aggregate(base_q);
        nest.shift = base_quantity / raw;
        nest
    }

    fn rho(&self) -> f64 {
        (self.sigma - 1.0) / self.sigma
    }

    fn is_cobb_douglas(&self) -> bool {
        (self.sigma - 1.0).abs() < 1e-12
    }

    /// Aggregate quantity for given component quantities.
    pub fn aggregate(&self, q: &[f64]) -> f64 {
        if self.is_cobb_douglas() {
            self.shift
                * q.iter()
                    .zip(&self.shares)
                    .filter(|(_, &d)| d > 0.0)
                    .map(|(&qi, &d)| qi.powf(d))
                    .product::<f64>()
        } else {
            let rho = self.rho();
            let sum: f64 = q
                .iter()
                .zip(&self.shares)
                .filter(|(_, &d)| d > 0.0)
                .map(|(&qi, &d)| d * qi.powf(rho))
                .sum();
            self.shift * sum.powf(1.0 / rho)
        }
    }

    /// Minimum cost of one unit of the aggregate at the given prices.
    pub fn unit_cost(&self, prices: &[f64]) -> Result<f64, FunctionError> {
        check_prices(prices)?;
        if self.is_cobb_douglas() {
            let mut c = 1.0 / self.shift;
            for (&p, &d) in prices.iter().zip(&self.shares) {
                if d > 0.0 {
                    c *= (p / d).powf(d);
                }
            }
            Ok(c)
        } else {
            let sum: f64 = prices
                .iter()
                .zip(&self.shares)
                .filter(|(_, &d)| d > 0.0)
                .map(|(&p, &d)| d.powf(self.sigma) * p.powf(1.0 - self.sigma))
                .sum();
            Ok(sum.powf(1.0 / (1.0 - self.sigma)) / self.shift)
        }
    }

    /// Cost-minimizing component demands for `quantity` units of the
    /// aggregate (Shephard's lemma).
    pub fn demands(&self, prices: &[f64], quantity: f64) -> Result<Vec<f64>, FunctionError> {
        let c = self.unit_cost(prices)?;
        if self.is_cobb_douglas() {
            return Ok(prices
                .iter()
                .zip(&self.shares)
                .map(|(&p, &d)| d * c * quantity / p)
                .collect());
        }
        let q_over_b = quantity / self.shift;
        Ok(prices
            .iter()
            .zip(&self.shares)
            .map(|(&p, &d)| {
                if d > 0.0 {
                    q_over_b * (d * self.shift * c / p).powf(self.sigma)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// CET transformation frontier `Q = B (Σ ξ_i q_i^ρ)^(1/ρ)` with
/// `ρ = (σ+1)/σ`. Components with zero base supply stay at zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CetNest {
    pub sigma: f64,
    pub shares: Vec<f64>,
    pub shift: f64,
    pub active: Vec<bool>,
}

impl CetNest {
    pub fn calibrate(base_q: &[f64], base_p: &[f64], sigma: f64, base_quantity: f64) -> CetNest {
        assert!(sigma > 0.0);
        let active: Vec<bool> = base_q.iter().map(|&q| q > 0.0).collect();
        let mut shares: Vec<f64> = base_q
            .iter()
            .zip(base_p)
            .map(|(&q, &p)| if q > 0.0 { p * q.powf(-1.0 / sigma) } else { 0.0 })
            .collect();
        // Normalize so the largest share is 1 (scale is absorbed by B).
        let max = shares.iter().cloned().fold(0.0, f64::max);
        for s in &mut shares {
            *s /= max;
        }
        let mut nest = CetNest {
            sigma,
            shares,
            shift: 1.0,
            active,
        };
        let raw = nest.aggregate(base_q);
        nest.shift = base_quantity / raw;
        nest
    }

    fn rho(&self) -> f64 {
        (self.sigma + 1.0) / self.sigma
    }

    pub fn aggregate(&self, q: &[f64]) -> f64 {
        let rho = self.rho();
        let sum: f64 = q
            .iter()
            .zip(&self.shares)
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|((&qi, &x), _)| x * qi.powf(rho))
            .sum();
        self.shift * sum.powf(1.0 / rho)
    }

    /// Maximum revenue per unit of the aggregate at the given prices.
    pub fn unit_revenue(&self, prices: &[f64]) -> Result<f64, FunctionError> {
        check_prices(prices)?;
        let sum: f64 = prices
            .iter()
            .zip(&self.shares)
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|((&p, &x), _)| x.powf(-self.sigma) * p.powf(1.0 + self.sigma))
            .sum();
        Ok(sum.powf(1.0 / (1.0 + self.sigma)) / self.shift)
    }

    /// Revenue-maximizing allocation of `quantity` units of the
    /// aggregate across components.
    pub fn supplies(&self, prices: &[f64], quantity: f64) -> Result<Vec<f64>, FunctionError> {
        let r = self.unit_revenue(prices)?;
        let q_over_b = quantity / self.shift;
        Ok(prices
            .iter()
            .zip(&self.shares)
            .zip(&self.active)
            .map(|((&p, &x), &a)| {
                if a {
                    q_over_b * (p / (x * self.shift * r)).powf(self.sigma)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Real factor price implied by the wage curve
/// `w = w₀ (UR/UR₀)^ε` with ε < 0.
pub fn wage_curve(
    unemployment_rate: f64,
    ref_real_wage: f64,
    ref_unemployment: f64,
    elasticity: f64,
) -> Result<f64, FunctionError> {
    if !(unemployment_rate > 0.0 && unemployment_rate < 1.0) {
        return Err(FunctionError::DomainError(unemployment_rate));
    }
    if !(ref_unemployment > 0.0 && ref_unemployment < 1.0) {
        return Err(FunctionError::DomainError(ref_unemployment));
    }
    Ok(ref_real_wage * (unemployment_rate / ref_unemployment).powf(elasticity))
}

/// Fixed-proportion intermediate demands and value-added requirement.
pub fn leontief_intermediates(
    activity_level: f64,
    input_coefficients: &[f64],
    value_added_coefficient: f64,
) -> (Vec<f64>, f64) {
    let demands = input_coefficients
        .iter()
        .map(|&c| c * activity_level)
        .collect();
    (demands, value_added_coefficient * activity_level)
}

/// Cobb-Douglas consumption demands from a disposable budget.
/// Budget shares must sum to one.
pub fn household_demands(
    budget: f64,
    budget_shares: &[f64],
    prices: &[f64],
) -> Result<Vec<f64>, FunctionError> {
    check_prices(prices)?;
    if budget < 0.0 {
        return Err(FunctionError::NegativeDisposableIncome(budget));
    }
    Ok(budget_shares
        .iter()
        .zip(prices)
        .map(|(&s, &p)| s * budget / p)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Golden-section minimizer on [a, b].
    fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    /// Brute-force cost minimization on the CES isoquant for two inputs.
    fn ces_oracle_demands(nest: &CesNest, prices: &[f64], quantity: f64) -> (f64, f64) {
        let rho = (nest.sigma - 1.0) / nest.sigma;
        let target = (quantity / nest.shift).powf(rho);
        let q2_of = |q1: f64| ((target - nest.shares[0] * q1.powf(rho)) / nest.shares[1])
            .powf(1.0 / rho);
        // Feasible q1 range: keep the isoquant residual positive. For
        // σ < 1 (rho < 0) there is a lower input requirement instead of
        // an upper bound.
        let bound = (target / nest.shares[0]).powf(1.0 / rho);
        let (lo, hi) = if rho > 0.0 {
            (1e-9, bound * (1.0 - 1e-9))
        } else {
            (bound * (1.0 + 1e-9), 1e6)
        };
        let q1 = golden_min(lo, hi, |q1| prices[0] * q1 + prices[1] * q2_of(q1));
        (q1, q2_of(q1))
    }

    /// Brute-force revenue maximization on the CET frontier.
    fn cet_oracle_supplies(nest: &CetNest, prices: &[f64], quantity: f64) -> (f64, f64) {
        let rho = (nest.sigma + 1.0) / nest.sigma;
        let target = (quantity / nest.shift).powf(rho);
        let q2_of =
            |q1: f64| ((target - nest.shares[0] * q1.powf(rho)) / nest.shares[1]).powf(1.0 / rho);
        let q1_max = (target / nest.shares[0]).powf(1.0 / rho) * (1.0 - 1e-9);
        let q1 = golden_min(1e-9, q1_max, |q1| {
            -(prices[0] * q1 + prices[1] * q2_of(q1))
        });
        (q1, q2_of(q1))
    }

    #[test]
    fn ces_symmetric_inputs_equal_demands() {
        let nest = CesNest::calibrate(&[1.0, 1.0], &[1.0, 1.0], 1.5, 2.0);
        let d = nest.demands(&[1.0, 1.0], 2.0).unwrap();
        assert_relative_eq!(d[0], d[1], max_relative = 1e-12);
        assert_relative_eq!(d[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn ces_cost_linear_homogeneous_in_prices() {
        let nest = CesNest::calibrate(&[3.0, 2.0], &[1.0, 2.0], 0.8, 5.0);
        let c1 = nest.unit_cost(&[1.0, 2.0]).unwrap();
        let c2 = nest.unit_cost(&[2.0, 4.0]).unwrap();
        assert_relative_eq!(c2, 2.0 * c1, max_relative = 1e-12);
        let d1 = nest.demands(&[1.0, 2.0], 5.0).unwrap();
        let d2 = nest.demands(&[2.0, 4.0], 5.0).unwrap();
        assert_relative_eq!(d1[0], d2[0], max_relative = 1e-12);
        assert_relative_eq!(d1[1], d2[1], max_relative = 1e-12);
    }

    #[test]
    fn ces_calibration_reproduces_base_point() {
        let base_q = [6.0, 4.0];
        let base_p = [1.0, 2.0];
        let nest = CesNest::calibrate(&base_q, &base_p, 0.8, 10.0);
        let d = nest.demands(&base_p, 10.0).unwrap();
        assert_relative_eq!(d[0], 6.0, max_relative = 1e-10);
        assert_relative_eq!(d[1], 4.0, max_relative = 1e-10);
        // Unit cost at base equals value per unit.
        let c = nest.unit_cost(&base_p).unwrap();
        assert_relative_eq!(c, (6.0 + 8.0) / 10.0, max_relative = 1e-10);
    }

    #[test]
    fn ces_demand_matches_numeric_minimizer() {
        // Shares from base values (0.6, 0.4) at unit prices, σ = 0.8.
        let nest = CesNest::calibrate(&[0.6, 0.4], &[1.0, 1.0], 0.8, 1.0);
        let prices = [1.0, 2.0];
        let d = nest.demands(&prices, 1.0).unwrap();
        let (o1, o2) = ces_oracle_demands(&nest, &prices, 1.0);
        assert_relative_eq!(d[0], o1, max_relative = 1e-6);
        assert_relative_eq!(d[1], o2, max_relative = 1e-6);
        // And cost equals the oracle's minimum.
        let c = nest.unit_cost(&prices).unwrap();
        assert_relative_eq!(c, prices[0] * o1 + prices[1] * o2, max_relative = 1e-8);
    }

    #[test]
    fn ces_random_instances_match_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let q0 = [rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0)];
            let p0 = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
            // Skip the neighborhood of σ = 1 where the isoquant oracle's
            // exponents blow up (the Cobb-Douglas limit has its own test).
            let sigma = loop {
                let s: f64 = rng.gen_range(0.3..3.0);
                if (s - 1.0).abs() > 0.15 {
                    break s;
                }
            };
            let quantity = rng.gen_range(1.0..10.0);
            let nest = CesNest::calibrate(&q0, &p0, sigma, quantity);
            let prices = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
            let d = nest.demands(&prices, quantity).unwrap();
            let (o1, o2) = ces_oracle_demands(&nest, &prices, quantity);
            assert_relative_eq!(d[0], o1, max_relative = 1e-6);
            assert_relative_eq!(d[1], o2, max_relative = 1e-6);
        }
    }

    #[test]
    fn ces_non_positive_price_rejected() {
        let nest = CesNest::calibrate(&[1.0, 1.0], &[1.0, 1.0], 1.5, 2.0);
        assert!(matches!(
            nest.unit_cost(&[1.0, 0.0]),
            Err(FunctionError::NonPositivePrice(_))
        ));
    }

    #[test]
    fn ces_cobb_douglas_limit() {
        let nest = CesNest::calibrate(&[0.5, 0.5], &[1.0, 1.0], 1.0, 1.0);
        let d = nest.demands(&[1.0, 4.0], 1.0).unwrap();
        // Cobb-Douglas expenditure shares stay at calibrated shares.
        let c = nest.unit_cost(&[1.0, 4.0]).unwrap();
        assert_relative_eq!(1.0 * d[0] / c, 0.5, max_relative = 1e-10);
        assert_relative_eq!(4.0 * d[1] / c, 0.5, max_relative = 1e-10);
    }

    #[test]
    fn cet_equal_prices_reproduce_base_shares() {
        let nest = CetNest::calibrate(&[50.0, 50.0], &[1.0, 1.0], 1.5, 100.0);
        let s = nest.supplies(&[1.0, 1.0], 100.0).unwrap();
        assert_relative_eq!(s[0], 50.0, max_relative = 1e-10);
        assert_relative_eq!(s[1], 50.0, max_relative = 1e-10);
    }

    #[test]
    fn cet_destination_price_cut_ratio() {
        // 6% price cut with σ = 3 multiplies the quantity ratio by
        // 0.94^3 ≈ 0.8306.
        let nest = CetNest::calibrate(&[50.0, 50.0], &[1.0, 1.0], 3.0, 100.0);
        let s = nest.supplies(&[0.94, 1.0], 100.0).unwrap();
        let ratio = s[0] / s[1];
        assert_relative_eq!(ratio, 0.94f64.powi(3), max_relative = 1e-12);
        assert_relative_eq!(ratio, 0.830584, max_relative = 1e-6);
    }

    #[test]
    fn cet_zero_output_zero_supplies() {
        let nest = CetNest::calibrate(&[50.0, 50.0], &[1.0, 1.0], 1.5, 100.0);
        let s = nest.supplies(&[0.9, 1.1], 0.0).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn cet_inactive_component_stays_zero() {
        let nest = CetNest::calibrate(&[80.0, 0.0], &[1.0, 1.0], 1.5, 80.0);
        let s = nest.supplies(&[1.0, 5.0], 80.0).unwrap();
        assert_eq!(s[1], 0.0);
        assert_relative_eq!(s[0], 80.0, max_relative = 1e-10);
    }

    #[test]
    fn cet_matches_numeric_maximizer() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let q0 = [rng.gen_range(1.0..5.0), rng.gen_range(1.0..5.0)];
            let p0 = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
            let sigma = rng.gen_range(0.5..4.0);
            let quantity = rng.gen_range(1.0..10.0);
            let nest = CetNest::calibrate(&q0, &p0, sigma, quantity);
            let prices = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
            let s = nest.supplies(&prices, quantity).unwrap();
            let (o1, o2) = cet_oracle_supplies(&nest, &prices, quantity);
            assert_relative_eq!(s[0], o1, max_relative = 1e-6);
            assert_relative_eq!(s[1], o2, max_relative = 1e-6);
        }
    }

    #[test]
    fn cet_revenue_adds_up() {
        let nest = CetNest::calibrate(&[60.0, 40.0], &[1.0, 1.0], 1.5, 100.0);
        let prices = [0.9, 1.2];
        let s = nest.supplies(&prices, 100.0).unwrap();
        let r = nest.unit_revenue(&prices).unwrap();
        assert_relative_eq!(
            r * 100.0,
            prices[0] * s[0] + prices[1] * s[1],
            max_relative = 1e-10
        );
        // The chosen allocation lies on the frontier.
        assert_relative_eq!(nest.aggregate(&s), 100.0, max_relative = 1e-10);
    }

    #[test]
    fn armington_import_price_rise_ratio() {
        // σ_A = 0.9, import price +10%: import/domestic ratio scales by
        // 1.1^(−0.9) ≈ 0.9178.
        let nest = CesNest::calibrate(&[70.0, 30.0], &[1.0, 1.0], 0.9, 100.0);
        let base = nest.demands(&[1.0, 1.0], 100.0).unwrap();
        let shocked = nest.demands(&[1.0, 1.1], 100.0).unwrap();
        let factor = (shocked[1] / shocked[0]) / (base[1] / base[0]);
        assert_relative_eq!(factor, 1.1f64.powf(-0.9), max_relative = 1e-12);
        assert_relative_eq!(factor, 0.9178, max_relative = 1e-4);
    }

    #[test]
    fn armington_near_perfect_substitution() {
        // σ_A = 50 with a 1% price gap: nearly all demand switches to
        // the cheap origin.
        let nest = CesNest::calibrate(&[50.0, 50.0], &[1.0, 1.0], 50.0, 100.0);
        let d = nest.demands(&[1.0, 1.01], 100.0).unwrap();
        assert!(d[1] / d[0] < 0.65, "ratio {}", d[1] / d[0]);
        let (o1, o2) = ces_oracle_demands(&nest, &[1.0, 1.01], 100.0);
        assert_relative_eq!(d[0], o1, max_relative = 1e-5);
        assert_relative_eq!(d[1], o2, max_relative = 1e-5);
    }

    #[test]
    fn wage_curve_reference_point() {
        assert_eq!(wage_curve(0.1, 2.0, 0.1, -0.1).unwrap(), 2.0);
    }

    #[test]
    fn wage_curve_documented_values() {
        // UR doubles, ε = −0.1 -> wage × 2^(−0.1).
        let w = wage_curve(0.2, 1.0, 0.1, -0.1).unwrap();
        assert_relative_eq!(w, 2.0f64.powf(-0.1), max_relative = 1e-15);
        assert_relative_eq!(w, 0.9330329915368074, max_relative = 1e-12);
        // Land UR halves, ε = −0.4 -> rent × 0.5^(−0.4).
        let r = wage_curve(0.05, 1.0, 0.1, -0.4).unwrap();
        assert_relative_eq!(r, 0.5f64.powf(-0.4), max_relative = 1e-15);
        assert_relative_eq!(r, 1.3195079107728942, max_relative = 1e-12);
    }

    #[test]
    fn wage_curve_monotone_decreasing() {
        let mut last = f64::INFINITY;
        for ur in [0.02, 0.05, 0.1, 0.2, 0.5] {
            let w = wage_curve(ur, 1.0, 0.1, -0.1).unwrap();
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn wage_curve_domain_errors() {
        assert!(wage_curve(0.0, 1.0, 0.1, -0.1).is_err());
        assert!(wage_curve(1.0, 1.0, 0.1, -0.1).is_err());
    }

    #[test]
    fn leontief_examples() {
        let (d, va) = leontief_intermediates(0.0, &[0.2, 0.3], 0.5);
        assert_eq!(d, vec![0.0, 0.0]);
        assert_eq!(va, 0.0);
        let (d, va) = leontief_intermediates(10.0, &[0.2, 0.3], 0.5);
        assert_eq!(d, vec![2.0, 3.0]);
        assert_eq!(va, 5.0);
        let (d2, _) = leontief_intermediates(20.0, &[0.2, 0.3], 0.5);
        assert_eq!(d2, vec![4.0, 6.0]);
    }

    #[test]
    fn household_single_good() {
        let d = household_demands(10.0, &[1.0], &[2.0]).unwrap();
        assert_eq!(d, vec![5.0]);
    }

    #[test]
    fn household_expenditure_shares_match() {
        let shares = [0.5, 0.3, 0.2];
        let prices = [1.0, 2.0, 4.0];
        let d = household_demands(100.0, &shares, &prices).unwrap();
        for i in 0..3 {
            assert_relative_eq!(prices[i] * d[i] / 100.0, shares[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn household_homogeneous_degree_zero() {
        let shares = [0.6, 0.4];
        let d1 = household_demands(100.0, &shares, &[1.0, 2.0]).unwrap();
        let d2 = household_demands(200.0, &shares, &[2.0, 4.0]).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn household_negative_budget_rejected() {
        assert!(matches!(
            household_demands(-1.0, &[1.0], &[1.0]),
            Err(FunctionError::NegativeDisposableIncome(_))
        ));
    }
}
