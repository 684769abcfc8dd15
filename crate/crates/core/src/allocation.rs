//! Closed-form allocation math: the coverage-density bound, its interior
//! optimum, variance-proportional repeats and regional budget splits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Constants of the trade-off bound `Cσ sqrt(K/N) + L c K^(-1/d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Estimation constant `C`.
    pub c_est: f64,
    pub sigma: f64,
    pub lipschitz: f64,
    /// Quasi-uniformity constant `c` (fill distance times `K^(1/d)`).
    pub c_fill: f64,
    pub d: usize,
}

impl BoundParams {
    /// All constants 1 in dimension `d`.
    pub fn unit(d: usize) -> Self {
        Self { c_est: 1.0, sigma: 1.0, lipschitz: 1.0, c_fill: 1.0, d }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.c_est, self.sigma, self.lipschitz, self.c_fill].iter().all(|x| *x > 0.0 && x.is_finite());
        if !ok || self.d == 0 {
            return Err(invalid(format!("bound parameters must be positive with d >= 1: {self:?}")));
        }
        Ok(())
    }

    /// Coverage constant `B = L c` used by the order-β form.
    pub fn coverage_constant(&self) -> f64 {
        self.lipschitz * self.c_fill
    }
}

/// Both terms of the bound at a (possibly fractional) `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub density: f64,
    pub coverage: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.density + self.coverage
    }
}

/// Order-β bound terms `Cσ sqrt(K/N)` and `B K^(-β/d)`.
pub fn beta_terms(k: f64, n: f64, c_est: f64, sigma: f64, b: f64, d: usize, beta: f64) -> BoundTerms {
    BoundTerms { density: c_est * sigma * (k / n).sqrt(), coverage: b * k.powf(-beta / d as f64) }
}

pub fn bound_terms(k: f64, n: f64, params: &BoundParams) -> BoundTerms {
    beta_terms(k, n, params.c_est, params.sigma, params.coverage_constant(), params.d, 1.0)
}

/// Trade-off bound at integer `K` under total budget `N`.
pub fn error_bound(k: usize, n: usize, params: &BoundParams) -> Result<f64> {
    if k == 0 {
        return Err(invalid("K must be >= 1"));
    }
    if k > n {
        return Err(Error::Budget(format!("K = {k} exceeds N = {n}; repeats would drop below 1")));
    }
    Ok(bound_terms(k as f64, n as f64, params).total())
}

/// Bound of the fully diverse baseline `Cσ + L c N^(-1/d)`.
pub fn fully_diverse_bound(n: usize, params: &BoundParams) -> f64 {
    bound_terms(n as f64, n as f64, params).total()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalK {
    pub continuous: f64,
    pub integer: usize,
}

/// Continuous order-β optimum `(2βB sqrt(N) / (d C σ))^(2d/(d+2β))`.
pub fn beta_optimal_k_continuous(n: f64, c_est: f64, sigma: f64, b: f64, d: usize, beta: f64) -> f64 {
    let d = d as f64;
    (2.0 * beta * b * n.sqrt() / (d * c_est * sigma)).powf(2.0 * d / (d + 2.0 * beta))
}

/// Interior optimum of the bound. The integer value is the better of floor
/// and ceil of the continuous optimum, clamped to `[1, N]`.
pub fn optimal_k(n: usize, params: &BoundParams) -> Result<OptimalK> {
    params.validate()?;
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let cont = beta_optimal_k_continuous(n as f64, params.c_est, params.sigma, params.coverage_constant(), params.d, 1.0);
    let lo = (cont.floor() as usize).clamp(1, n);
    let hi = (cont.ceil() as usize).clamp(1, n);
    let integer = if error_bound(hi, n, params)? < error_bound(lo, n, params)? { hi } else { lo };
    Ok(OptimalK { continuous: cont, integer })
}

/// Bound at the continuous optimum clamped to `[1, N]`.
pub fn optimal_error(n: usize, params: &BoundParams) -> Result<f64> {
    let k = optimal_k(n, params)?.continuous.clamp(1.0, n as f64);
    Ok(bound_terms(k, n as f64, params).total())
}

/// Order-β bound `Cσ sqrt(K/N) + B K^(-β/d)` with `C = 1`.
pub fn beta_bound(k: f64, n: f64, sigma: f64, b: f64, d: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be > 0"));
    }
    Ok(beta_terms(k, n, 1.0, sigma, b, d, beta).total())
}

/// Continuous order-β optimum with `C = 1`.
pub fn beta_optimal_k(n: f64, sigma: f64, b: f64, d: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be > 0"));
    }
    Ok(beta_optimal_k_continuous(n, 1.0, sigma, b, d, beta))
}

/// Smallest `N <= n_max` at which the continuous optimum is at least 2 and
/// strictly beats both endpoints `K = 1` and `K = N`.
pub fn smallest_interior_n(params: &BoundParams, n_max: usize) -> Option<usize> {
    (2..=n_max).find(|&n| {
        let Ok(k) = optimal_k(n, params) else { return false };
        if k.continuous < 2.0 || k.continuous > n as f64 {
            return false;
        }
        let at = bound_terms(k.continuous, n as f64, params).total();
        at < bound_terms(1.0, n as f64, params).total() && at < fully_diverse_bound(n, params)
    })
}

/// Bound on `E|sample mean|` under a finite `q`-th moment:
/// `2^(1/q) σ_q n^(-(1 - 1/q))`.
pub fn heavy_tail_mean_bound(q: f64, sigma_q: f64, n: usize) -> Result<f64> {
    if !(q > 1.0 && q <= 2.0) {
        return Err(invalid(format!("q must lie in (1, 2], got {q}")));
    }
    if !(sigma_q > 0.0) || n == 0 {
        return Err(invalid("sigma_q must be > 0 and n >= 1"));
    }
    Ok(2f64.powf(1.0 / q) * sigma_q * (n as f64).powf(-(1.0 - 1.0 / q)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    FullyDiverse,
    Proportional,
    Custom,
}

/// Repeats per anchor for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub k: usize,
    pub repeats: Vec<usize>,
    pub strategy: Strategy,
}

impl AllocationPlan {
    /// `N` split as evenly as possible over `K` anchors.
    pub fn uniform(k: usize, n: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Budget(format!("cannot spread N = {n} over K = {k} anchors with >= 1 repeat each")));
        }
        let repeats = largest_remainder(&vec![1.0; k], n, 1)?;
        Ok(Self { k, repeats, strategy: Strategy::Uniform })
    }

    pub fn fully_diverse(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Budget("fully diverse plan needs N >= 1".into()));
        }
        Ok(Self { k: n, repeats: vec![1; n], strategy: Strategy::FullyDiverse })
    }

    pub fn custom(repeats: Vec<usize>) -> Result<Self> {
        if repeats.is_empty() || repeats.contains(&0) {
            return Err(Error::Budget("custom plan needs K >= 1 and every n_i >= 1".into()));
        }
        Ok(Self { k: repeats.len(), repeats, strategy: Strategy::Custom })
    }

    pub fn total(&self) -> usize {
        self.repeats.iter().sum()
    }
}

/// Integers proportional to `weights`, summing to `total`, each at least
/// `floor`. Fractional parts are awarded largest first, ties to the lower
/// index.
pub fn largest_remainder(weights: &[f64], total: usize, floor: usize) -> Result<Vec<usize>> {
    let k = weights.len();
    if k == 0 {
        return Err(Error::Empty("weights"));
    }
    if k * floor > total {
        return Err(Error::Budget(format!("{k} parts with floor {floor} exceed total {total}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(invalid("weights must be finite and non-negative"));
    }
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| total as f64 * w / sum).collect()
    } else {
        vec![total as f64 / k as f64; k]
    };
    let mut out: Vec<usize> = shares.iter().map(|s| (s.floor() as usize).max(floor)).collect();
    let mut assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..k).collect();
    while assigned < total {
        // largest deficit first
        order.sort_by(|&a, &b| {
            let ra = shares[a] - out[a] as f64;
            let rb = shares[b] - out[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let need = total - assigned;
        for &i in order.iter().take(need) {
            out[i] += 1;
        }
        assigned = out.iter().sum();
    }
    while assigned > total {
        // largest surplus first among parts above the floor
        order.sort_by(|&a, &b| {
            let ra = out[a] as f64 - shares[a];
            let rb = out[b] as f64 - shares[b];
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let i = *order.iter().find(|&&i| out[i] > floor).expect("total >= k * floor");
        out[i] -= 1;
        assigned -= 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionalPlan {
    /// Real-valued optimum `N σ_i² / Σ σ_j²`.
    pub real: Vec<f64>,
    pub plan: AllocationPlan,
    /// Achieved worst-anchor bound `C sqrt(Σ σ_j² / N)`.
    pub worst_bound: f64,
    /// Set when every σ_i was zero and the plan fell back to uniform.
    pub uniform_fallback: bool,
}

/// Repeats proportional to the variance proxies `σ_i²`.
pub fn proportional_allocation(sigmas: &[f64], n: usize, c_est: f64) -> Result<ProportionalPlan> {
    let k = sigmas.len();
    if k == 0 {
        return Err(Error::Empty("sigma list"));
    }
    if n < k {
        return Err(Error::Budget(format!("N = {n} is below K = {k}")));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(invalid("sigmas must be finite and non-negative"));
    }
    let var: Vec<f64> = sigmas.iter().map(|s| s * s).collect();
    let total: f64 = var.iter().sum();
    if total == 0.0 {
        log::warn!("all variance proxies are zero; falling back to uniform allocation");
        let plan = AllocationPlan::uniform(k, n)?;
        return Ok(ProportionalPlan { real: vec![n as f64 / k as f64; k], plan, worst_bound: 0.0, uniform_fallback: true });
    }
    let real: Vec<f64> = var.iter().map(|v| n as f64 * v / total).collect();
    let repeats = largest_remainder(&var, n, 1)?;
    Ok(ProportionalPlan {
        real,
        plan: AllocationPlan { k, repeats, strategy: Strategy::Proportional },
        worst_bound: c_est * (total / n as f64).sqrt(),
        uniform_fallback: false,
    })
}

/// Constants of one region for [`regional_split`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub sigma: f64,
    pub c_fill: f64,
    /// Volume of the region.
    pub volume: f64,
}

impl RegionParams {
    fn weight(&self, d: usize) -> f64 {
        self.sigma * self.sigma * self.c_fill.powi(d as i32) * self.volume
    }
}

/// Budget split balancing the two regional worst-case bounds; the ratio
/// `N_core / N_bd` follows `σ² c^d v`.
pub fn regional_split(core: &RegionParams, boundary: &RegionParams, d: usize, n: usize) -> Result<(usize, usize)> {
    if n < 2 {
        return Err(Error::Budget("regional split needs N >= 2".into()));
    }
    for r in [core, boundary] {
        if ![r.sigma, r.c_fill, r.volume].iter().all(|x| *x > 0.0 && x.is_finite()) {
            return Err(invalid(format!("region parameters must be positive: {r:?}")));
        }
    }
    let split = largest_remainder(&[core.weight(d), boundary.weight(d)], n, 1)?;
    Ok((split[0], split[1]))
}

/// Optimized bound of one region of volume `v`, where the anchor density is
/// chosen per unit volume: `c_fill` is scaled by `v^(1/d)`.
pub fn regional_optimized_error(region: &RegionParams, lipschitz: f64, d: usize, n: usize) -> Result<f64> {
    let params = BoundParams {
        c_est: 1.0,
        sigma: region.sigma,
        lipschitz,
        c_fill: region.c_fill * region.volume.powf(1.0 / d as f64),
        d,
    };
    optimal_error(n, &params)
}
