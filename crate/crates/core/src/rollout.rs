//! Fixed-step trajectory integration, the Grönwall endpoint bound, and
//! region-level success rates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::diff_norm;
use crate::field::ConditionalField;
use crate::rng;
use crate::space::RegionFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least two states")
    }
}

/// Classical fourth-order Runge-Kutta on a uniform grid of `steps` steps
/// over `[0, horizon]`.
pub fn integrate(field: &(impl ConditionalField + ?Sized), z0: &[f64], p: &[f64], horizon: f64, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(invalid("steps must be >= 1"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be > 0"));
    }
    let m = field.state_dim();
    if z0.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: z0.len() });
    }
    if p.len() != field.condition_dim() {
        return Err(Error::DimensionMismatch { expected: field.condition_dim(), got: p.len() });
    }
    let h = horizon / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(z0.to_vec());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    let mut z = z0.to_vec();
    for s in 0..steps {
        let t = s as f64 * h;
        field.eval_into(&z, p, t, &mut k1);
        axpy(&z, 0.5 * h, &k1, &mut tmp);
        field.eval_into(&tmp, p, t + 0.5 * h, &mut k2);
        axpy(&z, 0.5 * h, &k2, &mut tmp);
        field.eval_into(&tmp, p, t + 0.5 * h, &mut k3);
        axpy(&z, h, &k3, &mut tmp);
        field.eval_into(&tmp, p, t + h, &mut k4);
        for i in 0..m {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(bad) = z.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: s + 1, detail: format!("coordinate {bad} at t = {}", t + h) });
        }
        times.push((s + 1) as f64 * h);
        states.push(z.clone());
    }
    Ok(Trajectory { times, states })
}

fn axpy(z: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for i in 0..z.len() {
        out[i] = z[i] + a * k[i];
    }
}

/// Endpoint bound `((e^(ΛT) - 1) / Λ) δ`, with the `T δ` limit at `Λ = 0`.
pub fn gronwall_bound(lambda: f64, horizon: f64, delta: f64) -> f64 {
    let x = lambda * horizon;
    let factor = if x < 1e-6 {
        // (e^x - 1)/Λ = T (1 + x/2 + x²/6 + x³/24)
        horizon * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
    } else {
        x.exp_m1() / lambda
    };
    factor * delta
}

/// `|ẑ(T) - z(T)|` with both systems on the same time grid.
pub fn trajectory_deviation(
    policy: &(impl ConditionalField + ?Sized),
    field: &(impl ConditionalField + ?Sized),
    z0: &[f64],
    p: &[f64],
    horizon: f64,
    steps: usize,
) -> Result<f64> {
    let a = integrate(policy, z0, p, horizon, steps)?;
    let b = integrate(field, z0, p, horizon, steps)?;
    Ok(diff_norm(a.endpoint(), b.endpoint()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuccessConfig {
    /// Success iff the endpoint deviation is at most `tau`.
    pub tau: f64,
    pub horizon: f64,
    pub steps: usize,
    pub trials: usize,
}

impl Default for SuccessConfig {
    fn default() -> Self {
        Self { tau: 0.1, horizon: 1.0, steps: 20, trials: 100 }
    }
}

impl SuccessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.horizon > 0.0) || self.steps == 0 || self.trials == 0 {
            return Err(invalid(format!("invalid success config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRate {
    pub region: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub tau: f64,
}

/// Endpoint deviations of `cfg.trials` rollouts from `z0 = 0` at uniform
/// conditions in each region. Conditions depend only on `seed` and the
/// region index.
pub fn region_deviations(
    policy: &(impl ConditionalField + ?Sized),
    field: &(impl ConditionalField + ?Sized),
    regions: &RegionFamily,
    cfg: &SuccessConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let z0 = vec![0.0; field.state_dim()];
    regions
        .regions()
        .iter()
        .enumerate()
        .map(|(ri, region)| {
            let mut r = rng::rng_from(rng::derive_path(seed, &[rng::label("region"), ri as u64]));
            (0..cfg.trials)
                .map(|_| {
                    let p = region.sample_uniform(&mut r);
                    trajectory_deviation(policy, field, &z0, &p, cfg.horizon, cfg.steps)
                })
                .collect()
        })
        .collect()
}

/// Per-region success rates.
pub fn success_metrics(
    policy: &(impl ConditionalField + ?Sized),
    field: &(impl ConditionalField + ?Sized),
    regions: &RegionFamily,
    cfg: &SuccessConfig,
    seed: u64,
) -> Result<Vec<RegionRate>> {
    let devs = region_deviations(policy, field, regions, cfg, seed)?;
    Ok(rates_from_deviations(&devs, cfg.tau))
}

pub fn rates_from_deviations(devs: &[Vec<f64>], tau: f64) -> Vec<RegionRate> {
    devs.iter()
        .enumerate()
        .map(|(region, d)| {
            let successes = d.iter().filter(|&&x| x <= tau).count();
            RegionRate { region, trials: d.len(), successes, rate: successes as f64 / d.len() as f64, tau }
        })
        .collect()
}
