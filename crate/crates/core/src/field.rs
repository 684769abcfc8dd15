//! Ground-truth conditional vector fields `f*(z, p, t) = g(p) + M z + v t`
//! with certified Lipschitz constants, plus the observation noise models.
//!
//! The condition part is a sum of plane waves
//! `g(p) = Σ_k a_k sin(<ω_k, p> + φ_k)`, whose gradient norm is bounded by
//! `Σ_k |a_k| |ω_k|`. Sampling rescales the amplitudes so that this sum hits
//! the requested constant exactly, which makes the constant a certificate
//! rather than an estimate.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::space::ConditionSpace;

/// Anything that can be integrated as `dz/dt = F(z, p, t)`.
pub trait ConditionalField: Sync {
    fn state_dim(&self) -> usize;
    fn condition_dim(&self) -> usize;
    fn eval_into(&self, z: &[f64], p: &[f64], t: f64, out: &mut [f64]);

    fn eval(&self, z: &[f64], p: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        self.eval_into(z, p, t, &mut out);
        out
    }
}

/// A field of the form `g(p) + M z + v t` whose structure `(M, v)` is known
/// to the learner and whose condition part `g` is what gets estimated.
pub trait SeparableField: ConditionalField {
    fn condition_part(&self, p: &[f64]) -> Vec<f64>;
    /// `M` row-major.
    fn coupling(&self) -> &[f64];
    fn drift(&self) -> &[f64];
    /// Lipschitz constant in `p` of the smooth part.
    fn lipschitz_p(&self) -> f64;
    fn lipschitz_z(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    pub phase: f64,
}

/// Knobs for [`sample_field_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub d: usize,
    pub m: usize,
    pub num_terms: usize,
    pub lipschitz_p: f64,
    pub lipschitz_z: f64,
    /// Frequency magnitudes are drawn uniformly from this range (radians per unit).
    pub freq_range: (f64, f64),
    pub drift_scale: f64,
}

impl FieldSpec {
    pub fn new(d: usize, m: usize, num_terms: usize, lipschitz_p: f64, lipschitz_z: f64) -> Self {
        Self { d, m, num_terms, lipschitz_p, lipschitz_z, freq_range: (2.0, 6.0), drift_scale: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldDocument", into = "FieldDocument")]
pub struct SyntheticField {
    d: usize,
    m: usize,
    terms: Vec<FourierTerm>,
    /// `M`, row-major `m x m`.
    coupling: Vec<f64>,
    drift: Vec<f64>,
    lipschitz_p: f64,
    lipschitz_z: f64,
}

pub fn spectral_norm(m: usize, row_major: &[f64]) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mat = DMatrix::from_row_slice(m, m, row_major);
    mat.singular_values().iter().copied().fold(0.0, f64::max)
}

impl SyntheticField {
    /// Build a field and certify its constants from the parts.
    pub fn new(d: usize, m: usize, terms: Vec<FourierTerm>, coupling: Vec<f64>, drift: Vec<f64>) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(invalid("field needs d >= 1 and m >= 1"));
        }
        for t in &terms {
            if t.amplitude.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: t.amplitude.len() });
            }
            if t.frequency.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: t.frequency.len() });
            }
        }
        if coupling.len() != m * m {
            return Err(Error::DimensionMismatch { expected: m * m, got: coupling.len() });
        }
        if drift.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: drift.len() });
        }
        let all_finite = terms
            .iter()
            .flat_map(|t| t.amplitude.iter().chain(&t.frequency).chain(std::iter::once(&t.phase)))
            .chain(&coupling)
            .chain(&drift)
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(invalid("field parameters must be finite"));
        }
        let lipschitz_p = terms.iter().map(|t| norm(&t.amplitude) * norm(&t.frequency)).sum();
        let lipschitz_z = spectral_norm(m, &coupling);
        Ok(Self { d, m, terms, coupling, drift, lipschitz_p, lipschitz_z })
    }

    /// Rescale amplitudes and coupling so the certified constants equal the
    /// targets exactly.
    pub fn rescaled(mut self, lipschitz_p: f64, lipschitz_z: f64) -> Result<Self> {
        if lipschitz_p < 0.0 || lipschitz_z < 0.0 {
            return Err(invalid("Lipschitz targets must be non-negative"));
        }
        let s: f64 = self.terms.iter().map(|t| norm(&t.amplitude) * norm(&t.frequency)).sum();
        if s > 0.0 {
            let f = lipschitz_p / s;
            for t in &mut self.terms {
                t.amplitude.iter_mut().for_each(|a| *a *= f);
            }
            self.lipschitz_p = lipschitz_p;
        } else {
            self.lipschitz_p = 0.0;
        }
        let sn = spectral_norm(self.m, &self.coupling);
        if lipschitz_z == 0.0 || sn == 0.0 {
            self.coupling.iter_mut().for_each(|x| *x = 0.0);
            self.lipschitz_z = 0.0;
        } else {
            let f = lipschitz_z / sn;
            self.coupling.iter_mut().for_each(|x| *x *= f);
            self.lipschitz_z = lipschitz_z;
        }
        Ok(self)
    }

    pub fn condition_dim(&self) -> usize {
        self.d
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// Certified Lipschitz constant in `p`.
    pub fn lipschitz_p(&self) -> f64 {
        self.lipschitz_p
    }

    /// Certified Lipschitz constant in `z` (spectral norm of `M`).
    pub fn lipschitz_z(&self) -> f64 {
        self.lipschitz_z
    }

    /// Condition part `g(p)`.
    pub fn condition_part(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.add_condition_part(p, &mut out);
        out
    }

    fn add_condition_part(&self, p: &[f64], out: &mut [f64]) {
        for t in &self.terms {
            let arg = dot(&t.frequency, p) + t.phase;
            let s = arg.sin();
            for (o, a) in out.iter_mut().zip(&t.amplitude) {
                *o += a * s;
            }
        }
    }

    /// Analytic Jacobian of `g`, `m x d` row-major.
    pub fn condition_jacobian(&self, p: &[f64]) -> Vec<f64> {
        let mut jac = vec![0.0; self.m * self.d];
        for t in &self.terms {
            let c = (dot(&t.frequency, p) + t.phase).cos();
            for i in 0..self.m {
                for j in 0..self.d {
                    jac[i * self.d + j] += t.amplitude[i] * c * t.frequency[j];
                }
            }
        }
        jac
    }

    /// `M z + v t`, the structure known to the learner.
    pub fn structure_into(&self, z: &[f64], t: f64, out: &mut [f64]) {
        structure_into(self.m, &self.coupling, &self.drift, z, t, out)
    }

    /// `f*(z, p, t)` with dimension checks.
    pub fn eval_checked(&self, z: &[f64], p: &[f64], t: f64) -> Result<Vec<f64>> {
        if z.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: z.len() });
        }
        if p.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: p.len() });
        }
        Ok(ConditionalField::eval(self, z, p, t))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn structure_into(m: usize, coupling: &[f64], drift: &[f64], z: &[f64], t: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    add_structure(m, coupling, drift, z, t, out);
}

/// `out += M z + v t`. Callers put the condition part in `out` first so
/// that truth and surrogates sum in the same order.
pub(crate) fn add_structure(m: usize, coupling: &[f64], drift: &[f64], z: &[f64], t: f64, out: &mut [f64]) {
    for i in 0..m {
        let row = &coupling[i * m..(i + 1) * m];
        out[i] += dot(row, z) + drift[i] * t;
    }
}

impl SeparableField for SyntheticField {
    fn condition_part(&self, p: &[f64]) -> Vec<f64> {
        SyntheticField::condition_part(self, p)
    }

    fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    fn drift(&self) -> &[f64] {
        &self.drift
    }

    fn lipschitz_p(&self) -> f64 {
        self.lipschitz_p
    }

    fn lipschitz_z(&self) -> f64 {
        self.lipschitz_z
    }
}

impl ConditionalField for SyntheticField {
    fn state_dim(&self) -> usize {
        self.m
    }

    fn condition_dim(&self) -> usize {
        self.d
    }

    fn eval_into(&self, z: &[f64], p: &[f64], t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.add_condition_part(p, out);
        add_structure(self.m, &self.coupling, &self.drift, z, t, out);
    }
}

/// Flat on-disk schema of a field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldDocument {
    d: usize,
    m: usize,
    num_terms: usize,
    /// `num_terms x m`, row-major.
    amplitudes: Vec<f64>,
    /// `num_terms x d`, row-major.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    coupling: Vec<f64>,
    drift: Vec<f64>,
    lipschitz_p: f64,
    lipschitz_z: f64,
}

impl From<SyntheticField> for FieldDocument {
    fn from(f: SyntheticField) -> Self {
        FieldDocument {
            d: f.d,
            m: f.m,
            num_terms: f.terms.len(),
            amplitudes: f.terms.iter().flat_map(|t| t.amplitude.clone()).collect(),
            frequencies: f.terms.iter().flat_map(|t| t.frequency.clone()).collect(),
            phases: f.terms.iter().map(|t| t.phase).collect(),
            coupling: f.coupling,
            drift: f.drift,
            lipschitz_p: f.lipschitz_p,
            lipschitz_z: f.lipschitz_z,
        }
    }
}

impl TryFrom<FieldDocument> for SyntheticField {
    type Error = Error;

    fn try_from(doc: FieldDocument) -> Result<Self> {
        let n = doc.num_terms;
        if doc.amplitudes.len() != n * doc.m || doc.frequencies.len() != n * doc.d || doc.phases.len() != n {
            return Err(Error::Parse("field document term arrays have inconsistent lengths".into()));
        }
        let terms = (0..n)
            .map(|k| FourierTerm {
                amplitude: doc.amplitudes[k * doc.m..(k + 1) * doc.m].to_vec(),
                frequency: doc.frequencies[k * doc.d..(k + 1) * doc.d].to_vec(),
                phase: doc.phases[k],
            })
            .collect();
        let mut field = SyntheticField::new(doc.d, doc.m, terms, doc.coupling, doc.drift)?;
        // Stored certificates win over recomputation so replays are bit-exact.
        if doc.lipschitz_p + 1e-12 < field.lipschitz_p || doc.lipschitz_z + 1e-9 < field.lipschitz_z {
            return Err(Error::Parse("stored Lipschitz certificates are below the field's own".into()));
        }
        field.lipschitz_p = doc.lipschitz_p;
        field.lipschitz_z = doc.lipschitz_z;
        Ok(field)
    }
}

pub fn sample_field(seed: u64, d: usize, m: usize, num_terms: usize, lipschitz_p: f64, lipschitz_z: f64) -> Result<SyntheticField> {
    sample_field_with(seed, &FieldSpec::new(d, m, num_terms, lipschitz_p, lipschitz_z))
}

/// Draw a random field and rescale it onto the requested constants.
pub fn sample_field_with(seed: u64, spec: &FieldSpec) -> Result<SyntheticField> {
    if spec.num_terms == 0 {
        return Err(invalid("num_terms must be >= 1"));
    }
    if !(spec.lipschitz_p > 0.0) || spec.lipschitz_z < 0.0 {
        return Err(invalid("need L > 0 and Λ >= 0"));
    }
    let (flo, fhi) = spec.freq_range;
    if !(flo > 0.0 && fhi >= flo) {
        return Err(invalid("frequency range must satisfy 0 < lo <= hi"));
    }
    let mut r = rng::rng_from(rng::derive(seed, rng::label("field")));
    let terms = (0..spec.num_terms)
        .map(|_| {
            let dir = random_unit(&mut r, spec.d);
            let mag = if fhi > flo { r.random_range(flo..fhi) } else { flo };
            let amplitude: Vec<f64> = (0..spec.m).map(|_| r.sample(StandardNormal)).collect();
            FourierTerm {
                amplitude,
                frequency: dir.iter().map(|x| x * mag).collect(),
                phase: r.random_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect();
    let coupling: Vec<f64> = (0..spec.m * spec.m).map(|_| r.sample(StandardNormal)).collect();
    let drift: Vec<f64> = (0..spec.m).map(|_| spec.drift_scale * r.sample::<f64, _>(StandardNormal)).collect();
    SyntheticField::new(spec.d, spec.m, terms, coupling, drift)?.rescaled(spec.lipschitz_p, spec.lipschitz_z)
}

fn random_unit<R: Rng + ?Sized>(r: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Mean-zero observation noise, applied independently per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// `sigma = 0` is the noiseless limit.
    Gaussian { sigma: f64 },
    StudentT { dof: f64, scale: f64 },
    /// `sign * scale * U^(-1/alpha)`: symmetric, `|e| >= scale`, tail index `alpha`.
    SymmetricPareto { alpha: f64, scale: f64 },
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel::Gaussian { sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::StudentT { dof, scale } if dof > 1.0 && scale > 0.0 => Ok(()),
            NoiseModel::SymmetricPareto { alpha, scale } if alpha > 1.0 && scale > 0.0 => Ok(()),
            other => Err(invalid(format!("invalid noise model {other:?}"))),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(self, NoiseModel::Gaussian { sigma } if *sigma == 0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, sigma).expect("validated sigma").sample(r)
                }
            }
            NoiseModel::StudentT { dof, scale } => scale * StudentT::new(dof).expect("validated dof").sample(r),
            NoiseModel::SymmetricPareto { alpha, scale } => {
                // 1 - U lies in (0, 1], so the power is finite
                let u: f64 = 1.0 - r.random::<f64>();
                let mag = scale * u.powf(-1.0 / alpha);
                if r.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }

    /// Sub-Gaussian parameter, when the model has one.
    pub fn sub_gaussian_sigma(&self) -> Option<f64> {
        match *self {
            NoiseModel::Gaussian { sigma } => Some(sigma),
            _ => None,
        }
    }

    /// Moment proxy `(q, sigma_q)` with `E|e|^q <= sigma_q^q`, `q in (1, 2]`.
    pub fn moment_proxy(&self) -> (f64, f64) {
        match *self {
            NoiseModel::Gaussian { sigma } => (2.0, sigma),
            NoiseModel::StudentT { dof, scale } => {
                let q = (dof - 0.1).min(2.0);
                // E|T|^q = dof^(q/2) Γ((q+1)/2) Γ((dof-q)/2) / (√π Γ(dof/2))
                use statrs::function::gamma::ln_gamma;
                let ln_m = 0.5 * q * dof.ln() + ln_gamma((q + 1.0) / 2.0) + ln_gamma((dof - q) / 2.0)
                    - 0.5 * std::f64::consts::PI.ln()
                    - ln_gamma(dof / 2.0);
                (q, scale * (ln_m / q).exp())
            }
            NoiseModel::SymmetricPareto { alpha, scale } => {
                let q = (alpha - 0.1).min(2.0);
                (q, scale * (alpha / (alpha - q)).powf(1.0 / q))
            }
        }
    }

    /// Standard deviation of one draw, when finite.
    pub fn std_dev(&self) -> Option<f64> {
        match *self {
            NoiseModel::Gaussian { sigma } => Some(sigma),
            NoiseModel::StudentT { dof, scale } if dof > 2.0 => Some(scale * (dof / (dof - 2.0)).sqrt()),
            NoiseModel::SymmetricPareto { alpha, scale } if alpha > 2.0 => Some(scale * (alpha / (alpha - 2.0)).sqrt()),
            _ => None,
        }
    }
}

/// One noisy observation `y = f*(z, p, t) + e`.
pub fn observe<R: Rng + ?Sized>(
    field: &dyn ConditionalField,
    z: &[f64],
    p: &[f64],
    t: f64,
    noise: &NoiseModel,
    r: &mut R,
) -> Vec<f64> {
    let mut y = field.eval(z, p, t);
    for v in &mut y {
        *v += noise.sample(r);
    }
    y
}

/// [`observe`] with a private generator seeded from `seed`.
pub fn observe_seeded(field: &dyn ConditionalField, z: &[f64], p: &[f64], t: f64, noise: &NoiseModel, seed: u64) -> Vec<f64> {
    let mut r = rng::rng_from(seed);
    observe(field, z, p, t, noise, &mut r)
}

/// Base field plus a constant jump on an axis-aligned exceptional box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseField {
    pub base: SyntheticField,
    pub ex_lo: Vec<f64>,
    pub ex_hi: Vec<f64>,
    pub jump: Vec<f64>,
    pub epsilon: f64,
}

impl PiecewiseField {
    pub fn in_exceptional(&self, p: &[f64]) -> bool {
        p.iter().zip(self.ex_lo.iter().zip(&self.ex_hi)).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Condition part including the jump.
    pub fn condition_part(&self, p: &[f64]) -> Vec<f64> {
        let mut g = self.base.condition_part(p);
        if self.in_exceptional(p) {
            g.iter_mut().zip(&self.jump).for_each(|(a, j)| *a += j);
        }
        g
    }

    pub fn jump_magnitude(&self) -> f64 {
        norm(&self.jump)
    }
}

impl SeparableField for PiecewiseField {
    fn condition_part(&self, p: &[f64]) -> Vec<f64> {
        PiecewiseField::condition_part(self, p)
    }

    fn coupling(&self) -> &[f64] {
        self.base.coupling()
    }

    fn drift(&self) -> &[f64] {
        self.base.drift()
    }

    fn lipschitz_p(&self) -> f64 {
        self.base.lipschitz_p()
    }

    fn lipschitz_z(&self) -> f64 {
        self.base.lipschitz_z()
    }
}

impl ConditionalField for PiecewiseField {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn condition_dim(&self) -> usize {
        self.base.condition_dim()
    }

    fn eval_into(&self, z: &[f64], p: &[f64], t: f64, out: &mut [f64]) {
        self.base.eval_into(z, p, t, out);
        if self.in_exceptional(p) {
            out.iter_mut().zip(&self.jump).for_each(|(a, j)| *a += j);
        }
    }
}

/// Exceptional box of volume fraction `epsilon` in the corner selected by
/// `corner` (`true` = upper end of that axis), jump of the given magnitude
/// along the all-ones direction.
pub fn make_piecewise(
    base: &SyntheticField,
    space: &ConditionSpace,
    epsilon: f64,
    jump_magnitude: f64,
    corner: &[bool],
) -> Result<PiecewiseField> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if jump_magnitude < 0.0 {
        return Err(invalid("jump magnitude must be >= 0"));
    }
    if corner.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: corner.len() });
    }
    let side = epsilon.powf(1.0 / space.dim() as f64);
    let (mut ex_lo, mut ex_hi) = (Vec::new(), Vec::new());
    for (a, &upper) in corner.iter().enumerate() {
        let (lo, hi) = space.bounds()[a];
        let w = side * (hi - lo);
        if upper {
            ex_lo.push(hi - w);
            ex_hi.push(hi);
        } else {
            ex_lo.push(lo);
            ex_hi.push(lo + w);
        }
    }
    let m = base.state_dim();
    let jump = vec![jump_magnitude / (m as f64).sqrt(); m];
    Ok(PiecewiseField { base: base.clone(), ex_lo, ex_hi, jump, epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use crate::stats;

    fn single_term() -> SyntheticField {
        SyntheticField::new(
            2,
            2,
            vec![FourierTerm { amplitude: vec![2.0, 0.0], frequency: vec![3.0, 0.0], phase: 0.0 }],
            vec![0.0; 4],
            vec![0.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn rescale_single_term() {
        let f = single_term().rescaled(1.0, 0.0).unwrap();
        assert!((f.terms()[0].amplitude[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.terms()[0].amplitude[1], 0.0);
        assert_eq!(f.lipschitz_p(), 1.0);
    }

    #[test]
    fn zero_lambda_gives_zero_coupling() {
        let f = sample_field(3, 2, 3, 4, 1.0, 0.0).unwrap();
        assert!(f.coupling().iter().all(|x| *x == 0.0));
        assert_eq!(f.lipschitz_z(), 0.0);
    }

    #[test]
    fn sampled_constants_hit_targets() {
        let f = sample_field(5, 2, 3, 5, 1.7, 0.8).unwrap();
        let s: f64 = f.terms().iter().map(|t| norm(&t.amplitude) * norm(&t.frequency)).sum();
        assert!((s - 1.7).abs() < 1e-12);
        assert!((spectral_norm(3, f.coupling()) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_probe_never_exceeds_certificate() {
        for seed in 0..5u64 {
            let f = sample_field(seed, 2, 2, 6, 1.3, 0.5).unwrap();
            let mut r = rng_from(seed + 100);
            let space = ConditionSpace::unit(2).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..10_000 {
                let p = space.sample_uniform(&mut r);
                let q = space.sample_uniform(&mut r);
                let dp = crate::space::distance(&p, &q);
                if dp < 1e-12 {
                    continue;
                }
                let gp = f.condition_part(&p);
                let gq = f.condition_part(&q);
                let diff: Vec<f64> = gp.iter().zip(&gq).map(|(a, b)| a - b).collect();
                worst = worst.max(norm(&diff) / dp);
            }
            assert!(worst <= f.lipschitz_p() + 1e-12, "{worst} > {}", f.lipschitz_p());
        }
    }

    #[test]
    fn eval_special_cases() {
        let f = sample_field(1, 2, 2, 3, 1.0, 0.7).unwrap();
        let p = [0.3, 0.8];
        assert_eq!(f.eval(&[0.0, 0.0], &p, 0.0), f.condition_part(&p));
        let ident = SyntheticField::new(1, 2, vec![], vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(ident.eval(&[0.4, -1.5], &[0.2], 0.9), vec![0.4, -1.5]);
        assert!(f.eval_checked(&[0.0], &p, 0.0).is_err());
        assert!(f.eval_checked(&[0.0, 0.0], &[0.1], 0.0).is_err());
    }

    #[test]
    fn linear_in_state() {
        let f = sample_field(8, 2, 3, 3, 1.0, 0.9).unwrap();
        let p = [0.1, 0.6];
        let z1 = [0.5, -0.2, 1.0];
        let z2 = [-0.3, 0.7, 0.1];
        let a = f.eval(&z1, &p, 0.4);
        let b = f.eval(&z2, &p, 0.4);
        let m = f.coupling();
        for i in 0..3 {
            let expected: f64 = (0..3).map(|j| m[i * 3 + j] * (z1[j] - z2[j])).sum();
            assert!((a[i] - b[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let f = sample_field(21, 2, 3, 5, 2.0, 0.3).unwrap();
        let mut r = rng_from(4);
        let space = ConditionSpace::unit(2).unwrap();
        let h = 1e-5;
        for _ in 0..20 {
            let p = space.sample_uniform(&mut r);
            let jac = f.condition_jacobian(&p);
            for j in 0..2 {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[j] += h;
                pm[j] -= h;
                let gp = f.condition_part(&pp);
                let gm = f.condition_part(&pm);
                for i in 0..3 {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    let an = jac[i * 2 + j];
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn noiseless_observation_equals_field() {
        let f = sample_field(2, 2, 2, 3, 1.0, 0.5).unwrap();
        let y = observe_seeded(&f, &[0.1, 0.2], &[0.4, 0.4], 0.3, &NoiseModel::none(), 9);
        assert_eq!(y, f.eval(&[0.1, 0.2], &[0.4, 0.4], 0.3));
    }

    #[test]
    fn observation_streams_are_deterministic() {
        let f = sample_field(2, 2, 2, 3, 1.0, 0.5).unwrap();
        let noise = NoiseModel::StudentT { dof: 3.0, scale: 0.5 };
        let a = observe_seeded(&f, &[0.0, 0.0], &[0.4, 0.4], 0.0, &noise, 77);
        let b = observe_seeded(&f, &[0.0, 0.0], &[0.4, 0.4], 0.0, &noise, 77);
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_variance_monte_carlo() {
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let mut r = rng_from(12);
        let draws: Vec<f64> = (0..100_000).map(|_| noise.sample(&mut r)).collect();
        let s = stats::Summary::of(&draws);
        let var = s.std_dev * s.std_dev;
        assert!((0.98..=1.02).contains(&var), "variance {var}");
    }

    #[test]
    fn pareto_mean_is_zero_within_three_se() {
        let noise = NoiseModel::SymmetricPareto { alpha: 1.5, scale: 1.0 };
        let mut r = rng_from(13);
        let draws: Vec<f64> = (0..100_000).map(|_| noise.sample(&mut r)).collect();
        let s = stats::Summary::of(&draws);
        let se = s.std_dev / (draws.len() as f64).sqrt();
        assert!(s.mean.abs() <= 3.0 * se, "mean {} se {}", s.mean, se);
    }

    #[test]
    fn moment_proxies() {
        let (q, sq) = NoiseModel::SymmetricPareto { alpha: 1.5, scale: 1.0 }.moment_proxy();
        assert!((q - 1.4).abs() < 1e-12);
        assert!((sq - (1.5f64 / 0.1).powf(1.0 / 1.4)).abs() < 1e-12);
        assert_eq!(NoiseModel::Gaussian { sigma: 0.7 }.moment_proxy(), (2.0, 0.7));
        // t with 5 dof: E T^2 = 5/3
        let (q, sq) = NoiseModel::StudentT { dof: 5.0, scale: 1.0 }.moment_proxy();
        assert_eq!(q, 2.0);
        assert!((sq * sq - 5.0 / 3.0).abs() < 1e-10);
        assert!(NoiseModel::SymmetricPareto { alpha: 1.0, scale: 1.0 }.validate().is_err());
        assert!(NoiseModel::Gaussian { sigma: -1.0 }.validate().is_err());
    }

    #[test]
    fn piecewise_box_and_jump() {
        let base = sample_field(4, 2, 2, 3, 1.0, 0.0).unwrap();
        let space = ConditionSpace::unit(2).unwrap();
        let pw = make_piecewise(&base, &space, 0.25, 0.8, &[true, true]).unwrap();
        assert!((pw.ex_hi[0] - pw.ex_lo[0] - 0.5).abs() < 1e-12);
        assert!((pw.ex_hi[1] - pw.ex_lo[1] - 0.5).abs() < 1e-12);
        let mut sup_in: f64 = 0.0;
        for p in space.grid().iter() {
            let diff: Vec<f64> =
                pw.condition_part(p).iter().zip(base.condition_part(p)).map(|(a, b)| a - b).collect();
            if pw.in_exceptional(p) {
                sup_in = sup_in.max(norm(&diff));
            } else {
                assert_eq!(norm(&diff), 0.0);
            }
        }
        assert!((sup_in - 0.8).abs() < 1e-12);
        let flat = make_piecewise(&base, &space, 0.25, 0.0, &[false, false]).unwrap();
        for p in space.grid().iter().step_by(97) {
            assert_eq!(flat.condition_part(p), base.condition_part(p));
        }
        assert!(make_piecewise(&base, &space, 1.0, 0.1, &[true, true]).is_err());
        assert!(make_piecewise(&base, &space, 0.0, 0.1, &[true, true]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = sample_field(99, 2, 3, 4, 1.1, 0.4).unwrap();
        let back = SyntheticField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
