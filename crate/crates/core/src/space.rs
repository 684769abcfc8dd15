//! Geometry of the condition domain: anchor layouts, fill distance,
//! nearest-anchor assignment and the nested evaluation regions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Axis-aligned box `P ⊂ R^d` with a dense evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpace {
    bounds: Vec<(f64, f64)>,
    eval_resolution: usize,
}

/// Default points per axis for the dense evaluation grid.
pub fn default_resolution(d: usize) -> usize {
    if d <= 2 {
        201
    } else {
        41
    }
}

impl ConditionSpace {
    pub fn new(bounds: Vec<(f64, f64)>, eval_resolution: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(invalid("condition space needs d >= 1"));
        }
        if bounds.len() > 3 {
            return Err(invalid(format!("d = {} unsupported (max 3)", bounds.len())));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!("axis {i}: need lo < hi, got ({lo}, {hi})")));
            }
        }
        if eval_resolution < 2 {
            return Err(invalid("eval_resolution must be >= 2"));
        }
        Ok(Self { bounds, eval_resolution })
    }

    /// Unit cube `[0, 1]^d` at the default resolution.
    pub fn unit(d: usize) -> Result<Self> {
        Self::new(vec![(0.0, 1.0); d], default_resolution(d))
    }

    pub fn with_resolution(mut self, eval_resolution: usize) -> Result<Self> {
        if eval_resolution < 2 {
            return Err(invalid("eval_resolution must be >= 2"));
        }
        self.eval_resolution = eval_resolution;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn eval_resolution(&self) -> usize {
        self.eval_resolution
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.bounds[axis].1 - self.bounds[axis].0
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(&self.bounds).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (x, (lo, hi)) in p.iter_mut().zip(&self.bounds) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Map a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.bounds).map(|(x, (lo, hi))| lo + x * (hi - lo)).collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect()
    }

    /// Regular grid with `eval_resolution` points per axis, endpoints included.
    pub fn grid(&self) -> EvalGrid {
        EvalGrid::regular(self, self.eval_resolution)
    }
}

/// Flat storage of grid points, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    dim: usize,
    resolution: usize,
    points: Vec<f64>,
}

impl EvalGrid {
    pub fn regular(space: &ConditionSpace, resolution: usize) -> Self {
        let d = space.dim();
        let total = resolution.pow(d as u32);
        let mut points = Vec::with_capacity(total * d);
        let step: Vec<f64> = (0..d).map(|a| space.width(a) / (resolution - 1) as f64).collect();
        for flat in 0..total {
            let mut rem = flat;
            let mut coords = vec![0.0; d];
            for a in (0..d).rev() {
                let idx = rem % resolution;
                rem /= resolution;
                coords[a] = if idx == resolution - 1 {
                    space.bounds[a].1
                } else {
                    space.bounds[a].0 + idx as f64 * step[a]
                };
            }
            points.extend_from_slice(&coords);
        }
        Self { dim: d, resolution, points }
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Self {
        Self { dim, resolution: 0, points: points.iter().flatten().copied().collect() }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis (0 for scattered point sets).
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Maximum distance from a grid point to its nearest grid neighbour
    /// along the diagonal of one cell; the sup over the grid misses the true
    /// sup by at most this much in the argument.
    pub fn cell_radius(&self, space: &ConditionSpace) -> f64 {
        if self.resolution < 2 {
            return 0.0;
        }
        let r = (self.resolution - 1) as f64;
        0.5 * (0..space.dim()).map(|a| (space.width(a) / r).powi(2)).sum::<f64>().sqrt()
    }
}

/// Named anchor layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Grid,
    LowDiscrepancy,
    Random,
    CenterRect,
    CenterCircle,
    TopLeft,
    Custom,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 7] = [
        LayoutKind::Grid,
        LayoutKind::LowDiscrepancy,
        LayoutKind::Random,
        LayoutKind::CenterRect,
        LayoutKind::CenterCircle,
        LayoutKind::TopLeft,
        LayoutKind::Custom,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            LayoutKind::Grid => "grid",
            LayoutKind::LowDiscrepancy => "low_discrepancy",
            LayoutKind::Random => "random",
            LayoutKind::CenterRect => "center_rect",
            LayoutKind::CenterCircle => "center_circle",
            LayoutKind::TopLeft => "top_left",
            LayoutKind::Custom => "custom",
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayoutKind::ALL
            .iter()
            .copied()
            .find(|k| k.tag() == s)
            .ok_or_else(|| invalid(format!("unsupported layout kind '{s}'")))
    }
}

/// Anchor conditions `{p_i}`; distinct points inside the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    layout: LayoutKind,
}

impl AnchorSet {
    pub fn new(space: &ConditionSpace, points: Vec<Vec<f64>>, layout: LayoutKind) -> Result<Self> {
        let dim = space.dim();
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if !space.contains(p) {
                return Err(invalid(format!("anchor {i} lies outside the domain: {p:?}")));
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(invalid(format!("anchors {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { dim, points, layout })
    }

    pub fn custom(space: &ConditionSpace, points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(space, points, LayoutKind::Custom)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> LayoutKind {
        self.layout
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Copy with one more point appended (tagged custom).
    pub fn with_point(&self, space: &ConditionSpace, q: Vec<f64>) -> Result<Self> {
        let mut points = self.points.clone();
        points.push(q);
        Self::new(space, points, LayoutKind::Custom)
    }

    /// Line-oriented table: `# d=<d> layout=<tag>` then one point per line.
    pub fn to_table(&self) -> String {
        let mut out = format!("# d={} layout={}\n", self.dim, self.layout);
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_table(space: &ConditionSpace, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(Error::Empty("anchor table"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse(format!("missing header: {header}")))?;
        let mut dim = None;
        let mut layout = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("d=") {
                dim = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
            } else if let Some(v) = field.strip_prefix("layout=") {
                layout = Some(v.parse::<LayoutKind>()?);
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse("header lacks d=".into()))?;
        let layout = layout.ok_or_else(|| Error::Parse("header lacks layout=".into()))?;
        if dim != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: dim });
        }
        let points = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, points, layout)
    }
}

const PRIMES: [u64; 3] = [2, 3, 5];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton point with index `i` (starting at 1) in the unit cube.
pub fn halton(i: u64, d: usize) -> Vec<f64> {
    (0..d).map(|a| radical_inverse(i, PRIMES[a])).collect()
}

/// Point `i` of the additive recurrence `frac(1/2 + i α)` with
/// `α_j = φ_d^(-j)`, where `φ_d` is the real root of `x^(d+1) = x + 1`.
/// Covers the cube more evenly than Halton at small counts.
pub fn kronecker(i: u64, d: usize) -> Vec<f64> {
    let mut phi: f64 = 2.0;
    for _ in 0..64 {
        let f = phi.powi(d as i32 + 1) - phi - 1.0;
        let df = (d as f64 + 1.0) * phi.powi(d as i32) - 1.0;
        phi -= f / df;
    }
    (1..=d)
        .map(|j| {
            let alpha = phi.powi(-(j as i32));
            (0.5 + alpha * i as f64).fract()
        })
        .collect()
}

fn exact_root(k: usize, d: usize) -> Option<usize> {
    let r = (k as f64).powf(1.0 / d as f64).round() as usize;
    (r.max(1).saturating_sub(1)..=r + 1).find(|&c| c >= 1 && c.pow(d as u32) == k)
}

/// Build one of the catalog layouts with `k` anchors.
///
/// `grid` needs `k = j^d`; `center_circle` needs `d >= 2`. Deterministic
/// layouts ignore `seed`.
pub fn make_layout(space: &ConditionSpace, kind: LayoutKind, k: usize, seed: u64) -> Result<AnchorSet> {
    if k == 0 {
        return Err(invalid("layout needs K >= 1"));
    }
    let d = space.dim();
    let unit_points: Vec<Vec<f64>> = match kind {
        LayoutKind::Grid => {
            let side = exact_root(k, d).ok_or(Error::LayoutCapacity { layout: kind.to_string(), k, d })?;
            (0..k)
                .map(|flat| {
                    let mut rem = flat;
                    let mut u = vec![0.0; d];
                    for a in (0..d).rev() {
                        u[a] = ((rem % side) as f64 + 0.5) / side as f64;
                        rem /= side;
                    }
                    u
                })
                .collect()
        }
        LayoutKind::LowDiscrepancy => (1..=k as u64).map(|i| kronecker(i, d)).collect(),
        LayoutKind::Random => {
            let mut r = rng::rng_from(rng::derive(seed, rng::label("layout/random")));
            (0..k).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect()
        }
        LayoutKind::CenterRect => center_rect_unit(k, d),
        LayoutKind::CenterCircle => {
            if d < 2 {
                return Err(Error::LayoutCapacity { layout: kind.to_string(), k, d });
            }
            // true circle of radius 0.2 * width(axis 0), built in domain coordinates
            let c = space.center();
            let r = 0.2 * space.width(0);
            let points = (0..k)
                .map(|j| {
                    let theta = std::f64::consts::TAU * j as f64 / k as f64;
                    let mut p = c.clone();
                    p[0] += r * theta.cos();
                    p[1] += r * theta.sin();
                    p
                })
                .collect();
            return AnchorSet::new(space, points, kind);
        }
        LayoutKind::TopLeft => (1..=k as u64)
            .map(|i| {
                let h = kronecker(i, d);
                // axis 0 in the lower half, remaining axes in the upper half
                h.iter()
                    .enumerate()
                    .map(|(a, x)| if a == 0 { 0.5 * x } else { 0.5 + 0.5 * x })
                    .collect()
            })
            .collect(),
        LayoutKind::Custom => {
            return Err(invalid("custom layouts are built with AnchorSet::custom"));
        }
    };
    let points = unit_points.iter().map(|u| space.from_unit(u)).collect();
    AnchorSet::new(space, points, kind)
}

/// Rows x columns lattice spanning the central 40% (axis 0) by 30% (axis 1).
fn center_rect_unit(k: usize, d: usize) -> Vec<Vec<f64>> {
    let rows = (1..=k).filter(|r| k.is_multiple_of(*r) && r * r <= k).max().unwrap_or(1);
    let cols = k / rows;
    let span = |n: usize, extent: f64, i: usize| {
        if n == 1 {
            0.5
        } else {
            0.5 - extent / 2.0 + extent * i as f64 / (n - 1) as f64
        }
    };
    if d == 1 {
        return (0..k).map(|i| vec![span(k, 0.4, i)]).collect();
    }
    let mut out = Vec::with_capacity(k);
    for r in 0..rows {
        for c in 0..cols {
            let mut u = vec![0.5; d];
            u[0] = span(cols, 0.4, c);
            u[1] = span(rows, 0.3, r);
            out.push(u);
        }
    }
    out
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Brute-force nearest anchor; ties go to the lowest index.
pub fn nearest_anchor(p: &[f64], anchors: &AnchorSet) -> Result<usize> {
    if anchors.is_empty() {
        return Err(Error::Empty("anchor set"));
    }
    if p.len() != anchors.dim() {
        return Err(Error::DimensionMismatch { expected: anchors.dim(), got: p.len() });
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, a) in anchors.points().iter().enumerate() {
        let d = dist2(p, a);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Uniform bucket index for repeated nearest-anchor queries. Returns the
/// same index as [`nearest_anchor`], including the tie rule.
#[derive(Debug, Clone)]
pub struct AnchorIndex {
    dim: usize,
    lo: Vec<f64>,
    cell: Vec<f64>,
    cells_per_axis: usize,
    buckets: Vec<Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl AnchorIndex {
    pub fn build(space: &ConditionSpace, anchors: &AnchorSet) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Empty("anchor set"));
        }
        let dim = space.dim();
        let cells_per_axis = ((anchors.len() as f64).powf(1.0 / dim as f64).ceil() as usize).max(1);
        let lo: Vec<f64> = space.bounds().iter().map(|b| b.0).collect();
        let cell: Vec<f64> = (0..dim).map(|a| space.width(a) / cells_per_axis as f64).collect();
        let mut idx = Self {
            dim,
            lo,
            cell,
            cells_per_axis,
            buckets: vec![Vec::new(); cells_per_axis.pow(dim as u32)],
            points: anchors.points().to_vec(),
        };
        for (i, p) in anchors.points().iter().enumerate() {
            let c = idx.cell_of(p);
            let flat = idx.flat(&c);
            idx.buckets[flat].push(i);
        }
        Ok(idx)
    }

    fn cell_of(&self, p: &[f64]) -> Vec<isize> {
        (0..self.dim)
            .map(|a| {
                let c = ((p[a] - self.lo[a]) / self.cell[a]).floor() as isize;
                c.clamp(0, self.cells_per_axis as isize - 1)
            })
            .collect()
    }

    fn flat(&self, c: &[isize]) -> usize {
        c.iter().fold(0usize, |acc, &x| acc * self.cells_per_axis + x as usize)
    }

    /// Nearest anchor index and its distance.
    pub fn nearest(&self, p: &[f64]) -> (usize, f64) {
        let home = self.cell_of(p);
        let n = self.cells_per_axis as isize;
        let min_cell = self.cell.iter().copied().fold(f64::INFINITY, f64::min);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        let mut ring = 0isize;
        let mut c = vec![0isize; self.dim];
        loop {
            self.visit_ring(&home, ring, n, 0, &mut c, &mut |flat, this| {
                for &i in &this.buckets[flat] {
                    let d = dist2(p, &this.points[i]);
                    if d < best_d || (d == best_d && i < best) {
                        best_d = d;
                        best = i;
                    }
                }
            });
            // every point in ring r+1 is at least r cells away
            let lower = ring as f64 * min_cell;
            if best != usize::MAX && lower * lower > best_d * (1.0 + 1e-12) {
                break;
            }
            ring += 1;
            if ring > n {
                break;
            }
        }
        (best, best_d.sqrt())
    }

    fn visit_ring(
        &self,
        home: &[isize],
        ring: isize,
        n: isize,
        axis: usize,
        c: &mut Vec<isize>,
        f: &mut dyn FnMut(usize, &Self),
    ) {
        if axis == self.dim {
            let cheb = c.iter().zip(home).map(|(a, b)| (a - b).abs()).max().unwrap_or(0);
            if cheb == ring {
                let flat = self.flat(c);
                f(flat, self);
            }
            return;
        }
        let lo = (home[axis] - ring).max(0);
        let hi = (home[axis] + ring).min(n - 1);
        for x in lo..=hi {
            c[axis] = x;
            self.visit_ring(home, ring, n, axis + 1, c, f);
        }
    }

    /// Nearest-anchor label for every grid point.
    pub fn assign(&self, grid: &EvalGrid) -> Vec<usize> {
        grid.iter().map(|p| self.nearest(p).0).collect()
    }
}

/// Largest distance from any of `points` to its nearest anchor.
pub fn coverage_gap(points: &EvalGrid, space: &ConditionSpace, anchors: &AnchorSet) -> Result<f64> {
    let index = AnchorIndex::build(space, anchors)?;
    Ok(points.iter().map(|p| index.nearest(p).1).fold(0.0, f64::max))
}

/// Fill distance measured on the dense evaluation grid.
pub fn fill_distance(anchors: &AnchorSet, space: &ConditionSpace) -> Result<f64> {
    coverage_gap(&space.grid(), space, anchors)
}

/// Measured quasi-uniformity constant `h * K^(1/d)`.
pub fn quasi_uniformity_constant(anchors: &AnchorSet, space: &ConditionSpace) -> Result<f64> {
    let h = fill_distance(anchors, space)?;
    Ok(h * (anchors.len() as f64).powf(1.0 / space.dim() as f64))
}

/// One axis-aligned evaluation region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub area_fraction: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect()
    }
}

/// Nested rectangles concentric about the domain centre (S@1..S@k regions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFamily {
    regions: Vec<Region>,
}

impl RegionFamily {
    pub const DEFAULT_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.9];

    pub fn new(space: &ConditionSpace, fractions: &[f64]) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::Empty("region fractions"));
        }
        for w in fractions.windows(2) {
            if w[0] >= w[1] {
                return Err(invalid("region fractions must be strictly increasing"));
            }
        }
        if fractions[0] <= 0.0 || *fractions.last().unwrap() > 1.0 {
            return Err(invalid("region fractions must lie in (0, 1]"));
        }
        let d = space.dim() as f64;
        let c = space.center();
        let regions = fractions
            .iter()
            .map(|&f| {
                let scale = f.powf(1.0 / d);
                let half: Vec<f64> = (0..space.dim()).map(|a| 0.5 * scale * space.width(a)).collect();
                Region {
                    area_fraction: f,
                    lo: c.iter().zip(&half).map(|(c, h)| c - h).collect(),
                    hi: c.iter().zip(&half).map(|(c, h)| c + h).collect(),
                }
            })
            .collect();
        Ok(Self { regions })
    }

    pub fn standard(space: &ConditionSpace) -> Self {
        Self::new(space, &Self::DEFAULT_FRACTIONS).expect("default fractions are valid")
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn unit2() -> ConditionSpace {
        ConditionSpace::unit(2).unwrap()
    }

    const GRID_ERR: f64 = 5e-3;

    #[test]
    fn rejects_bad_spaces() {
        assert!(ConditionSpace::new(vec![], 10).is_err());
        assert!(ConditionSpace::new(vec![(1.0, 0.0)], 10).is_err());
        assert!(ConditionSpace::new(vec![(0.0, 1.0)], 1).is_err());
        assert!(ConditionSpace::new(vec![(0.0, 1.0); 4], 10).is_err());
    }

    #[test]
    fn single_grid_anchor_is_center() {
        let a = make_layout(&unit2(), LayoutKind::Grid, 1, 0).unwrap();
        assert_eq!(a.points(), &[vec![0.5, 0.5]]);
    }

    #[test]
    fn grid_rejects_non_powers() {
        let err = make_layout(&unit2(), LayoutKind::Grid, 5, 0).unwrap_err();
        assert!(matches!(err, Error::LayoutCapacity { .. }));
        assert!(make_layout(&unit2(), LayoutKind::Grid, 0, 0).is_err());
        assert!("hexagonal".parse::<LayoutKind>().is_err());
    }

    #[test]
    fn center_rect_six_is_two_by_three() {
        let a = make_layout(&unit2(), LayoutKind::CenterRect, 6, 0).unwrap();
        let mut xs: Vec<f64> = a.points().iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = a.points().iter().map(|p| p[1]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        ys.sort_by(f64::total_cmp);
        ys.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(xs.len(), 3);
        assert_eq!(ys.len(), 2);
        assert!((xs[0] - 0.3).abs() < 1e-12 && (xs[2] - 0.7).abs() < 1e-12);
        assert!((ys[0] - 0.35).abs() < 1e-12 && (ys[1] - 0.65).abs() < 1e-12);
    }

    #[test]
    fn circle_and_top_left_geometry() {
        let s = unit2();
        let c = make_layout(&s, LayoutKind::CenterCircle, 8, 0).unwrap();
        for p in c.points() {
            assert!((distance(p, &[0.5, 0.5]) - 0.2).abs() < 1e-12);
        }
        let t = make_layout(&s, LayoutKind::TopLeft, 10, 0).unwrap();
        assert!(t.points().iter().all(|p| p[0] <= 0.5 && p[1] >= 0.5));
        assert!(make_layout(&ConditionSpace::unit(1).unwrap(), LayoutKind::CenterCircle, 3, 0).is_err());
    }

    #[test]
    fn fill_distance_reference_values() {
        let s = unit2();
        let center = AnchorSet::custom(&s, vec![vec![0.5, 0.5]]).unwrap();
        assert!((fill_distance(&center, &s).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < GRID_ERR);
        let corners = AnchorSet::custom(
            &s,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        assert!((fill_distance(&corners, &s).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < GRID_ERR);
        let g = make_layout(&s, LayoutKind::Grid, 4, 0).unwrap();
        assert!((fill_distance(&g, &s).unwrap() - 0.35355).abs() < GRID_ERR);
    }

    #[test]
    fn empty_anchor_set_is_rejected() {
        let s = unit2();
        let empty = AnchorSet::custom(&s, vec![]).unwrap();
        assert!(fill_distance(&empty, &s).is_err());
        assert!(nearest_anchor(&[0.1, 0.1], &empty).is_err());
    }

    #[test]
    fn nearest_anchor_tie_breaks_low() {
        let s = unit2();
        let a = AnchorSet::custom(&s, vec![vec![0.25, 0.5], vec![0.75, 0.5], vec![0.1, 0.1], vec![0.9, 0.9]])
            .unwrap();
        assert_eq!(nearest_anchor(&[0.5, 0.5], &a).unwrap(), 0);
        assert_eq!(nearest_anchor(&[0.9, 0.9], &a).unwrap(), 3);
        let idx = AnchorIndex::build(&s, &a).unwrap();
        assert_eq!(idx.nearest(&[0.5, 0.5]).0, 0);
    }

    #[test]
    fn index_matches_brute_force() {
        let s = unit2();
        let mut r = rng_from(11);
        for k in [1usize, 2, 7, 25, 64] {
            let a = make_layout(&s, LayoutKind::Random, k, k as u64).unwrap();
            let idx = AnchorIndex::build(&s, &a).unwrap();
            for _ in 0..500 {
                let p = s.sample_uniform(&mut r);
                assert_eq!(idx.nearest(&p).0, nearest_anchor(&p, &a).unwrap());
            }
        }
        // exact ties on a lattice
        let g = make_layout(&s, LayoutKind::Grid, 16, 0).unwrap();
        let idx = AnchorIndex::build(&s, &g).unwrap();
        for p in s.grid().iter() {
            assert_eq!(idx.nearest(p).0, nearest_anchor(p, &g).unwrap());
        }
    }

    #[test]
    fn low_discrepancy_beats_random_fill() {
        let s = unit2().with_resolution(101).unwrap();
        let ld = make_layout(&s, LayoutKind::LowDiscrepancy, 16, 7).unwrap();
        let h_ld = fill_distance(&ld, &s).unwrap();
        let wins = (0..100u64)
            .filter(|&seed| {
                let r = make_layout(&s, LayoutKind::Random, 16, seed).unwrap();
                h_ld <= fill_distance(&r, &s).unwrap()
            })
            .count();
        assert!(wins >= 90, "low-discrepancy won only {wins}/100");
    }

    #[test]
    fn grid_fill_distance_obeys_lattice_bound() {
        let s = ConditionSpace::unit(2).unwrap();
        for k in 1..=6usize {
            let g = make_layout(&s, LayoutKind::Grid, k * k, 0).unwrap();
            let h = fill_distance(&g, &s).unwrap();
            assert!(h <= (2f64).sqrt() / 2.0 / k as f64 + 1e-12);
        }
    }

    #[test]
    fn table_round_trip() {
        let s = unit2();
        let a = make_layout(&s, LayoutKind::LowDiscrepancy, 5, 0).unwrap();
        let text = a.to_table();
        assert!(text.starts_with("# d=2 layout=low_discrepancy\n"));
        assert_eq!(AnchorSet::from_table(&s, &text).unwrap(), a);
    }

    #[test]
    fn regions_are_nested() {
        let s = unit2();
        let fam = RegionFamily::standard(&s);
        let mut r = rng_from(3);
        for _ in 0..2000 {
            let p = s.sample_uniform(&mut r);
            for w in fam.regions().windows(2) {
                if w[0].contains(&p) {
                    assert!(w[1].contains(&p));
                }
            }
        }
        let area: f64 = fam.regions()[0].lo.iter().zip(&fam.regions()[0].hi).map(|(l, h)| h - l).product();
        assert!((area - 0.25).abs() < 1e-12);
        assert!(RegionFamily::new(&s, &[0.5, 0.25]).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adding_an_anchor_never_increases_fill(seed in 0u64..1000, k in 1usize..12, qx in 0.0f64..1.0, qy in 0.0f64..1.0) {
            let s = ConditionSpace::unit(2).unwrap().with_resolution(41).unwrap();
            let a = make_layout(&s, LayoutKind::Random, k, seed).unwrap();
            let h = fill_distance(&a, &s).unwrap();
            if let Ok(b) = a.with_point(&s, vec![qx, qy]) {
                prop_assert!(fill_distance(&b, &s).unwrap() <= h);
            }
        }

        #[test]
        fn nearest_is_closest(seed in 0u64..1000, k in 1usize..20, px in 0.0f64..1.0, py in 0.0f64..1.0) {
            let s = ConditionSpace::unit(2).unwrap();
            let a = make_layout(&s, LayoutKind::Random, k, seed).unwrap();
            let p = [px, py];
            let i = nearest_anchor(&p, &a).unwrap();
            for q in a.points() {
                prop_assert!(distance(&p, a.point(i)) <= distance(&p, q));
            }
        }
    }
}
