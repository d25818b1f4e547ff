//! Interval partitions, piecewise-constant densities, per-bin error scores,
//! refinement, and NPT generation from deterministic and statistical CPDs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Resolved};
use crate::factor::Factor;
use crate::math;

/// Ordered, contiguous intervals covering a variable's (truncated) support.
/// Zero-width bins hold point masses; discrete variables use one zero-width
/// bin per state at the state index.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub bins: Vec<(f64, f64)>,
    /// Integer-valued variable: bin edges sit on half-integers.
    pub lattice: bool,
    /// Bins that refinement must leave untouched (evidence bins).
    pub frozen: Vec<bool>,
}

impl Partition {
    pub fn from_bins(bins: Vec<(f64, f64)>, lattice: bool) -> Result<Partition> {
        let n = bins.len();
        let p = Partition { bins, lattice, frozen: vec![false; n] };
        p.validate()?;
        Ok(p)
    }

    pub fn from_edges(edges: &[f64], lattice: bool) -> Result<Partition> {
        Partition::from_bins(edges.windows(2).map(|w| (w[0], w[1])).collect(), lattice)
    }

    /// `n` equal-width bins on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Partition> {
        if !(lo < hi) || n == 0 {
            return Err(Error::InvalidParameter(format!("empty support [{lo}, {hi}]")));
        }
        let w = (hi - lo) / n as f64;
        let bins = (0..n).map(|i| (lo + w * i as f64, if i + 1 == n { hi } else { lo + w * (i + 1) as f64 })).collect();
        Partition::from_bins(bins, false)
    }

    /// Unit bins centred on the integers `lo..=hi`.
    pub fn integers(lo: i64, hi: i64) -> Partition {
        let bins = (lo..=hi).map(|k| (k as f64 - 0.5, k as f64 + 0.5)).collect::<Vec<_>>();
        let n = bins.len();
        Partition { bins, lattice: true, frozen: vec![false; n] }
    }

    /// One degenerate bin per state.
    pub fn states(k: usize) -> Partition {
        Partition { bins: (0..k).map(|i| (i as f64, i as f64)).collect(), lattice: false, frozen: vec![false; k] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.is_empty() {
            return Err(Error::InvalidParameter("partition has no bins".into()));
        }
        if self.frozen.len() != self.bins.len() {
            return Err(Error::InvalidParameter("frozen flags misaligned".into()));
        }
        for (i, &(lo, hi)) in self.bins.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter(format!("bad bin [{lo}, {hi}]")));
            }
            if i > 0 {
                let prev = self.bins[i - 1];
                let contiguous = prev.1 == lo;
                // Discrete state bins are a strictly increasing point sequence.
                let points = prev.0 == prev.1 && lo == hi && prev.1 < lo;
                if !(contiguous || points) || (prev.0 == lo && prev.1 == hi) {
                    return Err(Error::InvalidParameter(format!("bins {} and {i} are not contiguous", i - 1)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.bins[0].0
    }

    pub fn hi(&self) -> f64 {
        self.bins[self.bins.len() - 1].1
    }

    pub fn mids(&self) -> Vec<f64> {
        self.bins.iter().map(|b| 0.5 * (b.0 + b.1)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.1 - b.0).collect()
    }

    /// Bin containing `x`; a zero-width bin at `x` wins over its neighbours,
    /// interior edges belong to the upper bin.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if let Some(i) = self.bins.iter().position(|b| b.0 == x && b.1 == x) {
            return Some(i);
        }
        let n = self.bins.len();
        if x < self.lo() || x > self.hi() {
            return None;
        }
        let i = self.bins.partition_point(|b| b.1 <= x);
        Some(i.min(n - 1))
    }

    /// Like `locate` but clamps out-of-range values to the boundary bins.
    pub fn locate_clamped(&self, x: f64) -> usize {
        if x < self.lo() {
            0
        } else if x > self.hi() {
            self.bins.len() - 1
        } else {
            self.locate(x).unwrap()
        }
    }

    /// Inserts a frozen bin `[lo, hi]`, cutting any bins it overlaps. Returns
    /// the new bin's index.
    pub fn insert_frozen(&mut self, lo: f64, hi: f64) -> usize {
        let mut bins = Vec::with_capacity(self.bins.len() + 2);
        let mut frozen = Vec::with_capacity(self.bins.len() + 2);
        let (lo, hi) = (lo.max(self.lo()).min(self.hi()), hi.min(self.hi()).max(self.lo()));
        let mut at = 0;
        let mut placed = false;
        for (&(a, b), &f) in self.bins.iter().zip(&self.frozen) {
            if b <= lo && !(a == b && a == lo && lo < hi) {
                bins.push((a, b));
                frozen.push(f);
                continue;
            }
            if a >= hi && !(a == b && a == hi && lo < hi) {
                if !placed {
                    at = bins.len();
                    bins.push((lo, hi));
                    frozen.push(true);
                    placed = true;
                }
                bins.push((a, b));
                frozen.push(f);
                continue;
            }
            if a < lo {
                bins.push((a, lo));
                frozen.push(false);
            }
            if !placed {
                at = bins.len();
                bins.push((lo, hi));
                frozen.push(true);
                placed = true;
            }
            if b > hi {
                bins.push((hi, b));
                frozen.push(false);
            }
        }
        if !placed {
            at = bins.len();
            bins.push((lo, hi));
            frozen.push(true);
        }
        self.bins = bins;
        self.frozen = frozen;
        at
    }

    /// Fraction of bin `j` of `self` covered by bin `i` of `other`, for
    /// mass-preserving rebinning. Zero-width bins map onto equal points.
    pub fn rebin_matrix(&self, other: &Partition) -> Vec<Vec<(usize, f64)>> {
        self.bins
            .iter()
            .map(|&(a, b)| {
                if a == b {
                    return vec![(other.locate_clamped(a), 1.0)];
                }
                let mut out = Vec::new();
                for (i, &(c, d)) in other.bins.iter().enumerate() {
                    let ov = b.min(d) - a.max(c);
                    if ov > 0.0 {
                        out.push((i, ov / (b - a)));
                    }
                }
                if out.is_empty() {
                    out.push((other.locate_clamped(0.5 * (a + b)), 1.0));
                }
                out
            })
            .collect()
    }

    /// Index map from `self` bins to the `other` bin containing each midpoint.
    pub fn midpoint_map(&self, other: &Partition) -> Vec<usize> {
        self.mids().into_iter().map(|m| other.locate_clamped(m)).collect()
    }
}

/// Piecewise-constant density: a partition with per-bin masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedDensity {
    pub partition: Partition,
    pub mass: Vec<f64>,
}

impl DiscretizedDensity {
    pub fn new(partition: Partition, mass: Vec<f64>) -> Result<DiscretizedDensity> {
        if mass.len() != partition.len() {
            return Err(Error::InvalidParameter("mass vector does not match partition".into()));
        }
        Ok(DiscretizedDensity { partition, mass })
    }

    pub fn point(x: f64) -> DiscretizedDensity {
        DiscretizedDensity { partition: Partition { bins: vec![(x, x)], lattice: false, frozen: vec![false] }, mass: vec![1.0] }
    }

    /// Masses from CDF differences of `dist` over `partition`.
    pub fn from_resolved(dist: &Resolved, partition: Partition) -> DiscretizedDensity {
        let mass = bin_masses(dist, &partition);
        DiscretizedDensity { partition, mass }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn normalized(mut self) -> DiscretizedDensity {
        let s = self.total();
        if s > 0.0 {
            self.mass.iter_mut().for_each(|m| *m /= s);
        }
        self
    }

    pub fn mean(&self) -> f64 {
        self.partition.mids().iter().zip(&self.mass).map(|(x, m)| x * m).sum::<f64>() / self.total()
    }

    /// Variance of the piecewise-uniform density (lattice bins are treated as
    /// point masses at their midpoints).
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let t = self.total();
        self.partition
            .bins
            .iter()
            .zip(&self.mass)
            .map(|(&(a, b), m)| {
                let mid = 0.5 * (a + b);
                let w = if self.partition.lattice { 0.0 } else { b - a };
                m * ((mid - mu) * (mid - mu) + w * w / 12.0)
            })
            .sum::<f64>()
            / t
    }

    pub fn sd(&self) -> f64 {
        math::sqrt(self.variance().max(0.0))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = self.total();
        let mut acc = 0.0;
        for (&(a, b), m) in self.partition.bins.iter().zip(&self.mass) {
            if x >= b {
                acc += m;
            } else if x > a {
                acc += m * (x - a) / (b - a);
            }
        }
        acc / t
    }

    /// Percentile by linear interpolation inside the containing bin.
    pub fn quantile(&self, p: f64) -> f64 {
        let t = self.total();
        let target = p.clamp(0.0, 1.0) * t;
        let mut acc = 0.0;
        for (&(a, b), &m) in self.partition.bins.iter().zip(&self.mass) {
            if m > 0.0 && acc + m >= target {
                return a + (b - a) * ((target - acc) / m).clamp(0.0, 1.0);
            }
            acc += m;
        }
        self.partition.hi()
    }

    /// Mass-preserving transfer onto another partition by overlap length.
    pub fn rebin(&self, target: &Partition) -> DiscretizedDensity {
        let mut mass = vec![0.0; target.len()];
        for (j, row) in self.partition.rebin_matrix(target).iter().enumerate() {
            for &(i, f) in row {
                mass[i] += self.mass[j] * f;
            }
        }
        DiscretizedDensity { partition: target.clone(), mass }
    }

    /// Density value (mass / width) per bin; zero-width bins report 0.
    pub fn densities(&self) -> Vec<f64> {
        self.partition.bins.iter().zip(&self.mass).map(|(&(a, b), m)| if b > a { m / (b - a) } else { 0.0 }).collect()
    }

    /// Relative entropy of `self` from `other` on a shared partition, in nats.
    pub fn kl(&self, other: &DiscretizedDensity) -> f64 {
        let (s, t) = (self.total(), other.total());
        self.mass
            .iter()
            .zip(&other.mass)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| {
                let (p, q) = (p / s, (q / t).max(1e-300));
                p * math::ln(p / q)
            })
            .sum()
    }
}

/// CDF differences of `dist` over each bin; lattice laws count integers in
/// `(lo, hi]` and point masses go to their containing bin.
pub fn bin_masses(dist: &Resolved, part: &Partition) -> Vec<f64> {
    if let Resolved::Point(x) = dist {
        let mut m = vec![0.0; part.len()];
        m[part.locate_clamped(*x)] = 1.0;
        return m;
    }
    let lattice = dist.is_integer();
    part.bins
        .iter()
        .map(|&(a, b)| {
            if a == b && !lattice {
                0.0
            } else if lattice && a == b {
                if a == math::floor(a) {
                    dist.pdf(a)
                } else {
                    0.0
                }
            } else {
                (dist.cdf(b) - dist.cdf(a)).max(0.0)
            }
        })
        .collect()
}

/// Truncation and refinement settings for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinePolicy {
    /// Fraction of bins (at least one) split per iteration.
    pub split_fraction: f64,
    /// Bins beyond this cap are removed by merging the cheapest neighbours.
    pub max_bins: usize,
    /// Adjacent bins whose combined mass is below this are merged.
    pub merge_mass: f64,
    /// Boundary bins above this mass trigger support extension.
    pub extend_mass: f64,
    /// Bins narrower than this are not split.
    pub min_width: f64,
    /// Scores at or below this are treated as zero.
    pub error_floor: f64,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        RefinePolicy { split_fraction: 0.1, max_bins: 60, merge_mass: 1e-6, extend_mass: 1e-3, min_width: 1e-9, error_floor: 1e-12 }
    }
}

/// Lower tail probability used for truncating unbounded supports.
pub const TRUNCATION_EPS: f64 = 1e-5;

/// Truncated support `[q_ε, q_{1−ε}]`, snapped to half-integers for lattice laws.
pub fn truncated_support(dist: &Resolved, eps: f64) -> (f64, f64) {
    if let Resolved::Point(x) = dist {
        return (*x, *x);
    }
    let (slo, shi) = dist.support();
    let mut lo = if slo.is_finite() { slo } else { dist.quantile(eps) };
    let mut hi = if shi.is_finite() { shi } else { dist.quantile(1.0 - eps) };
    if let Resolved::Mixture(parts) = dist {
        for (_, r) in parts {
            let (a, b) = truncated_support(r, eps);
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if dist.is_integer() {
        lo = math::floor(lo) - 0.5;
        hi = math::floor(hi) + 0.5;
    }
    (lo, hi)
}

/// Coarse starting partition (`n` bins) over the truncated support.
pub fn init_partition(dist: &Resolved, n: usize, eps: f64) -> Result<Partition> {
    let (lo, hi) = truncated_support(dist, eps);
    init_partition_on(lo, hi, n, dist.is_integer())
}

/// Coarse partition of `[lo, hi]`; lattice partitions cut at half-integers.
pub fn init_partition_on(lo: f64, hi: f64, n: usize, lattice: bool) -> Result<Partition> {
    if lo == hi {
        return Ok(Partition { bins: vec![(lo, hi)], lattice, frozen: vec![false] });
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty support [{lo}, {hi}]")));
    }
    if !lattice {
        return Partition::uniform(lo, hi, n);
    }
    let count = math::round(hi - lo) as usize;
    let n = n.min(count).max(1);
    let mut edges = vec![lo];
    for i in 1..n {
        edges.push(lo + math::round(count as f64 * i as f64 / n as f64));
    }
    edges.push(hi);
    edges.dedup();
    Partition::from_edges(&edges, true)
}

/// Per-bin error score `|w| (f_max − f_min) |ln((f_max + δ)/(f_min + δ))|`
/// with endpoint densities estimated by averaging neighbouring bins. Zero iff
/// the density is flat across the bin and its neighbours.
pub fn kl_error(d: &DiscretizedDensity) -> Vec<f64> {
    const DELTA: f64 = 1e-300;
    let f = d.densities();
    let n = f.len();
    let bins = &d.partition.bins;
    (0..n)
        .map(|i| {
            let (a, b) = bins[i];
            if b <= a {
                return 0.0;
            }
            let left = if i > 0 && bins[i - 1].1 > bins[i - 1].0 { 0.5 * (f[i - 1] + f[i]) } else { f[i] };
            let right = if i + 1 < n && bins[i + 1].1 > bins[i + 1].0 { 0.5 * (f[i + 1] + f[i]) } else { f[i] };
            let fmin = left.min(right).min(f[i]);
            let fmax = left.max(right).max(f[i]);
            (b - a) * (fmax - fmin) * math::ln((fmax + DELTA) / (fmin + DELTA)).abs()
        })
        .collect()
}

fn splittable(p: &Partition, i: usize, policy: &RefinePolicy) -> bool {
    let (a, b) = p.bins[i];
    if p.frozen[i] || b - a <= policy.min_width {
        return false;
    }
    if p.lattice {
        b - a >= 2.0
    } else {
        true
    }
}

fn split_point(p: &Partition, i: usize) -> f64 {
    let (a, b) = p.bins[i];
    if p.lattice {
        math::floor(0.5 * (a + b) - 0.5) + 0.5
    } else {
        0.5 * (a + b)
    }
}

/// Splits the highest-error bins at their midpoints, merges negligible
/// neighbours, extends heavy boundaries within `bounds`, and enforces the bin
/// cap. Never shrinks the covered support.
pub fn refine(d: &DiscretizedDensity, errors: &[f64], policy: &RefinePolicy, bounds: (f64, f64)) -> Partition {
    let p = &d.partition;
    let n = p.len();
    let mass_total: f64 = d.mass.iter().sum::<f64>().max(1e-300);
    // Negligible bins would be merged straight back, so they are never split.
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| errors[i] > policy.error_floor && d.mass[i] / mass_total >= policy.merge_mass && splittable(p, i, policy))
        .collect();
    order.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    let k = (math::ceil(policy.split_fraction * n as f64) as usize).max(1);
    order.truncate(k);
    let mut split = vec![false; n];
    for &i in &order {
        split[i] = true;
    }

    // (lo, hi, mass, error, frozen); `twin[i]` tags halves of one split.
    let mut twin: Vec<usize> = Vec::with_capacity(n + order.len() + 2);
    let mut cells: Vec<(f64, f64, f64, f64, bool)> = Vec::with_capacity(n + order.len() + 2);
    for i in 0..n {
        let (a, b) = p.bins[i];
        if split[i] {
            let m = split_point(p, i);
            cells.push((a, m, 0.5 * d.mass[i], 0.5 * errors[i], false));
            cells.push((m, b, 0.5 * d.mass[i], 0.5 * errors[i], false));
            twin.extend([i + 1, i + 1]);
        } else {
            cells.push((a, b, d.mass[i], errors[i], p.frozen[i]));
            twin.push(0);
        }
    }

    let total: f64 = d.mass.iter().sum::<f64>().max(1e-300);
    let extendable = |c: &(f64, f64, f64, f64, bool)| !c.4 && c.1 > c.0;
    if let Some(first) = cells.first().copied() {
        if extendable(&first) && first.2 / total > policy.extend_mass && first.0 > bounds.0 {
            let w = first.1 - first.0;
            let lo = (first.0 - w).max(bounds.0);
            let lo = if p.lattice { math::floor(lo - 0.5) + 0.5 } else { lo };
            if lo < first.0 {
                cells.insert(0, (lo, first.0, 0.0, 0.0, false));
                twin.insert(0, 0);
            }
        }
    }
    if let Some(last) = cells.last().copied() {
        if extendable(&last) && last.2 / total > policy.extend_mass && last.1 < bounds.1 {
            let w = last.1 - last.0;
            let hi = (last.1 + w).min(bounds.1);
            let hi = if p.lattice { math::floor(hi - 0.5) + 0.5 } else { hi };
            if hi > last.1 {
                cells.push((last.1, hi, 0.0, 0.0, false));
                twin.push(0);
            }
        }
    }

    let mergeable = |a: &(f64, f64, f64, f64, bool), b: &(f64, f64, f64, f64, bool)| {
        !a.4 && !b.4 && a.1 > a.0 && b.1 > b.0
    };
    let mut i = 0;
    while i + 1 < cells.len() {
        let (a, b) = (cells[i], cells[i + 1]);
        // Halves of a split made this round are not merged back together.
        let rejoin = twin[i] != 0 && twin[i] == twin[i + 1];
        if mergeable(&a, &b) && !rejoin && (a.2 + b.2) / total < policy.merge_mass && !(a.2 == 0.0 && b.2 == 0.0 && (i == 0 || i + 2 == cells.len())) {
            cells[i] = (a.0, b.1, a.2 + b.2, a.3 + b.3, false);
            cells.remove(i + 1);
            twin[i] = 0;
            twin.remove(i + 1);
        } else {
            i += 1;
        }
    }
    while cells.len() > policy.max_bins.max(1) {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cells.len() - 1 {
            if mergeable(&cells[j], &cells[j + 1]) {
                let cost = cells[j].3 + cells[j + 1].3;
                if best.map_or(true, |(_, c)| cost < c) {
                    best = Some((j, cost));
                }
            }
        }
        let Some((j, _)) = best else { break };
        let (a, b) = (cells[j], cells[j + 1]);
        cells[j] = (a.0, b.1, a.2 + b.2, a.3 + b.3, false);
        cells.remove(j + 1);
    }
    Partition {
        bins: cells.iter().map(|c| (c.0, c.1)).collect(),
        lattice: p.lattice,
        frozen: cells.iter().map(|c| c.4).collect(),
    }
}

/// How a deterministic expression spreads mass over child bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpreadMode {
    /// Uniform over `[min, max]` of the expression at the parent-box corners.
    #[default]
    Uniform,
    /// Exact law of a two-term weighted sum of uniform parents (trapezoid);
    /// other expressions fall back to `Uniform`.
    Exact,
}

/// One variable of an NPT scope.
#[derive(Debug, Clone, Copy)]
pub struct VarDisc<'a> {
    pub var: usize,
    pub id: &'a str,
    pub part: &'a Partition,
    /// State labels for discrete variables.
    pub states: Option<&'a [String]>,
}

struct SliceEnv<'a> {
    ids: &'a [&'a str],
    reals: &'a [f64],
    states: &'a [Option<&'a str>],
}

impl Env for SliceEnv<'_> {
    fn real(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|x| *x == id).filter(|&i| self.states[i].is_none()).map(|i| self.reals[i])
    }
    fn state(&self, id: &str) -> Option<&str> {
        self.ids.iter().position(|x| *x == id).and_then(|i| self.states[i])
    }
}

fn descend<'e>(e: &'e Expr, env: &dyn Env) -> Result<&'e Expr> {
    match e {
        Expr::Partitioned { guard, cases } => {
            let s = env.state(guard).ok_or_else(|| Error::MissingAssignment(guard.clone()))?;
            let c = cases
                .iter()
                .find(|(l, _)| l == s)
                .map(|(_, c)| c)
                .ok_or_else(|| Error::InvalidParameter(format!("no case for {guard} = {s}")))?;
            descend(c, env)
        }
        other => Ok(other),
    }
}

/// Spreads unit mass uniformly over `[lo, hi]` onto `child`, clipping any
/// overflow to the boundary bins.
fn spread_uniform(child: &Partition, lo: f64, hi: f64, out: &mut [f64]) {
    if hi <= lo {
        out[child.locate_clamped(lo)] += 1.0;
        return;
    }
    let w = hi - lo;
    let n = child.len();
    if lo < child.lo() {
        out[0] += (child.lo().min(hi) - lo) / w;
    }
    if hi > child.hi() {
        out[n - 1] += (hi - child.hi().max(lo)) / w;
    }
    let start = child.bins.partition_point(|b| b.1 <= lo);
    for i in start..n {
        let (a, b) = child.bins[i];
        if a >= hi {
            break;
        }
        let ov = b.min(hi) - a.max(lo);
        if ov > 0.0 {
            out[i] += ov / w;
        }
    }
}

/// CDF of `U + V` for independent uniforms on `[p0, p1]` and `[q0, q1]`.
fn trapezoid_cdf(t: f64, p0: f64, p1: f64, q0: f64, q1: f64) -> f64 {
    let r = |x: f64| if x > 0.0 { 0.5 * x * x } else { 0.0 };
    let area = (p1 - p0) * (q1 - q0);
    ((r(t - p0 - q0) - r(t - p1 - q0) - r(t - p0 - q1) + r(t - p1 - q1)) / area).clamp(0.0, 1.0)
}

fn spread_trapezoid(child: &Partition, u: (f64, f64), v: (f64, f64), out: &mut [f64]) {
    if u.1 <= u.0 || v.1 <= v.0 {
        spread_uniform(child, u.0 + v.0, u.1 + v.1, out);
        return;
    }
    let (lo, hi) = (u.0 + v.0, u.1 + v.1);
    let n = child.len();
    let f = |t: f64| trapezoid_cdf(t, u.0, u.1, v.0, v.1);
    let mut prev = 0.0;
    // Bins ending at or below `lo` receive nothing.
    let start = child.bins.partition_point(|b| b.1 <= lo).min(n - 1);
    for i in start..n {
        let b = child.bins[i].1;
        let c = if i + 1 == n { 1.0 } else if b <= lo { 0.0 } else if b >= hi { 1.0 } else { f(b) };
        out[i] += c - prev;
        prev = c;
        if c >= 1.0 {
            break;
        }
    }
}

/// Spreads unit mass for `U + V` with `U`, `V` uniform on the given boxes onto
/// `child`, clipping overflow to the boundary bins.
pub fn spread_sum(child: &Partition, u: (f64, f64), v: (f64, f64), mode: SpreadMode, out: &mut [f64]) {
    match mode {
        SpreadMode::Uniform => spread_uniform(child, u.0 + v.0, u.1 + v.1, out),
        SpreadMode::Exact => spread_trapezoid(child, u, v, out),
    }
}

fn strides_of(card: &[usize]) -> Vec<usize> {
    let mut s = vec![1; card.len()];
    for i in (0..card.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * card[i + 1];
    }
    s
}

/// Builds `P(child | parents)` as a factor with scope `parents ++ [child]`
/// (child fastest). Deterministic expressions spread over the range spanned by
/// the parent-box corners; distributions use CDF differences with parameters
/// evaluated at parent-bin midpoints; partitioned expressions select a case
/// per guard state.
pub fn expr_npt(child: &VarDisc, parents: &[VarDisc], expr: &Expr, mode: SpreadMode) -> Result<Factor> {
    let ids: Vec<&str> = parents.iter().map(|p| p.id).collect();
    let card: Vec<usize> = parents.iter().map(|p| p.part.len()).collect();
    let rows: usize = card.iter().product();
    let m = child.part.len();
    let mut table = vec![0.0; rows * m];
    let mids: Vec<Vec<f64>> = parents.iter().map(|p| p.part.mids()).collect();
    let stride = strides_of(&card);
    let mut reals = vec![0.0; parents.len()];
    let mut states: Vec<Option<&str>> = vec![None; parents.len()];
    let mut corner = vec![0.0; parents.len()];
    for row in 0..rows {
        for k in 0..parents.len() {
            let idx = (row / stride[k]) % card[k];
            match parents[k].states {
                Some(s) => {
                    states[k] = Some(s[idx].as_str());
                    reals[k] = idx as f64;
                }
                None => {
                    states[k] = None;
                    reals[k] = mids[k][idx];
                }
            }
        }
        let env = SliceEnv { ids: &ids, reals: &reals, states: &states };
        let case = descend(expr, &env)?;
        let out = &mut table[row * m..(row + 1) * m];
        if case.is_deterministic() {
            let used: Vec<usize> = case.vars().iter().filter_map(|v| ids.iter().position(|x| x == v)).filter(|&k| parents[k].states.is_none()).collect();
            let boxes: Vec<(f64, f64)> = used
                .iter()
                .map(|&k| parents[k].part.bins[(row / stride[k]) % card[k]])
                .collect();
            let linear2 = if mode == SpreadMode::Exact && used.len() == 2 { case.linear_form() } else { None };
            if let Some((terms, bias)) = linear2 {
                let coef = |k: usize| terms.iter().filter(|t| t.1 == ids[k]).map(|t| t.0).sum::<f64>();
                let iv = |c: f64, (a, b): (f64, f64)| if c >= 0.0 { (c * a, c * b) } else { (c * b, c * a) };
                let u = iv(coef(used[0]), boxes[0]);
                let v = iv(coef(used[1]), boxes[1]);
                spread_trapezoid(child.part, (u.0 + bias, u.1 + bias), v, out);
            } else {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                corner.copy_from_slice(&reals);
                for mask in 0..(1usize << used.len()) {
                    for (j, &k) in used.iter().enumerate() {
                        corner[k] = if mask >> j & 1 == 1 { boxes[j].1 } else { boxes[j].0 };
                    }
                    let cenv = SliceEnv { ids: &ids, reals: &corner, states: &states };
                    let x = case.eval(&cenv)?;
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                spread_uniform(child.part, lo, hi, out);
            }
        } else {
            let dist = case.resolve(&env)?;
            let masses = bin_masses(&dist, child.part);
            out.copy_from_slice(&masses);
            let s: f64 = out.iter().sum();
            if s > 0.0 {
                out.iter_mut().for_each(|x| *x /= s);
            } else {
                // All mass fell outside the support: clip to the nearer end.
                let c = dist.mean();
                out[child.part.locate_clamped(c)] = 1.0;
            }
        }
    }
    let mut vars: Vec<usize> = parents.iter().map(|p| p.var).collect();
    vars.push(child.var);
    let mut fcard = card;
    fcard.push(m);
    Factor::new(vars, fcard, table)
}

/// NPT of a deterministic expression (see `expr_npt`).
pub fn deterministic_npt(child: &VarDisc, parents: &[VarDisc], expr: &Expr, mode: SpreadMode) -> Result<Factor> {
    if !expr.is_deterministic() {
        return Err(Error::InvalidParameter("expression is not deterministic".into()));
    }
    expr_npt(child, parents, expr, mode)
}

/// NPT of a distribution or mixture expression (see `expr_npt`).
pub fn statistical_npt(child: &VarDisc, parents: &[VarDisc], expr: &Expr) -> Result<Factor> {
    expr_npt(child, parents, expr, SpreadMode::Uniform)
}

/// Runs `iterations` rounds of refinement on a parentless distribution and
/// returns the final discretized density.
pub fn discretize_marginal(dist: &Resolved, iterations: usize, policy: &RefinePolicy) -> Result<DiscretizedDensity> {
    let mut part = init_partition(dist, 3, TRUNCATION_EPS)?;
    let bounds = dist.support();
    let mut d = DiscretizedDensity::from_resolved(dist, part.clone()).normalized();
    for _ in 0..iterations {
        let err = kl_error(&d);
        let next = refine(&d, &err, policy, bounds);
        if next == part {
            break;
        }
        part = next;
        d = DiscretizedDensity::from_resolved(dist, part.clone()).normalized();
    }
    Ok(d)
}

/// Discretizes a nonnegative frequency distribution and returns
/// `(support, weights)`, one weight per bin at the bin's midpoint integer.
/// Lattice laws split every erroneous bin per iteration, so they reach unit
/// resolution within a few iterations.
pub fn discretize_frequency(dist: &Resolved, iterations: usize) -> Result<(Vec<u64>, Vec<f64>)> {
    if let Resolved::Point(x) = dist {
        if *x < 0.0 || *x != math::floor(*x) {
            return Err(Error::InvalidParameter(format!("frequency point {x} is not a nonnegative integer")));
        }
        return Ok((vec![*x as u64], vec![1.0]));
    }
    let (lo, _) = dist.support();
    if lo < 0.0 {
        return Err(Error::InvalidParameter("frequency support must be nonnegative".into()));
    }
    let policy = if dist.is_integer() {
        RefinePolicy { split_fraction: 1.0, max_bins: 100_000, ..RefinePolicy::default() }
    } else {
        RefinePolicy::default()
    };
    let d = discretize_marginal(dist, iterations, &policy)?;
    let mut support: Vec<u64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (&(a, b), &m) in d.partition.bins.iter().zip(&d.mass) {
        let k = math::round(0.5 * (a + b)).max(0.0) as u64;
        if m <= 0.0 {
            continue;
        }
        match support.last() {
            Some(&last) if last == k => *weights.last_mut().unwrap() += m,
            _ => {
                support.push(k);
                weights.push(m);
            }
        }
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Ok((support, weights))
}

/// Human-readable bin label used in reports.
pub fn bin_label(b: (f64, f64)) -> String {
    if b.0 == b.1 {
        format!("{}", b.0)
    } else {
        format!("[{}, {})", b.0, b.1)
    }
}
