//! Compound totals `T = S_1 + … + S_N` on discretized densities.
//!
//! Severities are i.i.d. given a configuration of discrete causes, so every
//! intermediate sum is kept as one row per cause configuration. n-folds are
//! built by doubling, the frequency mixture is folded in pairwise through
//! Boolean selectors, and an observed total is pushed back onto the causes
//! and the frequency using the same discretization.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};

use crate::discretize::{
    bin_masses, discretize_frequency, init_partition_on, kl_error, refine, spread_sum, truncated_support, DiscretizedDensity,
    Partition, RefinePolicy, SpreadMode, TRUNCATION_EPS,
};
use crate::error::{Error, Result};
use crate::expr::{Expr, MapEnv, Resolved};
use crate::factor::Factor;
use crate::jt::enumerate_marginals;
use crate::math;
use crate::model::{topo_order, Cpd, Network, Node};

/// Joint configurations of the cause nodes a severity is partitioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct Causes {
    pub net: Option<Network>,
    /// Guard nodes; the last one varies fastest across configurations.
    pub guards: Vec<String>,
    pub card: Vec<usize>,
    pub prior: Vec<f64>,
}

/// Largest cause joint we are willing to tabulate.
const MAX_CAUSE_JOINT: usize = 1 << 20;

impl Causes {
    /// A single configuration with probability one.
    pub fn none() -> Causes {
        Causes { net: None, guards: Vec::new(), card: Vec::new(), prior: vec![1.0] }
    }

    pub fn new(net: Network, guards: &[String]) -> Result<Causes> {
        let (factors, card) = net.table_factors()?;
        let total = card.iter().try_fold(1usize, |a, &c| a.checked_mul(c)).unwrap_or(usize::MAX);
        if total > MAX_CAUSE_JOINT {
            return Err(Error::TooLarge(format!("cause joint has {total} states")));
        }
        let idx: Vec<usize> = guards.iter().map(|g| net.index(g).ok_or_else(|| Error::UnknownNode(g.clone()))).collect::<Result<_>>()?;
        let joint = cause_joint(&factors)?;
        let prior = joint.marginalize(&idx)?.normalize()?.table;
        Ok(Causes { guards: guards.to_vec(), card: idx.iter().map(|&i| card[i]).collect(), prior, net: Some(net) })
    }

    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    /// Guard states of configuration `k`.
    pub fn states(&self, k: usize) -> Vec<usize> {
        let mut out = vec![0; self.card.len()];
        let mut r = k;
        for i in (0..self.card.len()).rev() {
            out[i] = r % self.card[i];
            r /= self.card[i];
        }
        out
    }

    /// Configuration index of a guard-state vector.
    pub fn index_of(&self, states: &[usize]) -> usize {
        states.iter().zip(&self.card).fold(0, |acc, (s, c)| acc * c + s)
    }

    pub fn env(&self, k: usize) -> MapEnv {
        let mut env = MapEnv::new();
        if let Some(net) = &self.net {
            for (g, s) in self.guards.iter().zip(self.states(k)) {
                let label = &net.node(g).expect("guard validated at construction").states().unwrap()[s];
                env = env.with_state(g, label);
            }
        }
        env
    }

    /// Posterior marginal of every cause node given a likelihood per
    /// configuration.
    pub fn posterior(&self, like: &[f64]) -> Result<Vec<(String, Vec<f64>)>> {
        let Some(net) = &self.net else { return Ok(Vec::new()) };
        let (factors, _) = net.table_factors()?;
        let idx: Vec<usize> = self.guards.iter().map(|g| net.index(g).unwrap()).collect();
        let mut joint = cause_joint(&factors)?;
        joint.multiply_in(&Factor::new(idx, self.card.clone(), like.to_vec())?)?;
        let joint = joint.normalize()?;
        (0..net.len()).map(|i| Ok((net.nodes[i].id.clone(), joint.marginalize(&[i])?.table))).collect()
    }
}

fn cause_joint(factors: &[Factor]) -> Result<Factor> {
    let mut joint = Factor::unit();
    for f in factors {
        joint = joint.multiply(f)?;
    }
    Ok(joint)
}

/// `P(X | configuration)` on one shared partition; `rows[c]` sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CondDensity {
    pub partition: Partition,
    pub rows: Vec<Vec<f64>>,
}

impl CondDensity {
    /// Point mass at `x` under every configuration.
    pub fn point(x: f64, configs: usize) -> CondDensity {
        let d = DiscretizedDensity::point(x);
        CondDensity { partition: d.partition, rows: vec![d.mass; configs] }
    }

    pub fn unconditional(d: DiscretizedDensity) -> CondDensity {
        CondDensity { partition: d.partition, rows: vec![d.mass] }
    }

    pub fn configs(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, c: usize) -> DiscretizedDensity {
        DiscretizedDensity { partition: self.partition.clone(), mass: self.rows[c].clone() }
    }

    /// Prior-weighted mixture over configurations.
    pub fn marginal(&self, prior: &[f64]) -> DiscretizedDensity {
        let mut mass = vec![0.0; self.partition.len()];
        for (row, p) in self.rows.iter().zip(prior) {
            for (m, x) in mass.iter_mut().zip(row) {
                *m += p * x;
            }
        }
        DiscretizedDensity { partition: self.partition.clone(), mass }
    }

    /// Mass-preserving transfer of every row onto `target`.
    pub fn rebin(&self, target: &Partition) -> CondDensity {
        let map = self.partition.rebin_matrix(target);
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; target.len()];
                for (j, cells) in map.iter().enumerate() {
                    for &(i, f) in cells {
                        out[i] += row[j] * f;
                    }
                }
                out
            })
            .collect();
        CondDensity { partition: target.clone(), rows }
    }

    /// Prior-weighted per-bin error of the conditional rows.
    fn error(&self, prior: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; self.partition.len()];
        for (c, p) in prior.iter().enumerate() {
            if *p > 0.0 {
                for (a, b) in e.iter_mut().zip(kl_error(&self.row(c))) {
                    *a += p * b;
                }
            }
        }
        e
    }
}

/// Discretization budgets for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggSettings {
    /// Refinement rounds for the severity and for every intermediate sum.
    pub severity_iters: usize,
    pub frequency_iters: usize,
    pub initial_bins: usize,
    pub policy: RefinePolicy,
    pub spread: SpreadMode,
    /// Relative change of the total error treated as stationary.
    pub tolerance: f64,
    pub stable_rounds: usize,
}

impl Default for AggSettings {
    fn default() -> Self {
        AggSettings {
            severity_iters: 65,
            frequency_iters: 25,
            initial_bins: 3,
            policy: RefinePolicy::default(),
            spread: SpreadMode::Exact,
            tolerance: 1e-6,
            stable_rounds: 3,
        }
    }
}

/// Refines one shared partition until it stops changing, the total error
/// settles, or the budget runs out. `fill` computes the rows on a partition.
fn refine_loop(
    mut part: Partition,
    bounds: (f64, f64),
    prior: &[f64],
    s: &AggSettings,
    mut fill: impl FnMut(&Partition) -> Result<CondDensity>,
) -> Result<CondDensity> {
    let mut cur = fill(&part)?;
    let mut last_total = f64::INFINITY;
    let mut stable = 0;
    for _ in 0..s.severity_iters {
        let err = cur.error(prior);
        let total: f64 = err.iter().sum();
        if (last_total - total).abs() <= s.tolerance * total.max(1e-300) {
            stable += 1;
            if stable >= s.stable_rounds {
                break;
            }
        } else {
            stable = 0;
        }
        last_total = total;
        let next = refine(&cur.marginal(prior), &err, &s.policy, bounds);
        if next == part {
            break;
        }
        part = next;
        cur = fill(&part)?;
    }
    Ok(cur)
}

/// Resolved severity law per cause configuration.
fn severity_laws(sev: &Expr, causes: &Causes) -> Result<Vec<Resolved>> {
    (0..causes.len()).map(|k| sev.resolve(&causes.env(k))).collect()
}

fn discretize_laws(laws: &[Resolved], prior: &[f64], s: &AggSettings) -> Result<CondDensity> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut blo = f64::INFINITY;
    let mut bhi = f64::NEG_INFINITY;
    for r in laws {
        let (a, b) = truncated_support(r, TRUNCATION_EPS);
        let (c, d) = r.support();
        lo = lo.min(a);
        hi = hi.max(b);
        blo = blo.min(c);
        bhi = bhi.max(d);
    }
    let lattice = laws.iter().all(|r| r.is_integer());
    let part = init_partition_on(lo, hi, s.initial_bins, lattice)?;
    refine_loop(part, (blo, bhi), prior, s, |p| {
        let rows = laws
            .iter()
            .map(|r| {
                let mut m = bin_masses(r, p);
                let t: f64 = m.iter().sum();
                if t > 0.0 {
                    m.iter_mut().for_each(|x| *x /= t);
                } else {
                    m[p.locate_clamped(r.mean())] = 1.0;
                }
                m
            })
            .collect();
        Ok(CondDensity { partition: p.clone(), rows })
    })
}

/// Dynamically discretized `P(S | configuration)` on one shared partition.
pub fn discretize_severity(sev: &Expr, causes: &Causes, s: &AggSettings) -> Result<CondDensity> {
    discretize_laws(&severity_laws(sev, causes)?, &causes.prior, s)
}

/// `X + Y` for `X`, `Y` independent given the configuration, onto a fixed
/// `target`. Equivalent to eliminating `{X, Y}` from
/// `P(X | C) P(Y | C) P(Z | X, Y)` while keeping `{C, Z}`.
pub fn sum_onto(x: &CondDensity, y: &CondDensity, target: &Partition, mode: SpreadMode) -> Result<CondDensity> {
    if x.configs() != y.configs() {
        return Err(Error::InvalidParameter("summands disagree on cause configurations".into()));
    }
    let n = target.len();
    let mut rows = vec![vec![0.0; n]; x.configs()];
    let mut tmp = vec![0.0; n];
    for (i, &u) in x.partition.bins.iter().enumerate() {
        if x.rows.iter().all(|r| r[i] == 0.0) {
            continue;
        }
        for (j, &v) in y.partition.bins.iter().enumerate() {
            if y.rows.iter().zip(&x.rows).all(|(ry, rx)| ry[j] * rx[i] == 0.0) {
                continue;
            }
            spread_sum(target, u, v, mode, &mut tmp);
            let a = target.locate_clamped(u.0 + v.0);
            let b = target.locate_clamped(u.1 + v.1);
            for (row, (rx, ry)) in rows.iter_mut().zip(x.rows.iter().zip(&y.rows)) {
                let w = rx[i] * ry[j];
                if w != 0.0 {
                    for k in a..=b {
                        row[k] += w * tmp[k];
                    }
                }
            }
            tmp[a..=b].iter_mut().for_each(|t| *t = 0.0);
        }
    }
    Ok(CondDensity { partition: target.clone(), rows })
}

/// `X + Y` with the target partition found by dynamic discretization.
pub fn dd_sum(x: &CondDensity, y: &CondDensity, prior: &[f64], s: &AggSettings) -> Result<CondDensity> {
    let lo = x.partition.lo() + y.partition.lo();
    let hi = x.partition.hi() + y.partition.hi();
    let lattice = x.partition.lattice && y.partition.lattice;
    let part = init_partition_on(lo, hi, s.initial_bins, lattice)?;
    refine_loop(part, (lo, hi), prior, s, |p| sum_onto(x, y, p, s.spread))
}

/// n-folds memoized by `n`; `1` must be present.
fn nfold_with(
    folds: &mut BTreeMap<u64, CondDensity>,
    n: u64,
    sum: &mut dyn FnMut(&CondDensity, &CondDensity) -> Result<CondDensity>,
) -> Result<CondDensity> {
    if let Some(f) = folds.get(&n) {
        return Ok(f.clone());
    }
    let configs = folds[&1].configs();
    if n == 0 {
        return Ok(CondDensity::point(0.0, configs));
    }
    let p = 1u64 << (63 - n.leading_zeros());
    let r = if p == n {
        let half = nfold_with(folds, n / 2, sum)?;
        sum(&half, &half)?
    } else {
        let a = nfold_with(folds, p, sum)?;
        let b = nfold_with(folds, n - p, sum)?;
        sum(&a, &b)?
    };
    folds.insert(n, r.clone());
    Ok(r)
}

/// n-fold sum of i.i.d. (given the configuration) severities by doubling:
/// `T_{2p} = T_p + T_p`, `T_n = T_p + T_{n−p}` for the largest power `p < n`.
pub fn lba_nfold(sev: &CondDensity, n: u64, prior: &[f64], s: &AggSettings) -> Result<CondDensity> {
    let mut folds = BTreeMap::new();
    folds.insert(1, sev.clone());
    nfold_with(&mut folds, n, &mut |a, b| dd_sum(a, b, prior, s))
}

/// Doubling n-fold with every sum placed on the fixed `target`.
pub fn lba_nfold_fixed(sev: &CondDensity, n: u64, target: &Partition, mode: SpreadMode) -> Result<CondDensity> {
    let mut folds = BTreeMap::new();
    folds.insert(1, sev.clone());
    nfold_with(&mut folds, n, &mut |a, b| sum_onto(a, b, target, mode))
}

/// Left-to-right n-fold, `T_k = T_{k−1} + S`, on the fixed `target`.
pub fn sequential_nfold_fixed(sev: &CondDensity, n: u64, target: &Partition, mode: SpreadMode) -> Result<CondDensity> {
    if n == 0 {
        return Ok(CondDensity::point(0.0, sev.configs()));
    }
    let mut t = sev.clone();
    for _ in 1..n {
        t = sum_onto(&t, sev, target, mode)?;
    }
    Ok(t)
}

/// Selector priors `P(E_{j−1} = True) = (a_0 + … + a_{j−1}) / (a_0 + … + a_j)`;
/// a zero running sum selects the lower branch.
pub fn selector_priors(weights: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(weights.len().saturating_sub(1));
    let mut acc = weights.first().copied().unwrap_or(0.0);
    for w in &weights[1.min(weights.len())..] {
        let next = acc + w;
        out.push(if next > 0.0 { acc / next } else { 1.0 });
        acc = next;
    }
    out
}

/// Folds components into the compound pairwise:
/// `F_0 = e_0 T_0 + (1 − e_0) T_1`, `F_j = e_j F_{j−1} + (1 − e_j) T_{j+1}`.
/// Returns the last `F` and the selector priors.
pub fn cdf_compound(weights: &[f64], components: &[CondDensity]) -> Result<(CondDensity, Vec<f64>)> {
    if weights.is_empty() || weights.len() != components.len() {
        return Err(Error::InvalidParameter("one weight per component required".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidParameter(format!("weights must be nonnegative and sum to one (sum {total})")));
    }
    if components.iter().any(|c| c.partition != components[0].partition || c.configs() != components[0].configs()) {
        return Err(Error::InvalidParameter("components must share a partition".into()));
    }
    let e = selector_priors(weights);
    let mut f = components[0].clone();
    for (j, ej) in e.iter().enumerate() {
        let t = &components[j + 1];
        for (fr, tr) in f.rows.iter_mut().zip(&t.rows) {
            for (a, b) in fr.iter_mut().zip(tr) {
                *a = ej * *a + (1.0 - ej) * b;
            }
        }
    }
    Ok((f, e))
}

/// Partition cut at every edge of every input; point bins are kept.
pub fn union_partition(parts: &[&Partition]) -> Result<Partition> {
    let mut edges: Vec<f64> = Vec::new();
    let mut points: Vec<f64> = Vec::new();
    for p in parts {
        for &(a, b) in &p.bins {
            if a == b {
                points.push(a);
            } else {
                edges.push(a);
                edges.push(b);
            }
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = edges.iter().chain(&points).fold(1.0f64, |m, x| m.max(x.abs()));
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * scale);
    let mut part = if edges.len() >= 2 {
        Partition::from_edges(&edges, parts.iter().all(|p| p.lattice))?
    } else {
        let x = points.first().copied().or(edges.first().copied()).ok_or_else(|| Error::InvalidParameter("no bins".into()))?;
        points.retain(|p| *p != x);
        Partition { bins: vec![(x, x)], lattice: false, frozen: vec![false] }
    };
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    for x in points {
        if !part.bins.iter().any(|b| b.0 == x && b.1 == x) {
            part.insert_frozen(x, x);
        }
    }
    part.frozen.iter_mut().for_each(|f| *f = false);
    part.validate()?;
    Ok(part)
}

/// Frequency law or explicit table over nonnegative counts.
#[derive(Debug, Clone, PartialEq)]
pub enum Frequency {
    Law(Expr),
    Table { support: Vec<u64>, weights: Vec<f64> },
}

impl Frequency {
    /// Support and weights; laws are dynamically discretized.
    pub fn discretize(&self, iterations: usize) -> Result<(Vec<u64>, Vec<f64>)> {
        match self {
            Frequency::Law(e) => {
                if !e.vars().is_empty() {
                    return Err(Error::InvalidModel("frequency must not depend on other nodes".into()));
                }
                discretize_frequency(&e.resolve(&MapEnv::new())?, iterations)
            }
            Frequency::Table { support, weights } => {
                if support.len() != weights.len() || support.is_empty() {
                    return Err(Error::InvalidParameter("frequency table needs one weight per count".into()));
                }
                if support.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidParameter("frequency support must be strictly increasing".into()));
                }
                let t: f64 = weights.iter().sum();
                if !(t > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidParameter("frequency weights must be nonnegative with positive sum".into()));
                }
                Ok((support.clone(), weights.iter().map(|w| w / t).collect()))
            }
        }
    }

    fn sampler(&self) -> Result<FrequencySampler> {
        match self {
            Frequency::Law(e) => Ok(FrequencySampler::Law(e.resolve(&MapEnv::new())?)),
            Frequency::Table { .. } => {
                let (support, weights) = self.discretize(0)?;
                Ok(FrequencySampler::Table(support, weights))
            }
        }
    }
}

enum FrequencySampler {
    Law(Resolved),
    Table(Vec<u64>, Vec<f64>),
}

/// Frequency, severity template and the causes it is partitioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundSpec {
    pub frequency: Frequency,
    /// May be partitioned on discrete nodes of `causes`.
    pub severity: Expr,
    pub causes: Option<Network>,
}

impl CompoundSpec {
    pub fn causes(&self) -> Result<Causes> {
        let guards = self.severity.guards();
        match &self.causes {
            None if guards.is_empty() => Ok(Causes::none()),
            None => Err(Error::UnknownNode(guards[0].clone())),
            Some(net) => Causes::new(net.clone(), &guards),
        }
    }
}

/// Mean, standard deviation and percentiles of a discretized total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Summary {
    pub fn of(d: &DiscretizedDensity) -> Summary {
        Summary { mean: d.mean(), sd: d.sd(), median: d.quantile(0.5), p95: d.quantile(0.95), p99: d.quantile(0.99) }
    }
}

/// Everything deconvolution reuses from a convolution run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionCache {
    pub causes: Causes,
    /// Counts `n_j` and their weights `a_j`.
    pub support: Vec<u64>,
    pub weights: Vec<f64>,
    /// `P(T_{n_j} | configuration)` on the partitions the convolution produced.
    pub components: Vec<CondDensity>,
    /// Shared partition of the compound and of every `F_j`.
    pub partition: Partition,
    pub selectors: Vec<f64>,
}

impl ConvolutionCache {
    /// Components transferred onto the shared partition.
    pub fn rebinned(&self) -> Vec<CondDensity> {
        self.components.iter().map(|c| c.rebin(&self.partition)).collect()
    }
}

/// Compound marginal and its per-configuration rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Compound {
    pub density: DiscretizedDensity,
    pub conditional: CondDensity,
    pub summary: Summary,
}

/// Discretizes the severity and frequency, builds every needed n-fold by
/// doubling, and mixes them on the union partition.
pub fn bfe_convolve(spec: &CompoundSpec, s: &AggSettings) -> Result<(Compound, ConvolutionCache)> {
    let causes = spec.causes()?;
    let (support, weights) = spec.frequency.discretize(s.frequency_iters)?;
    let sev = discretize_severity(&spec.severity, &causes, s)?;
    let mut folds = BTreeMap::new();
    folds.insert(1, sev);
    let prior = causes.prior.clone();
    let components: Vec<CondDensity> = support
        .iter()
        .map(|&n| nfold_with(&mut folds, n, &mut |a, b| dd_sum(a, b, &prior, s)))
        .collect::<Result<_>>()?;
    let partition = union_partition(&components.iter().map(|c| &c.partition).collect::<Vec<_>>())?;
    let cache = ConvolutionCache { causes, support, weights, components, partition, selectors: Vec::new() };
    let (conditional, selectors) = cdf_compound(&cache.weights, &cache.rebinned())?;
    let density = conditional.marginal(&cache.causes.prior);
    let summary = Summary::of(&density);
    Ok((Compound { density, conditional, summary }, ConvolutionCache { selectors, ..cache }))
}

/// Posterior marginals after observing the total.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// Every cause node with its posterior marginal.
    pub causes: Vec<(String, Vec<f64>)>,
    /// Posterior over the cached frequency support.
    pub frequency: Vec<f64>,
    /// Index of the observed bin in the cached partition.
    pub bin: usize,
}

/// Backward inference on the reduced model `{causes, T}`:
/// `P(c, N = n_j | T ∈ bin) ∝ P(c) a_j P(T_{n_j} ∈ bin | c)`.
pub fn bfe_deconvolve(cache: &ConvolutionCache, t0: f64) -> Result<Posterior> {
    let bin = cache.partition.locate(t0).ok_or_else(|| Error::InvalidParameter(format!("{t0} lies outside the compound support")))?;
    let comps = cache.rebinned();
    let k = cache.causes.len();
    let mut like = vec![0.0; k];
    let mut freq = vec![0.0; comps.len()];
    for (j, (t, a)) in comps.iter().zip(&cache.weights).enumerate() {
        for c in 0..k {
            let p = a * t.rows[c][bin];
            like[c] += p;
            freq[j] += cache.causes.prior[c] * p;
        }
    }
    let z: f64 = freq.iter().sum();
    if !(z > 0.0) {
        return Err(Error::InconsistentEvidence);
    }
    freq.iter_mut().for_each(|f| *f /= z);
    Ok(Posterior { causes: cache.causes.posterior(&like)?, frequency: freq, bin })
}

fn count_label(support: &[u64], hi: usize) -> String {
    if hi == 0 {
        support[0].to_string()
    } else {
        format!("{}..{}", support[0], support[hi])
    }
}

/// Selector nodes `E_j` and the deterministic chain whose last node `N0`
/// recovers the frequency: scanning selectors from the top, the first
/// `E_j = False` fixes `N = n_{j+1}`, and all-True gives `n_0`.
pub fn reconstruct_frequency(support: &[u64], selectors: &[f64]) -> Result<Network> {
    let l = support.len();
    if l == 0 || selectors.len() + 1 != l {
        return Err(Error::InvalidParameter("need one selector fewer than counts".into()));
    }
    if selectors.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::InvalidParameter("selector priors must be probabilities".into()));
    }
    let label = |k: u64| k.to_string();
    let mut nodes = Vec::new();
    if l == 1 {
        nodes.push(Node::discrete("N0", &[&label(support[0])], &[], vec![1.0]));
        return Network::new(nodes);
    }
    for (j, e) in selectors.iter().enumerate() {
        let t = count_label(support, j);
        let f = label(support[j + 1]);
        nodes.push(Node::discrete(&format!("E{j}"), &[&t, &f], &[], vec![*e, 1.0 - *e]));
    }
    if l == 2 {
        nodes.push(Node::discrete("N0", &[&label(support[0]), &label(support[1])], &["E0"], vec![1.0, 0.0, 0.0, 1.0]));
        return Network::new(nodes);
    }
    // Chain node N_k: state 0 is "n_0..n_k still open", state i ≥ 1 is n_{k+i}.
    let states_of = |k: usize| -> Vec<String> {
        let mut s = vec![count_label(support, k)];
        s.extend(support[k + 1..].iter().map(|n| label(*n)));
        s
    };
    let top = l - 3;
    let st = states_of(top);
    let m = st.len();
    let mut table = Vec::with_capacity(4 * m);
    // Parents (E_{l−2}, E_{l−3}), True first.
    for (hi, lo) in [(true, true), (true, false), (false, true), (false, false)] {
        let mut row = vec![0.0; m];
        let pick = if !hi { m - 1 } else if !lo { m - 2 } else { 0 };
        row[pick] = 1.0;
        table.extend(row);
    }
    let refs: Vec<&str> = st.iter().map(|s| s.as_str()).collect();
    nodes.push(Node::discrete(&format!("N{top}"), &refs, &[&format!("E{}", l - 2), &format!("E{top}")], table));
    for k in (0..top).rev() {
        let st = states_of(k);
        let m = st.len();
        let mut table = Vec::with_capacity(2 * (m - 1) * m);
        for prev in 0..m - 1 {
            for e_true in [true, false] {
                let mut row = vec![0.0; m];
                let pick = if prev > 0 { prev + 1 } else if e_true { 0 } else { 1 };
                row[pick] = 1.0;
                table.extend(row);
            }
        }
        let refs: Vec<&str> = st.iter().map(|s| s.as_str()).collect();
        nodes.push(Node::discrete(&format!("N{k}"), &refs, &[&format!("N{}", k + 1), &format!("E{k}")], table));
    }
    Network::new(nodes)
}

/// The discretized full model: causes, every `T_j`, selectors, the `F`
/// chain, and the reconstructed frequency.
#[derive(Debug, Clone)]
pub struct FullModel {
    pub factors: Vec<Factor>,
    pub card: Vec<usize>,
    pub names: Vec<String>,
    /// Variable carrying the compound total.
    pub total: usize,
    /// Reconstructed frequency node.
    pub frequency: usize,
    /// Cause nodes in network order.
    pub causes: Vec<usize>,
}

/// Largest shared partition accepted by `full_model`.
const MAX_FULL_BINS: usize = 16;

pub fn full_model(cache: &ConvolutionCache) -> Result<FullModel> {
    let b = cache.partition.len();
    if b > MAX_FULL_BINS {
        return Err(Error::TooLarge(format!("{b} bins in the shared partition")));
    }
    let mut factors = Vec::new();
    let mut card = Vec::new();
    let mut names = Vec::new();
    let mut guard_vars = Vec::new();
    let mut causes = Vec::new();
    if let Some(net) = &cache.causes.net {
        let (f, c) = net.table_factors()?;
        factors.extend(f);
        card.extend(c);
        names.extend(net.ids());
        causes = (0..net.len()).collect();
        guard_vars = cache.causes.guards.iter().map(|g| net.index(g).unwrap()).collect();
    }
    // T_j given the guards.
    let t0 = card.len();
    for (j, comp) in cache.rebinned().iter().enumerate() {
        let v = card.len();
        card.push(b);
        names.push(format!("T{}", cache.support[j]));
        let mut vars = guard_vars.clone();
        vars.push(v);
        let mut fc: Vec<usize> = cache.causes.card.clone();
        fc.push(b);
        factors.push(Factor::new(vars, fc, comp.rows.concat())?);
    }
    // Selectors and the frequency chain.
    let freq = reconstruct_frequency(&cache.support, &cache.selectors)?;
    let (ff, fcard) = freq.table_factors()?;
    let off = card.len();
    for mut f in ff {
        f.vars.iter_mut().for_each(|v| *v += off);
        factors.push(f);
    }
    card.extend(fcard);
    names.extend(freq.ids());
    let frequency = off + freq.index("N0").unwrap();
    // F_j = E_j ? F_{j−1} : T_{j+1}, with F_{−1} = T_0.
    let mut prev = t0;
    for j in 0..cache.selectors.len() {
        let v = card.len();
        card.push(b);
        names.push(format!("F{j}"));
        let e = off + freq.index(&format!("E{j}")).unwrap();
        let mut table = vec![0.0; 2 * b * b * b];
        for es in 0..2 {
            for p in 0..b {
                for t in 0..b {
                    let pick = if es == 0 { p } else { t };
                    table[((es * b + p) * b + t) * b + pick] = 1.0;
                }
            }
        }
        factors.push(Factor::new(vec![e, prev, t0 + j + 1, v], vec![2, b, b, b], table)?);
        prev = v;
    }
    Ok(FullModel { factors, card, names, total: prev, frequency, causes })
}

/// Posterior by brute-force enumeration of the full discretized model.
pub fn deconvolve_by_enumeration(cache: &ConvolutionCache, t0: f64) -> Result<Posterior> {
    let bin = cache.partition.locate(t0).ok_or_else(|| Error::InvalidParameter(format!("{t0} lies outside the compound support")))?;
    let m = full_model(cache)?;
    let marg = enumerate_marginals(&m.factors, &m.card, &[(m.total, bin)])?;
    let z: f64 = marg[m.frequency].iter().sum();
    if !(z > 0.0) {
        return Err(Error::InconsistentEvidence);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x / z).collect::<Vec<_>>();
    Ok(Posterior {
        causes: m.causes.iter().map(|&v| (m.names[v].clone(), norm(&marg[v]))).collect(),
        frequency: norm(&marg[m.frequency]),
        bin,
    })
}

/// Marginalizes a discrete fragment onto `query` after eliminating `elim`
/// one variable at a time; remaining variables are summed out at the end.
pub fn ve_fragment(factors: &[Factor], elim: &[usize], query: &[usize]) -> Result<Factor> {
    if let Some(v) = elim.iter().find(|v| query.contains(v)) {
        return Err(Error::InvalidParameter(format!("variable {v} is both eliminated and queried")));
    }
    let mut pool: Vec<Factor> = factors.to_vec();
    for &v in elim {
        let (with, without): (Vec<Factor>, Vec<Factor>) = pool.into_iter().partition(|f| f.vars.contains(&v));
        pool = without;
        if with.is_empty() {
            continue;
        }
        let mut prod = Factor::unit();
        for f in &with {
            prod = prod.multiply(f)?;
        }
        pool.push(prod.sum_out(v)?);
    }
    let mut prod = Factor::unit();
    for f in &pool {
        prod = prod.multiply(f)?;
    }
    prod.marginalize(query)
}

/// Sorted Monte Carlo totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    pub values: Vec<f64>,
}

impl Empirical {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        math::sqrt(self.values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0))
    }

    /// Linear interpolation between order statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = math::floor(h) as usize;
        let f = h - i as f64;
        if i + 1 < n {
            self.values[i] + f * (self.values[i + 1] - self.values[i])
        } else {
            self.values[n - 1]
        }
    }

    pub fn summary(&self) -> Summary {
        Summary { mean: self.mean(), sd: self.sd(), median: self.quantile(0.5), p95: self.quantile(0.95), p99: self.quantile(0.99) }
    }

    /// Fraction of samples per bin of `grid` (out-of-range samples clamp).
    pub fn masses(&self, grid: &Partition) -> Vec<f64> {
        let mut m = vec![0.0; grid.len()];
        for &x in &self.values {
            m[grid.locate_clamped(x)] += 1.0;
        }
        let n = self.values.len() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }
}

/// Ancestral sample of a discrete network, one state per node.
fn sample_network<R: Rng>(net: &Network, order: &[usize], rng: &mut R) -> Vec<usize> {
    let mut st = vec![0; net.len()];
    for &i in order {
        let node = &net.nodes[i];
        let Cpd::Table(t) = &node.cpd else { unreachable!("cause networks are tabular") };
        let m = node.states().unwrap().len();
        let row = node.parents.iter().fold(0, |acc, p| {
            let pi = net.index(p).unwrap();
            acc * net.nodes[pi].states().unwrap().len() + st[pi]
        });
        let u: f64 = rng.gen();
        let probs = &t[row * m..(row + 1) * m];
        let mut acc = 0.0;
        st[i] = m - 1;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                st[i] = k;
                break;
            }
        }
    }
    st
}

/// Draws a cause configuration, a count, and that many severities, and sums
/// them; deterministic for a given seed.
pub fn mc_oracle(spec: &CompoundSpec, samples: usize, seed: u64) -> Result<Empirical> {
    let causes = spec.causes()?;
    let laws = severity_laws(&spec.severity, &causes)?;
    let freq = spec.frequency.sampler()?;
    let (order, guard_idx) = match &causes.net {
        Some(net) => {
            net.table_factors()?;
            let order = topo_order(net)?.iter().map(|id| net.index(id).unwrap()).collect::<Vec<_>>();
            (order, causes.guards.iter().map(|g| net.index(g).unwrap()).collect::<Vec<_>>())
        }
        None => (Vec::new(), Vec::new()),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let k = match &causes.net {
            Some(net) => {
                let st = sample_network(net, &order, &mut rng);
                causes.index_of(&guard_idx.iter().map(|&i| st[i]).collect::<Vec<_>>())
            }
            None => 0,
        };
        let n = match &freq {
            FrequencySampler::Law(r) => r.sample(&mut rng).max(0.0) as u64,
            FrequencySampler::Table(s, w) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = s[s.len() - 1];
                for (n, p) in s.iter().zip(w) {
                    acc += p;
                    if u < acc {
                        pick = *n;
                        break;
                    }
                }
                pick
            }
        };
        let mut total = 0.0;
        for _ in 0..n {
            total += laws[k].sample(&mut rng);
        }
        values.push(total);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Empirical { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::jt::jt_marginals;

    fn unit_sev() -> CondDensity {
        // Masses on integers 0..3.
        CondDensity { partition: Partition::integers(0, 3), rows: vec![vec![0.1, 0.4, 0.3, 0.2], vec![0.5, 0.0, 0.25, 0.25]] }
    }

    #[test]
    fn doubling_matches_sequential_on_unit_bins() {
        let target = Partition::integers(-20, 70);
        for mode in [SpreadMode::Uniform, SpreadMode::Exact] {
            for n in 2..=16 {
                let a = lba_nfold_fixed(&unit_sev(), n, &target, mode).unwrap();
                let b = sequential_nfold_fixed(&unit_sev(), n, &target, mode).unwrap();
                for (ra, rb) in a.rows.iter().zip(&b.rows) {
                    assert!(ra.iter().zip(rb).all(|(x, y)| (x - y).abs() < 1e-9), "n = {n}");
                }
            }
        }
    }

    #[test]
    fn nfold_edge_cases() {
        let s = AggSettings::default();
        let one = lba_nfold(&unit_sev(), 1, &[0.5, 0.5], &s).unwrap();
        assert_eq!(one, unit_sev());
        let zero = lba_nfold(&unit_sev(), 0, &[0.5, 0.5], &s).unwrap();
        assert_eq!(zero.rows, vec![vec![1.0], vec![1.0]]);
        assert_eq!(zero.partition.bins, vec![(0.0, 0.0)]);
    }

    #[test]
    fn sum_equals_eliminating_the_summands() {
        use crate::discretize::{expr_npt, VarDisc};
        let x = CondDensity { partition: Partition::uniform(0.0, 3.0, 3).unwrap(), rows: vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.3, 0.1]] };
        let y = CondDensity { partition: Partition::from_edges(&[0.0, 0.5, 2.0], false).unwrap(), rows: vec![vec![0.7, 0.3], vec![0.1, 0.9]] };
        let z = Partition::uniform(-1.0, 6.0, 7).unwrap();
        let direct = sum_onto(&x, &y, &z, SpreadMode::Exact).unwrap();
        // Variables: C = 0, X = 1, Y = 2, Z = 3.
        let npt = expr_npt(
            &VarDisc { var: 3, id: "Z", part: &z, states: None },
            &[VarDisc { var: 1, id: "X", part: &x.partition, states: None }, VarDisc { var: 2, id: "Y", part: &y.partition, states: None }],
            &parse_expr("X + Y").unwrap(),
            SpreadMode::Exact,
        )
        .unwrap();
        let fx = Factor::new(vec![0, 1], vec![2, 3], x.rows.concat()).unwrap();
        let fy = Factor::new(vec![0, 2], vec![2, 2], y.rows.concat()).unwrap();
        let reduced = ve_fragment(&[fx, fy, npt], &[1, 2], &[0, 3]).unwrap();
        for c in 0..2 {
            for k in 0..7 {
                assert!((reduced.get(&[c, k]) - direct.rows[c][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ve_matches_enumeration_on_random_fragments() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let card = [2, 3, 2, 2];
            let mut fs = Vec::new();
            for scope in [vec![0], vec![0, 1], vec![1, 2], vec![0, 2, 3]] {
                let c: Vec<usize> = scope.iter().map(|&v| card[v]).collect();
                let size = c.iter().product();
                fs.push(Factor::new(scope, c, (0..size).map(|_| rng.gen::<f64>()).collect()).unwrap());
            }
            let f = ve_fragment(&fs, &[1, 0], &[3, 2]).unwrap();
            let mut joint = Factor::unit();
            for g in &fs {
                joint = joint.multiply(g).unwrap();
            }
            let want = joint.marginalize(&[3, 2]).unwrap();
            assert!(f.max_abs_diff(&want).unwrap() < 1e-12);
        }
        assert!(ve_fragment(&[], &[1], &[1]).is_err());
    }

    #[test]
    fn selector_priors_follow_running_sums() {
        let e = selector_priors(&[0.5, 0.25, 0.125, 0.125]);
        assert!((e[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((e[1] - 0.75 / 0.875).abs() < 1e-15);
        assert_eq!(e[2], 0.875);
        assert_eq!(selector_priors(&[0.0, 0.0, 1.0])[0], 1.0);
        assert!(selector_priors(&[1.0]).is_empty());
    }

    #[test]
    fn two_component_fold_weights() {
        let p = Partition::uniform(0.0, 2.0, 2).unwrap();
        let t0 = CondDensity { partition: p.clone(), rows: vec![vec![1.0, 0.0]] };
        let t1 = CondDensity { partition: p, rows: vec![vec![0.0, 1.0]] };
        let (f, e) = cdf_compound(&[2.0 / 3.0, 1.0 / 3.0], &[t0.clone(), t1]).unwrap();
        assert!((f.rows[0][0] - 2.0 / 3.0).abs() < 1e-15 && (e[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cdf_compound(&[1.0], &[t0.clone()]).unwrap().0, t0);
        assert!(cdf_compound(&[0.5, 0.4], &[t0.clone(), t0]).is_err());
    }

    #[test]
    fn union_partition_keeps_points_and_edges() {
        let a = Partition::uniform(0.0, 4.0, 2).unwrap();
        let b = Partition::from_edges(&[1.0, 3.0, 6.0], false).unwrap();
        let p = union_partition(&[&DiscretizedDensity::point(0.0).partition, &a, &b]).unwrap();
        assert_eq!(p.bins, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0), (4.0, 6.0)]);
    }

    #[test]
    fn frequency_table_for_three_counts() {
        let net = reconstruct_frequency(&[0, 1, 2], &[2.0 / 3.0, 0.75]).unwrap();
        let n0 = net.node("N0").unwrap();
        assert_eq!(n0.parents, vec!["E1".to_string(), "E0".to_string()]);
        assert_eq!(net.node("E1").unwrap().states().unwrap(), &["0..1".to_string(), "2".to_string()]);
        let Cpd::Table(t) = &n0.cpd else { panic!() };
        // Columns (E1, E0) = (T,T), (T,F), (F,T), (F,F); rows N0 = 0, 1, 2.
        assert_eq!(t, &vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let two = reconstruct_frequency(&[3, 7], &[0.4]).unwrap();
        let Cpd::Table(t) = &two.node("N0").unwrap().cpd else { panic!() };
        assert_eq!(t, &vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn frequency_round_trip_is_exact() {
        let support = [0u64, 1, 2, 4, 5, 9];
        let w = [0.3, 0.1, 0.2, 0.05, 0.25, 0.1];
        let net = reconstruct_frequency(&support, &selector_priors(&w)).unwrap();
        let (f, c) = net.table_factors().unwrap();
        let m = jt_marginals(&f, &c, &[]).unwrap();
        let n0 = net.index("N0").unwrap();
        for (a, b) in m[n0].iter().zip(w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn two_cause_spec() -> CompoundSpec {
        let causes = Network::new(vec![
            Node::discrete("A", &["lo", "hi"], &[], vec![0.7, 0.3]),
            Node::discrete("B", &["lo", "hi"], &["A"], vec![0.9, 0.1, 0.4, 0.6]),
        ])
        .unwrap();
        CompoundSpec {
            frequency: Frequency::Table { support: vec![0, 1, 2], weights: vec![0.3, 0.5, 0.2] },
            severity: parse_expr("case(B, lo: Uniform(0, 2), hi: Uniform(1, 4))").unwrap(),
            causes: Some(causes),
        }
    }

    fn coarse() -> AggSettings {
        AggSettings { severity_iters: 2, policy: RefinePolicy { max_bins: 4, ..RefinePolicy::default() }, ..AggSettings::default() }
    }

    #[test]
    fn reduced_deconvolution_equals_full_enumeration() {
        let (_, cache) = bfe_convolve(&two_cause_spec(), &coarse()).unwrap();
        assert!(cache.partition.len() <= MAX_FULL_BINS);
        for t0 in [0.0, 0.7, 1.9, 3.3, 5.0] {
            let r = bfe_deconvolve(&cache, t0).unwrap();
            let f = deconvolve_by_enumeration(&cache, t0).unwrap();
            assert_eq!(r.bin, f.bin);
            for (a, b) in r.frequency.iter().zip(&f.frequency) {
                assert!((a - b).abs() < 1e-9, "t0 = {t0}");
            }
            for ((na, pa), (nb, pb)) in r.causes.iter().zip(&f.causes) {
                assert_eq!(na, nb);
                assert!(pa.iter().zip(pb).all(|(a, b)| (a - b).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn zero_count_observation_is_certain() {
        let (_, cache) = bfe_convolve(&two_cause_spec(), &coarse()).unwrap();
        let r = bfe_deconvolve(&cache, 0.0).unwrap();
        assert_eq!(r.frequency, vec![1.0, 0.0, 0.0]);
        assert!(bfe_deconvolve(&cache, -1.0).is_err());
    }

    #[test]
    fn mc_is_seeded_and_handles_zero_counts() {
        let spec = CompoundSpec { frequency: Frequency::Table { support: vec![0], weights: vec![1.0] }, severity: parse_expr("Exponential(1)").unwrap(), causes: None };
        let e = mc_oracle(&spec, 100, 1).unwrap();
        assert!(e.values.iter().all(|x| *x == 0.0));
        let a = mc_oracle(&two_cause_spec(), 500, 9).unwrap();
        assert_eq!(a, mc_oracle(&two_cause_spec(), 500, 9).unwrap());
        assert!(a.masses(&Partition::uniform(0.0, 8.0, 4).unwrap()).iter().sum::<f64>() > 0.999);
    }

    #[test]
    fn geometric_exponential_moments() {
        let spec = CompoundSpec {
            frequency: Frequency::Law(parse_expr("Geometric(0.5)").unwrap()),
            severity: parse_expr("Exponential(1)").unwrap(),
            causes: None,
        };
        let (c, cache) = bfe_convolve(&spec, &AggSettings::default()).unwrap();
        assert_eq!(&cache.support[..3], &[0, 1, 2]);
        assert!((c.summary.mean - 1.0).abs() < 0.02, "mean {}", c.summary.mean);
        assert!((c.density.variance() - 3.0).abs() < 0.15, "var {}", c.density.variance());
    }
}
