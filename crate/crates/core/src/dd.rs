//! Dynamic discretization over a whole network.
//!
//! Each outer iteration rebuilds every node's NPT on the current partitions,
//! runs an exact or approximate propagation engine, scores each continuous
//! marginal with the entropy-error surrogate and refines its partition.
//! Evidence on continuous nodes is entered as a frozen bin.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::discretize::{
    expr_npt, init_partition_on, kl_error, refine, truncated_support, DiscretizedDensity, Partition, RefinePolicy,
    SpreadMode, VarDisc, TRUNCATION_EPS,
};
use crate::error::{Error, Result};
use crate::expr::{ArithOp, Expr, Resolved};
use crate::factor::Factor;
use crate::gbp::{assign_factors, Gbp, GbpSettings};
use crate::jt::jt_marginals;
use crate::math;
use crate::model::{binary_factorize, to_dccd, topo_order, BfgAnnotation, Cpd, Network, NodeKind};
use crate::region::{trc, Trc};

/// Observation on one node.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    State(String),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdSettings {
    /// Maximum number of propagations.
    pub iterations: usize,
    pub initial_bins: usize,
    pub policy: RefinePolicy,
    pub spread: SpreadMode,
    /// Tail mass cut from unbounded supports.
    pub eps: f64,
    /// Half-width of a continuous evidence bin relative to the node's range.
    pub evidence_halfwidth: f64,
    /// Stop once the total error changes by less than this fraction ...
    pub tolerance: f64,
    /// ... on this many consecutive iterations.
    pub stable_rounds: usize,
    pub gbp: GbpSettings,
}

impl Default for DdSettings {
    fn default() -> Self {
        DdSettings {
            iterations: 25,
            initial_bins: 3,
            policy: RefinePolicy::default(),
            spread: SpreadMode::Uniform,
            eps: TRUNCATION_EPS,
            evidence_halfwidth: 1e-3,
            tolerance: 1e-6,
            stable_rounds: 3,
            gbp: GbpSettings::default(),
        }
    }
}

/// What a propagation engine reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    /// One normalized marginal per variable.
    pub marginals: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// A propagation back end for the discretization loop.
pub trait Engine {
    /// `maps[v]`, when present, sends each current bin of `v` to the bin of
    /// the previous call it replaces, so engines can warm start.
    fn propagate(
        &mut self,
        factors: &[Factor],
        card: &[usize],
        evidence: &[(usize, usize)],
        maps: Option<&[Option<Vec<usize>>]>,
    ) -> Result<InnerResult>;
}

/// Exact propagation on a junction tree rebuilt per call.
#[derive(Debug, Clone, Copy, Default)]
pub struct JtEngine;

impl Engine for JtEngine {
    fn propagate(&mut self, factors: &[Factor], card: &[usize], evidence: &[(usize, usize)], _: Option<&[Option<Vec<usize>>]>) -> Result<InnerResult> {
        let marginals = jt_marginals(factors, card, evidence)?;
        Ok(InnerResult { marginals, converged: true, iterations: 1, residual: 0.0 })
    }
}

/// Region-graph propagation with messages kept across calls.
#[derive(Debug, Clone)]
pub struct GbpEngine {
    trc: Trc,
    settings: GbpSettings,
    state: Option<Gbp>,
    /// Reset messages instead of remapping them after re-discretization.
    pub cold_start: bool,
}

impl GbpEngine {
    pub fn new(trc: Trc, settings: GbpSettings) -> GbpEngine {
        GbpEngine { trc, settings, state: None, cold_start: false }
    }

    pub fn trc(&self) -> &Trc {
        &self.trc
    }
}

impl Engine for GbpEngine {
    fn propagate(&mut self, factors: &[Factor], card: &[usize], evidence: &[(usize, usize)], maps: Option<&[Option<Vec<usize>>]>) -> Result<InnerResult> {
        let (pots, _) = assign_factors(&self.trc.graph, factors, card, Some(self.trc.root))?;
        let g = match self.state.take() {
            Some(mut g) => {
                match maps {
                    Some(m) if !self.cold_start => g.remap_messages(card, m),
                    _ => {
                        g.card = card.to_vec();
                        g.reset_messages();
                    }
                }
                g.set_potentials(pots);
                g
            }
            None => Gbp::new(self.trc.graph.clone(), card, pots, self.trc.root)?,
        };
        let mut g = g;
        for &(v, s) in evidence {
            g.add_evidence(v, s)?;
        }
        let res = match g.run(&self.settings) {
            Ok(r) => r,
            Err(e) => {
                // Stale messages can vanish on newly zero-mass bins; retry cold.
                g.reset_messages();
                g.run(&self.settings).map_err(|_| e)?
            }
        };
        let marginals = (0..card.len()).map(|v| g.marginal(&res.beliefs, v)).collect::<Result<Vec<_>>>()?;
        self.state = Some(g);
        Ok(InnerResult { marginals, converged: res.converged, iterations: res.iterations, residual: res.residual })
    }
}

/// Closed value interval with a lattice flag.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Range {
    lo: f64,
    hi: f64,
    lattice: bool,
}

fn hull(a: Option<Range>, b: Range) -> Range {
    match a {
        None => b,
        Some(a) => Range { lo: a.lo.min(b.lo), hi: a.hi.max(b.hi), lattice: a.lattice && b.lattice },
    }
}

fn is_int(x: f64) -> bool {
    x == math::floor(x)
}

fn mul_iv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let p = |x: f64, y: f64| if x == 0.0 || y == 0.0 { 0.0 } else { x * y };
    let c = [p(a.0, b.0), p(a.0, b.1), p(a.1, b.0), p(a.1, b.1)];
    (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Value range of a deterministic expression by interval arithmetic.
fn det_range(e: &Expr, env: &dyn Fn(&str) -> Result<Range>) -> Result<Range> {
    match e {
        Expr::Const(c) => Ok(Range { lo: *c, hi: *c, lattice: is_int(*c) }),
        Expr::Var(v) => env(v),
        Expr::WeightedSum { terms, bias } => {
            let mut r = Range { lo: *bias, hi: *bias, lattice: is_int(*bias) };
            for (c, v) in terms {
                if *c == 0.0 {
                    continue;
                }
                let x = env(v)?;
                let (a, b) = mul_iv((*c, *c), (x.lo, x.hi));
                r = Range { lo: r.lo + a, hi: r.hi + b, lattice: r.lattice && x.lattice && is_int(*c) };
            }
            Ok(r)
        }
        Expr::Arith { op, lhs, rhs } => {
            let a = det_range(lhs, env)?;
            let b = det_range(rhs, env)?;
            let lattice = a.lattice && b.lattice;
            let (lo, hi) = match op {
                ArithOp::Add => (a.lo + b.lo, a.hi + b.hi),
                ArithOp::Sub => (a.lo - b.hi, a.hi - b.lo),
                ArithOp::Mul => mul_iv((a.lo, a.hi), (b.lo, b.hi)),
            };
            Ok(Range { lo, hi, lattice })
        }
        Expr::Partitioned { cases, .. } => {
            let mut acc = None;
            for (_, c) in cases {
                acc = Some(hull(acc, det_range(c, env)?));
            }
            acc.ok_or_else(|| Error::InvalidModel("partitioned expression without cases".into()))
        }
        _ => Err(Error::InvalidParameter("expected a deterministic expression".into())),
    }
}

/// `(truncated value range, natural bounds)` of a node's expression.
fn expr_range(e: &Expr, env: &dyn Fn(&str) -> Result<Range>, eps: f64) -> Result<(Range, (f64, f64))> {
    match e {
        Expr::Dist { kind, params } => {
            let pr: Vec<Range> = params.iter().map(|p| det_range(p, env)).collect::<Result<_>>()?;
            let mut acc: Option<Range> = None;
            let mut nat = (f64::INFINITY, f64::NEG_INFINITY);
            for mask in 0..(1usize << pr.len()) {
                let p: Vec<f64> = pr.iter().enumerate().map(|(j, r)| if mask >> j & 1 == 1 { r.hi } else { r.lo }).collect();
                let Ok(d) = Resolved::new(*kind, &p) else { continue };
                let (lo, hi) = truncated_support(&d, eps);
                let (lo, hi) = if d.is_integer() { (lo + 0.5, hi - 0.5) } else { (lo, hi) };
                acc = Some(hull(acc, Range { lo, hi, lattice: d.is_integer() }));
                let s = d.support();
                nat = (nat.0.min(s.0), nat.1.max(s.1));
            }
            let r = acc.ok_or_else(|| Error::InvalidParameter(format!("{} has no valid parameter corner", kind.name())))?;
            Ok((r, nat))
        }
        Expr::Mixture { components, .. } => {
            let mut acc = None;
            let mut nat = (f64::INFINITY, f64::NEG_INFINITY);
            for c in components {
                let (r, n) = expr_range(c, env, eps)?;
                acc = Some(hull(acc, r));
                nat = (nat.0.min(n.0), nat.1.max(n.1));
            }
            Ok((acc.ok_or_else(|| Error::InvalidModel("empty mixture".into()))?, nat))
        }
        Expr::Partitioned { cases, .. } => {
            let mut acc = None;
            let mut nat = (f64::INFINITY, f64::NEG_INFINITY);
            for (_, c) in cases {
                let (r, n) = expr_range(c, env, eps)?;
                acc = Some(hull(acc, r));
                nat = (nat.0.min(n.0), nat.1.max(n.1));
            }
            Ok((acc.ok_or_else(|| Error::InvalidModel("partitioned expression without cases".into()))?, nat))
        }
        det => {
            let r = det_range(det, env)?;
            Ok((r, (f64::NEG_INFINITY, f64::INFINITY)))
        }
    }
}

/// Partitions, evidence and NPT construction for one network.
#[derive(Debug, Clone)]
pub struct DdModel {
    pub net: Network,
    pub parts: Vec<Partition>,
    /// Extension bounds per node.
    pub bounds: Vec<(f64, f64)>,
    evidence: Vec<(usize, Evidence)>,
    pub spread: SpreadMode,
}

impl DdModel {
    pub fn new(net: &Network, evidence: &[(String, Evidence)], s: &DdSettings) -> Result<DdModel> {
        net.validate()?;
        let n = net.len();
        let mut ev: Vec<(usize, Evidence)> = Vec::with_capacity(evidence.len());
        for (id, e) in evidence {
            let i = net.index(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
            let node = &net.nodes[i];
            match (e, node.states()) {
                (Evidence::State(st), Some(states)) if !states.contains(st) => {
                    return Err(Error::InvalidParameter(format!("`{id}` has no state `{st}`")))
                }
                (Evidence::Value(_), Some(_)) => return Err(Error::InvalidParameter(format!("`{id}` is discrete"))),
                (Evidence::State(_), None) => return Err(Error::InvalidParameter(format!("`{id}` is continuous"))),
                (Evidence::Value(x), None) if !x.is_finite() => {
                    return Err(Error::InvalidParameter(format!("evidence on `{id}` is not finite")))
                }
                _ => {}
            }
            ev.push((i, e.clone()));
        }
        let mut ranges: Vec<Option<Range>> = vec![None; n];
        let mut parts: Vec<Option<Partition>> = vec![None; n];
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
        for id in topo_order(net)? {
            let i = net.index(&id).expect("topological order lists nodes");
            let node = &net.nodes[i];
            if let Some(states) = node.states() {
                parts[i] = Some(Partition::states(states.len()));
                ranges[i] = Some(Range { lo: 0.0, hi: (states.len() - 1) as f64, lattice: true });
                continue;
            }
            let Cpd::Expr(e) = &node.cpd else { unreachable!("validated") };
            let env = |v: &str| -> Result<Range> {
                let k = net.index(v).ok_or_else(|| Error::UnknownNode(v.into()))?;
                ranges[k].ok_or_else(|| Error::MissingAssignment(v.into()))
            };
            let (mut r, nat) = expr_range(e, &env, s.eps)?;
            let NodeKind::Continuous { lo: dlo, hi: dhi } = node.kind else { unreachable!() };
            bounds[i] = (nat.0.max(dlo), nat.1.min(dhi));
            r.lo = r.lo.max(bounds[i].0);
            r.hi = r.hi.min(bounds[i].1);
            let obs = ev.iter().find(|(k, _)| *k == i).map(|(_, e)| match e {
                Evidence::Value(x) => *x,
                Evidence::State(_) => unreachable!("checked above"),
            });
            let pad = if r.lattice { 0.5 } else { 0.0 };
            if let Some(x) = obs {
                if r.lattice && !is_int(x) {
                    return Err(Error::InvalidParameter(format!("evidence on lattice node `{id}` must be an integer")));
                }
                r.lo = r.lo.min(x);
                r.hi = r.hi.max(x);
            }
            let (mut lo, mut hi) = if r.lattice {
                (math::floor(r.lo) - 0.5, math::ceil(r.hi) + 0.5)
            } else {
                (r.lo, r.hi)
            };
            let h = if r.lattice { 0.5 } else { s.evidence_halfwidth * (hi - lo).max(1e-9) };
            if let Some(x) = obs {
                lo = lo.min(x - h);
                hi = hi.max(x + h);
            }
            let mut p = init_partition_on(lo, hi, s.initial_bins, r.lattice)?;
            if let Some(x) = obs {
                p.insert_frozen(x - h, x + h);
            }
            ranges[i] = Some(Range { lo: lo + pad, hi: hi - pad, lattice: r.lattice });
            parts[i] = Some(p);
        }
        let parts = parts.into_iter().map(|p| p.expect("every node visited")).collect();
        Ok(DdModel { net: net.clone(), parts, bounds, evidence: ev, spread: s.spread })
    }

    pub fn card(&self) -> Vec<usize> {
        self.parts.iter().map(|p| p.len()).collect()
    }

    /// Evidence as `(variable, bin)` pairs on the current partitions.
    pub fn evidence_bins(&self) -> Result<Vec<(usize, usize)>> {
        self.evidence
            .iter()
            .map(|(i, e)| match e {
                Evidence::State(st) => {
                    let k = self.net.nodes[*i].states().and_then(|s| s.iter().position(|x| x == st)).expect("checked");
                    Ok((*i, k))
                }
                Evidence::Value(x) => {
                    let p = &self.parts[*i];
                    (0..p.len())
                        .find(|&b| p.frozen[b] && p.bins[b].0 <= *x && *x <= p.bins[b].1)
                        .map(|b| (*i, b))
                        .ok_or_else(|| Error::InvalidParameter(format!("evidence bin for `{}` is missing", self.net.nodes[*i].id)))
                }
            })
            .collect()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.evidence.iter().any(|(k, _)| *k == i)
    }

    /// One factor per node over `parents ++ [node]`.
    pub fn factors(&self) -> Result<Vec<Factor>> {
        let card = self.card();
        let mut out = Vec::with_capacity(self.net.len());
        for (i, node) in self.net.nodes.iter().enumerate() {
            let pidx: Vec<usize> = node.parents.iter().map(|p| self.net.index(p).expect("validated")).collect();
            match &node.cpd {
                Cpd::Table(t) => {
                    let mut vars = pidx.clone();
                    vars.push(i);
                    let c = vars.iter().map(|&v| card[v]).collect();
                    out.push(Factor::new(vars, c, t.clone())?);
                }
                Cpd::Expr(e) => {
                    let disc = |k: usize| VarDisc {
                        var: k,
                        id: self.net.nodes[k].id.as_str(),
                        part: &self.parts[k],
                        states: self.net.nodes[k].states(),
                    };
                    let parents: Vec<VarDisc> = pidx.iter().map(|&k| disc(k)).collect();
                    out.push(expr_npt(&disc(i), &parents, e, self.spread)?);
                }
            }
        }
        Ok(out)
    }

    pub fn density(&self, i: usize, marginal: &[f64]) -> Result<DiscretizedDensity> {
        DiscretizedDensity::new(self.parts[i].clone(), marginal.to_vec())
    }
}

/// Final state of a discretization run.
#[derive(Debug, Clone)]
pub struct DdOutcome {
    pub model: DdModel,
    /// Marginals on `model.parts`.
    pub marginals: Vec<Vec<f64>>,
    pub factors: Vec<Factor>,
    /// Propagations performed.
    pub iterations: usize,
    /// Total error after each propagation.
    pub errors: Vec<f64>,
    /// Whether the outer loop met its stopping rule before the budget ran out.
    pub converged: bool,
    pub inner: InnerResult,
}

impl DdOutcome {
    pub fn index(&self, id: &str) -> Result<usize> {
        self.model.net.index(id).ok_or_else(|| Error::UnknownNode(id.into()))
    }

    pub fn density(&self, id: &str) -> Result<DiscretizedDensity> {
        let i = self.index(id)?;
        self.model.density(i, &self.marginals[i])
    }

    pub fn mean(&self, id: &str) -> Result<f64> {
        Ok(self.density(id)?.mean())
    }

    pub fn sd(&self, id: &str) -> Result<f64> {
        Ok(self.density(id)?.sd())
    }
}

/// Runs the discretization loop with `engine` until the total error settles
/// or the iteration budget is spent.
pub fn run_dd(net: &Network, evidence: &[(String, Evidence)], s: &DdSettings, engine: &mut dyn Engine) -> Result<DdOutcome> {
    let mut model = DdModel::new(net, evidence, s)?;
    let mut maps: Option<Vec<Option<Vec<usize>>>> = None;
    let mut errors = Vec::new();
    let mut stable = 0;
    let budget = s.iterations.max(1);
    for it in 0..budget {
        let factors = model.factors()?;
        let card = model.card();
        let ev = model.evidence_bins()?;
        let inner = engine.propagate(&factors, &card, &ev, maps.as_deref())?;
        let mut total = 0.0;
        let mut next = model.parts.clone();
        for i in 0..model.net.len() {
            if model.net.nodes[i].is_discrete() || model.is_observed(i) {
                continue;
            }
            let d = model.density(i, &inner.marginals[i])?;
            let err = kl_error(&d);
            total += err.iter().sum::<f64>();
            next[i] = refine(&d, &err, &s.policy, model.bounds[i]);
        }
        let settled = errors.last().is_some_and(|&prev: &f64| (total - prev).abs() <= s.tolerance * prev.abs().max(1e-300));
        stable = if settled { stable + 1 } else { 0 };
        errors.push(total);
        let unchanged = next == model.parts;
        let done = unchanged || stable >= s.stable_rounds;
        if done || it + 1 == budget {
            return Ok(DdOutcome { marginals: inner.marginals.clone(), factors, iterations: it + 1, errors, converged: done, inner, model });
        }
        maps = Some(
            next.iter()
                .zip(&model.parts)
                .map(|(new, old)| if new == old { None } else { Some(new.midpoint_map(old)) })
                .collect(),
        );
        model.parts = next;
    }
    unreachable!("loop returns on its last iteration")
}

/// Dynamic discretization with exact junction-tree propagation.
pub fn ddjt(net: &Network, evidence: &[(String, Evidence)], s: &DdSettings) -> Result<DdOutcome> {
    run_dd(net, evidence, s, &mut JtEngine)
}

/// Result of the region-graph pipeline: the outcome on the factorized graph.
#[derive(Debug, Clone)]
pub struct DdbpOutcome {
    pub outcome: DdOutcome,
    pub annotation: BfgAnnotation,
    pub trc: Trc,
}

/// Densifies, binary-factorizes, builds the TRC region graph and runs dynamic
/// discretization with two-way GBP as the propagation engine.
pub fn ddbp(net: &Network, evidence: &[(String, Evidence)], s: &DdSettings) -> Result<DdbpOutcome> {
    let (bfg, ann) = binary_factorize(&to_dccd(net)?)?;
    ddbp_on(&bfg, &ann, evidence, s)
}

/// `ddbp` on a network already in full binary factorized form.
pub fn ddbp_on(bfg: &Network, ann: &BfgAnnotation, evidence: &[(String, Evidence)], s: &DdSettings) -> Result<DdbpOutcome> {
    let t = trc(bfg, ann)?;
    let mut engine = GbpEngine::new(t.clone(), s.gbp.clone());
    let outcome = run_dd(bfg, evidence, s, &mut engine)?;
    Ok(DdbpOutcome { outcome, annotation: ann.clone(), trc: t })
}

/// Re-runs the engine on fixed factors with extra bin-level evidence and
/// returns all marginals. Messages carry over from the previous call.
pub fn propagate_fixed(out: &DdOutcome, extra: &[(usize, usize)], engine: &mut dyn Engine) -> Result<Vec<Vec<f64>>> {
    let mut ev = out.model.evidence_bins()?;
    ev.extend_from_slice(extra);
    let keep = vec![None; out.model.net.len()];
    Ok(engine.propagate(&out.factors, &out.model.card(), &ev, Some(&keep))?.marginals)
}

/// Correlations of `x` with each of `ys` from conditional means on the frozen
/// discretization: for each bin `b` of `x` with non-negligible mass, the
/// engine runs with `x ∈ b` and `E[y | x ∈ b]` is read off. Values inside a
/// bin are represented by its midpoint; the standard deviations are those of
/// the piecewise-uniform marginals.
pub fn correlations(out: &DdOutcome, x: &str, ys: &[&str], engine: &mut dyn Engine) -> Result<Vec<f64>> {
    let ix = out.index(x)?;
    let iys: Vec<usize> = ys.iter().map(|y| out.index(y)).collect::<Result<_>>()?;
    let dx = out.density(x)?.normalized();
    let dys: Vec<DiscretizedDensity> = ys.iter().map(|y| Ok(out.density(y)?.normalized())).collect::<Result<_>>()?;
    let mids_x = out.model.parts[ix].mids();
    let mut cov = vec![0.0; ys.len()];
    for b in 0..mids_x.len() {
        let pb = dx.mass[b];
        if pb < 1e-9 {
            continue;
        }
        let m = propagate_fixed(out, &[(ix, b)], engine)?;
        for (k, &iy) in iys.iter().enumerate() {
            let ey: f64 = m[iy].iter().zip(out.model.parts[iy].mids()).map(|(p, v)| p * v).sum();
            cov[k] += pb * (mids_x[b] - dx.mean()) * (ey - dys[k].mean());
        }
    }
    cov.iter()
        .zip(&dys)
        .map(|(c, dy)| {
            let den = dx.sd() * dy.sd();
            if den > 0.0 {
                Ok(c / den)
            } else {
                Err(Error::InvalidParameter("degenerate marginal".into()))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::model::Node;

    fn cont(id: &str, parents: &[&str], e: &str) -> Node {
        Node::continuous(id, parents, parse_expr(e).unwrap())
    }

    #[test]
    fn initial_ranges_follow_interval_arithmetic() {
        let net = Network::new(vec![
            cont("A", &[], "Uniform(0, 2)"),
            cont("B", &[], "Uniform(-1, 1)"),
            cont("S", &["A", "B"], "A - 2*B"),
            cont("N", &["S"], "Normal(S, 1)"),
        ])
        .unwrap();
        let m = DdModel::new(&net, &[], &DdSettings::default()).unwrap();
        assert_eq!((m.parts[2].lo(), m.parts[2].hi()), (-2.0, 4.0));
        let q = math::std_normal_quantile(1.0 - TRUNCATION_EPS);
        assert!((m.parts[3].hi() - (4.0 + q)).abs() < 1e-9);
        assert!((m.parts[3].lo() - (-2.0 - q)).abs() < 1e-9);
    }

    #[test]
    fn lattice_sum_range_is_half_integer_aligned() {
        let net = Network::new(vec![
            cont("P", &[], "Poisson(2)"),
            cont("Q", &[], "Poisson(3)"),
            cont("S", &["P", "Q"], "P + Q"),
        ])
        .unwrap();
        let m = DdModel::new(&net, &[], &DdSettings::default()).unwrap();
        assert!(m.parts[2].lattice);
        assert_eq!(m.parts[2].lo(), -0.5);
        assert_eq!(m.parts[2].hi(), m.parts[0].hi() + m.parts[1].hi() - 0.5);
    }

    #[test]
    fn value_evidence_gets_a_frozen_bin() {
        let net = Network::new(vec![cont("A", &[], "Normal(0, 1)"), cont("B", &["A"], "Normal(A, 1)")]).unwrap();
        let m = DdModel::new(&net, &[("B".into(), Evidence::Value(10.0))], &DdSettings::default()).unwrap();
        let ev = m.evidence_bins().unwrap();
        let b = ev[0].1;
        assert!(m.parts[1].frozen[b]);
        assert!(m.parts[1].bins[b].0 < 10.0 && 10.0 < m.parts[1].bins[b].1);
    }

    #[test]
    fn ddjt_normal_sum_moments() {
        let net = Network::new(vec![
            cont("A", &[], "Normal(1, 4)"),
            cont("B", &[], "Normal(2, 9)"),
            cont("S", &["A", "B"], "A + B"),
        ])
        .unwrap();
        let s = DdSettings { iterations: 30, spread: SpreadMode::Exact, ..Default::default() };
        let out = ddjt(&net, &[], &s).unwrap();
        assert!((out.mean("S").unwrap() - 3.0).abs() < 0.05, "{}", out.mean("S").unwrap());
        assert!((out.sd("S").unwrap() - 13f64.sqrt()).abs() < 0.1, "{}", out.sd("S").unwrap());
    }

    #[test]
    fn ddjt_conditional_gaussian_posterior() {
        // A ~ N(0, 1), B | A ~ N(A, 1), observe B = 2: A | B ~ N(1, 1/2).
        let net = Network::new(vec![cont("A", &[], "Normal(0, 1)"), cont("B", &["A"], "Normal(A, 1)")]).unwrap();
        let s = DdSettings { iterations: 30, ..Default::default() };
        let out = ddjt(&net, &[("B".into(), Evidence::Value(2.0))], &s).unwrap();
        assert!((out.mean("A").unwrap() - 1.0).abs() < 0.02, "{}", out.mean("A").unwrap());
        assert!((out.sd("A").unwrap() - 0.5f64.sqrt()).abs() < 0.02, "{}", out.sd("A").unwrap());
    }
}
