//! Two-way generalized belief propagation on region graphs.
//!
//! Each edge `(P, R)` carries an upward message `n_{R→P}` and a downward
//! message `m_{P→R}`, both over `R`'s label. Pseudo-messages are mixed with
//! the exponent `β_R = 1 / (2 − q_R)`, `q_R = (1 − c_R) / p_R`, which reduces
//! to ordinary belief propagation whenever `c_R = 1 − p_R`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::region::{RegionGraph, RegionKind};

#[derive(Debug, Clone, PartialEq)]
pub struct GbpSettings {
    pub max_iters: usize,
    /// Largest belief-entry change between sweeps accepted as converged.
    pub threshold: f64,
    /// Geometric blend weight of the previous message (0 = undamped).
    pub damping: f64,
}

impl Default for GbpSettings {
    fn default() -> Self {
        GbpSettings { max_iters: 200, threshold: 1e-6, damping: 0.0 }
    }
}

/// `β_R` per region; `None` for regions without parents.
pub fn beta_params(rg: &RegionGraph) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(rg.regions.len());
    for r in 0..rg.regions.len() {
        let p = rg.parents(r).len();
        if p == 0 {
            out.push(None);
            continue;
        }
        let q = (1 - rg.regions[r].counting) as f64 / p as f64;
        if (2.0 - q).abs() < 1e-12 {
            return Err(Error::Structure(alloc::format!("β undefined for region {r} (q = 2)")));
        }
        out.push(Some(1.0 / (2.0 - q)));
    }
    Ok(out)
}

/// Multiplies each factor into exactly one top-level region containing its
/// scope: a region whose label equals the scope, else the `root` region,
/// else the lowest-index primary region, else any. Other regions stay uniform.
pub fn assign_factors(rg: &RegionGraph, factors: &[Factor], card: &[usize], root: Option<usize>) -> Result<(Vec<Factor>, Vec<usize>)> {
    let mut pots: Vec<Factor> = rg
        .regions
        .iter()
        .map(|r| Factor::ones(r.label.clone(), r.label.iter().map(|&v| card[v]).collect()))
        .collect();
    let mut host_of = Vec::with_capacity(factors.len());
    for f in factors {
        let holds = |r: usize| rg.regions[r].level == 1 && f.vars.iter().all(|v| rg.regions[r].label.contains(v));
        let cands: Vec<usize> = (0..rg.regions.len()).filter(|&r| holds(r)).collect();
        if cands.is_empty() {
            return Err(Error::Structure(alloc::format!("factor over {:?} has no housing region", f.vars)));
        }
        let exact = cands.iter().copied().find(|&r| rg.regions[r].label.len() == f.vars.len());
        let host = exact
            .or_else(|| root.filter(|r| cands.contains(r)))
            .or_else(|| cands.iter().copied().find(|&r| rg.regions[r].kind == RegionKind::Primary))
            .unwrap_or(cands[0]);
        pots[host].multiply_in(f)?;
        host_of.push(host);
    }
    Ok((pots, host_of))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbpResult {
    /// Normalized belief per region.
    pub beliefs: Vec<Factor>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Message state for one region graph.
#[derive(Debug, Clone)]
pub struct Gbp {
    pub rg: RegionGraph,
    pub card: Vec<usize>,
    /// `f̃_R = (Π f_a)^{c_R}` per region.
    ftilde: Vec<Factor>,
    beta: Vec<Option<f64>>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// Edge index lookup: `edge_of[(p, r)]`.
    edge_index: alloc::collections::BTreeMap<(usize, usize), usize>,
    /// `n_{R→P}` per edge.
    pub up: Vec<Factor>,
    /// `m_{P→R}` per edge.
    pub down: Vec<Factor>,
    order: Vec<usize>,
}

fn label_factor(label: &[usize], card: &[usize]) -> Factor {
    Factor::ones(label.to_vec(), label.iter().map(|&v| card[v]).collect())
}

impl Gbp {
    /// `potentials` are the per-region factor products (see `assign_factors`);
    /// `root` anchors the depth-first update order.
    pub fn new(rg: RegionGraph, card: &[usize], potentials: Vec<Factor>, root: usize) -> Result<Gbp> {
        let beta = beta_params(&rg)?;
        let n = rg.regions.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut edge_index = alloc::collections::BTreeMap::new();
        for (e, &(p, r)) in rg.edges.iter().enumerate() {
            parents[r].push(p);
            children[p].push(r);
            edge_index.insert((p, r), e);
        }
        let ftilde = potentials
            .iter()
            .zip(&rg.regions)
            .map(|(f, r)| f.power(r.counting as f64))
            .collect::<Vec<_>>();
        let up: Vec<Factor> = rg.edges.iter().map(|&(_, r)| label_factor(&rg.regions[r].label, card)).collect();
        let down = up.clone();
        // Depth-first discovery order of edges from the root region.
        let mut order = Vec::with_capacity(rg.edges.len());
        let mut seen_r = vec![false; n];
        let mut seen_e = vec![false; rg.edges.len()];
        let starts = core::iter::once(root).chain(0..n);
        for s in starts {
            if s >= n || seen_r[s] {
                continue;
            }
            let mut stack = vec![s];
            while let Some(x) = stack.pop() {
                if seen_r[x] {
                    continue;
                }
                seen_r[x] = true;
                let mut nbrs: Vec<(usize, usize)> = Vec::new();
                for &c in &children[x] {
                    nbrs.push((edge_index[&(x, c)], c));
                }
                for &p in &parents[x] {
                    nbrs.push((edge_index[&(p, x)], p));
                }
                for &(e, y) in nbrs.iter().rev() {
                    if !seen_e[e] {
                        seen_e[e] = true;
                        order.push(e);
                    }
                    if !seen_r[y] {
                        stack.push(y);
                    }
                }
            }
        }
        Ok(Gbp { rg, card: card.to_vec(), ftilde, beta, parents, children, edge_index, up, down, order })
    }

    /// Replaces region potentials, keeping messages (warm start).
    pub fn set_potentials(&mut self, potentials: Vec<Factor>) {
        self.ftilde = potentials.iter().zip(&self.rg.regions).map(|(f, r)| f.power(r.counting as f64)).collect();
    }

    /// Pins `v` to `state` in every top-level region holding it.
    pub fn add_evidence(&mut self, v: usize, state: usize) -> Result<()> {
        for r in 0..self.rg.regions.len() {
            if self.rg.regions[r].label.contains(&v) && self.rg.regions[r].level == 1 {
                self.ftilde[r] = self.ftilde[r].reduce_evidence(v, state)?;
            }
        }
        Ok(())
    }

    /// Re-expresses every message after the variables' bins change. `maps[v]`
    /// sends each new bin of `v` to the old bin whose value it inherits.
    pub fn remap_messages(&mut self, card: &[usize], maps: &[Option<Vec<usize>>]) {
        let remap = |f: &Factor| -> Factor {
            let ncard: Vec<usize> = f.vars.iter().map(|&v| card[v]).collect();
            let size: usize = ncard.iter().product();
            let mut table = Vec::with_capacity(size);
            let mut idx = vec![0usize; f.vars.len()];
            for _ in 0..size {
                let mut off = 0;
                for (k, &v) in f.vars.iter().enumerate() {
                    let old = match &maps[v] {
                        Some(m) => m[idx[k]],
                        None => idx[k],
                    };
                    off = off * f.card[k] + old.min(f.card[k] - 1);
                }
                table.push(f.table[off]);
                for k in (0..idx.len()).rev() {
                    idx[k] += 1;
                    if idx[k] < ncard[k] {
                        break;
                    }
                    idx[k] = 0;
                }
            }
            Factor { vars: f.vars.clone(), card: ncard, table }
        };
        self.up = self.up.iter().map(remap).collect();
        self.down = self.down.iter().map(remap).collect();
        self.card = card.to_vec();
    }

    /// Resets every message to uniform.
    pub fn reset_messages(&mut self) {
        for (e, &(_, r)) in self.rg.edges.iter().enumerate() {
            self.up[e] = label_factor(&self.rg.regions[r].label, &self.card);
            self.down[e] = self.up[e].clone();
        }
    }

    /// `f̃_R` times every incoming message except those on `skip` edges.
    fn gather(&self, r: usize, skip_parent: Option<usize>, skip_child: Option<usize>) -> Result<Factor> {
        let mut f = self.ftilde[r].clone();
        for &p in &self.parents[r] {
            if Some(p) != skip_parent {
                f.multiply_in(&self.down[self.edge_index[&(p, r)]])?;
            }
        }
        for &c in &self.children[r] {
            if Some(c) != skip_child {
                let m = &self.up[self.edge_index[&(r, c)]];
                f.multiply_in(m)?;
            }
        }
        Ok(f)
    }

    fn update_edge(&mut self, e: usize, damping: f64) -> Result<()> {
        let (p, r) = self.rg.edges[e];
        let label = self.rg.regions[r].label.clone();
        let mut n0 = self.gather(r, Some(p), None)?;
        n0.max_normalize();
        let mut m0 = self.gather(p, None, Some(r))?.marginalize(&label)?;
        m0.max_normalize();
        let b = self.beta[r].unwrap_or(1.0);
        let (mut n, mut m) = if b == 1.0 {
            (n0, m0)
        } else {
            (n0.power(b).multiply(&m0.power(b - 1.0))?, m0.power(b).multiply(&n0.power(b - 1.0))?)
        };
        if damping > 0.0 {
            n = self.up[e].power(damping).multiply(&n.power(1.0 - damping))?;
            m = self.down[e].power(damping).multiply(&m.power(1.0 - damping))?;
        }
        n.max_normalize();
        m.max_normalize();
        for f in [&mut n, &mut m] {
            if f.table.iter().all(|x| *x == 0.0) {
                return Err(Error::InconsistentEvidence);
            }
        }
        self.up[e] = n;
        self.down[e] = m;
        Ok(())
    }

    /// Normalized belief of region `r` from current messages.
    pub fn belief(&self, r: usize) -> Result<Factor> {
        self.gather(r, None, None)?.normalize()
    }

    pub fn beliefs(&self) -> Result<Vec<Factor>> {
        (0..self.rg.regions.len()).map(|r| self.belief(r)).collect()
    }

    /// Sweeps (reverse then forward depth-first edge order) until the largest
    /// belief change is below the threshold or `max_iters` sweeps ran.
    pub fn run(&mut self, s: &GbpSettings) -> Result<GbpResult> {
        let mut prev = self.beliefs()?;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..s.max_iters.max(1) {
            for k in (0..self.order.len()).rev() {
                self.update_edge(self.order[k], s.damping)?;
            }
            for k in 0..self.order.len() {
                self.update_edge(self.order[k], s.damping)?;
            }
            let cur = self.beliefs()?;
            residual = cur
                .iter()
                .zip(&prev)
                .map(|(a, b)| a.table.iter().zip(&b.table).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            prev = cur;
            iterations = it + 1;
            if residual < s.threshold {
                break;
            }
        }
        Ok(GbpResult { beliefs: prev, iterations, residual, converged: residual < s.threshold })
    }

    /// Marginal of `v` from the smallest region holding it.
    pub fn marginal(&self, beliefs: &[Factor], v: usize) -> Result<Vec<f64>> {
        let r = (0..self.rg.regions.len())
            .filter(|&r| self.rg.regions[r].label.contains(&v))
            .min_by_key(|&r| (self.rg.regions[r].label.len(), r))
            .ok_or_else(|| Error::UnknownNode(alloc::format!("{v}")))?;
        Ok(beliefs[r].marginalize(&[v])?.normalize()?.table)
    }

    /// Largest violation of `Σ_{x_P \ x_R} b_P = b_R` over all edges.
    pub fn consistency_residual(&self, beliefs: &[Factor]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &(p, r) in &self.rg.edges {
            let m = beliefs[p].marginalize(&self.rg.regions[r].label)?;
            worst = worst.max(m.max_abs_diff(&beliefs[r])?);
        }
        Ok(worst)
    }
}

/// Convenience: assign, propagate, and read every variable marginal.
pub fn gbp_marginals(
    rg: &RegionGraph,
    factors: &[Factor],
    card: &[usize],
    evidence: &[(usize, usize)],
    root: usize,
    s: &GbpSettings,
) -> Result<(Vec<Vec<f64>>, GbpResult)> {
    let (pots, _) = assign_factors(rg, factors, card, Some(root))?;
    let mut g = Gbp::new(rg.clone(), card, pots, root)?;
    for &(v, st) in evidence {
        g.add_evidence(v, st)?;
    }
    let res = g.run(s)?;
    let marg = (0..card.len()).map(|v| g.marginal(&res.beliefs, v)).collect::<Result<Vec<_>>>()?;
    Ok((marg, res))
}
