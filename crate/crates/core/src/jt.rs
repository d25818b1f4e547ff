//! Exact inference by junction tree: triangulation, maximum-weight spanning
//! tree over cliques, and two-pass message propagation.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::model::UGraph;

/// Eliminates vertices by minimum fill-in (ties: smaller degree, then lower
/// index). Returns the chordal fill graph and its maximal cliques in
/// elimination order.
pub fn triangulate(g: &UGraph) -> (UGraph, Vec<Vec<usize>>) {
    let n = g.ids.len();
    let mut work: Vec<BTreeSet<usize>> = g.adj.clone();
    let mut chordal = g.clone();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    while !alive.is_empty() {
        let mut best: Option<(usize, usize, usize)> = None;
        for &v in &alive {
            let nb: Vec<usize> = work[v].iter().copied().collect();
            let mut fill = 0;
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    if !work[nb[i]].contains(&nb[j]) {
                        fill += 1;
                    }
                }
            }
            let key = (fill, nb.len(), v);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
        let v = best.unwrap().2;
        let nb: Vec<usize> = work[v].iter().copied().collect();
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                work[nb[i]].insert(nb[j]);
                work[nb[j]].insert(nb[i]);
                chordal.add_edge(nb[i], nb[j]);
            }
        }
        let mut c = nb.clone();
        c.push(v);
        c.sort_unstable();
        if !cliques.iter().any(|k| c.iter().all(|x| k.contains(x))) {
            cliques.retain(|k| !k.iter().all(|x| c.contains(x)));
            cliques.push(c);
        }
        for &u in &nb {
            work[u].remove(&v);
        }
        work[v].clear();
        alive.remove(&v);
    }
    (chordal, cliques)
}

/// A clique tree with potentials. Variables are `0..card.len()`.
#[derive(Debug, Clone)]
pub struct JunctionTree {
    pub cliques: Vec<Vec<usize>>,
    /// Tree edges `(a, b)` with separator `cliques[a] ∩ cliques[b]`.
    pub edges: Vec<(usize, usize)>,
    pub card: Vec<usize>,
    pub potentials: Vec<Factor>,
    /// Calibrated clique beliefs after `propagate`.
    pub beliefs: Vec<Factor>,
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.contains(x)).collect()
}

/// Maximum-weight spanning tree over clique intersections (Kruskal; ties
/// broken by clique index). Disconnected parts are joined by empty separators.
pub fn build_jt(cliques: Vec<Vec<usize>>, card: &[usize]) -> JunctionTree {
    let k = cliques.len();
    let mut cand: Vec<(usize, usize, usize)> = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            cand.push((intersect(&cliques[a], &cliques[b]).len(), a, b));
        }
    }
    cand.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut root: Vec<usize> = (0..k).collect();
    fn find(r: &mut [usize], mut x: usize) -> usize {
        while r[x] != x {
            r[x] = r[r[x]];
            x = r[x];
        }
        x
    }
    let mut edges = Vec::new();
    for (_, a, b) in cand {
        let (ra, rb) = (find(&mut root, a), find(&mut root, b));
        if ra != rb {
            root[ra] = rb;
            edges.push((a, b));
        }
    }
    let potentials = cliques
        .iter()
        .map(|c| Factor::ones(c.clone(), c.iter().map(|&v| card[v]).collect()))
        .collect::<Vec<_>>();
    JunctionTree { beliefs: potentials.clone(), cliques, edges, card: card.to_vec(), potentials }
}

impl JunctionTree {
    /// Builds a tree for the domain graph induced by the factor scopes and
    /// multiplies every factor into one containing clique.
    pub fn from_factors(factors: &[Factor], card: &[usize]) -> Result<JunctionTree> {
        let ids = (0..card.len()).map(|i| alloc::format!("{i}")).collect();
        let mut g = UGraph::new(ids);
        for f in factors {
            for i in 0..f.vars.len() {
                for j in i + 1..f.vars.len() {
                    g.add_edge(f.vars[i], f.vars[j]);
                }
            }
        }
        let (_, cliques) = triangulate(&g);
        let mut jt = build_jt(cliques, card);
        jt.assign(factors)?;
        Ok(jt)
    }

    /// Multiplies each factor into the smallest clique containing its scope.
    pub fn assign(&mut self, factors: &[Factor]) -> Result<()> {
        for f in factors {
            let host = (0..self.cliques.len())
                .filter(|&c| f.vars.iter().all(|v| self.cliques[c].contains(v)))
                .min_by_key(|&c| (self.cliques[c].len(), c))
                .ok_or_else(|| Error::Structure("factor scope is not contained in any clique".into()))?;
            self.potentials[host].multiply_in(f)?;
        }
        Ok(())
    }

    pub fn max_clique_size(&self) -> usize {
        self.cliques.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.cliques.len()];
        for &(a, b) in &self.edges {
            nb[a].push(b);
            nb[b].push(a);
        }
        nb
    }

    /// Collect then distribute from clique 0. `evidence` pins variables to
    /// states; soft findings can be multiplied in as factors beforehand.
    pub fn propagate(&mut self, evidence: &[(usize, usize)]) -> Result<()> {
        let k = self.cliques.len();
        if k == 0 {
            return Ok(());
        }
        let mut pots = self.potentials.clone();
        for &(v, s) in evidence {
            let c = (0..k).find(|&c| self.cliques[c].contains(&v)).ok_or_else(|| Error::UnknownNode(alloc::format!("{v}")))?;
            pots[c] = pots[c].reduce_evidence(v, s)?;
        }
        let nb = self.neighbours();
        // DFS order from clique 0.
        let mut order = Vec::with_capacity(k);
        let mut parent = vec![usize::MAX; k];
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(c) = stack.pop() {
            order.push(c);
            for &d in nb[c].iter().rev() {
                if !seen[d] {
                    seen[d] = true;
                    parent[d] = c;
                    stack.push(d);
                }
            }
        }
        // msg[(from, to)] stored per directed edge.
        let mut msgs: alloc::collections::BTreeMap<(usize, usize), Factor> = alloc::collections::BTreeMap::new();
        let sep = |a: usize, b: usize| intersect(&self.cliques[a], &self.cliques[b]);
        let send = |from: usize, to: usize, msgs: &alloc::collections::BTreeMap<(usize, usize), Factor>| -> Result<Factor> {
            let mut f = pots[from].clone();
            for &d in &nb[from] {
                if d != to {
                    if let Some(m) = msgs.get(&(d, from)) {
                        f.multiply_in(m)?;
                    }
                }
            }
            let mut m = f.marginalize(&sep(from, to))?;
            m.max_normalize();
            Ok(m)
        };
        for &c in order.iter().rev() {
            if parent[c] != usize::MAX {
                let m = send(c, parent[c], &msgs)?;
                msgs.insert((c, parent[c]), m);
            }
        }
        for &c in &order {
            for &d in &nb[c] {
                if parent[d] == c {
                    let m = send(c, d, &msgs)?;
                    msgs.insert((c, d), m);
                }
            }
        }
        let mut beliefs = Vec::with_capacity(k);
        for c in 0..k {
            let mut b = pots[c].clone();
            for &d in &nb[c] {
                b.multiply_in(&msgs[&(d, c)])?;
            }
            beliefs.push(b.normalize()?);
        }
        self.beliefs = beliefs;
        Ok(())
    }

    /// Normalized marginal of `v` from the smallest clique containing it.
    pub fn marginal(&self, v: usize) -> Result<Vec<f64>> {
        let c = (0..self.cliques.len())
            .filter(|&c| self.cliques[c].contains(&v))
            .min_by_key(|&c| (self.cliques[c].len(), c))
            .ok_or_else(|| Error::UnknownNode(alloc::format!("{v}")))?;
        Ok(self.beliefs[c].marginalize(&[v])?.normalize()?.table)
    }

    /// Joint belief over `vars`, which must share a clique.
    pub fn joint(&self, vars: &[usize]) -> Result<Factor> {
        let c = (0..self.cliques.len())
            .filter(|&c| vars.iter().all(|v| self.cliques[c].contains(v)))
            .min_by_key(|&c| (self.cliques[c].len(), c))
            .ok_or_else(|| Error::Structure("variables do not share a clique".into()))?;
        self.beliefs[c].marginalize(vars)?.normalize()
    }

    /// Largest disagreement between neighbouring cliques on their separators.
    pub fn calibration_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &(a, b) in &self.edges {
            let s = intersect(&self.cliques[a], &self.cliques[b]);
            let ma = self.beliefs[a].marginalize(&s)?;
            let mb = self.beliefs[b].marginalize(&s)?;
            worst = worst.max(ma.max_abs_diff(&mb)?);
        }
        Ok(worst)
    }

    /// Every variable's containing cliques induce a connected subtree.
    pub fn running_intersection(&self) -> bool {
        let nb = self.neighbours();
        for v in 0..self.card.len() {
            let holders: Vec<usize> = (0..self.cliques.len()).filter(|&c| self.cliques[c].contains(&v)).collect();
            if holders.len() <= 1 {
                continue;
            }
            let mut seen = BTreeSet::new();
            let mut stack = vec![holders[0]];
            while let Some(c) = stack.pop() {
                if seen.insert(c) {
                    for &d in &nb[c] {
                        if self.cliques[d].contains(&v) {
                            stack.push(d);
                        }
                    }
                }
            }
            if seen.len() != holders.len() {
                return false;
            }
        }
        true
    }
}

/// Exact marginals of the product of `factors` under hard evidence.
pub fn jt_marginals(factors: &[Factor], card: &[usize], evidence: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
    let mut jt = JunctionTree::from_factors(factors, card)?;
    jt.propagate(evidence)?;
    (0..card.len()).map(|v| jt.marginal(v)).collect()
}

/// Brute-force marginals by enumerating the full joint. Guarded to at most
/// `2^22` joint states.
pub fn enumerate_marginals(factors: &[Factor], card: &[usize], evidence: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
    let total: usize = card.iter().try_fold(1usize, |a, &c| a.checked_mul(c)).unwrap_or(usize::MAX);
    if total > 1 << 22 {
        return Err(Error::TooLarge(alloc::format!("{total} joint states")));
    }
    let n = card.len();
    let mut out: Vec<Vec<f64>> = card.iter().map(|&c| vec![0.0; c]).collect();
    let mut idx = vec![0usize; n];
    let strides: Vec<Vec<usize>> = factors
        .iter()
        .map(|f| {
            let mut s = vec![0; f.vars.len()];
            let mut acc = 1;
            for i in (0..f.vars.len()).rev() {
                s[i] = acc;
                acc *= f.card[i];
            }
            s
        })
        .collect();
    for _ in 0..total {
        if evidence.iter().all(|&(v, s)| idx[v] == s) {
            let mut p = 1.0;
            for (f, s) in factors.iter().zip(&strides) {
                let off: usize = f.vars.iter().zip(s).map(|(v, st)| idx[*v] * st).sum();
                p *= f.table[off];
            }
            for v in 0..n {
                out[v][idx[v]] += p;
            }
        }
        for v in (0..n).rev() {
            idx[v] += 1;
            if idx[v] < card[v] {
                break;
            }
            idx[v] = 0;
        }
    }
    for m in &mut out {
        let s: f64 = m.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InconsistentEvidence);
        }
        m.iter_mut().for_each(|x| *x /= s);
    }
    Ok(out)
}
