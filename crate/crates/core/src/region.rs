//! Region graphs: cluster-variation construction, counting numbers, and the
//! triplet region construction (TRC) for full binary factorized graphs.
//!
//! Variables are `usize` handles; for graphs built from a network they are
//! node indices into `Network::nodes`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{BfgAnnotation, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntersectionClass {
    /// An original and an intermediate variable.
    Hybrid,
    /// Two original variables other than the root pair.
    Cognate,
    /// The pair of the two lowest-index originals.
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionKind {
    /// Outer region of a generic construction.
    Outer,
    /// Child plus its two parents.
    Primary,
    /// A moral pair plus one shared original parent.
    Interaction,
    /// Generic lower-level region.
    Inner,
    /// Lower-level region of a TRC graph.
    Intersection(IntersectionClass),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Sorted variable handles.
    pub label: Vec<usize>,
    pub level: usize,
    pub counting: i64,
    pub kind: RegionKind,
    /// Label before cognate pruning, if pruned.
    pub pruned_from: Option<Vec<usize>>,
}

/// A region DAG; `edges` are `(parent, child)` region indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    pub regions: Vec<Region>,
    pub edges: Vec<(usize, usize)>,
    pub nvars: usize,
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.contains(x))
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.contains(x)).collect()
}

impl RegionGraph {
    pub fn parents(&self, r: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == r).map(|e| e.0).collect()
    }

    pub fn children(&self, r: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == r).map(|e| e.1).collect()
    }

    pub fn level_count(&self, level: usize) -> usize {
        self.regions.iter().filter(|r| r.level == level).count()
    }

    /// Regions in an order where every parent precedes its children.
    pub fn topo(&self) -> Result<Vec<usize>> {
        let n = self.regions.len();
        let mut indeg = vec![0usize; n];
        for &(_, c) in &self.edges {
            indeg[c] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&r| indeg[r] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(&r) = ready.iter().next() {
            ready.remove(&r);
            out.push(r);
            for &(p, c) in &self.edges {
                if p == r {
                    indeg[c] -= 1;
                    if indeg[c] == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        if out.len() != n {
            return Err(Error::Structure("region graph has a cycle".into()));
        }
        Ok(out)
    }

    fn ancestors(&self, r: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = self.parents(r);
        while let Some(p) = stack.pop() {
            if seen.insert(p) {
                stack.extend(self.parents(p));
            }
        }
        seen
    }

    /// Recomputes `c_R = 1 − Σ_{ancestors} c_A` in topological order.
    pub fn recompute_counting_numbers(&mut self) -> Result<()> {
        for r in self.topo()? {
            let s: i64 = self.ancestors(r).iter().map(|&a| self.regions[a].counting).sum();
            self.regions[r].counting = 1 - s;
        }
        Ok(())
    }

    /// Counting numbers per region.
    pub fn counting_numbers(&self) -> Vec<i64> {
        self.regions.iter().map(|r| r.counting).collect()
    }

    /// `Σ c_R` over regions containing each variable.
    pub fn variable_counts(&self) -> Vec<i64> {
        let mut out = vec![0i64; self.nvars];
        for r in &self.regions {
            for &v in &r.label {
                out[v] += r.counting;
            }
        }
        out
    }

    /// Checks the structural region-graph conditions: acyclic, child labels
    /// inside parent labels, every variable covered by a top-level region with
    /// a connected per-variable subgraph, and all variable counts equal one.
    pub fn validate(&self) -> Result<()> {
        self.topo()?;
        for &(p, c) in &self.edges {
            if !is_subset(&self.regions[c].label, &self.regions[p].label) {
                return Err(Error::Structure(format!("region {c} is not inside its parent {p}")));
            }
        }
        for v in 0..self.nvars {
            let holders: Vec<usize> = (0..self.regions.len()).filter(|&r| self.regions[r].label.contains(&v)).collect();
            if !holders.iter().any(|&r| self.regions[r].level == 1) {
                return Err(Error::Structure(format!("variable {v} is not in any top-level region")));
            }
            let mut seen = BTreeSet::new();
            let mut stack = vec![holders[0]];
            while let Some(r) = stack.pop() {
                if seen.insert(r) {
                    for &(p, c) in &self.edges {
                        if p == r && holders.contains(&c) {
                            stack.push(c);
                        }
                        if c == r && holders.contains(&p) {
                            stack.push(p);
                        }
                    }
                }
            }
            if seen.len() != holders.len() {
                return Err(Error::Structure(format!("regions holding variable {v} are not connected")));
            }
        }
        let counts = self.variable_counts();
        if let Some(v) = counts.iter().position(|&c| c != 1) {
            return Err(Error::Structure(format!("variable {v} has counting number {}", counts[v])));
        }
        Ok(())
    }
}

/// Cluster-variation construction: repeatedly intersect the regions of the
/// last level, keeping intersections that are not inside another one, until
/// no new regions appear. Each region is linked to its minimal supersets.
pub fn cvm(outer: &[Vec<usize>], nvars: usize) -> Result<RegionGraph> {
    let outer: Vec<Vec<usize>> = outer.iter().map(|o| sorted(o.clone())).collect();
    for (i, a) in outer.iter().enumerate() {
        for (j, b) in outer.iter().enumerate() {
            if i != j && is_subset(a, b) {
                return Err(Error::Structure("an outer region lies inside another".into()));
            }
        }
    }
    for v in 0..nvars {
        if !outer.iter().any(|o| o.contains(&v)) {
            return Err(Error::Structure(format!("variable {v} is not covered by an outer region")));
        }
    }
    let mut regions: Vec<Region> = outer
        .iter()
        .map(|l| Region { label: l.clone(), level: 1, counting: 1, kind: RegionKind::Outer, pruned_from: None })
        .collect();
    let mut last: Vec<Vec<usize>> = outer.clone();
    let mut level = 1;
    loop {
        let mut ints: Vec<Vec<usize>> = Vec::new();
        for i in 0..last.len() {
            for j in i + 1..last.len() {
                let s = intersect(&last[i], &last[j]);
                if !s.is_empty() && !ints.contains(&s) {
                    ints.push(s);
                }
            }
        }
        let maximal: Vec<Vec<usize>> = ints
            .iter()
            .filter(|s| !ints.iter().any(|t| t != *s && is_subset(s, t)))
            .filter(|s| !regions.iter().any(|r| &&r.label == s))
            .cloned()
            .collect();
        if maximal.is_empty() {
            break;
        }
        level += 1;
        for l in &maximal {
            regions.push(Region { label: l.clone(), level, counting: 0, kind: RegionKind::Inner, pruned_from: None });
        }
        last = maximal;
    }
    let mut edges = Vec::new();
    for c in 0..regions.len() {
        let sup: Vec<usize> =
            (0..regions.len()).filter(|&p| p != c && is_subset(&regions[c].label, &regions[p].label) && regions[p].label != regions[c].label).collect();
        for &p in &sup {
            let direct = !sup.iter().any(|&q| q != p && is_subset(&regions[q].label, &regions[p].label) && regions[q].label != regions[p].label);
            if direct {
                edges.push((p, c));
            }
        }
    }
    let mut rg = RegionGraph { regions, edges, nvars };
    rg.recompute_counting_numbers()?;
    Ok(rg)
}

/// TRC output plus the intermediate sets it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Trc {
    pub graph: RegionGraph,
    /// Primary triplets, each `[parent, parent, child]`.
    pub primary: Vec<[usize; 3]>,
    /// Moral pairs that include an intermediate.
    pub moral_edges: Vec<(usize, usize)>,
    pub interaction: Vec<[usize; 3]>,
    /// Region indices of pruned cognate intersections.
    pub pruned: Vec<usize>,
    /// Region index of the root primary triplet.
    pub root: usize,
    /// Graph before pruning (labels and counting numbers as constructed).
    pub initial: RegionGraph,
}

/// Original-variable rank used by the TRC rules.
struct Ranks {
    orig: Vec<Option<usize>>,
}

impl Ranks {
    fn new(net: &Network, ann: &BfgAnnotation) -> Ranks {
        let orig = net.nodes.iter().map(|n| ann.original_index(&n.id)).collect();
        Ranks { orig }
    }
    fn is_orig(&self, v: usize) -> bool {
        self.orig[v].is_some()
    }
}

/// Primary triplets (one per two-parent node) and moral pairs that include
/// an intermediate. Requires `n > 4` originals.
pub fn identify_primary_triplets(net: &Network, ann: &BfgAnnotation) -> Result<(Vec<[usize; 3]>, Vec<(usize, usize)>)> {
    let ranks = Ranks::new(net, ann);
    let mut primary = Vec::new();
    let mut moral = Vec::new();
    for (i, n) in net.nodes.iter().enumerate() {
        match n.parents.len() {
            0 | 1 => {}
            2 => {
                let a = net.index(&n.parents[0]).unwrap();
                let b = net.index(&n.parents[1]).unwrap();
                primary.push([a, b, i]);
                let linked = net.nodes[a].parents.contains(&n.parents[1]) || net.nodes[b].parents.contains(&n.parents[0]);
                if !linked && (!ranks.is_orig(a) || !ranks.is_orig(b)) {
                    moral.push((a, b));
                }
            }
            k => return Err(Error::Structure(format!("node `{}` has {k} parents; not a full-BFG", n.id))),
        }
    }
    Ok((primary, moral))
}

/// One interaction triplet per moral pair: the pair plus a common original
/// parent. When the common set is the root pair, the one held by fewer
/// top-level regions so far is used (ties take the lowest-index original).
pub fn identify_interaction_triplets(
    net: &Network,
    ann: &BfgAnnotation,
    primary: &[[usize; 3]],
    moral: &[(usize, usize)],
) -> Result<Vec<[usize; 3]>> {
    let ranks = Ranks::new(net, ann);
    let mut level1: Vec<Vec<usize>> = primary.iter().map(|t| sorted(t.to_vec())).collect();
    let mut out = Vec::new();
    for &(p0, p1) in moral {
        let pa = |v: usize| -> Vec<usize> { net.nodes[v].parents.iter().map(|p| net.index(p).unwrap()).collect() };
        let common: Vec<usize> = pa(p0).into_iter().filter(|x| pa(p1).contains(x) && ranks.is_orig(*x)).collect();
        let pick = match common.len() {
            0 => {
                return Err(Error::Structure(format!(
                    "moral pair ({}, {}) has no common original parent",
                    net.nodes[p0].id, net.nodes[p1].id
                )))
            }
            1 => common[0],
            _ => {
                let mut c = common.clone();
                c.sort_by_key(|&v| ranks.orig[v]);
                let (x1, x2) = (c[0], c[1]);
                let count = |v: usize| level1.iter().filter(|l| l.contains(&v)).count();
                if count(x1) > count(x2) {
                    x2
                } else {
                    x1
                }
            }
        };
        let t = [p0, p1, pick];
        level1.push(sorted(t.to_vec()));
        out.push(t);
    }
    Ok(out)
}

/// Classifies a two-level graph's lower regions.
pub fn classify_intersections(rg: &RegionGraph, net: &Network, ann: &BfgAnnotation) -> Result<Vec<(usize, IntersectionClass)>> {
    let ranks = Ranks::new(net, ann);
    let root_pair = {
        let mut firsts: Vec<usize> = (0..net.len()).filter(|&v| ranks.orig[v].map_or(false, |k| k <= 2)).collect();
        firsts.sort_unstable();
        firsts
    };
    let mut out = Vec::new();
    for (i, r) in rg.regions.iter().enumerate() {
        if r.level != 2 {
            continue;
        }
        let label = r.pruned_from.as_ref().unwrap_or(&r.label);
        let origs = label.iter().filter(|v| ranks.is_orig(**v)).count();
        let class = if label.len() == 2 && origs == 1 {
            IntersectionClass::Hybrid
        } else if label.len() == 2 && origs == 2 && *label == root_pair {
            IntersectionClass::Root
        } else if label.len() == 2 && origs == 2 {
            IntersectionClass::Cognate
        } else {
            return Err(Error::Structure(format!("intersection {label:?} matches no class")));
        };
        out.push((i, class));
    }
    Ok(out)
}

/// Builds the initial two-level graph: top level = triplets (duplicates
/// merged), lower level = maximal pairwise intersections, each linked to every
/// triplet containing it.
fn rg_init(net: &Network, ann: &BfgAnnotation, primary: &[[usize; 3]], interaction: &[[usize; 3]]) -> Result<RegionGraph> {
    let mut regions: Vec<Region> = Vec::new();
    for (t, kind) in primary.iter().map(|t| (t, RegionKind::Primary)).chain(interaction.iter().map(|t| (t, RegionKind::Interaction))) {
        let label = sorted(t.to_vec());
        if !regions.iter().any(|r| r.label == label) {
            regions.push(Region { label, level: 1, counting: 1, kind, pruned_from: None });
        }
    }
    let top = regions.len();
    let mut ints: Vec<Vec<usize>> = Vec::new();
    for i in 0..top {
        for j in i + 1..top {
            let s = intersect(&regions[i].label, &regions[j].label);
            if !s.is_empty() && !ints.contains(&s) {
                ints.push(s);
            }
        }
    }
    let maximal: Vec<Vec<usize>> = ints.iter().filter(|s| !ints.iter().any(|t| t != *s && is_subset(s, t))).cloned().collect();
    let mut edges = Vec::new();
    for s in maximal {
        let id = regions.len();
        regions.push(Region { label: s.clone(), level: 2, counting: 0, kind: RegionKind::Inner, pruned_from: None });
        for p in 0..top {
            if is_subset(&s, &regions[p].label) {
                edges.push((p, id));
            }
        }
    }
    let mut rg = RegionGraph { regions, edges, nvars: net.len() };
    rg.recompute_counting_numbers()?;
    for (i, class) in classify_intersections(&rg, net, ann)? {
        rg.regions[i].kind = RegionKind::Intersection(class);
    }
    Ok(rg)
}

/// Prunes cognate intersections `X_i X_j` (i < j) to `X_j`, in original index
/// order of `X_i`, while `X_i`'s variable count is below one. Parents and
/// counting numbers are kept.
pub fn prune_cognate(rg: &RegionGraph, net: &Network, ann: &BfgAnnotation) -> Result<(RegionGraph, Vec<usize>)> {
    let ranks = Ranks::new(net, ann);
    let mut g = rg.clone();
    let mut pruned = Vec::new();
    let mut origs: Vec<usize> = (0..net.len()).filter(|&v| ranks.is_orig(v)).collect();
    origs.sort_by_key(|&v| ranks.orig[v]);
    let cap = g.regions.len() + 1;
    for _ in 0..cap {
        let mut changed = false;
        for &v in &origs {
            let cognates: Vec<usize> = (0..g.regions.len())
                .filter(|&r| {
                    g.regions[r].kind == RegionKind::Intersection(IntersectionClass::Cognate)
                        && g.regions[r].pruned_from.is_none()
                        && g.regions[r].label.contains(&v)
                        && g.regions[r].label.iter().all(|&u| u == v || ranks.orig[u] > ranks.orig[v])
                })
                .collect();
            for r in cognates {
                if g.variable_counts()[v] >= 1 {
                    break;
                }
                let old = g.regions[r].label.clone();
                g.regions[r].label = old.iter().copied().filter(|&u| u != v).collect();
                g.regions[r].pruned_from = Some(old);
                pruned.push(r);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let counts = g.variable_counts();
    if let Some(v) = (0..net.len()).find(|&v| counts[v] != 1) {
        return Err(Error::Structure(format!("pruning left `{}` with counting number {}", net.nodes[v].id, counts[v])));
    }
    Ok((g, pruned))
}

/// Triplet region construction for a full-BFG. With four or fewer originals
/// the result is a single region holding every variable.
pub fn trc(net: &Network, ann: &BfgAnnotation) -> Result<Trc> {
    let n = ann.originals.len();
    if n <= 4 {
        let label: Vec<usize> = (0..net.len()).collect();
        let g = RegionGraph {
            regions: vec![Region { label, level: 1, counting: 1, kind: RegionKind::Outer, pruned_from: None }],
            edges: Vec::new(),
            nvars: net.len(),
        };
        return Ok(Trc { initial: g.clone(), graph: g, primary: Vec::new(), moral_edges: Vec::new(), interaction: Vec::new(), pruned: Vec::new(), root: 0 });
    }
    let (primary, moral) = identify_primary_triplets(net, ann)?;
    let interaction = identify_interaction_triplets(net, ann, &primary, &moral)?;
    let initial = rg_init(net, ann, &primary, &interaction)?;
    let (graph, pruned) = prune_cognate(&initial, net, ann)?;
    let firsts: Vec<usize> = ann.originals.iter().take(3).map(|id| net.index(id).unwrap()).collect();
    let root = graph
        .regions
        .iter()
        .position(|r| r.level == 1 && firsts.iter().all(|v| r.label.contains(v)))
        .ok_or_else(|| Error::Structure("no root triplet".into()))?;
    graph.validate()?;
    Ok(Trc { graph, primary, moral_edges: moral, interaction, pruned, root, initial })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralCounts {
    pub level1: usize,
    pub intersections: usize,
    pub edges: usize,
    pub pruned: usize,
}

impl StructuralCounts {
    /// Expected counts for a κ_n graph.
    pub fn expected(n: usize) -> StructuralCounts {
        let m = (n - 2) * (n - 2);
        StructuralCounts { level1: m, intersections: m + 1, edges: (n - 2) * (5 * n - 11) / 2, pruned: n - 2 }
    }
}

pub fn structural_counts(t: &Trc) -> StructuralCounts {
    StructuralCounts {
        level1: t.graph.level_count(1),
        intersections: t.graph.level_count(2),
        edges: t.graph.edges.len(),
        pruned: t.pruned.len(),
    }
}

/// Entropy balance under uniform beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxentReport {
    /// `Σ_R c_R H(uniform_R)` in nats.
    pub region_sum: f64,
    /// `Σ_i H(uniform_i)` in nats.
    pub variable_sum: f64,
    pub per_region: Vec<f64>,
}

impl MaxentReport {
    pub fn holds(&self) -> bool {
        (self.region_sum - self.variable_sum).abs() <= 1e-9 * self.variable_sum.abs().max(1.0)
    }
}

/// Compares the region entropy sum with the variable entropy sum when every
/// belief is uniform over `card` states.
pub fn maxent_check(rg: &RegionGraph, card: &[usize]) -> MaxentReport {
    let h = |v: usize| crate::math::ln(card[v] as f64);
    let per_region: Vec<f64> = rg.regions.iter().map(|r| r.counting as f64 * r.label.iter().map(|&v| h(v)).sum::<f64>()).collect();
    MaxentReport { region_sum: per_region.iter().sum(), variable_sum: (0..rg.nvars).map(h).sum(), per_region }
}

/// Undirected cluster graph view of a two-level region graph.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinGraph {
    /// Top-level region indices, in region order.
    pub clusters: Vec<usize>,
    /// `(cluster a, cluster b, separator label, label before pruning)`.
    pub separators: Vec<(usize, usize, Vec<usize>, Option<Vec<usize>>)>,
}

/// Each lower region with `k` parents becomes a chain of `k − 1` separators
/// linking its parents in region order.
pub fn rg_to_join_graph(rg: &RegionGraph) -> JoinGraph {
    let clusters: Vec<usize> = (0..rg.regions.len()).filter(|&r| rg.regions[r].level == 1).collect();
    let mut separators = Vec::new();
    for (r, reg) in rg.regions.iter().enumerate() {
        if reg.level != 2 {
            continue;
        }
        let ps = rg.parents(r);
        for w in ps.windows(2) {
            separators.push((w[0], w[1], reg.label.clone(), reg.pruned_from.clone()));
        }
    }
    JoinGraph { clusters, separators }
}

/// Renders a region graph as text: one line per region, then edges.
pub fn describe(rg: &RegionGraph, names: &[String]) -> String {
    let mut s = String::new();
    let lab = |l: &[usize]| l.iter().map(|&v| names[v].as_str()).collect::<Vec<_>>().join(",");
    for (i, r) in rg.regions.iter().enumerate() {
        let pruned = r.pruned_from.as_ref().map(|p| format!(" pruned_from={{{}}}", lab(p))).unwrap_or_default();
        s.push_str(&format!("region {i} level={} c={} kind={:?} {{{}}}{pruned}\n", r.level, r.counting, r.kind, lab(&r.label)));
    }
    for (p, c) in &rg.edges {
        s.push_str(&format!("edge {p} -> {c}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{binary_factorize, linear_gaussian_dccd};

    fn kappa_bfg(n: usize) -> (Network, BfgAnnotation) {
        let w: Vec<Vec<f64>> = (0..n).map(|k| vec![0.5; k]).collect();
        let net = linear_gaussian_dccd(&w, &vec![0.0; n], &vec![1.0; n]).unwrap();
        binary_factorize(&net).unwrap()
    }

    #[test]
    fn cvm_on_tree_triplets_is_two_level() {
        // E1 X1 X2 | E2 X3 X4 | E1 E2 X5 with E1=0,E2=1,X1..X5=2..6
        let rg = cvm(&[vec![0, 2, 3], vec![1, 4, 5], vec![0, 1, 6]], 7).unwrap();
        assert_eq!(rg.level_count(1), 3);
        assert_eq!(rg.level_count(2), 2);
        assert!(rg.regions.iter().filter(|r| r.level == 2).all(|r| r.counting == -1));
        assert!(rg.variable_counts().iter().all(|&c| c == 1));
        let single = cvm(&[vec![0, 1]], 2).unwrap();
        assert_eq!(single.regions.len(), 1);
        assert_eq!(single.regions[0].counting, 1);
    }

    #[test]
    fn kappa5_construction() {
        let (net, ann) = kappa_bfg(5);
        let t = trc(&net, &ann).unwrap();
        assert_eq!(t.primary.len(), 6);
        assert_eq!(t.moral_edges.len(), 3);
        assert_eq!(t.interaction.len(), 3);
        assert_eq!(structural_counts(&t), StructuralCounts::expected(5));
        assert!(maxent_check(&t.graph, &[2; 8]).holds());
        assert!(!maxent_check(&t.initial, &[2; 8]).holds());
    }

    #[test]
    fn small_dimensions_use_one_region() {
        let (net, ann) = kappa_bfg(4);
        let t = trc(&net, &ann).unwrap();
        assert_eq!(t.graph.regions.len(), 1);
        assert_eq!(t.graph.regions[0].label.len(), 5);
    }
}
#[cfg(test)]
mod kappa_family {
    use super::*;
    use crate::model::{binary_factorize, linear_gaussian_dccd};

    fn cognate_c(t: &Trc, names: &[String], a: &str, b: &str) -> i64 {
        t.initial
            .regions
            .iter()
            .find(|r| r.level == 2 && r.label.len() == 2 && names[r.label[0]] == a && names[r.label[1]] == b)
            .map(|r| r.counting)
            .unwrap()
    }

    #[test]
    fn counts_and_cognate_numbers_for_n_5_to_12() {
        for n in 5..=12 {
            let w: Vec<Vec<f64>> = (0..n).map(|k| vec![0.5; k]).collect();
            let net = linear_gaussian_dccd(&w, &vec![0.0; n], &vec![1.0; n]).unwrap();
            let (b, a) = binary_factorize(&net).unwrap();
            let t = trc(&b, &a).unwrap();
            assert_eq!(structural_counts(&t), StructuralCounts::expected(n), "n={n}");
            assert!(t.graph.variable_counts().iter().all(|&c| c == 1));
            let names = b.ids();
            let c = |x: &str, y: &str| cognate_c(&t, &names, x, y);
            // The root pair balances the two cognates that share X3.
            assert_eq!(c("X1", "X2"), c("X1", "X3") + c("X2", "X3"), "n={n}");
            assert_eq!(c("X1", "X2"), 3 - n as i64);
            for j in 3..n - 1 {
                let (x, y) = (alloc::format!("X{j}"), alloc::format!("X{}", j + 1));
                assert_eq!(c(&x, &y), j as i64 + 1 - n as i64, "n={n} j={j}");
            }
            for (r, class) in classify_intersections(&t.graph, &b, &a).unwrap() {
                if class == IntersectionClass::Hybrid {
                    assert_eq!(t.graph.regions[r].counting, -1);
                }
            }
        }
    }
}
