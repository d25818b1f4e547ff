//! Network representation and structural transforms: topological ordering,
//! d-separation, densification into a complete chain DAG, binary
//! factorization into a full BFG, and moralization.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{bf_expression, Expr};
use crate::factor::Factor;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Discrete { states: Vec<String> },
    /// Declared support; infinite bounds are truncated by discretization.
    Continuous { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cpd {
    Expr(Expr),
    /// One row per parent configuration (first parent slowest); each row is a
    /// distribution over the child's states.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub parents: Vec<String>,
    pub cpd: Cpd,
}

impl Node {
    pub fn continuous(id: &str, parents: &[&str], cpd: Expr) -> Node {
        Node {
            id: id.into(),
            kind: NodeKind::Continuous { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpd: Cpd::Expr(cpd),
        }
    }

    pub fn discrete(id: &str, states: &[&str], parents: &[&str], table: Vec<f64>) -> Node {
        Node {
            id: id.into(),
            kind: NodeKind::Discrete { states: states.iter().map(|s| s.to_string()).collect() },
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpd: Cpd::Table(table),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, NodeKind::Discrete { .. })
    }

    pub fn states(&self) -> Option<&[String]> {
        match &self.kind {
            NodeKind::Discrete { states } => Some(states),
            _ => None,
        }
    }
}

/// A directed acyclic graph of nodes; edges are implied by `parents`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<Node>,
}

impl Network {
    /// Builds and validates a network.
    pub fn new(nodes: Vec<Node>) -> Result<Network> {
        let net = Network { nodes };
        net.validate()?;
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn node(&self, id: &str) -> Result<&Node> {
        self.nodes.iter().find(|n| n.id == id).ok_or_else(|| Error::UnknownNode(id.into()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    pub fn children(&self, id: &str) -> Vec<String> {
        self.nodes.iter().filter(|n| n.parents.iter().any(|p| p == id)).map(|n| n.id.clone()).collect()
    }

    /// Parent→child pairs in node declaration order.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for n in &self.nodes {
            for p in &n.parents {
                out.push((p.clone(), n.id.clone()));
            }
        }
        out
    }

    pub fn state_count(&self, id: &str) -> Result<usize> {
        Ok(self.node(id)?.states().map(|s| s.len()).unwrap_or(0))
    }

    /// One factor per node over `parents ++ [node]`, variables numbered by
    /// node index. Every node must be discrete.
    pub fn table_factors(&self) -> Result<(Vec<Factor>, Vec<usize>)> {
        let card: Vec<usize> = self
            .nodes
            .iter()
            .map(|n| n.states().map(|s| s.len()).ok_or_else(|| Error::InvalidModel(format!("`{}` is not discrete", n.id))))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let Cpd::Table(t) = &n.cpd else {
                return Err(Error::InvalidModel(format!("`{}` has no table", n.id)));
            };
            let mut vars: Vec<usize> = n.parents.iter().map(|p| self.index(p).ok_or_else(|| Error::UnknownNode(p.clone()))).collect::<Result<_>>()?;
            vars.push(i);
            let c = vars.iter().map(|&v| card[v]).collect();
            out.push(Factor::new(vars, c, t.clone())?);
        }
        Ok((out, card))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                return Err(Error::InvalidModel(format!("duplicate node id `{}`", n.id)));
            }
        }
        for n in &self.nodes {
            for p in &n.parents {
                if !seen.contains(p.as_str()) {
                    return Err(Error::UnknownNode(p.clone()));
                }
            }
            match (&n.kind, &n.cpd) {
                (NodeKind::Discrete { states }, _) if states.is_empty() => {
                    return Err(Error::InvalidModel(format!("discrete node `{}` has no states", n.id)));
                }
                (NodeKind::Continuous { lo, hi }, _) if !(lo <= hi) => {
                    return Err(Error::InvalidModel(format!("continuous node `{}` has an empty support", n.id)));
                }
                (NodeKind::Continuous { .. }, Cpd::Table(_)) => {
                    return Err(Error::InvalidModel(format!("continuous node `{}` cannot carry a table", n.id)));
                }
                (NodeKind::Discrete { states }, Cpd::Table(t)) => {
                    let mut rows = 1usize;
                    for p in &n.parents {
                        let pn = self.node(p)?;
                        match pn.states() {
                            Some(s) => rows *= s.len(),
                            None => {
                                return Err(Error::InvalidModel(format!(
                                    "table node `{}` has continuous parent `{p}`",
                                    n.id
                                )))
                            }
                        }
                    }
                    if t.len() != rows * states.len() {
                        return Err(Error::InvalidModel(format!(
                            "table of `{}` has {} entries, expected {}",
                            n.id,
                            t.len(),
                            rows * states.len()
                        )));
                    }
                    for row in t.chunks(states.len()) {
                        let s: f64 = row.iter().sum();
                        if row.iter().any(|x| !(*x >= 0.0)) || (s - 1.0).abs() > 1e-6 {
                            return Err(Error::InvalidModel(format!("table row of `{}` is not a distribution", n.id)));
                        }
                    }
                }
                (_, Cpd::Expr(e)) => {
                    e.validate()?;
                    for v in e.vars() {
                        if !n.parents.contains(&v) {
                            return Err(Error::InvalidModel(format!(
                                "cpd of `{}` references `{v}` which is not a parent",
                                n.id
                            )));
                        }
                    }
                }
            }
        }
        topo_order(self)?;
        Ok(())
    }
}

/// Topological order with declaration-order tie-breaking.
pub fn topo_order(net: &Network) -> Result<Vec<String>> {
    let n = net.nodes.len();
    let idx: BTreeMap<&str, usize> = net.nodes.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect();
    let mut indeg = alloc::vec![0usize; n];
    let mut kids: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for (i, node) in net.nodes.iter().enumerate() {
        for p in &node.parents {
            let pi = *idx.get(p.as_str()).ok_or_else(|| Error::UnknownNode(p.clone()))?;
            indeg[i] += 1;
            kids[pi].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        out.push(net.nodes[i].id.clone());
        for &k in &kids[i] {
            indeg[k] -= 1;
            if indeg[k] == 0 {
                ready.insert(k);
            }
        }
    }
    if out.len() < n {
        // Any unplaced node with an unplaced parent lies on or downstream of a
        // cycle; walk parents until a node repeats to name a cycle edge.
        let placed: BTreeSet<&str> = out.iter().map(|s| s.as_str()).collect();
        let mut cur = (0..n).find(|&i| !placed.contains(net.nodes[i].id.as_str())).unwrap();
        let mut visited = BTreeSet::new();
        loop {
            visited.insert(cur);
            let p = net.nodes[cur]
                .parents
                .iter()
                .map(|p| idx[p.as_str()])
                .find(|&p| !placed.contains(net.nodes[p].id.as_str()))
                .unwrap();
            if visited.contains(&p) {
                return Err(Error::Cycle { from: net.nodes[p].id.clone(), to: net.nodes[cur].id.clone() });
            }
            cur = p;
        }
    }
    Ok(out)
}

/// True iff every trail between `u` and `v` is blocked by `z`.
pub fn d_separated(net: &Network, u: &str, v: &str, z: &[&str]) -> Result<bool> {
    for id in [u, v].iter().chain(z.iter()) {
        net.node(id)?;
    }
    let zset: BTreeSet<&str> = z.iter().copied().collect();
    // Ancestors of the conditioning set (inclusive) unblock converging nodes.
    let mut anc: BTreeSet<String> = BTreeSet::new();
    let mut stack: Vec<String> = z.iter().map(|s| s.to_string()).collect();
    while let Some(x) = stack.pop() {
        if anc.insert(x.clone()) {
            for p in &net.node(&x)?.parents {
                stack.push(p.clone());
            }
        }
    }
    let children: BTreeMap<String, Vec<String>> = net.nodes.iter().map(|n| (n.id.clone(), net.children(&n.id))).collect();
    // Direction flag: true = arrived from a child (moving up).
    let mut queue: VecDeque<(String, bool)> = VecDeque::new();
    let mut visited: BTreeSet<(String, bool)> = BTreeSet::new();
    queue.push_back((u.to_string(), true));
    while let Some((y, up)) = queue.pop_front() {
        if !visited.insert((y.clone(), up)) {
            continue;
        }
        let in_z = zset.contains(y.as_str());
        if !in_z && y == v {
            return Ok(false);
        }
        if up && !in_z {
            for p in &net.node(&y)?.parents {
                queue.push_back((p.clone(), true));
            }
            for c in &children[&y] {
                queue.push_back((c.clone(), false));
            }
        } else if !up {
            if !in_z {
                for c in &children[&y] {
                    queue.push_back((c.clone(), false));
                }
            }
            if anc.contains(&y) {
                for p in &net.node(&y)?.parents {
                    queue.push_back((p.clone(), true));
                }
            }
        }
    }
    Ok(true)
}

/// Continuous nodes in topological order.
fn continuous_order(net: &Network) -> Result<Vec<String>> {
    let order = topo_order(net)?;
    Ok(order.into_iter().filter(|id| !net.node(id).map(|n| n.is_discrete()).unwrap_or(true)).collect())
}

fn is_dccd_order(net: &Network, cont: &[String]) -> bool {
    cont.iter().enumerate().all(|(k, id)| {
        let n = net.node(id).unwrap();
        cont[..k].iter().all(|p| n.parents.contains(p))
    })
}

/// Rewrites `e` so that every predecessor in `preds` appears with weight zero
/// unless it already carries a weight.
fn absorb_zero_terms(node: &str, e: &Expr, preds: &[String]) -> Result<Expr> {
    let widen = |terms: Vec<(f64, String)>, bias: f64| -> Expr {
        let mut out: Vec<(f64, String)> = preds
            .iter()
            .map(|p| (terms.iter().filter(|t| &t.1 == p).map(|t| t.0).sum::<f64>(), p.clone()))
            .collect();
        for t in terms {
            if !preds.contains(&t.1) {
                out.push(t);
            }
        }
        Expr::from_linear(out, bias)
    };
    if preds.is_empty() {
        return Ok(e.clone());
    }
    match e {
        Expr::Partitioned { guard, cases } => {
            let mut out = Vec::new();
            for (l, c) in cases {
                out.push((l.clone(), absorb_zero_terms(node, c, preds)?));
            }
            Ok(Expr::Partitioned { guard: guard.clone(), cases: out })
        }
        Expr::Mixture { weights, components } => {
            let mut out = Vec::new();
            for c in components {
                out.push(absorb_zero_terms(node, c, preds)?);
            }
            Ok(Expr::Mixture { weights: weights.clone(), components: out })
        }
        Expr::Dist { kind, params } => {
            let dependent: Vec<usize> = (0..params.len()).filter(|&i| !params[i].vars().is_empty()).collect();
            let target = match dependent.len() {
                0 => 0,
                1 => dependent[0],
                _ if preds.len() <= 2 => return Ok(e.clone()),
                _ => {
                    return Err(Error::NonDecomposable {
                        node: node.into(),
                        reason: "several parameters depend on parents".into(),
                    })
                }
            };
            match params[target].linear_form() {
                Some((t, b)) => {
                    let mut p = params.clone();
                    p[target] = widen(t, b);
                    Ok(Expr::Dist { kind: *kind, params: p })
                }
                None if preds.len() <= 2 => Ok(e.clone()),
                None => Err(Error::NonDecomposable { node: node.into(), reason: "parameter is not linear in parents".into() }),
            }
        }
        other => match other.linear_form() {
            Some((t, b)) => Ok(widen(t, b)),
            None if preds.len() <= 2 => Ok(other.clone()),
            None => Err(Error::NonDecomposable { node: node.into(), reason: "nonlinear deterministic expression".into() }),
        },
    }
}

/// Densifies the continuous chain: every continuous node becomes a parent of
/// every later continuous node, with zero weights recorded in the CPDs.
pub fn to_dccd(net: &Network) -> Result<Network> {
    net.validate()?;
    let order = topo_order(net)?;
    let cont = continuous_order(net)?;
    for n in &net.nodes {
        if n.is_discrete() {
            if let Some(p) = n.parents.iter().find(|p| !net.node(p).map(|x| x.is_discrete()).unwrap_or(true)) {
                let _ = p;
                return Err(Error::UnsupportedConversion(n.id.clone()));
            }
        } else if let Cpd::Expr(e) = &n.cpd {
            let guards = e.guards();
            for p in &n.parents {
                if net.node(p)?.is_discrete() && !guards.contains(p) {
                    return Err(Error::UnsupportedConversion(n.id.clone()));
                }
            }
        }
    }
    let mut nodes = Vec::with_capacity(net.len());
    for id in &order {
        let n = net.node(id)?;
        if n.is_discrete() {
            nodes.push(n.clone());
            continue;
        }
        let k = cont.iter().position(|c| c == id).unwrap();
        let preds = &cont[..k];
        let cpd = match &n.cpd {
            Cpd::Expr(e) => Cpd::Expr(absorb_zero_terms(id, e, preds)?),
            Cpd::Table(_) => unreachable!("validated"),
        };
        let mut parents: Vec<String> = preds.to_vec();
        for p in &n.parents {
            if !parents.contains(p) {
                parents.push(p.clone());
            }
        }
        nodes.push(Node { id: id.clone(), kind: n.kind.clone(), parents, cpd });
    }
    Network::new(nodes)
}

/// Records which nodes of a binary factorized graph are intermediates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BfgAnnotation {
    /// Original nodes in index order X1..Xn.
    pub originals: Vec<String>,
    /// Intermediate nodes in creation order.
    pub intermediates: Vec<String>,
    /// Intermediate → (child it was created for, its two parents).
    pub origin: BTreeMap<String, (String, [String; 2])>,
    /// Whether the factorized network came from a complete chain DAG.
    pub from_dccd: bool,
}

impl BfgAnnotation {
    /// Builds an annotation for a network already in factorized form, given
    /// which nodes are intermediates.
    pub fn from_intermediates(net: &Network, intermediates: &[String]) -> Result<BfgAnnotation> {
        let order = topo_order(net)?;
        let originals: Vec<String> = order.iter().filter(|id| !intermediates.contains(id)).cloned().collect();
        let mut origin = BTreeMap::new();
        for e in intermediates {
            let node = net.node(e)?;
            let mut cur = e.clone();
            let mut steps = 0;
            let child = loop {
                let kids = net.children(&cur);
                if kids.len() != 1 || steps > net.len() {
                    break kids.first().cloned().unwrap_or_default();
                }
                if !intermediates.contains(&kids[0]) {
                    break kids[0].clone();
                }
                cur = kids[0].clone();
                steps += 1;
            };
            let pa = [
                node.parents.first().cloned().unwrap_or_default(),
                node.parents.get(1).cloned().unwrap_or_default(),
            ];
            origin.insert(e.clone(), (child, pa));
        }
        let from_dccd = originals.len() <= 2 || is_full_chain(net, &originals, intermediates);
        Ok(BfgAnnotation { originals, intermediates: intermediates.to_vec(), origin, from_dccd })
    }

    pub fn is_intermediate(&self, id: &str) -> bool {
        self.origin.contains_key(id)
    }

    /// 1-based original index of `id`, if original.
    pub fn original_index(&self, id: &str) -> Option<usize> {
        self.originals.iter().position(|o| o == id).map(|i| i + 1)
    }
}

fn is_full_chain(net: &Network, originals: &[String], intermediates: &[String]) -> bool {
    let ann = BfgAnnotation {
        originals: originals.to_vec(),
        intermediates: intermediates.to_vec(),
        origin: BTreeMap::new(),
        from_dccd: false,
    };
    originals.iter().enumerate().all(|(k, x)| originals[k + 1..].iter().all(|y| !intermediate_paths(net, &ann, x, y).is_empty()))
}

/// Rewrites every continuous node with three or more continuous parents into
/// a chain of pair blocks, absorbing parents in index order.
pub fn binary_factorize(net: &Network) -> Result<(Network, BfgAnnotation)> {
    net.validate()?;
    let order = topo_order(net)?;
    let cont = continuous_order(net)?;
    let from_dccd = is_dccd_order(net, &cont);
    let mut taken: BTreeSet<String> = net.nodes.iter().map(|n| n.id.clone()).collect();
    let mut counter = 0usize;
    let mut nodes = Vec::new();
    let mut intermediates = Vec::new();
    let mut origin = BTreeMap::new();
    for id in &order {
        let n = net.node(id)?;
        let cont_parents: Vec<String> =
            n.parents.iter().filter(|p| !net.node(p).map(|x| x.is_discrete()).unwrap_or(true)).cloned().collect();
        if cont_parents.len() <= 2 {
            nodes.push(n.clone());
            continue;
        }
        let expr = match &n.cpd {
            Cpd::Expr(e) => e,
            Cpd::Table(_) => {
                return Err(Error::NonDecomposable { node: id.clone(), reason: "table over three or more parents".into() })
            }
        };
        let mut fresh = || loop {
            counter += 1;
            let name = format!("E{counter}");
            if taken.insert(name.clone()) {
                break name;
            }
        };
        let split = bf_expression(expr, &cont, &mut fresh).map_err(|e| match e {
            Error::NonDecomposable { reason, .. } => Error::NonDecomposable { node: id.clone(), reason },
            other => other,
        })?;
        for (name, block) in &split.intermediates {
            let parents = block.vars();
            origin.insert(name.clone(), (id.clone(), [parents[0].clone(), parents[1].clone()]));
            intermediates.push(name.clone());
            nodes.push(Node {
                id: name.clone(),
                kind: NodeKind::Continuous { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
                parents,
                cpd: Cpd::Expr(block.clone()),
            });
        }
        let mut parents: Vec<String> = split.last.vars().into_iter().filter(|v| !expr.guards().contains(v)).collect();
        for p in &n.parents {
            if net.node(p)?.is_discrete() && !parents.contains(p) {
                parents.push(p.clone());
            }
        }
        nodes.push(Node { id: id.clone(), kind: n.kind.clone(), parents, cpd: Cpd::Expr(split.last) });
    }
    let out = Network::new(nodes)?;
    let originals: Vec<String> = cont.clone();
    Ok((out, BfgAnnotation { originals, intermediates, origin, from_dccd }))
}

/// κ_n = (n² − 3n + 6)/2 for n ≥ 3 (n itself below that).
pub fn kappa(n: usize) -> usize {
    if n < 3 {
        n
    } else {
        (n * n - 3 * n + 6) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooManyParents { node: String, count: usize },
    IntermediateChildren { node: String, count: usize },
    SharedIntermediate { from: String, to_a: String, to_b: String, shared: Vec<String> },
    MissingPath { from: String, to: String },
    NodeCount { expected: usize, found: usize },
}

/// Intermediates on every path from `from` to `to` that passes only through
/// intermediates. One entry per path.
fn intermediate_paths(net: &Network, ann: &BfgAnnotation, from: &str, to: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut stack: Vec<(String, Vec<String>)> = alloc::vec![(from.to_string(), Vec::new())];
    while let Some((cur, path)) = stack.pop() {
        for c in net.children(&cur) {
            if c == to {
                out.push(path.clone());
            } else if ann.intermediates.contains(&c) && !path.contains(&c) {
                let mut p = path.clone();
                p.push(c.clone());
                stack.push((c, p));
            }
        }
    }
    out
}

/// Lists every violation of the full-BFG definition.
pub fn verify_full_bfg(net: &Network, ann: &BfgAnnotation) -> Vec<Violation> {
    let mut v = Vec::new();
    for n in &net.nodes {
        let cont = n.parents.iter().filter(|p| !net.node(p).map(|x| x.is_discrete()).unwrap_or(true)).count();
        if cont > 2 {
            v.push(Violation::TooManyParents { node: n.id.clone(), count: cont });
        }
    }
    for e in &ann.intermediates {
        let k = net.children(e).len();
        if k != 1 {
            v.push(Violation::IntermediateChildren { node: e.clone(), count: k });
        }
    }
    let xs = &ann.originals;
    for i in 0..xs.len() {
        let mut paths: Vec<(usize, Vec<String>)> = Vec::new();
        for j in i + 1..xs.len() {
            let ps = intermediate_paths(net, ann, &xs[i], &xs[j]);
            if ps.is_empty() && ann.from_dccd {
                v.push(Violation::MissingPath { from: xs[i].clone(), to: xs[j].clone() });
            }
            for p in ps {
                paths.push((j, p));
            }
        }
        for a in 0..paths.len() {
            for b in a + 1..paths.len() {
                if paths[a].0 == paths[b].0 {
                    continue;
                }
                let shared: Vec<String> = paths[a].1.iter().filter(|x| paths[b].1.contains(x)).cloned().collect();
                if !shared.is_empty() {
                    let viol = Violation::SharedIntermediate {
                        from: xs[i].clone(),
                        to_a: xs[paths[a].0].clone(),
                        to_b: xs[paths[b].0].clone(),
                        shared,
                    };
                    if !v.contains(&viol) {
                        v.push(viol);
                    }
                }
            }
        }
    }
    if ann.from_dccd {
        let expected = kappa(xs.len());
        let found = xs.len() + ann.intermediates.len();
        if expected != found {
            v.push(Violation::NodeCount { expected, found });
        }
    }
    v
}

/// Undirected graph over node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct UGraph {
    pub ids: Vec<String>,
    pub adj: Vec<BTreeSet<usize>>,
}

impl UGraph {
    pub fn new(ids: Vec<String>) -> UGraph {
        let n = ids.len();
        UGraph { ids, adj: alloc::vec![BTreeSet::new(); n] }
    }
    pub fn index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }
    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|s| s.len()).sum::<usize>() / 2
    }
}

/// Moral graph: directed edges made undirected plus co-parent links.
pub fn moralize(net: &Network) -> UGraph {
    let mut g = UGraph::new(net.ids());
    for (i, n) in net.nodes.iter().enumerate() {
        let ps: Vec<usize> = n.parents.iter().filter_map(|p| net.index(p)).collect();
        for &p in &ps {
            g.add_edge(p, i);
        }
        for a in 0..ps.len() {
            for b in a + 1..ps.len() {
                g.add_edge(ps[a], ps[b]);
            }
        }
    }
    g
}

/// Co-parent pairs that were not already adjacent in the directed graph.
pub fn moral_edges(net: &Network) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for n in &net.nodes {
        for a in 0..n.parents.len() {
            for b in a + 1..n.parents.len() {
                let (pa, pb) = (&n.parents[a], &n.parents[b]);
                let linked = net.node(pa).map(|x| x.parents.contains(pb)).unwrap_or(false)
                    || net.node(pb).map(|x| x.parents.contains(pa)).unwrap_or(false);
                if !linked {
                    out.push((pa.clone(), pb.clone()));
                }
            }
        }
    }
    out
}

/// A complete chain DAG over `n` continuous nodes `X1..Xn` with the given
/// per-node linear-Gaussian weights; useful for tests and fixtures.
pub fn linear_gaussian_dccd(weights: &[Vec<f64>], bias: &[f64], var: &[f64]) -> Result<Network> {
    let n = bias.len();
    let mut nodes = Vec::with_capacity(n);
    for k in 0..n {
        let id = format!("X{}", k + 1);
        let preds: Vec<String> = (0..k).map(|j| format!("X{}", j + 1)).collect();
        let terms: Vec<(f64, String)> = preds.iter().enumerate().map(|(j, p)| (weights[k][j], p.clone())).collect();
        let mean = Expr::from_linear(terms, bias[k]);
        let cpd = Expr::dist(crate::expr::DistKind::Normal, alloc::vec![mean, Expr::Const(var[k])]);
        nodes.push(Node {
            id,
            kind: NodeKind::Continuous { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
            parents: preds,
            cpd: Cpd::Expr(cpd),
        });
    }
    Network::new(nodes)
}
