//! JSON model files: a network, optional evidence, an optional binary
//! factorization annotation and an optional compound section.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hbn_core::aggregate::{CompoundSpec, Frequency};
use hbn_core::dd::Evidence;
use hbn_core::expr::parse_expr;
use hbn_core::model::{BfgAnnotation, Cpd, Network, Node, NodeKind};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub nodes: Vec<NodeDto>,
    /// Intermediate nodes when the network is a binary factorized graph.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intermediates: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<String, EvidenceDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compound: Option<CompoundDto>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindDto {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDto {
    pub id: String,
    pub kind: KindDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    /// `[lo, hi]`; `null` stands for an infinite bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[Option<f64>; 2]>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpd: CpdDto,
}

/// An expression string, or a probability table with the first parent
/// varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CpdDto {
    Expr(String),
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvidenceDto {
    Value(f64),
    State(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundDto {
    pub frequency: FrequencyDto,
    pub severity: String,
    /// Ids of the discrete nodes forming the cause network; the severity may
    /// be partitioned on any of them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub causes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrequencyDto {
    Law(String),
    Table { support: Vec<u64>, weights: Vec<f64> },
}

impl ModelFile {
    pub fn read(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ModelFile::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<ModelFile> {
        let m: ModelFile = serde_json::from_str(text)?;
        if m.version != FORMAT_VERSION {
            bail!("unsupported model format version {} (expected {FORMAT_VERSION})", m.version);
        }
        m.network()?;
        Ok(m)
    }

    /// Pretty JSON with a trailing newline. Field and map order are fixed, so
    /// equal models serialize to equal bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model files always serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn from_network(net: &Network) -> ModelFile {
        ModelFile {
            version: FORMAT_VERSION,
            nodes: net.nodes.iter().map(node_to_dto).collect(),
            intermediates: Vec::new(),
            evidence: BTreeMap::new(),
            compound: None,
        }
    }

    pub fn from_bfg(net: &Network, ann: &BfgAnnotation) -> ModelFile {
        ModelFile { intermediates: ann.intermediates.clone(), ..ModelFile::from_network(net) }
    }

    /// A compound model: the cause network (if any) plus the compound section.
    pub fn from_compound(spec: &CompoundSpec) -> ModelFile {
        let mut m = match &spec.causes {
            Some(net) => ModelFile::from_network(net),
            None => ModelFile::from_network(&Network { nodes: Vec::new() }),
        };
        let frequency = match &spec.frequency {
            Frequency::Law(e) => FrequencyDto::Law(e.to_string()),
            Frequency::Table { support, weights } => FrequencyDto::Table { support: support.clone(), weights: weights.clone() },
        };
        let causes = spec.causes.as_ref().map(|n| n.ids()).unwrap_or_default();
        m.compound = Some(CompoundDto { frequency, severity: spec.severity.to_string(), causes });
        m
    }

    pub fn network(&self) -> Result<Network> {
        let nodes = self.nodes.iter().map(dto_to_node).collect::<Result<Vec<_>>>()?;
        let net = Network::new(nodes)?;
        for id in self.intermediates.iter().chain(self.evidence.keys()) {
            net.node(id)?;
        }
        Ok(net)
    }

    /// The annotation recorded in the file, if any.
    pub fn annotation(&self, net: &Network) -> Result<Option<BfgAnnotation>> {
        if self.intermediates.is_empty() {
            return Ok(None);
        }
        Ok(Some(BfgAnnotation::from_intermediates(net, &self.intermediates)?))
    }

    /// Evidence from the file, overridden by `extra` (`id=value` pairs).
    /// Values on discrete nodes name a state; others parse as numbers.
    pub fn evidence(&self, net: &Network, extra: &[String]) -> Result<Vec<(String, Evidence)>> {
        let mut map: BTreeMap<String, Evidence> = BTreeMap::new();
        for (k, v) in &self.evidence {
            let node = net.node(k)?;
            let e = match (v, node.is_discrete()) {
                (EvidenceDto::State(s), true) => Evidence::State(s.clone()),
                (EvidenceDto::Value(x), false) => Evidence::Value(*x),
                _ => bail!("evidence on `{k}` does not match the node kind"),
            };
            map.insert(k.clone(), e);
        }
        for kv in extra {
            let (k, v) = parse_assignment(kv)?;
            let node = net.node(&k)?;
            let e = if node.is_discrete() {
                Evidence::State(v)
            } else {
                Evidence::Value(v.parse().with_context(|| format!("evidence `{kv}` is not a number"))?)
            };
            map.insert(k, e);
        }
        Ok(map.into_iter().collect())
    }

    pub fn compound_spec(&self) -> Result<CompoundSpec> {
        let c = self.compound.as_ref().context("model has no compound section")?;
        let frequency = match &c.frequency {
            FrequencyDto::Law(s) => Frequency::Law(parse_expr(s).context("frequency")?),
            FrequencyDto::Table { support, weights } => Frequency::Table { support: support.clone(), weights: weights.clone() },
        };
        let severity = parse_expr(&c.severity).context("severity")?;
        let causes = if c.causes.is_empty() {
            None
        } else {
            let net = self.network()?;
            let nodes = c.causes.iter().map(|id| net.node(id).cloned()).collect::<std::result::Result<Vec<_>, _>>()?;
            Some(Network::new(nodes).context("cause network must be closed under parents")?)
        };
        Ok(CompoundSpec { frequency, severity, causes })
    }
}

/// Splits `key=value`.
pub fn parse_assignment(kv: &str) -> Result<(String, String)> {
    match kv.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => bail!("expected `id=value`, got `{kv}`"),
    }
}

fn node_to_dto(n: &Node) -> NodeDto {
    let (kind, states, support) = match &n.kind {
        NodeKind::Discrete { states } => (KindDto::Discrete, Some(states.clone()), None),
        NodeKind::Continuous { lo, hi } => {
            let b = |x: f64| x.is_finite().then_some(x);
            let support = (lo.is_finite() || hi.is_finite()).then(|| [b(*lo), b(*hi)]);
            (KindDto::Continuous, None, support)
        }
    };
    let cpd = match &n.cpd {
        Cpd::Expr(e) => CpdDto::Expr(e.to_string()),
        Cpd::Table(t) => CpdDto::Table(t.clone()),
    };
    NodeDto { id: n.id.clone(), kind, states, support, parents: n.parents.clone(), cpd }
}

fn dto_to_node(d: &NodeDto) -> Result<Node> {
    let kind = match (d.kind, &d.states, &d.support) {
        (KindDto::Discrete, Some(states), None) => NodeKind::Discrete { states: states.clone() },
        (KindDto::Discrete, _, _) => bail!("discrete node `{}` needs `states` and no `support`", d.id),
        (KindDto::Continuous, None, support) => {
            let [lo, hi] = support.unwrap_or([None, None]);
            NodeKind::Continuous { lo: lo.unwrap_or(f64::NEG_INFINITY), hi: hi.unwrap_or(f64::INFINITY) }
        }
        (KindDto::Continuous, Some(_), _) => bail!("continuous node `{}` cannot declare states", d.id),
    };
    let cpd = match &d.cpd {
        CpdDto::Expr(s) => Cpd::Expr(parse_expr(s).with_context(|| format!("cpd of `{}`", d.id))?),
        CpdDto::Table(t) => Cpd::Table(t.clone()),
    };
    Ok(Node { id: d.id.clone(), kind, parents: d.parents.clone(), cpd })
}
