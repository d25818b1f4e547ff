//! CPD expression language.
//!
//! Grammar (whitespace insensitive, `*` binds tighter than `+`/`-`, all binary
//! operators left-associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := '-' unary | primary
//! primary := NUMBER | IDENT | '(' expr ')'
//!          | DIST '(' expr (',' expr)* ')'
//!          | 'mixture' '(' NUMBER ':' expr (',' NUMBER ':' expr)* ')'
//!          | 'if' '(' IDENT ',' expr ',' expr ')'
//!          | 'case' '(' IDENT (',' LABEL ':' expr)+ ')'
//! DIST    := Normal | Exponential | Gamma | Poisson | Geometric | Uniform
//! LABEL   := IDENT | NUMBER | '"' chars '"'
//! ```
//!
//! Parameter conventions: `Normal(mean, variance)`, `Exponential(rate)`,
//! `Gamma(shape, scale)`, `Poisson(rate)`, `Geometric(p)` counting failures
//! before the first success, `Uniform(lo, hi)`. `if(G, a, b)` selects `a` when
//! the Boolean guard `G` is in state `True` and `b` when it is `False`.
//!
//! Linear arithmetic is canonicalized into [`Expr::WeightedSum`]; only genuinely
//! nonlinear arithmetic stays as [`Expr::Arith`].

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistKind {
    Normal,
    Exponential,
    Gamma,
    Poisson,
    Geometric,
    Uniform,
}

impl DistKind {
    pub const ALL: [DistKind; 6] = [
        DistKind::Normal,
        DistKind::Exponential,
        DistKind::Gamma,
        DistKind::Poisson,
        DistKind::Geometric,
        DistKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistKind::Normal => "Normal",
            DistKind::Exponential => "Exponential",
            DistKind::Gamma => "Gamma",
            DistKind::Poisson => "Poisson",
            DistKind::Geometric => "Geometric",
            DistKind::Uniform => "Uniform",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            DistKind::Normal | DistKind::Gamma | DistKind::Uniform => 2,
            _ => 1,
        }
    }

    /// Integer-valued distributions place mass on {0, 1, 2, ...}.
    pub fn is_integer(self) -> bool {
        matches!(self, DistKind::Poisson | DistKind::Geometric)
    }
}

/// A parsed CPD expression in canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Var(String),
    /// `Σ coeff·var + bias`; zero coefficients are kept so that absorbed
    /// zero-weight parents stay visible.
    WeightedSum {
        terms: Vec<(f64, String)>,
        bias: f64,
    },
    Arith {
        op: ArithOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Dist {
        kind: DistKind,
        params: Vec<Expr>,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<Expr>,
    },
    Partitioned {
        guard: String,
        cases: Vec<(String, Expr)>,
    },
}

/// Values bound to free variables during evaluation.
pub trait Env {
    fn real(&self, id: &str) -> Option<f64>;
    fn state(&self, id: &str) -> Option<&str>;
}

/// Owned assignment used by tests and front ends.
#[derive(Debug, Clone, Default)]
pub struct MapEnv {
    pub reals: BTreeMap<String, f64>,
    pub states: BTreeMap<String, String>,
}

impl MapEnv {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn with_real(mut self, id: &str, v: f64) -> Self {
        self.reals.insert(id.to_string(), v);
        self
    }
    pub fn with_state(mut self, id: &str, s: &str) -> Self {
        self.states.insert(id.to_string(), s.to_string());
        self
    }
}

impl Env for MapEnv {
    fn real(&self, id: &str) -> Option<f64> {
        self.reals.get(id).copied()
    }
    fn state(&self, id: &str) -> Option<&str> {
        self.states.get(id).map(|s| s.as_str())
    }
}

impl Expr {
    pub fn var(id: &str) -> Self {
        Expr::Var(id.to_string())
    }

    pub fn dist(kind: DistKind, params: Vec<Expr>) -> Self {
        Expr::Dist { kind, params }
    }

    /// Free variables (guards included) in first-appearance order.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        let mut push = |v: &String| {
            if !out.contains(v) {
                out.push(v.clone());
            }
        };
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => push(v),
            Expr::WeightedSum { terms, .. } => {
                for (_, v) in terms {
                    push(v);
                }
            }
            Expr::Arith { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Dist { params, .. } => {
                for p in params {
                    p.collect_vars(out);
                }
            }
            Expr::Mixture { components, .. } => {
                for c in components {
                    c.collect_vars(out);
                }
            }
            Expr::Partitioned { guard, cases } => {
                push(guard);
                for (_, c) in cases {
                    c.collect_vars(out);
                }
            }
        }
    }

    /// Guard variables of partitioned sub-expressions.
    pub fn guards(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_guards(&mut out);
        out
    }

    fn collect_guards(&self, out: &mut Vec<String>) {
        match self {
            Expr::Partitioned { guard, cases } => {
                if !out.contains(guard) {
                    out.push(guard.clone());
                }
                for (_, c) in cases {
                    c.collect_guards(out);
                }
            }
            Expr::Mixture { components, .. } => {
                for c in components {
                    c.collect_guards(out);
                }
            }
            _ => {}
        }
    }

    /// True when no distribution appears anywhere in the tree.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Expr::Dist { .. } | Expr::Mixture { .. } => false,
            Expr::Partitioned { cases, .. } => cases.iter().all(|(_, c)| c.is_deterministic()),
            _ => true,
        }
    }

    /// `(terms, bias)` when the expression is an affine function of its variables.
    pub fn linear_form(&self) -> Option<(Vec<(f64, String)>, f64)> {
        match self {
            Expr::Const(c) => Some((Vec::new(), *c)),
            Expr::Var(v) => Some((alloc::vec![(1.0, v.clone())], 0.0)),
            Expr::WeightedSum { terms, bias } => Some((terms.clone(), *bias)),
            Expr::Arith { op, lhs, rhs } => {
                let (lt, lb) = lhs.linear_form()?;
                let (rt, rb) = rhs.linear_form()?;
                match op {
                    ArithOp::Add => Some((merge_terms(lt, rt, 1.0), lb + rb)),
                    ArithOp::Sub => Some((merge_terms(lt, rt, -1.0), lb - rb)),
                    ArithOp::Mul => {
                        if lt.is_empty() {
                            Some((scale_terms(rt, lb), lb * rb))
                        } else if rt.is_empty() {
                            Some((scale_terms(lt, rb), lb * rb))
                        } else {
                            None
                        }
                    }
                }
            }
            _ => None,
        }
    }

    /// Canonical form of an affine expression.
    pub fn from_linear(terms: Vec<(f64, String)>, bias: f64) -> Expr {
        if terms.is_empty() {
            Expr::Const(bias)
        } else if terms.len() == 1 && terms[0].0 == 1.0 && bias == 0.0 {
            Expr::Var(terms[0].1.clone())
        } else {
            Expr::WeightedSum { terms, bias }
        }
    }

    /// Rewrites arithmetic into canonical form bottom-up.
    pub fn canonicalize(self) -> Expr {
        if let Some((t, b)) = self.linear_form() {
            if matches!(self, Expr::Const(_) | Expr::Var(_) | Expr::WeightedSum { .. } | Expr::Arith { .. }) {
                return Expr::from_linear(t, b);
            }
        }
        match self {
            Expr::Arith { op, lhs, rhs } => Expr::Arith {
                op,
                lhs: Box::new(lhs.canonicalize()),
                rhs: Box::new(rhs.canonicalize()),
            },
            Expr::Dist { kind, params } => Expr::Dist {
                kind,
                params: params.into_iter().map(Expr::canonicalize).collect(),
            },
            Expr::Mixture { weights, components } => Expr::Mixture {
                weights,
                components: components.into_iter().map(Expr::canonicalize).collect(),
            },
            Expr::Partitioned { guard, cases } => Expr::Partitioned {
                guard,
                cases: cases.into_iter().map(|(s, e)| (s, e.canonicalize())).collect(),
            },
            other => other,
        }
    }

    /// Checks structural invariants: arity, mixture weights.
    pub fn validate(&self) -> Result<()> {
        match self {
            Expr::Const(c) if !c.is_finite() => Err(Error::InvalidParameter(format!("non-finite constant {c}"))),
            Expr::WeightedSum { terms, bias } => {
                if !bias.is_finite() || terms.iter().any(|(c, _)| !c.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite coefficient".into()));
                }
                Ok(())
            }
            Expr::Arith { lhs, rhs, .. } => {
                lhs.validate()?;
                rhs.validate()
            }
            Expr::Dist { kind, params } => {
                if params.len() != kind.arity() {
                    return Err(Error::InvalidParameter(format!(
                        "{} expects {} parameters, got {}",
                        kind.name(),
                        kind.arity(),
                        params.len()
                    )));
                }
                for p in params {
                    if !p.is_deterministic() {
                        return Err(Error::InvalidParameter("distribution parameter must be deterministic".into()));
                    }
                    p.validate()?;
                }
                Ok(())
            }
            Expr::Mixture { weights, components } => {
                if weights.len() != components.len() || weights.is_empty() {
                    return Err(Error::InvalidParameter("mixture weights and components differ in length".into()));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidParameter("negative mixture weight".into()));
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("mixture weights sum to {s}")));
                }
                for c in components {
                    c.validate()?;
                }
                Ok(())
            }
            Expr::Partitioned { cases, .. } => {
                if cases.is_empty() {
                    return Err(Error::InvalidParameter("partitioned expression without cases".into()));
                }
                for (_, c) in cases {
                    c.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Value of a deterministic expression.
    pub fn eval(&self, env: &dyn Env) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(v) => env.real(v).ok_or_else(|| Error::MissingAssignment(v.clone())),
            Expr::WeightedSum { terms, bias } => {
                let mut s = *bias;
                for (c, v) in terms {
                    let x = env.real(v).ok_or_else(|| Error::MissingAssignment(v.clone()))?;
                    if *c != 0.0 {
                        s += c * x;
                    }
                }
                Ok(s)
            }
            Expr::Arith { op, lhs, rhs } => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                Ok(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                })
            }
            Expr::Partitioned { guard, cases } => select_case(guard, cases, env)?.eval(env),
            Expr::Dist { .. } | Expr::Mixture { .. } => {
                Err(Error::InvalidParameter("distribution has no single value".into()))
            }
        }
    }

    /// Resolves the expression into a concrete distribution for the given
    /// assignment; deterministic expressions become point masses.
    pub fn resolve(&self, env: &dyn Env) -> Result<Resolved> {
        match self {
            Expr::Dist { kind, params } => {
                let mut p = [0.0; 2];
                for (i, e) in params.iter().enumerate().take(2) {
                    p[i] = e.eval(env)?;
                }
                Resolved::new(*kind, &p[..params.len()])
            }
            Expr::Mixture { weights, components } => {
                let mut parts = Vec::with_capacity(weights.len());
                for (w, c) in weights.iter().zip(components) {
                    parts.push((*w, c.resolve(env)?));
                }
                Ok(Resolved::Mixture(parts))
            }
            Expr::Partitioned { guard, cases } => select_case(guard, cases, env)?.resolve(env),
            _ => Ok(Resolved::Point(self.eval(env)?)),
        }
    }
}

fn select_case<'a>(guard: &str, cases: &'a [(String, Expr)], env: &dyn Env) -> Result<&'a Expr> {
    let s = env.state(guard).ok_or_else(|| Error::MissingAssignment(guard.to_string()))?;
    cases
        .iter()
        .find(|(l, _)| l == s)
        .map(|(_, e)| e)
        .ok_or_else(|| Error::InvalidParameter(format!("no case for {guard} = {s}")))
}

fn merge_terms(mut a: Vec<(f64, String)>, b: Vec<(f64, String)>, sign: f64) -> Vec<(f64, String)> {
    for (c, v) in b {
        if let Some(t) = a.iter_mut().find(|t| t.1 == v) {
            t.0 += sign * c;
        } else {
            a.push((sign * c, v));
        }
    }
    a
}

fn scale_terms(a: Vec<(f64, String)>, k: f64) -> Vec<(f64, String)> {
    a.into_iter().map(|(c, v)| (c * k, v)).collect()
}

/// A distribution with all parameters bound.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Point(f64),
    Normal { mean: f64, var: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    Poisson { rate: f64 },
    Geometric { p: f64 },
    Uniform { lo: f64, hi: f64 },
    Mixture(Vec<(f64, Resolved)>),
}

impl Resolved {
    pub fn new(kind: DistKind, p: &[f64]) -> Result<Self> {
        if p.len() != kind.arity() {
            return Err(Error::InvalidParameter(format!("{} arity", kind.name())));
        }
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{}: {what} (got {:?})", kind.name(), p)));
        if p.iter().any(|x| !x.is_finite()) {
            return bad("non-finite parameter");
        }
        match kind {
            DistKind::Normal => {
                if p[1] <= 0.0 {
                    return bad("variance must be positive");
                }
                Ok(Resolved::Normal { mean: p[0], var: p[1] })
            }
            DistKind::Exponential => {
                if p[0] <= 0.0 {
                    return bad("rate must be positive");
                }
                Ok(Resolved::Exponential { rate: p[0] })
            }
            DistKind::Gamma => {
                if p[0] <= 0.0 || p[1] <= 0.0 {
                    return bad("shape and scale must be positive");
                }
                Ok(Resolved::Gamma { shape: p[0], scale: p[1] })
            }
            DistKind::Poisson => {
                if p[0] < 0.0 {
                    return bad("rate must be nonnegative");
                }
                Ok(Resolved::Poisson { rate: p[0] })
            }
            DistKind::Geometric => {
                if !(p[0] > 0.0 && p[0] <= 1.0) {
                    return bad("p must lie in (0, 1]");
                }
                Ok(Resolved::Geometric { p: p[0] })
            }
            DistKind::Uniform => {
                if !(p[0] < p[1]) {
                    return bad("lo must be below hi");
                }
                Ok(Resolved::Uniform { lo: p[0], hi: p[1] })
            }
        }
    }

    /// Integer-valued (lattice) distribution.
    pub fn is_integer(&self) -> bool {
        match self {
            Resolved::Poisson { .. } | Resolved::Geometric { .. } => true,
            Resolved::Mixture(parts) => parts.iter().all(|(_, r)| r.is_integer()),
            _ => false,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Resolved::Point(v) => {
                if x >= v {
                    1.0
                } else {
                    0.0
                }
            }
            Resolved::Normal { mean, var } => math::std_normal_cdf((x - mean) / math::sqrt(var)),
            Resolved::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -libm::expm1(-rate * x)
                }
            }
            Resolved::Gamma { shape, scale } => math::gamma_p(shape, x / scale),
            Resolved::Poisson { rate } => math::poisson_cdf(x, rate),
            Resolved::Geometric { p } => math::geometric_cdf(x, p),
            Resolved::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Resolved::Mixture(ref parts) => parts.iter().map(|(w, r)| w * r.cdf(x)).sum(),
        }
    }

    /// Density for continuous laws, PMF at integer points for lattice laws.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Resolved::Point(v) => {
                if x == v {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Resolved::Normal { mean, var } => {
                let sd = math::sqrt(var);
                math::std_normal_pdf((x - mean) / sd) / sd
            }
            Resolved::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * math::exp(-rate * x)
                }
            }
            Resolved::Gamma { shape, scale } => {
                if x < 0.0 || (x == 0.0 && shape > 1.0) {
                    0.0
                } else if x == 0.0 {
                    if shape == 1.0 {
                        1.0 / scale
                    } else {
                        f64::INFINITY
                    }
                } else {
                    math::exp((shape - 1.0) * math::ln(x) - x / scale - math::ln_gamma(shape) - shape * math::ln(scale))
                }
            }
            Resolved::Poisson { rate } => {
                if x != math::floor(x) {
                    0.0
                } else {
                    math::poisson_pmf(x, rate)
                }
            }
            Resolved::Geometric { p } => {
                if x != math::floor(x) {
                    0.0
                } else {
                    math::geometric_pmf(x, p)
                }
            }
            Resolved::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            Resolved::Mixture(ref parts) => parts.iter().map(|(w, r)| w * r.pdf(x)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Resolved::Point(v) => v,
            Resolved::Normal { mean, .. } => mean,
            Resolved::Exponential { rate } => 1.0 / rate,
            Resolved::Gamma { shape, scale } => shape * scale,
            Resolved::Poisson { rate } => rate,
            Resolved::Geometric { p } => (1.0 - p) / p,
            Resolved::Uniform { lo, hi } => 0.5 * (lo + hi),
            Resolved::Mixture(ref parts) => parts.iter().map(|(w, r)| w * r.mean()).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Resolved::Point(_) => 0.0,
            Resolved::Normal { var, .. } => var,
            Resolved::Exponential { rate } => 1.0 / (rate * rate),
            Resolved::Gamma { shape, scale } => shape * scale * scale,
            Resolved::Poisson { rate } => rate,
            Resolved::Geometric { p } => (1.0 - p) / (p * p),
            Resolved::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Resolved::Mixture(ref parts) => {
                let m = self.mean();
                parts
                    .iter()
                    .map(|(w, r)| {
                        let d = r.mean() - m;
                        w * (r.variance() + d * d)
                    })
                    .sum()
            }
        }
    }

    /// Natural support bounds (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Resolved::Point(v) => (v, v),
            Resolved::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Resolved::Exponential { .. } | Resolved::Gamma { .. } => (0.0, f64::INFINITY),
            Resolved::Poisson { .. } | Resolved::Geometric { .. } => (0.0, f64::INFINITY),
            Resolved::Uniform { lo, hi } => (lo, hi),
            Resolved::Mixture(ref parts) => parts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, (_, r)| {
                let (l, h) = r.support();
                (acc.0.min(l), acc.1.max(h))
            }),
        }
    }

    /// Smallest `x` with `cdf(x) ≥ p` (integer-valued for lattice laws).
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Resolved::Point(v) => v,
            Resolved::Normal { mean, var } => mean + math::sqrt(var) * math::std_normal_quantile(p),
            Resolved::Exponential { rate } => -libm::log1p(-p) / rate,
            Resolved::Uniform { lo, hi } => lo + p * (hi - lo),
            _ if self.is_integer() => {
                let mut hi = 1.0f64;
                while self.cdf(hi) < p && hi < 1e15 {
                    hi *= 2.0;
                }
                let mut lo = -1.0f64;
                while hi - lo > 1.0 {
                    let mid = math::floor(0.5 * (lo + hi));
                    if self.cdf(mid) >= p {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
            _ => {
                let (slo, shi) = self.support();
                let m = self.mean();
                let s = math::sqrt(self.variance()).max(1e-12);
                let mut lo = if slo.is_finite() { slo } else { m - s };
                let mut hi = if shi.is_finite() { shi } else { m + s };
                while self.cdf(lo) > p {
                    lo -= (hi - lo).max(s);
                }
                while self.cdf(hi) < p {
                    hi += (hi - lo).max(s);
                }
                math::bisect(|x| self.cdf(x), p, lo, hi)
            }
        }
    }

    /// One draw from the distribution.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use rand_distr::Distribution;
        match *self {
            Resolved::Point(v) => v,
            Resolved::Normal { mean, var } => rand_distr::Normal::new(mean, math::sqrt(var)).unwrap().sample(rng),
            Resolved::Exponential { rate } => rand_distr::Exp::new(rate).unwrap().sample(rng),
            Resolved::Gamma { shape, scale } => rand_distr::Gamma::new(shape, scale).unwrap().sample(rng),
            Resolved::Poisson { rate } => {
                if rate == 0.0 {
                    0.0
                } else {
                    rand_distr::Poisson::new(rate).unwrap().sample(rng)
                }
            }
            Resolved::Geometric { p } => rand_distr::Geometric::new(p).unwrap().sample(rng) as f64,
            Resolved::Uniform { lo, hi } => rng.gen_range(lo..hi),
            Resolved::Mixture(ref parts) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, r) in parts {
                    acc += w;
                    if u < acc {
                        return r.sample(rng);
                    }
                }
                parts.last().map(|(_, r)| r.sample(rng)).unwrap_or(0.0)
            }
        }
    }
}

/// Result of binary-factorizing an expression.
#[derive(Debug, Clone, PartialEq)]
pub struct BfSplit {
    /// Intermediate pair blocks in creation order.
    pub intermediates: Vec<(String, Expr)>,
    /// The child's rewritten expression referencing the last intermediate.
    pub last: Expr,
}

/// Splits a weighted sum (or a distribution whose single parent-dependent
/// parameter is a weighted sum) over three or more variables into chained pair
/// blocks, absorbing variables in the order given by `order`.
pub fn bf_expression(expr: &Expr, order: &[String], mut fresh: impl FnMut() -> String) -> Result<BfSplit> {
    let rank = |v: &str| order.iter().position(|o| o == v).unwrap_or(usize::MAX);
    let split_linear = |terms: &[(f64, String)], bias: f64, fresh: &mut dyn FnMut() -> String| {
        let mut t: Vec<(f64, String)> = terms.to_vec();
        t.sort_by_key(|(_, v)| rank(v));
        let mut blocks = Vec::new();
        let first = fresh();
        blocks.push((first.clone(), Expr::WeightedSum { terms: alloc::vec![t[0].clone(), t[1].clone()], bias: 0.0 }));
        let mut prev = first;
        for term in &t[2..t.len() - 1] {
            let name = fresh();
            blocks.push((name.clone(), Expr::WeightedSum { terms: alloc::vec![(1.0, prev), term.clone()], bias: 0.0 }));
            prev = name;
        }
        let last = Expr::WeightedSum { terms: alloc::vec![(1.0, prev), t[t.len() - 1].clone()], bias };
        (blocks, last)
    };
    match expr {
        e if e.is_deterministic() => {
            let vars = e.vars();
            if vars.len() <= 2 {
                return Ok(BfSplit { intermediates: Vec::new(), last: e.clone() });
            }
            let (terms, bias) = e.linear_form().ok_or_else(|| Error::NonDecomposable {
                node: String::new(),
                reason: "nonlinear deterministic expression over three or more variables".into(),
            })?;
            let (intermediates, last) = split_linear(&terms, bias, &mut fresh);
            Ok(BfSplit { intermediates, last })
        }
        Expr::Dist { kind, params } => {
            let dependent: Vec<usize> = (0..params.len()).filter(|&i| !params[i].vars().is_empty()).collect();
            let n_vars = expr.vars().len();
            if n_vars <= 2 {
                return Ok(BfSplit { intermediates: Vec::new(), last: expr.clone() });
            }
            if dependent.len() != 1 {
                return Err(Error::NonDecomposable {
                    node: String::new(),
                    reason: format!("{} parameters depend on three or more parents", dependent.len()),
                });
            }
            let i = dependent[0];
            let (terms, bias) = params[i].linear_form().ok_or_else(|| Error::NonDecomposable {
                node: String::new(),
                reason: "parent-dependent parameter is not a weighted sum".into(),
            })?;
            let (intermediates, last_param) = split_linear(&terms, bias, &mut fresh);
            let mut new_params = params.clone();
            new_params[i] = last_param;
            Ok(BfSplit { intermediates, last: Expr::Dist { kind: *kind, params: new_params } })
        }
        _ => {
            if expr.vars().iter().filter(|v| !expr.guards().contains(v)).count() <= 2 {
                Ok(BfSplit { intermediates: Vec::new(), last: expr.clone() })
            } else {
                Err(Error::NonDecomposable {
                    node: String::new(),
                    reason: "mixture or partitioned expression over three or more continuous parents".into(),
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x}")
}

fn fmt_label(s: &str) -> String {
    let ident = !s.is_empty()
        && s.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
    if ident {
        s.to_string()
    } else {
        format!("\"{s}\"")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{}", fmt_num(*c)),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::WeightedSum { terms, bias } => {
                for (i, (c, v)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    if *c == 1.0 {
                        write!(f, "{v}")?;
                    } else {
                        write!(f, "{}*{v}", fmt_num(*c))?;
                    }
                }
                if *bias != 0.0 || terms.is_empty() {
                    if !terms.is_empty() {
                        write!(f, " + ")?;
                    }
                    write!(f, "{}", fmt_num(*bias))?;
                }
                Ok(())
            }
            Expr::Arith { op, lhs, rhs } => {
                let o = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                };
                write!(f, "({lhs} {o} {rhs})")
            }
            Expr::Dist { kind, params } => {
                write!(f, "{}(", kind.name())?;
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            Expr::Mixture { weights, components } => {
                write!(f, "mixture(")?;
                for (i, (w, c)) in weights.iter().zip(components).enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}: {c}", fmt_num(*w))?;
                }
                write!(f, ")")
            }
            Expr::Partitioned { guard, cases } => {
                if cases.len() == 2 && cases[0].0 == "True" && cases[1].0 == "False" {
                    return write!(f, "if({guard}, {}, {})", cases[0].1, cases[1].1);
                }
                write!(f, "case({guard}")?;
                for (l, c) in cases {
                    write!(f, ", {}: {c}", fmt_label(l))?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Str(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && i + 1 < b.len() && (b[i + 1] as char).is_ascii_digit()) {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let save = i;
                i += 1;
                if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
                    i += 1;
                }
                if i < b.len() && (b[i] as char).is_ascii_digit() {
                    while i < b.len() && (b[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Syntax { pos: start, msg: format!("bad number `{text}`") })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if c == '"' {
            let start = i;
            i += 1;
            while i < b.len() && b[i] != b'"' {
                i += 1;
            }
            if i >= b.len() {
                return Err(Error::Syntax { pos: start, msg: "unterminated string".into() });
            }
            out.push((start, Tok::Str(src[start + 1..i].to_string())));
            i += 1;
        } else if "()+-*,:".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Syntax { pos: i, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|t| t.0).unwrap_or(self.end)
    }
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.1)
    }
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { pos: self.pos(), msg: msg.into() })
    }
    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }
    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }
    fn ident(&mut self) -> Result<String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.i += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }
    fn label(&mut self) -> Result<String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) | Some(Tok::Str(s)) => {
                self.i += 1;
                Ok(s)
            }
            // Numeric labels are normalized to their printed form.
            Some(Tok::Num(v)) => {
                self.i += 1;
                Ok(fmt_num(v))
            }
            _ => self.err("expected state label"),
        }
    }
    fn number(&mut self) -> Result<f64> {
        let neg = self.eat('-');
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.i += 1;
                Ok(if neg { -v } else { v })
            }
            _ => self.err("expected number"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                ArithOp::Add
            } else if self.eat('-') {
                ArithOp::Sub
            } else {
                return Ok(lhs);
            };
            let at = self.pos();
            let rhs = self.term()?;
            check_arith_operand(&lhs, at)?;
            check_arith_operand(&rhs, at)?;
            lhs = Expr::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.eat('*') {
            let at = self.pos();
            let rhs = self.unary()?;
            check_arith_operand(&lhs, at)?;
            check_arith_operand(&rhs, at)?;
            lhs = Expr::Arith { op: ArithOp::Mul, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            let at = self.pos();
            let inner = self.unary()?;
            check_arith_operand(&inner, at)?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Arith { op: ArithOp::Mul, lhs: Box::new(Expr::Const(-1.0)), rhs: Box::new(other) },
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let start = self.pos();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.i += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Sym('(')) => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.i += 1;
                if !self.eat('(') {
                    return Ok(Expr::Var(name));
                }
                match name.as_str() {
                    "mixture" => {
                        let mut weights = Vec::new();
                        let mut components = Vec::new();
                        loop {
                            weights.push(self.number()?);
                            self.expect(':')?;
                            components.push(self.expr()?);
                            if !self.eat(',') {
                                break;
                            }
                        }
                        self.expect(')')?;
                        let e = Expr::Mixture { weights, components };
                        e.validate().map_err(|err| Error::Syntax { pos: start, msg: err.to_string() })?;
                        Ok(e)
                    }
                    "if" => {
                        let guard = self.ident()?;
                        self.expect(',')?;
                        let a = self.expr()?;
                        self.expect(',')?;
                        let b = self.expr()?;
                        self.expect(')')?;
                        Ok(Expr::Partitioned { guard, cases: alloc::vec![("True".into(), a), ("False".into(), b)] })
                    }
                    "case" => {
                        let guard = self.ident()?;
                        let mut cases = Vec::new();
                        while self.eat(',') {
                            let l = self.label()?;
                            self.expect(':')?;
                            cases.push((l, self.expr()?));
                        }
                        self.expect(')')?;
                        if cases.is_empty() {
                            return self.err("case() needs at least one branch");
                        }
                        Ok(Expr::Partitioned { guard, cases })
                    }
                    _ => {
                        let kind = DistKind::from_name(&name).ok_or(Error::Syntax {
                            pos: start,
                            msg: format!("unknown distribution `{name}`"),
                        })?;
                        let mut params = Vec::new();
                        if !self.eat(')') {
                            loop {
                                let at = self.pos();
                                let p = self.expr()?;
                                if !p.is_deterministic() {
                                    return Err(Error::Syntax { pos: at, msg: "distribution parameter must be deterministic".into() });
                                }
                                params.push(p);
                                if !self.eat(',') {
                                    break;
                                }
                            }
                            self.expect(')')?;
                        }
                        if params.len() != kind.arity() {
                            return Err(Error::Syntax {
                                pos: start,
                                msg: format!("{} expects {} parameters, got {}", kind.name(), kind.arity(), params.len()),
                            });
                        }
                        Ok(Expr::Dist { kind, params })
                    }
                }
            }
            Some(_) => self.err("unexpected token"),
            None => self.err("unexpected end of input"),
        }
    }
}

fn check_arith_operand(e: &Expr, pos: usize) -> Result<()> {
    if matches!(e, Expr::Dist { .. } | Expr::Mixture { .. } | Expr::Partitioned { .. }) {
        return Err(Error::Syntax { pos, msg: "distributions and guarded expressions cannot appear inside arithmetic".into() });
    }
    Ok(())
}

/// Parses an expression and returns it in canonical form.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let toks = lex(text)?;
    let mut p = Parser { toks, i: 0, end: text.len() };
    let e = p.expr()?;
    if p.i != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e.canonicalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sum_of_three_is_weighted_sum() {
        let e = parse_expr("X1 + X2 + X3").unwrap();
        assert_eq!(
            e,
            Expr::WeightedSum { terms: vec![(1.0, "X1".into()), (1.0, "X2".into()), (1.0, "X3".into())], bias: 0.0 }
        );
    }

    #[test]
    fn conditional_normal_parses() {
        let e = parse_expr("Normal(2.7 + 0.15*X1, 8.91)").unwrap();
        match &e {
            Expr::Dist { kind: DistKind::Normal, params } => {
                assert_eq!(params[0], Expr::WeightedSum { terms: vec![(0.15, "X1".into())], bias: 2.7 });
                assert_eq!(params[1], Expr::Const(8.91));
            }
            other => panic!("{other:?}"),
        }
        let r = e.resolve(&MapEnv::new().with_real("X1", 2.0)).unwrap();
        assert_eq!(r, Resolved::Normal { mean: 2.7 + 0.3, var: 8.91 });
    }

    #[test]
    fn if_is_boolean_partition() {
        let e = parse_expr("if(E0, F_prev, T1)").unwrap();
        assert_eq!(
            e,
            Expr::Partitioned {
                guard: "E0".into(),
                cases: vec![("True".into(), Expr::var("F_prev")), ("False".into(), Expr::var("T1"))]
            }
        );
        let env = MapEnv::new().with_state("E0", "False").with_real("F_prev", 1.0).with_real("T1", 7.0);
        assert_eq!(e.eval(&env).unwrap(), 7.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse_expr("10 - 2 - 3").unwrap(), Expr::Const(5.0));
        assert_eq!(parse_expr("1 + 2 * 3").unwrap(), Expr::Const(7.0));
        let e = parse_expr("X1 * X2 + 1").unwrap();
        assert!(matches!(e, Expr::Arith { op: ArithOp::Add, .. }));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_expr("Normal(1, )") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 10),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("Weibull(1, 2)"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("Normal(1)"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("Normal(0,1) + 1"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn eval_examples() {
        let env = MapEnv::new().with_real("X1", 2.0).with_real("X2", 3.0);
        assert_eq!(parse_expr("X1+X2").unwrap().eval(&env).unwrap(), 5.0);
        let exp = parse_expr("Exponential(1)").unwrap().resolve(&env).unwrap();
        assert_eq!(exp.pdf(0.0), 1.0);
        assert!(matches!(parse_expr("Normal(0, -1)").unwrap().resolve(&env), Err(Error::InvalidParameter(_))));
        assert!(matches!(parse_expr("X9").unwrap().eval(&env), Err(Error::MissingAssignment(_))));
    }

    #[test]
    fn bf_splits_in_parent_order() {
        let e = parse_expr("3*X3 + 1*X1 + 2*X2").unwrap();
        let order: Vec<String> = vec!["X1".into(), "X2".into(), "X3".into()];
        let mut k = 0;
        let s = bf_expression(&e, &order, || {
            k += 1;
            format!("E{k}")
        })
        .unwrap();
        assert_eq!(s.intermediates.len(), 1);
        assert_eq!(s.intermediates[0].1, Expr::WeightedSum { terms: vec![(1.0, "X1".into()), (2.0, "X2".into())], bias: 0.0 });
        assert_eq!(s.last, Expr::WeightedSum { terms: vec![(1.0, "E1".into()), (3.0, "X3".into())], bias: 0.0 });
        let two = parse_expr("X1 + X2").unwrap();
        assert!(bf_expression(&two, &order, || "E".into()).unwrap().intermediates.is_empty());
    }

    #[test]
    fn bf_rejects_nondecomposable() {
        let e = parse_expr("Uniform(X1 + X2, X3 + 5)").unwrap();
        let order: Vec<String> = vec!["X1".into(), "X2".into(), "X3".into()];
        assert!(matches!(bf_expression(&e, &order, || "E".into()), Err(Error::NonDecomposable { .. })));
    }

    #[test]
    fn printer_examples() {
        for s in ["Normal(0.15*X1 + 2.7, 8.91)", "mixture(0.2: Gamma(5, 1.5), 0.8: Normal(25, 2))", "case(C, High: Normal(1, 2), Low: Normal(100, 110))", "(X1 * X2)"] {
            let e = parse_expr(s).unwrap();
            assert_eq!(alloc::format!("{e}"), s);
        }
    }
}
