//! Conditional-Gaussian decomposition of a multivariate normal.
//!
//! With `Σ = L Lᵀ`, the regression of `X_i` on `X_1..X_{i−1}` has weights `b`
//! solving `L_{<i}ᵀ b = L[i, <i]` and residual variance `L_ii²`, so every CPD
//! comes from one factorization and triangular solves.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{DistKind, Expr};
use crate::math;
use crate::model::{Network, Node};

/// Mean vector and covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MgdSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// `X_i ~ Normal(bias + Σ_j weights[j]·X_j, var)` over `X_1..X_{i−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CgCpd {
    pub bias: f64,
    pub weights: Vec<f64>,
    pub var: f64,
}

impl MgdSpec {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<MgdSpec> {
        let s = MgdSpec { mean, cov };
        s.validate()?;
        Ok(s)
    }

    /// Equicorrelated spec with `Σ_ij = ρ σ_i σ_j` off the diagonal.
    pub fn equicorrelated(mean: Vec<f64>, sd: &[f64], rho: f64) -> Result<MgdSpec> {
        let n = sd.len();
        let cov = (0..n)
            .map(|i| (0..n).map(|j| if i == j { sd[i] * sd[i] } else { rho * sd[i] * sd[j] }).collect())
            .collect();
        MgdSpec::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Leading `k`-dimensional marginal.
    pub fn leading(&self, k: usize) -> MgdSpec {
        MgdSpec { mean: self.mean[..k].to_vec(), cov: self.cov[..k].iter().map(|r| r[..k].to_vec()).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if self.cov.len() != n || self.cov.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter(format!("covariance must be {n}×{n}")));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (self.cov[i][j], self.cov[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidParameter(format!("covariance is not symmetric at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        cholesky(&self.cov).map(|_| ())
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite(i + 1));
                }
                l[i][i] = math::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L` (leading `b.len()` block).
fn forward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..b.len() {
        for k in 0..i {
            x[i] -= l[i][k] * x[k];
        }
        x[i] /= l[i][i];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L` (leading `b.len()` block).
fn backward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k][i] * x[k];
        }
        x[i] /= l[i][i];
    }
    x
}

/// Sequential conditionals in index order.
pub fn cg_cpds(spec: &MgdSpec) -> Result<Vec<CgCpd>> {
    spec.validate()?;
    let l = cholesky(&spec.cov)?;
    Ok((0..spec.dim())
        .map(|i| {
            let weights = backward(&l, &l[i][..i]);
            let bias = spec.mean[i] - weights.iter().zip(&spec.mean).map(|(b, m)| b * m).sum::<f64>();
            CgCpd { bias, weights, var: l[i][i] * l[i][i] }
        })
        .collect())
}

/// Builds the CG chain network `X1..Xn`; every earlier node is a parent of
/// every later one, zero weights included.
pub fn mgd_to_cg(spec: &MgdSpec) -> Result<Network> {
    let names: Vec<String> = (1..=spec.dim()).map(|i| format!("X{i}")).collect();
    let mut nodes = Vec::with_capacity(names.len());
    for (i, c) in cg_cpds(spec)?.into_iter().enumerate() {
        let terms = c.weights.iter().zip(&names).map(|(w, n)| (*w, n.clone())).collect();
        let mean = Expr::from_linear(terms, c.bias);
        let expr = Expr::dist(DistKind::Normal, vec![mean, Expr::Const(c.var)]);
        let parents: Vec<&str> = names[..i].iter().map(|s| s.as_str()).collect();
        nodes.push(Node::continuous(&names[i], &parents, expr));
    }
    Network::new(nodes)
}

/// Conditional moments of the unobserved block given `observed` (0-based
/// index, value). Returns the unobserved indices with their mean and
/// covariance.
pub fn exact_conditional(spec: &MgdSpec, observed: &[(usize, f64)]) -> Result<(Vec<usize>, Vec<f64>, Vec<Vec<f64>>)> {
    spec.validate()?;
    let n = spec.dim();
    let obs: Vec<usize> = observed.iter().map(|o| o.0).collect();
    if let Some(&bad) = obs.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("observed index {bad} out of range")));
    }
    let free: Vec<usize> = (0..n).filter(|i| !obs.contains(i)).collect();
    if obs.is_empty() {
        return Ok((free, spec.mean.clone(), spec.cov.clone()));
    }
    let s_oo: Vec<Vec<f64>> = obs.iter().map(|&i| obs.iter().map(|&j| spec.cov[i][j]).collect()).collect();
    let l = cholesky(&s_oo)?;
    let dev: Vec<f64> = observed.iter().map(|&(i, x)| x - spec.mean[i]).collect();
    // w = Σ_oo⁻¹ (x_o − μ_o)
    let w = backward(&l, &forward(&l, &dev));
    // Columns L⁻¹ Σ_o,f for each free index.
    let g: Vec<Vec<f64>> = free.iter().map(|&f| forward(&l, &obs.iter().map(|&o| spec.cov[o][f]).collect::<Vec<_>>())).collect();
    let mean = free
        .iter()
        .map(|&f| spec.mean[f] + obs.iter().zip(&w).map(|(&o, wk)| spec.cov[f][o] * wk).sum::<f64>())
        .collect();
    let cov = (0..free.len())
        .map(|a| {
            (0..free.len())
                .map(|b| spec.cov[free[a]][free[b]] - g[a].iter().zip(&g[b]).map(|(x, y)| x * y).sum::<f64>())
                .collect()
        })
        .collect();
    Ok((free, mean, cov))
}
