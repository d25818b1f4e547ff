//! Marginal reports: CSV rows `node_id,bin_lo,bin_hi,mass` plus a text
//! summary and engine diagnostics.
//!
//! Discrete states are written with the state label in both bin columns.
//! Numbers use the shortest representation that round-trips, so identical
//! results give identical bytes.

use std::fmt::Write as _;

use hbn_core::aggregate::Summary;
use hbn_core::discretize::DiscretizedDensity;

#[derive(Debug, Clone, PartialEq)]
pub enum Bin {
    State(String),
    Interval(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMarginal {
    pub id: String,
    pub rows: Vec<(Bin, f64)>,
    /// Present for continuous and count-valued nodes.
    pub summary: Option<Summary>,
}

impl NodeMarginal {
    pub fn states(id: &str, labels: &[String], mass: &[f64]) -> NodeMarginal {
        let rows = labels.iter().zip(mass).map(|(l, &m)| (Bin::State(l.clone()), m)).collect();
        NodeMarginal { id: id.into(), rows, summary: None }
    }

    pub fn density(id: &str, d: &DiscretizedDensity) -> NodeMarginal {
        let rows = d.partition.bins.iter().zip(&d.mass).map(|(&(lo, hi), &m)| (Bin::Interval(lo, hi), m)).collect();
        NodeMarginal { id: id.into(), rows, summary: Some(Summary::of(d)) }
    }

    pub fn total_mass(&self) -> f64 {
        self.rows.iter().map(|r| r.1).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub engine: String,
    /// Outer (discretization) iterations, or 1 for a single propagation.
    pub iterations: usize,
    pub inner_iterations: usize,
    pub residual: f64,
    pub entropy_error: Option<f64>,
    pub converged: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarginalReport {
    pub nodes: Vec<NodeMarginal>,
    pub diagnostics: Diagnostics,
}

impl MarginalReport {
    pub fn node(&self, id: &str) -> Option<&NodeMarginal> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_id,bin_lo,bin_hi,mass\n");
        for n in &self.nodes {
            for (bin, m) in &n.rows {
                match bin {
                    Bin::State(l) => writeln!(s, "{},{},{},{}", csv_field(&n.id), csv_field(l), csv_field(l), m),
                    Bin::Interval(lo, hi) => writeln!(s, "{},{lo},{hi},{m}", csv_field(&n.id)),
                }
                .expect("writing to a String cannot fail");
            }
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            let line = match &n.summary {
                Some(x) => format!(
                    "{}: mean={:.6} sd={:.6} median={:.6} p95={:.6} p99={:.6}",
                    n.id, x.mean, x.sd, x.median, x.p95, x.p99
                ),
                None => {
                    let cells: Vec<String> = n
                        .rows
                        .iter()
                        .map(|(b, m)| match b {
                            Bin::State(l) => format!("{l}={m:.6}"),
                            Bin::Interval(lo, hi) => format!("[{lo},{hi}]={m:.6}"),
                        })
                        .collect();
                    format!("{}: {}", n.id, cells.join(" "))
                }
            };
            s.push_str(&line);
            s.push('\n');
        }
        let d = &self.diagnostics;
        let _ = write!(
            s,
            "engine={} iterations={} inner_iterations={} residual={:.3e} converged={}",
            d.engine, d.iterations, d.inner_iterations, d.residual, d.converged
        );
        if let Some(e) = d.entropy_error {
            let _ = write!(s, " entropy_error={e:.3e}");
        }
        s.push('\n');
        for note in &d.notes {
            let _ = writeln!(s, "note: {note}");
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hbn_core::discretize::Partition;

    #[test]
    fn csv_layout() {
        let d = DiscretizedDensity { partition: Partition::from_bins(vec![(0.0, 0.5), (0.5, 2.0)], false).unwrap(), mass: vec![0.25, 0.75] };
        let r = MarginalReport {
            nodes: vec![
                NodeMarginal::states("A", &["lo".into(), "a,b".into()], &[0.1, 0.9]),
                NodeMarginal::density("X", &d),
            ],
            diagnostics: Diagnostics::default(),
        };
        assert_eq!(r.to_csv(), "node_id,bin_lo,bin_hi,mass\nA,lo,lo,0.1\nA,\"a,b\",\"a,b\",0.9\nX,0,0.5,0.25\nX,0.5,2,0.75\n");
        assert!((r.node("X").unwrap().total_mass() - 1.0).abs() < 1e-12);
        assert!(r.summary_text().starts_with("A: lo=0.100000 a,b=0.900000\nX: mean="));
    }
}
