//! Reference networks shared by tests, examples and the command line.

use alloc::vec;
use alloc::vec::Vec;

use crate::aggregate::{CompoundSpec, Frequency};
use crate::model::{BfgAnnotation, Network, Node};

const TF: [&str; 2] = ["False", "True"];

fn bin(id: &str, parents: &[&str], t: &[f64]) -> Node {
    Node::discrete(id, &TF, parents, t.to_vec())
}

fn annotated(nodes: Vec<Node>, intermediates: &[&str]) -> (Network, BfgAnnotation) {
    let net = Network::new(nodes).expect("fixture is valid");
    let ints: Vec<_> = intermediates.iter().map(|s| (*s).into()).collect();
    let ann = BfgAnnotation::from_intermediates(&net, &ints).expect("fixture is valid");
    (net, ann)
}

/// Five-variable binary chain DAG in factorized form (three intermediates).
pub fn kappa5() -> (Network, BfgAnnotation) {
    annotated(
        vec![
            bin("X1", &[], &[0.3, 0.7]),
            bin("X2", &["X1"], &[0.2, 0.8, 0.6, 0.4]),
            bin("X3", &["X1", "X2"], &[0.4, 0.6, 0.7, 0.3, 0.5, 0.5, 0.1, 0.9]),
            bin("E1", &["X1", "X2"], &[0.2, 0.8, 0.3, 0.7, 0.4, 0.6, 0.5, 0.5]),
            bin("E2", &["X1", "X2"], &[0.5, 0.5, 0.4, 0.6, 0.1, 0.9, 0.3, 0.7]),
            bin("X4", &["X3", "E1"], &[0.3, 0.7, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1]),
            bin("E3", &["X3", "E2"], &[0.1, 0.9, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6]),
            bin("X5", &["X4", "E3"], &[0.8, 0.2, 0.4, 0.6, 0.4, 0.6, 0.7, 0.3]),
        ],
        &["E1", "E2", "E3"],
    )
}

/// Eight-variable binary chain DAG in factorized form (21 intermediates).
pub fn kappa8() -> (Network, BfgAnnotation) {
    let a = [0.2, 0.8, 0.4, 0.6, 0.6, 0.4, 0.8, 0.2];
    let x4 = [0.4, 0.6, 0.5, 0.5, 0.6, 0.4, 0.7, 0.3];
    annotated(
        vec![
            bin("X1", &[], &[0.3, 0.7]),
            bin("X2", &["X1"], &[0.2, 0.8, 0.3, 0.7]),
            bin("X3", &["X1", "X2"], &a),
            bin("E27", &["X1", "X2"], &a),
            bin("E71", &["X1", "X2"], &a),
            bin("E131", &["X1", "X2"], &a),
            bin("E209", &["X1", "X2"], &[0.47, 0.53, 0.1, 0.9, 0.17, 0.83, 0.23, 0.77]),
            bin("E294", &["X1", "X2"], &[0.5, 0.5, 0.23, 0.77, 0.29, 0.71, 0.33, 0.67]),
            bin("X4", &["E27", "X3"], &x4),
            bin("E68", &["E71", "X3"], &x4),
            bin("E128", &["E131", "X3"], &x4),
            bin("E206", &["E209", "X3"], &[0.375, 0.625, 0.41, 0.59, 0.44, 0.56, 0.47, 0.53]),
            bin("E289", &["X3", "E294"], &[0.33, 0.67, 0.41, 0.59, 0.375, 0.625, 0.44, 0.56]),
            bin("X5", &["X4", "E68"], &[0.23, 0.77, 0.33, 0.67, 0.29, 0.71, 0.375, 0.625]),
            bin("E123", &["X4", "E128"], &[0.44, 0.56, 0.375, 0.625, 0.44, 0.56, 0.17, 0.83]),
            bin("E201", &["X4", "E206"], &[0.29, 0.71, 0.23, 0.77, 0.17, 0.83, 0.375, 0.625]),
            bin("E284", &["E289", "X4"], &[0.41, 0.59, 0.375, 0.625, 0.17, 0.83, 0.375, 0.625]),
            bin("X6", &["E123", "X5"], &[0.17, 0.83, 0.23, 0.77, 0.29, 0.71, 0.33, 0.67]),
            bin("E194", &["E201", "X5"], &[0.44, 0.56, 0.17, 0.83, 0.17, 0.83, 0.23, 0.77]),
            bin("E279", &["E284", "X5"], &[0.1, 0.9, 0.23, 0.77, 0.17, 0.83, 0.23, 0.77]),
            bin("X7", &["E194", "X6"], &[0.33, 0.67, 0.375, 0.625, 0.23, 0.77, 0.17, 0.83]),
            bin("E274", &["X6", "E279"], &[0.1, 0.9, 0.23, 0.77, 0.17, 0.83, 0.23, 0.77]),
            bin("X8", &["X7", "E274"], &[0.33, 0.67, 0.23, 0.77, 0.17, 0.83, 0.23, 0.77]),
        ],
        &[
            "E27", "E71", "E131", "E209", "E294", "E68", "E128", "E206", "E289", "E123", "E201", "E284", "E194", "E279",
            "E274",
        ],
    )
}

/// Equicorrelated Gaussian with `μ_i = σ_i = i + 1` and `ρ = 0.1`, in
/// dimensions up to 20; smaller sizes are leading blocks.
pub fn cg_equicorrelated(n: usize) -> crate::cg::MgdSpec {
    let v: Vec<f64> = (2..=n + 1).map(|x| x as f64).collect();
    crate::cg::MgdSpec::equicorrelated(v.clone(), &v, 0.1).expect("positive definite")
}

fn expr(text: &str) -> crate::expr::Expr {
    crate::expr::parse_expr(text).expect("fixture is valid")
}

/// Poisson(50) counts of Exponential(1) severities.
pub fn poisson_exponential() -> CompoundSpec {
    CompoundSpec { frequency: Frequency::Law(expr("Poisson(50)")), severity: expr("Exponential(1)"), causes: None }
}

/// Poisson(50) counts of a four-component multimodal severity.
pub fn multimodal_compound() -> CompoundSpec {
    CompoundSpec {
        frequency: Frequency::Law(expr("Poisson(50)")),
        severity: expr("mixture(0.2: Gamma(5, 1.5), 0.3: Normal(25, 2), 0.4: Normal(50, 3), 0.1: Gamma(100, 2))"),
        causes: None,
    }
}

/// Severity partitioned on three High/Low causes `C0..C2`, which share the
/// parent causes `C3` and `C4`. The parent layer's parameters are invented.
pub fn common_cause_compound() -> CompoundSpec {
    const HL: [&str; 2] = ["High", "Low"];
    let causes = Network::new(vec![
        Node::discrete("C3", &HL, &[], vec![0.3, 0.7]),
        Node::discrete("C4", &HL, &[], vec![0.5, 0.5]),
        Node::discrete("C0", &HL, &["C3"], vec![0.8, 0.2, 0.14, 0.86]),
        Node::discrete("C1", &HL, &["C3", "C4"], vec![0.8, 0.2, 0.5, 0.5, 0.5, 0.5, 0.2, 0.8]),
        Node::discrete("C2", &HL, &["C4"], vec![0.7, 0.3, 0.3, 0.7]),
    ])
    .expect("fixture is valid");
    CompoundSpec {
        frequency: Frequency::Law(expr("Poisson(50)")),
        severity: expr(
            "case(C0, \
               High: case(C1, High: case(C2, High: Normal(1, 2), Low: Normal(2, 3)), \
                              Low: case(C2, High: Normal(3, 4), Low: Normal(4, 5))), \
               Low: case(C1, High: case(C2, High: Normal(100, 110), Low: Normal(110, 120)), \
                             Low: case(C2, High: Normal(120, 130), Low: Normal(130, 140))))",
        ),
        causes: Some(causes),
    }
}

/// Three-state frequency {1, 2, 5} with exponential severities scaled by a
/// Normal/High/Extreme cause. Scales and the third count are calibrated so
/// that observing a total of 3000 moves the frequency to about
/// {0.11, 0.166, 0.724}.
pub fn calibrated_deconvolution_compound() -> CompoundSpec {
    let causes = Network::new(vec![Node::discrete("C", &["Normal", "High", "Extreme"], &[], vec![0.8, 0.19, 0.01])])
        .expect("fixture is valid");
    let sev = alloc::format!(
        "case(C, Normal: Exponential({}), High: Exponential({}), Extreme: Exponential({}))",
        1.0 / 313.0,
        1.0 / 3150.0,
        1.0 / 31500.0
    );
    CompoundSpec {
        frequency: Frequency::Table { support: vec![1, 2, 5], weights: vec![0.2, 0.3, 0.5] },
        severity: expr(&sev),
        causes: Some(causes),
    }
}
