use std::path::{Path, PathBuf};
use std::process::Command;

use hbn::cli::parse_matrix;
use hbn::model_file::{EvidenceDto, ModelFile};
use hbn_core::cg::{mgd_to_cg, MgdSpec};
use hbn_core::fixtures;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture(name: &str) -> String {
    fixture_dir().join(name).to_str().unwrap().to_string()
}

fn matrix_text(spec: &MgdSpec) -> String {
    let row = |r: &[f64]| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut s = String::from("# mean\n");
    s.push_str(&row(&spec.mean));
    s.push_str("\n# covariance\n");
    for r in &spec.cov {
        s.push_str(&row(r));
        s.push('\n');
    }
    s
}

fn with_evidence(mut m: ModelFile, id: &str, e: EvidenceDto) -> ModelFile {
    m.evidence.insert(id.into(), e);
    m
}

/// Every generated fixture file with its expected content.
fn generated() -> Vec<(&'static str, String)> {
    let (k5, a5) = fixtures::kappa5();
    let (k8, a8) = fixtures::kappa8();
    let cg = |n| ModelFile::from_network(&mgd_to_cg(&fixtures::cg_equicorrelated(n)).unwrap());
    let example6 = MgdSpec::new(
        vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        (0..6)
            .map(|i| (0..6).map(|j| if i == j { ((i + 2) * (i + 2)) as f64 } else { ((i + 2) * (j + 2)) as f64 / 10.0 }).collect())
            .collect(),
    )
    .unwrap();
    vec![
        ("kappa5.json", ModelFile::from_bfg(&k5, &a5).to_json()),
        ("kappa8.json", with_evidence(ModelFile::from_bfg(&k8, &a8), "X8", EvidenceDto::State("False".into())).to_json()),
        ("mgd6.txt", matrix_text(&example6)),
        ("cg20.txt", matrix_text(&fixtures::cg_equicorrelated(20))),
        ("cg20.json", cg(20).to_json()),
        ("cg10_observed.json", with_evidence(cg(10), "X10", EvidenceDto::Value(-10.0)).to_json()),
        ("cg15.json", cg(15).to_json()),
        ("poisson_exponential.json", ModelFile::from_compound(&fixtures::poisson_exponential()).to_json()),
        ("multimodal.json", ModelFile::from_compound(&fixtures::multimodal_compound()).to_json()),
        ("common_cause.json", ModelFile::from_compound(&fixtures::common_cause_compound()).to_json()),
        ("calibrated.json", ModelFile::from_compound(&fixtures::calibrated_deconvolution_compound()).to_json()),
    ]
}

/// Set `HBN_BLESS=1` to rewrite the generated fixtures.
#[test]
fn shipped_fixtures_match_the_library() {
    let bless = std::env::var_os("HBN_BLESS").is_some();
    for (name, content) in generated() {
        let path = fixture_dir().join(name);
        if bless {
            std::fs::write(&path, &content).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_default();
        assert_eq!(on_disk, content, "{name} is out of date; rerun with HBN_BLESS=1");
    }
    for name in ["sparse5.json", "sum_xy.json"] {
        ModelFile::read(&fixture_dir().join(name)).unwrap();
    }
}

struct Run {
    code: u8,
    out: String,
    err: String,
}

fn hbn(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = hbn::main_with(std::iter::once("hbn").chain(args.iter().copied()), &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn convert_sparse_model_to_dccd_then_bfg() {
    let dir = tmp();
    let dccd = dir.path().join("dccd.json");
    let bfg = dir.path().join("bfg.json");
    let r = hbn(&["convert", &fixture("sparse5.json"), "--to", "dccd", "-o", path_str(&dccd)]);
    assert_eq!(r.code, 0, "{}", r.err);
    let net = ModelFile::read(&dccd).unwrap().network().unwrap();
    // Densified: every continuous node has all earlier ones as parents.
    assert_eq!(net.node("X3").unwrap().parents, vec!["X1", "X2"]);
    assert_eq!(net.node("X5").unwrap().parents.len(), 4);

    let r = hbn(&["convert", path_str(&dccd), "--to", "bfg", "-o", path_str(&bfg)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.err.contains("originals=5 nodes=8 kappa=8"), "{}", r.err);
    let m = ModelFile::read(&bfg).unwrap();
    assert_eq!(m.intermediates.len(), 3);

    // Already factorized input comes back unchanged.
    let again = dir.path().join("again.json");
    assert_eq!(hbn(&["convert", path_str(&bfg), "--to", "bfg", "-o", path_str(&again)]).code, 0);
    assert_eq!(std::fs::read(&bfg).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn hybrid_sparse_conversion_is_unsupported() {
    let dir = tmp();
    let p = dir.path().join("hybrid.json");
    std::fs::write(
        &p,
        r#"{"version":1,"nodes":[
            {"id":"X","kind":"continuous","cpd":"Uniform(0.2, 0.8)"},
            {"id":"D","kind":"discrete","states":["0","1","2"],"parents":["X"],"cpd":"Geometric(X)"}]}"#,
    )
    .unwrap();
    let r = hbn(&["convert", path_str(&p), "--to", "dccd"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("unsupported conversion for node `D`"), "{}", r.err);
}

#[test]
fn infer_kappa5_with_both_engines() {
    let jt = hbn(&["infer", &fixture("kappa5.json"), "--engine", "jt"]);
    assert_eq!(jt.code, 0, "{}", jt.err);
    assert!(jt.out.starts_with("node_id,bin_lo,bin_hi,mass\nX1,False,False,0.3"), "{}", jt.out);
    assert!(jt.err.contains("X4: False=0.518"), "{}", jt.err);
    let gbp = hbn(&["infer", &fixture("kappa5.json"), "--engine", "ddbp"]);
    assert_eq!(gbp.code, 0, "{}", gbp.err);
    assert!(gbp.err.contains("X4: False=0.526"), "{}", gbp.err);
    assert!(gbp.err.contains("engine=trc-gbp"));
}

#[test]
fn infer_csv_is_byte_identical_across_runs() {
    let dir = tmp();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let r = hbn(&["infer", &fixture("sum_xy.json"), "--engine", "jt", "--iterations", "8", "--csv", path_str(p)]);
        assert!(r.code == 0 || r.code == 2, "{}", r.err);
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!x.is_empty());
    assert_eq!(x, y);
    // Every node's masses sum to one.
    let text = String::from_utf8(x).unwrap();
    for id in ["X", "Y", "Z"] {
        let total: f64 = text
            .lines()
            .skip(1)
            .filter(|l| l.split(',').next() == Some(id))
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{id}: {total}");
    }
}

#[test]
fn single_node_without_evidence_echoes_the_prior() {
    let dir = tmp();
    let p = dir.path().join("one.json");
    std::fs::write(&p, r#"{"version":1,"nodes":[{"id":"A","kind":"discrete","states":["x","y","z"],"cpd":[0.2,0.3,0.5]}]}"#).unwrap();
    let r = hbn(&["infer", path_str(&p)]);
    assert_eq!(r.code, 0);
    assert_eq!(r.out, "node_id,bin_lo,bin_hi,mass\nA,x,x,0.2\nA,y,y,0.3\nA,z,z,0.5\n");
}

#[test]
fn ddbp_falls_back_to_one_region_for_small_models() {
    let r = hbn(&["infer", &fixture("sum_xy.json"), "--engine", "ddbp", "--iterations", "5"]);
    assert!(r.code == 0 || r.code == 2, "{}", r.err);
    assert!(r.err.contains("single region"), "{}", r.err);
}

#[test]
fn cg_decompose_reads_a_matrix_file() {
    let dir = tmp();
    let out = dir.path().join("cg20.json");
    let r = hbn(&["cg-decompose", &fixture("cg20.txt"), "-o", path_str(&out)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), std::fs::read_to_string(fixture("cg20.json")).unwrap());
    let six = parse_matrix(&std::fs::read_to_string(fixture("mgd6.txt")).unwrap()).unwrap();
    let c = hbn_core::cg::cg_cpds(&six).unwrap();
    assert!((c[1].bias - 2.7).abs() < 1e-12 && (c[1].var - 8.91).abs() < 1e-12);
    assert!(parse_matrix("1 2\n1 0\n").is_err());
}

#[test]
fn aggregate_then_deconvolve() {
    let dir = tmp();
    let cache = dir.path().join("cache.json");
    let csv = dir.path().join("t.csv");
    let model = fixture("calibrated.json");
    let r = hbn(&["aggregate", &model, "--cache", path_str(&cache), "--csv", path_str(&csv)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("T: mean="), "{}", r.out);
    let r = hbn(&["deconvolve", &model, "--cache", path_str(&cache), "--evidence", "T=3000", "--query", "N"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let n: Vec<f64> = r.out.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(n.len(), 3);
    for (p, want) in n.iter().zip([0.11, 0.166, 0.724]) {
        assert!((p - want).abs() < 0.01, "{n:?}");
    }
    let r = hbn(&["deconvolve", &model, "--cache", path_str(&cache), "--evidence", "T=3000", "--query", "Q"]);
    assert_eq!(r.code, 1);
}

#[test]
fn deconvolve_refuses_a_stale_cache() {
    let dir = tmp();
    let cache = dir.path().join("cache.json");
    let model = dir.path().join("m.json");
    std::fs::copy(fixture("calibrated.json"), &model).unwrap();
    let r = hbn(&["aggregate", path_str(&model), "--cache", path_str(&cache), "--severity-iterations", "10"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let mut m = ModelFile::read(&model).unwrap();
    if let Some(c) = m.compound.as_mut() {
        c.severity = c.severity.replace("Exponential(", "Exponential(2*");
    }
    m.write(&model).unwrap();
    let r = hbn(&["deconvolve", path_str(&model), "--cache", path_str(&cache), "--evidence", "T=3000"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("stale cache"), "{}", r.err);
}

#[test]
fn oracles() {
    let r = hbn(&["oracle", &fixture("kappa5.json"), "--method", "enum"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.err.contains("X5: False=0.592"), "{}", r.err);

    let dir = tmp();
    let big = dir.path().join("big.json");
    let nodes: Vec<String> = (0..21)
        .map(|i| format!(r#"{{"id":"B{i}","kind":"discrete","states":["0","1"],"cpd":[0.5,0.5]}}"#))
        .collect();
    std::fs::write(&big, format!(r#"{{"version":1,"nodes":[{}]}}"#, nodes.join(","))).unwrap();
    let r = hbn(&["oracle", path_str(&big), "--method", "enum"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("limited to 20"), "{}", r.err);

    let zero = dir.path().join("zero.json");
    std::fs::write(
        &zero,
        r#"{"version":1,"nodes":[],"compound":{"frequency":{"support":[0],"weights":[1.0]},"severity":"Exponential(1)"}}"#,
    )
    .unwrap();
    let r = hbn(&["oracle", path_str(&zero), "--method", "mc", "--samples", "1000"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out, "node_id,bin_lo,bin_hi,mass\nT,0,0,1\n");

    let a = hbn(&["oracle", &fixture("poisson_exponential.json"), "--method", "mc", "--samples", "20000", "--seed", "7"]);
    let b = hbn(&["oracle", &fixture("poisson_exponential.json"), "--method", "mc", "--samples", "20000", "--seed", "7"]);
    assert_eq!(a.code, 0, "{}", a.err);
    assert_eq!(a.out, b.out);
    let mean: f64 = a.err.split("mean=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((mean - 50.0).abs() < 0.5, "{mean}");
}

#[test]
fn rg_inspect_reports_triplet_structure() {
    let r = hbn(&["rg-inspect", &fixture("kappa5.json")]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("originals=5 level1=9 intersections=10 edges=21 pruned=3\nmaxent_normal=true\n"), "{}", r.out);
    assert!(r.out.contains("separator "));
}

#[test]
fn binary_exit_codes_and_env_budget() {
    let exe = env!("CARGO_BIN_EXE_hbn");
    let ok = Command::new(exe).args(["infer", &fixture("kappa5.json")]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(exe).args(["infer", "/nonexistent.json"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    // A one-round budget cannot meet the stopping rule.
    let short = Command::new(exe).args(["infer", &fixture("sum_xy.json")]).env("HBN_DD_ITERATIONS", "1").output().unwrap();
    assert_eq!(short.status.code(), Some(2), "{}", String::from_utf8_lossy(&short.stderr));
    assert!(String::from_utf8_lossy(&short.stderr).contains("iterations=1 "));
}
