use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphkernel"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).env("GRAPHKERNEL_THREADS", "2").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn path_graph(dir: &Path) {
    write(dir, "g.csv", "src,dst,weight\n0,1,1\n1,2,1\n2,3,1\n3,4,1\n");
}

const KRR: &str = r#"{"kind":"krr","kernel":{"kind":"regularized_laplacian","sigma2":1.0},"mu":0.1}"#;

#[test]
fn graph_gen_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["graph", "gen", "--n", "12", "--p", "0.4", "--seed", "7", "--out", "g.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(dir.path(), &["graph", "validate", "--graph", "g.json"]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["n"], 12);
}

#[test]
fn invalid_graph_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.csv", "src,dst,weight\n0,1,-2\n");
    assert_eq!(code(&run(dir.path(), &["graph", "validate", "--graph", "bad.csv"])), 2);
    assert_eq!(code(&run(dir.path(), &["graph", "validate", "--graph", "missing.csv"])), 2);
    assert_eq!(code(&run(dir.path(), &["graph", "gen", "--n", "4", "--p", "1.5"])), 2);
}

#[test]
fn kernel_build_writes_psd_matrix_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    path_graph(dir.path());
    let args = [
        "kernel",
        "build",
        "--graph",
        "g.csv",
        "--kernel",
        r#"{"kind":"diffusion","sigma2":2.0}"#,
        "--out",
        "k.csv",
        "--spectrum-out",
        "s.csv",
    ];
    assert_eq!(code(&run(dir.path(), &args)), 0);
    let k = graphkernel::io::read_matrix_csv(std::fs::File::open(dir.path().join("k.csv")).unwrap()).unwrap();
    assert_eq!(k.shape(), (5, 5));
    assert!((&k - k.transpose()).amax() < 1e-12);
    assert!(k.symmetric_eigenvalues().min() > 0.0);
    let spectrum = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(spectrum.lines().count(), 6);
}

#[test]
fn reconstruct_static_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    path_graph(dir.path());
    write(dir.path(), "obs.csv", "vertex_index,value\n4,2.0\n0,1.0\n");
    let out = run(
        dir.path(),
        &["reconstruct", "static", "--graph", "g.csv", "--observations", "obs.csv", "--estimator", KRR],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let got = graphkernel::io::read_vector_csv(stdout(&out).as_bytes()).unwrap();

    let g = graphkernel::io::load_graph(&dir.path().join("g.csv")).unwrap();
    let decomp = graphkernel::eigendecompose(&g.laplacian()).unwrap();
    let k = graphkernel::laplacian_kernel(&decomp, &graphkernel::SpectralMapSpec::RegularizedLaplacian { sigma2: 1.0 }).unwrap();
    let obs = graphkernel::io::read_observations("vertex_index,value\n0,1.0\n4,2.0\n".as_bytes(), 5).unwrap();
    let want = graphkernel::krr_fit(&k, &obs, 0.1).unwrap().f_hat;
    assert!((got - want).amax() < 1e-12);
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    path_graph(dir.path());
    write(dir.path(), "obs.csv", "vertex_index,value\n0,1.0\n2,3.0\n");
    let cfg = format!(r#"{{"graph":"g.csv","observations":"obs.csv","estimator":{KRR},"out":"from_config.csv"}}"#);
    write(dir.path(), "cfg.json", &cfg);
    assert_eq!(code(&run(dir.path(), &["reconstruct", "static", "--config", "cfg.json"])), 0);
    assert!(dir.path().join("from_config.csv").exists());
    let out = run(dir.path(), &["reconstruct", "static", "--config", "cfg.json", "--out", "from_flag.csv"]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("from_flag.csv").exists());

    write(dir.path(), "typo.json", r#"{"graph":"g.csv","observation":"obs.csv"}"#);
    assert_eq!(code(&run(dir.path(), &["reconstruct", "static", "--config", "typo.json"])), 2);
}

#[test]
fn wrong_estimator_family_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    path_graph(dir.path());
    write(dir.path(), "obs.csv", "vertex_index,value\n0,1.0\n");
    write(dir.path(), "ts.csv", "t,vertex_index,value\n0,0,1.0\n");
    let ie = r#"{"kind":"ie","kernel":{"kind":"diffusion","sigma2":1},"mu":0.1}"#;
    let out = run(dir.path(), &["reconstruct", "static", "--graph", "g.csv", "--observations", "obs.csv", "--estimator", ie]);
    assert_eq!(code(&out), 2);
    let out = run(dir.path(), &["reconstruct", "batch", "--graph", "g.csv", "--series", "ts.csv", "--estimator", ie]);
    assert_eq!(code(&out), 2);
}

#[test]
fn online_kkf_last_slot_equals_batch() {
    let dir = tempfile::tempdir().unwrap();
    path_graph(dir.path());
    write(dir.path(), "ts.csv", "t,vertex_index,value\n0,0,1.0\n0,3,-1.0\n2,1,0.5\n3,4,2.0\n3,0,0.3\n");
    let kkf = r#"{"kind":"kkf","sigma2":0.5,"coupling":2.0,"mu":0.05}"#;
    let batch = r#"{"kind":"batch","sigma2":0.5,"coupling":2.0,"mu":0.05}"#;
    let base = ["--graph", "g.csv", "--series", "ts.csv"];
    let a = run(dir.path(), &[&["reconstruct", "online"][..], &base, &["--estimator", kkf, "--kkf-params-dir", "pq"]].concat());
    let b = run(dir.path(), &[&["reconstruct", "batch"][..], &base, &["--estimator", batch]].concat());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    let a = graphkernel::io::read_matrix_csv(stdout(&a).as_bytes()).unwrap();
    let b = graphkernel::io::read_matrix_csv(stdout(&b).as_bytes()).unwrap();
    assert_eq!(a.shape(), (5, 4));
    assert!((a.column(3) - b.column(3)).amax() < 1e-9);
    assert!(dir.path().join("pq/P_4.csv").exists() && dir.path().join("pq/Q_1.csv").exists());
}

#[test]
fn eval_nmse_reports_total_and_slots() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "truth.csv", "1,0\n0,2\n");
    write(dir.path(), "est.csv", "1,0\n1,2\n");
    let out = run(dir.path(), &["eval", "nmse", "--estimate", "est.csv", "--truth", "truth.csv", "--out", "slots.csv"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim().parse::<f64>().unwrap(), 0.2);
    let slots = std::fs::read_to_string(dir.path().join("slots.csv")).unwrap();
    assert_eq!(slots, "t,nmse\n0,1.0\n1,0.0\n");
}

fn sim_config(dir: &Path, estimators: &str, sampling: &str) {
    let cfg = format!(
        r#"{{"graph": {{"kind": "erdos_renyi", "n": 30, "p": 0.3}},
            "signal": {{"kind": "time_varying", "t_len": 6,
                        "transition": {{"kind": "scaled_identity", "alpha": 0.9}},
                        "kernel_eta": {{"kind": "diffusion", "sigma2": 1.0}},
                        "kernel_nu": {{"kind": "diffusion", "sigma2": 1.0}},
                        "eta_scale": 1.0, "nu_scale": 0.1}},
            "estimators": [{estimators}],
            "sampling": {sampling},
            "noise": {{"snr_db": 10}}, "trials": 4, "seed": 3}}"#
    );
    write(dir, "sim.json", &cfg);
}

#[test]
fn simulate_writes_reports_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let est = r#"{"kind":"kkf","sigma2":1,"coupling":1,"mu":0.01},{"kind":"ie","kernel":{"kind":"diffusion","sigma2":1},"mu":0.01}"#;
    sim_config(dir.path(), est, r#"{"sizes": [10, 20]}"#);
    let out = run(dir.path(), &["simulate", "--config", "sim.json", "--trials", "3", "--sizes", "5,15", "--output", "out"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["trials"], 3);
    assert_eq!(report["unavailable_comparisons"], serde_json::json!(["dlsr", "lms"]));
    let table = std::fs::read_to_string(dir.path().join("out/nmse.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2);
    assert!(table.lines().skip(1).all(|l| l.contains(",5,") || l.contains(",15,")));
    assert!(dir.path().join("out/slot_nmse.csv").exists());

    // Same seed and overrides, different worker count: identical table.
    let again = bin()
        .current_dir(dir.path())
        .args(["simulate", "--config", "sim.json", "--trials", "3", "--sizes", "5,15", "--threads", "1"])
        .output()
        .unwrap();
    assert_eq!(stdout(&again), table);
}

#[test]
fn simulate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mk = r#"{"kind":"mkrikf","kernels_nu":[{"kind":"diffusion","sigma2":1}],"kernels_eta":[{"kind":"diffusion","sigma2":1}],
                 "transition":{"kind":"scaled_identity","alpha":0.9},"mu1":1,"mu2":1,"rho_nu":0.1,"rho_eta":0.1}"#;
    sim_config(dir.path(), mk, r#"{"sizes": [10], "resample_each_slot": true}"#);
    let out = run(dir.path(), &["simulate", "--config", "sim.json"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    write(dir.path(), "broken.json", r#"{"graph": {"kind": "erdos_renyi", "n": 10}}"#);
    assert_eq!(code(&run(dir.path(), &["simulate", "--config", "broken.json"])), 2);
    assert_eq!(code(&run(dir.path(), &["simulate", "--config", "sim.json", "--trials", "0"])), 2);
    assert_eq!(code(&run(dir.path(), &["simulate"])), 2);
}
