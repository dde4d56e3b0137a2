use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use graphkernel::graph::GraphJson;
use graphkernel::harness::{run_experiment_with_threads, worker_threads};
use graphkernel::io::{
    export_kkf_parameters, load_graph, read_matrix_csv, read_observations, read_time_series, save_graph,
    write_matrix_csv, write_records,
};
use graphkernel::kernels::{kernel_spectrum, spectral_weights};
use graphkernel::{
    build_extended_adjacency, eigendecompose, estimate_series, estimate_static, generate_er_graph, kkf_parameters,
    laplacian_kernel, mkrikf_run, CouplingSpec, EstimatorSpec, ExperimentConfig, Graph, KernelDictionary,
    MkrikfWeights, SpectralMapSpec,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::Value;

use crate::args::*;

/// Raised when a simulation ran but no trial of any estimator succeeded.
#[derive(Debug)]
pub struct AllTrialsFailed;

impl std::fmt::Display for AllTrialsFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "every trial of every estimator failed")
    }
}

impl std::error::Error for AllTrialsFailed {}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_matrix(m: &DMatrix<f64>, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => write_matrix_csv(m, create(p)?)?,
        None => write_matrix_csv(m, std::io::stdout().lock())?,
    }
    Ok(())
}

fn parse_spec<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).with_context(|| format!("invalid {what}"))
}

pub fn graph_gen(a: GraphGenArgs) -> Result<()> {
    let n = required(a.n, "n")?;
    let p = required(a.p, "p")?;
    let g = generate_er_graph(n, p, a.seed.unwrap_or(0))?;
    match &a.out {
        Some(path) => save_graph(&g, path)?,
        None => serde_json::to_writer(std::io::stdout().lock(), &GraphJson::from(&g))?,
    }
    eprintln!("generated graph: n={} edges={}", g.n(), g.edge_count());
    Ok(())
}

#[derive(Serialize)]
struct GraphSummary {
    n: usize,
    edges: usize,
    isolated_vertices: usize,
    components: usize,
    total_weight: f64,
}

fn components(g: &Graph) -> usize {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if !seen[u] && g.adjacency()[(v, u)] > 0.0 {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    count
}

pub fn graph_validate(a: GraphValidateArgs) -> Result<()> {
    let g = load_graph(&required(a.graph, "graph")?)?;
    let summary = GraphSummary {
        n: g.n(),
        edges: g.edge_count(),
        isolated_vertices: g.adjacency().row_iter().filter(|r| r.iter().all(|&w| w == 0.0)).count(),
        components: components(&g),
        total_weight: g.edges().iter().map(|e| e.2).sum(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct SpectrumRow {
    eigenvalue: f64,
    weight: f64,
    kernel_eigenvalue: f64,
}

pub fn kernel_build(a: KernelBuildArgs) -> Result<()> {
    let g = load_graph(&required(a.graph, "graph")?)?;
    let spec: SpectralMapSpec = parse_spec(required(a.kernel, "kernel")?, "kernel")?;
    let decomp = eigendecompose(&g.laplacian())?;
    let k = laplacian_kernel(&decomp, &spec)?;
    if let Some(path) = &a.spectrum_out {
        let r = spectral_weights(&decomp, &spec)?;
        let kr = kernel_spectrum(&decomp, &spec)?;
        let rows: Vec<SpectrumRow> = (0..decomp.n())
            .map(|i| SpectrumRow {
                eigenvalue: decomp.eigenvalues()[i],
                weight: r[i],
                kernel_eigenvalue: kr[i],
            })
            .collect();
        write_records(&rows, create(path)?)?;
    }
    write_matrix(k.matrix(), a.out.as_ref())
}

pub fn reconstruct_static(a: StaticArgs) -> Result<()> {
    let g = load_graph(&required(a.graph, "graph")?)?;
    let spec: EstimatorSpec = parse_spec(required(a.estimator, "estimator")?, "estimator")?;
    if spec.is_dynamic() {
        bail!("{} is a time-varying estimator; use `reconstruct batch` or `reconstruct online`", spec.kind());
    }
    let obs = read_observations(open(&required(a.observations, "observations")?)?, g.n())?;
    let basis = match &a.basis {
        Some(p) => Some(read_matrix_csv(open(p)?)?),
        None => None,
    };
    let decomp = eigendecompose(&g.laplacian())?;
    let f_hat = estimate_static(&spec, &decomp, &obs, basis.as_ref(), a.noise_var)?;
    write_matrix(&DMatrix::from_column_slice(f_hat.len(), 1, f_hat.as_slice()), a.out.as_ref())
}

#[derive(Serialize)]
struct ThetaRow {
    t: usize,
    kernel: &'static str,
    member: usize,
    theta: f64,
}

pub fn reconstruct_series(a: SeriesArgs, online: bool) -> Result<()> {
    let g = load_graph(&required(a.graph, "graph")?)?;
    let spec: EstimatorSpec = parse_spec(required(a.estimator, "estimator")?, "estimator")?;
    let allowed = if online { &["ie", "kkf", "kekrikf", "mkrikf"][..] } else { &["batch"][..] };
    if !allowed.contains(&spec.kind()) {
        bail!("estimator {} is not available here (expected one of {})", spec.kind(), allowed.join(", "));
    }
    let series = read_time_series(open(&required(a.series, "series")?)?, g.n(), a.t_len)?;
    let decomp = eigendecompose(&g.laplacian())?;

    if let Some(dir) = &a.kkf_params_dir {
        let EstimatorSpec::Kkf { sigma2, coupling, .. } = spec else {
            bail!("--kkf-params-dir needs a kkf estimator");
        };
        let graphs = vec![g.clone(); series.t_len()];
        let inv = build_extended_adjacency(&graphs, &CouplingSpec::Diagonal(coupling))?
            .regularized_laplacian_inverse(sigma2)?;
        export_kkf_parameters(&kkf_parameters(&inv)?, dir)?;
    }

    let estimates: Vec<DVector<f64>> = match (&spec, &a.theta_out) {
        (
            EstimatorSpec::Mkrikf {
                kernels_nu,
                kernels_eta,
                transition,
                mu1,
                mu2,
                rho_nu,
                rho_eta,
                solver,
            },
            Some(path),
        ) => {
            let dict_nu = KernelDictionary::laplacian(&decomp, kernels_nu)?;
            let dict_eta = KernelDictionary::laplacian(&decomp, kernels_eta)?;
            let weights = MkrikfWeights {
                mu1: *mu1,
                mu2: *mu2,
                rho_nu: *rho_nu,
                rho_eta: *rho_eta,
            };
            let slots = mkrikf_run(&series, &dict_nu, &dict_eta, &transition.matrix(&g), &weights, solver)?;
            let mut rows = Vec::new();
            for (t, s) in slots.iter().enumerate() {
                for (kernel, theta) in [("nu", &s.theta_nu), ("eta", &s.theta_eta)] {
                    rows.extend(theta.iter().enumerate().map(|(member, &v)| ThetaRow {
                        t,
                        kernel,
                        member,
                        theta: v,
                    }));
                }
            }
            write_records(&rows, create(path)?)?;
            slots.iter().map(|s| s.state.estimate()).collect()
        }
        (_, Some(_)) => bail!("--theta-out needs an mkrikf estimator"),
        _ => estimate_series(&spec, &g, &decomp, &series)?,
    };
    write_matrix(&DMatrix::from_columns(&estimates), a.out.as_ref())
}

#[derive(Serialize)]
struct SlotRow {
    t: usize,
    nmse: f64,
}

pub fn eval_nmse(a: NmseArgs) -> Result<()> {
    let est = read_matrix_csv(open(&required(a.estimate, "estimate")?)?)?;
    let truth = read_matrix_csv(open(&required(a.truth, "truth")?)?)?;
    if est.shape() != truth.shape() {
        bail!("estimate is {:?} but truth is {:?}", est.shape(), truth.shape());
    }
    let energy = truth.norm_squared();
    if energy == 0.0 {
        return Err(graphkernel::Error::ZeroReference.into());
    }
    let diff = &est - &truth;
    if let Some(path) = &a.out {
        let rows: Vec<SlotRow> = (0..truth.ncols())
            .map(|t| {
                let e = truth.column(t).norm_squared();
                SlotRow {
                    t,
                    nmse: if e > 0.0 { diff.column(t).norm_squared() / e } else { f64::NAN },
                }
            })
            .collect();
        write_records(&rows, create(path)?)?;
    }
    println!("{}", diff.norm_squared() / energy);
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(sizes) = a.sizes {
        cfg.sampling.sizes = sizes;
    }
    if let Some(snr) = a.snr_db {
        cfg.noise.snr_db = (snr != f64::INFINITY).then_some(snr);
    }
    if let Some(out) = a.output {
        cfg.output = Some(out);
    }
    cfg.validate()?;
    if a.threads == Some(0) {
        bail!("--threads must be positive");
    }

    let report = run_experiment_with_threads(&cfg, a.threads.unwrap_or_else(worker_threads))?;
    match &cfg.output {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = create(&dir.join("report.json"))?;
            serde_json::to_writer_pretty(&mut f, &report)?;
            writeln!(f)?;
            write_records(&report.table(), create(&dir.join("nmse.csv"))?)?;
            let slots = report.slot_table();
            if !slots.is_empty() {
                write_records(&slots, create(&dir.join("slot_nmse.csv"))?)?;
            }
            eprintln!("wrote report to {}", dir.display());
        }
        None => write_records(&report.table(), std::io::stdout().lock())?,
    }
    eprintln!("{} trials in {:.2} s", cfg.trials, report.runtime_seconds);
    if report.all_failed() {
        return Err(AllTrialsFailed.into());
    }
    Ok(())
}
