use std::io::{self, Write};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use driftlab::calculus::{curl_report_lenient, StepRule, DEFAULT_TOL};
use driftlab::fields::{tail_profile, FieldKind, FieldSpec};
use driftlab::kernels::{KernelFamily, RadialKernel};
use driftlab::losses::{LossKind, LossSpec};
use driftlab::transport::run_transport;
use driftlab::verify::{run_checklist, DEFAULT_SEED};
use driftlab::{TransportConfig, Verdict};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{default_kernel, Accepts, Common, GridSpec, ParticleSource};
use crate::output::{axis_names, to_json, write_csv, OutDir};

const DEMO_POS: [&[f64]; 3] = [&[0.0, 0.0], &[2.0, 0.5], &[0.5, 1.5]];
const DEMO_NEG: [&[f64]; 2] = [&[1.0, -1.0], &[-1.0, 0.5]];

fn demo_sets(defaults: &mut Value, neg_key: &str) {
    defaults["pos"] = ParticleSource::points(&DEMO_POS);
    defaults[neg_key] = ParticleSource::points(&DEMO_NEG);
}

fn require_out<'a>(common: &'a Common, command: &str) -> Result<&'a std::path::Path> {
    common
        .out
        .as_deref()
        .with_context(|| format!("`{command}` writes files: pass --out DIR"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldEvalConfig {
    kernel: RadialKernel,
    field: FieldKind,
    pos: ParticleSource,
    neg: ParticleSource,
    /// Query points; an 11-per-axis grid over `[−3, 3]ⁿ` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    queries: Option<ParticleSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub fn field_eval(common: &Common) -> Result<ExitCode> {
    let mut defaults = json!({ "kernel": default_kernel(KernelFamily::Gaussian), "field": "drift" });
    demo_sets(&mut defaults, "neg");
    let accepts = Accepts { kernel: true, field: true, fd_step: false, tol: false };
    let mut cfg: FieldEvalConfig = common.resolve("field eval", defaults, accepts)?;
    let base = common.base_dir();
    let (pos, pos_src) = cfg.pos.load("pos", &base, cfg.seed, 0)?;
    let (neg, neg_src) = cfg.neg.load("neg", &base, cfg.seed, 1)?;
    let queries = match &cfg.queries {
        Some(q) => {
            let (set, src) = q.load("queries", &base, cfg.seed, 2)?;
            cfg.queries = Some(src);
            set.into_points()
        }
        None => GridSpec::default_for(pos.dim(), 11)?.points()?,
    };
    (cfg.pos, cfg.neg) = (pos_src, neg_src);
    let spec = FieldSpec::new(cfg.field, cfg.kernel, &pos, &neg)?;
    let values = spec.eval_batch(&queries)?;
    let n = pos.dim();
    let mut header = axis_names("x", n);
    header.extend(axis_names("v", n));
    let rows = queries.iter().zip(&values).map(|(x, v)| x.iter().chain(v).copied().collect());
    match &common.out {
        Some(dir) => {
            let out = OutDir::create(dir, common.force)?;
            write_csv(out.file("field.csv")?, &header, rows)?;
            out.write_json("config.json", &cfg)?;
            out.commit()?;
        }
        None => write_csv(io::stdout().lock(), &header, rows)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurlMapConfig {
    kernel: RadialKernel,
    field: FieldKind,
    pos: ParticleSource,
    neg: ParticleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridSpec>,
    fd_step: StepRule,
    tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct CurlSummary {
    field: FieldKind,
    family: KernelFamily,
    sigma: f64,
    grid_points: usize,
    singular_points: usize,
    max_abs_curl: f64,
    max_jacobian_asymmetry: f64,
    tol: f64,
    verdict: Verdict,
}

pub fn curl_map(common: &Common) -> Result<ExitCode> {
    let out_dir = require_out(common, "curl-map")?;
    let mut defaults = json!({
        "kernel": default_kernel(KernelFamily::Gaussian),
        "field": "drift",
        "fd_step": StepRule::default(),
        "tol": DEFAULT_TOL,
    });
    demo_sets(&mut defaults, "neg");
    let accepts = Accepts { kernel: true, field: true, fd_step: true, tol: true };
    let mut cfg: CurlMapConfig = common.resolve("curl-map", defaults, accepts)?;
    let base = common.base_dir();
    let (pos, pos_src) = cfg.pos.load("pos", &base, cfg.seed, 0)?;
    let (neg, neg_src) = cfg.neg.load("neg", &base, cfg.seed, 1)?;
    (cfg.pos, cfg.neg) = (pos_src, neg_src);
    let grid_spec = match cfg.grid.take() {
        Some(g) => g,
        None => GridSpec::default_for(pos.dim(), 20)?,
    };
    let grid = grid_spec.points()?;
    cfg.grid = Some(grid_spec);
    if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        bail!("tol must be a non-negative number");
    }

    let spec = FieldSpec::new(cfg.field, cfg.kernel, &pos, &neg)?;
    let report = curl_report_lenient(|x: &[f64]| spec.eval(x), &grid, cfg.fd_step)?;
    let n = pos.dim();
    let mut header = axis_names("x", n);
    header.extend(axis_names("curl_", n * (n - 1) / 2));
    header.push("asym".into());
    let rows = (0..grid.len()).map(|i| {
        let mut row = grid[i].clone();
        row.extend(&report.curl_values[i]);
        row.push(report.asymmetry[i]);
        row
    });
    let summary = CurlSummary {
        field: cfg.field,
        family: cfg.kernel.family(),
        sigma: cfg.kernel.sigma(),
        grid_points: grid.len(),
        singular_points: report.singular_points,
        max_abs_curl: report.max_abs_curl,
        max_jacobian_asymmetry: report.max_jacobian_asymmetry,
        tol: cfg.tol,
        verdict: report.verdict(cfg.tol),
    };
    if report.singular_points > 0 {
        eprintln!(
            "warning: {} of {} grid points could not be evaluated; their rows are NaN",
            report.singular_points,
            grid.len()
        );
    }
    let out = OutDir::create(out_dir, common.force)?;
    write_csv(out.file("curl.csv")?, &header, rows)?;
    out.write_json("summary.json", &summary)?;
    out.write_json("config.json", &cfg)?;
    out.commit()?;
    print!("{}", to_json(&summary)?);
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TailConfig {
    kernel: RadialKernel,
    data: ParticleSource,
    x_min: f64,
    x_max: f64,
    n_points: usize,
    /// Scale every column to a maximum of 1.
    normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub fn tail(common: &Common) -> Result<ExitCode> {
    let out_dir = require_out(common, "tail-profile")?;
    let defaults = json!({
        "kernel": default_kernel(KernelFamily::Laplacian),
        "data": {
            "toy": {
                "kind": "gaussian_mixture",
                "weights": [0.5, 0.5],
                "means": [[-2.0], [2.0]],
                "covs": [[[0.25]], [[0.25]]],
            },
            "n": 200,
        },
        "x_min": -30.0,
        "x_max": 30.0,
        "n_points": 601,
        "normalize": false,
    });
    let accepts = Accepts { kernel: true, field: false, fd_step: false, tol: false };
    let mut cfg: TailConfig = common.resolve("tail-profile", defaults, accepts)?;
    let (data, src) = cfg.data.load("data", &common.base_dir(), cfg.seed, 0)?;
    cfg.data = src;
    if data.dim() != 1 {
        bail!("tail-profile needs 1-D data, got {}-D", data.dim());
    }
    if cfg.n_points < 2 || cfg.x_min.partial_cmp(&cfg.x_max) != Some(std::cmp::Ordering::Less) {
        bail!("tail-profile needs x_min < x_max and n_points >= 2");
    }
    let xs: Vec<f64> = (0..cfg.n_points)
        .map(|i| cfg.x_min + (cfg.x_max - cfg.x_min) * i as f64 / (cfg.n_points - 1) as f64)
        .collect();
    let rows = tail_profile(&cfg.kernel, &data, &xs)?;
    let scale = |f: fn(&driftlab::fields::TailRow) -> f64| {
        if cfg.normalize {
            rows.iter().map(f).fold(0.0, f64::max)
        } else {
            1.0
        }
    };
    let (su, sd, ss) = (scale(|r| r.unnorm), scale(|r| r.drift), scale(|r| r.sharp));
    let header: Vec<String> = ["x", "unnorm", "drift", "sharp"].map(String::from).to_vec();
    let out = OutDir::create(out_dir, common.force)?;
    write_csv(
        out.file("tail.csv")?,
        &header,
        rows.iter().map(|r| vec![r.x, r.unnorm / su, r.drift / sd, r.sharp / ss]),
    )?;
    out.write_json("config.json", &cfg)?;
    out.commit()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossConfig {
    kernel: RadialKernel,
    loss: LossKind,
    pos: ParticleSource,
    gen: ParticleSource,
    exclude_self: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub fn loss_eval(common: &Common, loss: Option<LossKind>) -> Result<ExitCode> {
    let mut defaults = json!({
        "kernel": default_kernel(KernelFamily::Gaussian),
        "loss": LossKind::LogKde,
        "exclude_self": true,
    });
    demo_sets(&mut defaults, "gen");
    let accepts = Accepts { kernel: true, field: false, fd_step: false, tol: false };
    let mut cfg: LossConfig = common.resolve("loss eval", defaults, accepts)?;
    if let Some(l) = loss {
        cfg.loss = l;
    }
    let base = common.base_dir();
    let (pos, pos_src) = cfg.pos.load("pos", &base, cfg.seed, 0)?;
    let (gen, gen_src) = cfg.gen.load("gen", &base, cfg.seed, 1)?;
    (cfg.pos, cfg.gen) = (pos_src, gen_src);
    let spec = LossSpec {
        kind: cfg.loss,
        kernel: cfg.kernel,
        exclude_self: cfg.exclude_self,
    };
    let value = spec.evaluate(&pos, &gen)?;
    let result = json!({ "kind": cfg.loss, "value": value });
    if let Some(dir) = &common.out {
        let out = OutDir::create(dir, common.force)?;
        out.write_json("loss.json", &result)?;
        out.write_json("config.json", &cfg)?;
        out.commit()?;
    }
    println!("{}", serde_json::to_string(&result)?);
    Ok(ExitCode::SUCCESS)
}

pub fn transport(common: &Common) -> Result<ExitCode> {
    let out_dir = require_out(common, "transport")?;
    let defaults = json!({
        "field": "sharp",
        "kernel": default_kernel(KernelFamily::Laplacian),
        "target": {
            "kind": "gaussian_mixture",
            "weights": [0.5, 0.5],
            "means": [[-2.0, 0.0], [2.0, 0.0]],
            "covs": [[[0.25, 0.0], [0.0, 0.25]], [[0.25, 0.0], [0.0, 0.25]]],
        },
        "n_particles": 256,
        "steps": 500,
        "step_size": 0.5,
    });
    let accepts = Accepts { kernel: true, field: true, fd_step: false, tol: false };
    let mut doc: Value = common.resolve("transport", defaults, accepts)?;
    if doc.get("seed").is_none() {
        bail!("transport is stochastic: a seed is required (--seed or config)");
    }
    if doc.get("n_data").is_none() {
        doc["n_data"] = doc["n_particles"].clone();
    }
    let cfg: TransportConfig =
        serde_json::from_value(doc).map_err(|e| anyhow::anyhow!("invalid transport config: {e}"))?;
    let trace = run_transport(&cfg)?;

    let out = OutDir::create(out_dir, common.force)?;
    out.write_json("config.json", &cfg)?;
    trace.write_metrics_csv(out.file("metrics.csv")?)?;
    trace.data.write_csv(out.file("data.csv")?)?;
    for snap in &trace.snapshots {
        snap.particles
            .write_csv(out.file(&format!("snapshots/step_{:06}.csv", snap.iteration))?)?;
    }
    trace.final_particles().write_csv(out.file("final.csv")?)?;
    out.commit()?;
    let (first, last) = (trace.metrics.first(), trace.metrics.last());
    if let (Some(a), Some(b)) = (first, last) {
        println!(
            "{} steps: mmd_sq {:.4e} -> {:.4e}, mean field norm {:.4e} -> {:.4e}",
            cfg.steps, a.mmd_sq, b.mmd_sq, a.mean_field_norm, b.mean_field_norm
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyConfig {
    seed: u64,
}

pub fn verify(common: &Common) -> Result<ExitCode> {
    let accepts = Accepts { kernel: false, field: false, fd_step: false, tol: false };
    let cfg: VerifyConfig = common.resolve("verify", json!({ "seed": DEFAULT_SEED }), accepts)?;
    let report = run_checklist(cfg.seed);
    let text = report.render();
    if let Some(dir) = &common.out {
        let out = OutDir::create(dir, common.force)?;
        out.write_bytes("report.txt", text.as_bytes())?;
        out.write_json("report.json", &report)?;
        out.write_json("config.json", &cfg)?;
        out.commit()?;
    }
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
