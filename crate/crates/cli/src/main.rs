//! Pipeline driver: each stage of the memory-kernel workflow is a
//! subcommand operating on the text artifacts, so stages can be rerun,
//! swapped, or fed from external dynamics codes that write the same
//! formats.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 comparison failure.

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use gqme_core::dense::DENSE_LIMIT_DEFAULT;
use gqme_core::gqme::{default_initial_sigma, memory_time_search, propagate_gqme, GqmeResult};
use gqme_core::io;
use gqme_core::model::{projected_liouvillian, ElectronicLiouvillian, SpinBosonModel};
use gqme_core::pfi::differentiate;
use gqme_core::tfd::{compute_u_series, Backend};
use gqme_core::volterra::{
    solve_inhomogeneous, solve_kernel, GqmeType, InhomSeries, KernelSeries, VolterraOptions,
};
use gqme_core::{par, Error as CoreError};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "gqme", version, about = "Spin-boson GQME memory kernels from double-space dynamics")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate a model and write the propagator series U(t).
    Propagate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config backend (tt | dense).
        #[arg(long)]
        backend: Option<String>,
        /// Override the tensor-train manifold rank.
        #[arg(long)]
        rank: Option<usize>,
        /// Override any config key, e.g. --set n_modes=2 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Dense backend state-vector length cap.
        #[arg(long, default_value_t = DENSE_LIMIT_DEFAULT)]
        dense_limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Differentiate a propagator series into projection-free inputs.
    Pfi {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the memory-kernel Volterra equation for one GQME type.
    Kernel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "type")]
        gqme_type: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the inhomogeneous term (acceptor type only;
        /// defaults to <out>.inhom).
        #[arg(long)]
        inhom_out: Option<PathBuf>,
    },
    /// Propagate one GQME with a kernel file.
    Gqme {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        inhom: Option<PathBuf>,
        /// Consistency check against the kernel file's type.
        #[arg(long = "type")]
        gqme_type: Option<String>,
        /// Horizon (defaults to the kernel grid span).
        #[arg(long)]
        t_final: Option<f64>,
        /// Memory-time truncation (defaults to the full kernel span).
        #[arg(long)]
        t_mem: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for the shortest converged memory time.
    Memtime {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        inhom: Option<PathBuf>,
        #[arg(long)]
        t_mem_max: Option<f64>,
        #[arg(long, default_value_t = 5e-4)]
        conv_param: f64,
        /// Scan stride in time units (grid-aligned; default 0.25).
        #[arg(long, default_value_t = 0.25)]
        stride: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare σ_z(t) between two results; exits 3 when above tolerance.
    Compare {
        /// Result or u-series file, or rabi:EPSILON:GAMMA.
        #[arg(long)]
        a: String,
        /// Acceptor-side file when A is a donor-only result.
        #[arg(long)]
        a2: Option<PathBuf>,
        #[arg(long)]
        b: String,
        #[arg(long)]
        b2: Option<PathBuf>,
        #[arg(long)]
        tol: f64,
    },
    /// Run every stage for all four GQME types and write a manifest.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = DENSE_LIMIT_DEFAULT)]
        dense_limit: usize,
        #[arg(long)]
        t_mem: Option<f64>,
        #[arg(long, default_value_t = 5e-4)]
        conv_param: f64,
        /// Also run the memory-time search per type.
        #[arg(long)]
        memtime: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn classify(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::InvalidParams(_)
            | CoreError::Parse(_)
            | CoreError::Io(_)
            | CoreError::FingerprintMismatch(_) => 1,
            _ => 2,
        }
    } else {
        1
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with success status
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        par::configure_threads(jobs);
    }
    match run(cli.cmd) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(classify(&e));
        }
    }
}

fn apply_override(cfg: &mut io::ModelConfig, spec: &str) -> anyhow::Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{spec}'"))?;
    let p = &mut cfg.params;
    match key {
        "epsilon" => p.epsilon = value.parse()?,
        "gamma" => p.gamma_c = value.parse()?,
        "beta" => p.beta = value.parse()?,
        "xi" => p.xi = value.parse()?,
        "omega_c" => p.omega_c = value.parse()?,
        "omega_max" => p.omega_max = value.parse()?,
        "n_modes" => p.n_modes = value.parse()?,
        "dt" => p.dt = value.parse()?,
        "t_final" => p.t_final = value.parse()?,
        "n_fock" => p.n_fock = value.parse()?,
        "tt_rank" => cfg.tt_rank = value.parse()?,
        "backend" => cfg.backend = Backend::parse(value)?,
        other => return Err(anyhow!("unknown config key '{other}'")),
    }
    Ok(())
}

fn load_config(
    config: &Path,
    backend: &Option<String>,
    rank: &Option<usize>,
    overrides: &[String],
) -> anyhow::Result<io::ModelConfig> {
    let mut cfg = io::read_model_config(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    for spec in overrides {
        apply_override(&mut cfg, spec)?;
    }
    if let Some(b) = backend {
        cfg.backend = Backend::parse(b)?;
    }
    if let Some(r) = rank {
        cfg.tt_rank = *r;
    }
    cfg.params.validate()?;
    Ok(cfg)
}

fn liouvillian_from(epsilon: f64, gamma_c: f64) -> ElectronicLiouvillian {
    let mut p = gqme_core::model::SpinBosonParams::benchmark(1).unwrap();
    p.epsilon = epsilon;
    p.gamma_c = gamma_c;
    projected_liouvillian(&p)
}

fn run(cmd: Cmd) -> anyhow::Result<i32> {
    match cmd {
        Cmd::Propagate { config, backend, rank, overrides, dense_limit, out } => {
            let cfg = load_config(&config, &backend, &rank, &overrides)?;
            let model = SpinBosonModel::new(cfg.params.clone())?;
            let series = compute_u_series(&model, cfg.backend, cfg.tt_rank, dense_limit)?;
            let fp = io::write_u_series(&out, &series)?;
            println!("wrote {} ({} rows, backend {}, fingerprint {fp})", out.display(), series.n(), cfg.backend.as_str());
            Ok(0)
        }
        Cmd::Pfi { input, out } => {
            let (series, input_fp) = io::read_u_series(&input)?;
            let liouv = liouvillian_from(series.epsilon, series.gamma_c);
            let mut pfi = differentiate(&series, Some(&liouv))?;
            pfi.input = input_fp;
            let fp = io::write_pfi(&out, &pfi)?;
            println!("wrote {} ({} rows, fingerprint {fp})", out.display(), pfi.n());
            Ok(0)
        }
        Cmd::Kernel { input, gqme_type, tol, max_iter, out, inhom_out } => {
            let gtype = GqmeType::parse(&gqme_type)?;
            let (pfi, input_fp) = io::read_pfi(&input)?;
            let mut pfi = pfi;
            pfi.input = input_fp;
            let liouv = liouvillian_from(pfi.epsilon, pfi.gamma_c);
            let opts = VolterraOptions { tol, max_iter };
            let kernel = solve_kernel(&pfi, gtype, &liouv, &opts)?;
            let fp = io::write_kernel(&out, &kernel)?;
            println!(
                "wrote {} (type {}, {} iterations, residual {:.2e}, fingerprint {fp})",
                out.display(),
                gtype.as_str(),
                kernel.iterations_used,
                kernel.residual
            );
            if gtype.needs_inhom(0) {
                let inhom = solve_inhomogeneous(&pfi, &opts)?;
                let path = inhom_out.unwrap_or_else(|| {
                    let mut p = out.as_os_str().to_owned();
                    p.push(".inhom");
                    PathBuf::from(p)
                });
                let ifp = io::write_inhom(&path, &inhom)?;
                println!(
                    "wrote {} ({} iterations, residual {:.2e}, fingerprint {ifp})",
                    path.display(),
                    inhom.iterations_used,
                    inhom.residual
                );
            }
            Ok(0)
        }
        Cmd::Gqme { kernel, inhom, gqme_type, t_final, t_mem, out } => {
            let (kern, kernel_fp) = io::read_kernel(&kernel)?;
            if let Some(t) = gqme_type {
                let want = GqmeType::parse(&t)?;
                if want != kern.gtype {
                    return Err(CoreError::FingerprintMismatch(format!(
                        "kernel file holds type {}, requested {}",
                        kern.gtype.as_str(),
                        want.as_str()
                    ))
                    .into());
                }
            }
            let inhom_series = read_matching_inhom(&kern, inhom.as_deref())?;
            let liouv = liouvillian_from(kern.epsilon, kern.gamma_c);
            let span = (kern.n() - 1) as f64 * kern.dt;
            let t_final = t_final.unwrap_or(span);
            let t_mem = t_mem.unwrap_or(span);
            let sigma0 = default_initial_sigma(kern.gtype);
            let mut result = propagate_gqme(
                &kern,
                inhom_series.as_ref(),
                &liouv,
                &sigma0,
                t_final,
                t_mem,
            )?;
            result.kernel_fp = kernel_fp;
            let fp = io::write_result(&out, &result)?;
            println!("wrote {} ({} rows, t_mem {:.4}, fingerprint {fp})", out.display(), result.n(), t_mem);
            Ok(0)
        }
        Cmd::Memtime { kernel, inhom, t_mem_max, conv_param, stride, out } => {
            let (kern, kernel_fp) = io::read_kernel(&kernel)?;
            let inhom_series = read_matching_inhom(&kern, inhom.as_deref())?;
            let liouv = liouvillian_from(kern.epsilon, kern.gamma_c);
            let span = (kern.n() - 1) as f64 * kern.dt;
            let t_mem_max = t_mem_max.unwrap_or(span);
            let stride_steps = (stride / kern.dt).round().max(1.0) as usize;
            let sigma0 = default_initial_sigma(kern.gtype);
            let (t_mem, mut result) = memory_time_search(
                &kern,
                inhom_series.as_ref(),
                &liouv,
                &sigma0,
                conv_param,
                t_mem_max,
                stride_steps,
            )?;
            result.kernel_fp = kernel_fp;
            let fp = io::write_result(&out, &result)?;
            println!(
                "converged memory time {t_mem:.5} (type {}, conv param {conv_param:.1e}); wrote {} (fingerprint {fp})",
                kern.gtype.as_str(),
                out.display()
            );
            Ok(0)
        }
        Cmd::Compare { a, a2, b, b2, tol } => {
            let (sz_a, dt_a) = load_sigma_z(&a, a2.as_deref(), None)?;
            let (sz_b, dt_b) = load_sigma_z(&b, b2.as_deref(), Some((&sz_a, dt_a)))?;
            if (dt_a - dt_b).abs() > 1e-15 * dt_a.abs().max(1.0) {
                return Err(CoreError::FingerprintMismatch(format!(
                    "grid steps differ: {dt_a:e} vs {dt_b:e}"
                ))
                .into());
            }
            let n = sz_a.len().min(sz_b.len());
            let metric = (0..n)
                .map(|i| (sz_a[i] - sz_b[i]).abs())
                .fold(0.0, f64::max);
            println!("sup-norm sigma_z difference over {n} points: {metric:.6e}");
            Ok(if metric < tol { 0 } else { 3 })
        }
        Cmd::Pipeline {
            config,
            backend,
            rank,
            overrides,
            dense_limit,
            t_mem,
            conv_param,
            memtime,
            out,
        } => run_pipeline(
            &config,
            &backend,
            &rank,
            &overrides,
            dense_limit,
            t_mem,
            conv_param,
            memtime,
            &out,
        ),
    }
}

fn read_matching_inhom(
    kern: &KernelSeries,
    path: Option<&Path>,
) -> anyhow::Result<Option<InhomSeries>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let (inhom, _) = io::read_inhom(p)?;
            if inhom.model != kern.model {
                return Err(CoreError::FingerprintMismatch(
                    "inhomogeneous term and kernel come from different models".into(),
                )
                .into());
            }
            if (inhom.dt - kern.dt).abs() > 1e-15 * kern.dt {
                return Err(CoreError::FingerprintMismatch(
                    "inhomogeneous term and kernel grids differ".into(),
                )
                .into());
            }
            Ok(Some(inhom))
        }
    }
}

/// Load a σ_z series from a result file, a donor/acceptor result pair, a
/// propagator series (direct dynamics), or a `rabi:EPS:GAMMA` closed form.
fn load_sigma_z(
    spec: &str,
    second: Option<&Path>,
    like: Option<(&[f64], f64)>,
) -> anyhow::Result<(Vec<f64>, f64)> {
    if let Some(rest) = spec.strip_prefix("rabi:") {
        let mut it = rest.split(':');
        let eps: f64 = it
            .next()
            .ok_or_else(|| anyhow!("rabi spec needs rabi:EPSILON:GAMMA"))?
            .parse()?;
        let g: f64 = it
            .next()
            .ok_or_else(|| anyhow!("rabi spec needs rabi:EPSILON:GAMMA"))?
            .parse()?;
        let (reference, dt) =
            like.ok_or_else(|| anyhow!("rabi reference needs a gridded series on the other side"))?;
        let sz = gqme_core::dense::rabi_series(eps, g, dt, reference.len().saturating_sub(1));
        return Ok((sz, dt));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if text.starts_with("# gqme-useries") {
        let (u, _) = io::read_u_series(path)?;
        return Ok((u.direct_sigma_z(), u.dt));
    }
    let (result, _) = io::read_result(path)?;
    if let Some(sz) = result.sigma_z() {
        return Ok((sz, result.dt));
    }
    // Scalar single-population result: need the acceptor-side partner.
    let second = second.ok_or_else(|| {
        anyhow!(
            "{} holds a single population; supply the partner file (donor first, acceptor second)",
            path.display()
        )
    })?;
    let (other, _) = io::read_result(second)?;
    let (donor, acceptor) = match (result.gtype, other.gtype) {
        (GqmeType::DonorOnly, GqmeType::AcceptorOnly) => (result, other),
        (GqmeType::AcceptorOnly, GqmeType::DonorOnly) => (other, result),
        _ => {
            return Err(anyhow!(
                "scalar comparison needs one donor-only and one acceptor-only result"
            ))
        }
    };
    if donor.model != acceptor.model {
        return Err(CoreError::FingerprintMismatch(
            "scalar pair comes from different models".into(),
        )
        .into());
    }
    let n = donor.n().min(acceptor.n());
    let sz = (0..n)
        .map(|i| (donor.sigma[i] - acceptor.sigma[i]).re)
        .collect();
    Ok((sz, donor.dt))
}

#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    config: &Path,
    backend: &Option<String>,
    rank: &Option<usize>,
    overrides: &[String],
    dense_limit: usize,
    t_mem: Option<f64>,
    conv_param: f64,
    memtime: bool,
    out_dir: &Path,
) -> anyhow::Result<i32> {
    std::fs::create_dir_all(out_dir)?;
    let cfg = load_config(config, backend, rank, overrides)?;
    let model = SpinBosonModel::new(cfg.params.clone())?;
    let mut manifest = format!(
        "# config {}\n# model {}\n# stage path fingerprint input seconds\n",
        config.display(),
        model.fingerprint()
    );
    let mut record = |stage: &str, path: &Path, fp: &str, input: &str, secs: f64| {
        let _ = writeln!(
            manifest,
            "{stage} {} {fp} {} {secs:.3}",
            path.display(),
            if input.is_empty() { "-" } else { input }
        );
    };

    let t0 = Instant::now();
    let series = compute_u_series(&model, cfg.backend, cfg.tt_rank, dense_limit)?;
    let u_path = out_dir.join("useries.dat");
    let u_fp = io::write_u_series(&u_path, &series)?;
    record("propagate", &u_path, &u_fp, "", t0.elapsed().as_secs_f64());
    println!("propagate: {} rows ({})", series.n(), cfg.backend.as_str());

    let t0 = Instant::now();
    let liouv = projected_liouvillian(&cfg.params);
    let mut pfi = differentiate(&series, Some(&liouv))?;
    pfi.input = u_fp.clone();
    let pfi_path = out_dir.join("pfi.dat");
    let pfi_fp = io::write_pfi(&pfi_path, &pfi)?;
    record("pfi", &pfi_path, &pfi_fp, &u_fp, t0.elapsed().as_secs_f64());

    let opts = VolterraOptions::default();
    let types = [
        GqmeType::Full,
        GqmeType::PopulationsOnly,
        GqmeType::DonorOnly,
        GqmeType::AcceptorOnly,
    ];
    let t0 = Instant::now();
    let kernels: Vec<gqme_core::Result<KernelSeries>> =
        par::map(types.to_vec(), |gt| solve_kernel(&pfi, gt, &liouv, &opts));
    let kernel_secs = t0.elapsed().as_secs_f64();
    let mut kernel_list = Vec::new();
    for k in kernels {
        let mut k = k?;
        k.input = pfi_fp.clone();
        let path = out_dir.join(format!("kernel-{}.dat", k.gtype.as_str()));
        let fp = io::write_kernel(&path, &k)?;
        record("kernel", &path, &fp, &pfi_fp, kernel_secs / 4.0);
        println!(
            "kernel {}: {} iterations, residual {:.2e}",
            k.gtype.as_str(),
            k.iterations_used,
            k.residual
        );
        kernel_list.push((k, fp));
    }

    let t0 = Instant::now();
    let mut inhom = solve_inhomogeneous(&pfi, &opts)?;
    inhom.input = pfi_fp.clone();
    let inhom_path = out_dir.join("inhom-acceptor.dat");
    let inhom_fp = io::write_inhom(&inhom_path, &inhom)?;
    record("inhom", &inhom_path, &inhom_fp, &pfi_fp, t0.elapsed().as_secs_f64());
    println!(
        "inhom acceptor: {} iterations, residual {:.2e}",
        inhom.iterations_used, inhom.residual
    );

    let span = (series.n() - 1) as f64 * series.dt;
    let t_mem = t_mem.unwrap_or(span);
    let mut results: Vec<GqmeResult> = Vec::new();
    for (k, kfp) in &kernel_list {
        let t0 = Instant::now();
        let needs = k.gtype.needs_inhom(0);
        let mut r = propagate_gqme(
            k,
            if needs { Some(&inhom) } else { None },
            &liouv,
            &default_initial_sigma(k.gtype),
            span,
            t_mem,
        )?;
        r.kernel_fp = kfp.clone();
        let path = out_dir.join(format!("result-{}.dat", k.gtype.as_str()));
        let fp = io::write_result(&path, &r)?;
        record("gqme", &path, &fp, kfp, t0.elapsed().as_secs_f64());
        results.push(r);
    }

    // Equivalence report against the direct dynamics.
    let direct = series.direct_sigma_z();
    let sz_of = |r: &GqmeResult| -> Vec<f64> { r.sigma_z().unwrap_or_default() };
    let scalar_sz: Vec<f64> = results[2]
        .sigma
        .iter()
        .zip(&results[3].sigma)
        .map(|(d, a)| (d - a).re)
        .collect();
    for (label, sz) in [
        ("full", sz_of(&results[0])),
        ("pop", sz_of(&results[1])),
        ("scalar-pair", scalar_sz),
    ] {
        let n = sz.len().min(direct.len());
        let metric = (0..n)
            .map(|i| (sz[i] - direct[i]).abs())
            .fold(0.0, f64::max);
        println!("sigma_z sup difference vs direct ({label}): {metric:.3e}");
    }

    if memtime {
        for (k, kfp) in &kernel_list {
            let t0 = Instant::now();
            let needs = k.gtype.needs_inhom(0);
            let stride_steps = ((0.25 / k.dt).round() as usize).max(1);
            let (tm, mut run) = memory_time_search(
                k,
                if needs { Some(&inhom) } else { None },
                &liouv,
                &default_initial_sigma(k.gtype),
                conv_param,
                t_mem,
                stride_steps,
            )?;
            run.kernel_fp = kfp.clone();
            let path = out_dir.join(format!("memtime-{}.dat", k.gtype.as_str()));
            let fp = io::write_result(&path, &run)?;
            record("memtime", &path, &fp, kfp, t0.elapsed().as_secs_f64());
            println!("memory time {}: {tm:.5}", k.gtype.as_str());
        }
    }

    std::fs::write(out_dir.join("manifest.txt"), manifest)?;
    println!("manifest: {}", out_dir.join("manifest.txt").display());
    Ok(0)
}
