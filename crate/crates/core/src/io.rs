//! Text interchange formats for the pipeline artifacts, plus the content
//! fingerprints that chain them together.
//!
//! All files share one layout: `# key value` header lines followed by one
//! whitespace-separated data line per grid point, starting with the time.
//! Complex numbers are written as (re, im) pairs using the shortest
//! round-trippable float rendering, so rewriting an artifact from the same
//! inputs is byte identical. Writes go through a temp file and rename.

use crate::gqme::GqmeResult;
use crate::model::SpinBosonParams;
use crate::pfi::PfiSeries;
use crate::tfd::{Backend, PropagatorSeries};
use crate::volterra::{GqmeType, InhomSeries, KernelSeries};
use crate::{C64, Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Hex SHA-256 digest.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn atomic_write(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Empty string values are stored as "-" so header lines never lose their
/// value field.
fn opt_str(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

fn unopt(s: &str) -> String {
    if s == "-" {
        String::new()
    } else {
        s.to_string()
    }
}

fn push_c64(line: &mut String, z: C64) {
    let _ = write!(line, " {:e} {:e}", z.re, z.im);
}

struct Parsed {
    kind: String,
    headers: BTreeMap<String, String>,
    rows: Vec<Vec<f64>>,
}

fn parse_file(text: &str) -> Result<Parsed> {
    let mut kind = String::new();
    let mut headers = BTreeMap::new();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if lineno == 0 || kind.is_empty() {
                if let Some(k) = rest.strip_prefix("gqme-") {
                    kind = k.split_whitespace().next().unwrap_or("").to_string();
                    continue;
                }
            }
            let mut it = rest.splitn(2, ' ');
            if let (Some(k), Some(v)) = (it.next(), it.next()) {
                headers.insert(k.to_string(), v.trim().to_string());
            }
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(|tok| tok.parse::<f64>()).collect();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                return Err(Error::Parse(format!("line {}: {e}", lineno + 1)));
            }
        }
    }
    if kind.is_empty() {
        return Err(Error::Parse("missing format magic line".into()));
    }
    Ok(Parsed { kind, headers, rows })
}

fn header<'a>(p: &'a Parsed, key: &str) -> Result<&'a str> {
    p.headers
        .get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Parse(format!("missing header key '{key}'")))
}

fn header_f64(p: &Parsed, key: &str) -> Result<f64> {
    header(p, key)?
        .parse()
        .map_err(|e| Error::Parse(format!("header '{key}': {e}")))
}

fn header_usize(p: &Parsed, key: &str) -> Result<usize> {
    header(p, key)?
        .parse()
        .map_err(|e| Error::Parse(format!("header '{key}': {e}")))
}

fn expect_kind(p: &Parsed, want: &str) -> Result<()> {
    if p.kind != want {
        return Err(Error::Parse(format!(
            "expected a gqme-{want} file, found gqme-{}",
            p.kind
        )));
    }
    Ok(())
}

fn row_complexes(row: &[f64], start: usize, count: usize) -> Vec<C64> {
    (0..count)
        .map(|k| C64::new(row[start + 2 * k], row[start + 2 * k + 1]))
        .collect()
}

// ---------------------------------------------------------------------
// U series
// ---------------------------------------------------------------------

pub fn render_u_series(u: &PropagatorSeries) -> String {
    let n = u.n();
    let mut s = String::new();
    s.push_str("# gqme-useries v1\n");
    let _ = writeln!(s, "# model {}", opt_str(&u.model));
    let _ = writeln!(s, "# backend {}", u.backend.as_str());
    let _ = writeln!(s, "# epsilon {:e}", u.epsilon);
    let _ = writeln!(s, "# gamma {:e}", u.gamma_c);
    let _ = writeln!(s, "# dt {:e}", u.dt);
    let _ = writeln!(s, "# n-steps {n}");
    let _ = writeln!(s, "# tt-rank {}", u.tt_rank);
    let _ = writeln!(s, "# n-fock {}", u.n_fock);
    for i in 0..n {
        let mut line = format!("{:e}", i as f64 * u.dt);
        for e in 0..16 {
            push_c64(&mut line, u.data[i * 16 + e]);
        }
        line.push('\n');
        s.push_str(&line);
    }
    s
}

/// Write and return the content fingerprint.
pub fn write_u_series(path: &Path, u: &PropagatorSeries) -> Result<String> {
    let content = render_u_series(u);
    atomic_write(path, &content)?;
    Ok(fingerprint_bytes(content.as_bytes()))
}

/// Returns the series and the file's content fingerprint.
pub fn read_u_series(path: &Path) -> Result<(PropagatorSeries, String)> {
    let text = std::fs::read_to_string(path)?;
    let fp = fingerprint_bytes(text.as_bytes());
    let p = parse_file(&text)?;
    expect_kind(&p, "useries")?;
    let n = header_usize(&p, "n-steps")?;
    if p.rows.len() != n {
        return Err(Error::Parse(format!(
            "n-steps says {n} but file has {} rows",
            p.rows.len()
        )));
    }
    let mut data = Vec::with_capacity(n * 16);
    for row in &p.rows {
        if row.len() != 1 + 32 {
            return Err(Error::Parse(format!(
                "u-series row must hold 33 numbers, found {}",
                row.len()
            )));
        }
        data.extend(row_complexes(row, 1, 16));
    }
    Ok((
        PropagatorSeries {
            dt: header_f64(&p, "dt")?,
            data,
            backend: Backend::parse(header(&p, "backend")?)?,
            tt_rank: header_usize(&p, "tt-rank")?,
            n_fock: header_usize(&p, "n-fock")?,
            epsilon: header_f64(&p, "epsilon")?,
            gamma_c: header_f64(&p, "gamma")?,
            model: unopt(header(&p, "model")?),
        },
        fp,
    ))
}

// ---------------------------------------------------------------------
// PFI series
// ---------------------------------------------------------------------

pub fn render_pfi(pfi: &PfiSeries) -> String {
    let n = pfi.n();
    let mut s = String::new();
    s.push_str("# gqme-pfi v1\n");
    let _ = writeln!(s, "# model {}", opt_str(&pfi.model));
    let _ = writeln!(s, "# input {}", opt_str(&pfi.input));
    let _ = writeln!(s, "# gamma-state {}", pfi.gamma);
    let _ = writeln!(s, "# epsilon {:e}", pfi.epsilon);
    let _ = writeln!(s, "# gamma {:e}", pfi.gamma_c);
    let _ = writeln!(s, "# dt {:e}", pfi.dt);
    let _ = writeln!(s, "# n-steps {n}");
    for i in 0..n {
        let mut line = format!("{:e}", i as f64 * pfi.dt);
        for e in 0..16 {
            push_c64(&mut line, pfi.f[i * 16 + e]);
        }
        for e in 0..16 {
            push_c64(&mut line, pfi.fdot[i * 16 + e]);
        }
        for z in pfi.z_at(i) {
            push_c64(&mut line, z);
        }
        line.push('\n');
        s.push_str(&line);
    }
    s
}

pub fn write_pfi(path: &Path, pfi: &PfiSeries) -> Result<String> {
    let content = render_pfi(pfi);
    atomic_write(path, &content)?;
    Ok(fingerprint_bytes(content.as_bytes()))
}

pub fn read_pfi(path: &Path) -> Result<(PfiSeries, String)> {
    let text = std::fs::read_to_string(path)?;
    let fp = fingerprint_bytes(text.as_bytes());
    let p = parse_file(&text)?;
    expect_kind(&p, "pfi")?;
    let n = header_usize(&p, "n-steps")?;
    if p.rows.len() != n {
        return Err(Error::Parse("pfi row count mismatch".into()));
    }
    let mut f = Vec::with_capacity(n * 16);
    let mut fdot = Vec::with_capacity(n * 16);
    for row in &p.rows {
        if row.len() != 1 + 2 * (16 + 16 + 4) {
            return Err(Error::Parse(format!(
                "pfi row must hold 73 numbers, found {}",
                row.len()
            )));
        }
        f.extend(row_complexes(row, 1, 16));
        fdot.extend(row_complexes(row, 33, 16));
    }
    Ok((
        PfiSeries {
            dt: header_f64(&p, "dt")?,
            f,
            fdot,
            gamma: header_usize(&p, "gamma-state")?,
            epsilon: header_f64(&p, "epsilon")?,
            gamma_c: header_f64(&p, "gamma")?,
            model: unopt(header(&p, "model")?),
            input: unopt(header(&p, "input")?),
        },
        fp,
    ))
}

// ---------------------------------------------------------------------
// Kernel and inhomogeneous term
// ---------------------------------------------------------------------

pub fn render_kernel(k: &KernelSeries) -> String {
    let n = k.n();
    let s2 = k.gtype.n_set() * k.gtype.n_set();
    let mut s = String::new();
    s.push_str("# gqme-kernel v1\n");
    let _ = writeln!(s, "# model {}", opt_str(&k.model));
    let _ = writeln!(s, "# input {}", opt_str(&k.input));
    let _ = writeln!(s, "# type {}", k.gtype.as_str());
    let _ = writeln!(s, "# epsilon {:e}", k.epsilon);
    let _ = writeln!(s, "# gamma {:e}", k.gamma_c);
    let _ = writeln!(s, "# dt {:e}", k.dt);
    let _ = writeln!(s, "# n-steps {n}");
    let _ = writeln!(s, "# iterations {}", k.iterations_used);
    let _ = writeln!(s, "# residual {:e}", k.residual);
    for i in 0..n {
        let mut line = format!("{:e}", i as f64 * k.dt);
        for e in 0..s2 {
            push_c64(&mut line, k.data[i * s2 + e]);
        }
        line.push('\n');
        s.push_str(&line);
    }
    s
}

pub fn write_kernel(path: &Path, k: &KernelSeries) -> Result<String> {
    let content = render_kernel(k);
    atomic_write(path, &content)?;
    Ok(fingerprint_bytes(content.as_bytes()))
}

pub fn read_kernel(path: &Path) -> Result<(KernelSeries, String)> {
    let text = std::fs::read_to_string(path)?;
    let fp = fingerprint_bytes(text.as_bytes());
    let p = parse_file(&text)?;
    expect_kind(&p, "kernel")?;
    let gtype = GqmeType::parse(header(&p, "type")?)?;
    let n = header_usize(&p, "n-steps")?;
    let s2 = gtype.n_set() * gtype.n_set();
    if p.rows.len() != n {
        return Err(Error::Parse("kernel row count mismatch".into()));
    }
    let mut data = Vec::with_capacity(n * s2);
    for row in &p.rows {
        if row.len() != 1 + 2 * s2 {
            return Err(Error::Parse(format!(
                "kernel row must hold {} numbers, found {}",
                1 + 2 * s2,
                row.len()
            )));
        }
        data.extend(row_complexes(row, 1, s2));
    }
    Ok((
        KernelSeries {
            dt: header_f64(&p, "dt")?,
            gtype,
            data,
            iterations_used: header_usize(&p, "iterations")?,
            residual: header_f64(&p, "residual")?,
            epsilon: header_f64(&p, "epsilon")?,
            gamma_c: header_f64(&p, "gamma")?,
            model: unopt(header(&p, "model")?),
            input: unopt(header(&p, "input")?),
        },
        fp,
    ))
}

pub fn render_inhom(i: &InhomSeries) -> String {
    let mut s = String::new();
    s.push_str("# gqme-inhom v1\n");
    let _ = writeln!(s, "# model {}", opt_str(&i.model));
    let _ = writeln!(s, "# input {}", opt_str(&i.input));
    let _ = writeln!(s, "# dt {:e}", i.dt);
    let _ = writeln!(s, "# n-steps {}", i.data.len());
    let _ = writeln!(s, "# iterations {}", i.iterations_used);
    let _ = writeln!(s, "# residual {:e}", i.residual);
    for (t, z) in i.data.iter().enumerate() {
        let mut line = format!("{:e}", t as f64 * i.dt);
        push_c64(&mut line, *z);
        line.push('\n');
        s.push_str(&line);
    }
    s
}

pub fn write_inhom(path: &Path, i: &InhomSeries) -> Result<String> {
    let content = render_inhom(i);
    atomic_write(path, &content)?;
    Ok(fingerprint_bytes(content.as_bytes()))
}

pub fn read_inhom(path: &Path) -> Result<(InhomSeries, String)> {
    let text = std::fs::read_to_string(path)?;
    let fp = fingerprint_bytes(text.as_bytes());
    let p = parse_file(&text)?;
    expect_kind(&p, "inhom")?;
    let n = header_usize(&p, "n-steps")?;
    if p.rows.len() != n {
        return Err(Error::Parse("inhom row count mismatch".into()));
    }
    let mut data = Vec::with_capacity(n);
    for row in &p.rows {
        if row.len() != 3 {
            return Err(Error::Parse("inhom row must hold 3 numbers".into()));
        }
        data.push(C64::new(row[1], row[2]));
    }
    Ok((
        InhomSeries {
            dt: header_f64(&p, "dt")?,
            data,
            iterations_used: header_usize(&p, "iterations")?,
            residual: header_f64(&p, "residual")?,
            model: unopt(header(&p, "model")?),
            input: unopt(header(&p, "input")?),
        },
        fp,
    ))
}

// ---------------------------------------------------------------------
// GQME results
// ---------------------------------------------------------------------

pub fn render_result(r: &GqmeResult) -> String {
    let n = r.n();
    let s_set = r.gtype.n_set();
    let sz = r.sigma_z();
    let mut s = String::new();
    s.push_str("# gqme-result v1\n");
    let _ = writeln!(s, "# model {}", opt_str(&r.model));
    let _ = writeln!(s, "# kernel {}", opt_str(&r.kernel_fp));
    let _ = writeln!(s, "# type {}", r.gtype.as_str());
    let _ = writeln!(s, "# dt {:e}", r.dt);
    let _ = writeln!(s, "# n-steps {n}");
    let _ = writeln!(s, "# memory-time {:e}", r.memory_time);
    for i in 0..n {
        let mut line = format!("{:e}", i as f64 * r.dt);
        for e in 0..s_set {
            push_c64(&mut line, r.sigma[i * s_set + e]);
        }
        if let Some(sz) = &sz {
            let _ = write!(line, " {:e}", sz[i]);
        }
        line.push('\n');
        s.push_str(&line);
    }
    s
}

pub fn write_result(path: &Path, r: &GqmeResult) -> Result<String> {
    let content = render_result(r);
    atomic_write(path, &content)?;
    Ok(fingerprint_bytes(content.as_bytes()))
}

pub fn read_result(path: &Path) -> Result<(GqmeResult, String)> {
    let text = std::fs::read_to_string(path)?;
    let fp = fingerprint_bytes(text.as_bytes());
    let p = parse_file(&text)?;
    expect_kind(&p, "result")?;
    let gtype = GqmeType::parse(header(&p, "type")?)?;
    let n = header_usize(&p, "n-steps")?;
    let s_set = gtype.n_set();
    if p.rows.len() != n {
        return Err(Error::Parse("result row count mismatch".into()));
    }
    let has_sz = matches!(gtype, GqmeType::Full | GqmeType::PopulationsOnly);
    let want_cols = 1 + 2 * s_set + usize::from(has_sz);
    let mut sigma = Vec::with_capacity(n * s_set);
    for row in &p.rows {
        if row.len() != want_cols {
            return Err(Error::Parse(format!(
                "result row must hold {want_cols} numbers, found {}",
                row.len()
            )));
        }
        sigma.extend(row_complexes(row, 1, s_set));
    }
    Ok((
        GqmeResult {
            dt: header_f64(&p, "dt")?,
            gtype,
            sigma,
            memory_time: header_f64(&p, "memory-time")?,
            kernel_fp: unopt(header(&p, "kernel")?),
            model: unopt(header(&p, "model")?),
        },
        fp,
    ))
}

// ---------------------------------------------------------------------
// Model configuration
// ---------------------------------------------------------------------

/// Parsed model configuration: physical parameters plus the tensor-train
/// rank and default backend.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub params: SpinBosonParams,
    pub tt_rank: usize,
    pub backend: Backend,
}

/// Parse a flat key-value configuration (`key value` or `key = value`,
/// `#` comments). Every key is required; errors name the missing key.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cleaned = line.replace('=', " ");
        let mut it = cleaned.split_whitespace();
        let key = it.next().unwrap_or("");
        let value = it.next().unwrap_or("");
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse(format!("malformed config line: '{line}'")));
        }
        map.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<&String> {
        map.get(key)
            .ok_or_else(|| Error::InvalidParams(format!("missing config key '{key}'")))
    };
    let get_f64 = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|e| Error::Parse(format!("config key '{key}': {e}")))
    };
    let get_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|e| Error::Parse(format!("config key '{key}': {e}")))
    };
    let params = SpinBosonParams {
        epsilon: get_f64("epsilon")?,
        gamma_c: get_f64("gamma")?,
        beta: get_f64("beta")?,
        xi: get_f64("xi")?,
        omega_c: get_f64("omega_c")?,
        omega_max: get_f64("omega_max")?,
        n_modes: get_usize("n_modes")?,
        dt: get_f64("dt")?,
        t_final: get_f64("t_final")?,
        n_fock: get_usize("n_fock")?,
    };
    params.validate()?;
    Ok(ModelConfig {
        params,
        tt_rank: get_usize("tt_rank")?,
        backend: Backend::parse(get("backend")?)?,
    })
}

pub fn read_model_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_model_config(&text)
}
