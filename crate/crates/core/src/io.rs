//! CSV artifacts and their sidecars. Floats are written with 17 significant
//! digits so that reading a file back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aanalytic::TailField;
use crate::attenuation::HModeField;
use crate::error::{Error, Result};
use crate::fields::{ScalarFieldGrid, VectorFieldGrid};
use crate::spectral::ModeBank;
use crate::transport::{DataTag, Sinogram};

fn fmt(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn row(out: &mut String, cols: &[f64]) {
    for (i, &v) in cols.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        fmt(out, v);
    }
    out.push('\n');
}

/// Path of the `.meta` sidecar next to a CSV file.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    if let Some(ext) = path.extension() {
        name.push(".");
        name.push(ext);
    }
    path.with_file_name(name)
}

fn format_err<T>(path: &Path, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Format(format!("{}: {msg}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinogramMeta {
    pub n_b: usize,
    pub n_phi: usize,
    pub tag: DataTag,
    pub attenuation: String,
    pub ray_step: f64,
}

pub fn write_sinogram(path: &Path, g: &Sinogram) -> Result<()> {
    let mut out = String::from("beta,phi,value\n");
    for j in 0..g.n_b {
        for k in 0..g.n_phi {
            row(&mut out, &[g.beta(j), g.phi(k), g.get(j, k)]);
        }
    }
    fs::write(path, out)?;
    let meta = SinogramMeta {
        n_b: g.n_b,
        n_phi: g.n_phi,
        tag: g.tag,
        attenuation: g.attenuation.clone(),
        ray_step: g.ray_step,
    };
    fs::write(meta_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Reads a sinogram and its sidecar, checking that the rows cover the grid in order.
pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let meta_file = meta_path(path);
    let meta: SinogramMeta = match fs::read_to_string(&meta_file) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", meta_file.display())))?,
        Err(e) => return format_err(&meta_file, e),
    };
    if meta.n_b == 0 || meta.n_phi == 0 {
        return format_err(&meta_file, "empty grid");
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("beta,phi,value") {
        return format_err(path, "expected header beta,phi,value");
    }
    let mut g = Sinogram::zeros(meta.n_b, meta.n_phi, meta.tag, meta.attenuation);
    g.ray_step = meta.ray_step;
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = match line.split(',').map(|c| c.trim().parse::<f64>()).collect() {
            Ok(c) => c,
            Err(e) => return format_err(path, format!("line {}: {e}", i + 2)),
        };
        if cols.len() != 3 {
            return format_err(path, format!("line {}: expected 3 columns", i + 2));
        }
        if count >= g.values.len() {
            return format_err(path, format!("more than {} rows", g.values.len()));
        }
        let (j, k) = (count / meta.n_phi, count % meta.n_phi);
        if (cols[0] - g.beta(j)).abs() > 1e-9 || (cols[1] - g.phi(k)).abs() > 1e-9 {
            return format_err(path, format!("line {}: row out of grid order", i + 2));
        }
        g.values[count] = cols[2];
        count += 1;
    }
    if count != g.values.len() {
        return format_err(path, format!("{count} rows, expected {}", g.values.len()));
    }
    Ok(g)
}

pub fn write_mode_bank(path: &Path, bank: &ModeBank) -> Result<()> {
    let mut out = String::from("beta,n,re,im\n");
    let n = bank.n_mode as i64;
    for j in 0..bank.n_b {
        let beta = 2.0 * std::f64::consts::PI * j as f64 / bank.n_b as f64;
        for m in -n..=n {
            let c = bank.get(j, m);
            fmt(&mut out, beta);
            let _ = write!(out, ",{m},");
            row(&mut out, &[c.re, c.im]);
        }
    }
    fs::write(path, out)?;
    let meta = serde_json::json!({ "n_b": bank.n_b, "n_mode": bank.n_mode });
    fs::write(meta_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Writes `x1,x2,value` over the grid nodes, optionally restricted to the mask.
pub fn write_scalar_field(path: &Path, f: &ScalarFieldGrid, mask_only: bool) -> Result<()> {
    let mut out = String::from("x1,x2,value\n");
    for (k, z) in f.grid.nodes().iter().enumerate() {
        if !mask_only || f.grid.in_mask(k) {
            row(&mut out, &[z.re, z.im, f.values[k]]);
        }
    }
    Ok(fs::write(path, out)?)
}

pub fn write_vector_field(path: &Path, f: &VectorFieldGrid, mask_only: bool) -> Result<()> {
    let mut out = String::from("x1,x2,f1,f2\n");
    for (k, z) in f.grid.nodes().iter().enumerate() {
        if !mask_only || f.grid.in_mask(k) {
            row(&mut out, &[z.re, z.im, f.values[k].re, f.values[k].im]);
        }
    }
    Ok(fs::write(path, out)?)
}

fn tail_planes(path: &Path, points: &[Complex64], slots: &[usize], planes: &[Vec<Complex64>]) -> Result<()> {
    let mut out = String::from("x1,x2,slot,re,im\n");
    for (p, z) in points.iter().enumerate() {
        for (i, &s) in slots.iter().enumerate() {
            let v = planes[i][p];
            fmt(&mut out, z.re);
            out.push(',');
            fmt(&mut out, z.im);
            let _ = write!(out, ",{s},");
            row(&mut out, &[v.re, v.im]);
        }
    }
    Ok(fs::write(path, out)?)
}

/// Values go to `path`; derivative planes, when present, to `<stem>.d.csv` and `<stem>.dbar.csv`.
pub fn write_tail_field(path: &Path, t: &TailField) -> Result<()> {
    tail_planes(path, &t.points, &t.slots, &t.values)?;
    if !t.deriv_slots.is_empty() {
        tail_planes(&with_suffix(path, ".d"), &t.points, &t.deriv_slots, &t.d)?;
        tail_planes(&with_suffix(path, ".dbar"), &t.points, &t.deriv_slots, &t.dbar)?;
    }
    Ok(())
}

pub fn write_h_modes(path: &Path, m: &HModeField) -> Result<()> {
    let mut out = String::from("x1,x2,k,alpha_re,alpha_im,beta_re,beta_im\n");
    for (p, z) in m.points.iter().enumerate() {
        for k in 0..=m.k_h {
            let (a, b) = (m.alpha(p, k), m.beta(p, k));
            fmt(&mut out, z.re);
            out.push(',');
            fmt(&mut out, z.im);
            let _ = write!(out, ",{k},");
            row(&mut out, &[a.re, a.im, b.re, b.im]);
        }
    }
    Ok(fs::write(path, out)?)
}

/// Plain `key = value` lines.
pub fn render_metrics(metrics: &[(String, f64)]) -> String {
    let mut out = String::new();
    for (k, v) in metrics {
        let _ = writeln!(out, "{k} = {v:.16e}");
    }
    out
}

pub fn write_metrics(path: &Path, metrics: &[(String, f64)]) -> Result<()> {
    Ok(fs::write(path, render_metrics(metrics))?)
}

pub fn read_metrics(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return format_err(path, format!("line {}: expected key = value", i + 1));
        };
        let v: f64 = v.trim().parse().map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        out.push((k.trim().to_string(), v));
    }
    Ok(out)
}
