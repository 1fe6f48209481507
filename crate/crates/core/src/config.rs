//! Run configuration: a flat `key = value` file with embedded defaults.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::aanalytic::CauchyOptions;
use crate::attenuation::HOptions;
use crate::error::{config, Error, Result};
use crate::fields::{Profile, VectorProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_b: usize,
    pub n_phi: usize,
    pub n_mode: usize,
    pub m_seq: usize,
    pub m_max: usize,
    pub k_h: usize,
    pub pitch: f64,
    pub delta: f64,
    pub halo: usize,
    pub ray_step: f64,
    pub radon_samples: usize,
    pub cauchy_tol: f64,
    pub cauchy_oversample: usize,
    /// Gate on range residuals.
    pub tol_range: f64,
    pub tol_h: f64,
    /// Gate on the boundary limit of `u_0`, relative to the data sup norm.
    pub tol_g0: f64,
    pub tol_conj: f64,
    pub seed: u64,
    pub scenario: String,
    pub field: VectorProfile,
    pub attenuation: Profile,
    pub source: Profile,
    pub psi: Profile,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_b: 512,
            n_phi: 256,
            n_mode: 64,
            m_seq: 32,
            m_max: 8,
            k_h: 24,
            pitch: 1.0 / 128.0,
            delta: 0.05,
            halo: 2,
            ray_step: 1.0 / 512.0,
            radon_samples: crate::attenuation::DEFAULT_RADON_SAMPLES,
            cauchy_tol: 1e-11,
            cauchy_oversample: 16,
            tol_range: 1e-3,
            tol_h: 1e-4,
            tol_g0: 5e-3,
            tol_conj: 1e-4,
            seed: 0,
            scenario: "doppler".into(),
            field: VectorProfile::Zero,
            attenuation: Profile::Zero,
            source: Profile::Zero,
            psi: Profile::Zero,
        }
    }
}

const KEYS: &[&str] = &[
    "n_b",
    "n_phi",
    "n_mode",
    "m_seq",
    "m_max",
    "k_h",
    "pitch",
    "delta",
    "halo",
    "ray_step",
    "radon_samples",
    "cauchy_tol",
    "cauchy_oversample",
    "tol_range",
    "tol_h",
    "tol_g0",
    "tol_conj",
    "seed",
    "scenario",
    "field",
    "attenuation",
    "source",
    "psi",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("cannot parse {key} = '{v}'")))
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return config(format!("line {}: expected key = value, got '{raw}'", lineno + 1));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "n_b" => self.n_b = num(key, v)?,
            "n_phi" => self.n_phi = num(key, v)?,
            "n_mode" => self.n_mode = num(key, v)?,
            "m_seq" => self.m_seq = num(key, v)?,
            "m_max" => self.m_max = num(key, v)?,
            "k_h" => self.k_h = num(key, v)?,
            "pitch" => self.pitch = num(key, v)?,
            "delta" => self.delta = num(key, v)?,
            "halo" => self.halo = num(key, v)?,
            "ray_step" => self.ray_step = num(key, v)?,
            "radon_samples" => self.radon_samples = num(key, v)?,
            "cauchy_tol" => self.cauchy_tol = num(key, v)?,
            "cauchy_oversample" => self.cauchy_oversample = num(key, v)?,
            "tol_range" => self.tol_range = num(key, v)?,
            "tol_h" => self.tol_h = num(key, v)?,
            "tol_g0" => self.tol_g0 = num(key, v)?,
            "tol_conj" => self.tol_conj = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "scenario" => self.scenario = v.to_string(),
            "field" => self.field = serde_json::from_str(v)?,
            "attenuation" => self.attenuation = Profile::parse(v)?,
            "source" => self.source = Profile::parse(v)?,
            "psi" => self.psi = Profile::parse(v)?,
            _ => return config(format!("unknown key '{key}' (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_b", self.n_b),
            ("n_phi", self.n_phi),
            ("n_mode", self.n_mode),
            ("m_seq", self.m_seq),
            ("m_max", self.m_max),
            ("k_h", self.k_h),
            ("radon_samples", self.radon_samples),
            ("cauchy_oversample", self.cauchy_oversample),
        ];
        for (k, v) in counts {
            if v == 0 {
                return config(format!("{k} must be positive"));
            }
        }
        if !self.n_b.is_multiple_of(2) || self.n_b < 8 {
            return config(format!("n_b must be even and at least 8, got {}", self.n_b));
        }
        if self.n_phi < 2 * self.n_mode + 2 {
            return config(format!("n_phi = {} cannot resolve n_mode = {}: need n_phi >= 2 n_mode + 2", self.n_phi, self.n_mode));
        }
        if self.n_mode < 2 * self.m_seq || self.n_mode < 2 * self.m_max - 1 {
            return config(format!(
                "n_mode = {} is too small for m_seq = {} and m_max = {}",
                self.n_mode, self.m_seq, self.m_max
            ));
        }
        if self.n_phi < 2 * self.k_h + 2 {
            return config(format!("n_phi = {} cannot resolve k_h = {}", self.n_phi, self.k_h));
        }
        let positive = [
            ("pitch", self.pitch),
            ("delta", self.delta),
            ("ray_step", self.ray_step),
            ("cauchy_tol", self.cauchy_tol),
            ("tol_range", self.tol_range),
            ("tol_h", self.tol_h),
            ("tol_g0", self.tol_g0),
            ("tol_conj", self.tol_conj),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return config(format!("{k} must be positive and finite, got {v}"));
            }
        }
        if self.delta >= 0.5 {
            return config(format!("delta must be below 0.5, got {}", self.delta));
        }
        Ok(())
    }

    /// Dumps every key, one per line, in a form [`RunConfig::parse`] reads back.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let field = serde_json::to_string(&self.field).unwrap_or_default();
        let lines: Vec<(&str, String)> = vec![
            ("n_b", self.n_b.to_string()),
            ("n_phi", self.n_phi.to_string()),
            ("n_mode", self.n_mode.to_string()),
            ("m_seq", self.m_seq.to_string()),
            ("m_max", self.m_max.to_string()),
            ("k_h", self.k_h.to_string()),
            ("pitch", format!("{:e}", self.pitch)),
            ("delta", format!("{:e}", self.delta)),
            ("halo", self.halo.to_string()),
            ("ray_step", format!("{:e}", self.ray_step)),
            ("radon_samples", self.radon_samples.to_string()),
            ("cauchy_tol", format!("{:e}", self.cauchy_tol)),
            ("cauchy_oversample", self.cauchy_oversample.to_string()),
            ("tol_range", format!("{:e}", self.tol_range)),
            ("tol_h", format!("{:e}", self.tol_h)),
            ("tol_g0", format!("{:e}", self.tol_g0)),
            ("tol_conj", format!("{:e}", self.tol_conj)),
            ("seed", self.seed.to_string()),
            ("scenario", self.scenario.clone()),
            ("field", field),
            ("attenuation", self.attenuation.descriptor()),
            ("source", self.source.descriptor()),
            ("psi", self.psi.descriptor()),
        ];
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn cauchy(&self) -> CauchyOptions {
        CauchyOptions { tol: self.cauchy_tol, max_oversample: self.cauchy_oversample, max_radius: 1.0 - 0.25 * self.delta }
    }

    pub fn h_options(&self) -> HOptions {
        HOptions { radon_samples: self.radon_samples, ray_step: self.ray_step, flip_perp: false }
    }

    /// The same run at a coarser level: boundary nodes and directions divided by
    /// `2^level`, grid pitch multiplied by `2^level`. Mode counts are kept unless the
    /// coarser direction grid can no longer resolve them.
    pub fn coarsened(&self, level: u32) -> Self {
        let f = 1usize << level;
        let mut c = self.clone();
        c.n_b = self.n_b / f;
        c.n_phi = self.n_phi / f;
        let cap = c.n_phi.saturating_sub(2) / 2;
        c.n_mode = self.n_mode.min(cap).max(2);
        c.m_seq = self.m_seq.min(c.n_mode / 2).max(1);
        c.m_max = self.m_max.min(c.n_mode.div_ceil(2)).max(1);
        c.k_h = self.k_h.min(2 * c.m_seq - 2).min(cap).max(1);
        c.pitch = self.pitch * f as f64;
        c
    }
}
