//! Run configuration: preset defaults, overridden by a flat `key = value`
//! file, overridden in turn by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linsolve::SolverOptions;
use crate::models::{build_ac, build_ch, build_mbe, build_pfc, ModelKind, ModelSpec};
use crate::stepper::{SchemeKind, StepOptions};

use super::presets::{self, Preset};

/// Model constants; unused entries are ignored by the chosen model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub eps: f64,
    pub mobility: f64,
    pub gamma0: f64,
    pub a0: f64,
    pub b0: f64,
    /// `None` selects the automatic PFC constant.
    pub c0: Option<f64>,
    pub skew: Option<(f64, f64)>,
}

impl ModelParams {
    pub fn defaults(kind: ModelKind) -> Self {
        let base = Self {
            eps: 0.015,
            mobility: 1.0,
            gamma0: 0.0,
            a0: 1.0,
            b0: 0.025,
            c0: None,
            skew: None,
        };
        match kind {
            ModelKind::AllenCahn => base,
            ModelKind::CahnHilliard => Self {
                mobility: presets::SEVEN_DISKS_CH_MOBILITY,
                ..base
            },
            ModelKind::Mbe => Self { eps: 0.1, ..base },
            ModelKind::Pfc => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub params: ModelParams,
    pub scheme: SchemeKind,
    pub relaxed: bool,
    pub eta: f64,
    /// Replaces the optimal `ξ₀` by a constant; diagnostic only.
    pub force_xi: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub preset: Preset,
    /// Initial field for the custom preset; a smooth sine when absent.
    pub init_file: Option<PathBuf>,
    pub log_every: usize,
    pub snapshot_times: Vec<f64>,
    /// No files are written when absent.
    pub output_dir: Option<PathBuf>,
    pub tol: f64,
    pub max_iter: usize,
    pub dealias: bool,
    /// Abort when the scheme's energy increases.
    pub strict: bool,
}

impl RunConfig {
    /// Defaults for a preset. `model` picks between AC and CH for the
    /// seven-disk preset and selects the model for custom runs.
    pub fn for_preset(preset: Preset, model: Option<ModelKind>) -> Self {
        let kind = model.unwrap_or(match preset {
            Preset::SevenDisks | Preset::Smooth | Preset::Custom => ModelKind::AllenCahn,
            Preset::MbeBenchmark => ModelKind::Mbe,
            Preset::PfcBlocks => ModelKind::Pfc,
        });
        let mut c = Self {
            model: kind,
            params: ModelParams::defaults(kind),
            scheme: SchemeKind::Cn,
            relaxed: false,
            eta: 1.0,
            force_xi: None,
            dt: 0.01,
            t_end: 1.0,
            nx: 64,
            ny: 64,
            lx: 1.0,
            ly: 1.0,
            preset,
            init_file: None,
            log_every: 1,
            snapshot_times: Vec::new(),
            output_dir: None,
            tol: SolverOptions::default().tol,
            max_iter: SolverOptions::default().max_iter,
            dealias: false,
            strict: false,
        };
        presets::apply_defaults(&mut c);
        c
    }

    /// Builds a configuration from ordered `key = value` pairs; later pairs
    /// win. `preset` and `model` are resolved first so that the remaining
    /// keys override that preset's defaults.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)> + Clone,
    {
        let mut preset = Preset::Custom;
        let mut model = None;
        for (k, v) in pairs.clone() {
            match normalize(k).as_str() {
                "preset" => preset = v.parse()?,
                "model" => model = Some(v.parse()?),
                _ => {}
            }
        }
        let mut c = Self::for_preset(preset, model);
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Sets one key. Keys accept `-` or `_` as separators.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize(key);
        let v = value.trim();
        let real = || parse_real(&key, v);
        let int = || -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
        };
        match key.as_str() {
            "preset" | "model" => {}
            "scheme" => self.scheme = v.parse()?,
            "relaxed" => self.relaxed = parse_bool(&key, v)?,
            "eta" => self.eta = real()?,
            "force_xi" => self.force_xi = Some(real()?),
            "dt" => self.dt = real()?,
            "t_end" => self.t_end = real()?,
            "nx" => self.nx = int()?,
            "ny" => self.ny = int()?,
            "n" => {
                self.nx = int()?;
                self.ny = self.nx;
            }
            "lx" => self.lx = real()?,
            "ly" => self.ly = real()?,
            "eps" => self.params.eps = real()?,
            "mobility" => self.params.mobility = real()?,
            "gamma0" => self.params.gamma0 = real()?,
            "a0" => self.params.a0 = real()?,
            "b0" => self.params.b0 = real()?,
            "c0" => {
                self.params.c0 = if v == "auto" { None } else { Some(real()?) };
            }
            "skew" => {
                let parts: Vec<&str> = v.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::Config(format!("skew: expected cx,cy, got {v:?}")));
                }
                self.params.skew = Some((parse_real("skew", parts[0])?, parse_real("skew", parts[1])?));
            }
            "init_file" => self.init_file = Some(PathBuf::from(v)),
            "log_every" => self.log_every = int()?,
            "snapshot_times" => {
                self.snapshot_times = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|s| parse_real(&key, s)).collect::<Result<_>>()?
                };
            }
            "out" | "output_dir" => self.output_dir = Some(PathBuf::from(v)),
            "tol" => self.tol = real()?,
            "max_iter" => self.max_iter = int()?,
            "dealias" => self.dealias = parse_bool(&key, v)?,
            "strict" => self.strict = parse_bool(&key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return err(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= self.dt) {
            return err(format!("t_end = {} must be at least dt = {}", self.t_end, self.dt));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::EtaOutOfRange(self.eta));
        }
        if let Some(xi) = self.force_xi {
            if !(0.0..=1.0).contains(&xi) {
                return err(format!("force_xi = {xi} outside [0, 1]"));
            }
        }
        if self.log_every == 0 {
            return err("log_every must be at least 1".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return err("solver tolerance and iteration cap must be positive".into());
        }
        crate::spectral::Grid::new(self.nx, self.ny, self.lx, self.ly)?;
        self.model_spec()?;
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let p = &self.params;
        let spec = match self.model {
            ModelKind::AllenCahn => build_ac(p.eps, p.gamma0)?,
            ModelKind::CahnHilliard => build_ch(p.eps, p.mobility, p.gamma0)?,
            ModelKind::Mbe => build_mbe(p.eps, p.mobility, p.gamma0)?,
            ModelKind::Pfc => build_pfc(p.a0, p.b0, p.gamma0, p.c0)?,
        };
        Ok(match p.skew {
            Some((cx, cy)) => spec.with_skew_drift(cx, cy),
            None => spec,
        })
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions {
            solver: SolverOptions {
                tol: self.tol,
                max_iter: self.max_iter,
            },
            dealias: self.dealias,
        }
    }

    /// Number of steps; `t_end` is rounded to a whole number of steps.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }

    /// Flat `key = value` rendering accepted by [`RunConfig::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let mut out: Vec<(String, String)> = vec![
            ("preset".into(), self.preset.to_string()),
            ("model".into(), self.model.to_string()),
            ("scheme".into(), self.scheme.to_string()),
            ("relaxed".into(), self.relaxed.to_string()),
            ("eta".into(), self.eta.to_string()),
            ("dt".into(), self.dt.to_string()),
            ("t_end".into(), self.t_end.to_string()),
            ("nx".into(), self.nx.to_string()),
            ("ny".into(), self.ny.to_string()),
            ("lx".into(), self.lx.to_string()),
            ("ly".into(), self.ly.to_string()),
            ("eps".into(), p.eps.to_string()),
            ("mobility".into(), p.mobility.to_string()),
            ("gamma0".into(), p.gamma0.to_string()),
            ("a0".into(), p.a0.to_string()),
            ("b0".into(), p.b0.to_string()),
            ("c0".into(), p.c0.map_or("auto".into(), |c| c.to_string())),
            ("log_every".into(), self.log_every.to_string()),
            (
                "snapshot_times".into(),
                self.snapshot_times
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("tol".into(), self.tol.to_string()),
            ("max_iter".into(), self.max_iter.to_string()),
            ("dealias".into(), self.dealias.to_string()),
            ("strict".into(), self.strict.to_string()),
        ];
        if let Some((cx, cy)) = p.skew {
            out.push(("skew".into(), format!("{cx},{cy}")));
        }
        if let Some(xi) = self.force_xi {
            out.push(("force_xi".into(), xi.to_string()));
        }
        if let Some(f) = &self.init_file {
            out.push(("init_file".into(), f.display().to_string()));
        }
        out
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn normalize(key: &str) -> String {
    key.trim()
        .trim_start_matches("--")
        .replace('-', "_")
        .to_ascii_lowercase()
}

fn parse_real(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Config(format!("{key}: value must be finite")))
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" | "" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    parse_config_text(&std::fs::read_to_string(path)?)
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match normalize(s).as_str() {
            "seven_disks" => Ok(Preset::SevenDisks),
            "mbe_benchmark" | "mbe" => Ok(Preset::MbeBenchmark),
            "pfc_blocks" | "pfc" => Ok(Preset::PfcBlocks),
            "smooth" => Ok(Preset::Smooth),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}
