//! Scenario configuration: the typed parameter set for one run, its text
//! form (`[section]` headers and `key = value` lines), and the provenance
//! of every value.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lattice::{CoulombSource, Dispersion, LatticeParams, PhaseState, Potential, Vec3};
use crate::quantum::{GaussianPacket, GridSpec, PropagationSettings, SITE_CEILING};
use crate::semiclassical::IntegratorSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Semiclassical,
    Quantum,
    /// Quantum and semiclassical runs on a shared time base.
    Paired,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Semiclassical => "semiclassical",
            Engine::Quantum => "quantum",
            Engine::Paired => "paired",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "semiclassical" => Some(Engine::Semiclassical),
            "quantum" => Some(Engine::Quantum),
            "paired" => Some(Engine::Paired),
            _ => None,
        }
    }

    pub fn has_quantum(self) -> bool {
        matches!(self, Engine::Quantum | Engine::Paired)
    }

    pub fn has_semiclassical(self) -> bool {
        matches!(self, Engine::Semiclassical | Engine::Paired)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Coulomb,
    /// Coulomb source with the distance taken in the XY plane.
    Planar,
    /// Constant force; `source.gradient` is the potential gradient.
    Uniform,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Coulomb => "coulomb",
            SourceKind::Planar => "planar",
            SourceKind::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coulomb" => Some(SourceKind::Coulomb),
            "planar" => Some(SourceKind::Planar),
            "uniform" => Some(SourceKind::Uniform),
            _ => None,
        }
    }
}

/// Where a parameter value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    /// Read from a figure caption.
    Caption,
    /// Chosen where no value is given.
    Calibration,
    /// Module default.
    Default,
    /// Set by the user.
    Override,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Caption => "caption",
            Provenance::Calibration => "calibration",
            Provenance::Default => "default",
            Provenance::Override => "override",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    /// Registry preset the values started from.
    pub preset: Option<String>,
    pub engine: Engine,
    pub lattice: LatticeParams,
    pub source_kind: SourceKind,
    pub source_position: Vec3,
    pub strength: f64,
    pub softening: f64,
    pub gradient: Vec3,
    /// Initial position, or packet center.
    pub position: Vec3,
    /// Initial quasimomentum, or packet mean wavevector.
    pub momentum: Vec3,
    pub sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub min_approach: f64,
    pub sites: [usize; 3],
    pub origin: [i64; 3],
    pub boundary_margin: usize,
    pub boundary_threshold: f64,
    pub provenance: BTreeMap<&'static str, Provenance>,
}

pub const KEYS: &[&str] = &[
    "scenario.name",
    "scenario.engine",
    "lattice.dims",
    "lattice.dispersion",
    "lattice.spacing",
    "lattice.hopping",
    "source.kind",
    "source.position",
    "source.strength",
    "source.softening",
    "source.gradient",
    "initial.position",
    "initial.momentum",
    "initial.sigma",
    "integration.dt",
    "integration.t_end",
    "integration.sample_every",
    "integration.min_approach",
    "grid.sites",
    "grid.origin",
    "grid.boundary_margin",
    "grid.boundary_threshold",
];

fn canonical_key(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_vec(v: &Vec3) -> String {
    format!("{:?}, {:?}, {:?}", v.x, v.y, v.z)
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("expected a number, got `{s}`"))?;
    if !x.is_finite() {
        return Err(format!("value `{s}` is not finite"));
    }
    Ok(x)
}

fn parse_components<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Vec<T>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(format!("expected 1 to 3 comma-separated {what}, got `{s}`"));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| format!("expected {what}, got `{p}`")))
        .collect()
}

/// Updates the leading components of `target`; the rest keep their value.
fn parse_vec_into(s: &str, target: &mut Vec3) -> std::result::Result<(), String> {
    let values: Vec<f64> = parse_components(s, "numbers")?;
    if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
        return Err(format!("component {bad} is not finite"));
    }
    for (i, x) in values.into_iter().enumerate() {
        target[i] = x;
    }
    Ok(())
}

fn positive(key: &str, x: f64) -> std::result::Result<f64, String> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{key} must be positive, got {x}"))
    }
}

fn non_negative(key: &str, x: f64) -> std::result::Result<f64, String> {
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("{key} must be non-negative, got {x}"))
    }
}

impl ScenarioConfig {
    /// Minimal scenario: a 2-D unit square lattice with no source. Every
    /// value is flagged as a default.
    pub fn base(name: &str) -> Self {
        let mut cfg = ScenarioConfig {
            name: name.to_string(),
            preset: None,
            engine: Engine::Semiclassical,
            lattice: LatticeParams::square(1.0, 1.0, 2),
            source_kind: SourceKind::Coulomb,
            source_position: Vec3::zeros(),
            strength: 0.0,
            softening: 0.0,
            gradient: Vec3::zeros(),
            position: Vec3::zeros(),
            momentum: Vec3::zeros(),
            sigma: crate::quantum::DEFAULT_SIGMA,
            dt: crate::semiclassical::DEFAULT_DT,
            t_end: 1.0,
            sample_every: crate::semiclassical::DEFAULT_SAMPLE_EVERY,
            min_approach: crate::semiclassical::DEFAULT_MIN_APPROACH,
            sites: [512, 512, 1],
            origin: [256, 256, 0],
            boundary_margin: crate::quantum::DEFAULT_BOUNDARY_MARGIN,
            boundary_threshold: crate::quantum::DEFAULT_BOUNDARY_THRESHOLD,
            provenance: BTreeMap::new(),
        };
        cfg.mark_all(Provenance::Default);
        cfg
    }

    pub fn mark_all(&mut self, p: Provenance) {
        for k in KEYS {
            self.provenance.insert(k, p);
        }
    }

    /// Flags `keys` with `p`. Panics on an unknown key, which is a bug in a
    /// preset definition.
    pub fn mark(&mut self, p: Provenance, keys: &[&str]) {
        for key in keys {
            let k = canonical_key(key).unwrap_or_else(|| panic!("unknown key {key}"));
            self.provenance.insert(k, p);
        }
    }

    pub fn provenance_of(&self, key: &str) -> Provenance {
        self.provenance.get(key).copied().unwrap_or(Provenance::Default)
    }

    /// Text form of one parameter.
    pub fn get(&self, key: &str) -> Option<String> {
        let dims = self.lattice.dims;
        Some(match key {
            "scenario.name" => self.name.clone(),
            "scenario.engine" => self.engine.as_str().to_string(),
            "lattice.dims" => dims.to_string(),
            "lattice.dispersion" => self.lattice.kind.as_str().to_string(),
            "lattice.spacing" => fmt_vec(&self.lattice.spacing),
            "lattice.hopping" => fmt_vec(&self.lattice.hopping),
            "source.kind" => self.source_kind.as_str().to_string(),
            "source.position" => fmt_vec(&self.source_position),
            "source.strength" => fmt_f64(self.strength),
            "source.softening" => fmt_f64(self.softening),
            "source.gradient" => fmt_vec(&self.gradient),
            "initial.position" => fmt_vec(&self.position),
            "initial.momentum" => fmt_vec(&self.momentum),
            "initial.sigma" => fmt_f64(self.sigma),
            "integration.dt" => fmt_f64(self.dt),
            "integration.t_end" => fmt_f64(self.t_end),
            "integration.sample_every" => self.sample_every.to_string(),
            "integration.min_approach" => fmt_f64(self.min_approach),
            "grid.sites" => fmt_list(&self.sites),
            "grid.origin" => fmt_list(&self.origin),
            "grid.boundary_margin" => self.boundary_margin.to_string(),
            "grid.boundary_threshold" => fmt_f64(self.boundary_threshold),
            _ => return None,
        })
    }

    /// Parses and stores one parameter, checking its individual range.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "scenario.name" => {
                if v.is_empty() {
                    return Err("scenario name must not be empty".into());
                }
                self.name = v.to_string();
            }
            "scenario.engine" => {
                self.engine = Engine::parse(v).ok_or_else(|| format!("unknown engine `{v}`"))?;
            }
            "lattice.dims" => {
                let d: usize = v.parse().map_err(|_| format!("expected an integer, got `{v}`"))?;
                if !(1..=3).contains(&d) {
                    return Err(format!("lattice.dims must be 1, 2 or 3, got {d}"));
                }
                self.lattice.dims = d;
            }
            "lattice.dispersion" => {
                self.lattice.kind =
                    Dispersion::parse(v).ok_or_else(|| format!("unknown dispersion `{v}`"))?;
            }
            "lattice.spacing" => {
                let mut s = self.lattice.spacing;
                parse_vec_into(v, &mut s)?;
                for x in s.iter() {
                    positive(key, *x)?;
                }
                self.lattice.spacing = s;
            }
            "lattice.hopping" => {
                let mut h = self.lattice.hopping;
                parse_vec_into(v, &mut h)?;
                for x in h.iter() {
                    non_negative(key, *x)?;
                }
                self.lattice.hopping = h;
            }
            "source.kind" => {
                self.source_kind = SourceKind::parse(v).ok_or_else(|| format!("unknown source kind `{v}`"))?;
            }
            "source.position" => parse_vec_into(v, &mut self.source_position)?,
            "source.strength" => self.strength = parse_f64(v)?,
            "source.softening" => self.softening = non_negative(key, parse_f64(v)?)?,
            "source.gradient" => parse_vec_into(v, &mut self.gradient)?,
            "initial.position" => parse_vec_into(v, &mut self.position)?,
            "initial.momentum" => parse_vec_into(v, &mut self.momentum)?,
            "initial.sigma" => self.sigma = positive(key, parse_f64(v)?)?,
            "integration.dt" => self.dt = positive(key, parse_f64(v)?)?,
            "integration.t_end" => self.t_end = non_negative(key, parse_f64(v)?)?,
            "integration.sample_every" => {
                let n: usize = v.parse().map_err(|_| format!("expected a count, got `{v}`"))?;
                if n == 0 {
                    return Err("integration.sample_every must be at least 1".into());
                }
                self.sample_every = n;
            }
            "integration.min_approach" => self.min_approach = non_negative(key, parse_f64(v)?)?,
            "grid.sites" => {
                let n: Vec<usize> = parse_components(v, "site counts")?;
                if n.contains(&0) {
                    return Err("grid.sites entries must be at least 1".into());
                }
                for (i, x) in n.into_iter().enumerate() {
                    self.sites[i] = x;
                }
            }
            "grid.origin" => {
                let o: Vec<i64> = parse_components(v, "integers")?;
                for (i, x) in o.into_iter().enumerate() {
                    self.origin[i] = x;
                }
            }
            "grid.boundary_margin" => {
                let n: usize = v.parse().map_err(|_| format!("expected a count, got `{v}`"))?;
                if n == 0 {
                    return Err("grid.boundary_margin must be at least 1".into());
                }
                self.boundary_margin = n;
            }
            "grid.boundary_threshold" => self.boundary_threshold = positive(key, parse_f64(v)?)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// All parameters in text form with their provenance, in key order.
    pub fn entries(&self) -> Vec<(&'static str, String, Provenance)> {
        KEYS.iter()
            .map(|k| (*k, self.get(k).unwrap_or_default(), self.provenance_of(k)))
            .collect()
    }

    pub fn potential(&self) -> Potential {
        let src = CoulombSource::new(self.source_position, self.strength, self.softening);
        match self.source_kind {
            SourceKind::Coulomb => Potential::Coulomb(src),
            SourceKind::Planar => Potential::PlanarCoulomb(src),
            SourceKind::Uniform => Potential::Uniform {
                gradient: self.gradient,
            },
        }
    }

    pub fn initial_state(&self) -> PhaseState {
        PhaseState::new(self.position, self.momentum)
    }

    pub fn packet(&self) -> GaussianPacket {
        GaussianPacket {
            center: self.position,
            k0: self.momentum,
            sigma: self.sigma,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn integrator_settings(&self) -> IntegratorSettings {
        let mut s = IntegratorSettings::new(self.dt, self.t_end, self.sample_every);
        s.min_approach = self.min_approach;
        s
    }

    pub fn propagation_settings(&self) -> PropagationSettings {
        let mut s = PropagationSettings::new(self.dt, self.n_steps(), self.sample_every);
        s.boundary_margin = self.boundary_margin;
        s.boundary_threshold = self.boundary_threshold;
        s
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let d = self.lattice.dims;
        GridSpec::new(self.lattice.clone(), &self.sites[..d], &self.origin[..d])
    }

    /// Cross-field checks that single-key parsing cannot do.
    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        let vectors = [
            ("source.position", self.source_position),
            ("source.gradient", self.gradient),
            ("initial.position", self.position),
            ("initial.momentum", self.momentum),
        ];
        for (key, v) in vectors {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Range(format!("{key} must be finite")));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Range(format!("integration.dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Range(format!("integration.t_end must be non-negative, got {}", self.t_end)));
        }
        if self.sample_every == 0 {
            return Err(Error::Range("integration.sample_every must be at least 1".into()));
        }
        if self.engine.has_semiclassical() && self.t_end <= 0.0 {
            return Err(Error::Range("semiclassical runs need integration.t_end > 0".into()));
        }
        if self.engine.has_quantum() {
            let spec = self.grid_spec()?;
            if spec.len() > SITE_CEILING {
                return Err(Error::GridGrowth {
                    sites: spec.len(),
                    ceiling: SITE_CEILING,
                });
            }
            if self.source_kind != SourceKind::Uniform && self.softening == 0.0 && self.strength != 0.0 {
                let pot = self.potential();
                if (0..spec.len()).any(|i| pot.distance(&spec.position(i)) == 0.0) {
                    return Err(Error::Range(
                        "unsoftened source sits on a grid site; set source.softening".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One `key = value` line after section resolution.
#[derive(Debug, Clone, PartialEq)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn tokenize(text: &str) -> Result<Vec<Entry>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                line,
                message: format!("unterminated section header `{content}`"),
            })?;
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid section name `{name}`"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Parse {
                line,
                message: format!("invalid key `{key}`"),
            });
        }
        let full = match &section {
            Some(s) => format!("{s}.{key}"),
            None => {
                return Err(Error::Parse {
                    line,
                    message: format!("key `{key}` appears before any [section] header"),
                })
            }
        };
        out.push(Entry {
            line,
            key: full,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

/// Parses a scenario file. `scenario.preset` (if present) selects the
/// starting values; every other key overrides one parameter. Values equal
/// to the preset's keep the preset's provenance.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let entries = tokenize(text)?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for e in &entries {
        if let Some(first) = seen.insert(e.key.clone(), e.line) {
            return Err(Error::Parse {
                line: e.line,
                message: format!("`{}` already set on line {first}", e.key),
            });
        }
    }

    let preset = entries.iter().find(|e| e.key == "scenario.preset");
    let mut cfg = match preset {
        Some(e) => crate::experiments::preset(&e.value).map_err(|_| Error::Parse {
            line: e.line,
            message: format!("unknown preset `{}`", e.value),
        })?,
        None => ScenarioConfig::base("custom"),
    };

    for e in entries.iter().filter(|e| e.key != "scenario.preset") {
        let key = canonical_key(&e.key).ok_or_else(|| Error::UnknownKey {
            line: e.line,
            key: e.key.clone(),
        })?;
        let before = cfg.get(key);
        cfg.set(key, &e.value).map_err(|message| Error::Range(format!("line {}: {message}", e.line)))?;
        if cfg.get(key) != before {
            cfg.provenance.insert(key, Provenance::Override);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Text form accepted by [`parse_config`]; provenance is written as
/// trailing comments.
pub fn print_config(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut section = "";
    if let Some(p) = &cfg.preset {
        let _ = writeln!(out, "[scenario]\npreset = {p}");
        section = "scenario";
    }
    for (key, value, prov) in cfg.entries() {
        let (sec, name) = key.split_once('.').expect("keys are section-qualified");
        if sec != section {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{sec}]");
            section = sec;
        }
        let _ = writeln!(out, "{name} = {value}  # {}", prov.as_str());
    }
    out
}
