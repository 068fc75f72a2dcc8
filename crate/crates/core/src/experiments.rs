//! Scenario registry, single and paired runs, and continuum-limit sweeps.

use crate::config::{Engine, Provenance, ScenarioConfig, SourceKind};
use crate::error::{Error, Result};
use crate::lattice::{continuum_k_from_lattice, continuum_matched_k, wolf_hopping, Dispersion, Vec3};
use crate::observables::{angular_momenta, fit_alpha, AngularMomenta, AngularMomentumRecord};
use crate::quantum::{init_gaussian, propagate_with, PropagationLog, WaveGrid, SITE_CEILING};
use crate::semiclassical::{apsides, integrate, precession_angles, ApsisEvent, Trajectory};

use Provenance::{Calibration, Caption};

/// Registered presets with a one-line description each.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1-planar", "3-D orthorhombic lattice, planar initial velocity; the orbit stays in the XY plane"),
    ("fig2-lattice", "rectangular lattice a/b = 20; quasi-1-D oscillation along Y"),
    ("fig2-continuum", "continuum counterpart of fig2-lattice with anisotropic masses"),
    ("fig3-lattice", "square lattice a = 1, A = 125, V1 = 20000; precessing orbits"),
    ("fig3-continuum", "continuum counterpart of fig3-lattice; closed ellipse"),
    ("fig5-quasibloch", "2-D Gaussian packet near a strong source; quasi-Bloch oscillation"),
    ("fig5-quasibloch-3d", "3-D version of fig5-quasibloch with the in-plane potential"),
    ("fig7", "paired quantum/semiclassical run with k0 = (-1, 0)"),
    ("fig8-skewness", "1-D packet under a Coulomb source; skewness at t_end"),
    ("free-packet", "free 2-D packet, sigma = 8a, k0 = 0.1/a; group-velocity check"),
    ("bloch-uniform", "uniform force along Y; Bloch oscillation check"),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Lattice constants of the rectangular lattice, in units of the orbital
/// radius: a = 9.5, b = 0.477 (the anisotropy solution for xi = 2.94).
const FIG2_A_OVER_A0: f64 = 9.5;
const FIG2_B_OVER_A0: f64 = 0.477;

fn quantum_base(name: &str, engine: Engine, dims: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::base(name);
    c.preset = Some(name.to_string());
    c.engine = engine;
    c.lattice = crate::lattice::LatticeParams::square(1.0, 1.0, dims);
    c.source_kind = SourceKind::Planar;
    c.source_position = Vec3::new(0.0, -120.0, 0.0);
    c.strength = 307200.0;
    c.softening = 0.5;
    c.position = Vec3::new(0.0, 32.0, 0.0);
    c.momentum = Vec3::zeros();
    c.dt = crate::quantum::DEFAULT_DT;
    c.t_end = 1.0;
    c.sample_every = 100;
    c.sites = [512, 512, 1];
    c.origin = [256, 256, 0];
    c.mark(Caption, &["source.position", "source.strength", "initial.position", "initial.momentum"]);
    c.mark(Calibration, &["lattice.hopping", "source.kind"]);
    c
}

fn fig3_base(name: &str) -> ScenarioConfig {
    let mut c = ScenarioConfig::base(name);
    c.preset = Some(name.to_string());
    c.lattice = crate::lattice::LatticeParams::square(1.0, 125.0, 2);
    c.source_position = Vec3::new(0.0, -140.0, 0.0);
    c.strength = 20000.0;
    c.position = Vec3::new(0.0, 20.0, 0.0);
    c.momentum = Vec3::new(-1.0, 0.0, 0.0);
    c.t_end = 500.0;
    c.mark(
        Caption,
        &[
            "lattice.spacing",
            "lattice.hopping",
            "source.position",
            "source.strength",
            "initial.position",
            "initial.momentum",
        ],
    );
    c.mark(Calibration, &["integration.t_end"]);
    c
}

fn fig2_base(name: &str) -> ScenarioConfig {
    let mut c = ScenarioConfig::base(name);
    c.preset = Some(name.to_string());
    let b = FIG2_B_OVER_A0 / FIG2_A_OVER_A0;
    c.lattice.spacing = Vec3::new(1.0, b, 1.0);
    c.lattice.hopping = Vec3::new(
        wolf_hopping(FIG2_A_OVER_A0, 1.0),
        wolf_hopping(FIG2_B_OVER_A0, 1.0),
        1.0,
    );
    c.source_position = Vec3::zeros();
    c.strength = 1.0;
    c.position = Vec3::new(0.23, 0.0, 0.0);
    c.momentum = Vec3::new(0.0, 5.33 / b, 0.0);
    c.t_end = 20.0;
    c.mark(Caption, &["lattice.spacing", "lattice.hopping", "initial.position", "initial.momentum"]);
    c.mark(Calibration, &["source.position", "source.strength", "integration.t_end"]);
    c
}

/// Looks up a registry preset by name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let cfg = match name {
        "fig1-planar" => {
            let mut c = ScenarioConfig::base(name);
            c.preset = Some(name.to_string());
            c.lattice.dims = 3;
            c.lattice.spacing = Vec3::new(1.0, 0.8, 1.2);
            c.lattice.hopping = Vec3::new(1.0, 1.5, 0.7);
            c.strength = 5.0;
            c.position = Vec3::new(0.0, 2.0 * 0.8, 0.0);
            c.momentum = Vec3::new(0.8, 0.3, 0.0);
            c.t_end = 50.0;
            c.mark(Caption, &["initial.position", "source.position"]);
            c.mark(
                Calibration,
                &["lattice.spacing", "lattice.hopping", "source.strength", "initial.momentum", "integration.t_end"],
            );
            c
        }
        "fig2-lattice" => fig2_base(name),
        "fig2-continuum" => {
            let mut c = fig2_base(name);
            c.lattice.kind = Dispersion::Continuum;
            let b = c.lattice.spacing.y;
            c.momentum.y = continuum_k_from_lattice(5.33 / b, b);
            c.mark(Calibration, &["initial.momentum"]);
            c.mark(Caption, &["lattice.dispersion"]);
            c
        }
        "fig3-lattice" => fig3_base(name),
        "fig3-continuum" => {
            let mut c = fig3_base(name);
            c.lattice.kind = Dispersion::Continuum;
            c.momentum.x = continuum_k_from_lattice(-1.0, 1.0);
            c.mark(Caption, &["lattice.dispersion"]);
            c.mark(Calibration, &["initial.momentum"]);
            c
        }
        "fig5-quasibloch" => quantum_base(name, Engine::Quantum, 2),
        "fig5-quasibloch-3d" => {
            let mut c = quantum_base(name, Engine::Quantum, 3);
            c.sites = [64, 64, 64];
            c.origin = [32, 0, 32];
            c.mark(Calibration, &["grid.sites", "grid.origin"]);
            c
        }
        "fig7" => {
            let mut c = quantum_base(name, Engine::Paired, 2);
            c.momentum = Vec3::new(-1.0, 0.0, 0.0);
            c
        }
        "fig8-skewness" => {
            let mut c = quantum_base(name, Engine::Quantum, 1);
            c.source_kind = SourceKind::Coulomb;
            c.momentum = Vec3::new(-1.0, 0.0, 0.0);
            c.source_position = Vec3::new(-120.0, 0.0, 0.0);
            c.strength = 3072.0;
            c.position = Vec3::new(32.0, 0.0, 0.0);
            c.sites = [512, 1, 1];
            c.origin = [256, 0, 0];
            c.mark(
                Calibration,
                &["source.position", "source.strength", "initial.position", "initial.momentum", "source.kind"],
            );
            c
        }
        "free-packet" => {
            let mut c = ScenarioConfig::base(name);
            c.preset = Some(name.to_string());
            c.engine = Engine::Quantum;
            c.sigma = 8.0;
            c.momentum = Vec3::new(0.1, 0.0, 0.0);
            c.sites = [128, 128, 1];
            c.origin = [64, 64, 0];
            c.mark(Calibration, &["initial.sigma", "initial.momentum", "grid.sites", "grid.origin"]);
            c
        }
        "bloch-uniform" => {
            let mut c = ScenarioConfig::base(name);
            c.preset = Some(name.to_string());
            c.engine = Engine::Quantum;
            c.source_kind = SourceKind::Uniform;
            c.gradient = Vec3::new(0.0, 0.5, 0.0);
            // X axis frozen
            c.lattice.hopping = Vec3::new(0.0, 1.0, 1.0);
            c.dt = 1e-3;
            c.t_end = 8.0 * std::f64::consts::PI;
            c.sample_every = 20;
            c.sites = [48, 128, 1];
            c.origin = [24, 64, 0];
            c.mark(
                Calibration,
                &[
                    "source.kind",
                    "source.gradient",
                    "lattice.hopping",
                    "integration.dt",
                    "integration.t_end",
                    "integration.sample_every",
                    "grid.sites",
                    "grid.origin",
                ],
            );
            c
        }
        _ => return Err(Error::InvalidParameter(format!("unknown preset `{name}`"))),
    };
    Ok(cfg)
}

/// Everything one run produced. All series share the sample times
/// `k * dt * sample_every`.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub config: ScenarioConfig,
    pub trajectory: Option<Trajectory>,
    pub apsides: Vec<ApsisEvent>,
    pub propagation: Option<PropagationLog>,
    pub angular: Vec<AngularMomentumRecord>,
    /// Least-squares coefficient in `Lq - Lc ≈ alpha S`; `None` when `S`
    /// vanishes throughout.
    pub alpha: Option<f64>,
    pub initial_grid: Option<WaveGrid>,
    pub final_grid: Option<WaveGrid>,
}

impl RunBundle {
    /// Every parameter the run used, with its provenance.
    pub fn metadata(&self) -> Vec<(&'static str, String, Provenance)> {
        self.config.entries()
    }

    pub fn sample_count(&self) -> usize {
        match (&self.trajectory, &self.propagation) {
            (Some(t), _) => t.samples.len(),
            (None, Some(p)) => p.samples.len(),
            (None, None) => 0,
        }
    }
}

fn run_quantum(cfg: &ScenarioConfig) -> Result<(WaveGrid, WaveGrid, PropagationLog)> {
    let spec = cfg.grid_spec()?;
    let psi0 = init_gaussian(&spec, &cfg.packet())?;
    let (psi, log) = propagate_with(psi0.clone(), &cfg.propagation_settings(), &cfg.potential(), |_| {})?;
    Ok((psi0, psi, log))
}

fn run_inner(cfg: &ScenarioConfig) -> Result<RunBundle> {
    cfg.validate()?;
    let mut bundle = RunBundle {
        config: cfg.clone(),
        trajectory: None,
        apsides: Vec::new(),
        propagation: None,
        angular: Vec::new(),
        alpha: None,
        initial_grid: None,
        final_grid: None,
    };
    if cfg.engine.has_semiclassical() {
        let traj = integrate(&cfg.initial_state(), &cfg.integrator_settings(), &cfg.lattice, &cfg.potential())?;
        bundle.apsides = apsides(&traj)?;
        bundle.trajectory = Some(traj);
    }
    if cfg.engine.has_quantum() {
        let (psi0, psi, log) = run_quantum(cfg)?;
        bundle.initial_grid = Some(psi0);
        bundle.final_grid = Some(psi);
        bundle.propagation = Some(log);
    }
    if let (Some(traj), Some(log)) = (&bundle.trajectory, &bundle.propagation) {
        let center = cfg.potential().center();
        let series: Vec<(f64, AngularMomenta)> = traj
            .samples
            .iter()
            .zip(&log.samples)
            .map(|(c, q)| {
                let m = angular_momenta(&q.moments.mean, &c.state.r, &q.moments.skew, &c.k_reported, &center);
                (q.t, m)
            })
            .collect();
        let plain: Vec<AngularMomenta> = series.iter().map(|(_, m)| *m).collect();
        bundle.alpha = match fit_alpha(&plain) {
            Ok(a) => Some(a),
            Err(Error::DegenerateFit) => None,
            Err(e) => return Err(e),
        };
        let alpha = bundle.alpha.unwrap_or(0.0);
        bundle.angular = series
            .iter()
            .map(|(t, m)| AngularMomentumRecord {
                t: *t,
                lq: m.lq,
                lc: m.lc,
                s: m.s,
                alpha_s: alpha * m.s,
            })
            .collect();
    }
    Ok(bundle)
}

/// Runs the engines the scenario asks for.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunBundle> {
    run_inner(cfg).map_err(|e| e.in_scenario(&cfg.name))
}

/// Quantum and semiclassical runs from the same initial point and time
/// base, with the angular-momentum comparison. The semiclassical
/// quasimomentum entering `Lq`, `Lc` and `S` is wrapped into the zone.
pub fn paired_run(cfg: &ScenarioConfig) -> Result<RunBundle> {
    let mut paired = cfg.clone();
    paired.engine = Engine::Paired;
    run_scenario(&paired)
}

/// Scalar summary used by sweeps: the mean absolute precession angle per
/// orbit for semiclassical runs, `s_x` at `t_end` for quantum runs.
pub fn summary_value(bundle: &RunBundle) -> Result<f64> {
    if let Some(log) = &bundle.propagation {
        let last = log.samples.last().ok_or_else(|| Error::InvalidParameter("empty propagation log".into()))?;
        return Ok(last.moments.skew.x);
    }
    let traj = bundle
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("bundle holds no run".into()))?;
    let angles = precession_angles(&bundle.apsides, &traj.potential.center());
    if angles.is_empty() {
        return Err(Error::InvalidParameter(
            "fewer than two perihelia: extend integration.t_end".into(),
        ));
    }
    Ok(angles.iter().map(|a| a.abs()).sum::<f64>() / angles.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scale: f64,
    /// Lattice constant along X at this scale.
    pub spacing: f64,
    /// Grid sites (quantum) or zero (semiclassical).
    pub sites: usize,
    pub value: f64,
}

/// Base scenario refined by `scale`: lattice constants times `scale`,
/// hoppings divided by `scale^2` (fixed effective mass), grid counts and
/// origins divided by `scale` (fixed physical extent), and the initial
/// quasimomentum chosen to keep the kinetic energy.
pub fn scaled_config(base: &ScenarioConfig, scale: f64) -> Result<ScenarioConfig> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let mut cfg = base.clone();
    cfg.name = format!("{}@{scale}", base.name);
    let dims = base.lattice.dims;
    cfg.lattice.spacing = base.lattice.spacing * scale;
    cfg.lattice.hopping = base.lattice.hopping / (scale * scale);
    cfg.softening = base.softening * scale;
    if base.lattice.kind == Dispersion::Lattice {
        for axis in 0..dims {
            let a0 = base.lattice.spacing[axis];
            let k_cont = continuum_k_from_lattice(base.momentum[axis], a0);
            cfg.momentum[axis] = continuum_matched_k(k_cont, a0 * scale)?;
        }
    }
    if base.engine.has_quantum() {
        let mut total = 1usize;
        for axis in 0..dims {
            let n = (base.sites[axis] as f64 / scale).round();
            let sites = n as usize;
            total = total.saturating_mul(sites);
            if n > SITE_CEILING as f64 || total > SITE_CEILING {
                return Err(Error::GridGrowth {
                    sites: total.max(sites),
                    ceiling: SITE_CEILING,
                });
            }
            cfg.sites[axis] = sites;
            cfg.origin[axis] = (base.origin[axis] as f64 / scale).round() as i64;
        }
    }
    Ok(cfg)
}

/// Runs the base scenario at every scale. Scales must be strictly
/// decreasing; all grids are checked against the ceiling before any run.
pub fn continuum_sweep(base: &ScenarioConfig, scales: &[f64]) -> Result<Vec<SweepRow>> {
    if scales.is_empty() {
        return Err(Error::InvalidParameter("scale list is empty".into()));
    }
    if scales.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("scales must be strictly decreasing".into()));
    }
    let configs = scales
        .iter()
        .map(|s| scaled_config(base, *s))
        .collect::<Result<Vec<_>>>()?;
    configs
        .iter()
        .zip(scales)
        .map(|(cfg, scale)| {
            let bundle = run_scenario(cfg)?;
            Ok(SweepRow {
                scale: *scale,
                spacing: cfg.lattice.spacing.x,
                sites: if cfg.engine.has_quantum() {
                    cfg.sites[..cfg.lattice.dims].iter().product()
                } else {
                    0
                },
                value: summary_value(&bundle).map_err(|e| e.in_scenario(&cfg.name))?,
            })
        })
        .collect()
}
