//! Fixed-step RK4 integration of the semiclassical equations of motion
//! `dr/dt = grad_k E(k)`, `dk/dt = -grad V(r)`, with per-sample energy and
//! angular-momentum diagnostics and apsis detection.

use crate::error::{Error, Result};
use crate::lattice::{hamiltonian_value, lz, lz_rate, LatticeParams, PhaseState, Potential, Vec3};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_SAMPLE_EVERY: usize = 100;
pub const DEFAULT_MIN_APPROACH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    /// Closest allowed approach to an unsoftened source.
    pub min_approach: f64,
    /// Abort when the relative energy drift exceeds this value.
    pub energy_tolerance: Option<f64>,
}

impl IntegratorSettings {
    pub fn new(dt: f64, t_end: f64, sample_every: usize) -> Self {
        IntegratorSettings {
            dt,
            t_end,
            sample_every,
            min_approach: DEFAULT_MIN_APPROACH,
            energy_tolerance: None,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be at least 1".into()));
        }
        if !(self.min_approach >= 0.0) {
            return Err(Error::InvalidParameter("min_approach must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    /// Integrated state; `k` is not wrapped into the Brillouin zone.
    pub state: PhaseState,
    /// `k` wrapped into the zone, used for every reported quantity.
    pub k_reported: Vec3,
    pub energy: f64,
    pub lz: f64,
    pub lz_rate: f64,
}

impl TrajectorySample {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub lattice: LatticeParams,
    pub potential: Potential,
    pub dt: f64,
    pub sample_every: usize,
    pub final_state: PhaseState,
    /// Largest `|E - E0| / |E0|` over the samples (absolute when `E0 = 0`).
    pub max_energy_drift: f64,
}

impl Trajectory {
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.sample_every as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.state.t)
    }

    pub fn radius(&self, i: usize) -> f64 {
        (self.samples[i].state.r - self.potential.center()).norm()
    }
}

struct Rk4<'a> {
    lat: &'a LatticeParams,
    pot: &'a Potential,
    min_approach: f64,
}

impl<'a> Rk4<'a> {
    fn guard_singular(&self) -> bool {
        self.pot.softening() == 0.0 && self.pot.strength() != 0.0
    }

    fn deriv(&self, r: &Vec3, k: &Vec3, t: f64) -> Result<(Vec3, Vec3)> {
        if self.guard_singular() {
            let distance = self.pot.distance(r);
            if distance < self.min_approach {
                return Err(Error::SingularityApproach { t, distance });
            }
        }
        Ok((self.lat.group_velocity(k), self.pot.kdot(r)?))
    }

    fn step(&self, s: &PhaseState, h: f64) -> Result<PhaseState> {
        let (r1, k1) = self.deriv(&s.r, &s.k, s.t)?;
        let half = 0.5 * h;
        let (r2, k2) = self.deriv(&(s.r + r1 * half), &(s.k + k1 * half), s.t + half)?;
        let (r3, k3) = self.deriv(&(s.r + r2 * half), &(s.k + k2 * half), s.t + half)?;
        let (r4, k4) = self.deriv(&(s.r + r3 * h), &(s.k + k3 * h), s.t + h)?;
        let sixth = h / 6.0;
        Ok(PhaseState {
            r: s.r + (r1 + (r2 + r3) * 2.0 + r4) * sixth,
            k: s.k + (k1 + (k2 + k3) * 2.0 + k4) * sixth,
            t: s.t + h,
        })
    }

    /// Advance from `s` to time `t` with steps no longer than `max_step`.
    fn advance_to(&self, s: &PhaseState, t: f64, max_step: f64) -> Result<PhaseState> {
        let span = t - s.t;
        if span == 0.0 {
            return Ok(*s);
        }
        let n = (span.abs() / max_step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let mut cur = *s;
        let t0 = s.t;
        for i in 0..n {
            cur = self.step(&cur, h)?;
            cur.t = t0 + h * (i + 1) as f64;
        }
        cur.t = t;
        Ok(cur)
    }
}

fn sample(state: &PhaseState, lat: &LatticeParams, pot: &Potential) -> Result<TrajectorySample> {
    let k_reported = lat.wrap(&state.k);
    let reported = PhaseState {
        k: k_reported,
        ..*state
    };
    Ok(TrajectorySample {
        state: *state,
        k_reported,
        energy: hamiltonian_value(state, lat, pot)?,
        lz: lz(&reported, &pot.center()),
        lz_rate: lz_rate(&k_reported, lat),
    })
}

fn relative_drift(e: f64, e0: f64) -> f64 {
    if e0 == 0.0 {
        (e - e0).abs()
    } else {
        ((e - e0) / e0).abs()
    }
}

/// Classical RK4 over the coupled `(r, k)` system. The trajectory holds the
/// initial state and every `sample_every`-th step after it.
pub fn integrate(
    initial: &PhaseState,
    settings: &IntegratorSettings,
    lat: &LatticeParams,
    pot: &Potential,
) -> Result<Trajectory> {
    integrate_with(initial, settings, lat, pot, |_| {})
}

fn integrate_with(
    initial: &PhaseState,
    settings: &IntegratorSettings,
    lat: &LatticeParams,
    pot: &Potential,
    mut on_step: impl FnMut(&PhaseState),
) -> Result<Trajectory> {
    settings.validate()?;
    lat.validate()?;
    let rk = Rk4 {
        lat,
        pot,
        min_approach: settings.min_approach,
    };
    rk.deriv(&initial.r, &initial.k, initial.t)?;

    let n_steps = settings.n_steps();
    let first = sample(initial, lat, pot)?;
    let e0 = first.energy;
    let mut samples = Vec::with_capacity(n_steps / settings.sample_every + 1);
    samples.push(first);
    let mut max_drift = 0.0f64;

    let mut state = *initial;
    on_step(&state);
    for step in 1..=n_steps {
        state = rk.step(&state, settings.dt)?;
        state.t = initial.t + settings.dt * step as f64;
        on_step(&state);
        if step % settings.sample_every == 0 {
            let s = sample(&state, lat, pot)?;
            max_drift = max_drift.max(relative_drift(s.energy, e0));
            samples.push(s);
        }
    }
    let end_energy = hamiltonian_value(&state, lat, pot)?;
    max_drift = max_drift.max(relative_drift(end_energy, e0));
    if let Some(tolerance) = settings.energy_tolerance {
        if max_drift > tolerance {
            return Err(Error::EnergyDrift {
                drift: max_drift,
                tolerance,
            });
        }
    }

    Ok(Trajectory {
        samples,
        lattice: lat.clone(),
        potential: pot.clone(),
        dt: settings.dt,
        sample_every: settings.sample_every,
        final_state: state,
        max_energy_drift: max_drift,
    })
}

/// Largest `|z|` reached at any step of the run.
pub fn planarity_check(
    initial: &PhaseState,
    settings: &IntegratorSettings,
    lat: &LatticeParams,
    pot: &Potential,
) -> Result<f64> {
    let mut max_z = 0.0f64;
    integrate_with(initial, settings, lat, pot, |s| max_z = max_z.max(s.r.z.abs()))?;
    Ok(max_z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApsisKind {
    Perihelion,
    Aphelion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApsisEvent {
    pub t: f64,
    pub kind: ApsisKind,
    pub radius: f64,
    /// Sample index closest to the event.
    pub sample: usize,
    pub state: PhaseState,
}

// Extrema shallower than this relative depth are treated as flat.
const APSIS_FLATNESS: f64 = 1e-10;

/// Local extrema of the distance to the source.
///
/// Candidates come from a three-point comparison of the sampled radius. The
/// event time starts from the vertex of the parabola through those three
/// samples and is then polished to the zero of the radial velocity by
/// re-integrating from the neighbouring sample.
pub fn apsides(traj: &Trajectory) -> Result<Vec<ApsisEvent>> {
    let n = traj.samples.len();
    if n < 3 {
        return Ok(Vec::new());
    }
    let radii: Vec<f64> = (0..n).map(|i| traj.radius(i)).collect();
    let rk = Rk4 {
        lat: &traj.lattice,
        pot: &traj.potential,
        min_approach: 0.0,
    };
    let center = traj.potential.center();
    let h = traj.sample_interval();

    let mut events = Vec::new();
    for i in 1..n - 1 {
        let (r0, r1, r2) = (radii[i - 1], radii[i], radii[i + 1]);
        let kind = if r1 < r0 && r1 <= r2 {
            ApsisKind::Perihelion
        } else if r1 > r0 && r1 >= r2 {
            ApsisKind::Aphelion
        } else {
            continue;
        };
        let depth = (r0 - r1).abs().max((r2 - r1).abs());
        if depth <= APSIS_FLATNESS * r1 {
            continue;
        }

        let base = traj.samples[i - 1].state;
        let t_lo = base.t;
        let t_hi = traj.samples[i + 1].state.t;
        let curvature = r0 - 2.0 * r1 + r2;
        let mut t_guess = traj.samples[i].state.t;
        if curvature != 0.0 {
            t_guess += 0.5 * h * (r0 - r2) / curvature;
        }
        t_guess = t_guess.clamp(t_lo, t_hi);

        let radial = |t: f64| -> Result<(f64, PhaseState)> {
            let s = rk.advance_to(&base, t, traj.dt)?;
            Ok(((s.r - center).dot(&traj.lattice.group_velocity(&s.k)), s))
        };
        let state = polish_apsis(radial, t_lo, t_hi, t_guess)?;
        events.push(ApsisEvent {
            t: state.t,
            kind,
            radius: (state.r - center).norm(),
            sample: i,
            state,
        });
    }
    Ok(events)
}

fn polish_apsis(
    f: impl Fn(f64) -> Result<(f64, PhaseState)>,
    t_lo: f64,
    t_hi: f64,
    t_guess: f64,
) -> Result<PhaseState> {
    let (mut a, mut b) = (t_lo, t_hi);
    let (mut fa, _) = f(a)?;
    let (mut fb, _) = f(b)?;
    let (fg, sg) = f(t_guess)?;
    if fg == 0.0 || (fa < 0.0) == (fb < 0.0) {
        return Ok(sg);
    }
    if (fg < 0.0) == (fa < 0.0) {
        a = t_guess;
        fa = fg;
    } else {
        b = t_guess;
        fb = fg;
    }
    // Illinois variant of regula falsi
    let mut side = 0i8;
    let mut best = sg;
    for _ in 0..100 {
        let t = (a * fb - b * fa) / (fb - fa);
        if !(t > a && t < b) {
            break;
        }
        let (ft, st) = f(t)?;
        best = st;
        if ft == 0.0 || (b - a) <= 1e-13 * b.abs().max(1.0) {
            break;
        }
        if (ft < 0.0) == (fb < 0.0) {
            b = t;
            fb = ft;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = t;
            fa = ft;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best)
}

/// Signed angle from `u` to `v` in the XY plane, in `(-pi, pi]`.
pub fn planar_angle(u: &Vec3, v: &Vec3) -> f64 {
    let cross = u.x * v.y - u.y * v.x;
    let dot = u.x * v.x + u.y * v.y;
    cross.atan2(dot)
}

/// Angles between consecutive perihelion position vectors, relative to
/// `center`.
pub fn precession_angles(events: &[ApsisEvent], center: &Vec3) -> Vec<f64> {
    let peri: Vec<Vec3> = events
        .iter()
        .filter(|e| e.kind == ApsisKind::Perihelion)
        .map(|e| e.state.r - center)
        .collect();
    peri.windows(2).map(|w| planar_angle(&w[0], &w[1])).collect()
}

/// Unsigned angle swept between each pair of consecutive apsides.
pub fn apsidal_angles(events: &[ApsisEvent], center: &Vec3) -> Vec<f64> {
    events
        .windows(2)
        .map(|w| planar_angle(&(w[0].state.r - center), &(w[1].state.r - center)).abs())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{CoulombSource, Dispersion};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn fig3() -> (LatticeParams, Potential, PhaseState) {
        (
            LatticeParams::square(1.0, 125.0, 2),
            CoulombSource::new(Vec3::new(0.0, -140.0, 0.0), 20000.0, 0.0).into(),
            PhaseState::planar(0.0, 20.0, -1.0, 0.0),
        )
    }

    #[test]
    fn fixed_point_without_force() {
        let lat = LatticeParams::square(1.0, 125.0, 2);
        let init = PhaseState::planar(3.0, -2.0, 0.0, 0.0);
        let traj = integrate(&init, &IntegratorSettings::new(1e-3, 1.0, 10), &lat, &Potential::none()).unwrap();
        assert_eq!(traj.samples.len(), 101);
        for s in &traj.samples {
            assert_eq!(s.state.r, init.r);
            assert_eq!(s.state.k, init.k);
        }
    }

    #[test]
    fn constant_velocity_is_exact() {
        let lat = LatticeParams::square(1.0, 125.0, 2);
        let init = PhaseState::planar(2.0, 0.0, PI / 2.0, 0.0);
        let traj = integrate(&init, &IntegratorSettings::new(1e-3, 0.5, 50), &lat, &Potential::none()).unwrap();
        for s in &traj.samples {
            assert_relative_eq!(s.state.r.x, 2.0 + 250.0 * s.t(), max_relative = 1e-12);
        }
    }

    #[test]
    fn sample_times_are_uniform() {
        let (lat, pot, init) = fig3();
        let traj = integrate(&init, &IntegratorSettings::new(1e-3, 1.0, 7), &lat, &pot).unwrap();
        for (i, s) in traj.samples.iter().enumerate() {
            assert_relative_eq!(s.t(), i as f64 * 7e-3, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let (lat, pot, init) = fig3();
        assert!(integrate(&init, &IntegratorSettings::new(0.0, 1.0, 1), &lat, &pot).is_err());
        assert!(integrate(&init, &IntegratorSettings::new(1e-3, -1.0, 1), &lat, &pot).is_err());
        assert!(integrate(&init, &IntegratorSettings::new(1e-3, 1.0, 0), &lat, &pot).is_err());
    }

    #[test]
    fn head_on_collision_is_caught() {
        let lat = LatticeParams::square(1.0, 1.0, 2).with_kind(Dispersion::Continuum);
        let pot: Potential = CoulombSource::new(Vec3::zeros(), 5.0, 0.0).into();
        let init = PhaseState::planar(0.0, 1.0, 0.0, 0.0);
        let mut settings = IntegratorSettings::new(1e-4, 5.0, 10);
        settings.min_approach = 0.05;
        let err = integrate(&init, &settings, &lat, &pot).unwrap_err();
        assert!(matches!(err, Error::SingularityApproach { .. }), "{err}");
    }

    #[test]
    fn energy_tolerance_is_enforced() {
        let (lat, pot, init) = fig3();
        let mut settings = IntegratorSettings::new(0.2, 20.0, 1);
        settings.energy_tolerance = Some(1e-12);
        let err = integrate(&init, &settings, &lat, &pot).unwrap_err();
        assert!(matches!(err, Error::EnergyDrift { .. }), "{err}");
    }

    #[test]
    fn fig3_energy_is_conserved() {
        let (lat, pot, init) = fig3();
        let traj = integrate(&init, &IntegratorSettings::new(1e-4, 10.0, 100), &lat, &pot).unwrap();
        assert!(traj.max_energy_drift < 1e-6, "{}", traj.max_energy_drift);
    }

    #[test]
    fn planarity_holds_and_breaks() {
        let lat = LatticeParams::square(1.0, 125.0, 3);
        let pot: Potential = CoulombSource::new(Vec3::zeros(), 200.0, 0.0).into();
        // r0 = (0, 2b, 0) with an in-plane velocity
        let init = PhaseState::new(Vec3::new(0.0, 2.0, 0.0), Vec3::new(-0.5, 0.0, 0.0));
        let settings = IntegratorSettings::new(1e-4, 1.0, 100);
        assert!(planarity_check(&init, &settings, &lat, &pot).unwrap() <= 1e-10);

        let tilted = PhaseState::new(Vec3::new(0.0, 2.0, 0.0), Vec3::new(-0.5, 0.0, 0.3));
        assert!(planarity_check(&tilted, &settings, &lat, &pot).unwrap() > 1e-3);
    }

    #[test]
    fn lz_rate_matches_lz_derivative() {
        let (lat, pot, init) = fig3();
        let traj = integrate(&init, &IntegratorSettings::new(1e-4, 5.0, 1), &lat, &pot).unwrap();
        let h = traj.sample_interval();
        let scale = traj.samples.iter().map(|s| s.lz_rate.abs()).fold(0.0, f64::max);
        for w in traj.samples.windows(3) {
            let fd = (w[2].lz - w[0].lz) / (2.0 * h);
            assert!((fd - w[1].lz_rate).abs() <= 1e-6 * scale, "{fd} vs {}", w[1].lz_rate);
        }
    }

    #[test]
    fn isotropic_continuum_conserves_lz() {
        let (lat, pot, _) = fig3();
        let lat = lat.with_kind(Dispersion::Continuum);
        let init = PhaseState::planar(0.0, 20.0, -0.95, 0.0);
        let traj = integrate(&init, &IntegratorSettings::new(1e-4, 20.0, 100), &lat, &pot).unwrap();
        let l0 = traj.samples[0].lz;
        for s in &traj.samples {
            assert!(((s.lz - l0) / l0).abs() < 1e-9);
        }
    }

    #[test]
    fn too_short_for_apsides() {
        let (lat, pot, init) = fig3();
        let traj = integrate(&init, &IntegratorSettings::new(1e-4, 1e-4, 1), &lat, &pot).unwrap();
        assert!(apsides(&traj).unwrap().is_empty());
    }

    #[test]
    fn circular_orbit_has_no_apsides() {
        // continuum, m = 1, V1 = 1: circular at r = 1 with |k| = 1
        let lat = LatticeParams::square(1.0, 0.5, 2).with_kind(Dispersion::Continuum);
        let pot: Potential = CoulombSource::new(Vec3::zeros(), 1.0, 0.0).into();
        let init = PhaseState::planar(1.0, 0.0, 0.0, 1.0);
        let traj = integrate(&init, &IntegratorSettings::new(1e-3, 20.0, 10), &lat, &pot).unwrap();
        assert!(apsides(&traj).unwrap().is_empty());
    }

    #[test]
    fn kepler_ellipse_apsides() {
        // m = 1, V1 = 1, r_p = 1, e = 0.5 ⇒ v_p^2 = (1 + e)/r_p
        let lat = LatticeParams::square(1.0, 0.5, 2).with_kind(Dispersion::Continuum);
        let pot: Potential = CoulombSource::new(Vec3::zeros(), 1.0, 0.0).into();
        let init = PhaseState::planar(1.0, 0.0, 0.0, 1.5f64.sqrt());
        let traj = integrate(&init, &IntegratorSettings::new(1e-3, 40.0, 20), &lat, &pot).unwrap();
        let events = apsides(&traj).unwrap();
        assert!(events.len() >= 3);
        for w in events.windows(2) {
            assert_ne!(w[0].kind, w[1].kind);
        }
        // semi-major axis r_p / (1 - e) = 2 ⇒ T = 2 pi 2^{3/2}
        let period = 2.0 * PI * 2f64.powf(1.5);
        let peri: Vec<f64> = events
            .iter()
            .filter(|e| e.kind == ApsisKind::Perihelion)
            .map(|e| e.t)
            .collect();
        for w in peri.windows(2) {
            assert!(((w[1] - w[0]) / period - 1.0).abs() < 1e-2);
        }
        let aph = events.iter().find(|e| e.kind == ApsisKind::Aphelion).unwrap();
        assert_relative_eq!(aph.radius, 3.0, max_relative = 1e-6);
        for angle in apsidal_angles(&events, &Vec3::zeros()) {
            assert!((angle - PI).abs() < 1e-5, "{angle}");
        }
    }

    #[test]
    fn planar_angle_signs() {
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert_relative_eq!(planar_angle(&x, &y), PI / 2.0);
        assert_relative_eq!(planar_angle(&y, &x), -PI / 2.0);
    }
}
