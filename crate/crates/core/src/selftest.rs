//! Fast built-in consistency checks against independent oracles, run by the
//! `selftest` subcommand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_config, print_config};
use crate::experiments::{preset, preset_names};
use crate::lattice::{
    solve_anisotropy, wolf_hopping, CoulombSource, Dispersion, LatticeParams, PhaseState, Potential, Vec3,
};
use crate::observables::{central_moment, energy_expectation, skewness_length};
use crate::quantum::{init_gaussian, GaussianPacket, GridSpec, SplitOperator, WaveGrid};
use crate::semiclassical::{apsidal_angles, apsides, integrate, IntegratorSettings};
use crate::Result;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, result: Result<(bool, String)>) -> Self {
        match result {
            Ok((passed, detail)) => Check { name, passed, detail },
            Err(e) => Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        }
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        Check::new("moment oracle", moment_oracle()),
        Check::new("two-point skewness", two_point_skewness()),
        Check::new("anisotropy root", anisotropy_root()),
        Check::new("continuum apsidal angle", continuum_apsides()),
        Check::new("split-step conservation", split_step_conservation()),
        Check::new("preset round trip", preset_round_trip()),
    ]
}

fn moment_oracle() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let lat = LatticeParams::new(Vec3::new(0.7, 1.3, 1.0), Vec3::repeat(1.0), 2, Dispersion::Lattice)?;
    let spec = GridSpec::new(lat, &[8, 8], &[3, 5])?;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mut psi = WaveGrid::zeros(spec.clone());
        for c in &mut psi.coeffs {
            *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        psi.normalize()?;
        for axis in 0..2 {
            let coords: Vec<f64> = (0..psi.coeffs.len()).map(|i| spec.position(i)[axis]).collect();
            let weights: Vec<f64> = psi.coeffs.iter().map(|c| c.norm_sqr()).collect();
            let mean: f64 = coords.iter().zip(&weights).map(|(x, w)| x * w).sum();
            for p in 2..=3 {
                let brute: f64 = coords.iter().zip(&weights).map(|(x, w)| (x - mean).powi(p) * w).sum();
                worst = worst.max((central_moment(&psi, p as u32, axis) - brute).abs());
            }
            worst = worst.max((central_moment(&psi, 1, axis) - mean).abs());
        }
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e} over 200 grids")))
}

fn two_point_skewness() -> Result<(bool, String)> {
    let a = 1.5;
    let spec = GridSpec::new(LatticeParams::square(a, 1.0, 1), &[8], &[0])?;
    let mut psi = WaveGrid::zeros(spec);
    psi.coeffs[0] = Complex64::new(0.75f64.sqrt(), 0.0);
    psi.coeffs[4] = Complex64::new(0.0, 0.5);
    let s = skewness_length(&psi).x;
    let expected = 6f64.cbrt() * a;
    let err = (s - expected).abs();
    Ok((err < 1e-12, format!("s = {s:.15}, expected {expected:.15}")))
}

fn anisotropy_root() -> Result<(bool, String)> {
    let xi = 2.0;
    let beta = solve_anisotropy(xi, 1.0)?;
    let lat = LatticeParams::new(
        Vec3::new(1.0, beta, 1.0),
        Vec3::new(wolf_hopping(1.0, 1.0), wolf_hopping(beta, 1.0), 1.0),
        2,
        Dispersion::Lattice,
    )?;
    let ratio = lat.effective_mass(0)? / lat.effective_mass(1)?;
    let err = (ratio / xi - 1.0).abs();
    Ok((err < 1e-10, format!("b/a0 = {beta:.10}, mass ratio {ratio:.12}")))
}

fn continuum_apsides() -> Result<(bool, String)> {
    let lat = LatticeParams::square(1.0, 1.0, 2).with_kind(Dispersion::Continuum);
    let pot = Potential::Coulomb(CoulombSource::new(Vec3::zeros(), 1.0, 0.0));
    let settings = IntegratorSettings::new(1e-3, 30.0, 1);
    let traj = integrate(&PhaseState::planar(1.0, 0.0, 0.0, 0.8), &settings, &lat, &pot)?;
    let angles = apsidal_angles(&apsides(&traj)?, &Vec3::zeros());
    let worst = angles
        .iter()
        .map(|a| (a - std::f64::consts::PI).abs())
        .fold(0.0, f64::max);
    Ok((
        angles.len() >= 4 && worst < 1e-3,
        format!("{} apsidal angles, max |angle - pi| = {worst:.2e}", angles.len()),
    ))
}

fn split_step_conservation() -> Result<(bool, String)> {
    let spec = GridSpec::centered(LatticeParams::square(1.0, 1.0, 2), 64)?;
    let pot = Potential::Coulomb(CoulombSource::new(Vec3::new(0.0, -12.0, 0.0), 20.0, 1.0));
    let mut psi = init_gaussian(
        &spec,
        &GaussianPacket {
            center: Vec3::zeros(),
            k0: Vec3::new(0.5, 0.0, 0.0),
            sigma: 4.0,
        },
    )?;
    let e0 = energy_expectation(&psi, &pot)?;
    let mut op = SplitOperator::new(&spec, &pot, 0.01)?;
    op.advance(&mut psi, 200);
    let norm_err = (psi.norm_sq() - 1.0).abs();
    let energy_err = ((energy_expectation(&psi, &pot)? - e0) / e0).abs();
    Ok((
        norm_err < 1e-12 && energy_err < 1e-3,
        format!("norm drift {norm_err:.2e}, relative energy drift {energy_err:.2e}"),
    ))
}

fn preset_round_trip() -> Result<(bool, String)> {
    let mut failed = Vec::new();
    for name in preset_names() {
        let cfg = preset(name)?;
        let back = parse_config(&print_config(&cfg))?;
        if back.entries() != cfg.entries() {
            failed.push(name);
        }
    }
    let detail = if failed.is_empty() {
        format!("{} presets", preset_names().count())
    } else {
        format!("mismatch in {}", failed.join(", "))
    };
    Ok((failed.is_empty(), detail))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for check in super::run_all() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
