//! Closed-form physics of a single tight-binding band on an orthorhombic
//! lattice with an external point source.
//!
//! Units are adimensional with hbar = 1, so quasimomentum and momentum
//! coincide and energies are frequencies.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Kinetic energy law used by both engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dispersion {
    /// `2A(1 - cos ak)` per axis.
    Lattice,
    /// `k^2 / 2m` per axis with `1/m = 2Aa^2`.
    Continuum,
}

impl Dispersion {
    pub fn as_str(self) -> &'static str {
        match self {
            Dispersion::Lattice => "lattice",
            Dispersion::Continuum => "continuum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lattice" => Some(Dispersion::Lattice),
            "continuum" => Some(Dispersion::Continuum),
            _ => None,
        }
    }
}

/// Lattice constants `(a, b, c)` and hopping energies `(A, B, C)`.
///
/// Only the first `dims` axes are dynamical; the remaining components are
/// carried along but contribute neither kinetic energy nor velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeParams {
    pub spacing: Vec3,
    pub hopping: Vec3,
    pub dims: usize,
    pub kind: Dispersion,
}

impl LatticeParams {
    pub fn new(spacing: Vec3, hopping: Vec3, dims: usize, kind: Dispersion) -> Result<Self> {
        let lat = LatticeParams {
            spacing,
            hopping,
            dims,
            kind,
        };
        lat.validate()?;
        Ok(lat)
    }

    /// Square (or cubic) lattice with the same constant and hopping on every axis.
    pub fn square(a: f64, hopping: f64, dims: usize) -> Self {
        LatticeParams {
            spacing: Vec3::repeat(a),
            hopping: Vec3::repeat(hopping),
            dims,
            kind: Dispersion::Lattice,
        }
    }

    pub fn with_kind(mut self, kind: Dispersion) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dims) {
            return Err(Error::InvalidParameter(format!(
                "dims must be 1, 2 or 3, got {}",
                self.dims
            )));
        }
        for axis in 0..3 {
            let a = self.spacing[axis];
            let h = self.hopping[axis];
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "lattice constant on axis {axis} must be positive, got {a}"
                )));
            }
            if !(h.is_finite() && h >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "hopping on axis {axis} must be non-negative, got {h}"
                )));
            }
        }
        Ok(())
    }

    pub fn kinetic_energy(&self, k: &Vec3) -> f64 {
        (0..self.dims)
            .map(|i| {
                let (a, h) = (self.spacing[i], self.hopping[i]);
                match self.kind {
                    Dispersion::Lattice => 2.0 * h * (1.0 - (a * k[i]).cos()),
                    Dispersion::Continuum => h * a * a * k[i] * k[i],
                }
            })
            .sum()
    }

    pub fn group_velocity(&self, k: &Vec3) -> Vec3 {
        let mut v = Vec3::zeros();
        for i in 0..self.dims {
            let (a, h) = (self.spacing[i], self.hopping[i]);
            v[i] = match self.kind {
                Dispersion::Lattice => 2.0 * h * a * (a * k[i]).sin(),
                Dispersion::Continuum => 2.0 * h * a * a * k[i],
            };
        }
        v
    }

    /// `m = 1 / (2 * hopping * constant^2)` on `axis`.
    pub fn effective_mass(&self, axis: usize) -> Result<f64> {
        let h = self.hopping[axis];
        if h <= 0.0 {
            return Err(Error::ZeroHopping { axis });
        }
        let a = self.spacing[axis];
        Ok(1.0 / (2.0 * h * a * a))
    }

    /// Canonical representative of `k` in `[-pi/a, pi/a)` on each active
    /// axis. Continuum dispersions have no zone and are returned unchanged.
    pub fn wrap(&self, k: &Vec3) -> Vec3 {
        if self.kind == Dispersion::Continuum {
            return *k;
        }
        let mut out = *k;
        for i in 0..self.dims {
            out[i] = wrap_component(k[i], self.spacing[i]);
        }
        out
    }
}

fn wrap_component(k: f64, a: f64) -> f64 {
    let period = 2.0 * PI / a;
    let half = PI / a;
    if (-half..half).contains(&k) {
        return k;
    }
    let w = k - period * ((k + half) / period).floor();
    // rounding can land exactly on +pi/a
    if w >= half {
        w - period
    } else {
        w
    }
}

/// Point source `V(r) = -V1 / sqrt(|r - position|^2 + softening^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoulombSource {
    pub position: Vec3,
    pub strength: f64,
    pub softening: f64,
}

impl CoulombSource {
    pub fn new(position: Vec3, strength: f64, softening: f64) -> Self {
        CoulombSource {
            position,
            strength,
            softening,
        }
    }

    fn denominator_sq(&self, r: &Vec3) -> Result<f64> {
        let d2 = (r - self.position).norm_squared() + self.softening * self.softening;
        if d2 == 0.0 && self.strength != 0.0 {
            return Err(Error::SingularPotential);
        }
        Ok(d2)
    }

    pub fn potential(&self, r: &Vec3) -> Result<f64> {
        if self.strength == 0.0 {
            return Ok(0.0);
        }
        let d2 = self.denominator_sq(r)?;
        Ok(-self.strength / d2.sqrt())
    }

    /// Rate of change of quasimomentum, `-grad V`.
    pub fn kdot(&self, r: &Vec3) -> Result<Vec3> {
        if self.strength == 0.0 {
            return Ok(Vec3::zeros());
        }
        let d2 = self.denominator_sq(r)?;
        let d = r - self.position;
        Ok(d * (-self.strength / (d2 * d2.sqrt())))
    }
}

/// External potential acting on the particle.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Coulomb(CoulombSource),
    /// Coulomb source whose distance is measured within the XY plane, so
    /// the potential does not depend on z.
    PlanarCoulomb(CoulombSource),
    /// `V(r) = gradient . r`; a constant force `-gradient`. Used for
    /// Bloch-oscillation checks.
    Uniform { gradient: Vec3 },
}

impl Potential {
    pub fn none() -> Self {
        Potential::Uniform {
            gradient: Vec3::zeros(),
        }
    }

    pub fn value(&self, r: &Vec3) -> Result<f64> {
        match self {
            Potential::Coulomb(src) => src.potential(r),
            Potential::PlanarCoulomb(src) => src.potential(&in_plane(r, src)),
            Potential::Uniform { gradient } => Ok(gradient.dot(r)),
        }
    }

    pub fn kdot(&self, r: &Vec3) -> Result<Vec3> {
        match self {
            Potential::Coulomb(src) => src.kdot(r),
            Potential::PlanarCoulomb(src) => src.kdot(&in_plane(r, src)),
            Potential::Uniform { gradient } => Ok(-gradient),
        }
    }

    /// Reference point for angular momenta.
    pub fn center(&self) -> Vec3 {
        match self {
            Potential::Coulomb(src) | Potential::PlanarCoulomb(src) => src.position,
            Potential::Uniform { .. } => Vec3::zeros(),
        }
    }

    /// Distance from the source as the potential sees it; infinite for a
    /// uniform field.
    pub fn distance(&self, r: &Vec3) -> f64 {
        match self {
            Potential::Coulomb(src) => (r - src.position).norm(),
            Potential::PlanarCoulomb(src) => (in_plane(r, src) - src.position).norm(),
            Potential::Uniform { .. } => f64::INFINITY,
        }
    }

    /// Coulomb strength, zero for a uniform field.
    pub fn strength(&self) -> f64 {
        match self {
            Potential::Coulomb(src) | Potential::PlanarCoulomb(src) => src.strength,
            Potential::Uniform { .. } => 0.0,
        }
    }

    pub fn softening(&self) -> f64 {
        match self {
            Potential::Coulomb(src) | Potential::PlanarCoulomb(src) => src.softening,
            Potential::Uniform { .. } => f64::INFINITY,
        }
    }
}

fn in_plane(r: &Vec3, src: &CoulombSource) -> Vec3 {
    Vec3::new(r.x, r.y, src.position.z)
}

impl From<CoulombSource> for Potential {
    fn from(src: CoulombSource) -> Self {
        Potential::Coulomb(src)
    }
}

/// Semiclassical phase-space point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub r: Vec3,
    pub k: Vec3,
    pub t: f64,
}

impl PhaseState {
    pub fn new(r: Vec3, k: Vec3) -> Self {
        PhaseState { r, k, t: 0.0 }
    }

    pub fn planar(x: f64, y: f64, kx: f64, ky: f64) -> Self {
        PhaseState::new(Vec3::new(x, y, 0.0), Vec3::new(kx, ky, 0.0))
    }
}

pub fn hamiltonian_value(state: &PhaseState, lat: &LatticeParams, pot: &Potential) -> Result<f64> {
    Ok(lat.kinetic_energy(&state.k) + pot.value(&state.r)?)
}

pub fn group_velocity(k: &Vec3, lat: &LatticeParams) -> Vec3 {
    lat.group_velocity(k)
}

pub fn coulomb_kdot(r: &Vec3, src: &CoulombSource) -> Result<Vec3> {
    src.kdot(r)
}

/// Planar angular momentum `(x - xc) ky - (y - yc) kx` about `center`.
pub fn lz(state: &PhaseState, center: &Vec3) -> f64 {
    let d = state.r - center;
    d.x * state.k.y - d.y * state.k.x
}

/// `dLz/dt` for a central force: `vx ky - vy kx`. On the lattice this is
/// `2(aA ky sin(a kx) - bB kx sin(b ky))`.
pub fn lz_rate(k: &Vec3, lat: &LatticeParams) -> f64 {
    let v = lat.group_velocity(k);
    v.x * k.y - v.y * k.x
}

pub fn effective_mass(lat: &LatticeParams, axis: usize) -> Result<f64> {
    lat.effective_mass(axis)
}

/// Hopping energy for first neighbours at separation `d`:
/// `2(1 + d/a0) exp(-d/a0)`.
pub fn wolf_hopping(d: f64, a0: f64) -> f64 {
    let x = d / a0;
    2.0 * (1.0 + x) * (-x).exp()
}

const ANISOTROPY_SCAN_POINTS: usize = 4000;

fn anisotropy_residual(beta: f64, target: f64) -> f64 {
    wolf_hopping(beta, 1.0) * beta * beta - target
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
}

/// All roots `beta = b/a0` of `xi * A(a) a^2 = B(b) b^2` found on a
/// log-spaced scan of `(0, 10 * a/a0]`, in increasing order.
pub fn anisotropy_roots(xi: f64, a_over_a0: f64) -> Result<Vec<f64>> {
    if !(xi > 0.0 && xi.is_finite() && a_over_a0 > 0.0 && a_over_a0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "anisotropy needs xi > 0 and a/a0 > 0, got xi = {xi}, a/a0 = {a_over_a0}"
        )));
    }
    let target = xi * wolf_hopping(a_over_a0, 1.0) * a_over_a0 * a_over_a0;
    let upper = 10.0 * a_over_a0;
    let lower = upper * 1e-9;
    let ratio = (upper / lower).ln() / (ANISOTROPY_SCAN_POINTS - 1) as f64;
    let f = |beta: f64| anisotropy_residual(beta, target);

    let mut roots = Vec::new();
    let mut prev = lower;
    let mut f_prev = f(prev);
    for i in 1..ANISOTROPY_SCAN_POINTS {
        let beta = if i + 1 == ANISOTROPY_SCAN_POINTS {
            upper
        } else {
            lower * (ratio * i as f64).exp()
        };
        let f_beta = f(beta);
        if f_beta == 0.0 {
            roots.push(beta);
        } else if f_prev != 0.0 && (f_prev < 0.0) != (f_beta < 0.0) {
            roots.push(bisect(prev, beta, f));
        }
        prev = beta;
        f_prev = f_beta;
    }
    Ok(roots)
}

/// Smallest positive `b/a0` reproducing the effective-mass ratio
/// `xi = m_x/m_y = B b^2 / (A a^2)` with Wolf hoppings.
pub fn solve_anisotropy(xi: f64, a_over_a0: f64) -> Result<f64> {
    anisotropy_roots(xi, a_over_a0)?
        .first()
        .copied()
        .ok_or(Error::NoRoot {
            xi,
            upper: 10.0 * a_over_a0,
        })
}

/// Lattice quasimomentum with the same kinetic energy as the continuum
/// momentum `k_cont`: `(1/a) arccos(1 - a^2 k_cont^2 / 2)`, evaluated as
/// `(2/a) asin(a k_cont / 2)` which keeps the sign of `k_cont` and stays
/// accurate as `a -> 0`.
pub fn continuum_matched_k(k_cont: f64, a: f64) -> Result<f64> {
    let half = 0.5 * a * k_cont;
    if !(a > 0.0) || !(half.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "|a k_cont| must not exceed 2 (a = {a}, k_cont = {k_cont})"
        )));
    }
    Ok(2.0 * half.asin() / a)
}

/// Inverse of [`continuum_matched_k`]: `(2/a) sin(a k / 2)`.
pub fn continuum_k_from_lattice(k: f64, a: f64) -> f64 {
    2.0 * (0.5 * a * k).sin() / a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig3_lattice() -> LatticeParams {
        LatticeParams::square(1.0, 125.0, 2)
    }

    fn fig3_source() -> Potential {
        CoulombSource::new(Vec3::new(0.0, -140.0, 0.0), 20000.0, 0.0).into()
    }

    #[test]
    fn hamiltonian_at_rest_without_potential() {
        let state = PhaseState::planar(3.0, 4.0, 0.0, 0.0);
        let h = hamiltonian_value(&state, &fig3_lattice(), &Potential::none()).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn hamiltonian_fig3_start() {
        let state = PhaseState::planar(0.0, 20.0, -1.0, 0.0);
        let h = hamiltonian_value(&state, &fig3_lattice(), &fig3_source()).unwrap();
        let expected = 250.0 * (1.0 - 1f64.cos()) - 20000.0 / 160.0;
        assert_relative_eq!(h, expected, max_relative = 1e-14);
        assert!((h - -10.0755).abs() < 1e-4);
    }

    #[test]
    fn hamiltonian_continuum_fig3_start_is_zero() {
        let lat = fig3_lattice().with_kind(Dispersion::Continuum);
        assert_relative_eq!(lat.effective_mass(0).unwrap(), 0.004, max_relative = 1e-15);
        let state = PhaseState::planar(0.0, 20.0, -1.0, 0.0);
        let h = hamiltonian_value(&state, &lat, &fig3_source()).unwrap();
        assert!(h.abs() < 1e-12, "{h}");
    }

    #[test]
    fn singular_potential_is_reported() {
        let state = PhaseState::planar(0.0, -140.0, 0.0, 0.0);
        assert!(matches!(
            hamiltonian_value(&state, &fig3_lattice(), &fig3_source()),
            Err(Error::SingularPotential)
        ));
    }

    #[test]
    fn group_velocity_special_points() {
        let lat = LatticeParams::square(0.5, 3.0, 3);
        assert_eq!(group_velocity(&Vec3::zeros(), &lat), Vec3::zeros());
        let v = group_velocity(&Vec3::new(PI / (2.0 * 0.5), 0.0, 0.0), &lat);
        assert_eq!(v.x, 2.0 * 3.0 * 0.5);
        let v = group_velocity(&Vec3::new(PI / 0.5, 0.0, 0.0), &lat);
        assert!(v.x.abs() < 1e-14);
    }

    #[test]
    fn inactive_axes_do_not_move() {
        let lat = LatticeParams::square(1.0, 1.0, 2);
        let v = lat.group_velocity(&Vec3::new(0.3, 0.4, 1.0));
        assert_eq!(v.z, 0.0);
        assert_eq!(
            lat.kinetic_energy(&Vec3::new(0.0, 0.0, 1.0)),
            0.0
        );
    }

    #[test]
    fn coulomb_kdot_on_axis_and_at_softened_center() {
        let src = CoulombSource::new(Vec3::new(1.0, 2.0, 3.0), 7.0, 0.0);
        let f = coulomb_kdot(&Vec3::new(3.0, 2.0, 3.0), &src).unwrap();
        assert_relative_eq!(f.x, -7.0 / 4.0, max_relative = 1e-15);
        assert_eq!(f.y, 0.0);
        assert_eq!(f.z, 0.0);

        let soft = CoulombSource::new(Vec3::new(1.0, 2.0, 3.0), 7.0, 0.5);
        assert_eq!(coulomb_kdot(&soft.position, &soft).unwrap(), Vec3::zeros());
    }

    #[test]
    fn coulomb_kdot_matches_finite_difference() {
        let src = CoulombSource::new(Vec3::new(0.0, -140.0, 0.0), 20000.0, 0.0);
        let r = Vec3::new(13.0, 27.0, -4.0);
        let f = src.kdot(&r).unwrap();
        let h = 1e-3;
        for i in 0..3 {
            let mut rp = r;
            let mut rm = r;
            rp[i] += h;
            rm[i] -= h;
            let grad = (src.potential(&rp).unwrap() - src.potential(&rm).unwrap()) / (2.0 * h);
            assert_relative_eq!(-grad, f[i], max_relative = 1e-8);
        }
    }

    #[test]
    fn lz_examples() {
        let center = Vec3::new(0.0, -120.0, 0.0);
        let state = PhaseState::planar(0.0, 32.0, -1.0, 0.0);
        assert_eq!(lz(&state, &center), 152.0);
        assert_eq!(lz(&PhaseState::planar(5.0, 1.0, 0.0, 0.0), &center), 0.0);
        assert_eq!(lz(&PhaseState::planar(0.0, -120.0, 3.0, 2.0), &center), 0.0);
    }

    #[test]
    fn lz_rate_matches_closed_form() {
        let lat = LatticeParams {
            spacing: Vec3::new(1.3, 0.7, 1.0),
            hopping: Vec3::new(2.0, 5.0, 1.0),
            dims: 2,
            kind: Dispersion::Lattice,
        };
        let k = Vec3::new(0.4, -1.1, 0.0);
        let expected = 2.0 * (1.3 * 2.0 * k.y * (1.3 * k.x).sin() - 0.7 * 5.0 * k.x * (0.7 * k.y).sin());
        assert_relative_eq!(lz_rate(&k, &lat), expected, max_relative = 1e-14);
        assert_eq!(lz_rate(&Vec3::zeros(), &lat), 0.0);
        let sq = LatticeParams::square(1.0, 3.0, 2);
        assert_eq!(lz_rate(&Vec3::new(0.8, 0.8, 0.0), &sq), 0.0);
    }

    #[test]
    fn effective_mass_examples() {
        let lat = LatticeParams::square(1.0, 125.0, 1);
        assert_relative_eq!(lat.effective_mass(0).unwrap(), 0.004, max_relative = 1e-15);
        let lat = LatticeParams::square(1.0, 0.5, 1);
        assert_eq!(lat.effective_mass(0).unwrap(), 1.0);
        let half = LatticeParams::square(0.5, 0.5, 1);
        assert_eq!(half.effective_mass(0).unwrap(), 4.0);
        let zero = LatticeParams::square(1.0, 0.0, 1);
        assert!(matches!(zero.effective_mass(0), Err(Error::ZeroHopping { axis: 0 })));
    }

    #[test]
    fn wolf_examples() {
        assert_eq!(wolf_hopping(0.0, 1.0), 2.0);
        assert!((wolf_hopping(9.5, 1.0) - 1.5719e-3).abs() < 5e-8);
        assert!((wolf_hopping(0.477, 1.0) - 1.83338).abs() < 5e-6);
        assert_relative_eq!(wolf_hopping(4.75, 0.5), wolf_hopping(9.5, 1.0), max_relative = 1e-15);
    }

    #[test]
    fn anisotropy_matches_reference_solution() {
        let beta = solve_anisotropy(2.94, 9.5).unwrap();
        assert!((beta - 0.477).abs() <= 1e-3, "{beta}");
        let xi = wolf_hopping(beta, 1.0) * beta * beta / (wolf_hopping(9.5, 1.0) * 9.5 * 9.5);
        assert_relative_eq!(xi, 2.94, max_relative = 1e-9);
    }

    #[test]
    fn isotropic_anisotropy_has_the_trivial_root() {
        let roots = anisotropy_roots(1.0, 9.5).unwrap();
        assert!(roots.iter().any(|r| (r - 9.5).abs() < 1e-9), "{roots:?}");
        // the small-separation branch comes first
        assert!(solve_anisotropy(1.0, 9.5).unwrap() < 9.5);
    }

    #[test]
    fn anisotropy_without_root() {
        // B(b) b^2 peaks near 3.63, so a target above it is unreachable
        let err = solve_anisotropy(100.0, 1.0 + 3f64.sqrt()).unwrap_err();
        assert!(matches!(err, Error::NoRoot { .. }));
        assert!(solve_anisotropy(-1.0, 1.0).is_err());
    }

    #[test]
    fn continuum_matched_k_examples() {
        assert_eq!(continuum_matched_k(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(continuum_matched_k(1.0, 1.0).unwrap(), PI / 3.0, max_relative = 1e-15);
        assert_relative_eq!(continuum_matched_k(1.0, 1e-4).unwrap(), 1.0, max_relative = 1e-8);
        assert!(matches!(continuum_matched_k(2.5, 1.0), Err(Error::Domain(_))));
        // same kinetic energy on both sides
        let a = 0.7;
        let k_cont = 1.9;
        let k = continuum_matched_k(k_cont, a).unwrap();
        assert_relative_eq!(
            2.0 * (1.0 - (a * k).cos()),
            a * a * k_cont * k_cont,
            max_relative = 1e-13
        );
    }

    #[test]
    fn wrapping_is_canonical() {
        let lat = LatticeParams::square(2.0, 1.0, 2);
        let w = lat.wrap(&Vec3::new(PI / 2.0, -PI / 2.0 - 1e-9, 7.0));
        assert!((w.x + PI / 2.0).abs() < 1e-15);
        assert!((w.y - (PI / 2.0 - 1e-9)).abs() < 1e-12);
        assert_eq!(w.z, 7.0);
        let cont = lat.clone().with_kind(Dispersion::Continuum);
        assert_eq!(cont.wrap(&Vec3::new(10.0, 0.0, 0.0)).x, 10.0);
    }

    fn arb_lattice() -> impl Strategy<Value = LatticeParams> {
        (0.2f64..3.0, 0.2f64..3.0, 0.2f64..3.0, 0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0, any::<bool>())
            .prop_map(|(a, b, c, ha, hb, hc, cont)| LatticeParams {
                spacing: Vec3::new(a, b, c),
                hopping: Vec3::new(ha, hb, hc),
                dims: 3,
                kind: if cont { Dispersion::Continuum } else { Dispersion::Lattice },
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn group_velocity_is_kinetic_gradient(
            lat in arb_lattice(),
            kx in -3.0f64..3.0, ky in -3.0f64..3.0, kz in -3.0f64..3.0,
        ) {
            let k = Vec3::new(kx, ky, kz);
            let v = lat.group_velocity(&k);
            let h = 1e-5;
            for i in 0..3 {
                let mut kp = k;
                let mut km = k;
                kp[i] += h;
                km[i] -= h;
                let fd = (lat.kinetic_energy(&kp) - lat.kinetic_energy(&km)) / (2.0 * h);
                let scale = 2.0 * lat.hopping[i] * lat.spacing[i] * (1.0 + lat.spacing[i] * k[i].abs());
                prop_assert!((fd - v[i]).abs() <= 1e-8 * scale.max(v[i].abs()),
                    "axis {} fd {} v {}", i, fd, v[i]);
            }
        }

        #[test]
        fn kdot_is_minus_potential_gradient(
            x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0,
            v1 in 1.0f64..1e4,
        ) {
            let src = CoulombSource::new(Vec3::new(0.5, -3.0, 1.0), v1, 0.0);
            let r = Vec3::new(x, y, z);
            prop_assume!((r - src.position).norm() > 1.0);
            let f = src.kdot(&r).unwrap();
            let h = 1e-4 * (r - src.position).norm();
            for i in 0..3 {
                let mut rp = r;
                let mut rm = r;
                rp[i] += h;
                rm[i] -= h;
                let fd = -(src.potential(&rp).unwrap() - src.potential(&rm).unwrap()) / (2.0 * h);
                prop_assert!((fd - f[i]).abs() <= 1e-8 * f.norm(), "axis {} fd {} f {}", i, fd, f[i]);
            }
        }

        #[test]
        fn matched_k_round_trip(a in 0.01f64..2.0, frac in -1.0f64..1.0) {
            let k_cont = frac * 0.1 / a;
            let k = continuum_matched_k(k_cont, a).unwrap();
            let back = continuum_k_from_lattice(k, a);
            prop_assert!((back - k_cont).abs() <= 1e-12 * k_cont.abs().max(1e-300));
        }

        #[test]
        fn wolf_is_decreasing(d in 1e-6f64..30.0, step in 1e-6f64..1.0) {
            prop_assert!(wolf_hopping(d + step, 1.0) < wolf_hopping(d, 1.0));
        }

        #[test]
        fn anisotropy_residual_is_tiny(xi in 0.05f64..20.0, alpha in 1.0f64..12.0) {
            if let Ok(beta) = solve_anisotropy(xi, alpha) {
                let got = wolf_hopping(beta, 1.0) * beta * beta / (wolf_hopping(alpha, 1.0) * alpha * alpha);
                prop_assert!((got - xi).abs() <= 1e-9 * xi, "beta {} xi {}", beta, got);
            }
        }
    }

    #[test]
    fn wolf_is_continuous_at_zero() {
        assert!((wolf_hopping(1e-12, 1.0) - 2.0).abs() < 1e-11);
    }
}
