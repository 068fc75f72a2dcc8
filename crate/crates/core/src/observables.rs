//! Statistical moments of a wavepacket and the angular momenta built from
//! them.

use crate::error::{Error, Result};
use crate::lattice::{Potential, Vec3};
use crate::quantum::{kinetic_on_reciprocal, potential_on_sites, WaveGrid};

/// Norm, mean position, standard deviation and signed skewness length per
/// axis. Components beyond the grid dimension are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub norm: f64,
    pub mean: Vec3,
    pub sigma: Vec3,
    pub skew: Vec3,
}

/// Neumaier-compensated sum.
fn accurate_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Marginal distribution along one axis, with site offsets measured in
/// lattice units from the site nearest the mean. Offsets are exact
/// integers, so mirror-symmetric marginals give vanishing odd sums.
struct AxisMarginal {
    spacing: f64,
    weights: Vec<f64>,
    offsets: Vec<f64>,
    reference: f64,
    norm: f64,
    shift: f64,
}

impl AxisMarginal {
    fn new(psi: &WaveGrid, axis: usize) -> Self {
        let weights = psi.marginal(axis);
        let origin = psi.spec.origin[axis];
        let index: Vec<f64> = (0..weights.len()).map(|i| (i as i64 - origin) as f64).collect();
        let norm = accurate_sum(weights.iter().copied());
        let rough = accurate_sum(index.iter().zip(&weights).map(|(u, w)| u * w)) / norm;
        let reference = if rough.is_finite() { rough.round() } else { 0.0 };
        let offsets: Vec<f64> = index.iter().map(|u| u - reference).collect();
        let shift = accurate_sum(offsets.iter().zip(&weights).map(|(d, w)| d * w)) / norm;
        AxisMarginal {
            spacing: psi.spec.lattice.spacing[axis],
            weights,
            offsets,
            reference,
            norm,
            shift,
        }
    }

    /// `sum d^p w` about the reference site, in lattice units.
    fn raw(&self, p: i32) -> f64 {
        accurate_sum(self.offsets.iter().zip(&self.weights).map(|(d, w)| d.powi(p) * w))
    }

    fn mean(&self) -> f64 {
        self.spacing * (self.reference + self.shift)
    }

    fn central(&self, p: u32) -> f64 {
        let (d, a) = (self.shift, self.spacing);
        let lattice_units = match p {
            0 => return self.norm,
            1 => return self.mean(),
            2 => self.raw(2) - d * d * self.norm,
            3 => self.raw(3) - 3.0 * d * self.raw(2) + 2.0 * d.powi(3) * self.norm,
            _ => accurate_sum(
                self.offsets
                    .iter()
                    .zip(&self.weights)
                    .map(|(o, w)| (o - d).powi(p as i32) * w),
            ),
        };
        lattice_units * a.powi(p as i32)
    }
}

/// `p = 0`: total probability; `p = 1`: mean coordinate along `axis`;
/// `p >= 2`: `sum (x - mean)^p |C|^2`.
pub fn central_moment(psi: &WaveGrid, p: u32, axis: usize) -> f64 {
    AxisMarginal::new(psi, axis).central(p)
}

/// Real cube root that keeps the sign of its argument.
pub fn signed_cbrt(x: f64) -> f64 {
    x.cbrt()
}

/// `s` with `s^3 = sum (x - mean)^3 |C|^2` on every active axis.
pub fn skewness_length(psi: &WaveGrid) -> Vec3 {
    moments(psi).skew
}

pub fn moments(psi: &WaveGrid) -> MomentSet {
    let mut out = MomentSet {
        norm: 0.0,
        mean: Vec3::zeros(),
        sigma: Vec3::zeros(),
        skew: Vec3::zeros(),
    };
    for axis in 0..psi.spec.dims() {
        let m = AxisMarginal::new(psi, axis);
        if axis == 0 {
            out.norm = m.norm;
        }
        out.mean[axis] = m.mean();
        out.sigma[axis] = m.central(2).max(0.0).sqrt();
        out.skew[axis] = signed_cbrt(m.central(3));
    }
    out
}

/// `<T> + <V>` with the kinetic part taken in reciprocal space.
pub fn energy_expectation(psi: &WaveGrid, pot: &Potential) -> Result<f64> {
    let recip = psi.to_reciprocal();
    let kinetic: f64 = recip
        .iter()
        .zip(kinetic_on_reciprocal(&psi.spec))
        .map(|(c, t)| t * c.norm_sqr())
        .sum();
    let potential: f64 = psi
        .coeffs
        .iter()
        .zip(potential_on_sites(&psi.spec, pot))
        .map(|(c, v)| v * c.norm_sqr())
        .sum();
    let e = kinetic + potential;
    if !e.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(e)
}

fn cross_z(u: &Vec3, v: &Vec3) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Quantum, semiclassical and intrinsic angular momenta about a common
/// center, as signed z-components of planar cross products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularMomenta {
    pub lq: f64,
    pub lc: f64,
    pub s: f64,
}

/// `Lq = (z - c) x k`, `Lc = (r - c) x k`, `S = s x k`.
pub fn angular_momenta(z: &Vec3, r_cl: &Vec3, s: &Vec3, k: &Vec3, center: &Vec3) -> AngularMomenta {
    AngularMomenta {
        lq: cross_z(&(z - center), k),
        lc: cross_z(&(r_cl - center), k),
        s: cross_z(s, k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularMomentumRecord {
    pub t: f64,
    pub lq: f64,
    pub lc: f64,
    pub s: f64,
    pub alpha_s: f64,
}

/// Least-squares `alpha` in `Lq - Lc ≈ alpha S`.
pub fn fit_alpha(series: &[AngularMomenta]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidParameter(
            "alpha fit needs at least two samples".into(),
        ));
    }
    let ss: f64 = series.iter().map(|m| m.s * m.s).sum();
    if ss == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let sd: f64 = series.iter().map(|m| m.s * (m.lq - m.lc)).sum();
    Ok(sd / ss)
}

/// Pearson correlation of two equally long series; zero when either is
/// constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
