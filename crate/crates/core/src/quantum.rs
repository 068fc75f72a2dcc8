//! Wannier-coefficient wavepackets on a periodic site grid, advanced with
//! the symmetric split-operator pseudo-spectral scheme
//!
//! ```text
//! C(t + dt) = e^{-iV dt/2} F^-1[ e^{-iT(k) dt} F[ e^{-iV dt/2} C(t) ] ]
//! ```
//!
//! Transform convention: the forward transform along an axis of `N` sites is
//! `C(q) = N^{-1/2} sum_n C_n exp(-2 pi i q n / N)` and the reciprocal
//! coordinate of bin `q` is `k = 2 pi j / (N a)` with `j = q` for `q < N/2`
//! and `j = q - N` otherwise, so `j` spans `[-N/2, N/2)`. Coefficients are
//! stored with the x index fastest, then y, then z.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{Dispersion, LatticeParams, Potential, Vec3};
use crate::observables::{moments, MomentSet};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_BOUNDARY_MARGIN: usize = 8;
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_SIGMA: f64 = 4.0;
/// Largest grid the presets and sweeps are allowed to allocate (128^3).
pub const SITE_CEILING: usize = 128 * 128 * 128;

/// Finite periodic grid of lattice sites. Site `i` on an axis sits at
/// coordinate `a * (i - origin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lattice: LatticeParams,
    pub sites: [usize; 3],
    pub origin: [i64; 3],
}

impl GridSpec {
    /// `sites` and `origin` list the active axes only.
    pub fn new(lattice: LatticeParams, sites: &[usize], origin: &[i64]) -> Result<Self> {
        lattice.validate()?;
        let dims = lattice.dims;
        if sites.len() != dims || origin.len() != dims {
            return Err(Error::InvalidParameter(format!(
                "grid needs {dims} site counts and origins, got {} and {}",
                sites.len(),
                origin.len()
            )));
        }
        let mut s = [1usize; 3];
        let mut o = [0i64; 3];
        for axis in 0..dims {
            if sites[axis] < 2 {
                return Err(Error::InvalidParameter(format!(
                    "axis {axis} needs at least 2 sites"
                )));
            }
            s[axis] = sites[axis];
            o[axis] = origin[axis];
        }
        Ok(GridSpec {
            lattice,
            sites: s,
            origin: o,
        })
    }

    /// Grid of `n` sites per axis with coordinate 0 at the middle site.
    pub fn centered(lattice: LatticeParams, n: usize) -> Result<Self> {
        let dims = lattice.dims;
        GridSpec::new(lattice, &vec![n; dims], &vec![(n / 2) as i64; dims])
    }

    pub fn dims(&self) -> usize {
        self.lattice.dims
    }

    pub fn len(&self) -> usize {
        self.sites.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lattice.spacing[axis] * (i as i64 - self.origin[axis]) as f64
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.sites[axis]).map(|i| self.coordinate(axis, i)).collect()
    }

    /// Signed reciprocal index for FFT bin `q`.
    pub fn frequency_index(&self, axis: usize, q: usize) -> i64 {
        let n = self.sites[axis];
        if q < n / 2 {
            q as i64
        } else {
            q as i64 - n as i64
        }
    }

    pub fn wavenumber(&self, axis: usize, q: usize) -> f64 {
        2.0 * PI * self.frequency_index(axis, q) as f64
            / (self.sites[axis] as f64 * self.lattice.spacing[axis])
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.sites;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn position(&self, idx: usize) -> Vec3 {
        let ijk = self.unravel(idx);
        let mut r = Vec3::zeros();
        for axis in 0..self.dims() {
            r[axis] = self.coordinate(axis, ijk[axis]);
        }
        r
    }

    fn axis_bounds(&self, axis: usize) -> (f64, f64) {
        (self.coordinate(axis, 0), self.coordinate(axis, self.sites[axis] - 1))
    }

    fn stride(&self, axis: usize) -> usize {
        self.sites[..axis].iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveGrid {
    pub spec: GridSpec,
    pub coeffs: Vec<Complex64>,
    pub t: f64,
}

impl WaveGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        WaveGrid {
            spec,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
            t: 0.0,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sq();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParameter(format!("cannot normalize a state of norm {n}")));
        }
        let scale = 1.0 / n.sqrt();
        for c in &mut self.coeffs {
            *c *= scale;
        }
        Ok(())
    }

    pub fn density(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Probability summed over every axis except `axis`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let n = self.spec.sites[axis];
        let stride = self.spec.stride(axis);
        let mut out = vec![0.0; n];
        for (idx, c) in self.coeffs.iter().enumerate() {
            out[(idx / stride) % n] += c.norm_sqr();
        }
        out
    }

    /// Reciprocal-space coefficients under the unitary transform.
    pub fn to_reciprocal(&self) -> Vec<Complex64> {
        let mut data = self.coeffs.clone();
        let mut fourier = Fourier::new(&self.spec);
        fourier.transform(&mut data, FftDirection::Forward);
        let scale = 1.0 / (self.spec.len() as f64).sqrt();
        for c in &mut data {
            *c *= scale;
        }
        data
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Parameters of the initial Gaussian packet. `sigma` is the standard
/// deviation of `|C|^2` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPacket {
    pub center: Vec3,
    pub k0: Vec3,
    pub sigma: f64,
}

/// `C_n ∝ exp(-|r_n - center|^2 / (4 sigma^2)) exp(i k0 . r_n)`, normalized.
pub fn init_gaussian(spec: &GridSpec, packet: &GaussianPacket) -> Result<WaveGrid> {
    let dims = spec.dims();
    let sigma = packet.sigma;
    let max_spacing = (0..dims).map(|i| spec.lattice.spacing[i]).fold(0.0, f64::max);
    if !(sigma.is_finite() && sigma >= 2.0 * max_spacing) {
        return Err(Error::InvalidParameter(format!(
            "sigma = {sigma} must be at least twice the largest lattice constant ({max_spacing})"
        )));
    }
    for axis in 0..dims {
        let (lo, hi) = spec.axis_bounds(axis);
        let c = packet.center[axis];
        if c - 4.0 * sigma < lo || c + 4.0 * sigma > hi {
            return Err(Error::GridTooSmall(format!(
                "packet at {c} with sigma {sigma} is within 4 sigma of the axis-{axis} boundary [{lo}, {hi}]"
            )));
        }
    }

    let factors: Vec<Vec<Complex64>> = (0..3)
        .map(|axis| {
            if axis >= dims {
                return vec![Complex64::new(1.0, 0.0)];
            }
            spec.coordinates(axis)
                .into_iter()
                .map(|x| {
                    let d = x - packet.center[axis];
                    Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), packet.k0[axis] * x)
                })
                .collect()
        })
        .collect();

    let mut psi = WaveGrid::zeros(spec.clone());
    let [nx, ny, _] = spec.sites;
    for (idx, c) in psi.coeffs.iter_mut().enumerate() {
        let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
        *c = factors[0][i] * factors[1][j.min(factors[1].len() - 1)] * factors[2][k.min(factors[2].len() - 1)];
    }
    psi.normalize()?;
    Ok(psi)
}

/// External potential evaluated at every site. Sites that coincide with an
/// unsoftened source come out as `-inf`.
pub fn potential_on_sites(spec: &GridSpec, pot: &Potential) -> Vec<f64> {
    (0..spec.len())
        .map(|idx| {
            let r = spec.position(idx);
            match pot {
                Potential::Uniform { gradient } => gradient.dot(&r),
                _ if pot.strength() == 0.0 => 0.0,
                _ => {
                    let (d, eps) = (pot.distance(&r), pot.softening());
                    -pot.strength() / (d * d + eps * eps).sqrt()
                }
            }
        })
        .collect()
}

/// Band energy `T(k)` at every reciprocal bin, in FFT order.
pub fn kinetic_on_reciprocal(spec: &GridSpec) -> Vec<f64> {
    let lat = &spec.lattice;
    let per_axis: Vec<Vec<f64>> = (0..3)
        .map(|axis| {
            if axis >= spec.dims() {
                return vec![0.0];
            }
            let (a, h) = (lat.spacing[axis], lat.hopping[axis]);
            (0..spec.sites[axis])
                .map(|q| {
                    let k = spec.wavenumber(axis, q);
                    match lat.kind {
                        Dispersion::Lattice => 2.0 * h * (1.0 - (a * k).cos()),
                        Dispersion::Continuum => h * a * a * k * k,
                    }
                })
                .collect()
        })
        .collect();
    let [nx, ny, _] = spec.sites;
    (0..spec.len())
        .map(|idx| {
            let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
            per_axis[0][i]
                + per_axis[1][j.min(per_axis[1].len() - 1)]
                + per_axis[2][k.min(per_axis[2].len() - 1)]
        })
        .collect()
}

/// Probability within `margin` sites of any boundary of an active axis.
pub fn boundary_mass(psi: &WaveGrid, margin: usize) -> f64 {
    let spec = &psi.spec;
    let dims = spec.dims();
    psi.coeffs
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let ijk = spec.unravel(*idx);
            (0..dims).any(|axis| ijk[axis] < margin || ijk[axis] + margin >= spec.sites[axis])
        })
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Unnormalized multi-dimensional FFT over the active axes.
pub(crate) struct Fourier {
    sites: [usize; 3],
    dims: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

impl Fourier {
    pub(crate) fn new(spec: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let dims = spec.dims();
        let forward: Vec<_> = (0..dims).map(|a| planner.plan_fft_forward(spec.sites[a])).collect();
        let inverse: Vec<_> = (0..dims).map(|a| planner.plan_fft_inverse(spec.sites[a])).collect();
        let scratch_len = forward
            .iter()
            .chain(inverse.iter())
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Fourier {
            sites: spec.sites,
            dims,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            lines: if dims > 1 {
                vec![Complex64::new(0.0, 0.0); spec.len()]
            } else {
                Vec::new()
            },
        }
    }

    fn plan(&self, axis: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
        match direction {
            FftDirection::Forward => Arc::clone(&self.forward[axis]),
            FftDirection::Inverse => Arc::clone(&self.inverse[axis]),
        }
    }

    /// Copies every line along `axis` into contiguous storage in `lines`.
    fn gather(&mut self, data: &[Complex64], axis: usize) {
        let n = self.sites[axis];
        let stride: usize = self.sites[..axis].iter().product();
        let block = n * stride;
        for (o, chunk) in data.chunks_exact(block).enumerate() {
            let lines = &mut self.lines[o * block..(o + 1) * block];
            for j0 in (0..n).step_by(TILE) {
                for i0 in (0..stride).step_by(TILE) {
                    for j in j0..(j0 + TILE).min(n) {
                        for i in i0..(i0 + TILE).min(stride) {
                            lines[i * n + j] = chunk[j * stride + i];
                        }
                    }
                }
            }
        }
    }

    fn scatter(&self, data: &mut [Complex64], axis: usize) {
        let n = self.sites[axis];
        let stride: usize = self.sites[..axis].iter().product();
        let block = n * stride;
        for (o, chunk) in data.chunks_exact_mut(block).enumerate() {
            let lines = &self.lines[o * block..(o + 1) * block];
            for i0 in (0..stride).step_by(TILE) {
                for j0 in (0..n).step_by(TILE) {
                    for i in i0..(i0 + TILE).min(stride) {
                        for j in j0..(j0 + TILE).min(n) {
                            chunk[j * stride + i] = lines[i * n + j];
                        }
                    }
                }
            }
        }
    }

    fn transform_axis(&mut self, data: &mut [Complex64], axis: usize, direction: FftDirection) {
        let fft = self.plan(axis, direction);
        if axis == 0 {
            fft.process_with_scratch(data, &mut self.scratch);
        } else {
            self.gather(data, axis);
            fft.process_with_scratch(&mut self.lines, &mut self.scratch);
            self.scatter(data, axis);
        }
    }

    pub(crate) fn transform(&mut self, data: &mut [Complex64], direction: FftDirection) {
        for axis in 0..self.dims {
            self.transform_axis(data, axis, direction);
        }
    }

    /// Reorders a reciprocal-space array into the layout the last axis has
    /// while it is being transformed.
    fn to_last_axis_layout(&self, values: &[Complex64]) -> Vec<Complex64> {
        if self.dims == 1 {
            return values.to_vec();
        }
        let axis = self.dims - 1;
        let n = self.sites[axis];
        let stride: usize = self.sites[..axis].iter().product();
        let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
        for j in 0..n {
            for i in 0..stride {
                out[i * n + j] = values[j * stride + i];
            }
        }
        out
    }

    /// Forward transform, pointwise multiplication by `factors` (given in
    /// the last-axis layout), inverse transform. The last axis is never
    /// scattered back between the two transforms.
    fn multiply_in_reciprocal(&mut self, data: &mut [Complex64], factors: &[Complex64]) {
        let last = self.dims - 1;
        for axis in 0..last {
            self.transform_axis(data, axis, FftDirection::Forward);
        }
        let forward = self.plan(last, FftDirection::Forward);
        let inverse = self.plan(last, FftDirection::Inverse);
        let buf: &mut [Complex64] = if last == 0 {
            &mut *data
        } else {
            self.gather(data, last);
            &mut self.lines
        };
        forward.process_with_scratch(buf, &mut self.scratch);
        for (c, f) in buf.iter_mut().zip(factors) {
            *c *= f;
        }
        inverse.process_with_scratch(buf, &mut self.scratch);
        if last > 0 {
            self.scatter(data, last);
        }
        for axis in (0..last).rev() {
            self.transform_axis(data, axis, FftDirection::Inverse);
        }
    }
}

const TILE: usize = 16;

/// Precomputed phase factors and transforms for one `(grid, potential, dt)`.
pub struct SplitOperator {
    spec: GridSpec,
    dt: f64,
    half_potential: Vec<Complex64>,
    full_potential: Vec<Complex64>,
    // includes the 1/N of the forward-inverse round trip; stored in the
    // last-axis transform layout
    kinetic: Vec<Complex64>,
    fourier: Fourier,
}

impl SplitOperator {
    pub fn new(spec: &GridSpec, pot: &Potential, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let potential = potential_on_sites(spec, pot);
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        let half_potential = potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / 2.0))
            .collect();
        let full_potential = potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt))
            .collect();
        let inv_n = 1.0 / spec.len() as f64;
        let kinetic: Vec<Complex64> = kinetic_on_reciprocal(spec)
            .iter()
            .map(|t| Complex64::from_polar(inv_n, -t * dt))
            .collect();
        let fourier = Fourier::new(spec);
        Ok(SplitOperator {
            spec: spec.clone(),
            dt,
            half_potential,
            full_potential,
            kinetic: fourier.to_last_axis_layout(&kinetic),
            fourier,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step in place; does not check finiteness.
    pub fn apply(&mut self, psi: &mut WaveGrid) {
        self.advance(psi, 1);
    }

    /// `n` steps in place. Adjacent half-step potential phases are merged
    /// into one full-step phase.
    pub fn advance(&mut self, psi: &mut WaveGrid, n: usize) {
        debug_assert_eq!(psi.spec.sites, self.spec.sites);
        if n == 0 {
            return;
        }
        let data = &mut psi.coeffs;
        for (c, p) in data.iter_mut().zip(&self.half_potential) {
            *c *= p;
        }
        for step in 0..n {
            self.fourier.multiply_in_reciprocal(data, &self.kinetic);
            let phase = if step + 1 == n { &self.half_potential } else { &self.full_potential };
            for (c, p) in data.iter_mut().zip(phase) {
                *c *= p;
            }
        }
        psi.t += self.dt * n as f64;
    }
}

/// Single split-operator step.
pub fn split_step(psi: &WaveGrid, dt: f64, pot: &Potential) -> Result<WaveGrid> {
    let mut op = SplitOperator::new(&psi.spec, pot, dt)?;
    let mut out = psi.clone();
    op.apply(&mut out);
    if !out.all_finite() {
        return Err(Error::NonFinite { step: 1 });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSettings {
    pub dt: f64,
    pub n_steps: usize,
    pub sample_every: usize,
    pub boundary_margin: usize,
    pub boundary_threshold: f64,
}

impl PropagationSettings {
    pub fn new(dt: f64, n_steps: usize, sample_every: usize) -> Self {
        PropagationSettings {
            dt,
            n_steps,
            sample_every,
            boundary_margin: DEFAULT_BOUNDARY_MARGIN,
            boundary_threshold: DEFAULT_BOUNDARY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSample {
    pub t: f64,
    pub moments: MomentSet,
    pub energy: f64,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagationLog {
    pub samples: Vec<PropagationSample>,
}

impl PropagationLog {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.moments.norm - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn observe(
    psi: &WaveGrid,
    potential: &[f64],
    kinetic: &[f64],
    fourier: &mut Fourier,
    margin: usize,
) -> PropagationSample {
    let mut recip = psi.coeffs.clone();
    fourier.transform(&mut recip, FftDirection::Forward);
    let inv_n = 1.0 / psi.spec.len() as f64;
    let kin: f64 = recip.iter().zip(kinetic).map(|(c, t)| t * c.norm_sqr()).sum::<f64>() * inv_n;
    let pot_energy: f64 = psi.coeffs.iter().zip(potential).map(|(c, v)| v * c.norm_sqr()).sum();
    PropagationSample {
        t: psi.t,
        moments: moments(psi),
        energy: kin + pot_energy,
        boundary_mass: boundary_mass(psi, margin),
    }
}

pub fn propagate(
    psi: WaveGrid,
    settings: &PropagationSettings,
    pot: &Potential,
) -> Result<(WaveGrid, PropagationLog)> {
    propagate_with(psi, settings, pot, |_| {})
}

/// Repeated split steps. A log sample (moments, energy, boundary mass) is
/// taken at the start and after every `sample_every` steps, and `observer`
/// sees the grid at each of those instants.
pub fn propagate_with(
    mut psi: WaveGrid,
    settings: &PropagationSettings,
    pot: &Potential,
    mut observer: impl FnMut(&WaveGrid),
) -> Result<(WaveGrid, PropagationLog)> {
    if settings.sample_every == 0 {
        return Err(Error::InvalidParameter("sample_every must be at least 1".into()));
    }
    if settings.boundary_margin == 0 {
        return Err(Error::InvalidParameter("boundary margin must be at least 1".into()));
    }
    let spec = psi.spec.clone();
    let mut op = SplitOperator::new(&spec, pot, settings.dt)?;
    let potential = potential_on_sites(&spec, pot);
    let kinetic = kinetic_on_reciprocal(&spec);
    let mut fourier = Fourier::new(&spec);
    let t0 = psi.t;

    let mut log = PropagationLog::default();
    let mut record = |psi: &WaveGrid, step: usize, log: &mut PropagationLog| -> Result<()> {
        let sample = observe(psi, &potential, &kinetic, &mut fourier, settings.boundary_margin);
        if !sample.moments.norm.is_finite() || !sample.energy.is_finite() {
            return Err(Error::NonFinite { step });
        }
        if sample.boundary_mass > settings.boundary_threshold {
            return Err(Error::BoundaryContamination {
                t: sample.t,
                mass: sample.boundary_mass,
                threshold: settings.boundary_threshold,
            });
        }
        log.samples.push(sample);
        Ok(())
    };

    record(&psi, 0, &mut log)?;
    observer(&psi);
    let mut step = 0;
    while step < settings.n_steps {
        let chunk = settings.sample_every.min(settings.n_steps - step);
        op.advance(&mut psi, chunk);
        step += chunk;
        psi.t = t0 + settings.dt * step as f64;
        if step % settings.sample_every == 0 {
            record(&psi, step, &mut log)?;
            observer(&psi);
        }
    }
    if !settings.n_steps.is_multiple_of(settings.sample_every) && !psi.all_finite() {
        return Err(Error::NonFinite {
            step: settings.n_steps,
        });
    }
    Ok((psi, log))
}
