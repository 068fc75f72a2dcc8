//! Plain-text writers: per-sample time series (CSV), density grids for
//! contour plotters, and run metadata.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::config::print_config;
use crate::error::{Error, Result};
use crate::experiments::RunBundle;
use crate::quantum::WaveGrid;

pub const SERIES_HEADER: &str = "t,x,y,kx,ky,E,Lz,Lz_rate,zx,zy,sx,sy,Lq,Lc,S,alphaS";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Seventeen significant digits; parses back to the same double.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_field(row: &mut String, value: Option<f64>) {
    row.push(',');
    if let Some(v) = value {
        row.push_str(&fmt_num(v));
    }
}

/// CSV lines for the bundle, header first. Columns an engine did not
/// produce are left empty. `E` is the semiclassical energy when a
/// trajectory exists and the quantum expectation value otherwise.
pub fn series_lines(bundle: &RunBundle) -> Vec<String> {
    let n = bundle.sample_count();
    let mut lines = Vec::with_capacity(n + 1);
    lines.push(SERIES_HEADER.to_string());
    let traj = bundle.trajectory.as_ref();
    let log = bundle.propagation.as_ref();
    for i in 0..n {
        let c = traj.map(|t| &t.samples[i]);
        let q = log.and_then(|l| l.samples.get(i));
        let a = bundle.angular.get(i);
        let t = c.map(|c| c.t()).or(q.map(|q| q.t)).unwrap_or_default();
        let mut row = fmt_num(t);
        push_field(&mut row, c.map(|c| c.state.r.x));
        push_field(&mut row, c.map(|c| c.state.r.y));
        push_field(&mut row, c.map(|c| c.k_reported.x));
        push_field(&mut row, c.map(|c| c.k_reported.y));
        push_field(&mut row, c.map(|c| c.energy).or(q.map(|q| q.energy)));
        push_field(&mut row, c.map(|c| c.lz));
        push_field(&mut row, c.map(|c| c.lz_rate));
        push_field(&mut row, q.map(|q| q.moments.mean.x));
        push_field(&mut row, q.map(|q| q.moments.mean.y));
        push_field(&mut row, q.map(|q| q.moments.skew.x));
        push_field(&mut row, q.map(|q| q.moments.skew.y));
        push_field(&mut row, a.map(|a| a.lq));
        push_field(&mut row, a.map(|a| a.lc));
        push_field(&mut row, a.map(|a| a.s));
        push_field(&mut row, a.map(|a| a.alpha_s));
        lines.push(row);
    }
    lines
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let err = io_err(path);
    let mut w = BufWriter::new(File::create(path).map_err(&err)?);
    for line in lines {
        w.write_all(line.as_bytes()).map_err(&err)?;
        w.write_all(b"\n").map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn write_series(bundle: &RunBundle, path: &Path) -> Result<()> {
    write_lines(path, series_lines(bundle))
}

/// Probability density in the XY plane, summed over Z for 3-D grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub nx: usize,
    pub ny: usize,
    /// Coordinates of the first site.
    pub x0: f64,
    pub y0: f64,
    pub a: f64,
    pub b: f64,
    /// Row-major, `ny` rows of `nx` values.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn from_grid(psi: &WaveGrid) -> Result<Self> {
        let spec = &psi.spec;
        if spec.dims() < 2 {
            return Err(Error::InvalidParameter(
                "density snapshots need a 2-D or 3-D grid".into(),
            ));
        }
        let [nx, ny, nz] = spec.sites;
        let mut values = vec![0.0; nx * ny];
        for k in 0..nz {
            for (cell, c) in values.iter_mut().zip(&psi.coeffs[k * nx * ny..(k + 1) * nx * ny]) {
                *cell += c.norm_sqr();
            }
        }
        Ok(DensityGrid {
            nx,
            ny,
            x0: spec.coordinate(0, 0),
            y0: spec.coordinate(1, 0),
            a: spec.lattice.spacing.x,
            b: spec.lattice.spacing.y,
            values,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + self.a * i as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + self.b * j as f64
    }

    /// Marginal along X (`axis = 0`) or Y (`axis = 1`).
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; if axis == 0 { self.nx } else { self.ny }];
        for j in 0..self.ny {
            for i in 0..self.nx {
                out[if axis == 0 { i } else { j }] += self.values[j * self.nx + i];
            }
        }
        out
    }

    pub fn lines(&self) -> Vec<String> {
        let mut lines = Vec::with_capacity(self.ny + 1);
        lines.push(format!(
            "{} {} {} {} {} {}",
            self.nx,
            self.ny,
            fmt_num(self.x0),
            fmt_num(self.y0),
            fmt_num(self.a),
            fmt_num(self.b)
        ));
        for row in self.values.chunks(self.nx) {
            lines.push(row.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(" "));
        }
        lines
    }

    pub fn read(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty density file".into()))?;
        let header = header.map_err(io_err(path))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_err(1, format!("expected `nx ny x0 y0 a b`, got `{header}`")));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| parse_err(1, format!("bad count `{s}`")));
        let num = |s: &str, line: usize| s.parse::<f64>().map_err(|_| parse_err(line, format!("bad number `{s}`")));
        let (nx, ny) = (count(fields[0])?, count(fields[1])?);
        let mut grid = DensityGrid {
            nx,
            ny,
            x0: num(fields[2], 1)?,
            y0: num(fields[3], 1)?,
            a: num(fields[4], 1)?,
            b: num(fields[5], 1)?,
            values: Vec::with_capacity(nx * ny),
        };
        for (i, line) in lines {
            let line = line.map_err(io_err(path))?;
            let row = line
                .split_whitespace()
                .map(|s| num(s, i + 1))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != nx {
                return Err(parse_err(i + 1, format!("expected {nx} values, got {}", row.len())));
            }
            grid.values.extend(row);
        }
        if grid.values.len() != nx * ny {
            return Err(parse_err(ny + 1, format!("expected {ny} rows")));
        }
        Ok(grid)
    }
}

pub fn write_density(psi: &WaveGrid, path: &Path) -> Result<()> {
    write_lines(path, DensityGrid::from_grid(psi)?.lines())
}

/// Every parameter of the run with its provenance, in the configuration
/// format, followed by summary results as comments.
pub fn metadata_text(bundle: &RunBundle) -> String {
    let mut text = print_config(&bundle.config);
    text.push_str("\n# samples = ");
    text.push_str(&bundle.sample_count().to_string());
    if let Some(traj) = &bundle.trajectory {
        text.push_str(&format!("\n# max_energy_drift = {:e}", traj.max_energy_drift));
        text.push_str(&format!("\n# apsides = {}", bundle.apsides.len()));
    }
    if let Some(log) = &bundle.propagation {
        text.push_str(&format!("\n# max_norm_drift = {:e}", log.max_norm_drift()));
    }
    if !bundle.angular.is_empty() {
        match bundle.alpha {
            Some(a) => text.push_str(&format!("\n# alpha = {}", fmt_num(a))),
            None => text.push_str("\n# alpha = undetermined"),
        }
    }
    text.push('\n');
    text
}

pub fn write_metadata(bundle: &RunBundle, path: &Path) -> Result<()> {
    std::fs::write(path, metadata_text(bundle)).map_err(io_err(path))
}
