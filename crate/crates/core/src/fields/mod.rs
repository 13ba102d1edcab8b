//! Reference PDE solvers and field containers.
//!
//! The steady heat solver (5-point stencil with Robin ghost closure, banded
//! direct factorization) and the time-harmonic magnetic solver (complex
//! finite differences on a graded rectilinear grid, diagonal-preconditioned
//! BiCGStab) replace a commercial FEA package as both the training-data
//! generator and the verification reference for everything downstream.

pub mod linalg;
pub mod magnetic;
pub mod thermal;

pub use magnetic::{
    joule_losses, solve_magnetic, solve_magnetic_problem, EdgeBc, InductorGeometry,
    MagneticConfig, MagneticProblem, MaterialMap,
};
pub use thermal::{solve_thermal_fd, RobinEdges, ThermalSolver};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("point ({0}, {1}) lies outside the grid hull")]
    OutsideHull(f64, f64),
    #[error("grid axes must be strictly increasing with at least two points")]
    BadGrid,
    #[error("value count {got} does not match grid size {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("design variable {index} = {value} mm is outside [5, 15] mm")]
    DesignOutOfRange { index: usize, value: f64 },
    #[error("thermal system is singular: no Robin exchange (h = 0) to fix the temperature level")]
    SingularThermal,
    #[error("far-field boundary too close to the plate: {0}")]
    DomainTooSmall(String),
    #[error("linear solve failed: {0}")]
    Linalg(#[from] linalg::LinalgError),
    #[error("non-finite value in field")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rectilinear 2D grid: strictly increasing node coordinates per axis.
/// Node `(ix, iy)` maps to flat index `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Grid2 {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, FieldError> {
        let ok = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !ok(&xs) || !ok(&ys) {
            return Err(FieldError::BadGrid);
        }
        Ok(Grid2 { xs, ys })
    }

    pub fn uniform(
        x0: f64,
        x1: f64,
        nx: usize,
        y0: f64,
        y1: f64,
        ny: usize,
    ) -> Result<Self, FieldError> {
        if nx < 2 || ny < 2 {
            return Err(FieldError::BadGrid);
        }
        Grid2::new(
            crate::util::linspace(x0, x1, nx),
            crate::util::linspace(y0, y1, ny),
        )
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nx() * self.ny()
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx() + ix
    }

    /// Index of the cell containing `v` along `axis` (largest `i` with
    /// `axis[i] <= v`), clamped so `i + 1` is valid. None if outside.
    fn cell_of(axis: &[f64], v: f64) -> Option<usize> {
        if v < axis[0] || v > axis[axis.len() - 1] {
            return None;
        }
        let i = axis.partition_point(|&a| a <= v);
        Some(i.saturating_sub(1).min(axis.len() - 2))
    }
}

/// Node-indexed field on a rectilinear grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    pub grid: Grid2,
    pub values: Vec<T>,
}

pub type GridFieldReal = GridField<f64>;
pub type GridFieldComplex = GridField<Complex64>;

impl<T: Copy> GridField<T> {
    pub fn new(grid: Grid2, values: Vec<T>) -> Result<Self, FieldError> {
        if values.len() != grid.n_nodes() {
            return Err(FieldError::SizeMismatch {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        Ok(GridField { grid, values })
    }

    pub fn constant(grid: Grid2, v: T) -> Self {
        let n = grid.n_nodes();
        GridField {
            grid,
            values: vec![v; n],
        }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[self.grid.idx(ix, iy)]
    }

    /// Bilinear interpolation weights and corner indices for a point.
    fn bilinear_stencil(&self, x: f64, y: f64) -> Result<([usize; 4], [f64; 4]), FieldError> {
        let ix = Grid2::cell_of(&self.grid.xs, x).ok_or(FieldError::OutsideHull(x, y))?;
        let iy = Grid2::cell_of(&self.grid.ys, y).ok_or(FieldError::OutsideHull(x, y))?;
        let (x0, x1) = (self.grid.xs[ix], self.grid.xs[ix + 1]);
        let (y0, y1) = (self.grid.ys[iy], self.grid.ys[iy + 1]);
        let tx = (x - x0) / (x1 - x0);
        let ty = (y - y0) / (y1 - y0);
        let idx = [
            self.grid.idx(ix, iy),
            self.grid.idx(ix + 1, iy),
            self.grid.idx(ix, iy + 1),
            self.grid.idx(ix + 1, iy + 1),
        ];
        let w = [
            (1.0 - tx) * (1.0 - ty),
            tx * (1.0 - ty),
            (1.0 - tx) * ty,
            tx * ty,
        ];
        Ok((idx, w))
    }
}

impl GridFieldReal {
    /// Bilinear interpolation from the four surrounding nodes.
    pub fn interpolate(&self, x: f64, y: f64) -> Result<f64, FieldError> {
        let (idx, w) = self.bilinear_stencil(x, y)?;
        Ok(idx.iter().zip(&w).map(|(&i, &wi)| self.values[i] * wi).sum())
    }

    pub fn interpolate_many(&self, points: &[(f64, f64)]) -> Result<Vec<f64>, FieldError> {
        points.iter().map(|&(x, y)| self.interpolate(x, y)).collect()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_value(&self) -> f64 {
        crate::util::pairwise_sum(&self.values) / self.values.len() as f64
    }
}

impl GridFieldComplex {
    pub fn interpolate(&self, x: f64, y: f64) -> Result<Complex64, FieldError> {
        let (idx, w) = self.bilinear_stencil(x, y)?;
        Ok(idx
            .iter()
            .zip(&w)
            .map(|(&i, &wi)| self.values[i] * wi)
            .sum())
    }
}

/// Trapezoidal integral of a nodal field over its whole grid.
pub fn trapezoid_integral(field: &GridFieldReal) -> f64 {
    let (nx, ny) = (field.grid.nx(), field.grid.ny());
    let mut cells = Vec::with_capacity((nx - 1) * (ny - 1));
    for iy in 0..ny - 1 {
        let dy = field.grid.ys[iy + 1] - field.grid.ys[iy];
        for ix in 0..nx - 1 {
            let dx = field.grid.xs[ix + 1] - field.grid.xs[ix];
            let s = field.at(ix, iy)
                + field.at(ix + 1, iy)
                + field.at(ix, iy + 1)
                + field.at(ix + 1, iy + 1);
            cells.push(0.25 * s * dx * dy);
        }
    }
    crate::util::pairwise_sum(&cells)
}

/// Total induced power in the plate: the integral of the Joule-loss density
/// over the half-plate grid (half-domain convention; no doubling).
pub fn total_induced_power(q: &GridFieldReal) -> f64 {
    trapezoid_integral(q)
}

/// Header of the compact binary grid format.
#[derive(Debug, Serialize, Deserialize)]
struct GridFileHeader {
    kind: String,
    nx: usize,
    ny: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

/// Writes `kind` + grid + little-endian f64 payload (complex fields store
/// interleaved re/im pairs).
pub fn write_grid_binary(
    mut w: impl Write,
    kind: &str,
    grid: &Grid2,
    payload: &[f64],
) -> Result<(), FieldError> {
    let header = GridFileHeader {
        kind: kind.to_string(),
        nx: grid.nx(),
        ny: grid.ny(),
        xs: grid.xs.clone(),
        ys: grid.ys.clone(),
    };
    let hjson = serde_json::to_vec(&header).expect("header serializes");
    w.write_all(&(hjson.len() as u64).to_le_bytes())?;
    w.write_all(&hjson)?;
    for v in payload {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid_binary(mut r: impl Read) -> Result<(String, Grid2, Vec<f64>), FieldError> {
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let hlen = u64::from_le_bytes(len8) as usize;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf)?;
    let header: GridFileHeader = serde_json::from_slice(&hbuf)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let mut payload = Vec::new();
    let mut buf = [0u8; 8];
    loop {
        match r.read_exact(&mut buf) {
            Ok(()) => payload.push(f64::from_le_bytes(buf)),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
    }
    let grid = Grid2::new(header.xs, header.ys)?;
    Ok((header.kind, grid, payload))
}

pub fn field_to_binary(field: &GridFieldReal, kind: &str, w: impl Write) -> Result<(), FieldError> {
    write_grid_binary(w, kind, &field.grid, &field.values)
}

pub fn field_from_binary(r: impl Read) -> Result<(String, GridFieldReal), FieldError> {
    let (kind, grid, payload) = read_grid_binary(r)?;
    Ok((kind.clone(), GridField::new(grid, payload)?))
}

/// CSV snapshot `x,y,value`.
pub fn field_to_csv(field: &GridFieldReal, mut w: impl Write) -> Result<(), FieldError> {
    writeln!(w, "x,y,value")?;
    for iy in 0..field.grid.ny() {
        for ix in 0..field.grid.nx() {
            writeln!(
                w,
                "{},{},{}",
                field.grid.xs[ix],
                field.grid.ys[iy],
                field.at(ix, iy)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rel_err;

    #[test]
    fn interpolation_reproduces_node_values() {
        let grid = Grid2::uniform(0.0, 1.0, 5, 0.0, 2.0, 4).unwrap();
        let values: Vec<f64> = (0..grid.n_nodes()).map(|i| i as f64).collect();
        let f = GridField::new(grid, values).unwrap();
        for iy in 0..4 {
            for ix in 0..5 {
                let got = f.interpolate(f.grid.xs[ix], f.grid.ys[iy]).unwrap();
                assert_eq!(got, f.at(ix, iy));
            }
        }
    }

    #[test]
    fn interpolation_exact_for_bilinear_field() {
        let grid = Grid2::uniform(0.0, 1.0, 7, 0.0, 1.0, 5).unwrap();
        let mut values = vec![0.0; grid.n_nodes()];
        for iy in 0..5 {
            for ix in 0..7 {
                values[grid.idx(ix, iy)] = grid.xs[ix] * grid.ys[iy];
            }
        }
        let f = GridField::new(grid, values).unwrap();
        for &(x, y) in &[(0.13, 0.77), (0.5, 0.5), (0.99, 0.01)] {
            assert!((f.interpolate(x, y).unwrap() - x * y).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_error_is_second_order() {
        // smooth Gaussian bump; halving the spacing should shrink the max
        // interpolation error by about 4. Probe densely so the max is a
        // stable statistic across resolutions.
        let bump = |x: f64, y: f64| (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.02).exp();
        let mut probe = Vec::new();
        for i in 0..60 {
            for j in 0..60 {
                probe.push((
                    0.05 + 0.9 * (i as f64 + 0.37) / 60.0,
                    0.05 + 0.9 * (j as f64 + 0.61) / 60.0,
                ));
            }
        }
        let mut errs = Vec::new();
        for n in [41, 81, 161] {
            let grid = Grid2::uniform(0.0, 1.0, n, 0.0, 1.0, n).unwrap();
            let mut values = vec![0.0; grid.n_nodes()];
            for iy in 0..n {
                for ix in 0..n {
                    values[grid.idx(ix, iy)] = bump(grid.xs[ix], grid.ys[iy]);
                }
            }
            let f = GridField::new(grid, values).unwrap();
            let e = probe
                .iter()
                .map(|&(x, y)| (f.interpolate(x, y).unwrap() - bump(x, y)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(
            order1 > 1.7 && order2 > 1.7,
            "orders {order1:.2} {order2:.2} (errors {errs:?})"
        );
    }

    #[test]
    fn outside_hull_is_an_error() {
        let grid = Grid2::uniform(0.0, 1.0, 3, 0.0, 1.0, 3).unwrap();
        let f = GridField::constant(grid, 1.0);
        assert!(matches!(
            f.interpolate(1.2, 0.5),
            Err(FieldError::OutsideHull(_, _))
        ));
        assert!(f.interpolate(1.0, 1.0).is_ok());
    }

    #[test]
    fn trapezoid_on_constant_field() {
        let grid = Grid2::uniform(0.0, 0.12, 25, 0.0, 0.014, 8).unwrap();
        let f = GridField::constant(grid, 3.0);
        assert!(rel_err(trapezoid_integral(&f), 3.0 * 1.68e-3) < 1e-12);
        let z = GridField::constant(f.grid.clone(), 0.0);
        assert_eq!(total_induced_power(&z), 0.0);
    }

    #[test]
    fn binary_round_trip_bit_exact() {
        let grid = Grid2::uniform(0.0, 1.0, 4, 0.0, 1.0, 3).unwrap();
        let values: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let f = GridField::new(grid, values).unwrap();
        let mut buf = Vec::new();
        field_to_binary(&f, "temperature", &mut buf).unwrap();
        let (kind, f2) = field_from_binary(buf.as_slice()).unwrap();
        assert_eq!(kind, "temperature");
        assert_eq!(f.grid, f2.grid);
        for (a, b) in f.values.iter().zip(&f2.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
