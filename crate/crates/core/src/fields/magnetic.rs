//! Time-harmonic magnetic diffusion in 2D: the out-of-plane phasor of the
//! magnetic vector potential satisfies `∇²Ȧ − jωμσȦ = −μJ̇` with `Ȧ = 0` on
//! the far-field truncation boundary and a symmetry (Neumann) condition at
//! x = 0 when only half the device is modeled.
//!
//! The inductor turns are stranded conductors: they carry an imposed uniform
//! rms source current density and do not themselves conduct eddy currents.
//! Phasors use the rms convention throughout, so the Joule-loss coupling is
//! `Q = ω²|Ȧ|²/ρ` with no extra factor of 1/2.

use super::linalg::{bicgstab_jacobi, CsrBuilder};
use super::{FieldError, Grid2, GridField, GridFieldComplex, GridFieldReal};
use crate::geometry::PlateDomain;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// The four independent turn heights above the plate's top surface, in mm.
/// Turn j sits above the half-plate at the j-th center position counted from
/// the symmetry axis outward; the other four turns are mirror images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InductorGeometry {
    pub xi_mm: [f64; 4],
}

impl InductorGeometry {
    pub const XI_MIN_MM: f64 = 5.0;
    pub const XI_MAX_MM: f64 = 15.0;

    pub fn new(xi_mm: [f64; 4]) -> Result<Self, FieldError> {
        for (i, &v) in xi_mm.iter().enumerate() {
            if !(Self::XI_MIN_MM..=Self::XI_MAX_MM).contains(&v) {
                return Err(FieldError::DesignOutOfRange { index: i, value: v });
            }
        }
        Ok(InductorGeometry { xi_mm })
    }

    /// Clamps to the design box instead of failing; optimizers stay inside
    /// the box by construction but accumulated roundoff can graze the edges.
    pub fn clamped(xi_mm: [f64; 4]) -> Self {
        let mut v = xi_mm;
        for x in &mut v {
            *x = x.clamp(Self::XI_MIN_MM, Self::XI_MAX_MM);
        }
        InductorGeometry { xi_mm: v }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Boundary condition on one outer edge of the magnetic domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeBc {
    /// Far-field truncation, `Ȧ = 0`.
    DirichletZero,
    /// Mirror symmetry, `∂Ȧ/∂n = 0`.
    Neumann,
}

/// Configuration of the benchmark magnetic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagneticConfig {
    /// Air box `x0, x1, y0, y1` in meters. With `x0 = 0` the symmetry
    /// condition applies on the left edge.
    pub domain: (f64, f64, f64, f64),
    /// Target spacing inside the fine region around plate and turns.
    pub fine_hx: f64,
    pub fine_hy: f64,
    /// Fine region extents.
    pub fine_x_to: f64,
    pub fine_y_from: f64,
    pub fine_y_to: f64,
    /// Geometric growth factor and spacing cap outside the fine region.
    pub growth: f64,
    pub h_max: f64,
    pub frequency_hz: f64,
    pub current_rms_a: f64,
    /// Square turn cross-section.
    pub turn_width: f64,
    pub turn_height: f64,
    /// Turn center x-positions (half domain), meters.
    pub turn_centers_x: [f64; 4],
    pub plate: PlateDomain,
    pub rho_graphite: f64,
    pub rho_copper: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for MagneticConfig {
    fn default() -> Self {
        MagneticConfig {
            domain: (0.0, 0.72, -0.36, 0.72),
            fine_hx: 2.5e-3,
            fine_hy: 2.0e-3,
            fine_x_to: 0.13,
            fine_y_from: -0.016,
            fine_y_to: 0.046,
            growth: 1.35,
            h_max: 0.08,
            frequency_hz: 4250.0,
            current_rms_a: 400.0,
            turn_width: 0.010,
            turn_height: 0.010,
            turn_centers_x: [0.015, 0.045, 0.075, 0.105],
            plate: PlateDomain::default(),
            rho_graphite: 7.76e-6,
            rho_copper: 2.0e-8,
            solver_tol: 1e-9,
            solver_max_iter: 50_000,
        }
    }
}

impl MagneticConfig {
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz
    }

    /// Skin depth in the graphite plate at the drive frequency.
    pub fn skin_depth(&self) -> f64 {
        (2.0 * self.rho_graphite / (self.omega() * MU0)).sqrt()
    }

    /// Imposed rms source density in a turn.
    pub fn turn_current_density(&self) -> f64 {
        self.current_rms_a / (self.turn_width * self.turn_height)
    }

    pub fn half_domain(&self) -> bool {
        self.domain.0 == 0.0
    }

    /// Turn rectangles; the half domain carries the four turns at positive
    /// x, the full domain adds their mirror images. ξ is the height of the
    /// turn center above the plate's top surface.
    pub fn turn_rects(&self, geom: &InductorGeometry) -> Vec<Rect> {
        let mut rects = Vec::new();
        for (j, &cx) in self.turn_centers_x.iter().enumerate() {
            let y0 = self.plate.thickness + geom.xi_mm[j] * 1e-3 - 0.5 * self.turn_height;
            let r = Rect {
                x0: cx - 0.5 * self.turn_width,
                x1: cx + 0.5 * self.turn_width,
                y0,
                y1: y0 + self.turn_height,
            };
            rects.push(r);
            if !self.half_domain() {
                rects.push(Rect {
                    x0: -r.x1,
                    x1: -r.x0,
                    y0: r.y0,
                    y1: r.y1,
                });
            }
        }
        rects
    }

    /// Plate rectangle in this domain (mirrored when modeling both halves).
    pub fn plate_rect(&self) -> Rect {
        let x0 = if self.half_domain() {
            0.0
        } else {
            -self.plate.half_width
        };
        Rect {
            x0,
            x1: self.plate.half_width,
            y0: 0.0,
            y1: self.plate.thickness,
        }
    }

    fn validate_domain(&self) -> Result<(), FieldError> {
        let (x0, x1, y0, y1) = self.domain;
        let min_clearance = 2.5 * self.plate.half_width;
        let right = x1 - self.plate.half_width;
        let top = y1 - self.plate.thickness;
        let bottom = -y0;
        if right < min_clearance || top < min_clearance || bottom < min_clearance {
            return Err(FieldError::DomainTooSmall(format!(
                "clearances right {right:.3} m, top {top:.3} m, bottom {bottom:.3} m; need {min_clearance:.3} m"
            )));
        }
        if !self.half_domain() && -x0 - self.plate.half_width < min_clearance {
            return Err(FieldError::DomainTooSmall(
                "left clearance too small for full-domain model".into(),
            ));
        }
        // resolve the skin depth: at least 4 cells per δ in the plate
        if self.fine_hy > self.skin_depth() / 4.0 || self.fine_hx > self.skin_depth() / 4.0 {
            return Err(FieldError::DomainTooSmall(format!(
                "grid spacing {}/{} too coarse for skin depth {:.4} m",
                self.fine_hx,
                self.fine_hy,
                self.skin_depth()
            )));
        }
        Ok(())
    }
}

/// Uniform-within-breakpoints axis over the fine window, geometric growth to
/// the domain bounds.
fn graded_axis(
    lo: f64,
    hi: f64,
    fine_lo: f64,
    fine_hi: f64,
    fine_h: f64,
    growth: f64,
    h_max: f64,
    breaks: &[f64],
) -> Vec<f64> {
    let fine_lo = fine_lo.max(lo);
    let fine_hi = fine_hi.min(hi);
    let mut knots: Vec<f64> = vec![fine_lo, fine_hi];
    knots.extend(breaks.iter().copied().filter(|&b| b > fine_lo && b < fine_hi));
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let mut xs: Vec<f64> = vec![knots[0]];
    for w in knots.windows(2) {
        let n = ((w[1] - w[0]) / fine_h).ceil().max(1.0) as usize;
        for i in 1..=n {
            xs.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
        }
    }
    // grow right
    let mut h = fine_h;
    let mut x = *xs.last().unwrap();
    while x < hi {
        h = (h * growth).min(h_max);
        x += h;
        if x >= hi - 0.25 * h {
            x = hi;
        }
        xs.push(x);
    }
    // grow left
    let mut left = Vec::new();
    let mut h = fine_h;
    let mut x = xs[0];
    while x > lo {
        h = (h * growth).min(h_max);
        x -= h;
        if x <= lo + 0.25 * h {
            x = lo;
        }
        left.push(x);
    }
    left.reverse();
    left.extend(xs);
    left
}

/// Per-cell material data on a magnetic grid: electrical conductivity and
/// imposed rms source current density. Cells are `(nx-1) × (ny-1)`,
/// cell-major with x fastest.
#[derive(Debug, Clone)]
pub struct MaterialMap {
    pub grid: Grid2,
    pub sigma_cells: Vec<f64>,
    pub j_cells: Vec<f64>,
    pub plate: Rect,
    pub rho_graphite: f64,
}

impl MaterialMap {
    pub fn cell_count(&self) -> usize {
        (self.grid.nx() - 1) * (self.grid.ny() - 1)
    }

    /// Whether a point lies in the (closed) plate rectangle.
    pub fn in_plate(&self, x: f64, y: f64) -> bool {
        x >= self.plate.x0 && x <= self.plate.x1 && y >= self.plate.y0 && y <= self.plate.y1
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Builds the grid and material map for an inductor geometry.
pub fn build_materials(geom: &InductorGeometry, cfg: &MagneticConfig) -> Result<MaterialMap, FieldError> {
    cfg.validate_domain()?;
    let (x0, x1, y0, y1) = cfg.domain;
    let plate = cfg.plate_rect();

    let mut x_breaks: Vec<f64> = vec![plate.x0, plate.x1];
    for r in cfg.turn_rects(geom) {
        x_breaks.push(r.x0);
        x_breaks.push(r.x1);
    }
    if cfg.half_domain() {
        let xs = graded_axis(
            x0, x1, 0.0, cfg.fine_x_to, cfg.fine_hx, cfg.growth, cfg.h_max, &x_breaks,
        );
        let ys = graded_axis(
            y0,
            y1,
            cfg.fine_y_from,
            cfg.fine_y_to,
            cfg.fine_hy,
            cfg.growth,
            cfg.h_max,
            &[0.0, cfg.plate.thickness],
        );
        let grid = Grid2::new(xs, ys)?;
        fill_materials(grid, geom, cfg, plate)
    } else {
        // mirror-exact grid: build the positive half then reflect
        let xs_half = graded_axis(
            0.0, x1, 0.0, cfg.fine_x_to, cfg.fine_hx, cfg.growth, cfg.h_max, &x_breaks,
        );
        let mut xs: Vec<f64> = xs_half.iter().skip(1).map(|&v| -v).collect();
        xs.reverse();
        xs.extend(xs_half);
        let ys = graded_axis(
            y0,
            y1,
            cfg.fine_y_from,
            cfg.fine_y_to,
            cfg.fine_hy,
            cfg.growth,
            cfg.h_max,
            &[0.0, cfg.plate.thickness],
        );
        let grid = Grid2::new(xs, ys)?;
        fill_materials(grid, geom, cfg, plate)
    }
}

fn fill_materials(
    grid: Grid2,
    geom: &InductorGeometry,
    cfg: &MagneticConfig,
    plate: Rect,
) -> Result<MaterialMap, FieldError> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let sigma_g = 1.0 / cfg.rho_graphite;
    let j_turn = cfg.turn_current_density();
    let rects = cfg.turn_rects(geom);
    let mut sigma_cells = vec![0.0; (nx - 1) * (ny - 1)];
    let mut j_cells = vec![0.0; (nx - 1) * (ny - 1)];
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let (cx0, cx1) = (grid.xs[ix], grid.xs[ix + 1]);
            let (cy0, cy1) = (grid.ys[iy], grid.ys[iy + 1]);
            let area = (cx1 - cx0) * (cy1 - cy0);
            let c = iy * (nx - 1) + ix;
            let plate_frac =
                overlap(cx0, cx1, plate.x0, plate.x1) * overlap(cy0, cy1, plate.y0, plate.y1) / area;
            // plate edges are grid lines, so this is 0 or 1 up to roundoff
            if plate_frac > 0.5 {
                sigma_cells[c] = sigma_g;
            }
            let mut jfrac = 0.0;
            for r in &rects {
                jfrac += overlap(cx0, cx1, r.x0, r.x1) * overlap(cy0, cy1, r.y0, r.y1) / area;
            }
            j_cells[c] = jfrac * j_turn;
        }
    }
    Ok(MaterialMap {
        grid,
        sigma_cells,
        j_cells,
        plate,
        rho_graphite: cfg.rho_graphite,
    })
}

/// A fully specified discrete magnetic problem.
pub struct MagneticProblem {
    pub materials: MaterialMap,
    pub omega: f64,
    /// west, east, south, north
    pub bc: [EdgeBc; 4],
    pub tol: f64,
    pub max_iter: usize,
}

/// Area-weighted nodal average of a per-cell quantity.
fn node_average(grid: &Grid2, cells: &[f64], ix: usize, iy: usize) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut num = 0.0;
    let mut den = 0.0;
    for (cx, cy) in [
        (ix.wrapping_sub(1), iy.wrapping_sub(1)),
        (ix, iy.wrapping_sub(1)),
        (ix.wrapping_sub(1), iy),
        (ix, iy),
    ] {
        if cx < nx - 1 && cy < ny - 1 {
            let a = (grid.xs[cx + 1] - grid.xs[cx]) * (grid.ys[cy + 1] - grid.ys[cy]);
            num += cells[cy * (nx - 1) + cx] * a;
            den += a;
        }
    }
    num / den
}

/// Assembles and solves the complex system with diagonal-preconditioned
/// BiCGStab to the configured relative residual, or fails with a residual
/// report.
pub fn solve_magnetic_problem(p: &MagneticProblem) -> Result<GridFieldComplex, FieldError> {
    let grid = &p.materials.grid;
    let (nx, ny) = (grid.nx(), grid.ny());
    let n = nx * ny;
    let mut builder = CsrBuilder::new(n);
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    let [bc_w, bc_e, bc_s, bc_n] = p.bc;

    for iy in 0..ny {
        for ix in 0..nx {
            let r = grid.idx(ix, iy);
            let on_w = ix == 0;
            let on_e = ix == nx - 1;
            let on_s = iy == 0;
            let on_n = iy == ny - 1;
            let dirichlet = (on_w && bc_w == EdgeBc::DirichletZero)
                || (on_e && bc_e == EdgeBc::DirichletZero)
                || (on_s && bc_s == EdgeBc::DirichletZero)
                || (on_n && bc_n == EdgeBc::DirichletZero);
            if dirichlet {
                builder.add(r, r, Complex64::new(1.0, 0.0));
                continue;
            }
            // spacings; Neumann edges mirror the interior spacing
            let (hw, he) = if on_w {
                let h = grid.xs[1] - grid.xs[0];
                (h, h)
            } else if on_e {
                let h = grid.xs[nx - 1] - grid.xs[nx - 2];
                (h, h)
            } else {
                (grid.xs[ix] - grid.xs[ix - 1], grid.xs[ix + 1] - grid.xs[ix])
            };
            let (hs, hn) = if on_s {
                let h = grid.ys[1] - grid.ys[0];
                (h, h)
            } else if on_n {
                let h = grid.ys[ny - 1] - grid.ys[ny - 2];
                (h, h)
            } else {
                (grid.ys[iy] - grid.ys[iy - 1], grid.ys[iy + 1] - grid.ys[iy])
            };

            let cw = 2.0 / (hw * (hw + he));
            let ce = 2.0 / (he * (hw + he));
            let cs = 2.0 / (hs * (hs + hn));
            let cn = 2.0 / (hn * (hs + hn));
            let sigma = node_average(grid, &p.materials.sigma_cells, ix, iy);
            let j = node_average(grid, &p.materials.j_cells, ix, iy);

            // −∇²A + jωμσA = μJ
            builder.add(r, r, Complex64::new(cw + ce + cs + cn, p.omega * MU0 * sigma));
            let mut west = cw;
            let mut east = ce;
            if on_w {
                east += west;
                west = 0.0;
            }
            if on_e {
                west += east;
                east = 0.0;
            }
            let mut south = cs;
            let mut north = cn;
            if on_s {
                north += south;
                south = 0.0;
            }
            if on_n {
                south += north;
                north = 0.0;
            }
            if west != 0.0 {
                builder.add(r, grid.idx(ix - 1, iy), Complex64::new(-west, 0.0));
            }
            if east != 0.0 {
                builder.add(r, grid.idx(ix + 1, iy), Complex64::new(-east, 0.0));
            }
            if south != 0.0 {
                builder.add(r, grid.idx(ix, iy - 1), Complex64::new(-south, 0.0));
            }
            if north != 0.0 {
                builder.add(r, grid.idx(ix, iy + 1), Complex64::new(-north, 0.0));
            }
            rhs[r] = Complex64::new(MU0 * j, 0.0);
        }
    }

    let a = builder.build();
    let sol = bicgstab_jacobi(&a, &rhs, p.tol, p.max_iter)?;
    GridField::new(grid.clone(), sol.x)
}

/// Solves the benchmark magnetic model for one inductor geometry. The left
/// edge carries the symmetry condition when the domain starts at x = 0.
pub fn solve_magnetic(
    geom: &InductorGeometry,
    cfg: &MagneticConfig,
) -> Result<(GridFieldComplex, MaterialMap), FieldError> {
    let materials = build_materials(geom, cfg)?;
    let bc_w = if cfg.half_domain() {
        EdgeBc::Neumann
    } else {
        EdgeBc::DirichletZero
    };
    let problem = MagneticProblem {
        materials,
        omega: cfg.omega(),
        bc: [bc_w, EdgeBc::DirichletZero, EdgeBc::DirichletZero, EdgeBc::DirichletZero],
        tol: cfg.solver_tol,
        max_iter: cfg.solver_max_iter,
    };
    let a = solve_magnetic_problem(&problem)?;
    Ok((a, problem.materials))
}

/// Pointwise Joule-loss density on the magnetic grid: `Q = ω²|Ȧ|²/ρ` at
/// nodes inside the plate, zero in non-conducting regions.
pub fn joule_losses(a: &GridFieldComplex, materials: &MaterialMap, omega: f64) -> GridFieldReal {
    let grid = a.grid.clone();
    let mut values = vec![0.0; grid.n_nodes()];
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let (x, y) = (grid.xs[ix], grid.ys[iy]);
            if materials.in_plate(x, y) {
                let amp2 = a.at(ix, iy).norm_sqr();
                values[grid.idx(ix, iy)] = omega * omega * amp2 / materials.rho_graphite;
            }
        }
    }
    GridField { grid, values }
}

/// Joule-loss density at arbitrary points inside the plate, from bilinear
/// interpolation of the phasor.
pub fn q_at_points(
    a: &GridFieldComplex,
    materials: &MaterialMap,
    omega: f64,
    points: &[(f64, f64)],
) -> Result<Vec<f64>, FieldError> {
    points
        .iter()
        .map(|&(x, y)| {
            if !materials.in_plate(x, y) {
                return Ok(0.0);
            }
            let av = a.interpolate(x, y)?;
            Ok(omega * omega * av.norm_sqr() / materials.rho_graphite)
        })
        .collect()
}

/// Joule-loss density resampled onto a (plate) grid.
pub fn q_on_grid(
    a: &GridFieldComplex,
    materials: &MaterialMap,
    omega: f64,
    grid: &Grid2,
) -> Result<GridFieldReal, FieldError> {
    let mut values = vec![0.0; grid.n_nodes()];
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let (x, y) = (grid.xs[ix], grid.ys[iy]);
            values[grid.idx(ix, iy)] = if materials.in_plate(x, y) {
                let av = a.interpolate(x, y)?;
                omega * omega * av.norm_sqr() / materials.rho_graphite
            } else {
                0.0
            };
        }
    }
    Ok(GridField {
        grid: grid.clone(),
        values,
    })
}
