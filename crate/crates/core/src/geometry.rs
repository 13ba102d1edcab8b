//! Structured rectangular discretization of the half-plate with Gauss
//! quadrature points for the variational energy loss, plus boundary segment
//! classification (convective Robin edges vs. the symmetry edge).

use crate::util::pairwise_sum;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("element counts must be positive, got nx={0}, ny={1}")]
    NonPositiveCounts(usize, usize),
    #[error("sample count {got} does not match quadrature point count {expected}")]
    SampleCountMismatch { expected: usize, got: usize },
}

/// Half of the graphite plate; the symmetry axis is x = 0 and the plate
/// occupies `[0, half_width] × [0, thickness]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateDomain {
    pub half_width: f64,
    pub thickness: f64,
}

impl Default for PlateDomain {
    fn default() -> Self {
        PlateDomain {
            half_width: 0.120,
            thickness: 0.014,
        }
    }
}

impl PlateDomain {
    pub fn area(&self) -> f64 {
        self.half_width * self.thickness
    }

    /// Total length of the convective (Robin) part of the boundary:
    /// top + bottom + right edge. The symmetry edge is excluded.
    pub fn robin_length(&self) -> f64 {
        2.0 * self.half_width + self.thickness
    }
}

/// A 2D quadrature point with its physical weight (weights over one element
/// sum to the element area; over one boundary segment, to its length).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

/// One rectangular element with its 2×2 tensor-product Gauss points.
#[derive(Debug, Clone)]
pub struct Element {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub area: f64,
    pub gauss: [GaussPoint; 4],
}

/// Which physical edge of the plate a boundary segment lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Top,
    Bottom,
    Right,
    /// Symmetry edge x = 0 (homogeneous Neumann; carries no quadrature).
    Left,
}

/// A straight boundary sub-segment with 1D 2-point Gauss quadrature and the
/// outward unit normal of its edge.
#[derive(Debug, Clone)]
pub struct BoundarySegment {
    pub edge: Edge,
    pub p0: (f64, f64),
    pub p1: (f64, f64),
    pub length: f64,
    pub normal: (f64, f64),
    pub gauss: [GaussPoint; 2],
}

/// Structured quadrature mesh of the plate. Immutable after construction;
/// the Gauss point coordinates are frozen for the lifetime of a training
/// run (the discretization does not change between epochs).
#[derive(Debug, Clone)]
pub struct QuadMesh {
    pub domain: PlateDomain,
    pub nx: usize,
    pub ny: usize,
    pub elements: Vec<Element>,
    pub robin_segments: Vec<BoundarySegment>,
    pub neumann_segments: Vec<BoundarySegment>,
}

const INV_SQRT3: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

impl QuadMesh {
    pub fn n_interior_points(&self) -> usize {
        self.elements.len() * 4
    }

    pub fn n_robin_points(&self) -> usize {
        self.robin_segments.len() * 2
    }

    /// Interior Gauss points in element order.
    pub fn interior_points(&self) -> impl Iterator<Item = GaussPoint> + '_ {
        self.elements.iter().flat_map(|e| e.gauss.iter().copied())
    }

    /// Robin boundary Gauss points with their segment's outward normal.
    pub fn robin_points(&self) -> impl Iterator<Item = (GaussPoint, (f64, f64))> + '_ {
        self.robin_segments
            .iter()
            .flat_map(|s| s.gauss.iter().map(move |g| (*g, s.normal)))
    }

    /// A compact fingerprint of all quadrature coordinates, used to assert
    /// that the discretization stays frozen across training epochs.
    pub fn coordinate_fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV offset basis
        let mut mix = |v: f64| {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        for g in self.interior_points() {
            mix(g.x);
            mix(g.y);
            mix(g.w);
        }
        for (g, n) in self.robin_points() {
            mix(g.x);
            mix(g.y);
            mix(g.w);
            mix(n.0);
            mix(n.1);
        }
        h
    }

    /// Debug CSV dump: element id, centroid, area.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "element,cx,cy,area")?;
        for (i, e) in self.elements.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                i,
                0.5 * (e.x0 + e.x1),
                0.5 * (e.y0 + e.y1),
                e.area
            )?;
        }
        Ok(())
    }
}

/// Builds an `nx × ny` mesh of equal rectangles with 2×2 Gauss points per
/// element and 2-point Gauss quadrature on each boundary sub-segment.
/// Robin segments cover the top, bottom and right edges; the left edge
/// (x = 0) is the symmetry edge.
pub fn build_mesh(domain: PlateDomain, nx: usize, ny: usize) -> Result<QuadMesh, GeometryError> {
    if nx == 0 || ny == 0 {
        return Err(GeometryError::NonPositiveCounts(nx, ny));
    }
    let dx = domain.half_width / nx as f64;
    let dy = domain.thickness / ny as f64;
    let area = dx * dy;
    let wq = area / 4.0;

    let mut elements = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let x0 = ix as f64 * dx;
            let y0 = iy as f64 * dy;
            let (xc, yc) = (x0 + 0.5 * dx, y0 + 0.5 * dy);
            let (gx, gy) = (0.5 * dx * INV_SQRT3, 0.5 * dy * INV_SQRT3);
            let gauss = [
                GaussPoint { x: xc - gx, y: yc - gy, w: wq },
                GaussPoint { x: xc + gx, y: yc - gy, w: wq },
                GaussPoint { x: xc - gx, y: yc + gy, w: wq },
                GaussPoint { x: xc + gx, y: yc + gy, w: wq },
            ];
            elements.push(Element {
                x0,
                y0,
                x1: x0 + dx,
                y1: y0 + dy,
                area,
                gauss,
            });
        }
    }

    let seg_1d = |edge: Edge, p0: (f64, f64), p1: (f64, f64), normal: (f64, f64)| {
        let length = ((p1.0 - p0.0).powi(2) + (p1.1 - p0.1).powi(2)).sqrt();
        let mid = (0.5 * (p0.0 + p1.0), 0.5 * (p0.1 + p1.1));
        let half = (0.5 * (p1.0 - p0.0), 0.5 * (p1.1 - p0.1));
        let wg = length / 2.0;
        let gauss = [
            GaussPoint {
                x: mid.0 - half.0 * INV_SQRT3,
                y: mid.1 - half.1 * INV_SQRT3,
                w: wg,
            },
            GaussPoint {
                x: mid.0 + half.0 * INV_SQRT3,
                y: mid.1 + half.1 * INV_SQRT3,
                w: wg,
            },
        ];
        BoundarySegment {
            edge,
            p0,
            p1,
            length,
            normal,
            gauss,
        }
    };

    let mut robin_segments = Vec::with_capacity(2 * nx + ny);
    let top = domain.thickness;
    for ix in 0..nx {
        let (xa, xb) = (ix as f64 * dx, (ix + 1) as f64 * dx);
        robin_segments.push(seg_1d(Edge::Top, (xa, top), (xb, top), (0.0, 1.0)));
        robin_segments.push(seg_1d(Edge::Bottom, (xa, 0.0), (xb, 0.0), (0.0, -1.0)));
    }
    let right = domain.half_width;
    for iy in 0..ny {
        let (ya, yb) = (iy as f64 * dy, (iy + 1) as f64 * dy);
        robin_segments.push(seg_1d(Edge::Right, (right, ya), (right, yb), (1.0, 0.0)));
    }

    let mut neumann_segments = Vec::with_capacity(ny);
    for iy in 0..ny {
        let (ya, yb) = (iy as f64 * dy, (iy + 1) as f64 * dy);
        neumann_segments.push(seg_1d(Edge::Left, (0.0, ya), (0.0, yb), (-1.0, 0.0)));
    }

    Ok(QuadMesh {
        domain,
        nx,
        ny,
        elements,
        robin_segments,
        neumann_segments,
    })
}

/// Quadrature over the domain: `samples` holds one value per interior Gauss
/// point, in element order.
pub fn integrate_domain(mesh: &QuadMesh, samples: &[f64]) -> Result<f64, GeometryError> {
    let expected = mesh.n_interior_points();
    if samples.len() != expected {
        return Err(GeometryError::SampleCountMismatch {
            expected,
            got: samples.len(),
        });
    }
    let terms: Vec<f64> = mesh
        .interior_points()
        .zip(samples)
        .map(|(g, &f)| g.w * f)
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Quadrature over the Robin part of the boundary, one sample per boundary
/// Gauss point in segment order.
pub fn integrate_boundary(mesh: &QuadMesh, samples: &[f64]) -> Result<f64, GeometryError> {
    let expected = mesh.n_robin_points();
    if samples.len() != expected {
        return Err(GeometryError::SampleCountMismatch {
            expected,
            got: samples.len(),
        });
    }
    let terms: Vec<f64> = mesh
        .robin_points()
        .zip(samples)
        .map(|((g, _), &f)| g.w * f)
        .collect();
    Ok(pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rel_err;

    #[test]
    fn mesh_counts_and_areas() {
        let mesh = build_mesh(PlateDomain::default(), 100, 100).unwrap();
        assert_eq!(mesh.elements.len(), 10_000);
        let total: f64 = pairwise_sum(&mesh.elements.iter().map(|e| e.area).collect::<Vec<_>>());
        assert!(rel_err(total, 1.68e-3) < 1e-12);
        // per-element Gauss weights sum to the element area
        for e in &mesh.elements {
            let s: f64 = e.gauss.iter().map(|g| g.w).sum();
            assert!(rel_err(s, e.area) < 1e-12);
        }
        let robin_len: f64 = mesh.robin_segments.iter().map(|s| s.length).sum();
        assert!(rel_err(robin_len, 0.254) < 1e-12);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(build_mesh(PlateDomain::default(), 0, 5).is_err());
        assert!(build_mesh(PlateDomain::default(), 5, 0).is_err());
    }

    #[test]
    fn constant_integrates_to_area_and_perimeter() {
        let mesh = build_mesh(PlateDomain::default(), 20, 10).unwrap();
        let ones = vec![1.0; mesh.n_interior_points()];
        let a = integrate_domain(&mesh, &ones).unwrap();
        assert!(rel_err(a, 1.68e-3) < 1e-13);
        let ones_b = vec![1.0; mesh.n_robin_points()];
        let p = integrate_boundary(&mesh, &ones_b).unwrap();
        assert!(rel_err(p, 0.254) < 1e-13);
    }

    #[test]
    fn linear_function_integrates_exactly() {
        let mesh = build_mesh(PlateDomain::default(), 6, 3).unwrap();
        let samples: Vec<f64> = mesh.interior_points().map(|g| g.x).collect();
        let got = integrate_domain(&mesh, &samples).unwrap();
        let want = 1.68e-3 * 0.060; // area times centroid x
        assert!(rel_err(got, want) < 1e-13);
    }

    #[test]
    fn cubic_integrates_exactly() {
        // x^3 y^3 over [0,W]×[0,d] = W^4/4 * d^4/4
        let mesh = build_mesh(PlateDomain::default(), 5, 4).unwrap();
        let samples: Vec<f64> = mesh
            .interior_points()
            .map(|g| g.x.powi(3) * g.y.powi(3))
            .collect();
        let got = integrate_domain(&mesh, &samples).unwrap();
        let want = 0.120f64.powi(4) / 4.0 * 0.014f64.powi(4) / 4.0;
        assert!(rel_err(got, want) < 1e-14, "rel err {}", rel_err(got, want));
    }

    #[test]
    fn boundary_linear_on_top_edge() {
        let mesh = build_mesh(PlateDomain::default(), 8, 4).unwrap();
        let samples: Vec<f64> = mesh
            .robin_points()
            .map(|(g, _)| if g.y == 0.014 { g.x } else { 0.0 })
            .collect();
        let got = integrate_boundary(&mesh, &samples).unwrap();
        assert!(rel_err(got, 0.0072) < 1e-13);
    }

    #[test]
    fn boundary_cubic_exact() {
        // x^3 over top and bottom edges plus y^3 over the right edge.
        let mesh = build_mesh(PlateDomain::default(), 7, 3).unwrap();
        let samples: Vec<f64> = mesh
            .robin_points()
            .map(|(g, n)| if n.0 == 1.0 { g.y.powi(3) } else { g.x.powi(3) })
            .collect();
        let got = integrate_boundary(&mesh, &samples).unwrap();
        let want = 2.0 * 0.120f64.powi(4) / 4.0 + 0.014f64.powi(4) / 4.0;
        assert!(rel_err(got, want) < 1e-14);
    }

    #[test]
    fn sample_count_mismatch_is_an_error() {
        let mesh = build_mesh(PlateDomain::default(), 2, 2).unwrap();
        assert!(matches!(
            integrate_domain(&mesh, &[1.0; 3]),
            Err(GeometryError::SampleCountMismatch { .. })
        ));
        assert!(matches!(
            integrate_boundary(&mesh, &[1.0; 3]),
            Err(GeometryError::SampleCountMismatch { .. })
        ));
    }

    #[test]
    fn boundary_edges_classified_exactly_once() {
        let mesh = build_mesh(PlateDomain::default(), 4, 3).unwrap();
        assert_eq!(mesh.robin_segments.len(), 2 * 4 + 3);
        assert_eq!(mesh.neumann_segments.len(), 3);
        // every boundary sub-segment of the rectangle appears exactly once
        let total_len: f64 = mesh
            .robin_segments
            .iter()
            .chain(&mesh.neumann_segments)
            .map(|s| s.length)
            .sum();
        assert!(rel_err(total_len, 2.0 * (0.120 + 0.014)) < 1e-12);
    }

    #[test]
    fn fingerprint_is_stable() {
        let m1 = build_mesh(PlateDomain::default(), 10, 5).unwrap();
        let m2 = build_mesh(PlateDomain::default(), 10, 5).unwrap();
        assert_eq!(m1.coordinate_fingerprint(), m2.coordinate_fingerprint());
        let m3 = build_mesh(PlateDomain::default(), 10, 6).unwrap();
        assert_ne!(m1.coordinate_fingerprint(), m3.coordinate_fingerprint());
    }

    #[test]
    fn refinement_improves_smooth_integrals() {
        // For a smooth non-polynomial integrand the quadrature error must
        // shrink as the mesh refines.
        let f = |x: f64, y: f64| (40.0 * x).sin() * (300.0 * y).cos();
        // analytic integral over [0,W]×[0,d]
        let w = 0.120;
        let d = 0.014;
        let ix = (1.0 - f64::cos(40.0 * w)) / 40.0;
        let iy = f64::sin(300.0 * d) / 300.0;
        let exact = ix * iy;
        let mut errs = Vec::new();
        for n in [4, 8, 16, 32] {
            let mesh = build_mesh(PlateDomain::default(), n, n).unwrap();
            let samples: Vec<f64> = mesh.interior_points().map(|g| f(g.x, g.y)).collect();
            let got = integrate_domain(&mesh, &samples).unwrap();
            errs.push((got - exact).abs());
        }
        for k in 1..errs.len() {
            assert!(errs[k] < errs[k - 1], "errors not decreasing: {errs:?}");
        }
    }
}
