//! Triangle meshes and capsule surfaces.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

use crate::se3::{Transform, Vec3};

/// Triangles smaller than this (m²) are rejected as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {0} references a vertex out of range")]
    IndexOutOfRange(usize),
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("capsules need at least 8 segments, got {0}")]
    TooFewSegments(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange(i));
            }
            if !(triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) > DEGENERATE_AREA) {
                return Err(MeshError::DegenerateTriangle(i));
            }
        }
        Ok(TriangleMesh { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn triangle_corners(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        (0..self.triangles.len()).map(|i| self.triangle(i))
    }

    pub fn area(&self) -> f64 {
        self.triangle_corners().map(|[a, b, c]| triangle_area(&a, &b, &c)).sum()
    }

    /// Volume enclosed by a closed, outward-oriented mesh.
    pub fn signed_volume(&self) -> f64 {
        self.triangle_corners().map(|[a, b, c]| a.dot(&b.cross(&c)) / 6.0).sum()
    }

    /// Axis-aligned bounds of the referenced vertices.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.triangles.iter().flatten().map(|&i| self.vertices[i]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.inf(&v), hi.sup(&v))))
    }

    pub fn transformed(&self, t: &Transform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn translated(&self, offset: &Vec3) -> TriangleMesh {
        self.transformed(&Transform::from_translation(*offset))
    }

    /// Appends `other`, re-indexing its triangles.
    pub fn merge(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    pub fn merged<'a>(parts: impl IntoIterator<Item = &'a TriangleMesh>) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        for p in parts {
            out.merge(p);
        }
        out
    }
}

/// A capsule between two points with a designated palmar (contact) side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub start: Vec3,
    pub end: Vec3,
    pub radius: f64,
    /// Direction the contact half faces. Need not be orthogonal to the axis.
    pub palmar: Vec3,
}

fn any_perpendicular(u: &Vec3) -> Vec3 {
    let pick = if u.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (pick - u * pick.dot(u)).normalize()
}

impl Capsule {
    /// Closed capsule surface with `segments` vertices per ring. With
    /// `contact_only`, only the palmar half of the surface is kept: both caps
    /// and the cylinder, split along the plane through the axis that is
    /// orthogonal to the palmar direction.
    pub fn mesh(&self, segments: usize, contact_only: bool) -> Result<TriangleMesh, MeshError> {
        if segments < 8 {
            return Err(MeshError::TooFewSegments(segments));
        }
        let axis = self.end - self.start;
        let length = axis.norm();
        let u = if length > 0.0 {
            axis / length
        } else {
            let p = self.palmar.normalize();
            any_perpendicular(&p)
        };
        let projected = self.palmar - u * self.palmar.dot(&u);
        let palmar = if projected.norm() > 1e-12 {
            projected.normalize()
        } else {
            any_perpendicular(&u)
        };
        let lateral = palmar.cross(&u);
        let r = self.radius;
        let h = (segments / 4).max(2);

        // Rings from the start pole to the end pole; the two equator rings
        // bound the cylinder.
        let mut rings: Vec<(Vec3, f64, f64)> = Vec::with_capacity(2 * h);
        for k in 1..=h {
            let phi = -FRAC_PI_2 + FRAC_PI_2 * k as f64 / h as f64;
            rings.push((self.start, phi.cos(), phi.sin()));
        }
        for k in 0..h {
            let phi = FRAC_PI_2 * k as f64 / h as f64;
            rings.push((self.end, phi.cos(), phi.sin()));
        }

        let mut vertices = Vec::with_capacity(rings.len() * segments + 2);
        vertices.push(self.start - u * r);
        for &(center, c, s) in &rings {
            for j in 0..segments {
                let theta = 2.0 * PI * j as f64 / segments as f64;
                let dir = lateral * theta.cos() + palmar * theta.sin();
                vertices.push(center + dir * (r * c) + u * (r * s));
            }
        }
        let top = vertices.len();
        vertices.push(self.end + u * r);

        let keep = |j: usize| {
            !contact_only || {
                let mid = 2.0 * PI * (j as f64 + 0.5) / segments as f64;
                mid.sin() > 0.0
            }
        };
        let ring = |k: usize, j: usize| 1 + k * segments + (j % segments);
        let mut triangles = Vec::new();
        for j in 0..segments {
            if !keep(j) {
                continue;
            }
            triangles.push([0, ring(0, j + 1), ring(0, j)]);
            for k in 0..rings.len() - 1 {
                let (a, b) = (ring(k, j), ring(k, j + 1));
                let (c, d) = (ring(k + 1, j), ring(k + 1, j + 1));
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
            let last = rings.len() - 1;
            triangles.push([top, ring(last, j), ring(last, j + 1)]);
        }
        TriangleMesh::new(vertices, triangles)
    }
}
