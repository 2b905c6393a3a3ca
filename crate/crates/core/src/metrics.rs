//! Contact-surface similarity and timing statistics.
//!
//! The surface distance samples points on the robot finger's contact
//! surface (Poisson disk sampling by sample elimination) and averages, over
//! those points, the distance to the closest triangle of the model finger's
//! contact surface. It is deliberately one-directional: robot → model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hand_model::FingerId;
use crate::mesh::{triangle_area, TriangleMesh, DEGENERATE_AREA};
use crate::se3::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("EmptyInput: no durations")]
    EmptyInput,
    #[error("durations must be positive")]
    NonPositiveDuration,
}

/// Closest point of the closed triangle `abc` to `p`, classifying `p` into
/// vertex, edge or face regions with barycentric tests.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> Result<f64, MetricsError> {
    let [a, b, c] = tri;
    if !(triangle_area(a, b, c) > DEGENERATE_AREA) {
        return Err(MetricsError::DegenerateTriangle);
    }
    Ok((p - closest_point_on_triangle(p, a, b, c)).norm())
}

/// Distance from `p` to the closest triangle of `mesh` (brute force).
pub fn point_mesh_distance(p: &Vec3, mesh: &TriangleMesh) -> f64 {
    mesh.triangle_corners()
        .map(|[a, b, c]| (p - closest_point_on_triangle(p, &a, &b, &c)).norm_squared())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub triangle: usize,
    /// Weights of the triangle's three corners.
    pub barycentric: [f64; 3],
}

pub const OVERSAMPLING: usize = 4;
const ALPHA: f64 = 8.0;
const BETA: f64 = 0.65;
const GAMMA: f64 = 1.5;

/// Expected Poisson disk radius for `n` samples on area `area`.
pub fn max_poisson_radius(area: f64, n: usize) -> f64 {
    (area / (2.0 * 3f64.sqrt() * n as f64)).sqrt()
}

fn uniform_samples(mesh: &TriangleMesh, count: usize, rng: &mut ChaCha8Rng) -> Vec<SurfaceSample> {
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for [a, b, c] in mesh.triangle_corners() {
        total += triangle_area(&a, &b, &c);
        cumulative.push(total);
    }
    (0..count)
        .map(|_| {
            let pick = rng.random::<f64>() * total;
            let t = cumulative.partition_point(|&c| c <= pick).min(cumulative.len() - 1);
            let s = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            let bary = [1.0 - s, s * (1.0 - r2), s * r2];
            let [a, b, c] = mesh.triangle(t);
            SurfaceSample {
                point: a * bary[0] + b * bary[1] + c * bary[2],
                triangle: t,
                barycentric: bary,
            }
        })
        .collect()
}

/// `n` well-spread points on the mesh surface: uniform area-weighted
/// oversampling by 4, then weighted sample elimination down to `n`.
/// Deterministic for a given seed.
pub fn poisson_sample(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>, MetricsError> {
    if mesh.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    if n == 0 {
        return Err(MetricsError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = OVERSAMPLING * n;
    let candidates = uniform_samples(mesh, m, &mut rng);

    let r_max = max_poisson_radius(mesh.area(), n);
    let r_min = r_max * BETA * (1.0 - (n as f64 / m as f64).powf(GAMMA));
    let weight = |d: f64| {
        let d = d.max(r_min);
        (1.0 - d / (2.0 * r_max)).powf(ALPHA)
    };

    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for i in 0..m {
        for j in i + 1..m {
            let d = (candidates[i].point - candidates[j].point).norm();
            if d < 2.0 * r_max {
                let w = weight(d);
                neighbors[i].push((j, w));
                neighbors[j].push((i, w));
            }
        }
    }
    let mut weights: Vec<f64> = neighbors.iter().map(|nb| nb.iter().map(|(_, w)| w).sum()).collect();
    let mut alive = vec![true; m];
    for _ in n..m {
        let mut worst = usize::MAX;
        for i in 0..m {
            if alive[i] && (worst == usize::MAX || weights[i] > weights[worst]) {
                worst = i;
            }
        }
        alive[worst] = false;
        for &(j, w) in &neighbors[worst] {
            if alive[j] {
                weights[j] -= w;
            }
        }
    }
    Ok(candidates
        .into_iter()
        .zip(alive)
        .filter_map(|(s, keep)| keep.then_some(s))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactSurface {
    pub finger: FingerId,
    pub mesh: TriangleMesh,
}

impl ContactSurface {
    pub fn new(finger: FingerId, mesh: TriangleMesh) -> Result<Self, MetricsError> {
        if mesh.is_empty() {
            return Err(MetricsError::EmptyMesh);
        }
        Ok(ContactSurface { finger, mesh })
    }
}

/// Mean distance from `n` Poisson-sampled points on the robot surface to
/// the model surface.
pub fn surface_distance(
    robot: &ContactSurface,
    model: &ContactSurface,
    n: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    if model.mesh.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let samples = poisson_sample(&robot.mesh, n, seed)?;
    let total: f64 = samples.iter().map(|s| point_mesh_distance(&s.point, &model.mesh)).sum();
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingStats {
    pub frames: usize,
    pub mean_hz: f64,
    pub min_hz: f64,
}

/// Per-frame rates `1 / duration`; their mean and minimum.
pub fn timing_stats(durations: &[f64]) -> Result<TimingStats, MetricsError> {
    if durations.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if durations.iter().any(|d| !(*d > 0.0)) {
        return Err(MetricsError::NonPositiveDuration);
    }
    let rates: Vec<f64> = durations.iter().map(|d| 1.0 / d).collect();
    Ok(TimingStats {
        frames: durations.len(),
        mean_hz: rates.iter().sum::<f64>() / rates.len() as f64,
        min_hz: rates.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> [Vec3; 3] {
        [Vec3::zeros(), Vec3::x(), Vec3::y()]
    }

    #[test]
    fn face_and_vertex_regions() {
        assert_eq!(point_triangle_distance(&Vec3::new(0.0, 0.0, 1.0), &tri()).unwrap(), 1.0);
        assert_eq!(point_triangle_distance(&Vec3::new(2.0, 0.0, 0.0), &tri()).unwrap(), 1.0);
        // edge region of the hypotenuse
        let d = point_triangle_distance(&Vec3::new(1.0, 1.0, 0.0), &tri()).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let flat = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert_eq!(point_triangle_distance(&Vec3::z(), &flat), Err(MetricsError::DegenerateTriangle));
    }

    #[test]
    fn timing_examples() {
        let s = timing_stats(&[0.005, 0.010]).unwrap();
        assert!((s.mean_hz - 150.0).abs() < 1e-9);
        assert!((s.min_hz - 100.0).abs() < 1e-9);
        let s = timing_stats(&[0.01; 100]).unwrap();
        assert!((s.mean_hz - 100.0).abs() < 1e-9 && (s.min_hz - 100.0).abs() < 1e-9);
        let mut d = vec![0.01; 99];
        d.push(1.0);
        let s = timing_stats(&d).unwrap();
        assert!((s.min_hz - 1.0).abs() < 1e-12);
        assert!(s.min_hz <= s.mean_hz);
        assert_eq!(timing_stats(&[]), Err(MetricsError::EmptyInput));
        assert_eq!(timing_stats(&[0.01, 0.0]), Err(MetricsError::NonPositiveDuration));
    }

    #[test]
    fn empty_mesh_rejected() {
        assert_eq!(poisson_sample(&TriangleMesh::default(), 3, 0), Err(MetricsError::EmptyMesh));
        assert!(ContactSurface::new(FingerId::Index, TriangleMesh::default()).is_err());
    }
}
