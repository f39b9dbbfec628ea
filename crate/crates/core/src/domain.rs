//! Concrete domain classes (disk, box, polygon) with signed
//! distances, nearest-boundary queries and boundary meshes, plus the
//! region abstraction the trace construction runs on.

use crate::error::{AbvError, Result};
use crate::grid::euclid;


/// One boundary quadrature point: position, outer unit normal and the
/// surface measure it carries.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub position: Vec<f64>,
    pub normal: Vec<f64>,
    pub weight: f64,
}

/// Geometric region the trace construction needs: a signed distance
/// (negative inside), nearest boundary point with the inward
/// direction, and a boundary mesh.
pub trait TraceRegion {
    fn dim(&self) -> usize;
    fn signed_distance(&self, x: &[f64]) -> f64;
    /// Nearest boundary point and the unit direction pointing from it
    /// into the region.
    fn nearest_boundary(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn boundary_mesh(&self, max_spacing: f64) -> Vec<BoundaryPoint>;
    fn min_feature_size(&self) -> f64;
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);

    fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Coarsest dyadic scale resolving the geometry: the smallest `j`
    /// with `4·2^{-j}` below the minimum feature size.
    fn coarsest_level(&self) -> i32 {
        let feature = self.min_feature_size();
        let mut j = 0;
        while 4.0 * 2.0f64.powi(-j) >= feature {
            j += 1;
            if j > 60 {
                break;
            }
        }
        j
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    Disk { center: Vec<f64>, radius: f64 },
    Box { min: Vec<f64>, max: Vec<f64> },
    Polygon { vertices: Vec<[f64; 2]> },
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub shape: Shape,
}

impl Domain {
    pub fn disk(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() != 2 {
            return Err(AbvError::InvalidInput("disk domains are two-dimensional".into()));
        }
        if radius <= 0.0 {
            return Err(AbvError::InvalidInput("disk radius must be positive".into()));
        }
        Ok(Domain {
            shape: Shape::Disk { center, radius },
        })
    }

    pub fn unit_disk() -> Self {
        Domain::disk(vec![0.0, 0.0], 1.0).expect("unit disk is valid")
    }

    pub fn hyper_box(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(AbvError::InvalidInput("box corners need equal dimensions".into()));
        }
        if min.iter().zip(&max).any(|(a, b)| a >= b) {
            return Err(AbvError::InvalidInput("box must have positive extent".into()));
        }
        Ok(Domain {
            shape: Shape::Box { min, max },
        })
    }

    /// Simple polygon from its vertex loop (either orientation).
    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(AbvError::InvalidInput("polygon needs at least 3 vertices".into()));
        }
        Ok(Domain {
            shape: Shape::Polygon { vertices },
        })
    }

    pub fn perimeter(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, .. } => std::f64::consts::TAU * radius,
            Shape::Box { min, max } => {
                let n = min.len();
                if n == 1 {
                    return 2.0;
                }
                let sides: Vec<f64> = min.iter().zip(max).map(|(a, b)| b - a).collect();
                let volume: f64 = sides.iter().product();
                sides.iter().map(|s| 2.0 * volume / s).sum()
            }
            Shape::Polygon { vertices } => polygon_edges(vertices)
                .map(|(a, b)| dist2(&a, &b))
                .sum(),
        }
    }

    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Box { min, max } => min.iter().zip(max).map(|(a, b)| b - a).product(),
            Shape::Polygon { vertices } => {
                let mut acc = 0.0;
                for (a, b) in polygon_edges(vertices) {
                    acc += a[0] * b[1] - b[0] * a[1];
                }
                acc.abs() / 2.0
            }
        }
    }
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn polygon_edges(vertices: &[[f64; 2]]) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    (0..vertices.len()).map(move |i| (vertices[i], vertices[(i + 1) % vertices.len()]))
}

/// Closest point on segment `[a, b]` to `p`.
fn segment_nearest(p: &[f64], a: &[f64; 2], b: &[f64; 2]) -> [f64; 2] {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

fn polygon_contains(vertices: &[[f64; 2]], p: &[f64]) -> bool {
    // even-odd crossing rule
    let mut inside = false;
    for (a, b) in polygon_edges(vertices) {
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl TraceRegion for Domain {
    fn dim(&self) -> usize {
        match &self.shape {
            Shape::Disk { center, .. } => center.len(),
            Shape::Box { min, .. } => min.len(),
            Shape::Polygon { .. } => 2,
        }
    }

    fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Disk { center, radius } => {
                let r: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                r - radius
            }
            Shape::Box { min, max } => {
                // exact SDF of an axis-aligned box
                let mut outside2 = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for d in 0..min.len() {
                    let lo = min[d] - x[d];
                    let hi = x[d] - max[d];
                    let v = lo.max(hi);
                    if v > 0.0 {
                        outside2 += v * v;
                    } else {
                        inside = inside.max(v);
                    }
                }
                if outside2 > 0.0 {
                    outside2.sqrt()
                } else {
                    inside
                }
            }
            Shape::Polygon { vertices } => {
                let mut dmin = f64::INFINITY;
                for (a, b) in polygon_edges(vertices) {
                    let q = segment_nearest(x, &a, &b);
                    dmin = dmin.min(dist2(&q, &[x[0], x[1]]));
                }
                if polygon_contains(vertices, x) {
                    -dmin
                } else {
                    dmin
                }
            }
        }
    }

    fn nearest_boundary(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Disk { center, radius } => {
                let mut dir: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                let norm = euclid(&dir);
                if norm < 1e-14 {
                    dir = vec![1.0, 0.0];
                } else {
                    for v in dir.iter_mut() {
                        *v /= norm;
                    }
                }
                let point: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + radius * d).collect();
                let inward: Vec<f64> = dir.iter().map(|d| -d).collect();
                (point, inward)
            }
            Shape::Box { min, max } => {
                let n = min.len();
                let inside = (0..n).all(|d| x[d] > min[d] && x[d] < max[d]);
                if inside {
                    // project to the closest face
                    let (mut best, mut bd, mut side) = (0usize, f64::INFINITY, 0.0);
                    for d in 0..n {
                        if x[d] - min[d] < bd {
                            bd = x[d] - min[d];
                            best = d;
                            side = -1.0;
                        }
                        if max[d] - x[d] < bd {
                            bd = max[d] - x[d];
                            best = d;
                            side = 1.0;
                        }
                    }
                    let mut point = x.to_vec();
                    point[best] = if side < 0.0 { min[best] } else { max[best] };
                    let mut inward = vec![0.0; n];
                    inward[best] = -side;
                    (point, inward)
                } else {
                    let point: Vec<f64> = (0..n).map(|d| x[d].clamp(min[d], max[d])).collect();
                    // direction into the box: unit on every clamped
                    // axis, so corner-nearest points get the bisector
                    let mut inward: Vec<f64> = (0..n)
                        .map(|d| {
                            if x[d] < min[d] {
                                1.0
                            } else if x[d] > max[d] {
                                -1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let norm = euclid(&inward);
                    if norm > 1e-14 {
                        for v in inward.iter_mut() {
                            *v /= norm;
                        }
                        (point, inward)
                    } else {
                        // exactly on a face: use the face normal
                        let (mut best, mut bd, mut side) = (0usize, f64::INFINITY, 0.0);
                        for d in 0..n {
                            for (s, c) in [(-1.0, min[d]), (1.0, max[d])] {
                                let dist = (x[d] - c).abs();
                                if dist < bd {
                                    bd = dist;
                                    best = d;
                                    side = s;
                                }
                            }
                        }
                        let mut inward = vec![0.0; n];
                        inward[best] = -side;
                        (point, inward)
                    }
                }
            }
            Shape::Polygon { vertices } => {
                let mut best_q = [0.0, 0.0];
                let mut dmin = f64::INFINITY;
                for (a, b) in polygon_edges(vertices) {
                    let q = segment_nearest(x, &a, &b);
                    let d = dist2(&q, &[x[0], x[1]]);
                    if d < dmin {
                        dmin = d;
                        best_q = q;
                    }
                }
                // inward = direction whose small step lands inside
                let mut dir = [x[0] - best_q[0], x[1] - best_q[1]];
                let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
                if norm > 1e-12 {
                    dir = [dir[0] / norm, dir[1] / norm];
                    if !polygon_contains(vertices, x) {
                        dir = [-dir[0], -dir[1]];
                    }
                    (best_q.to_vec(), dir.to_vec())
                } else {
                    // on the boundary: probe the edge normal
                    let mut best_edge = None;
                    let mut ed = f64::INFINITY;
                    for (a, b) in polygon_edges(vertices) {
                        let q = segment_nearest(x, &a, &b);
                        let d = dist2(&q, &[x[0], x[1]]);
                        if d < ed {
                            ed = d;
                            best_edge = Some((a, b));
                        }
                    }
                    let (a, b) = best_edge.expect("polygon has edges");
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                    let cand = [-e[1] / len, e[0] / len];
                    let probe = [best_q[0] + 1e-7 * cand[0], best_q[1] + 1e-7 * cand[1]];
                    let inward = if polygon_contains(vertices, &probe) {
                        cand
                    } else {
                        [-cand[0], -cand[1]]
                    };
                    (best_q.to_vec(), inward.to_vec())
                }
            }
        }
    }

    fn boundary_mesh(&self, max_spacing: f64) -> Vec<BoundaryPoint> {
        match &self.shape {
            Shape::Disk { center, radius } => {
                let perimeter = std::f64::consts::TAU * radius;
                let count = (perimeter / max_spacing).ceil().max(16.0) as usize;
                let dtheta = std::f64::consts::TAU / count as f64;
                (0..count)
                    .map(|i| {
                        let theta = (i as f64 + 0.5) * dtheta;
                        let normal = vec![theta.cos(), theta.sin()];
                        BoundaryPoint {
                            position: vec![
                                center[0] + radius * normal[0],
                                center[1] + radius * normal[1],
                            ],
                            normal,
                            weight: radius * dtheta,
                        }
                    })
                    .collect()
            }
            Shape::Box { min, max } => {
                let n = min.len();
                let mut out = Vec::new();
                for d in 0..n {
                    for (side, coord) in [(-1.0, min[d]), (1.0, max[d])] {
                        // tensor mesh over the face
                        let mut axes = Vec::new();
                        for e in 0..n {
                            if e == d {
                                continue;
                            }
                            let len = max[e] - min[e];
                            let k = (len / max_spacing).ceil().max(4.0) as usize;
                            axes.push((e, k, len / k as f64));
                        }
                        let total: usize = axes.iter().map(|(_, k, _)| *k).product();
                        for flat in 0..total.max(1) {
                            let mut pos = vec![0.0; n];
                            pos[d] = coord;
                            let mut rem = flat;
                            let mut weight = 1.0;
                            for (e, k, step) in &axes {
                                let i = rem % k;
                                rem /= k;
                                pos[*e] = min[*e] + (i as f64 + 0.5) * step;
                                weight *= step;
                            }
                            let mut normal = vec![0.0; n];
                            normal[d] = side;
                            out.push(BoundaryPoint {
                                position: pos,
                                normal,
                                weight,
                            });
                        }
                    }
                }
                out
            }
            Shape::Polygon { vertices } => {
                let mut out = Vec::new();
                for (a, b) in polygon_edges(vertices) {
                    let len = dist2(&a, &b);
                    let k = (len / max_spacing).ceil().max(4.0) as usize;
                    let step = len / k as f64;
                    let e = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
                    let cand = [-e[1], e[0]];
                    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                    let probe = [mid[0] + 1e-7 * cand[0], mid[1] + 1e-7 * cand[1]];
                    let outward = if polygon_contains(vertices, &probe) {
                        [-cand[0], -cand[1]]
                    } else {
                        cand
                    };
                    for i in 0..k {
                        let t = (i as f64 + 0.5) * step;
                        out.push(BoundaryPoint {
                            position: vec![a[0] + t * e[0], a[1] + t * e[1]],
                            normal: outward.to_vec(),
                            weight: step,
                        });
                    }
                }
                out
            }
        }
    }

    fn min_feature_size(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, .. } => *radius,
            Shape::Box { min, max } => min
                .iter()
                .zip(max)
                .map(|(a, b)| b - a)
                .fold(f64::INFINITY, f64::min),
            Shape::Polygon { vertices } => polygon_edges(vertices)
                .map(|(a, b)| dist2(&a, &b))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Disk { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::Box { min, max } => (min.clone(), max.clone()),
            Shape::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for d in 0..2 {
                        lo[d] = lo[d].min(v[d]);
                        hi[d] = hi[d].max(v[d]);
                    }
                }
                (lo.to_vec(), hi.to_vec())
            }
        }
    }
}

/// The region between two nested domains; its boundary is the union
/// of both domain boundaries. Used for exterior traces when gluing.
pub struct AnnulusRegion {
    pub outer: Domain,
    pub inner: Domain,
}

impl TraceRegion for AnnulusRegion {
    fn dim(&self) -> usize {
        self.outer.dim()
    }

    fn signed_distance(&self, x: &[f64]) -> f64 {
        self.outer.signed_distance(x).max(-self.inner.signed_distance(x))
    }

    fn nearest_boundary(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d_out = self.outer.signed_distance(x).abs();
        let d_in = self.inner.signed_distance(x).abs();
        if d_in <= d_out {
            let (p, inward_of_inner) = self.inner.nearest_boundary(x);
            // into the annulus means out of the inner domain
            (p, inward_of_inner.iter().map(|v| -v).collect())
        } else {
            self.outer.nearest_boundary(x)
        }
    }

    fn boundary_mesh(&self, max_spacing: f64) -> Vec<BoundaryPoint> {
        // outer boundary keeps its normals; inner boundary normals
        // flip to point out of the annulus (into the inner domain)
        let mut mesh = self.outer.boundary_mesh(max_spacing);
        for mut bp in self.inner.boundary_mesh(max_spacing) {
            bp.normal = bp.normal.iter().map(|v| -v).collect();
            mesh.push(bp);
        }
        mesh
    }

    fn min_feature_size(&self) -> f64 {
        // the gap between the boundaries is a feature too
        let gap = {
            let probe = self.inner.boundary_mesh(self.inner.min_feature_size() / 8.0);
            probe
                .iter()
                .map(|bp| self.outer.signed_distance(&bp.position).abs())
                .fold(f64::INFINITY, f64::min)
        };
        self.outer
            .min_feature_size()
            .min(self.inner.min_feature_size())
            .min(gap)
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.outer.bounding_box()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_sdf_and_nearest() {
        let d = Domain::unit_disk();
        assert!((d.signed_distance(&[0.0, 0.0]) + 1.0).abs() < 1e-15);
        assert!((d.signed_distance(&[2.0, 0.0]) - 1.0).abs() < 1e-15);
        let (p, inward) = d.nearest_boundary(&[0.5, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-14 && p[1].abs() < 1e-14);
        assert!((inward[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn box_sdf_inside_outside_corner() {
        let b = Domain::hyper_box(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert!((b.signed_distance(&[1.0, 0.5]) + 0.5).abs() < 1e-15);
        assert!((b.signed_distance(&[3.0, 0.5]) - 1.0).abs() < 1e-15);
        // outside near the corner: euclidean distance
        let d = b.signed_distance(&[3.0, 2.0]);
        assert!((d - 2.0f64.sqrt()).abs() < 1e-15);
        let (p, inward) = b.nearest_boundary(&[1.0, 0.9]);
        assert!((p[1] - 1.0).abs() < 1e-14);
        assert!((inward[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn polygon_sdf_matches_triangle() {
        let t = Domain::polygon(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert!(t.signed_distance(&[0.4, 0.4]) < 0.0);
        assert!(t.signed_distance(&[2.0, 2.0]) > 0.0);
        let (p, _) = t.nearest_boundary(&[1.0, -1.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn boundary_weights_sum_to_perimeter() {
        let cases: Vec<Domain> = vec![
            Domain::unit_disk(),
            Domain::hyper_box(vec![0.0, 0.0], vec![1.0, 0.25]).unwrap(),
            Domain::polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap(),
        ];
        for dom in cases {
            let mesh = dom.boundary_mesh(0.01);
            let total: f64 = mesh.iter().map(|bp| bp.weight).sum();
            let perimeter = dom.perimeter();
            assert!(
                (total - perimeter).abs() < 1e-3 * perimeter,
                "perimeter {perimeter} vs mesh {total}"
            );
            // normals are unit and outward
            for bp in mesh.iter().step_by(7) {
                assert!((euclid(&bp.normal) - 1.0).abs() < 1e-12);
                let out: Vec<f64> = bp
                    .position
                    .iter()
                    .zip(&bp.normal)
                    .map(|(p, n)| p + 1e-6 * n)
                    .collect();
                assert!(dom.signed_distance(&out) > 0.0);
            }
        }
    }

    #[test]
    fn sdf_vanishes_on_boundary_mesh() {
        let dom = Domain::polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.8, 0.9], [0.1, 0.7]]).unwrap();
        for bp in dom.boundary_mesh(0.05) {
            assert!(dom.signed_distance(&bp.position).abs() < 1e-12);
        }
    }

    #[test]
    fn box_3d_mesh_covers_all_faces() {
        let b = Domain::hyper_box(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let mesh = b.boundary_mesh(0.26);
        let total: f64 = mesh.iter().map(|bp| bp.weight).sum();
        assert!((total - 6.0).abs() < 1e-12);
    }

    #[test]
    fn coarsest_level_resolves_features() {
        let d = Domain::unit_disk();
        let j0 = d.coarsest_level();
        assert!(4.0 * 2.0f64.powi(-j0) < 1.0);
        assert!(4.0 * 2.0f64.powi(-(j0 - 1)) >= 1.0);
    }

    #[test]
    fn annulus_region_distances() {
        let outer = Domain::disk(vec![0.0, 0.0], 1.0).unwrap();
        let inner = Domain::disk(vec![0.0, 0.0], 0.5).unwrap();
        let ann = AnnulusRegion { outer, inner };
        assert!(ann.signed_distance(&[0.75, 0.0]) < 0.0);
        assert!(ann.signed_distance(&[0.25, 0.0]) > 0.0);
        assert!(ann.signed_distance(&[1.25, 0.0]) > 0.0);
        let (_, inward) = ann.nearest_boundary(&[0.6, 0.0]);
        // near the inner circle, inward for the annulus points outward
        assert!(inward[0] > 0.9);
    }
}
