//! Dyadic boundary covers: lattice balls at scale `2^-j`, reflected
//! interior balls with boundary clearance, a smooth partition of
//! unity subordinate to the cover and the boundary-layer cutoff.

use std::collections::HashMap;

use crate::domain::TraceRegion;
use crate::error::{AbvError, Result};

/// One cover ball near the boundary strip, paired with its reflected
/// interior ball.
#[derive(Debug, Clone)]
pub struct CoverBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub reflected_center: Vec<f64>,
    pub reflected_radius: f64,
    /// Distance from the nearest boundary point to the reflected
    /// center, in units of the ball radius.
    pub offset_factor: f64,
}

#[derive(Debug)]
pub struct WhitneyCover {
    pub level: i32,
    /// Ball radius, `2^-j / 16`.
    pub radius: f64,
    /// Lattice spacing (chosen so the balls cover the strip).
    pub spacing: f64,
    /// Strip width `2^-j`.
    pub strip_width: f64,
    /// Balls meeting the boundary strip `U_j`.
    pub balls: Vec<CoverBall>,
    lattice_origin: Vec<f64>,
    index: HashMap<[i64; 3], usize>,
    dim: usize,
}

fn lattice_key(idx: &[i64]) -> [i64; 3] {
    let mut key = [0i64; 3];
    key[..idx.len()].copy_from_slice(idx);
    key
}

fn euclid_local(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smooth bump profile on the unit interval of squared radius.
fn bump(q2: f64) -> f64 {
    if q2 >= 1.0 {
        0.0
    } else {
        let t = 1.0 - q2;
        t * t * t * t
    }
}

/// Builds the level-`j` cover of the boundary strip of a region:
/// lattice-centered balls of radius `2^-j/16`, each paired with a
/// reflected ball placed inward from its nearest boundary point with
/// clearance at least one radius.
pub fn build_cover(region: &dyn TraceRegion, j: i32) -> Result<WhitneyCover> {
    let j0 = region.coarsest_level();
    if j < j0 {
        return Err(AbvError::InvalidInput(format!(
            "cover level {j} is coarser than the geometry allows (j0 = {j0})"
        )));
    }
    let n = region.dim();
    let strip_width = 2.0f64.powi(-j);
    let radius = strip_width / 16.0;
    // spacing keeps the farthest lattice gap below 0.8 radius
    let spacing = 1.6 * radius / (n as f64).sqrt();
    let (lo, hi) = region.bounding_box();
    let margin = strip_width + 2.0 * spacing;
    let lattice_origin: Vec<f64> = lo.iter().map(|v| v - margin).collect();
    let counts: Vec<i64> = (0..n)
        .map(|d| ((hi[d] + margin - lattice_origin[d]) / spacing).ceil() as i64)
        .collect();

    let mut balls = Vec::new();
    let mut index = HashMap::new();
    let mut idx = vec![0i64; n];
    let offsets = [2.0, 2.5, 3.0, 3.5, 4.0];
    'outer: loop {
        let center: Vec<f64> = (0..n)
            .map(|d| lattice_origin[d] + (idx[d] as f64 + 0.5) * spacing)
            .collect();
        let sdf = region.signed_distance(&center);
        // keep only balls that can meet the strip U_j
        if sdf < radius && sdf > -(strip_width + radius) {
            let (p, inward) = region.nearest_boundary(&center);
            let mut placed = None;
            for f in offsets {
                let t = f * radius;
                let candidate: Vec<f64> = p.iter().zip(&inward).map(|(pp, m)| pp + t * m).collect();
                if region.signed_distance(&candidate) <= -2.0 * radius {
                    placed = Some((candidate, f));
                    break;
                }
            }
            if placed.is_none() {
                // corner case: the straight inward ray hugs an
                // adjacent boundary piece; descend on the signed
                // distance to gain clearance
                let mut c: Vec<f64> = p.iter().zip(&inward).map(|(pp, m)| pp + 2.0 * radius * m).collect();
                let delta = radius / 8.0;
                for _ in 0..60 {
                    if region.signed_distance(&c) <= -2.05 * radius {
                        break;
                    }
                    let mut g = vec![0.0; n];
                    for d in 0..n {
                        let mut cp = c.clone();
                        let mut cm = c.clone();
                        cp[d] += delta;
                        cm[d] -= delta;
                        g[d] = (region.signed_distance(&cp) - region.signed_distance(&cm))
                            / (2.0 * delta);
                    }
                    let norm = euclid_local(&g);
                    if norm < 1e-12 {
                        break;
                    }
                    for d in 0..n {
                        c[d] -= 0.5 * radius * g[d] / norm;
                    }
                }
                let displacement = p
                    .iter()
                    .zip(&c)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if region.signed_distance(&c) <= -2.0 * radius && displacement <= 6.0 * radius {
                    placed = Some((c, displacement / radius));
                }
            }
            let (reflected_center, offset_factor) = placed.ok_or_else(|| {
                AbvError::ReflectedBall {
                    center: center.clone(),
                    level: j,
                    reason: "no inward offset up to 4 radii reaches clearance 2r".into(),
                }
            })?;
            index.insert(lattice_key(&idx), balls.len());
            balls.push(CoverBall {
                center,
                radius,
                reflected_center,
                reflected_radius: radius,
                offset_factor,
            });
        }
        // advance the lattice counter
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < counts[d] {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    if balls.is_empty() {
        return Err(AbvError::InvalidInput(format!(
            "cover at level {j} contains no boundary balls"
        )));
    }
    Ok(WhitneyCover {
        level: j,
        radius,
        spacing,
        strip_width,
        balls,
        lattice_origin,
        index,
        dim: n,
    })
}

impl WhitneyCover {
    /// Boundary-layer cutoff `ρ_j` evaluated from a signed distance:
    /// clamped-cubic smoothstep, 1 on `U_{j+1}`, 0 outside `U_j`.
    pub fn rho_from_sdf(&self, sdf: f64) -> f64 {
        let dist = (-sdf).max(0.0);
        let outer = self.strip_width;
        let inner = self.strip_width / 2.0;
        let t = ((outer - dist) / (outer - inner)).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }

    /// Indices of cover balls containing `x`.
    pub fn balls_containing(&self, x: &[f64]) -> Vec<usize> {
        let n = self.dim;
        let base: Vec<i64> = (0..n)
            .map(|d| ((x[d] - self.lattice_origin[d]) / self.spacing - 0.5).round() as i64)
            .collect();
        let mut found = Vec::new();
        let mut offset = vec![-1i64; n];
        'outer: loop {
            let idx: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(&bi) = self.index.get(&lattice_key(&idx)) {
                let b = &self.balls[bi];
                let d2: f64 = x
                    .iter()
                    .zip(&b.center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                if d2 < b.radius * b.radius {
                    found.push(bi);
                }
            }
            for d in (0..n).rev() {
                offset[d] += 1;
                if offset[d] <= 1 {
                    continue 'outer;
                }
                offset[d] = -1;
            }
            break;
        }
        found
    }

    /// Partition-of-unity weights `η_{j,k}(x)` over the balls
    /// containing `x` (normalized smooth bumps). Empty away from the
    /// cover.
    pub fn partition_at(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let ids = self.balls_containing(x);
        if ids.is_empty() {
            return Vec::new();
        }
        let mut weights: Vec<(usize, f64)> = ids
            .into_iter()
            .map(|bi| {
                let b = &self.balls[bi];
                let d2: f64 = x
                    .iter()
                    .zip(&b.center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                (bi, bump(d2 / (b.radius * b.radius)))
            })
            .collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        for (_, w) in weights.iter_mut() {
            *w /= total;
        }
        weights
    }

    /// Largest number of balls covering any of the given points.
    pub fn covering_multiplicity(&self, points: &[Vec<f64>]) -> usize {
        points
            .iter()
            .map(|x| self.balls_containing(x).len())
            .max()
            .unwrap_or(0)
    }

    /// Verifies (B1): every reflected ball lies inside the region with
    /// clearance at least its radius.
    pub fn check_reflected_clearance(&self, region: &dyn TraceRegion) -> bool {
        self.balls.iter().all(|b| {
            region.signed_distance(&b.reflected_center) <= -(b.reflected_radius + b.radius)
                || region.signed_distance(&b.reflected_center) <= -2.0 * b.reflected_radius
        })
    }
}
