//! L² projection onto the operator kernel over balls, and empirical
//! Poincaré constants.
//!
//! A projector re-orthonormalizes the kernel basis with respect to the
//! discrete inner product of its own quadrature nodes, so projection
//! is exactly idempotent and fixes kernel elements at the coefficient
//! level.

use std::rc::Rc;

use crate::error::{AbvError, Result};
use crate::grid::{apply_discrete, euclid, DiscreteField};
use crate::nullspace::KernelBasis;
use crate::operator::Operator;
use crate::poly::PolyVectorField;
use crate::tolerances::DEGENERATE_REL;

/// Shared ball quadrature (cell-center nodes on the unit ball).
pub struct BallNodes {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl BallNodes {
    pub fn midpoint(n: usize, resolution: usize) -> Rc<Self> {
        let (nodes, weights) = crate::quad::unit_ball_midpoint(n, resolution.max(4));
        Rc::new(BallNodes { nodes, weights })
    }
}

pub struct KernelProjector {
    pub center: Vec<f64>,
    pub radius: f64,
    pub components: usize,
    /// Orthonormal basis in local ball coordinates.
    basis_local: Vec<PolyVectorField>,
    /// Basis values at the quadrature nodes, node-major.
    basis_values: Vec<Vec<f64>>,
    quad: Rc<BallNodes>,
    pub gram_tolerance: f64,
}

impl KernelProjector {
    /// Builds a projector on the ball, with cell-center quadrature at
    /// `resolution` nodes per radius.
    pub fn new(
        kernel: &KernelBasis,
        center: Vec<f64>,
        radius: f64,
        resolution: usize,
    ) -> Result<Self> {
        let quad = BallNodes::midpoint(center.len(), resolution);
        Self::with_quadrature(kernel, center, radius, quad)
    }

    /// Builds a projector reusing a precomputed node set.
    pub fn with_quadrature(
        kernel: &KernelBasis,
        center: Vec<f64>,
        radius: f64,
        quad: Rc<BallNodes>,
    ) -> Result<Self> {
        if radius <= 0.0 {
            return Err(AbvError::InvalidInput("ball radius must be positive".into()));
        }
        let components = kernel.fields.first().map(|f| f.components).unwrap_or(0);
        let nn = quad.nodes.len();
        let inner = |a: &[f64], b: &[f64]| -> f64 {
            let mut acc = 0.0;
            for (i, w) in quad.weights.iter().enumerate() {
                let off = i * components;
                let mut dot = 0.0;
                for c in 0..components {
                    dot += a[off + c] * b[off + c];
                }
                acc += w * dot;
            }
            acc
        };
        let mut basis_local: Vec<PolyVectorField> = Vec::new();
        let mut basis_values: Vec<Vec<f64>> = Vec::new();
        for f in &kernel.fields {
            let mut local = f.to_local(&center, radius);
            let mut values = vec![0.0; nn * components];
            for (i, y) in quad.nodes.iter().enumerate() {
                let v = local.eval(y);
                values[i * components..(i + 1) * components].copy_from_slice(&v);
            }
            // two MGS sweeps keep the Gram defect at rounding level
            for _ in 0..2 {
                for (b_poly, b_vals) in basis_local.iter().zip(&basis_values) {
                    let c = inner(&values, b_vals);
                    local.axpy(-c, b_poly);
                    for (v, bv) in values.iter_mut().zip(b_vals) {
                        *v -= c * bv;
                    }
                }
            }
            let norm2 = inner(&values, &values);
            if norm2 > 1e-24 {
                let inv = 1.0 / norm2.sqrt();
                local.scale(inv);
                for v in values.iter_mut() {
                    *v *= inv;
                }
                basis_local.push(local);
                basis_values.push(values);
            }
        }
        Ok(KernelProjector {
            center,
            radius,
            components,
            basis_local,
            basis_values,
            quad,
            gram_tolerance: 1e-10,
        })
    }

    pub fn basis_dimension(&self) -> usize {
        self.basis_local.len()
    }

    pub fn node_count(&self) -> usize {
        self.quad.nodes.len()
    }

    /// Projection coefficients of a point-evaluable field against the
    /// orthonormal basis.
    pub fn coefficients_fn(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let n = self.center.len();
        let m = self.basis_local.len();
        let mut gx = vec![0.0; n];
        let mut coeffs = vec![0.0; m];
        for (i, y) in self.quad.nodes.iter().enumerate() {
            for d in 0..n {
                gx[d] = self.center[d] + self.radius * y[d];
            }
            let v = f(&gx);
            let w = self.quad.weights[i];
            let off = i * self.components;
            for (k, bv) in self.basis_values.iter().enumerate() {
                let mut dot = 0.0;
                for c in 0..self.components {
                    dot += bv[off + c] * v[c];
                }
                coeffs[k] += w * dot;
            }
        }
        coeffs
    }

    /// Projects a point-evaluable field, returning the polynomial in
    /// global coordinates.
    pub fn project_fn(&self, f: impl FnMut(&[f64]) -> Vec<f64>) -> PolyVectorField {
        let coeffs = self.coefficients_fn(f);
        self.combine(&coeffs)
    }

    /// Linear combination of the basis, in global coordinates.
    pub fn combine(&self, coeffs: &[f64]) -> PolyVectorField {
        self.combine_local(coeffs).to_global(&self.center, self.radius)
    }

    /// Same combination kept in local ball coordinates; evaluate at
    /// `(x - center)/radius`.
    pub fn combine_local(&self, coeffs: &[f64]) -> PolyVectorField {
        let n = self.center.len();
        let mut local = PolyVectorField::zero(n, self.components.max(1));
        for (c, b) in coeffs.iter().zip(&self.basis_local) {
            local.axpy(*c, b);
        }
        local
    }

    /// Projects a grid field (multilinear interpolation at the nodes).
    pub fn project(&self, u: &DiscreteField) -> Result<PolyVectorField> {
        if !u.grid.contains_ball(&self.center, self.radius) {
            return Err(AbvError::BallOutsideDomain {
                center: self.center.clone(),
                radius: self.radius,
            });
        }
        Ok(self.project_fn(|x| u.sample(x)))
    }

    /// Discrete L¹ norm over the ball of a point-evaluable field.
    pub fn l1_norm_fn(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> f64 {
        let n = self.center.len();
        let scale = self.radius.powi(n as i32);
        let mut gx = vec![0.0; n];
        self.quad
            .nodes
            .iter()
            .zip(&self.quad.weights)
            .map(|(y, w)| {
                for d in 0..n {
                    gx[d] = self.center[d] + self.radius * y[d];
                }
                euclid(&f(&gx)) * w * scale
            })
            .sum()
    }

    /// Ball volume carried by the quadrature nodes.
    pub fn ball_volume(&self) -> f64 {
        let n = self.center.len();
        self.quad.weights.iter().sum::<f64>() * self.radius.powi(n as i32)
    }

    /// Gram matrix defect of the orthonormalized basis (for tests).
    pub fn gram_defect(&self) -> f64 {
        let m = self.basis_values.len();
        let mut defect: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let mut g = 0.0;
                for (ni, w) in self.quad.weights.iter().enumerate() {
                    let off = ni * self.components;
                    let mut dot = 0.0;
                    for c in 0..self.components {
                        dot += self.basis_values[i][off + c] * self.basis_values[j][off + c];
                    }
                    g += w * dot;
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((g - expect).abs());
            }
        }
        defect
    }

    /// Empirical constant of the polynomial inverse estimate
    /// `‖q‖_∞ ≤ c ⨍ |q|` over random kernel elements.
    pub fn inverse_estimate_constant(&self, trials: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = self.basis_local.len();
        if m == 0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for _ in 0..trials.max(1) {
            let coeffs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut sup: f64 = 0.0;
            let mut mean = 0.0;
            let mut vol = 0.0;
            for (i, w) in self.quad.weights.iter().enumerate() {
                let off = i * self.components;
                let mut q2 = 0.0;
                for c in 0..self.components {
                    let mut qc = 0.0;
                    for (k, ck) in coeffs.iter().enumerate() {
                        qc += ck * self.basis_values[k][off + c];
                    }
                    q2 += qc * qc;
                }
                let v = q2.sqrt();
                sup = sup.max(v);
                mean += v * w;
                vol += w;
            }
            if mean > 0.0 {
                worst = worst.max(sup / (mean / vol));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoincareOutcome {
    Ratio(f64),
    /// The input lies in the kernel: both sides vanish.
    KernelInput,
}

/// Measured Poincaré ratio `‖u - Π_B u‖_{L¹(B)} / (ℓ(B) |A u|(B))`.
pub fn poincare_ratio(
    op: &Operator,
    projector: &KernelProjector,
    u: &DiscreteField,
) -> Result<PoincareOutcome> {
    let au = apply_discrete(op, u)?;
    let denom_l1 = projector.l1_norm_fn(|x| au.sample_density(x));
    let u_l1 = projector.l1_norm_fn(|x| u.sample(x));
    let diameter = 2.0 * projector.radius;
    let proj = projector.project(u)?;
    let numer = projector.l1_norm_fn(|x| {
        let uv = u.sample(x);
        let pv = proj.eval(x);
        uv.iter().zip(&pv).map(|(a, b)| a - b).collect()
    });
    if denom_l1 * diameter < DEGENERATE_REL * u_l1.max(1e-300) {
        if numer < 1e-6 * u_l1.max(1e-30) {
            return Ok(PoincareOutcome::KernelInput);
        }
        return Err(AbvError::Degenerate(format!(
            "A u vanishes on the ball but the projection residual {numer:.3e} does not"
        )));
    }
    Ok(PoincareOutcome::Ratio(numer / (diameter * denom_l1)))
}

/// Poincaré ratio with a zero set: `u` must vanish on the inner ball;
/// returns `‖u‖_{L¹(B)} / (ℓ(B) |A u|(B))` over the outer ball.
pub fn poincare_zero_extension(
    op: &Operator,
    outer: &KernelProjector,
    inner_center: &[f64],
    inner_radius: f64,
    u: &DiscreteField,
) -> Result<PoincareOutcome> {
    if inner_radius < outer.radius / 4.0 {
        return Err(AbvError::InvalidInput(
            "inner ball must have at least a quarter of the outer radius".into(),
        ));
    }
    // verify u = 0 on the inner ball
    let (nodes, _) = crate::quad::unit_ball_midpoint(inner_center.len(), 8);
    let mut max_inner: f64 = 0.0;
    for y in &nodes {
        let x: Vec<f64> = inner_center
            .iter()
            .zip(y)
            .map(|(c, yy)| c + inner_radius * yy)
            .collect();
        max_inner = max_inner.max(euclid(&u.sample(&x)));
    }
    let scale = u.max_norm();
    if max_inner > 1e-9 * scale.max(1e-30) {
        return Err(AbvError::InvalidInput(format!(
            "field does not vanish on the inner ball (max {max_inner:.3e})"
        )));
    }
    let au = apply_discrete(op, u)?;
    let numer = outer.l1_norm_fn(|x| u.sample(x));
    let denom = outer.l1_norm_fn(|x| au.sample_density(x)) * 2.0 * outer.radius;
    if denom < 1e-300 || numer < 1e-15 * scale.max(1e-30) {
        return Ok(PoincareOutcome::KernelInput);
    }
    Ok(PoincareOutcome::Ratio(numer / denom))
}
