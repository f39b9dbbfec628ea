//! Degree-by-degree computation of polynomial solutions of `A u = 0`,
//! kernel bases orthonormal over the unit ball, and the averaged
//! Taylor polynomial.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{AbvError, Result};
use crate::grid::DiscreteField;
use crate::operator::Operator;
use crate::poly::{
    multi_indices_of_degree, multi_indices_up_to, PolyVectorField,
};
use crate::tolerances::{COEFF_PRUNE, RANK_REL_TOL};

/// Basis of the homogeneous degree-`d` solutions of `A u = 0`.
///
/// Each output component of `A u` is homogeneous of degree `d - 1`;
/// equating all its monomial coefficients to zero gives an exact
/// linear system on the coefficients of `u`, solved by a
/// rank-revealing eigendecomposition of the normal matrix.
pub fn homogeneous_solutions(op: &Operator, d: u32) -> Vec<PolyVectorField> {
    let n = op.space_dim();
    let nn = op.value_dim();
    let unknowns = multi_indices_of_degree(n, d);
    let ncols = unknowns.len() * nn;
    let col_of = |j: usize, pos: usize| pos * nn + j;

    if d == 0 {
        // A annihilates constants; all N coefficients are free.
        return (0..nn)
            .map(|j| {
                let mut e = vec![0.0; nn];
                e[j] = 1.0;
                PolyVectorField::constant(n, &e)
            })
            .collect();
    }

    let eqs = multi_indices_of_degree(n, d - 1);
    let mut eq_index = BTreeMap::new();
    for (i, g) in eqs.iter().enumerate() {
        eq_index.insert(g.clone(), i);
    }
    let nrows = eqs.len() * op.target_dim();
    let mut mat = DMatrix::<f64>::zeros(nrows, ncols);
    for (pos, beta) in unknowns.iter().enumerate() {
        for alpha in 0..n {
            if beta[alpha] == 0 {
                continue;
            }
            let mut gamma = beta.clone();
            gamma[alpha] -= 1;
            let row_base = eq_index[&gamma] * op.target_dim();
            let factor = beta[alpha] as f64;
            let a = op.coeff(alpha);
            for k in 0..op.target_dim() {
                for j in 0..nn {
                    mat[(row_base + k, col_of(j, pos))] += factor * a[(k, j)];
                }
            }
        }
    }

    let basis = nullspace_basis(&mat);
    basis
        .column_iter()
        .map(|col| {
            let mut p = PolyVectorField::zero(n, nn);
            for (pos, beta) in unknowns.iter().enumerate() {
                for j in 0..nn {
                    let c = col[col_of(j, pos)];
                    if c.abs() > COEFF_PRUNE {
                        p.add_term(j, beta.clone(), c);
                    }
                }
            }
            p
        })
        .collect()
}

/// Orthonormal basis of the nullspace of `m`, by SVD with a relative
/// singular-value cutoff. The matrix is padded with zero rows when
/// underdetermined so the decomposition carries a full `V`.
fn nullspace_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let ncols = m.ncols();
    if ncols == 0 {
        return DMatrix::zeros(0, 0);
    }
    let work = if m.nrows() >= ncols {
        m.clone()
    } else {
        let mut padded = DMatrix::zeros(ncols, ncols);
        padded.rows_mut(0, m.nrows()).copy_from(m);
        padded
    };
    let svd = work.svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = RANK_REL_TOL * smax;
    let mut cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            cols.push(vt.row(i).transpose());
        }
    }
    let mut out = DMatrix::zeros(ncols, cols.len());
    for (i, c) in cols.iter().enumerate() {
        out.set_column(i, c);
    }
    out
}

#[derive(Debug, Clone)]
pub struct KernelBasis {
    /// Kernel fields, orthonormal in `L²` of the unit ball.
    pub fields: Vec<PolyVectorField>,
    /// Number of homogeneous solutions per degree `0..=cutoff`.
    pub dimension_by_degree: Vec<usize>,
    /// Largest degree carrying solutions, when the run of empty
    /// degrees above it reaches the cutoff. Stabilization is certified
    /// only up to the cutoff.
    pub minimal_l: Option<u32>,
    pub cutoff: u32,
}

impl KernelBasis {
    pub fn dimension(&self) -> usize {
        self.fields.len()
    }

    /// Maximum polynomial degree among the basis fields.
    pub fn max_degree(&self) -> u32 {
        self.fields.iter().map(|f| f.degree()).max().unwrap_or(0)
    }
}

/// Concatenates homogeneous solutions for `d = 0..=cutoff` and
/// orthonormalizes them over the unit ball (exact moment integrals,
/// modified Gram-Schmidt).
pub fn kernel_basis(op: &Operator, cutoff: u32) -> KernelBasis {
    let mut fields: Vec<PolyVectorField> = Vec::new();
    let mut dimension_by_degree = Vec::new();
    for d in 0..=cutoff {
        let sols = homogeneous_solutions(op, d);
        dimension_by_degree.push(sols.len());
        fields.extend(sols);
    }
    // modified Gram-Schmidt in L²(B(0,1))
    let mut ortho: Vec<PolyVectorField> = Vec::new();
    for mut f in fields {
        for b in &ortho {
            let c = f.inner_unit_ball(b);
            f.axpy(-c, b);
        }
        let norm2 = f.inner_unit_ball(&f);
        if norm2 > 1e-20 {
            f.scale(1.0 / norm2.sqrt());
            f.prune(COEFF_PRUNE);
            ortho.push(f);
        }
    }
    let last_nonempty = dimension_by_degree
        .iter()
        .enumerate()
        .filter(|(_, &dim)| dim > 0)
        .map(|(d, _)| d as u32)
        .max();
    let minimal_l = match last_nonempty {
        Some(l) if l < cutoff => Some(l),
        _ => None,
    };
    KernelBasis {
        fields: ortho,
        dimension_by_degree,
        minimal_l,
        cutoff,
    }
}

/// Default kernel degree cutoff, `2(n + N) + 2`.
pub fn default_cutoff(op: &Operator) -> u32 {
    2 * (op.space_dim() + op.value_dim()) as u32 + 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdnProbe {
    /// True when the homogeneous solution dimension is zero for the
    /// top two degrees below the cutoff.
    pub stabilized: bool,
    /// Total dimension found up to the cutoff.
    pub dimension: usize,
}

/// Probes the finite-dimensional-nullspace property up to `cutoff`.
pub fn fdn_probe(op: &Operator, cutoff: u32) -> FdnProbe {
    assert!(cutoff >= 4, "fdn_probe needs cutoff >= 4");
    let mut dims = Vec::new();
    for d in 0..=cutoff {
        dims.push(homogeneous_solutions(op, d).len());
    }
    let stabilized = dims[cutoff as usize] == 0 && dims[cutoff as usize - 1] == 0;
    FdnProbe {
        stabilized,
        dimension: dims.iter().sum(),
    }
}

/// The averaged Taylor polynomial `P^l_B` on a ball: a degree-`l`
/// polynomial reproduction operator built from a polynomial bump
/// weight `ω_B ∝ (1 - |y|²)^m` with unit integral.
pub struct AveragedTaylor {
    pub center: Vec<f64>,
    pub radius: f64,
    pub order: u32,
    /// Bump exponent; defaults to `order + 2`.
    pub bump_exponent: u32,
    nodes: Vec<Vec<f64>>,
    node_weights: Vec<f64>,
    /// x-monomials of degree <= order, in local coordinates.
    x_monomials: Vec<Vec<u32>>,
    /// Per x-monomial, the kernel values at each node.
    kernel_values: Vec<Vec<f64>>,
}

/// `∫_{B(0,1)} |y|^{2k} dy` in n dimensions.
fn radial_moment(n: usize, k: u32) -> f64 {
    let surface = 2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half_pub(n as u64);
    surface / (2.0 * k as f64 + n as f64)
}

fn gamma_half_pub(half: u64) -> f64 {
    match half {
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (half as f64 / 2.0 - 1.0) * gamma_half_pub(half - 2),
    }
}

fn binom_u32(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Sparse polynomial in local y with multi-index keys.
type YPoly = BTreeMap<Vec<u32>, f64>;

fn ypoly_mul_term(p: &YPoly, beta: &[u32], c: f64) -> YPoly {
    let mut out = YPoly::new();
    for (b, &v) in p {
        let key: Vec<u32> = b.iter().zip(beta).map(|(a, b)| a + b).collect();
        *out.entry(key).or_insert(0.0) += v * c;
    }
    out
}

fn ypoly_diff(p: &YPoly, axis: usize) -> YPoly {
    let mut out = YPoly::new();
    for (b, &v) in p {
        if b[axis] == 0 {
            continue;
        }
        let mut nb = b.clone();
        nb[axis] -= 1;
        *out.entry(nb).or_insert(0.0) += v * b[axis] as f64;
    }
    out
}

fn ypoly_eval(p: &YPoly, y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (b, &v) in p {
        let mut m = v;
        for (d, &e) in b.iter().enumerate() {
            for _ in 0..e {
                m *= y[d];
            }
        }
        acc += m;
    }
    acc
}

impl AveragedTaylor {
    /// `nodes_per_radius` is the quadrature resolution of the ball
    /// (cells per radius along each axis); the precondition is 4.
    /// The bump exponent defaults to `order + 2`.
    pub fn new(center: Vec<f64>, radius: f64, order: u32, nodes_per_radius: usize) -> Result<Self> {
        let m = order + 2;
        Self::with_bump(center, radius, order, m, nodes_per_radius)
    }

    /// Constructor with an explicit bump exponent. The commutation
    /// identity `A(P^l u) = P^{l-1}(A u)` holds only between operators
    /// sharing one weight, so the lower-order operator of such a pair
    /// must be built with the exponent of the higher one.
    pub fn with_bump(
        center: Vec<f64>,
        radius: f64,
        order: u32,
        bump_exponent: u32,
        nodes_per_radius: usize,
    ) -> Result<Self> {
        if nodes_per_radius < 4 {
            return Err(AbvError::InvalidInput(
                "averaged Taylor quadrature needs at least 4 cells per radius".into(),
            ));
        }
        if radius <= 0.0 {
            return Err(AbvError::InvalidInput("ball radius must be positive".into()));
        }
        if bump_exponent < order + 2 {
            return Err(AbvError::InvalidInput(
                "bump exponent must be at least order + 2".into(),
            ));
        }
        let n = center.len();
        let m = bump_exponent;

        // normalized bump Ω(y) = (1-|y|²)^m / I_m on the unit ball
        let mut norm = 0.0;
        for k in 0..=m {
            norm += binom_u32(m, k) * (-1.0f64).powi(k as i32) * radial_moment(n, k);
        }
        let mut omega: YPoly = YPoly::new();
        {
            // expand (1 - |y|²)^m = Σ_k C(m,k) (-1)^k (Σ y_d²)^k
            let mut pow: Vec<YPoly> = vec![YPoly::from([(vec![0u32; n], 1.0)])];
            let mut r2 = YPoly::new();
            for d in 0..n {
                let mut key = vec![0u32; n];
                key[d] = 2;
                r2.insert(key, 1.0);
            }
            for _ in 1..=m {
                let prev = pow.last().unwrap();
                let mut next = YPoly::new();
                for (b, &v) in prev {
                    for (b2, &v2) in &r2 {
                        let key: Vec<u32> = b.iter().zip(b2).map(|(a, c)| a + c).collect();
                        *next.entry(key).or_insert(0.0) += v * v2;
                    }
                }
                pow.push(next);
            }
            for (k, pk) in pow.iter().enumerate() {
                let c = binom_u32(m, k as u32) * (-1.0f64).powi(k as i32) / norm;
                for (b, &v) in pk {
                    *omega.entry(b.clone()).or_insert(0.0) += c * v;
                }
            }
        }

        // For each multi-index β with |β| <= order expand
        //   g_β(x, y) = ∂^β_y [ (y-x)^β Ω(y) ] / β!
        // as a polynomial in x whose coefficients are y-polynomials;
        // group by x-monomial across all β.
        let x_monomials = multi_indices_up_to(n, order);
        let mut kernel_polys: Vec<YPoly> = vec![YPoly::new(); x_monomials.len()];
        let x_pos: BTreeMap<Vec<u32>, usize> = x_monomials
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();
        for beta in multi_indices_up_to(n, order) {
            // (y-x)^β = Σ_{γ≤β} C(β,γ) y^γ (-x)^{β-γ}
            // keep terms as (x-exponent, y-exponent, coefficient)
            let mut terms: Vec<(Vec<u32>, Vec<u32>, f64)> = vec![(vec![], vec![], 1.0)];
            for d in 0..n {
                let b = beta[d];
                let mut next = Vec::new();
                for (xe, ye, c) in &terms {
                    for g in 0..=b {
                        let coef = c * binom_u32(b, g) * (-1.0f64).powi((b - g) as i32);
                        let mut nxe = xe.clone();
                        nxe.push(b - g);
                        let mut nye = ye.clone();
                        nye.push(g);
                        next.push((nxe, nye, coef));
                    }
                }
                terms = next;
            }
            let beta_factorial: f64 = beta
                .iter()
                .map(|&b| (1..=b.max(1)).map(|x| x as f64).product::<f64>())
                .product();
            for (xe, ye, c) in terms {
                // y^ye · Ω(y), then ∂^β_y
                let mut poly = ypoly_mul_term(&omega, &ye, c / beta_factorial);
                for (axis, &b) in beta.iter().enumerate() {
                    for _ in 0..b {
                        poly = ypoly_diff(&poly, axis);
                    }
                }
                let slot = x_pos[&xe];
                for (b, v) in poly {
                    *kernel_polys[slot].entry(b).or_insert(0.0) += v;
                }
            }
        }

        // ball quadrature in local coordinates, exact on the
        // polynomial kernel factors
        let (nodes, node_weights) = crate::quad::unit_ball_rule(n, nodes_per_radius);

        let kernel_values = kernel_polys
            .iter()
            .map(|p| nodes.iter().map(|y| ypoly_eval(p, y)).collect())
            .collect();

        Ok(AveragedTaylor {
            center,
            radius,
            order,
            bump_exponent: m,
            nodes,
            node_weights,
            x_monomials,
            kernel_values,
        })
    }

    /// Applies the operator to a point-evaluable field, returning the
    /// degree-`order` polynomial (in global coordinates).
    pub fn apply_fn(
        &self,
        components: usize,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> PolyVectorField {
        let n = self.center.len();
        // the R^n factors from dy and from the ω_B scaling cancel, so
        // quadrature runs in local coordinates directly
        let mut coeffs = vec![vec![0.0; components]; self.x_monomials.len()];
        let mut gy = vec![0.0; n];
        for (ni, y) in self.nodes.iter().enumerate() {
            for d in 0..n {
                gy[d] = self.center[d] + self.radius * y[d];
            }
            let val = f(&gy);
            let w = self.node_weights[ni];
            for (mi, kv) in self.kernel_values.iter().enumerate() {
                let kw = kv[ni] * w;
                if kw == 0.0 {
                    continue;
                }
                for c in 0..components {
                    coeffs[mi][c] += kw * val[c];
                }
            }
        }
        let mut local = PolyVectorField::zero(n, components);
        for (mi, beta) in self.x_monomials.iter().enumerate() {
            for c in 0..components {
                if coeffs[mi][c] != 0.0 {
                    local.add_term(c, beta.clone(), coeffs[mi][c]);
                }
            }
        }
        local.to_global(&self.center, self.radius)
    }

    /// Applies to a grid field through multilinear interpolation.
    pub fn apply(&self, u: &DiscreteField) -> Result<PolyVectorField> {
        if !u.grid.contains_ball(&self.center, self.radius) {
            return Err(AbvError::BallOutsideDomain {
                center: self.center.clone(),
                radius: self.radius,
            });
        }
        Ok(self.apply_fn(u.components, |x| u.sample(x)))
    }
}
