//! First-order constant-coefficient operators `A = Σ_α A_α ∂_α` and
//! their symbol calculus.
//!
//! An operator maps fields `u: R^n → R^N` to fields with values in
//! `R^K`; it is stored as the ordered list of its `n` coefficient
//! matrices `A_α`, each `K×N`. Matrix-valued targets (gradient-like
//! operators) are flattened row-major with `K = N·n`; symmetric
//! targets are not packed, so the bilinear pairing stays literal.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{AbvError, Result};
use crate::tolerances::RANK_REL_TOL;

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space_dim: usize,
    value_dim: usize,
    target_dim: usize,
    coeffs: Vec<DMatrix<f64>>,
}

impl Operator {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(AbvError::InvalidOperator(
                "operator needs at least one coefficient matrix".into(),
            ));
        }
        let (target_dim, value_dim) = (coeffs[0].nrows(), coeffs[0].ncols());
        if target_dim == 0 || value_dim == 0 {
            return Err(AbvError::InvalidOperator(
                "coefficient matrices must be nonempty".into(),
            ));
        }
        for (alpha, m) in coeffs.iter().enumerate() {
            if m.nrows() != target_dim || m.ncols() != value_dim {
                return Err(AbvError::InvalidOperator(format!(
                    "coefficient matrix A{} is {}x{}, expected {}x{}",
                    alpha + 1,
                    m.nrows(),
                    m.ncols(),
                    target_dim,
                    value_dim
                )));
            }
        }
        if coeffs.iter().all(|m| m.iter().all(|&x| x == 0.0)) {
            return Err(AbvError::InvalidOperator(
                "all coefficient matrices are zero".into(),
            ));
        }
        Ok(Operator {
            space_dim: coeffs.len(),
            value_dim,
            target_dim,
            coeffs,
        })
    }

    /// Space dimension `n`.
    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    /// Dimension `N` of the vectors the operator acts on.
    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    /// Dimension `K` of the operator's values.
    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn coeff(&self, alpha: usize) -> &DMatrix<f64> {
        &self.coeffs[alpha]
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// Symbol `A[ξ] = Σ_α ξ_α A_α` at a real frequency.
    pub fn symbol(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        if xi.len() != self.space_dim {
            return Err(AbvError::DimensionMismatch {
                expected: self.space_dim,
                got: xi.len(),
            });
        }
        let mut m = DMatrix::zeros(self.target_dim, self.value_dim);
        for (alpha, &x) in xi.iter().enumerate() {
            m += &self.coeffs[alpha] * x;
        }
        Ok(m)
    }

    /// Symbol at a complex frequency (same linear combination over C).
    pub fn symbol_complex(&self, xi: &[Complex64]) -> Result<DMatrix<Complex64>> {
        if xi.len() != self.space_dim {
            return Err(AbvError::DimensionMismatch {
                expected: self.space_dim,
                got: xi.len(),
            });
        }
        let mut m = DMatrix::<Complex64>::zeros(self.target_dim, self.value_dim);
        for (alpha, &x) in xi.iter().enumerate() {
            let a = &self.coeffs[alpha];
            for i in 0..self.target_dim {
                for j in 0..self.value_dim {
                    m[(i, j)] += x * a[(i, j)];
                }
            }
        }
        Ok(m)
    }

    /// Bilinear pairing `v ⊗_A z = Σ_α z_α A_α v = A[z] v`.
    pub fn pairing(&self, v: &[f64], z: &[f64]) -> Result<DVector<f64>> {
        if v.len() != self.value_dim {
            return Err(AbvError::DimensionMismatch {
                expected: self.value_dim,
                got: v.len(),
            });
        }
        let sym = self.symbol(z)?;
        Ok(sym * DVector::from_column_slice(v))
    }

    /// Formally adjoint operator `A* = Σ_α A_α^T ∂_α`, mapping
    /// `R^K`-valued fields to `R^N`-valued ones.
    pub fn adjoint(&self) -> Operator {
        Operator {
            space_dim: self.space_dim,
            value_dim: self.target_dim,
            target_dim: self.value_dim,
            coeffs: self.coeffs.iter().map(|m| m.transpose()).collect(),
        }
    }

    /// Scaled operator `c·A` (used by scale-invariance checks).
    pub fn scaled(&self, c: f64) -> Result<Operator> {
        Operator::new(self.coeffs.iter().map(|m| m * c).collect())
    }

    /// Samples the rank-one cone `C_A = {v ⊗_A z}` and returns an
    /// orthonormal basis of its span, the effective range `R_A`.
    pub fn cone_and_range(&self, samples: usize, seed: u64) -> ConeAndRange {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut generators = Vec::new();
        for i in 0..self.value_dim {
            for j in 0..self.space_dim {
                let mut v = vec![0.0; self.value_dim];
                let mut z = vec![0.0; self.space_dim];
                v[i] = 1.0;
                z[j] = 1.0;
                let g = self.pairing(&v, &z).expect("unit vectors have matching dims");
                generators.push(ConeGenerator { v, z, value: g });
            }
        }
        while generators.len() < samples.max(self.value_dim * self.space_dim) {
            let v: Vec<f64> = (0..self.value_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..self.space_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = self.pairing(&v, &z).expect("sampled vectors have matching dims");
            generators.push(ConeGenerator { v, z, value: g });
        }
        let mat = DMatrix::from_fn(self.target_dim, generators.len(), |i, j| {
            generators[j].value[i]
        });
        let basis = orthonormal_column_span(&mat, RANK_REL_TOL);
        ConeAndRange { generators, basis }
    }
}

/// One sampled generator `v ⊗_A z` of the rank-one cone.
#[derive(Debug, Clone)]
pub struct ConeGenerator {
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub value: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ConeAndRange {
    pub generators: Vec<ConeGenerator>,
    /// Orthonormal basis of `span(C_A)`, one column per direction.
    pub basis: DMatrix<f64>,
}

impl ConeAndRange {
    pub fn range_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Largest distance of a generator from the span of the basis.
    pub fn max_residual(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| {
                let proj = &self.basis * (self.basis.transpose() * &g.value);
                (&g.value - proj).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Orthonormal basis of the column span of `m`, by SVD with a relative
/// singular-value cutoff.
pub fn orthonormal_column_span(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax && s > 0.0)
        .count();
    u.columns(0, rank).into_owned()
}

fn flat(j: usize, k: usize, n: usize) -> usize {
    j * n + k
}

/// The gradient `∇u` on `R^N`-valued fields; `K = N·n`, row-major.
pub fn gradient(n: usize, value_dim: usize) -> Result<Operator> {
    if n == 0 || value_dim == 0 {
        return Err(AbvError::InvalidOperator("gradient needs n ≥ 1, N ≥ 1".into()));
    }
    let k = value_dim * n;
    let coeffs = (0..n)
        .map(|alpha| {
            DMatrix::from_fn(k, value_dim, |row, col| {
                if row == flat(col, alpha, n) {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    Operator::new(coeffs)
}

/// The symmetric gradient `E(u) = (∇u + ∇u^T)/2`; requires `N = n`.
pub fn sym_gradient(n: usize) -> Result<Operator> {
    if n < 2 {
        return Err(AbvError::InvalidOperator("symgrad needs n ≥ 2".into()));
    }
    let k = n * n;
    let coeffs = (0..n)
        .map(|alpha| {
            DMatrix::from_fn(k, n, |row, col| {
                let (j, kk) = (row / n, row % n);
                let mut val = 0.0;
                // (v ⊗ z)_{j,k} = (v_j z_k + v_k z_j) / 2
                if col == j && kk == alpha {
                    val += 0.5;
                }
                if col == kk && j == alpha {
                    val += 0.5;
                }
                val
            })
        })
        .collect();
    Operator::new(coeffs)
}

/// The trace-free (deviatoric) symmetric gradient
/// `E^D(u) = E(u) - div(u)/n · Id`; requires `N = n`.
pub fn dev_sym_gradient(n: usize) -> Result<Operator> {
    if n < 2 {
        return Err(AbvError::InvalidOperator("devsymgrad needs n ≥ 2".into()));
    }
    let sym = sym_gradient(n)?;
    let k = n * n;
    let coeffs = (0..n)
        .map(|alpha| {
            DMatrix::from_fn(k, n, |row, col| {
                let (j, kk) = (row / n, row % n);
                let mut val = sym.coeff(alpha)[(row, col)];
                if j == kk && col == alpha {
                    val -= 1.0 / n as f64;
                }
                val
            })
        })
        .collect();
    Operator::new(coeffs)
}

/// The 2x3-matrix-valued operator on fields `R^3 → R^2` that is
/// R-elliptic and cancelling but not C-elliptic (its nullspace contains
/// a copy of the holomorphic fields in `(x1, x2)`). Flattened row-major
/// to `K = 6`:
///
/// ```text
/// ( u1_x1/2 - u2_x2/2,  u2_x1/2 + u1_x2/2,  u1_x3 )
/// ( u2_x1/2 + u1_x2/2,  u1_x1/2 - u2_x2/2,  u2_x3 )
/// ```
pub fn remark25() -> Operator {
    let mut a1 = DMatrix::zeros(6, 2);
    let mut a2 = DMatrix::zeros(6, 2);
    let mut a3 = DMatrix::zeros(6, 2);
    // row (0,0): u1_x1/2 - u2_x2/2
    a1[(0, 0)] = 0.5;
    a2[(0, 1)] = -0.5;
    // row (0,1): u2_x1/2 + u1_x2/2
    a1[(1, 1)] = 0.5;
    a2[(1, 0)] = 0.5;
    // row (0,2): u1_x3
    a3[(2, 0)] = 1.0;
    // row (1,0): u2_x1/2 + u1_x2/2
    a1[(3, 1)] = 0.5;
    a2[(3, 0)] = 0.5;
    // row (1,1): u1_x1/2 - u2_x2/2
    a1[(4, 0)] = 0.5;
    a2[(4, 1)] = -0.5;
    // row (1,2): u2_x3
    a3[(5, 1)] = 1.0;
    Operator::new(vec![a1, a2, a3]).expect("fixed nonzero coefficients")
}

/// Catalog lookup: `gradient` (N configurable, default 1), `symgrad`,
/// `devsymgrad`, `remark25` (fixes n = 3).
pub fn builtin(name: &str, n: usize, value_dim: Option<usize>) -> Result<Operator> {
    match name {
        "gradient" => gradient(n, value_dim.unwrap_or(1)),
        "symgrad" => {
            if let Some(nd) = value_dim {
                if nd != n {
                    return Err(AbvError::InvalidOperator(format!(
                        "symgrad requires N = n, got N={nd}, n={n}"
                    )));
                }
            }
            sym_gradient(n)
        }
        "devsymgrad" => {
            if let Some(nd) = value_dim {
                if nd != n {
                    return Err(AbvError::InvalidOperator(format!(
                        "devsymgrad requires N = n, got N={nd}, n={n}"
                    )));
                }
            }
            dev_sym_gradient(n)
        }
        "remark25" => {
            if n != 3 {
                return Err(AbvError::InvalidOperator(format!(
                    "remark25 fixes n = 3, got n={n}"
                )));
            }
            Ok(remark25())
        }
        other => Err(AbvError::InvalidOperator(format!(
            "unknown builtin operator '{other}' (expected gradient, symgrad, devsymgrad, remark25)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    #[test]
    fn gradient_symbol_matches_example() {
        let op = gradient(2, 1).unwrap();
        let sym = op.symbol(&[1.0, 2.0]).unwrap();
        // applied to the scalar 1, the symbol is the vector (1, 2)
        let v = &sym * DVector::from_column_slice(&[1.0]);
        assert_eq!(v.as_slice(), &[1.0, 2.0]);
        assert!((v.norm_squared() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn zero_frequency_gives_zero_symbol() {
        let op = sym_gradient(3).unwrap();
        let sym = op.symbol(&[0.0, 0.0, 0.0]).unwrap();
        assert!(sym.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dev_sym_gradient_complex_null_pair() {
        // A[(1,i)] (1,-i) = 0 is the classical failure of C-ellipticity
        // for the trace-free symmetric gradient in the plane.
        let op = dev_sym_gradient(2).unwrap();
        let xi = [C::new(1.0, 0.0), C::new(0.0, 1.0)];
        let sym = op.symbol_complex(&xi).unwrap();
        let eta = DVector::from_column_slice(&[C::new(1.0, 0.0), C::new(0.0, -1.0)]);
        let out = sym * eta;
        assert!(out.iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn pairing_symmetric_gradient() {
        let op = sym_gradient(2).unwrap();
        let g = op.pairing(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        // (e1 ⊙ e2) = [[0, 1/2], [1/2, 0]] row-major
        assert_eq!(g.as_slice(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn pairing_matches_tensor_product_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let op = gradient(3, 2).unwrap();
        for _ in 0..10 {
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g = op.pairing(&v, &z).unwrap();
            for j in 0..2 {
                for k in 0..3 {
                    assert!((g[j * 3 + k] - v[j] * z[k]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn pairing_zero_vector() {
        let op = dev_sym_gradient(3).unwrap();
        let g = op.pairing(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adjoint_is_involution_and_transposes() {
        let op = sym_gradient(2).unwrap();
        let adj = op.adjoint();
        assert_eq!(adj.value_dim(), op.target_dim());
        assert_eq!(adj.target_dim(), op.value_dim());
        for alpha in 0..2 {
            assert_eq!(adj.coeff(alpha), &op.coeff(alpha).transpose());
        }
        assert_eq!(adj.adjoint(), op);
    }

    #[test]
    fn gradient_adjoint_has_unit_rows() {
        let op = gradient(3, 1).unwrap();
        let adj = op.adjoint();
        for alpha in 0..3 {
            let m = adj.coeff(alpha); // 1x3, the transpose of e_alpha
            for j in 0..3 {
                let expect = if j == alpha { 1.0 } else { 0.0 };
                assert_eq!(m[(0, j)], expect);
            }
        }
    }

    #[test]
    fn effective_range_dimensions() {
        assert_eq!(gradient(2, 1).unwrap().cone_and_range(8, 1).range_dim(), 2);
        // symmetric 2x2 matrices
        assert_eq!(sym_gradient(2).unwrap().cone_and_range(16, 1).range_dim(), 3);
        // trace-free symmetric 2x2 matrices
        assert_eq!(
            dev_sym_gradient(2).unwrap().cone_and_range(16, 1).range_dim(),
            2
        );
    }

    #[test]
    fn cone_generators_lie_in_range_and_match_symbol() {
        let op = dev_sym_gradient(3).unwrap();
        let cr = op.cone_and_range(40, 3);
        assert!(cr.max_residual() < 1e-10);
        for g in &cr.generators {
            let via_symbol = op.symbol(&g.z).unwrap() * DVector::from_column_slice(&g.v);
            assert!((via_symbol - &g.value).norm() < 1e-12);
        }
    }

    #[test]
    fn symbol_dimension_error_names_expected() {
        let op = gradient(2, 1).unwrap();
        match op.symbol(&[1.0, 2.0, 3.0]) {
            Err(AbvError::DimensionMismatch { expected: 2, got: 3 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn builtin_dispatch() {
        assert!(builtin("gradient", 2, None).is_ok());
        assert!(builtin("symgrad", 3, None).is_ok());
        assert!(builtin("symgrad", 3, Some(2)).is_err());
        assert!(builtin("remark25", 3, None).is_ok());
        assert!(builtin("remark25", 2, None).is_err());
        assert!(builtin("nope", 2, None).is_err());
    }

    #[test]
    fn remark25_matches_displayed_rows() {
        let op = remark25();
        assert_eq!((op.space_dim(), op.value_dim(), op.target_dim()), (3, 2, 6));
        // row (0,0) of A(u) is u1_x1/2 - u2_x2/2
        assert_eq!(op.coeff(0)[(0, 0)], 0.5);
        assert_eq!(op.coeff(1)[(0, 1)], -0.5);
        // rows (0,1) and (1,0) coincide
        assert_eq!(op.coeff(0).row(1), op.coeff(0).row(3));
        assert_eq!(op.coeff(1).row(1), op.coeff(1).row(3));
    }
}
