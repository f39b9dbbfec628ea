//! Ellipticity classification: R-ellipticity, C-ellipticity and the
//! cancelling property, with quantitative witnesses.
//!
//! The symbol minimum over the frequency sphere is located by coarse
//! sphere sampling followed by alternating minimization in the
//! bilinear pair `(ξ, η)` — for fixed η the minimizing ξ is a smallest
//! singular vector and vice versa, so the alternation converges to
//! exact zeros when they exist. C-ellipticity is cross-checked against
//! the polynomial kernel growth probe and a disagreement is an error.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{AbvError, Result};
use crate::nullspace::{default_cutoff, fdn_probe};
use crate::operator::Operator;
use crate::tolerances::ELLIPTIC_REL_TOL;

#[derive(Debug, Clone)]
pub struct EllipticityReport {
    pub r_elliptic: bool,
    pub c_elliptic: bool,
    pub cancelling: Option<bool>,
    /// Minimum of `|v ⊗_A z|` over real unit `v`, `z`.
    pub kappa1: f64,
    /// Maximum of `|v ⊗_A z|` over real unit `v`, `z`.
    pub kappa2: f64,
    pub witness_real: Option<(Vec<f64>, Vec<f64>)>,
    pub witness_complex: Option<(Vec<Complex64>, Vec<Complex64>)>,
    pub tolerance: f64,
    pub cancelling_warning: Option<String>,
    pub intersection_dim: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RealEllipticity {
    pub r_elliptic: bool,
    pub kappa1: f64,
    pub kappa2: f64,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct ComplexEllipticity {
    pub c_elliptic: bool,
    pub minimum: f64,
    pub witness: Option<(Vec<Complex64>, Vec<Complex64>)>,
}

#[derive(Debug, Clone)]
pub struct CancellingReport {
    pub cancelling: bool,
    pub intersection_dim: usize,
    /// Orthonormal basis of the common range intersection.
    pub intersection_basis: DMatrix<f64>,
    pub warning: Option<String>,
}

/// Unit sphere sample directions in `R^m`: coordinate axes, their
/// differences, and a seeded uniform batch of size `grid_density^2`
/// (capped), matching a coarse per-angle resolution.
fn sphere_samples(m: usize, grid_density: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..m {
        let mut v = DVector::zeros(m);
        v[i] = 1.0;
        out.push(v.clone());
        for j in 0..i {
            let mut w = DVector::zeros(m);
            w[i] = 1.0;
            w[j] = 1.0;
            out.push(w.normalize());
            let mut w = DVector::zeros(m);
            w[i] = 1.0;
            w[j] = -1.0;
            out.push(w.normalize());
        }
    }
    let count = grid_density.pow(2).max(grid_density * m).min(20_000);
    for _ in 0..count {
        let v = DVector::from_fn(m, |_, _| {
            // Box-Muller from two uniforms
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        });
        if v.norm() > 1e-9 {
            out.push(v.normalize());
        }
    }
    out
}

/// Smallest singular value and corresponding right singular vector.
fn min_singular(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let (mut smin, mut idx) = (f64::INFINITY, 0);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < smin {
            smin = s;
            idx = i;
        }
    }
    // thin SVD: if ncols > nrows, some directions are annihilated
    if m.ncols() > m.nrows() {
        let normal = m.transpose() * m;
        let eig = nalgebra::SymmetricEigen::new(normal);
        let (mut lmin, mut li) = (f64::INFINITY, 0);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l < lmin {
                lmin = l;
                li = i;
            }
        }
        return (lmin.max(0.0).sqrt(), eig.eigenvectors.column(li).into_owned());
    }
    (smin, vt.row(idx).transpose())
}

fn max_singular(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

/// One step of alternating minimization of `|A[ξ]η|` over unit `ξ, η`
/// in the real case: for fixed η minimize over ξ, then re-minimize η.
fn alternate_real(op: &Operator, xi: &mut DVector<f64>, eta: &mut DVector<f64>) -> f64 {
    let n = op.space_dim();
    let k = op.target_dim();
    // columns A_α η
    let m_eta = DMatrix::from_fn(k, n, |row, alpha| {
        let a = op.coeff(alpha);
        (0..op.value_dim()).map(|j| a[(row, j)] * eta[j]).sum()
    });
    let (_, new_xi) = min_singular(&m_eta);
    *xi = new_xi;
    let sym = op.symbol(xi.as_slice()).expect("xi has length n");
    let (smin, new_eta) = min_singular(&sym);
    *eta = new_eta;
    smin
}

/// R-ellipticity by sphere sampling plus alternating refinement.
/// Returns the verdict and the achieved `kappa1`, `kappa2`.
pub fn check_r_elliptic(op: &Operator, grid_density: usize, seed: u64) -> Result<RealEllipticity> {
    if grid_density < 8 {
        return Err(AbvError::InvalidInput("grid_density must be at least 8".into()));
    }
    let mut kappa1 = f64::INFINITY;
    let mut kappa2: f64 = 0.0;
    let mut best: Option<(DVector<f64>, DVector<f64>)> = None;
    for xi in sphere_samples(op.space_dim(), grid_density, seed) {
        let sym = op.symbol(xi.as_slice())?;
        let (smin, eta) = min_singular(&sym);
        kappa2 = kappa2.max(max_singular(&sym));
        if smin < kappa1 {
            kappa1 = smin;
            best = Some((xi, eta));
        }
    }
    let (mut xi, mut eta) = best.expect("sphere samples are nonempty");
    for _ in 0..60 {
        let val = alternate_real(op, &mut xi, &mut eta);
        if val < kappa1 {
            kappa1 = val;
        }
        if val <= 0.0 {
            break;
        }
    }
    let tolerance = ELLIPTIC_REL_TOL * kappa2;
    let r_elliptic = kappa1 > tolerance;
    Ok(RealEllipticity {
        r_elliptic,
        kappa1,
        kappa2,
        witness: if r_elliptic {
            None
        } else {
            Some((xi.as_slice().to_vec(), eta.as_slice().to_vec()))
        },
    })
}

fn complex_from_parts(re: &[f64], im: &[f64]) -> Vec<Complex64> {
    re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
}

/// Complex symbol as a real `2K x 2N` matrix acting on stacked
/// real/imaginary parts of η.
fn real_form_of_complex_symbol(op: &Operator, xi: &[Complex64]) -> DMatrix<f64> {
    let k = op.target_dim();
    let nn = op.value_dim();
    let sym = op.symbol_complex(xi).expect("xi has length n");
    let mut m = DMatrix::zeros(2 * k, 2 * nn);
    for i in 0..k {
        for j in 0..nn {
            let c = sym[(i, j)];
            m[(i, j)] = c.re;
            m[(i, j + nn)] = -c.im;
            m[(i + k, j)] = c.im;
            m[(i + k, j + nn)] = c.re;
        }
    }
    m
}

/// Alternating step in the complex case, working on the real forms.
fn alternate_complex(
    op: &Operator,
    xi: &mut Vec<Complex64>,
    eta: &mut Vec<Complex64>,
) -> f64 {
    let n = op.space_dim();
    let k = op.target_dim();
    // ξ-step: |A[ξ]η| = |M_η ξ| with complex M_η; build its real form
    let mut m_eta = DMatrix::<f64>::zeros(2 * k, 2 * n);
    for alpha in 0..n {
        let a = op.coeff(alpha);
        for row in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..op.value_dim() {
                acc += a[(row, j)] * eta[j];
            }
            m_eta[(row, alpha)] = acc.re;
            m_eta[(row, alpha + n)] = -acc.im;
            m_eta[(row + k, alpha)] = acc.im;
            m_eta[(row + k, alpha + n)] = acc.re;
        }
    }
    let (_, xiv) = min_singular(&m_eta);
    *xi = complex_from_parts(&xiv.as_slice()[..n], &xiv.as_slice()[n..]);
    let m = real_form_of_complex_symbol(op, xi);
    let (smin, etav) = min_singular(&m);
    let nn = op.value_dim();
    *eta = complex_from_parts(&etav.as_slice()[..nn], &etav.as_slice()[nn..]);
    smin
}

/// C-ellipticity: minimization of `|A[ξ]η|` over the complex unit
/// sphere (parametrized as the real 2n-sphere), cross-validated
/// against the kernel growth probe.
pub fn check_c_elliptic(op: &Operator, grid_density: usize, seed: u64) -> Result<ComplexEllipticity> {
    if grid_density < 8 {
        return Err(AbvError::InvalidInput("grid_density must be at least 8".into()));
    }
    let n = op.space_dim();
    let kappa2 = check_r_elliptic(op, grid_density, seed)?.kappa2;
    let mut minimum = f64::INFINITY;
    let mut best: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    for v in sphere_samples(2 * n, grid_density, seed ^ 0x9e3779b97f4a7c15) {
        let xi = complex_from_parts(&v.as_slice()[..n], &v.as_slice()[n..]);
        let m = real_form_of_complex_symbol(op, &xi);
        let (smin, etav) = min_singular(&m);
        if smin < minimum {
            minimum = smin;
            let nn = op.value_dim();
            best = Some((
                xi,
                complex_from_parts(&etav.as_slice()[..nn], &etav.as_slice()[nn..]),
            ));
        }
    }
    let (mut xi, mut eta) = best.expect("sphere samples are nonempty");
    for _ in 0..80 {
        let val = alternate_complex(op, &mut xi, &mut eta);
        if val < minimum {
            minimum = val;
        }
        if val <= 0.0 {
            break;
        }
    }
    let tolerance = ELLIPTIC_REL_TOL * kappa2;
    let c_elliptic = minimum > tolerance;

    // cross-check against polynomial kernel growth
    let probe = fdn_probe(op, default_cutoff(op));
    if probe.stabilized != c_elliptic {
        return Err(AbvError::Inconsistency(format!(
            "C-ellipticity disagreement: symbol minimum {minimum:.3e} says {c_elliptic}, \
             kernel probe (stabilized={}, dimension={}) says {}",
            probe.stabilized, probe.dimension, probe.stabilized
        )));
    }
    Ok(ComplexEllipticity {
        c_elliptic,
        minimum,
        witness: if c_elliptic { None } else { Some((xi, eta)) },
    })
}

/// Orthonormal basis columns of `range(A[ξ])`.
fn range_basis(op: &Operator, xi: &[f64]) -> DMatrix<f64> {
    let sym = op.symbol(xi).expect("xi has length n");
    crate::operator::orthonormal_column_span(&sym, 1e-9)
}

/// Intersection of two subspaces given by orthonormal bases, by
/// principal angles: directions with cosine within `tol` of 1.
fn subspace_intersection(p: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if p.ncols() == 0 || q.ncols() == 0 {
        return DMatrix::zeros(p.nrows(), 0);
    }
    let m = p.transpose() * q;
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u");
    let mut cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s >= 1.0 - tol {
            cols.push(p * u.column(i).into_owned());
        }
    }
    let mut out = DMatrix::zeros(p.nrows(), cols.len());
    for (i, c) in cols.iter().enumerate() {
        out.set_column(i, c);
    }
    out
}

/// The cancelling property: `⋂_ξ range(A[ξ]) = {0}` over sampled unit
/// frequencies plus the coordinate directions.
pub fn check_cancelling(op: &Operator, samples: usize, seed: u64) -> Result<CancellingReport> {
    if samples < op.space_dim() + 1 {
        return Err(AbvError::InvalidInput(format!(
            "cancelling check needs at least n+1 = {} samples",
            op.space_dim() + 1
        )));
    }
    let real = check_r_elliptic(op, 8, seed)?;
    let warning = if real.r_elliptic {
        None
    } else {
        Some("operator is not R-elliptic; sampled ranges may vary in dimension".to_string())
    };
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for i in 0..op.space_dim() {
        let mut v = DVector::zeros(op.space_dim());
        v[i] = 1.0;
        dirs.push(v);
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    while dirs.len() < samples {
        let v = DVector::from_fn(op.space_dim(), |_, _| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        });
        if v.norm() > 1e-9 {
            dirs.push(v.normalize());
        }
    }
    let mut inter = range_basis(op, dirs[0].as_slice());
    for d in &dirs[1..] {
        if inter.ncols() == 0 {
            break;
        }
        let r = range_basis(op, d.as_slice());
        inter = subspace_intersection(&inter, &r, 1e-7);
    }
    Ok(CancellingReport {
        cancelling: inter.ncols() == 0,
        intersection_dim: inter.ncols(),
        intersection_basis: inter,
        warning,
    })
}

/// Full classification, as printed by the `classify` subcommand.
pub fn classify(op: &Operator, grid_density: usize, seed: u64) -> Result<EllipticityReport> {
    let real = check_r_elliptic(op, grid_density, seed)?;
    let complex = check_c_elliptic(op, grid_density, seed)?;
    let (cancelling, warning, inter_dim) = if real.r_elliptic {
        let c = check_cancelling(op, 2 * op.space_dim() + 8, seed)?;
        (Some(c.cancelling), c.warning, Some(c.intersection_dim))
    } else {
        (None, Some("cancelling not decided: operator is not R-elliptic".into()), None)
    };
    if complex.c_elliptic && !real.r_elliptic {
        return Err(AbvError::Inconsistency(
            "C-elliptic operator reported as not R-elliptic".into(),
        ));
    }
    Ok(EllipticityReport {
        r_elliptic: real.r_elliptic,
        c_elliptic: complex.c_elliptic,
        cancelling,
        kappa1: real.kappa1,
        kappa2: real.kappa2,
        witness_real: real.witness,
        witness_complex: complex.witness,
        tolerance: ELLIPTIC_REL_TOL * real.kappa2,
        cancelling_warning: warning,
        intersection_dim: inter_dim,
    })
}
