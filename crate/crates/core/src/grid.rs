//! Uniform cell-centered grids, sampled vector fields and the discrete
//! measures produced by applying an operator to them.

use crate::error::{AbvError, Result};
use crate::operator::Operator;

/// Uniform grid over an axis-aligned box. Cell `i` has its center at
/// `origin + (i + 1/2) h` per axis; indexing is row-major with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin: Vec<f64>,
    pub shape: Vec<usize>,
    pub h: f64,
}

impl Grid {
    pub fn new(origin: Vec<f64>, shape: Vec<usize>, h: f64) -> Result<Self> {
        if origin.len() != shape.len() || shape.is_empty() {
            return Err(AbvError::InvalidInput(
                "grid origin and shape must have equal, positive length".into(),
            ));
        }
        if h <= 0.0 {
            return Err(AbvError::InvalidInput(format!("grid spacing must be positive, got {h}")));
        }
        if shape.iter().any(|&s| s == 0) {
            return Err(AbvError::GridTooSmall(shape));
        }
        Ok(Grid { origin, shape, h })
    }

    /// Square grid covering `[lo, hi]^n` with `cells` per axis.
    pub fn square(n: usize, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Grid::new(vec![lo; n], vec![cells; n], (hi - lo) / cells as f64)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn num_cells(&self) -> usize {
        self.shape.iter().product()
    }

    /// n-volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (d, &i) in multi.iter().enumerate() {
            idx = idx * self.shape[d] + i;
        }
        idx
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            multi[d] = flat % self.shape[d];
            flat /= self.shape[d];
        }
        multi
    }

    pub fn cell_center(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(d, &i)| self.origin[d] + (i as f64 + 0.5) * self.h)
            .collect()
    }

    pub fn max_corner(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.shape)
            .map(|(&o, &s)| o + s as f64 * self.h)
            .collect()
    }

    /// True if the closed ball lies inside the grid box.
    pub fn contains_ball(&self, center: &[f64], radius: f64) -> bool {
        center.iter().enumerate().all(|(d, &c)| {
            c - radius >= self.origin[d] && c + radius <= self.origin[d] + self.shape[d] as f64 * self.h
        })
    }
}

/// Grid-sampled field with `components` values per cell, stored
/// cell-major.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub grid: Grid,
    pub components: usize,
    pub data: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        let len = grid.num_cells() * components;
        DiscreteField {
            grid,
            components,
            data: vec![0.0; len],
        }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, components: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut field = DiscreteField::zeros(grid, components);
        let ncells = field.grid.num_cells();
        for c in 0..ncells {
            let x = field.grid.cell_center(&field.grid.multi_index(c));
            let v = f(&x);
            debug_assert_eq!(v.len(), components);
            field.data[c * components..(c + 1) * components].copy_from_slice(&v);
        }
        field
    }

    pub fn value(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.components..(cell + 1) * self.components]
    }

    pub fn value_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.data[cell * self.components..(cell + 1) * self.components]
    }

    /// Multilinear interpolation between cell centers; coordinates are
    /// clamped to the center lattice, so evaluation is total on R^n.
    pub fn sample(&self, x: &[f64]) -> Vec<f64> {
        interpolate(&self.grid, self.components, &self.data, x)
    }

    pub fn l1_norm(&self) -> f64 {
        let vol = self.grid.cell_volume();
        (0..self.grid.num_cells())
            .map(|c| euclid(self.value(c)) * vol)
            .sum()
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.grid.num_cells())
            .map(|c| euclid(self.value(c)))
            .fold(0.0, f64::max)
    }
}

/// Euclidean norm of a slice.
pub fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Multilinear interpolation of cell-major data between cell centers.
/// Beyond the last center ring the boundary stencil extends linearly
/// (capped at two cells), so affine data stays exact up to the box
/// edge.
pub fn interpolate(grid: &Grid, components: usize, data: &[f64], x: &[f64]) -> Vec<f64> {
    let n = grid.dim();
    debug_assert_eq!(x.len(), n);
    let mut base = vec![0usize; n];
    let mut frac = vec![0.0; n];
    for d in 0..n {
        let t = (x[d] - grid.origin[d]) / grid.h - 0.5;
        if grid.shape[d] == 1 {
            base[d] = 0;
            frac[d] = 0.0;
            continue;
        }
        let i = t.floor().clamp(0.0, (grid.shape[d] - 2) as f64);
        base[d] = i as usize;
        frac[d] = (t - i).clamp(-2.0, 3.0);
    }
    let mut out = vec![0.0; components];
    let corners = 1usize << n;
    let mut multi = vec![0usize; n];
    for corner in 0..corners {
        let mut w = 1.0;
        for d in 0..n {
            if corner >> d & 1 == 1 {
                multi[d] = base[d] + 1;
                w *= frac[d];
            } else {
                multi[d] = base[d];
                w *= 1.0 - frac[d];
            }
        }
        if w == 0.0 {
            continue;
        }
        let cell = grid.flat_index(&multi);
        let v = &data[cell * components..(cell + 1) * components];
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += w * vi;
        }
    }
    out
}

/// One discretized surface element carrying singular mass: `amplitude`
/// is the K-vector density with respect to surface measure and
/// `weight` the measure of the element.
#[derive(Debug, Clone)]
pub struct SurfaceMass {
    pub position: Vec<f64>,
    pub normal: Vec<f64>,
    pub weight: f64,
    pub amplitude: Vec<f64>,
}

/// Discretization of the vector measure `A u`: an absolutely
/// continuous density per cell plus an optional singular part on
/// surface elements.
#[derive(Debug, Clone)]
pub struct MeasureField {
    pub grid: Grid,
    pub components: usize,
    pub density: Vec<f64>,
    pub singular: Vec<SurfaceMass>,
}

impl MeasureField {
    pub fn density_at(&self, cell: usize) -> &[f64] {
        &self.density[cell * self.components..(cell + 1) * self.components]
    }

    /// Total variation: bulk L1 mass plus singular mass.
    pub fn total_variation(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let bulk: f64 = (0..self.grid.num_cells())
            .map(|c| euclid(self.density_at(c)) * vol)
            .sum();
        let sing: f64 = self.singular.iter().map(|s| euclid(&s.amplitude) * s.weight).sum();
        bulk + sing
    }

    pub fn singular_mass(&self) -> f64 {
        self.singular.iter().map(|s| euclid(&s.amplitude) * s.weight).sum()
    }

    /// Multilinear interpolation of the density part.
    pub fn sample_density(&self, x: &[f64]) -> Vec<f64> {
        interpolate(&self.grid, self.components, &self.density, x)
    }

    /// Pairing `⟨A u, φ⟩` of the measure against a grid test field:
    /// bulk cells at cell volume plus singular elements at their
    /// surface weight (the test field is interpolated there).
    pub fn pair_with(&self, phi: &DiscreteField) -> f64 {
        assert_eq!(phi.components, self.components);
        let vol = self.grid.cell_volume();
        let mut acc = 0.0;
        for c in 0..self.grid.num_cells() {
            let d = self.density_at(c);
            let p = phi.value(c);
            acc += dot(d, p) * vol;
        }
        for s in &self.singular {
            let p = phi.sample(&s.position);
            acc += dot(&s.amplitude, &p) * s.weight;
        }
        acc
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum DifferenceScheme {
    /// Forward differences, one-sided at the upper grid edge.
    Forward,
    /// Backward differences, one-sided at the lower grid edge. This is
    /// the exact summation-by-parts adjoint of `Forward`.
    Backward,
    /// Centered differences, one-sided at both edges.
    Centered,
}

/// Applies the operator to a sampled field with the given difference
/// scheme. The result has no singular part.
pub fn apply_discrete_scheme(
    op: &Operator,
    u: &DiscreteField,
    scheme: DifferenceScheme,
) -> Result<MeasureField> {
    let grid = &u.grid;
    let n = grid.dim();
    if n != op.space_dim() {
        return Err(AbvError::DimensionMismatch {
            expected: op.space_dim(),
            got: n,
        });
    }
    if u.components != op.value_dim() {
        return Err(AbvError::DimensionMismatch {
            expected: op.value_dim(),
            got: u.components,
        });
    }
    if grid.shape.iter().any(|&s| s < 2) {
        return Err(AbvError::GridTooSmall(grid.shape.clone()));
    }
    let k = op.target_dim();
    let ncells = grid.num_cells();
    let mut density = vec![0.0; ncells * k];
    let h = grid.h;
    // strides of each axis in the flat index
    let mut strides = vec![1usize; n];
    for d in (0..n.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * grid.shape[d + 1];
    }
    let mut diff = vec![0.0; u.components];
    for c in 0..ncells {
        let multi = grid.multi_index(c);
        for alpha in 0..n {
            let i = multi[alpha];
            let s = strides[alpha];
            let (hi, lo, denom) = match scheme {
                DifferenceScheme::Forward => {
                    if i + 1 < grid.shape[alpha] {
                        (c + s, c, h)
                    } else {
                        (c, c - s, h)
                    }
                }
                DifferenceScheme::Backward => {
                    if i > 0 {
                        (c, c - s, h)
                    } else {
                        (c + s, c, h)
                    }
                }
                DifferenceScheme::Centered => {
                    if i == 0 {
                        (c + s, c, h)
                    } else if i + 1 == grid.shape[alpha] {
                        (c, c - s, h)
                    } else {
                        (c + s, c - s, 2.0 * h)
                    }
                }
            };
            let uhi = u.value(hi);
            let ulo = u.value(lo);
            for j in 0..u.components {
                diff[j] = (uhi[j] - ulo[j]) / denom;
            }
            let a = op.coeff(alpha);
            let drow = &mut density[c * k..(c + 1) * k];
            for row in 0..k {
                let mut acc = 0.0;
                for j in 0..u.components {
                    acc += a[(row, j)] * diff[j];
                }
                drow[row] += acc;
            }
        }
    }
    Ok(MeasureField {
        grid: grid.clone(),
        components: k,
        density,
        singular: Vec::new(),
    })
}

/// Forward-difference application of `A` (the default discretization).
pub fn apply_discrete(op: &Operator, u: &DiscreteField) -> Result<MeasureField> {
    apply_discrete_scheme(op, u, DifferenceScheme::Forward)
}

/// Backward-difference application of `A*`; paired with
/// [`apply_discrete`] it gives exact summation by parts on fields that
/// vanish near the grid edge.
pub fn apply_adjoint_discrete(op: &Operator, phi: &DiscreteField) -> Result<MeasureField> {
    apply_discrete_scheme(&op.adjoint(), phi, DifferenceScheme::Backward)
}

/// Lower bound on the total variation `|A u|` by duality: maximizes
/// `Σ ⟨u, A*φ⟩ h^n` over a finite family of test fields with
/// `|φ| ≤ 1` — seeded smooth bump combinations plus the sign pattern
/// of the discrete density, all zeroed on a one-cell collar.
pub fn total_variation_dual(
    op: &Operator,
    u: &DiscreteField,
    test_budget: usize,
    seed: u64,
) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let grid = &u.grid;
    let k = op.target_dim();
    let au = apply_discrete(op, u)?;
    let mut best: f64 = 0.0;

    // two-cell collar so the one-sided stencils at the grid edge see
    // only zeros and summation by parts is exact
    let collar = |grid: &Grid, multi: &[usize]| -> bool {
        multi
            .iter()
            .zip(&grid.shape)
            .any(|(&i, &s)| i < 2 || i + 2 >= s)
    };

    // the family is symmetric under φ → -φ, so the supremum sees |·|
    let evaluate = |phi: &DiscreteField| -> Result<f64> {
        let astar_phi = apply_adjoint_discrete(op, phi)?;
        let vol = grid.cell_volume();
        let mut acc = 0.0;
        for c in 0..grid.num_cells() {
            acc += dot(u.value(c), astar_phi.density_at(c)) * vol;
        }
        Ok(acc.abs())
    };

    // sign-pattern field of the discrete density
    let mut sign = DiscreteField::zeros(grid.clone(), k);
    for c in 0..grid.num_cells() {
        if collar(grid, &grid.multi_index(c)) {
            continue;
        }
        let d = au.density_at(c);
        let norm = euclid(d);
        if norm > 1e-14 {
            let out = sign.value_mut(c);
            for j in 0..k {
                out[j] = d[j] / norm;
            }
        }
    }
    best = best.max(evaluate(&sign)?);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lo = grid.origin.clone();
    let hi = grid.max_corner();
    for _ in 0..test_budget {
        let mut phi = DiscreteField::zeros(grid.clone(), k);
        let bumps: Vec<(Vec<f64>, f64, usize, f64)> = (0..3)
            .map(|_| {
                let p: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(&a, &b)| rng.gen_range(a..b))
                    .collect();
                let w = rng.gen_range(0.1..0.5) * (hi[0] - lo[0]);
                let dir = rng.gen_range(0..k);
                let c = rng.gen_range(-1.0..1.0);
                (p, w, dir, c)
            })
            .collect();
        let mut maxabs: f64 = 0.0;
        for c in 0..grid.num_cells() {
            let multi = grid.multi_index(c);
            if collar(grid, &multi) {
                continue;
            }
            let x = grid.cell_center(&multi);
            let out = phi.value_mut(c);
            for (p, w, dir, coef) in &bumps {
                let r2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (w * w);
                if r2 < 1.0 {
                    out[*dir] += coef * (1.0 - r2).powi(3);
                }
            }
            maxabs = maxabs.max(euclid(out));
        }
        if maxabs > 1.0 {
            for v in phi.data.iter_mut() {
                *v /= maxabs;
            }
        }
        best = best.max(evaluate(&phi)?);
    }
    Ok(best)
}
