//! Minimization of relaxed linear-growth functionals over discrete
//! fields: bulk integrand on the domain cells plus a recession-function
//! penalty on boundary jumps, solved by a first-order primal-dual
//! splitting.
//!
//! The saddle form stacks two dual blocks: one per cell for the bulk
//! integrand `f(x, A_h u)` and one per boundary element for the
//! 1-homogeneous jump penalty `f∞(x, (tr(u - u_0)) ⊗_A ν)`, extracted
//! half a cell inside the boundary. Cells outside the domain act as
//! free extension unknowns in the relaxed problem and are pinned to
//! the datum when the hard boundary flag is set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain, TraceRegion};
use crate::error::{AbvError, Result};
use crate::expr::FieldExpression;
use crate::grid::{euclid, DiscreteField, Grid};
use crate::nullspace::KernelBasis;
use crate::operator::Operator;
use crate::tolerances::{SOLVER_ITER_CAP, SOLVER_STALL_REL, SOLVER_STALL_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrandKind {
    /// `f(z) = |z|`
    Tv,
    /// `f(z) = sqrt(1 + |z|²)`
    Area,
    /// Sampled convex radial profile, linearly interpolated and
    /// extended by its last slope.
    Table,
}

#[derive(Debug, Clone)]
pub struct Integrand {
    pub kind: IntegrandKind,
    /// Radii and values of the table profile (empty for built-ins).
    pub table: Vec<(f64, f64)>,
    /// Optional continuous positive spatial weight `a(x)`.
    pub spatial_weight: Option<FieldExpression>,
    /// Growth constants `(c1, c2, c3)` with `c1|z| ≤ f ≤ c2|z| + c3`.
    pub growth: (f64, f64, f64),
}

impl Integrand {
    pub fn tv() -> Self {
        Integrand {
            kind: IntegrandKind::Tv,
            table: Vec::new(),
            spatial_weight: None,
            growth: (1.0, 1.0, 0.0),
        }
    }

    pub fn area() -> Self {
        Integrand {
            kind: IntegrandKind::Area,
            table: Vec::new(),
            spatial_weight: None,
            growth: (1.0, 1.0, 1.0),
        }
    }

    /// Builds a table integrand, validating convexity of the sampled
    /// segments and the linear growth bounds.
    pub fn table(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(AbvError::InvalidInput(
                "table integrand needs at least 3 samples".into(),
            ));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) || samples[0].0 != 0.0 {
            return Err(AbvError::InvalidInput(
                "table radii must start at 0 and increase".into(),
            ));
        }
        let slopes: Vec<f64> = samples
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        if slopes.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return Err(AbvError::InvalidInput(
                "table integrand is not convex (slopes decrease)".into(),
            ));
        }
        let last_slope = *slopes.last().unwrap();
        if last_slope <= 0.0 {
            return Err(AbvError::InvalidInput(
                "table integrand must grow at least linearly".into(),
            ));
        }
        let c1 = last_slope;
        let c2 = slopes.iter().cloned().fold(0.0f64, f64::max).max(last_slope);
        let c3 = samples.iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max) + 1.0;
        Ok(Integrand {
            kind: IntegrandKind::Table,
            table: samples,
            spatial_weight: None,
            growth: (c1, c2, c3),
        })
    }

    pub fn with_weight(mut self, weight: FieldExpression) -> Self {
        self.spatial_weight = Some(weight);
        self
    }

    pub fn weight_at(&self, x: &[f64]) -> f64 {
        match &self.spatial_weight {
            Some(w) => w.eval(x)[0],
            None => 1.0,
        }
    }

    /// Radial profile `f0(r)` (without the spatial weight).
    pub fn profile(&self, r: f64) -> f64 {
        match self.kind {
            IntegrandKind::Tv => r,
            IntegrandKind::Area => (1.0 + r * r).sqrt(),
            IntegrandKind::Table => {
                let t = &self.table;
                if r >= t.last().unwrap().0 {
                    let (r1, v1) = *t.last().unwrap();
                    let (r0, v0) = t[t.len() - 2];
                    let slope = (v1 - v0) / (r1 - r0);
                    v1 + slope * (r - r1)
                } else {
                    let i = t.partition_point(|(rr, _)| *rr <= r).max(1) - 1;
                    let (r0, v0) = t[i];
                    let (r1, v1) = t[i + 1];
                    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
                }
            }
        }
    }

    /// Asymptotic slope of the profile: the recession of `f0`.
    pub fn recession_slope(&self) -> f64 {
        match self.kind {
            IntegrandKind::Tv | IntegrandKind::Area => 1.0,
            IntegrandKind::Table => {
                let t = 4096.0;
                let r_ref = self.table.last().unwrap().0.max(1.0);
                (self.profile(t * r_ref) - self.profile(0.0)) / (t * r_ref)
            }
        }
    }

    pub fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        self.weight_at(x) * self.profile(euclid(z))
    }
}

#[derive(Debug, Clone)]
pub struct RecessionReport {
    pub value: f64,
    /// Whether the argument needed projection onto the effective range.
    pub projected: bool,
    /// `t` ladder and quotients `(f(x, tA) - f(x, 0))/t`.
    pub witness: Vec<(f64, f64)>,
}

/// Strong recession function `f∞(x, A)`, with the monotone quotient
/// witness. The argument is projected onto the effective range when it
/// lies outside.
pub fn recession(
    integrand: &Integrand,
    op: &Operator,
    x: &[f64],
    a_vec: &[f64],
) -> Result<RecessionReport> {
    let range = op.cone_and_range(4 * op.target_dim(), 9);
    let mut arg = a_vec.to_vec();
    let basis = &range.basis;
    // projection onto span(C_A)
    let mut proj = vec![0.0; arg.len()];
    for col in 0..basis.ncols() {
        let mut c = 0.0;
        for row in 0..basis.nrows() {
            c += basis[(row, col)] * arg[row];
        }
        for row in 0..basis.nrows() {
            proj[row] += c * basis[(row, col)];
        }
    }
    let residual: f64 = arg
        .iter()
        .zip(&proj)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        .sqrt();
    let projected = residual > 1e-10 * euclid(&arg).max(1e-30);
    if projected {
        arg = proj;
    }
    let a = integrand.weight_at(x);
    let r = euclid(&arg);
    let f0 = integrand.profile(0.0);
    let mut witness = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=12u32 {
        let t = 2.0f64.powi(k as i32);
        let q = a * (integrand.profile(t * r) - f0) / t;
        if q < prev - 1e-9 * prev.abs().max(1.0) {
            return Err(AbvError::Inconsistency(format!(
                "recession quotient decreased at t = {t}: {q} < {prev} (non-convex profile)"
            )));
        }
        prev = q;
        witness.push((t, q));
    }
    let value = match integrand.kind {
        IntegrandKind::Tv | IntegrandKind::Area => a * r,
        IntegrandKind::Table => a * integrand.recession_slope() * r,
    };
    Ok(RecessionReport {
        value,
        projected,
        witness,
    })
}

#[derive(Debug, Clone)]
pub struct SolverParams {
    pub max_iters: usize,
    pub stall_window: usize,
    pub stall_rel: f64,
    pub hard_boundary: bool,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_iters: SOLVER_ITER_CAP,
            stall_window: SOLVER_STALL_WINDOW,
            stall_rel: SOLVER_STALL_REL,
            hard_boundary: false,
            seed: 1,
        }
    }
}

pub struct DirichletProblem<'a> {
    pub op: &'a Operator,
    pub domain: &'a Domain,
    pub integrand: &'a Integrand,
    pub datum: &'a DiscreteField,
    pub params: SolverParams,
}

/// Grid for a Dirichlet problem: the domain bounding box padded by an
/// 8-cell margin. `cells` counts cells across the shortest domain
/// extent, so thin domains stay resolved in their thin direction and
/// the O(h) boundary-restriction error scales with the feature size.
pub fn solver_grid(dom: &Domain, cells: usize) -> Result<Grid> {
    let (lo, hi) = dom.bounding_box();
    let extent = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| b - a)
        .fold(f64::INFINITY, f64::min);
    let h = extent / cells as f64;
    let margin = 8.0 * h;
    let origin: Vec<f64> = lo.iter().map(|v| v - margin).collect();
    let shape: Vec<usize> = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| ((b - a + 2.0 * margin) / h).round() as usize)
        .collect();
    Grid::new(origin, shape, h)
}

/// Interpolation stencil `(cell, weight)` of a point, matching
/// [`crate::grid::interpolate`].
fn interpolation_stencil(grid: &Grid, x: &[f64]) -> Vec<(usize, f64)> {
    let n = grid.dim();
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
    let mut out = Vec::with_capacity(1 << n);
    let mut multi = vec![0usize; n];
    for corner in 0..(1usize << n) {
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
        if w != 0.0 {
            out.push((grid.flat_index(&multi), w));
        }
    }
    out
}

/// Discretized problem: cell weights, boundary elements with their
/// extraction stencils, and the stacked linear operator.
struct Discretization {
    grid: Grid,
    ncells: usize,
    value_dim: usize,
    target_dim: usize,
    axis_strides: Vec<usize>,
    /// Bulk quadrature weight per cell (cut-cell fraction × volume).
    bulk_weight: Vec<f64>,
    /// Spatial weight per cell.
    cell_a: Vec<f64>,
    boundary: Vec<BoundaryBlock>,
    /// Cells pinned to the datum (hard-boundary mode).
    pinned: Vec<bool>,
}

struct BoundaryBlock {
    stencil: Vec<(usize, f64)>,
    /// `A[ν]`, row-major K×N.
    symbol: Vec<f64>,
    /// Dual ball radius: surface weight × a(x) × recession slope.
    radius: f64,
}

fn cell_fraction(sdf: f64, h: f64) -> f64 {
    (0.5 - sdf / h).clamp(0.0, 1.0)
}

impl Discretization {
    fn new(problem: &DirichletProblem, grid: &Grid) -> Result<Self> {
        let op = problem.op;
        let dom = problem.domain;
        let n = grid.dim();
        let ncells = grid.num_cells();
        let h = grid.h;
        let vol = grid.cell_volume();
        let mut axis_strides = vec![1usize; n];
        for d in (0..n.saturating_sub(1)).rev() {
            axis_strides[d] = axis_strides[d + 1] * grid.shape[d + 1];
        }
        let mut bulk_weight = vec![0.0; ncells];
        let mut cell_a = vec![1.0; ncells];
        let mut pinned = vec![false; ncells];
        for c in 0..ncells {
            let x = grid.cell_center(&grid.multi_index(c));
            let sdf = dom.signed_distance(&x);
            bulk_weight[c] = cell_fraction(sdf, h) * vol;
            cell_a[c] = problem.integrand.weight_at(&x);
            if problem.params.hard_boundary && sdf >= -h {
                pinned[c] = true;
            }
        }
        let slope = problem.integrand.recession_slope();
        let mesh = dom.boundary_mesh(h);
        let mut boundary = Vec::with_capacity(mesh.len());
        for bp in &mesh {
            // one-sided restriction half a cell inside the boundary
            // point: a convex combination of interior values, so the
            // penalty cannot be gamed through extrapolation weights
            let inside: Vec<f64> = bp
                .position
                .iter()
                .zip(&bp.normal)
                .map(|(p, nu)| p - 0.5 * h * nu)
                .collect();
            let stencil = interpolation_stencil(grid, &inside);
            let sym = op.symbol(&bp.normal)?;
            let mut symbol = Vec::with_capacity(op.target_dim() * op.value_dim());
            for i in 0..op.target_dim() {
                for j in 0..op.value_dim() {
                    symbol.push(sym[(i, j)]);
                }
            }
            let a = problem.integrand.weight_at(&bp.position);
            boundary.push(BoundaryBlock {
                stencil,
                symbol,
                radius: bp.weight * a * slope,
            });
        }
        Ok(Discretization {
            grid: grid.clone(),
            ncells,
            value_dim: op.value_dim(),
            target_dim: op.target_dim(),
            axis_strides,
            bulk_weight,
            cell_a,
            boundary,
            pinned,
        })
    }

    fn bulk_len(&self) -> usize {
        self.ncells * self.target_dim
    }

    fn boundary_len(&self) -> usize {
        self.boundary.len() * self.target_dim
    }

    /// Forward differences `A_h u` into `out`, one-sided at the grid
    /// edge (matching `apply_discrete`).
    fn apply_bulk(&self, op: &Operator, u: &[f64], out: &mut [f64]) {
        let n = self.grid.dim();
        let h = self.grid.h;
        let nn = self.value_dim;
        let k = self.target_dim;
        out.fill(0.0);
        let mut multi = vec![0usize; n];
        for c in 0..self.ncells {
            // incremental multi-index
            if c > 0 {
                let mut d = n;
                loop {
                    d -= 1;
                    multi[d] += 1;
                    if multi[d] < self.grid.shape[d] {
                        break;
                    }
                    multi[d] = 0;
                    if d == 0 {
                        break;
                    }
                }
            }
            for alpha in 0..n {
                let s = self.axis_strides[alpha];
                let (hi, lo) = if multi[alpha] + 1 < self.grid.shape[alpha] {
                    (c + s, c)
                } else {
                    (c, c - s)
                };
                let a = op.coeff(alpha);
                for row in 0..k {
                    let mut acc = 0.0;
                    for j in 0..nn {
                        acc += a[(row, j)] * (u[hi * nn + j] - u[lo * nn + j]);
                    }
                    out[c * k + row] += acc / h;
                }
            }
        }
    }

    /// Exact transpose of [`Self::apply_bulk`].
    fn apply_bulk_transpose(&self, op: &Operator, y: &[f64], out: &mut [f64]) {
        let n = self.grid.dim();
        let h = self.grid.h;
        let nn = self.value_dim;
        let k = self.target_dim;
        out.fill(0.0);
        let mut multi = vec![0usize; n];
        for c in 0..self.ncells {
            if c > 0 {
                let mut d = n;
                loop {
                    d -= 1;
                    multi[d] += 1;
                    if multi[d] < self.grid.shape[d] {
                        break;
                    }
                    multi[d] = 0;
                    if d == 0 {
                        break;
                    }
                }
            }
            for alpha in 0..n {
                let s = self.axis_strides[alpha];
                let (hi, lo) = if multi[alpha] + 1 < self.grid.shape[alpha] {
                    (c + s, c)
                } else {
                    (c, c - s)
                };
                let a = op.coeff(alpha);
                for row in 0..k {
                    let yv = y[c * k + row] / h;
                    if yv == 0.0 {
                        continue;
                    }
                    for j in 0..nn {
                        let coeff = a[(row, j)];
                        if coeff != 0.0 {
                            out[hi * nn + j] += coeff * yv;
                            out[lo * nn + j] -= coeff * yv;
                        }
                    }
                }
            }
        }
    }

    /// Boundary extraction: `A[ν] (u - shift)` interpolated half a
    /// cell inside each boundary element.
    fn apply_boundary(&self, u: &[f64], shift: &[f64], out: &mut [f64]) {
        let nn = self.value_dim;
        let k = self.target_dim;
        let mut v = vec![0.0; nn];
        for (p, block) in self.boundary.iter().enumerate() {
            v.fill(0.0);
            for &(cell, w) in &block.stencil {
                for j in 0..nn {
                    v[j] += w * (u[cell * nn + j] - shift[cell * nn + j]);
                }
            }
            for row in 0..k {
                let mut acc = 0.0;
                for j in 0..nn {
                    acc += block.symbol[row * nn + j] * v[j];
                }
                out[p * k + row] = acc;
            }
        }
    }

    fn apply_boundary_transpose(&self, y: &[f64], out: &mut [f64]) {
        let nn = self.value_dim;
        let k = self.target_dim;
        for (p, block) in self.boundary.iter().enumerate() {
            for j in 0..nn {
                let mut acc = 0.0;
                for row in 0..k {
                    acc += block.symbol[row * nn + j] * y[p * k + row];
                }
                if acc == 0.0 {
                    continue;
                }
                for &(cell, w) in &block.stencil {
                    out[cell * nn + j] += w * acc;
                }
            }
        }
    }

    /// Estimates the stacked operator norm by power iteration.
    fn operator_norm(&self, op: &Operator, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ulen = self.ncells * self.value_dim;
        let mut u: Vec<f64> = (0..ulen).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zero_shift = vec![0.0; ulen];
        let mut ybulk = vec![0.0; self.bulk_len()];
        let mut ybnd = vec![0.0; self.boundary_len()];
        let mut back = vec![0.0; ulen];
        let mut back2 = vec![0.0; ulen];
        let mut lambda = 1.0;
        for _ in 0..40 {
            let scale = euclid(&u).max(1e-300);
            for v in u.iter_mut() {
                *v /= scale;
            }
            self.apply_bulk(op, &u, &mut ybulk);
            self.apply_boundary(&u, &zero_shift, &mut ybnd);
            self.apply_bulk_transpose(op, &ybulk, &mut back);
            back2.fill(0.0);
            self.apply_boundary_transpose(&ybnd, &mut back2);
            for (b, b2) in back.iter_mut().zip(&back2) {
                *b += b2;
            }
            lambda = euclid(&back);
            std::mem::swap(&mut u, &mut back);
        }
        lambda.sqrt().max(1e-12)
    }
}

/// Proximal map of `τ·w·f0(|·|)` in the radial variable: solves
/// `argmin_s (s - r)²/2 + τ w f0(s)`.
fn prox_primal_radial(integrand: &Integrand, tau_w: f64, r: f64) -> f64 {
    match integrand.kind {
        IntegrandKind::Tv => (r - tau_w).max(0.0),
        IntegrandKind::Area => {
            // ψ(s) = s - r + τw s/sqrt(1+s²), increasing in s
            let mut lo = 0.0;
            let mut hi = r;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let psi = mid - r + tau_w * mid / (1.0 + mid * mid).sqrt();
                if psi > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        }
        IntegrandKind::Table => {
            let slope = |s: f64| -> f64 {
                let eps = 1e-7 * (1.0 + s);
                (integrand.profile(s + eps) - integrand.profile(s)) / eps
            };
            let base = slope(0.0);
            if r <= tau_w * base {
                return 0.0;
            }
            let mut lo = 0.0;
            let mut hi = r;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let psi = mid - r + tau_w * slope(mid);
                if psi > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

/// Proximal map of `σ g*` for `g(y) = w f0(|y|)`, written on `y` in
/// place. Uses the ball projection for 1-homogeneous profiles and the
/// Moreau identity otherwise.
fn prox_dual_block(integrand: &Integrand, w: f64, sigma: f64, y: &mut [f64]) {
    if w <= 0.0 {
        y.fill(0.0);
        return;
    }
    match integrand.kind {
        IntegrandKind::Tv => {
            let norm = euclid(y);
            if norm > w {
                let s = w / norm;
                for v in y.iter_mut() {
                    *v *= s;
                }
            }
        }
        _ => {
            let norm = euclid(y);
            if norm == 0.0 {
                return;
            }
            let s = prox_primal_radial(integrand, w / sigma, norm / sigma);
            let shrink = (norm - sigma * s) / norm;
            for v in y.iter_mut() {
                *v *= shrink;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyBreakdown {
    pub bulk: f64,
    pub boundary_penalty: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct MinimizeResult {
    pub minimizer: DiscreteField,
    /// Best energy seen per iteration (nonincreasing).
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub energy: EnergyBreakdown,
}

fn energy_of(
    disc: &Discretization,
    op: &Operator,
    integrand: &Integrand,
    u: &[f64],
    datum: &[f64],
    scratch_bulk: &mut [f64],
    scratch_bnd: &mut [f64],
) -> EnergyBreakdown {
    disc.apply_bulk(op, u, scratch_bulk);
    let k = disc.target_dim;
    let mut bulk = 0.0;
    for c in 0..disc.ncells {
        let w = disc.bulk_weight[c];
        if w == 0.0 {
            continue;
        }
        let z = &scratch_bulk[c * k..(c + 1) * k];
        bulk += w * disc.cell_a[c] * integrand.profile(euclid(z));
    }
    disc.apply_boundary(u, datum, scratch_bnd);
    // block.radius carries weight · a(x) · recession slope
    let mut boundary_penalty = 0.0;
    for (p, block) in disc.boundary.iter().enumerate() {
        let z = &scratch_bnd[p * k..(p + 1) * k];
        boundary_penalty += block.radius * euclid(z);
    }
    EnergyBreakdown {
        bulk,
        boundary_penalty,
        total: bulk + boundary_penalty,
    }
}

/// Minimizes the relaxed functional by primal-dual splitting. The
/// energy trace records the best value seen, so it is nonincreasing by
/// construction while still reflecting convergence.
pub fn minimize(problem: &DirichletProblem) -> Result<MinimizeResult> {
    let op = problem.op;
    let integrand = problem.integrand;
    let grid = problem.datum.grid.clone();
    if problem.datum.components != op.value_dim() {
        return Err(AbvError::DimensionMismatch {
            expected: op.value_dim(),
            got: problem.datum.components,
        });
    }
    let disc = Discretization::new(problem, &grid)?;
    let ulen = disc.ncells * disc.value_dim;
    let datum = problem.datum.data.clone();

    let norm = disc.operator_norm(op, problem.params.seed);
    let tau = 0.9 / norm;
    let sigma = 0.9 / norm;

    let mut u = datum.clone();
    let mut u_bar = u.clone();
    let mut u_prev = vec![0.0; ulen];
    let mut phi = vec![0.0; disc.bulk_len()];
    let mut psi = vec![0.0; disc.boundary_len()];
    let mut ybulk = vec![0.0; disc.bulk_len()];
    let mut ybnd = vec![0.0; disc.boundary_len()];
    let mut grad = vec![0.0; ulen];
    let mut grad2 = vec![0.0; ulen];

    let k = disc.target_dim;
    let mut energy_trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_u = u.clone();
    let mut iterations = 0;

    for iter in 0..problem.params.max_iters {
        iterations = iter + 1;
        // dual ascent on both blocks
        disc.apply_bulk(op, &u_bar, &mut ybulk);
        for c in 0..disc.ncells {
            let w = disc.bulk_weight[c] * disc.cell_a[c];
            let block = &mut phi[c * k..(c + 1) * k];
            for (b, y) in block.iter_mut().zip(&ybulk[c * k..(c + 1) * k]) {
                *b += sigma * y;
            }
            prox_dual_block(integrand, w, sigma, block);
        }
        disc.apply_boundary(&u_bar, &datum, &mut ybnd);
        for (p, bblock) in disc.boundary.iter().enumerate() {
            let block = &mut psi[p * k..(p + 1) * k];
            for (b, y) in block.iter_mut().zip(&ybnd[p * k..(p + 1) * k]) {
                *b += sigma * y;
            }
            // 1-homogeneous penalty: dual ball projection
            let norm = euclid(block);
            if norm > bblock.radius {
                let s = bblock.radius / norm;
                for v in block.iter_mut() {
                    *v *= s;
                }
            }
        }
        // primal descent
        disc.apply_bulk_transpose(op, &phi, &mut grad);
        grad2.fill(0.0);
        disc.apply_boundary_transpose(&psi, &mut grad2);
        u_prev.copy_from_slice(&u);
        for i in 0..ulen {
            u[i] -= tau * (grad[i] + grad2[i]);
        }
        if problem.params.hard_boundary {
            let nn = disc.value_dim;
            for c in 0..disc.ncells {
                if disc.pinned[c] {
                    u[c * nn..(c + 1) * nn].copy_from_slice(&datum[c * nn..(c + 1) * nn]);
                }
            }
        }
        for i in 0..ulen {
            u_bar[i] = 2.0 * u[i] - u_prev[i];
        }

        let e = energy_of(&disc, op, integrand, &u, &datum, &mut ybulk, &mut ybnd);
        if e.total < best {
            best = e.total;
            best_u.copy_from_slice(&u);
        }
        energy_trace.push(best);

        let window = problem.params.stall_window;
        if iter > 10 + window {
            let before = energy_trace[iter - window];
            let rel = (before - best) / best.abs().max(1e-300);
            if rel < problem.params.stall_rel {
                break;
            }
        }
    }

    let energy = energy_of(&disc, op, integrand, &best_u, &datum, &mut ybulk, &mut ybnd);
    Ok(MinimizeResult {
        minimizer: DiscreteField {
            grid,
            components: disc.value_dim,
            data: best_u,
        },
        energy_trace,
        iterations,
        energy,
    })
}

/// Bulk + boundary-penalty energy of an arbitrary field, on the same
/// discretization the solver uses (the cheap one-sided boundary
/// restriction).
pub fn energy(problem: &DirichletProblem, u: &DiscreteField) -> Result<EnergyBreakdown> {
    let disc = Discretization::new(problem, &u.grid)?;
    let mut ybulk = vec![0.0; disc.bulk_len()];
    let mut ybnd = vec![0.0; disc.boundary_len()];
    Ok(energy_of(
        &disc,
        problem.op,
        problem.integrand,
        &u.data,
        &problem.datum.data,
        &mut ybulk,
        &mut ybnd,
    ))
}

/// Energy with the boundary term evaluated through the trace
/// construction instead of the one-sided restriction.
pub fn energy_with_trace(
    problem: &DirichletProblem,
    kernel: &KernelBasis,
    u: &DiscreteField,
) -> Result<EnergyBreakdown> {
    let disc = Discretization::new(problem, &u.grid)?;
    let mut ybulk = vec![0.0; disc.bulk_len()];
    disc.apply_bulk(problem.op, &u.data, &mut ybulk);
    let k = disc.target_dim;
    let mut bulk = 0.0;
    for c in 0..disc.ncells {
        let w = disc.bulk_weight[c];
        if w == 0.0 {
            continue;
        }
        let z = &ybulk[c * k..(c + 1) * k];
        bulk += w * disc.cell_a[c] * problem.integrand.profile(euclid(z));
    }

    let h = u.grid.h;
    let j_max = (1.0 / h).log2().floor() as i32;
    let j_min = problem.domain.coarsest_level() + 1;
    let mesh = problem
        .domain
        .boundary_mesh(crate::trace::mesh_spacing_for(j_max).max(h / 8.0));
    let mut diff = u.clone();
    for (d, g) in diff.data.iter_mut().zip(&problem.datum.data) {
        *d -= g;
    }
    let trace = crate::trace::compute_trace(kernel, problem.domain, &mesh, &diff, j_min, j_max)?;
    let slope = problem.integrand.recession_slope();
    let mut boundary_penalty = 0.0;
    for (bp, tr) in mesh.iter().zip(trace.boundary_values()) {
        let pair = problem.op.pairing(tr, &bp.normal)?;
        let a = problem.integrand.weight_at(&bp.position);
        boundary_penalty += bp.weight * a * slope * euclid(pair.as_slice());
    }
    Ok(EnergyBreakdown {
        bulk,
        boundary_penalty,
        total: bulk + boundary_penalty,
    })
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub relaxed: f64,
    pub constrained: f64,
    pub gap: f64,
    pub relaxed_iterations: usize,
    pub constrained_iterations: usize,
}

/// Solves the relaxed problem and the hard-boundary problem and
/// reports both minima; the gap closes as the grid refines.
pub fn consistency_gap(problem: &DirichletProblem) -> Result<ConsistencyReport> {
    let mut params = problem.params.clone();
    params.hard_boundary = false;
    let relaxed = minimize(&DirichletProblem {
        op: problem.op,
        domain: problem.domain,
        integrand: problem.integrand,
        datum: problem.datum,
        params: params.clone(),
    })?;
    params.hard_boundary = true;
    let constrained = minimize(&DirichletProblem {
        op: problem.op,
        domain: problem.domain,
        integrand: problem.integrand,
        datum: problem.datum,
        params,
    })?;
    Ok(ConsistencyReport {
        relaxed: relaxed.energy.total,
        constrained: constrained.energy.total,
        gap: constrained.energy.total - relaxed.energy.total,
        relaxed_iterations: relaxed.iterations,
        constrained_iterations: constrained.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct QuasiconvexityProbe {
    pub passed: bool,
    /// Most negative margin `∫ g(A + Aφ) - g(A)` found.
    pub worst_margin: f64,
    /// Trial index violating the inequality, if any.
    pub witness: Option<usize>,
}

/// Tests the quasiconvexity inequality `g(A) ≤ ∫ g(A + Aφ)` over
/// seeded trigonometric test fields vanishing on the cell boundary.
pub fn quasiconvexity_probe(
    op: &Operator,
    g: &dyn Fn(&[f64]) -> f64,
    a_vec: &[f64],
    trials: usize,
    seed: u64,
) -> Result<QuasiconvexityProbe> {
    if a_vec.len() != op.target_dim() {
        return Err(AbvError::DimensionMismatch {
            expected: op.target_dim(),
            got: a_vec.len(),
        });
    }
    let n = op.space_dim();
    let nn = op.value_dim();
    let k = op.target_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ga = g(a_vec);
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let quad = 24usize;
    let hq = 1.0 / quad as f64;
    for trial in 0..trials.max(1) {
        // φ_j(x) = Σ_m c_m Π_d sin(π k_d x_d): vanishes on the cell
        // boundary
        let modes: Vec<(usize, f64, Vec<f64>)> = (0..2 * nn)
            .map(|_| {
                let comp = rng.gen_range(0..nn);
                let amp = rng.gen_range(-0.8..0.8);
                let freq: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=3) as f64).collect();
                (comp, amp, freq)
            })
            .collect();
        let a_phi = |x: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for (comp, amp, freq) in &modes {
                for alpha in 0..n {
                    let mut dv = amp * freq[alpha] * std::f64::consts::PI;
                    for d in 0..n {
                        let arg = std::f64::consts::PI * freq[d] * x[d];
                        dv *= if d == alpha { arg.cos() } else { arg.sin() };
                    }
                    let acol = op.coeff(alpha);
                    for row in 0..k {
                        out[row] += acol[(row, *comp)] * dv;
                    }
                }
            }
        };
        let mut avg = 0.0;
        let mut buf = vec![0.0; k];
        let mut idx = vec![0usize; n];
        loop {
            let x: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) * hq).collect();
            a_phi(&x, &mut buf);
            let z: Vec<f64> = a_vec.iter().zip(&buf).map(|(a, b)| a + b).collect();
            avg += g(&z) * hq.powi(n as i32);
            let mut d = n;
            let mut done = false;
            loop {
                if d == 0 {
                    done = true;
                    break;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < quad {
                    break;
                }
                idx[d] = 0;
                if d == 0 {
                    done = true;
                    break;
                }
            }
            if done && idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        let margin = avg - ga;
        if margin < worst {
            worst = margin;
            if margin < -1e-6 * (1.0 + ga.abs()) {
                witness = Some(trial);
            }
        }
    }
    Ok(QuasiconvexityProbe {
        passed: witness.is_none(),
        worst_margin: worst,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{gradient, sym_gradient};

    fn make_datum(grid: &Grid, comps: usize, f: impl FnMut(&[f64]) -> Vec<f64>) -> DiscreteField {
        DiscreteField::from_fn(grid.clone(), comps, f)
    }

    #[test]
    fn recession_of_builtins_is_norm() {
        let op = gradient(2, 1).unwrap();
        for integrand in [Integrand::tv(), Integrand::area()] {
            let rep = recession(&integrand, &op, &[0.0, 0.0], &[3.0, 4.0]).unwrap();
            assert!((rep.value - 5.0).abs() < 1e-12);
            assert!(!rep.projected);
            // 1-homogeneity
            let rep2 = recession(&integrand, &op, &[0.0, 0.0], &[6.0, 8.0]).unwrap();
            assert!((rep2.value - 2.0 * rep.value).abs() < 1e-12);
        }
    }

    #[test]
    fn recession_of_table_profile() {
        // f(r) = r + 1/(1+r): recession slope 1, quotients increase
        let samples: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let r = i as f64 * 0.5;
                (r, r + 1.0 / (1.0 + r))
            })
            .collect();
        let integrand = Integrand::table(samples).unwrap();
        let op = gradient(2, 1).unwrap();
        let rep = recession(&integrand, &op, &[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((rep.value - 2.0).abs() < 0.01, "value {}", rep.value);
        for w in rep.witness.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-9, "{:?}", rep.witness);
        }
    }

    #[test]
    fn non_convex_table_is_rejected() {
        let samples = vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.5), (3.0, 4.0)];
        assert!(Integrand::table(samples).is_err());
    }

    #[test]
    fn constant_datum_returns_constant() {
        let op = gradient(2, 1).unwrap();
        let dom = Domain::hyper_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let grid = solver_grid(&dom, 48).unwrap();
        let datum = make_datum(&grid, 1, |_| vec![2.0]);
        let integrand = Integrand::area();
        let problem = DirichletProblem {
            op: &op,
            domain: &dom,
            integrand: &integrand,
            datum: &datum,
            params: SolverParams {
                max_iters: 400,
                ..Default::default()
            },
        };
        let result = minimize(&problem).unwrap();
        let mid = result.minimizer.sample(&[0.5, 0.5]);
        assert!((mid[0] - 2.0).abs() < 1e-6, "{mid:?}");
        // energy = f(0)·|Ω| = 1
        assert!(
            (result.energy.total - 1.0).abs() < 0.01,
            "{:?}",
            result.energy
        );
        assert!(result.energy.boundary_penalty.abs() < 1e-9);
    }

    #[test]
    fn kernel_datum_is_fixed_point() {
        let op = sym_gradient(2).unwrap();
        let dom = Domain::unit_disk();
        let grid = solver_grid(&dom, 64).unwrap();
        let datum = make_datum(&grid, 2, |x| vec![0.3 - 0.6 * x[1], 0.1 + 0.6 * x[0]]);
        let integrand = Integrand::area();
        let problem = DirichletProblem {
            op: &op,
            domain: &dom,
            integrand: &integrand,
            datum: &datum,
            params: SolverParams {
                max_iters: 300,
                ..Default::default()
            },
        };
        let result = minimize(&problem).unwrap();
        // the rigid motion is already pointwise optimal: A u0 = 0
        let mut max_dev: f64 = 0.0;
        for (a, b) in result.minimizer.data.iter().zip(&datum.data) {
            max_dev = max_dev.max((a - b).abs());
        }
        assert!(max_dev < 1e-6, "datum moved by {max_dev}");
        assert!(result.energy.boundary_penalty.abs() < 1e-9);
        let area = std::f64::consts::PI;
        assert!(
            (result.energy.total - area).abs() < 0.02 * area,
            "energy {:?}",
            result.energy
        );
    }

    #[test]
    fn least_gradient_box_energy_is_face_gap() {
        let op = gradient(2, 1).unwrap();
        let dom = Domain::hyper_box(vec![0.0, 0.0], vec![0.25, 1.0]).unwrap();
        let grid = solver_grid(&dom, 64).unwrap();
        let datum = make_datum(&grid, 1, |x| vec![4.0 * x[0].clamp(0.0, 0.25)]);
        let integrand = Integrand::tv();
        let problem = DirichletProblem {
            op: &op,
            domain: &dom,
            integrand: &integrand,
            datum: &datum,
            params: SolverParams {
                max_iters: 6000,
                ..Default::default()
            },
        };
        let result = minimize(&problem).unwrap();
        assert!(
            (result.energy.total - 1.0).abs() < 0.02,
            "energy {:?} after {} iters",
            result.energy,
            result.iterations
        );
        for w in result.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn consistency_gap_closes_for_kernel_datum() {
        let op = sym_gradient(2).unwrap();
        let dom = Domain::unit_disk();
        let grid = solver_grid(&dom, 48).unwrap();
        let datum = make_datum(&grid, 2, |x| vec![-0.4 * x[1], 0.4 * x[0]]);
        let integrand = Integrand::area();
        let problem = DirichletProblem {
            op: &op,
            domain: &dom,
            integrand: &integrand,
            datum: &datum,
            params: SolverParams {
                max_iters: 300,
                ..Default::default()
            },
        };
        let report = consistency_gap(&problem).unwrap();
        assert!(
            report.gap.abs() < 1e-6 * report.relaxed.max(1.0),
            "{report:?}"
        );
    }

    #[test]
    fn gauge_shift_by_kernel_element() {
        // shifting the datum by a rigid motion leaves the energy
        // unchanged (the shift is discretely exact for affine fields)
        let op = sym_gradient(2).unwrap();
        let dom = Domain::unit_disk();
        let grid = solver_grid(&dom, 48).unwrap();
        let base = make_datum(&grid, 2, |x| vec![0.2 * x[0] * x[0], 0.1 * x[1]]);
        let shifted = make_datum(&grid, 2, |x| {
            vec![0.2 * x[0] * x[0] + 1.0 - 0.5 * x[1], 0.1 * x[1] + 0.5 * x[0]]
        });
        let integrand = Integrand::tv();
        let params = SolverParams {
            max_iters: 800,
            ..Default::default()
        };
        let e1 = minimize(&DirichletProblem {
            op: &op,
            domain: &dom,
            integrand: &integrand,
            datum: &base,
            params: params.clone(),
        })
        .unwrap();
        let e2 = minimize(&DirichletProblem {
            op: &op,
            domain: &dom,
            integrand: &integrand,
            datum: &shifted,
            params,
        })
        .unwrap();
        let rel = (e1.energy.total - e2.energy.total).abs() / e1.energy.total.max(1e-12);
        assert!(
            rel < 1e-6,
            "energies {} vs {}",
            e1.energy.total,
            e2.energy.total
        );
    }

    #[test]
    fn quasiconvexity_convex_integrands_pass() {
        let op = gradient(2, 1).unwrap();
        let tv = |z: &[f64]| euclid(z);
        let area = |z: &[f64]| (1.0 + z.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let a = [0.4, -0.2];
        for g in [&tv as &dyn Fn(&[f64]) -> f64, &area] {
            let probe = quasiconvexity_probe(&op, g, &a, 20, 3).unwrap();
            assert!(probe.passed, "margin {}", probe.worst_margin);
        }
    }

    #[test]
    fn quasiconvexity_concave_control_fails() {
        let op = gradient(2, 1).unwrap();
        let concave = |z: &[f64]| {
            let r2: f64 = z.iter().map(|v| v * v).sum();
            -(r2.min(25.0))
        };
        let probe = quasiconvexity_probe(&op, &concave, &[0.1, 0.0], 50, 4).unwrap();
        assert!(!probe.passed);
        assert!(probe.witness.is_some());
        assert!(probe.worst_margin < 0.0);
    }

    #[test]
    fn integrand_profile_and_growth() {
        let tv = Integrand::tv();
        assert_eq!(tv.profile(3.0), 3.0);
        let area = Integrand::area();
        assert!((area.profile(0.0) - 1.0).abs() < 1e-15);
        assert!((area.recession_slope() - 1.0).abs() < 1e-12);
        for integrand in [&tv, &area] {
            let (c1, c2, c3) = integrand.growth;
            for i in 0..100 {
                let r = i as f64 * 0.3;
                let f = integrand.profile(r);
                assert!(c1 * r <= f + 1e-12);
                assert!(f <= c2 * r + c3 + 1e-12);
            }
        }
    }
}
