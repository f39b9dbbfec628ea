//! Boundary traces of discretized fields through dyadic covers: the
//! boundary-layer smoothing operators `T_j`, their limits on the
//! boundary mesh, Gauss-Green and gluing verification, zero-trace
//! checks and the no-trace counterexamples.

use std::rc::Rc;

use crate::domain::{AnnulusRegion, BoundaryPoint, Domain, TraceRegion};
use crate::error::{AbvError, Result};
use crate::grid::{
    apply_discrete, apply_discrete_scheme, dot, euclid, DifferenceScheme, DiscreteField, Grid,
    MeasureField, SurfaceMass,
};
use crate::nullspace::KernelBasis;
use crate::operator::Operator;
use crate::poly::PolyVectorField;
use crate::projection::{BallNodes, KernelProjector};
use crate::tolerances::TRACE_CONVERGED_REL;
use crate::whitney::{build_cover, WhitneyCover};

/// The boundary-layer smoothing operator `T_j` applied to one field:
/// keeps the cover and, for every cover ball, the kernel projection of
/// the field over the reflected ball (stored in local coordinates).
pub struct TjOperator {
    pub cover: WhitneyCover,
    projections: Vec<PolyVectorField>,
    pub components: usize,
}

/// Builds `T_j u`: projections of `u` onto the kernel over every
/// reflected ball of the level-`j` cover.
pub fn build_tj(
    kernel: &KernelBasis,
    region: &dyn TraceRegion,
    u: &DiscreteField,
    j: i32,
) -> Result<TjOperator> {
    if kernel.fields.is_empty() {
        return Err(AbvError::InvalidInput(
            "kernel basis is empty; compute it before applying T_j".into(),
        ));
    }
    let cover = build_cover(region, j)?;
    let n = region.dim();
    let h = u.grid.h;
    // quadrature resolution tied to the field grid, clamped
    let resolution = ((cover.radius / h).ceil() as usize).clamp(4, 24);
    let quad = BallNodes::midpoint(n, resolution);
    let mut projections = Vec::with_capacity(cover.balls.len());
    for ball in &cover.balls {
        let projector = KernelProjector::with_quadrature(
            kernel,
            ball.reflected_center.clone(),
            ball.reflected_radius,
            Rc::clone(&quad),
        )?;
        let coeffs = projector.coefficients_fn(|x| u.sample(x));
        projections.push(projector.combine_local(&coeffs));
    }
    Ok(TjOperator {
        cover,
        projections,
        components: u.components,
    })
}

impl TjOperator {
    /// The projection average `Σ_k η_{j,k}(x) Π_{j,k} u(x)`, or `None`
    /// away from the cover.
    pub fn smoothed_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let parts = self.cover.partition_at(x);
        if parts.is_empty() {
            return None;
        }
        let mut out = vec![0.0; self.components];
        let mut local = vec![0.0; x.len()];
        for (bi, eta) in parts {
            let ball = &self.cover.balls[bi];
            for d in 0..x.len() {
                local[d] = (x[d] - ball.reflected_center[d]) / ball.reflected_radius;
            }
            let v = self.projections[bi].eval(&local);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += eta * vi;
            }
        }
        Some(out)
    }

    /// Full blend `(1 - ρ_j) u + ρ_j Σ_k η_{j,k} Π_{j,k} u` on the
    /// grid of `u`.
    pub fn apply(&self, region: &dyn TraceRegion, u: &DiscreteField) -> DiscreteField {
        let mut out = u.clone();
        let ncells = u.grid.num_cells();
        for c in 0..ncells {
            let x = u.grid.cell_center(&u.grid.multi_index(c));
            let sdf = region.signed_distance(&x);
            if sdf <= -self.cover.strip_width {
                continue;
            }
            let rho = self.cover.rho_from_sdf(sdf);
            if rho == 0.0 {
                continue;
            }
            if let Some(sm) = self.smoothed_at(&x) {
                let uv = out.value_mut(c);
                for (j, s) in sm.iter().enumerate() {
                    uv[j] = (1.0 - rho) * uv[j] + rho * s;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TraceResult {
    pub levels: Vec<i32>,
    /// Trace values per level, per mesh point.
    pub values_by_level: Vec<Vec<Vec<f64>>>,
    /// `‖tr T_{j+1} u - tr T_j u‖_{L¹(∂Ω)}` between consecutive levels.
    pub per_level_l1_diffs: Vec<f64>,
    pub converged: bool,
}

impl TraceResult {
    pub fn boundary_values(&self) -> &Vec<Vec<f64>> {
        self.values_by_level.last().expect("at least one level")
    }

    pub fn boundary_l1(&self, mesh: &[BoundaryPoint]) -> f64 {
        self.boundary_values()
            .iter()
            .zip(mesh)
            .map(|(v, bp)| euclid(v) * bp.weight)
            .sum()
    }

    /// Convergence at a caller-chosen relative tolerance (the `converged`
    /// field uses the default). The last Cauchy difference is compared
    /// against the trace L¹ norm.
    pub fn converged_at(&self, rel_tol: f64, mesh: &[BoundaryPoint]) -> bool {
        match self.per_level_l1_diffs.last() {
            Some(&last) => last <= rel_tol * self.boundary_l1(mesh).max(1e-9),
            None => true,
        }
    }
}

/// Evaluates the trace of `u` on the mesh as the limit of
/// `trace(T_j u)` across the level range; on the boundary `ρ_j = 1`,
/// so the values come entirely from the projection average.
pub fn compute_trace(
    kernel: &KernelBasis,
    region: &dyn TraceRegion,
    mesh: &[BoundaryPoint],
    u: &DiscreteField,
    j_min: i32,
    j_max: i32,
) -> Result<TraceResult> {
    let h = u.grid.h;
    if 2.0f64.powi(-j_max) < h * (1.0 - 1e-12) {
        return Err(AbvError::InvalidInput(format!(
            "j_max = {j_max} is too fine for the grid (2^-j must stay >= h = {h:.3e})"
        )));
    }
    let j_min = j_min.max(region.coarsest_level());
    if j_min > j_max {
        return Err(AbvError::InvalidInput(format!(
            "empty level range: j_min {j_min} > j_max {j_max}"
        )));
    }
    let mut levels = Vec::new();
    let mut values_by_level = Vec::new();
    for j in j_min..=j_max {
        let tj = build_tj(kernel, region, u, j)?;
        let mut values = Vec::with_capacity(mesh.len());
        for bp in mesh {
            let v = tj.smoothed_at(&bp.position).ok_or_else(|| {
                AbvError::Inconsistency(format!(
                    "boundary point {:?} not covered at level {j}",
                    bp.position
                ))
            })?;
            values.push(v);
        }
        levels.push(j);
        values_by_level.push(values);
    }
    let mut per_level_l1_diffs = Vec::new();
    for w in values_by_level.windows(2) {
        let diff: f64 = w[0]
            .iter()
            .zip(&w[1])
            .zip(mesh)
            .map(|((a, b), bp)| {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                euclid(&d) * bp.weight
            })
            .sum();
        per_level_l1_diffs.push(diff);
    }
    let trace_l1: f64 = values_by_level
        .last()
        .unwrap()
        .iter()
        .zip(mesh)
        .map(|(v, bp)| euclid(v) * bp.weight)
        .sum();
    let converged = match per_level_l1_diffs.last() {
        Some(&last) => last <= TRACE_CONVERGED_REL * trace_l1.max(1e-9),
        None => true,
    };
    Ok(TraceResult {
        levels,
        values_by_level,
        per_level_l1_diffs,
        converged,
    })
}

/// Default boundary mesh spacing for a level range: at least 16 points
/// per dyadic ball at the finest level.
pub fn mesh_spacing_for(j_max: i32) -> f64 {
    2.0f64.powi(-j_max) / 128.0
}

/// Cut-cell quadrature weight of a cell against the region: full for
/// interior cells, linear ramp across the boundary band.
fn cell_fraction(sdf: f64, h: f64) -> f64 {
    (0.5 - sdf / h).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct GaussGreenReport {
    /// `∫_Ω A u · φ dx`
    pub bulk_forward: f64,
    /// `∫_Ω u · A* φ dx`
    pub bulk_adjoint: f64,
    /// `∫_∂Ω (tr u ⊗_A ν) · φ dH^{n-1}`
    pub boundary_term: f64,
    pub residual: f64,
    pub trace_levels: Vec<i32>,
}

/// Measures the Gauss-Green defect
/// `|∫ Au·φ + ∫ u·A*φ - ∫ (tr u ⊗_A ν)·φ|`.
pub fn gauss_green_residual(
    op: &Operator,
    kernel: &KernelBasis,
    dom: &Domain,
    u: &DiscreteField,
    phi: &DiscreteField,
) -> Result<GaussGreenReport> {
    let h = u.grid.h;
    let j_min = dom.coarsest_level() + 1;
    let j_max = (1.0 / h).log2().floor() as i32;
    let mesh = dom.boundary_mesh(mesh_spacing_for(j_max).max(h / 8.0));
    let trace = compute_trace(kernel, dom, &mesh, u, j_min, j_max)?;
    // the Cauchy floor scales with the grid: O(h) discretization error
    let tol = TRACE_CONVERGED_REL.max(h / 2.0);
    if !trace.converged_at(tol, &mesh) {
        return Err(AbvError::TraceNotConverged {
            last_diff: *trace.per_level_l1_diffs.last().unwrap_or(&f64::NAN),
            tol,
        });
    }

    let au = apply_discrete(op, u)?;
    let astar_phi = apply_discrete_scheme(&op.adjoint(), phi, DifferenceScheme::Forward)?;
    let vol = u.grid.cell_volume();
    let mut bulk_forward = 0.0;
    let mut bulk_adjoint = 0.0;
    for c in 0..u.grid.num_cells() {
        let x = u.grid.cell_center(&u.grid.multi_index(c));
        let frac = cell_fraction(dom.signed_distance(&x), h);
        if frac == 0.0 {
            continue;
        }
        bulk_forward += dot(au.density_at(c), phi.value(c)) * vol * frac;
        bulk_adjoint += dot(u.value(c), astar_phi.density_at(c)) * vol * frac;
    }

    let mut boundary_term = 0.0;
    for (bp, tr) in mesh.iter().zip(trace.boundary_values()) {
        let pair = op.pairing(tr, &bp.normal)?;
        let phival = phi.sample(&bp.position);
        boundary_term += dot(pair.as_slice(), &phival) * bp.weight;
    }

    let residual = (bulk_forward + bulk_adjoint - boundary_term).abs();
    Ok(GaussGreenReport {
        bulk_forward,
        bulk_adjoint,
        boundary_term,
        residual,
        trace_levels: trace.levels,
    })
}

#[derive(Debug)]
pub struct GluingResult {
    pub measure: MeasureField,
    /// Interior trace of the inner field on the interface mesh.
    pub trace_inner: Vec<Vec<f64>>,
    /// Exterior trace of the outer field on the interface mesh.
    pub trace_outer: Vec<Vec<f64>>,
    pub interface_mesh: Vec<BoundaryPoint>,
}

/// `A w` for the glued field `w = u` on the inner domain, `v` outside:
/// piecewise densities plus the singular interface part
/// `(tr⁺(v) - tr⁻(u)) ⊗_A ν` per surface element (`ν` the outer
/// normal of the inner domain).
pub fn gluing_jump(
    op: &Operator,
    kernel: &KernelBasis,
    dom_inner: &Domain,
    dom_outer: &Domain,
    u: &DiscreteField,
    v: &DiscreteField,
) -> Result<GluingResult> {
    let h = u.grid.h;
    let j_max = (1.0 / h).log2().floor() as i32;
    let j_min = dom_inner.coarsest_level() + 1;
    let spacing = mesh_spacing_for(j_max).max(h / 8.0);
    let mesh = dom_inner.boundary_mesh(spacing);

    let tr_inner = compute_trace(kernel, dom_inner, &mesh, u, j_min, j_max)?;
    let annulus = AnnulusRegion {
        outer: dom_outer.clone(),
        inner: dom_inner.clone(),
    };
    let j_min_ann = annulus.coarsest_level();
    let tr_outer = compute_trace(kernel, &annulus, &mesh, v, j_min_ann.max(j_min), j_max)?;
    let tol = TRACE_CONVERGED_REL.max(h / 2.0);
    if !tr_inner.converged_at(tol, &mesh) || !tr_outer.converged_at(tol, &mesh) {
        return Err(AbvError::TraceNotConverged {
            last_diff: tr_inner
                .per_level_l1_diffs
                .last()
                .copied()
                .unwrap_or(f64::NAN)
                .max(tr_outer.per_level_l1_diffs.last().copied().unwrap_or(f64::NAN)),
            tol,
        });
    }

    let au = apply_discrete(op, u)?;
    let av = apply_discrete(op, v)?;
    let k = op.target_dim();
    let mut density = vec![0.0; u.grid.num_cells() * k];
    for c in 0..u.grid.num_cells() {
        let x = u.grid.cell_center(&u.grid.multi_index(c));
        let src = if dom_inner.signed_distance(&x) < 0.0 {
            au.density_at(c)
        } else {
            av.density_at(c)
        };
        density[c * k..(c + 1) * k].copy_from_slice(src);
    }

    let mut singular = Vec::with_capacity(mesh.len());
    for (i, bp) in mesh.iter().enumerate() {
        let jump: Vec<f64> = tr_outer.boundary_values()[i]
            .iter()
            .zip(&tr_inner.boundary_values()[i])
            .map(|(outer, inner)| outer - inner)
            .collect();
        let amplitude = op.pairing(&jump, &bp.normal)?;
        singular.push(SurfaceMass {
            position: bp.position.clone(),
            normal: bp.normal.clone(),
            weight: bp.weight,
            amplitude: amplitude.as_slice().to_vec(),
        });
    }

    Ok(GluingResult {
        measure: MeasureField {
            grid: u.grid.clone(),
            components: k,
            density,
            singular,
        },
        trace_inner: tr_inner.values_by_level.last().unwrap().clone(),
        trace_outer: tr_outer.values_by_level.last().unwrap().clone(),
        interface_mesh: mesh,
    })
}

/// Pairing defect of a glued measure against the distributional
/// identity: `|⟨A w, φ⟩ + Σ ⟨w, A*φ⟩ h^n|` for a test field vanishing
/// near the grid edge.
pub fn gluing_dual_defect(
    op: &Operator,
    measure: &MeasureField,
    w: &DiscreteField,
    phi: &DiscreteField,
) -> Result<f64> {
    let astar_phi = apply_discrete_scheme(&op.adjoint(), phi, DifferenceScheme::Backward)?;
    let vol = w.grid.cell_volume();
    let mut adj = 0.0;
    for c in 0..w.grid.num_cells() {
        adj += dot(w.value(c), astar_phi.density_at(c)) * vol;
    }
    Ok((measure.pair_with(phi) + adj).abs())
}

#[derive(Debug, Clone)]
pub struct ZeroTraceReport {
    pub zero_trace: bool,
    pub boundary_l1: f64,
    pub glue_singular_mass: f64,
    pub threshold: f64,
}

/// Decides whether `u` has zero trace on the domain boundary, and
/// cross-checks the verdict by gluing against the zero exterior field.
pub fn zero_trace_check(
    op: &Operator,
    kernel: &KernelBasis,
    dom: &Domain,
    u: &DiscreteField,
) -> Result<ZeroTraceReport> {
    let h = u.grid.h;
    let j_max = (1.0 / h).log2().floor() as i32;
    let j_min = dom.coarsest_level() + 1;
    let mesh = dom.boundary_mesh(mesh_spacing_for(j_max).max(h / 8.0));
    let trace = compute_trace(kernel, dom, &mesh, u, j_min, j_max)?;
    let boundary_l1 = trace.boundary_l1(&mesh);

    // cross-check: singular interface mass of A(χ_Ω u)
    let mut glue_singular_mass = 0.0;
    for (bp, tr) in mesh.iter().zip(trace.boundary_values()) {
        let jump: Vec<f64> = tr.iter().map(|t| -t).collect();
        let amp = op.pairing(&jump, &bp.normal)?;
        glue_singular_mass += euclid(amp.as_slice()) * bp.weight;
    }

    let scale = u.max_norm().max(1e-30);
    let threshold = 0.05 * dom.perimeter() * scale;
    let verdict_trace = boundary_l1 < threshold;
    // symbol norms are bounded between kappa1 and kappa2, so the mass
    // check uses the same threshold scaled by the symbol size
    let kappa_scale = {
        let mut k2: f64 = 0.0;
        for alpha in 0..op.space_dim() {
            k2 = k2.max(op.coeff(alpha).norm());
        }
        k2.max(1e-30)
    };
    let verdict_glue = glue_singular_mass < threshold * kappa_scale;
    if verdict_trace != verdict_glue {
        return Err(AbvError::Inconsistency(format!(
            "zero-trace verdicts disagree: boundary L1 {boundary_l1:.3e} vs singular mass {glue_singular_mass:.3e} (threshold {threshold:.3e})"
        )));
    }
    Ok(ZeroTraceReport {
        zero_trace: verdict_trace,
        boundary_l1,
        glue_singular_mass,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterexampleVariant {
    /// R-elliptic but not C-elliptic: trace-free symmetric gradient in
    /// the plane with the holomorphic field of `1/z`.
    RNotC,
    /// Not even R-elliptic: a single-direction derivative with the
    /// profile `(|x_2| + x_1^2)^{-3/4}`.
    NotRElliptic,
}

#[derive(Debug, Clone)]
pub struct CounterexampleRow {
    pub epsilon: f64,
    /// `‖h_f‖_{L¹}` over the unit ball minus the ε-ball.
    pub interior_l1: f64,
    /// Discrete `‖A h_f‖_{L¹}` there (centered differences).
    pub interior_a_l1: f64,
    /// `‖h_f‖_{L¹}` over the hyperplane section minus the ε-segment.
    pub line_l1: f64,
}

/// Runs the no-trace counterexample: a field of bounded A-variation
/// whose restriction to a hyperplane through the singularity is not
/// integrable. Reports, per cutoff ε, the interior mass, the interior
/// A-variation and the diverging line mass.
pub fn no_trace_counterexample(
    variant: CounterexampleVariant,
    epsilons: &[f64],
    cells: usize,
) -> Result<Vec<CounterexampleRow>> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons[0] >= 1.0 {
        return Err(AbvError::InvalidInput(
            "epsilon list must be decreasing and inside (0, 1)".into(),
        ));
    }
    if epsilons.last().unwrap() <= &0.0 {
        return Err(AbvError::InvalidInput("epsilons must be positive".into()));
    }
    let (op, field): (Operator, Box<dyn Fn(&[f64]) -> Vec<f64>>) = match variant {
        CounterexampleVariant::RNotC => {
            let op = crate::operator::dev_sym_gradient(2)?;
            // σ ∘ f ∘ τ with f(z) = 1/z, ξ = (1, i), η = (1, -i)
            let f = |x: &[f64]| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                if r2 == 0.0 {
                    return vec![0.0, 0.0];
                }
                vec![x[0] / r2, -x[1] / r2]
            };
            (op, Box::new(f))
        }
        CounterexampleVariant::NotRElliptic => {
            let a1 = nalgebra::DMatrix::from_row_slice(1, 1, &[1.0]);
            let a2 = nalgebra::DMatrix::zeros(1, 1);
            let op = Operator::new(vec![a1, a2])?;
            // A[e2] = 0: compose the profile with the swapped frame
            let f = |x: &[f64]| {
                let s = x[1].abs() + x[0] * x[0];
                if s == 0.0 {
                    return vec![0.0];
                }
                vec![s.powf(-0.75)]
            };
            (op, Box::new(f))
        }
    };

    let grid = Grid::square(2, -1.0, 1.0, cells)?;
    let u = DiscreteField::from_fn(grid.clone(), op.value_dim(), |x| field(x));
    let au = apply_discrete_scheme(&op, &u, DifferenceScheme::Centered)?;
    let vol = grid.cell_volume();
    let h = grid.h;

    let mut rows = Vec::new();
    for &eps in epsilons {
        let mut interior_l1 = 0.0;
        let mut interior_a_l1 = 0.0;
        for c in 0..grid.num_cells() {
            let x = grid.cell_center(&grid.multi_index(c));
            let r = euclid(&x);
            if r <= eps || r >= 1.0 {
                continue;
            }
            interior_l1 += euclid(u.value(c)) * vol;
            // keep the centered stencil clear of the cutoff ball
            if r > eps + 2.0 * h {
                interior_a_l1 += euclid(au.density_at(c)) * vol;
            }
        }
        // line integral over the hyperplane section, log-composite rule
        let line_value = |t: f64| -> f64 {
            match variant {
                CounterexampleVariant::RNotC => 1.0 / t,
                CounterexampleVariant::NotRElliptic => t.powf(-1.5),
            }
        };
        let mut line_l1 = 0.0;
        let decades = (1.0 / eps).log10();
        let segments = (decades.ceil() as usize).max(1) * 4;
        let log_lo = eps.ln();
        let log_hi = 0.0f64;
        let m = 4096;
        for s in 0..segments {
            let a = log_lo + (log_hi - log_lo) * s as f64 / segments as f64;
            let b = log_lo + (log_hi - log_lo) * (s + 1) as f64 / segments as f64;
            let step = (b - a) / m as f64;
            for i in 0..m {
                let lt = a + (i as f64 + 0.5) * step;
                let t = lt.exp();
                line_l1 += line_value(t) * t * step;
            }
        }
        line_l1 *= 2.0; // both sides of the singular point
        rows.push(CounterexampleRow {
            epsilon: eps,
            interior_l1,
            interior_a_l1,
            line_l1,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nullspace::kernel_basis;
    use crate::operator::{dev_sym_gradient, gradient, sym_gradient};

    fn disk_grid(cells: usize) -> Grid {
        Grid::square(2, -1.0, 1.0, cells).unwrap()
    }

    #[test]
    fn tj_fixes_constants_exactly() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let dom = Domain::unit_disk();
        let u = DiscreteField::from_fn(disk_grid(64), 1, |_| vec![2.5]);
        let tj = build_tj(&kb, &dom, &u, 4).unwrap();
        let out = tj.apply(&dom, &u);
        for c in 0..u.grid.num_cells() {
            assert!((out.value(c)[0] - 2.5).abs() < 1e-12);
        }
        // boundary values are exactly the constant too
        for bp in dom.boundary_mesh(0.05) {
            let v = tj.smoothed_at(&bp.position).unwrap();
            assert!((v[0] - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn tj_fixes_kernel_fields_of_symgrad() {
        let op = sym_gradient(2).unwrap();
        let kb = kernel_basis(&op, 3);
        let dom = Domain::unit_disk();
        let u = DiscreteField::from_fn(disk_grid(96), 2, |x| {
            vec![0.7 - 1.3 * x[1], -0.2 + 1.3 * x[0]]
        });
        for j in 4..=5 {
            let tj = build_tj(&kb, &dom, &u, j).unwrap();
            let out = tj.apply(&dom, &u);
            for c in 0..u.grid.num_cells() {
                let x = u.grid.cell_center(&u.grid.multi_index(c));
                if dom.signed_distance(&x) > 0.0 {
                    continue;
                }
                let expect = [0.7 - 1.3 * x[1], -0.2 + 1.3 * x[0]];
                for (a, b) in out.value(c).iter().zip(expect) {
                    assert!((a - b).abs() < 1e-6, "at {x:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn tj_converges_to_smooth_field_in_l1() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let dom = Domain::unit_disk();
        let u = DiscreteField::from_fn(disk_grid(128), 1, |x| vec![(2.0 * x[0]).sin() + x[1]]);
        let mut errs = Vec::new();
        for j in 3..=6 {
            let tj = build_tj(&kb, &dom, &u, j).unwrap();
            let out = tj.apply(&dom, &u);
            let vol = u.grid.cell_volume();
            let mut err = 0.0;
            for c in 0..u.grid.num_cells() {
                let x = u.grid.cell_center(&u.grid.multi_index(c));
                if dom.signed_distance(&x) < 0.0 {
                    err += (out.value(c)[0] - u.value(c)[0]).abs() * vol;
                }
            }
            errs.push(err);
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "not decreasing: {errs:?}");
        assert!(errs.last().unwrap() < &1e-2);
    }

    #[test]
    fn trace_of_linear_field_matches_cosine() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let dom = Domain::unit_disk();
        let u = DiscreteField::from_fn(disk_grid(128), 1, |x| vec![x[0]]);
        let mesh = dom.boundary_mesh(mesh_spacing_for(6));
        let trace = compute_trace(&kb, &dom, &mesh, &u, 4, 6).unwrap();
        // boundary restriction of x1 on the unit circle is cos θ
        let mut sup: f64 = 0.0;
        let mut l1 = 0.0;
        for (bp, v) in mesh.iter().zip(trace.boundary_values()) {
            let err = (v[0] - bp.position[0]).abs();
            sup = sup.max(err);
            l1 += err * bp.weight;
        }
        assert!(l1 < 2e-2, "L1 error {l1}");
        assert!(sup < 2e-2, "sup error {sup}");
        // Cauchy differences decrease
        let d = &trace.per_level_l1_diffs;
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    }

    #[test]
    fn trace_rejects_too_fine_levels() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let dom = Domain::unit_disk();
        let u = DiscreteField::from_fn(disk_grid(32), 1, |x| vec![x[0]]);
        let mesh = dom.boundary_mesh(0.05);
        // h = 1/16, so j_max = 5 needs 2^-5 ≥ 1/16: false
        assert!(compute_trace(&kb, &dom, &mesh, &u, 4, 5).is_err());
    }

    #[test]
    fn gauss_green_residual_small_for_linear_pair() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let dom = Domain::unit_disk();
        let grid = disk_grid(128);
        let u = DiscreteField::from_fn(grid.clone(), 1, |x| vec![x[0]]);
        let phi = DiscreteField::from_fn(grid, 2, |_| vec![1.0, 0.0]);
        let report = gauss_green_residual(&op, &kb, &dom, &u, &phi).unwrap();
        // oracle: ∫ ∂1(x1) · 1 = |Ω| = π; ∫ u ∂1(φ) = 0;
        // ∫ cosθ · cosθ dH = π
        assert!((report.bulk_forward - std::f64::consts::PI).abs() < 0.05);
        assert!((report.boundary_term - std::f64::consts::PI).abs() < 0.05);
        assert!(report.residual < 5e-2, "residual {}", report.residual);
    }

    #[test]
    fn gauss_green_boundary_term_vanishes_for_compact_support() {
        let op = sym_gradient(2).unwrap();
        let kb = kernel_basis(&op, 3);
        let dom = Domain::unit_disk();
        let bump = |x: &[f64]| {
            let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.36;
            if r2 < 1.0 {
                (1.0 - r2).powi(3)
            } else {
                0.0
            }
        };
        // residual is the summation-by-parts defect: O(h) on a ladder
        let mut residuals = Vec::new();
        for cells in [64usize, 128] {
            let grid = disk_grid(cells);
            let u = DiscreteField::from_fn(grid.clone(), 2, |x| vec![bump(x), -bump(x)]);
            let phi = DiscreteField::from_fn(grid, 4, |x| {
                vec![bump(x), 0.0, 0.5 * bump(x), bump(x) * x[0]]
            });
            let report = gauss_green_residual(&op, &kb, &dom, &u, &phi).unwrap();
            assert!(report.boundary_term.abs() < 1e-10);
            residuals.push(report.residual);
        }
        assert!(residuals[1] < 0.7 * residuals[0], "{residuals:?}");
        assert!(residuals[1] < 5e-2, "{residuals:?}");
    }

    #[test]
    fn gluing_characteristic_function_jump() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let inner = Domain::disk(vec![0.0, 0.0], 0.5).unwrap();
        let outer = Domain::disk(vec![0.0, 0.0], 1.0).unwrap();
        let grid = disk_grid(128);
        let u = DiscreteField::from_fn(grid.clone(), 1, |_| vec![0.0]);
        let v = DiscreteField::from_fn(grid.clone(), 1, |_| vec![3.0]);
        let result = gluing_jump(&op, &kb, &inner, &outer, &u, &v).unwrap();
        // jump mass = |c| · perimeter = 3 · π
        let mass = result.measure.singular_mass();
        let expect = 3.0 * std::f64::consts::PI;
        assert!(
            (mass - expect).abs() < 0.02 * expect,
            "mass {mass} vs {expect}"
        );
        // compatible traces leave no jump
        let same = gluing_jump(&op, &kb, &inner, &outer, &v, &v).unwrap();
        assert!(same.measure.singular_mass() < 1e-8);
    }

    #[test]
    fn gluing_dual_pairing_consistency() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let inner = Domain::disk(vec![0.0, 0.0], 0.5).unwrap();
        let outer = Domain::disk(vec![0.0, 0.0], 1.0).unwrap();
        let grid = disk_grid(128);
        let h = grid.h;
        let u = DiscreteField::from_fn(grid.clone(), 1, |x| vec![x[0] * 0.5]);
        let v = DiscreteField::from_fn(grid.clone(), 1, |x| vec![1.0 + x[1]]);
        let result = gluing_jump(&op, &kb, &inner, &outer, &u, &v).unwrap();
        // glued field
        let w = DiscreteField::from_fn(grid.clone(), 1, |x| {
            if inner.signed_distance(x) < 0.0 {
                vec![x[0] * 0.5]
            } else {
                vec![1.0 + x[1]]
            }
        });
        let bump = |x: &[f64]| {
            let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.81;
            if r2 < 1.0 {
                (1.0 - r2).powi(3)
            } else {
                0.0
            }
        };
        let phi = DiscreteField::from_fn(grid, 2, |x| vec![bump(x) * x[1], bump(x)]);
        let defect = gluing_dual_defect(&op, &result.measure, &w, &phi).unwrap();
        assert!(defect < 25.0 * h, "defect {defect} at h {h}");
    }

    #[test]
    fn zero_trace_verdicts() {
        let op = gradient(2, 1).unwrap();
        let kb = kernel_basis(&op, 2);
        let dom = Domain::unit_disk();
        let grid = disk_grid(64);
        let bump = DiscreteField::from_fn(grid.clone(), 1, |x| {
            let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.25;
            vec![if r2 < 1.0 { (1.0 - r2).powi(3) } else { 0.0 }]
        });
        let report = zero_trace_check(&op, &kb, &dom, &bump).unwrap();
        assert!(report.zero_trace, "{report:?}");

        let ones = DiscreteField::from_fn(grid, 1, |_| vec![1.0]);
        let report = zero_trace_check(&op, &kb, &dom, &ones).unwrap();
        assert!(!report.zero_trace);
        let perimeter = std::f64::consts::TAU;
        assert!((report.boundary_l1 - perimeter).abs() < 0.02 * perimeter);
    }

    #[test]
    fn counterexample_dichotomy_r_not_c() {
        let rows =
            no_trace_counterexample(CounterexampleVariant::RNotC, &[1e-1, 1e-2, 1e-3], 256)
                .unwrap();
        // interior mass stabilizes while the line mass grows like log
        let i: Vec<f64> = rows.iter().map(|r| r.interior_l1).collect();
        assert!((i[2] - i[1]).abs() < 0.05 * i[1]);
        let l: Vec<f64> = rows.iter().map(|r| r.line_l1).collect();
        assert!(l[1] / l[0] > 1.8, "first decade growth {l:?}");
        for w in l.windows(2) {
            let increment = w[1] - w[0];
            // ∫ dt/t over one decade on both sides of the singularity
            let expect = 2.0 * std::f64::consts::LN_10;
            assert!(
                (increment - expect).abs() < 0.1 * expect,
                "log increment {increment} vs {expect}"
            );
        }
        // "A h_f" vanishes off the singularity for the holomorphic
        // field; the centered-difference residual is O(h²/r³) in L¹,
        // about 2e-2 at this resolution
        assert!(rows[0].interior_a_l1 < 3e-2, "{:?}", rows[0]);
    }

    #[test]
    fn counterexample_not_r_elliptic_diverges_faster() {
        let rows = no_trace_counterexample(
            CounterexampleVariant::NotRElliptic,
            &[1e-1, 1e-2],
            256,
        )
        .unwrap();
        // line mass grows like ε^{-1/2}: about sqrt(10) per decade
        let ratio = rows[1].line_l1 / rows[0].line_l1;
        assert!(ratio > 2.5, "ratio {ratio}");
        // interior A-mass stays bounded
        assert!(rows[1].interior_a_l1 < 10.0);
    }

    #[test]
    fn counterexample_validates_epsilons() {
        assert!(no_trace_counterexample(CounterexampleVariant::RNotC, &[], 64).is_err());
        assert!(
            no_trace_counterexample(CounterexampleVariant::RNotC, &[1e-3, 1e-2], 64).is_err()
        );
    }

    #[test]
    fn trace_on_square_of_devsym_kernel_field() {
        // diagnostic path: truncated kernel of the plane trace-free
        // symmetric gradient still reproduces its low-degree fields
        let op = dev_sym_gradient(2).unwrap();
        let kb = kernel_basis(&op, 3);
        let dom = Domain::hyper_box(vec![-0.8, -0.8], vec![0.8, 0.8]).unwrap();
        // z^2 = (x^2 - y^2, 2xy) is in the kernel
        let u = DiscreteField::from_fn(disk_grid(128), 2, |x| {
            vec![x[0] * x[0] - x[1] * x[1], 2.0 * x[0] * x[1]]
        });
        let mesh = dom.boundary_mesh(mesh_spacing_for(6));
        let trace = compute_trace(&kb, &dom, &mesh, &u, 4, 6).unwrap();
        let mut sup: f64 = 0.0;
        for (bp, v) in mesh.iter().zip(trace.boundary_values()) {
            let expect = [
                bp.position[0] * bp.position[0] - bp.position[1] * bp.position[1],
                2.0 * bp.position[0] * bp.position[1],
            ];
            for (a, b) in v.iter().zip(expect) {
                sup = sup.max((a - b).abs());
            }
        }
        assert!(sup < 5e-3, "sup {sup}");
    }
}
