//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measurements (visible with --nocapture).

use std::time::Instant;

use abv::domain::{Domain, TraceRegion};
use abv::ellipticity::classify;
use abv::fields::SmoothField;
use abv::grid::{euclid, DiscreteField, Grid};
use abv::nullspace::{kernel_basis, AveragedTaylor};
use abv::operator::{builtin, dev_sym_gradient, gradient, remark25, sym_gradient};
use abv::poly::apply_operator;
use abv::projection::{poincare_ratio, KernelProjector, PoincareOutcome};
use abv::solver::{
    consistency_gap, minimize, quasiconvexity_probe, DirichletProblem, Integrand, SolverParams,
};
use abv::trace::{
    build_tj, compute_trace, gauss_green_residual, gluing_dual_defect, gluing_jump,
    mesh_spacing_for, no_trace_counterexample, CounterexampleVariant,
};
use num_complex::Complex64 as C64;

#[test]
fn criterion_01_ellipticity_truth_table() {
    let t0 = Instant::now();
    let cases: Vec<(&str, abv::operator::Operator, bool, bool, Option<bool>)> = vec![
        ("gradient n=2", gradient(2, 1).unwrap(), true, true, None),
        ("symgrad n=2", sym_gradient(2).unwrap(), true, true, None),
        ("symgrad n=3", sym_gradient(3).unwrap(), true, true, None),
        ("devsymgrad n=2", dev_sym_gradient(2).unwrap(), true, false, None),
        ("devsymgrad n=3", dev_sym_gradient(3).unwrap(), true, true, None),
        ("remark25", remark25(), true, false, Some(true)),
    ];
    for (name, op, want_r, want_c, want_cancel) in cases {
        let report = classify(&op, 16, 1).unwrap();
        assert_eq!(report.r_elliptic, want_r, "{name}: R-ellipticity");
        assert_eq!(report.c_elliptic, want_c, "{name}: C-ellipticity");
        if let Some(want) = want_cancel {
            assert_eq!(report.cancelling, Some(want), "{name}: cancelling");
        }
    }
    // the canonical complex null pair of the plane trace-free
    // symmetric gradient, checked against the symbol directly
    let op = dev_sym_gradient(2).unwrap();
    let xi = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
    let eta = [C64::new(1.0, 0.0), C64::new(0.0, -1.0)];
    let sym = op.symbol_complex(&xi).unwrap();
    let mut residual: f64 = 0.0;
    for i in 0..op.target_dim() {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..op.value_dim() {
            acc += sym[(i, j)] * eta[j];
        }
        residual = residual.max(acc.norm());
    }
    assert!(residual <= 1e-10, "witness residual {residual}");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "classification took {elapsed:.1}s");
    println!("criterion 01 PASS: truth table reproduced, witness residual {residual:.2e}, {elapsed:.2}s");
}

#[test]
fn criterion_02_kernel_dimensions() {
    for n_comp in [1usize, 3] {
        let op = gradient(2, n_comp).unwrap();
        let kb = kernel_basis(&op, 5);
        assert_eq!(kb.dimension(), n_comp, "gradient kernel is the constants");
    }
    let kb = kernel_basis(&sym_gradient(2).unwrap(), 5);
    assert_eq!(kb.dimension(), 3);
    let kb3 = kernel_basis(&sym_gradient(3).unwrap(), 5);
    assert_eq!(kb3.dimension(), 6);

    let plane = kernel_basis(&dev_sym_gradient(2).unwrap(), 6);
    assert_eq!(plane.dimension_by_degree, vec![2; 7], "no stabilization");
    assert_eq!(plane.minimal_l, None);

    let space = kernel_basis(&dev_sym_gradient(3).unwrap(), 5);
    assert_eq!(space.minimal_l, Some(2), "stabilizes at l = 2");
    let computed = space.dimension();
    let parametrization_count = 9; // antisymmetric A (3) + b (3) + a (3)
    println!(
        "criterion 02 note: conformal kernel dimension computed = {computed}, \
         parametrization count = {parametrization_count} (dilations are annihilated \
         but absent from the parametrization)"
    );
    assert_eq!(computed, 10);

    // exact residuals of every returned field
    for (op, cutoff) in [
        (gradient(2, 2).unwrap(), 4u32),
        (sym_gradient(3).unwrap(), 4),
        (dev_sym_gradient(3).unwrap(), 4),
        (dev_sym_gradient(2).unwrap(), 6),
        (remark25(), 4),
    ] {
        let kb = kernel_basis(&op, cutoff);
        for f in &kb.fields {
            let residual = apply_operator(&op, f).max_coeff();
            assert!(residual <= 1e-10, "kernel residual {residual}");
        }
    }
    println!("criterion 02 PASS: kernel dimensions and exact residuals");
}

#[test]
fn criterion_03_averaged_taylor_commutation() {
    // A(P^l u) vs P^{l-1}(A u) for the plane symmetric gradient, ten
    // seeded smooth fields, quadrature resolution 64 per radius
    let op = sym_gradient(2).unwrap();
    let center = vec![0.1, -0.05];
    let radius = 0.8;
    let order = 2u32;
    let at_l = AveragedTaylor::new(center.clone(), radius, order, 64).unwrap();
    let at_lm1 =
        AveragedTaylor::with_bump(center.clone(), radius, order - 1, at_l.bump_exponent, 64)
            .unwrap();
    let (nodes, weights) = abv::quad::unit_ball_rule(2, 48);
    let mut worst_rel: f64 = 0.0;
    for seed in 0..10u64 {
        let f = SmoothField::new(2, 2, 100 + seed);
        let au = |x: &[f64]| -> Vec<f64> {
            let j = f.jacobian(x);
            // row-major symmetrization of the 2x2 jacobian
            vec![
                j[0],
                0.5 * (j[1] + j[2]),
                0.5 * (j[1] + j[2]),
                j[3],
            ]
        };
        let pl_u = at_l.apply_fn(2, |x| f.eval(x));
        let lhs = apply_operator(&op, &pl_u);
        let rhs = at_lm1.apply_fn(4, au);
        let mut defect = 0.0;
        let mut scale = 0.0;
        for (y, w) in nodes.iter().zip(&weights) {
            let x = [center[0] + radius * y[0], center[1] + radius * y[1]];
            let a = lhs.eval(&x);
            let b = rhs.eval(&x);
            let exact = au(&x);
            let wr = w * radius * radius;
            defect += euclid(&a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>()) * wr;
            scale += euclid(&exact) * wr;
        }
        let rel = defect / scale;
        worst_rel = worst_rel.max(rel);
        assert!(rel <= 1e-2, "seed {seed}: commutation defect {rel:.3e}");
    }
    println!("criterion 03 PASS: worst relative commutation defect {worst_rel:.3e}");
}

#[test]
fn criterion_04_poincare_dilation_invariance() {
    let op = sym_gradient(2).unwrap();
    let kb = kernel_basis(&op, 3);
    let radii = [1.0, 0.5, 0.25];
    let mut max_by_radius = Vec::new();
    for &r in &radii {
        let grid = Grid::square(2, -1.5 * r, 1.5 * r, 128).unwrap();
        let resolution = ((r / grid.h).ceil() as usize).clamp(8, 64);
        let projector = KernelProjector::new(&kb, vec![0.0, 0.0], r, resolution).unwrap();
        let mut max_ratio: f64 = 0.0;
        for seed in 0..50u64 {
            let f = SmoothField::new(2, 2, 500 + seed);
            let u = DiscreteField::from_fn(grid.clone(), 2, |x| f.eval(&[x[0] / r, x[1] / r]));
            match poincare_ratio(&op, &projector, &u).unwrap() {
                PoincareOutcome::Ratio(v) => max_ratio = max_ratio.max(v),
                PoincareOutcome::KernelInput => {}
            }
        }
        assert!(max_ratio.is_finite() && max_ratio > 0.0);
        max_by_radius.push(max_ratio);
    }
    let base = max_by_radius[0];
    for (r, m) in radii.iter().zip(&max_by_radius) {
        let rel = (m - base).abs() / base;
        assert!(rel < 0.02, "radius {r}: max ratio {m} deviates {rel:.3}");
    }
    println!(
        "criterion 04 PASS: max Poincare ratio {base:.4}, dilation spread {:.2e}",
        max_by_radius
            .iter()
            .map(|m| (m - base).abs() / base)
            .fold(0.0f64, f64::max)
    );
}

#[test]
fn criterion_05_trace_convergence_on_disk() {
    let op = gradient(2, 1).unwrap();
    let kb = kernel_basis(&op, 2);
    let dom = Domain::unit_disk();
    let grid = Grid::square(2, -1.0, 1.0, 256).unwrap();
    let u = DiscreteField::from_fn(grid, 1, |x| vec![x[0]]);
    let mesh = dom.boundary_mesh(mesh_spacing_for(7));
    let trace = compute_trace(&kb, &dom, &mesh, &u, 4, 7).unwrap();

    // sup error against the boundary restriction cos θ, per level
    let mut sups = Vec::new();
    for values in &trace.values_by_level {
        let mut sup: f64 = 0.0;
        for (bp, v) in mesh.iter().zip(values) {
            sup = sup.max((v[0] - bp.position[0]).abs());
        }
        sups.push(sup);
    }
    assert!(
        sups.windows(2).all(|w| w[1] < w[0]),
        "sup errors not decreasing: {sups:?}"
    );
    let mut l1: f64 = 0.0;
    for (bp, v) in mesh.iter().zip(trace.boundary_values()) {
        l1 += (v[0] - bp.position[0]).abs() * bp.weight;
    }
    assert!(l1 < 1e-2, "final L1 error {l1}");

    // Cauchy differences shrink by at least 1.5 per level past j0+1
    let d = &trace.per_level_l1_diffs;
    for w in d.windows(2) {
        assert!(w[0] / w[1] >= 1.5, "Cauchy ratios too small: {d:?}");
    }
    println!(
        "criterion 05 PASS: L1 error {l1:.3e}, sup errors {sups:?}, Cauchy diffs {d:?}"
    );
}

#[test]
fn criterion_06_tj_fixes_kernel_fields() {
    let op = sym_gradient(2).unwrap();
    let kb = kernel_basis(&op, 3);
    let dom = Domain::unit_disk();
    let grid = Grid::square(2, -1.0, 1.0, 256).unwrap();
    // all three kernel directions plus a combination
    let fields: Vec<Box<dyn Fn(&[f64]) -> Vec<f64>>> = vec![
        Box::new(|_| vec![1.0, 0.0]),
        Box::new(|_| vec![0.0, 1.0]),
        Box::new(|x: &[f64]| vec![-x[1], x[0]]),
        Box::new(|x: &[f64]| vec![0.7 - 1.2 * x[1], -0.4 + 1.2 * x[0]]),
    ];
    let mut worst: f64 = 0.0;
    for q in &fields {
        let u = DiscreteField::from_fn(grid.clone(), 2, |x| q(x));
        for j in 4..=7 {
            let tj = build_tj(&kb, &dom, &u, j).unwrap();
            let out = tj.apply(&dom, &u);
            for c in 0..u.grid.num_cells() {
                let x = u.grid.cell_center(&u.grid.multi_index(c));
                if dom.signed_distance(&x) > 0.0 {
                    continue;
                }
                let expect = q(&x);
                for (a, b) in out.value(c).iter().zip(&expect) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-6, "kernel fixing error {worst:.3e}");
    println!("criterion 06 PASS: worst kernel-fixing deviation {worst:.3e}");
}

#[test]
fn criterion_07_no_trace_counterexample() {
    let rows = no_trace_counterexample(
        CounterexampleVariant::RNotC,
        &[1e-1, 1e-2, 1e-3],
        512,
    )
    .unwrap();
    let i: Vec<f64> = rows.iter().map(|r| r.interior_l1).collect();
    let l: Vec<f64> = rows.iter().map(|r| r.line_l1).collect();
    let a: Vec<f64> = rows.iter().map(|r| r.interior_a_l1).collect();

    // interior mass stabilizes across the two finest cutoffs (the
    // ladder-wide variation is ~11% by the exact integral, driven by
    // the first decade)
    let stab = (i[2] - i[1]).abs() / i[1];
    assert!(stab < 0.05, "interior variation {stab:.3}");
    // first decade of the line mass grows by at least 1.8x, and every
    // decade adds the log-divergence increment 2 ln 10
    assert!(l[1] / l[0] >= 1.8, "first decade growth {:.3}", l[1] / l[0]);
    let expect = 2.0 * std::f64::consts::LN_10;
    for w in l.windows(2) {
        let inc = w[1] - w[0];
        assert!(
            (inc - expect).abs() < 0.1 * expect,
            "log increment {inc} vs {expect}"
        );
    }
    assert!(l[2] / l[0] > 2.5, "line mass must keep growing: {l:?}");
    // the holomorphic field is annihilated away from the singularity
    assert!(a[0] < 1e-2, "discrete A-mass {a:?}");
    println!(
        "criterion 07 PASS: interior {i:?} (finest variation {stab:.2e}), line {l:?}, A-mass {a:?}"
    );
}

#[test]
fn criterion_08_gauss_green_order() {
    struct Pair {
        dom: Domain,
        op: abv::operator::Operator,
        u: Box<dyn Fn(&[f64]) -> Vec<f64>>,
        phi: Box<dyn Fn(&[f64]) -> Vec<f64>>,
    }
    let pairs = vec![
        Pair {
            dom: Domain::unit_disk(),
            op: gradient(2, 1).unwrap(),
            u: Box::new(|x: &[f64]| vec![x[0]]),
            phi: Box::new(|_| vec![1.0, 0.0]),
        },
        Pair {
            dom: Domain::unit_disk(),
            op: gradient(2, 1).unwrap(),
            u: Box::new(|x: &[f64]| vec![(1.2 * x[0]).sin() + 0.4 * x[1]]),
            phi: Box::new(|x: &[f64]| vec![0.5 * x[1], (0.8 * x[0]).cos()]),
        },
        Pair {
            dom: Domain::unit_disk(),
            op: gradient(2, 1).unwrap(),
            u: Box::new(|x: &[f64]| vec![(x[0] + 0.3) * (x[0] + 0.3) * (x[1] - 0.2)]),
            phi: Box::new(|x: &[f64]| vec![(0.6 * x[1]).cos(), 0.5 * x[0] + 0.2]),
        },
        Pair {
            dom: Domain::hyper_box(vec![-0.9, -0.9], vec![0.9, 0.9]).unwrap(),
            op: sym_gradient(2).unwrap(),
            u: Box::new(|x: &[f64]| vec![x[0] * x[0] * 0.5, x[1]]),
            phi: Box::new(|x: &[f64]| vec![1.0, 0.2 * x[1], 0.2 * x[1], 0.5]),
        },
        Pair {
            dom: Domain::hyper_box(vec![-0.9, -0.9], vec![0.9, 0.9]).unwrap(),
            op: sym_gradient(2).unwrap(),
            u: Box::new(|x: &[f64]| vec![(0.9 * x[1]).sin(), 0.3 * x[0]]),
            phi: Box::new(|x: &[f64]| vec![0.4, x[0] * 0.3, x[0] * 0.3, (0.7 * x[0]).cos()]),
        },
    ];
    let mut orders = Vec::new();
    for (pi, pair) in pairs.iter().enumerate() {
        let kb = kernel_basis(&pair.op, 3);
        let mut residuals = Vec::new();
        for cells in [64usize, 128, 256] {
            let grid = Grid::square(2, -1.0, 1.0, cells).unwrap();
            let u = DiscreteField::from_fn(grid.clone(), pair.op.value_dim(), |x| (pair.u)(x));
            let phi = DiscreteField::from_fn(grid, pair.op.target_dim(), |x| (pair.phi)(x));
            let report = gauss_green_residual(&pair.op, &kb, &pair.dom, &u, &phi).unwrap();
            residuals.push(report.residual);
        }
        assert!(
            residuals[1] < 5e-2,
            "pair {pi}: residual at 128 is {:.3e}",
            residuals[1]
        );
        // observed order across the ladder
        let order = (residuals[0] / residuals[2]).log2() / 2.0;
        orders.push(order);
        assert!(
            order >= 0.9,
            "pair {pi}: order {order:.2} from residuals {residuals:?}"
        );
    }
    println!("criterion 08 PASS: observed orders {orders:?}");
}

#[test]
fn criterion_09_gluing() {
    let op = gradient(2, 1).unwrap();
    let kb = kernel_basis(&op, 2);
    let inner = Domain::disk(vec![0.0, 0.0], 0.5).unwrap();
    let outer = Domain::disk(vec![0.0, 0.0], 1.0).unwrap();
    let grid = Grid::square(2, -1.0, 1.0, 128).unwrap();
    let h = grid.h;
    let c = 3.0;
    let u = DiscreteField::from_fn(grid.clone(), 1, |_| vec![0.0]);
    let v = DiscreteField::from_fn(grid.clone(), 1, |_| vec![c]);
    let result = gluing_jump(&op, &kb, &inner, &outer, &u, &v).unwrap();
    let mass = result.measure.singular_mass();
    let expect = c * std::f64::consts::PI; // |c| × perimeter of radius 1/2
    let rel = (mass - expect).abs() / expect;
    assert!(rel < 0.02, "jump mass {mass} vs {expect} ({rel:.3})");

    // dual pairing against 20 seeded test fields with a boundary bump
    let w = DiscreteField::from_fn(grid.clone(), 1, |x| {
        if inner.signed_distance(x) < 0.0 {
            vec![0.0]
        } else {
            vec![c]
        }
    });
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let f = SmoothField::new(2, 2, 900 + seed);
        let phi = DiscreteField::from_fn(grid.clone(), 2, |x| {
            let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.92f64.powi(2);
            let cutoff = if r2 < 1.0 { (1.0 - r2).powi(3) } else { 0.0 };
            f.eval(x).iter().map(|v| v * cutoff).collect()
        });
        let defect = gluing_dual_defect(&op, &result.measure, &w, &phi).unwrap();
        worst = worst.max(defect);
    }
    // O(h) with the constant pinned by the jump size and perimeter
    let bound = 10.0 * (1.0 + c) * h;
    assert!(worst <= bound, "dual defect {worst:.3e} vs bound {bound:.3e}");
    println!("criterion 09 PASS: jump mass rel err {rel:.3e}, worst dual defect {worst:.3e} (bound {bound:.3e})");
}

#[test]
fn criterion_10_solver() {
    // least-gradient thin box: datum ramps 0 to 1 across the faces
    let op = gradient(2, 1).unwrap();
    let dom = Domain::hyper_box(vec![0.0, 0.0], vec![0.25, 1.0]).unwrap();
    let integrand = Integrand::tv();
    let mut gaps = Vec::new();
    for (cells, gap_bound) in [(128usize, 0.03), (256, 0.015)] {
        let t0 = Instant::now();
        let grid = abv::solver::solver_grid(&dom, cells).unwrap();
        let datum = DiscreteField::from_fn(grid.clone(), 1, |x| {
            vec![4.0 * x[0].clamp(0.0, 0.25)]
        });
        let problem = DirichletProblem {
            op: &op,
            domain: &dom,
            integrand: &integrand,
            datum: &datum,
            params: SolverParams::default(),
        };
        let result = minimize(&problem).unwrap();
        if cells == 128 {
            assert!(
                (result.energy.total - 1.0).abs() < 0.02,
                "least-gradient energy {:?}",
                result.energy
            );
        }
        for w in result.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "energy trace increased");
        }
        let report = consistency_gap(&problem).unwrap();
        let rel_gap = report.gap.abs() / report.relaxed.max(1e-12);
        assert!(
            rel_gap < gap_bound,
            "cells {cells}: gap {rel_gap:.4} (bound {gap_bound})"
        );
        gaps.push(rel_gap);
        let elapsed = t0.elapsed().as_secs_f64();
        assert!(elapsed < 300.0, "solver run took {elapsed:.0}s");
    }

    // kernel datum: rigid motion under the area integrand on the disk
    let op2 = sym_gradient(2).unwrap();
    let disk = Domain::unit_disk();
    let grid = abv::solver::solver_grid(&disk, 128).unwrap();
    let datum = DiscreteField::from_fn(grid.clone(), 2, |x| {
        vec![0.3 - 0.8 * x[1], -0.1 + 0.8 * x[0]]
    });
    let area = Integrand::area();
    let t0 = Instant::now();
    let problem = DirichletProblem {
        op: &op2,
        domain: &disk,
        integrand: &area,
        datum: &datum,
        params: SolverParams::default(),
    };
    let result = minimize(&problem).unwrap();
    let mut max_dev: f64 = 0.0;
    for (a, b) in result.minimizer.data.iter().zip(&datum.data) {
        max_dev = max_dev.max((a - b).abs());
    }
    assert!(max_dev <= 1e-6, "kernel datum moved {max_dev:.3e}");
    assert!(
        result.energy.boundary_penalty <= 1e-6,
        "boundary penalty {:.3e}",
        result.energy.boundary_penalty
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 300.0);
    println!(
        "criterion 10 PASS: gaps {gaps:?}, kernel-datum deviation {max_dev:.2e}, penalty {:.2e}",
        result.energy.boundary_penalty
    );
}

#[test]
fn criterion_11_quasiconvexity_probe() {
    let op = gradient(2, 1).unwrap();
    let tv = |z: &[f64]| euclid(z);
    let area = |z: &[f64]| (1.0 + z.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let a = [0.3, -0.5];
    for (name, g) in [("tv", &tv as &dyn Fn(&[f64]) -> f64), ("area", &area)] {
        let probe = quasiconvexity_probe(&op, g, &a, 100, 11).unwrap();
        assert!(probe.passed, "{name} failed with margin {}", probe.worst_margin);
    }
    let concave = |z: &[f64]| {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        -(r2.min(25.0))
    };
    let probe = quasiconvexity_probe(&op, &concave, &a, 100, 11).unwrap();
    assert!(!probe.passed);
    let witness = probe.witness.expect("violation carries a witness");
    println!(
        "criterion 11 PASS: convex integrands pass 100 trials; concave control fails at trial {witness} with margin {:.3e}",
        probe.worst_margin
    );
}
