//! Command-line interface: classify, kernel, poincare, trace,
//! counterexample, gauss-green, minimize.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 numeric
//! inconsistency.

use clap::{Parser, Subcommand};

use abv::domain::TraceRegion;
use abv::error::{AbvError, Result};
use abv::expr::FieldExpression;
use abv::grid::{DiscreteField, Grid};
use abv::nullspace::{default_cutoff, kernel_basis};
use abv::projection::{poincare_ratio, KernelProjector, PoincareOutcome};
use abv::report::Report;
use abv::solver::{DirichletProblem, Integrand, SolverParams};
use abv::trace::CounterexampleVariant;

#[derive(Parser)]
#[command(name = "abv", version, about = "Ellipticity, kernels, traces and linear-growth minimization for first-order operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify an operator: R/C-ellipticity, cancelling, kappa bounds.
    Classify {
        /// Operator file or builtin:NAME,n[,N]
        operator: String,
        #[arg(long, default_value_t = 16)]
        grid_density: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Polynomial kernel dimensions by degree.
    Kernel {
        operator: String,
        #[arg(long)]
        cutoff: Option<u32>,
        #[arg(long, default_value_t = false)]
        print_basis: bool,
    },
    /// Empirical Poincaré constants over a seeded smooth family.
    Poincare {
        operator: String,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        grid: usize,
    },
    /// Boundary trace of a field across dyadic levels.
    Trace {
        operator: String,
        #[arg(long)]
        domain: String,
        /// Field expression, or file:<path> for a sample file
        #[arg(long)]
        field: String,
        #[arg(long)]
        jmax: i32,
        #[arg(long)]
        jmin: Option<i32>,
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
    /// No-trace counterexample ladder.
    Counterexample {
        #[arg(long, value_parser = ["r-not-c", "not-r"])]
        variant: String,
        /// Comma-separated decreasing cutoffs
        #[arg(long, default_value = "1e-1,1e-2,1e-3")]
        eps: String,
        #[arg(long, default_value_t = 512)]
        grid: usize,
    },
    /// Gauss-Green residual for a (u, phi) pair.
    GaussGreen {
        operator: String,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        u: String,
        #[arg(long)]
        phi: String,
        #[arg(long, default_value_t = 128)]
        grid: usize,
    },
    /// Minimize the relaxed linear-growth Dirichlet functional.
    Minimize {
        operator: String,
        #[arg(long)]
        domain: String,
        /// tv | area | table:<file>
        #[arg(long)]
        integrand: String,
        /// Boundary datum expression, or file:<path>
        #[arg(long)]
        u0: String,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = false)]
        hard_boundary: bool,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the energy trace here (one value per line)
        #[arg(long)]
        energy_trace_out: Option<String>,
        /// Write the minimizer as a field sample file here
        #[arg(long)]
        minimizer_out: Option<String>,
        /// Also run the hard-boundary problem and report the gap
        #[arg(long, default_value_t = false)]
        consistency: bool,
    },
}

fn grid_over(dom: &abv::domain::Domain, cells: usize) -> Result<Grid> {
    let (lo, hi) = dom.bounding_box();
    let extent = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| b - a)
        .fold(0.0f64, f64::max);
    let h = extent / cells as f64;
    let shape: Vec<usize> = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| ((b - a) / h).round().max(2.0) as usize)
        .collect();
    Grid::new(lo, shape, h)
}

fn field_from_arg(arg: &str, grid: &Grid, components: usize) -> Result<DiscreteField> {
    if let Some(path) = arg.strip_prefix("file:") {
        let field = abv::io::load_field(path)?;
        if field.components != components {
            return Err(AbvError::DimensionMismatch {
                expected: components,
                got: field.components,
            });
        }
        Ok(field)
    } else {
        let expr = FieldExpression::parse(arg)?;
        expr.validate_dim(grid.dim())?;
        if expr.components() != components {
            return Err(AbvError::DimensionMismatch {
                expected: components,
                got: expr.components(),
            });
        }
        Ok(DiscreteField::from_fn(grid.clone(), components, |x| expr.eval(x)))
    }
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Classify {
            operator,
            grid_density,
            seed,
        } => {
            let op = abv::io::resolve_operator(&operator)?;
            let mut report = Report::new("classify", seed);
            report.kv("operator", &operator);
            report.kv("grid_density", grid_density);
            report.kv(
                "dims",
                format!("n={} N={} K={}", op.space_dim(), op.value_dim(), op.target_dim()),
            );
            let cls = abv::ellipticity::classify(&op, grid_density, seed)?;
            report.kv_bool("r_elliptic", cls.r_elliptic);
            report.kv_bool("c_elliptic", cls.c_elliptic);
            match cls.cancelling {
                Some(c) => report.kv_bool("cancelling", c),
                None => report.kv("cancelling", "undecided"),
            }
            report.kv_f64("kappa1", cls.kappa1);
            report.kv_f64("kappa2", cls.kappa2);
            report.kv_f64("tolerance", cls.tolerance);
            if let Some(dim) = cls.intersection_dim {
                report.kv("range_intersection_dim", dim);
            }
            if let Some((xi, eta)) = &cls.witness_real {
                report.kv(
                    "witness_real_xi",
                    xi.iter().map(|v| abv::report::fmt_f64(*v)).collect::<Vec<_>>().join(","),
                );
                report.kv(
                    "witness_real_eta",
                    eta.iter().map(|v| abv::report::fmt_f64(*v)).collect::<Vec<_>>().join(","),
                );
            }
            if let Some((xi, eta)) = &cls.witness_complex {
                let fmt_c = |v: &num_complex::Complex64| format!("{}+{}i", abv::report::fmt_f64(v.re), abv::report::fmt_f64(v.im));
                report.kv(
                    "witness_complex_xi",
                    xi.iter().map(fmt_c).collect::<Vec<_>>().join(","),
                );
                report.kv(
                    "witness_complex_eta",
                    eta.iter().map(fmt_c).collect::<Vec<_>>().join(","),
                );
            }
            if let Some(w) = &cls.cancelling_warning {
                report.kv("warning", w);
            }
            Ok(report.finish())
        }
        Command::Kernel {
            operator,
            cutoff,
            print_basis,
        } => {
            let op = abv::io::resolve_operator(&operator)?;
            let cutoff = cutoff.unwrap_or_else(|| default_cutoff(&op));
            let mut report = Report::new("kernel", 0);
            report.kv("operator", &operator);
            report.kv("cutoff", cutoff);
            let kb = kernel_basis(&op, cutoff);
            report.kv(
                "dimension_by_degree",
                kb.dimension_by_degree
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            report.kv("total_dimension", kb.dimension());
            match kb.minimal_l {
                Some(l) => report.kv("minimal_l", format!("{l} (stabilized up to cutoff {cutoff})")),
                None => report.kv("minimal_l", "none (no stabilization below cutoff)"),
            }
            if print_basis {
                report.kv("basis", "component,multi_index,coefficient");
                for (i, f) in kb.fields.iter().enumerate() {
                    for ((j, beta), c) in &f.terms {
                        let idx: Vec<String> = beta.iter().map(|b| b.to_string()).collect();
                        report.kv(
                            &format!("field{i}"),
                            format!("{j},[{}],{}", idx.join(" "), abv::report::fmt_f64(*c)),
                        );
                    }
                }
            }
            Ok(report.finish())
        }
        Command::Poincare {
            operator,
            radius,
            trials,
            seed,
            grid,
        } => {
            let op = abv::io::resolve_operator(&operator)?;
            if op.space_dim() != 2 {
                return Err(AbvError::InvalidInput(
                    "poincare measurements run on planar operators".into(),
                ));
            }
            let kb = kernel_basis(&op, default_cutoff(&op));
            let g = Grid::square(2, -1.5 * radius, 1.5 * radius, grid)?;
            let resolution = ((radius / g.h).ceil() as usize).clamp(8, 64);
            let projector = KernelProjector::new(&kb, vec![0.0, 0.0], radius, resolution)?;
            let mut report = Report::new("poincare", seed);
            report.kv("operator", &operator);
            report.kv_f64("radius", radius);
            report.kv("trials", trials);
            report.kv("grid", grid);
            report.kv("kernel_dimension", projector.basis_dimension());
            report.kv_f64(
                "inverse_estimate_constant",
                projector.inverse_estimate_constant(trials, seed),
            );
            report.table_header(&["trial", "ratio"]);
            let mut max_ratio: f64 = 0.0;
            let mut kernel_flagged = 0usize;
            for t in 0..trials {
                let f = abv::fields::SmoothField::new(2, op.value_dim(), seed.wrapping_add(t as u64));
                let u = DiscreteField::from_fn(g.clone(), op.value_dim(), |x| f.eval(x));
                match poincare_ratio(&op, &projector, &u)? {
                    PoincareOutcome::Ratio(r) => {
                        max_ratio = max_ratio.max(r);
                        report.table_row(&[t as f64, r]);
                    }
                    PoincareOutcome::KernelInput => {
                        kernel_flagged += 1;
                        report.kv(&format!("trial{t}"), "kernel");
                    }
                }
            }
            report.kv_f64("max_ratio", max_ratio);
            report.kv("kernel_flagged", kernel_flagged);
            Ok(report.finish())
        }
        Command::Trace {
            operator,
            domain,
            field,
            jmax,
            jmin,
            grid,
        } => {
            let op = abv::io::resolve_operator(&operator)?;
            let dom = abv::io::load_domain(&domain)?;
            let g = grid_over(&dom, grid)?;
            let u = field_from_arg(&field, &g, op.value_dim())?;
            let kb = kernel_basis(&op, default_cutoff(&op));
            if kb.minimal_l.is_none() {
                // diagnostic path: the kernel is truncated at the cutoff
                eprintln!(
                    "note: kernel did not stabilize below cutoff {}; using the truncated basis",
                    kb.cutoff
                );
            }
            let j_min = jmin.unwrap_or(dom.coarsest_level() + 1);
            let mesh = dom.boundary_mesh(abv::trace::mesh_spacing_for(jmax).max(u.grid.h / 8.0));
            let trace = abv::trace::compute_trace(&kb, &dom, &mesh, &u, j_min, jmax)?;
            let mut report = Report::new("trace", 0);
            report.kv("operator", &operator);
            report.kv("domain", &domain);
            report.kv("field", &field);
            report.kv("levels", format!("{}..{}", trace.levels[0], trace.levels.last().unwrap()));
            report.kv("mesh_points", mesh.len());
            report.kv_bool("converged", trace.converged);
            report.kv_f64("boundary_l1", trace.boundary_l1(&mesh));
            report.table_header(&["level_from", "level_to", "l1_diff"]);
            for (w, d) in trace.levels.windows(2).zip(&trace.per_level_l1_diffs) {
                report.table_row(&[w[0] as f64, w[1] as f64, *d]);
            }
            Ok(report.finish())
        }
        Command::Counterexample { variant, eps, grid } => {
            let var = match variant.as_str() {
                "r-not-c" => CounterexampleVariant::RNotC,
                _ => CounterexampleVariant::NotRElliptic,
            };
            let eps: Vec<f64> = eps
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| AbvError::InvalidInput(format!("bad epsilon '{t}'")))
                })
                .collect::<Result<_>>()?;
            let rows = abv::trace::no_trace_counterexample(var, &eps, grid)?;
            let mut report = Report::new("counterexample", 0);
            report.kv("variant", &variant);
            report.kv("grid", grid);
            report.table_header(&["epsilon", "interior_l1", "interior_a_l1", "line_l1"]);
            for r in &rows {
                report.table_row(&[r.epsilon, r.interior_l1, r.interior_a_l1, r.line_l1]);
            }
            Ok(report.finish())
        }
        Command::GaussGreen {
            operator,
            domain,
            u,
            phi,
            grid,
        } => {
            let op = abv::io::resolve_operator(&operator)?;
            let dom = abv::io::load_domain(&domain)?;
            let g = grid_over(&dom, grid)?;
            let uf = field_from_arg(&u, &g, op.value_dim())?;
            let phif = field_from_arg(&phi, &g, op.target_dim())?;
            let kb = kernel_basis(&op, default_cutoff(&op));
            let gg = abv::trace::gauss_green_residual(&op, &kb, &dom, &uf, &phif)?;
            let mut report = Report::new("gauss-green", 0);
            report.kv("operator", &operator);
            report.kv("domain", &domain);
            report.kv("grid", grid);
            report.kv_f64("bulk_forward", gg.bulk_forward);
            report.kv_f64("bulk_adjoint", gg.bulk_adjoint);
            report.kv_f64("boundary_term", gg.boundary_term);
            report.kv_f64("residual", gg.residual);
            Ok(report.finish())
        }
        Command::Minimize {
            operator,
            domain,
            integrand,
            u0,
            grid,
            hard_boundary,
            iters,
            tol,
            seed,
            energy_trace_out,
            minimizer_out,
            consistency,
        } => {
            let op = abv::io::resolve_operator(&operator)?;
            let dom = abv::io::load_domain(&domain)?;
            let integrand_obj = if integrand == "tv" {
                Integrand::tv()
            } else if integrand == "area" {
                Integrand::area()
            } else if let Some(path) = integrand.strip_prefix("table:") {
                let text = std::fs::read_to_string(path)?;
                let mut samples = Vec::new();
                for (idx, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != 2 {
                        return Err(AbvError::Parse {
                            line: idx + 1,
                            message: "table rows are 'radius value'".into(),
                        });
                    }
                    let r: f64 = toks[0].parse().map_err(|_| AbvError::Parse {
                        line: idx + 1,
                        message: "bad radius".into(),
                    })?;
                    let v: f64 = toks[1].parse().map_err(|_| AbvError::Parse {
                        line: idx + 1,
                        message: "bad value".into(),
                    })?;
                    samples.push((r, v));
                }
                Integrand::table(samples)?
            } else {
                return Err(AbvError::InvalidInput(format!(
                    "unknown integrand '{integrand}' (tv, area or table:<file>)"
                )));
            };
            let g = abv::solver::solver_grid(&dom, grid)?;
            let datum = field_from_arg(&u0, &g, op.value_dim())?;
            let mut params = SolverParams {
                hard_boundary,
                seed,
                ..Default::default()
            };
            if let Some(m) = iters {
                params.max_iters = m;
            }
            if let Some(t) = tol {
                params.stall_rel = t;
            }
            let problem = DirichletProblem {
                op: &op,
                domain: &dom,
                integrand: &integrand_obj,
                datum: &datum,
                params: params.clone(),
            };
            let result = abv::solver::minimize(&problem)?;
            let mut report = Report::new("minimize", seed);
            report.kv("operator", &operator);
            report.kv("domain", &domain);
            report.kv("integrand", &integrand);
            report.kv("grid", grid);
            report.kv_bool("hard_boundary", hard_boundary);
            report.kv("iterations", result.iterations);
            report.kv_f64("energy", result.energy.total);
            report.kv_f64("energy_bulk", result.energy.bulk);
            report.kv_f64("energy_boundary_penalty", result.energy.boundary_penalty);
            if consistency {
                let gap = abv::solver::consistency_gap(&problem)?;
                report.kv_f64("relaxed_energy", gap.relaxed);
                report.kv_f64("constrained_energy", gap.constrained);
                report.kv_f64("gap", gap.gap);
            }
            if let Some(path) = energy_trace_out {
                let mut text = String::new();
                for e in &result.energy_trace {
                    text.push_str(&abv::report::fmt_f64(*e));
                    text.push('\n');
                }
                std::fs::write(&path, text)?;
                report.kv("energy_trace_file", path);
            }
            if let Some(path) = minimizer_out {
                std::fs::write(&path, abv::io::format_field(&result.minimizer))?;
                report.kv("minimizer_file", path);
            }
            Ok(report.finish())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => print!("{report}"),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
