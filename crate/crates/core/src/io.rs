//! Text formats: operator spec files, domain spec files and field
//! sample files. Parsers report line-numbered errors.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::domain::Domain;
use crate::error::{AbvError, Result};
use crate::grid::{DiscreteField, Grid};
use crate::operator::{builtin, Operator};

fn parse_err(line: usize, message: impl Into<String>) -> AbvError {
    AbvError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the operator spec format: `n=`, `N=`, `K=` header lines,
/// then for each α a block `A<α>:` followed by K rows of N numbers.
pub fn parse_operator_text(src: &str) -> Result<Operator> {
    let mut n: Option<usize> = None;
    let mut nn: Option<usize> = None;
    let mut kk: Option<usize> = None;
    let mut coeffs: Vec<DMatrix<f64>> = Vec::new();
    let mut current: Option<(usize, Vec<Vec<f64>>, usize)> = None; // (alpha, rows, start line)

    let flush = |current: &mut Option<(usize, Vec<Vec<f64>>, usize)>,
                     coeffs: &mut Vec<DMatrix<f64>>,
                     kk: usize,
                     nn: usize|
     -> Result<()> {
        if let Some((alpha, rows, start)) = current.take() {
            if rows.len() != kk {
                return Err(parse_err(
                    start,
                    format!("block A{alpha} has {} rows, expected K={kk}", rows.len()),
                ));
            }
            let mut m = DMatrix::zeros(kk, nn);
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            if coeffs.len() + 1 != alpha {
                return Err(parse_err(
                    start,
                    format!("block A{alpha} out of order (expected A{})", coeffs.len() + 1),
                ));
            }
            coeffs.push(m);
        }
        Ok(())
    };

    for (idx, raw) in src.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("n=") {
            n = Some(rest.trim().parse().map_err(|_| parse_err(lineno, "bad n"))?);
        } else if let Some(rest) = line.strip_prefix("N=") {
            nn = Some(rest.trim().parse().map_err(|_| parse_err(lineno, "bad N"))?);
        } else if let Some(rest) = line.strip_prefix("K=") {
            kk = Some(rest.trim().parse().map_err(|_| parse_err(lineno, "bad K"))?);
        } else if let Some(rest) = line.strip_prefix('A') {
            if let Some(alpha_str) = rest.strip_suffix(':') {
                let alpha: usize = alpha_str
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad block header '{line}'")))?;
                let (kk, nn) = match (kk, nn) {
                    (Some(k), Some(m)) => (k, m),
                    _ => return Err(parse_err(lineno, "block before n=, N=, K= header")),
                };
                flush(&mut current, &mut coeffs, kk, nn)?;
                current = Some((alpha, Vec::new(), lineno));
            } else {
                return Err(parse_err(lineno, format!("unrecognized line '{line}'")));
            }
        } else {
            // numeric row of the current block
            let (kk, nn) = match (kk, nn) {
                (Some(k), Some(m)) => (k, m),
                _ => return Err(parse_err(lineno, "matrix row before header")),
            };
            let Some((_, rows, _)) = current.as_mut() else {
                return Err(parse_err(lineno, "matrix row outside of a block"));
            };
            let mut row = Vec::with_capacity(nn);
            for tok in line.split_whitespace() {
                row.push(
                    tok.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("non-numeric token '{tok}'")))?,
                );
            }
            if row.len() != nn {
                return Err(parse_err(
                    lineno,
                    format!("ragged row: {} entries, expected N={nn}", row.len()),
                ));
            }
            if rows.len() >= kk {
                return Err(parse_err(lineno, format!("too many rows in block (K={kk})")));
            }
            rows.push(row);
        }
    }
    let (n, nn, kk) = match (n, nn, kk) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(parse_err(0, "missing n=, N= or K= header")),
    };
    flush(&mut current, &mut coeffs, kk, nn)?;
    if coeffs.len() != n {
        return Err(parse_err(
            0,
            format!("found {} blocks, expected n={n}", coeffs.len()),
        ));
    }
    let op = Operator::new(coeffs)?;
    debug_assert_eq!(op.value_dim(), nn);
    Ok(op)
}

/// Serializes an operator in the spec file format.
pub fn format_operator(op: &Operator) -> String {
    let mut out = String::new();
    writeln!(out, "n={}", op.space_dim()).unwrap();
    writeln!(out, "N={}", op.value_dim()).unwrap();
    writeln!(out, "K={}", op.target_dim()).unwrap();
    for alpha in 0..op.space_dim() {
        writeln!(out, "A{}:", alpha + 1).unwrap();
        let m = op.coeff(alpha);
        for i in 0..op.target_dim() {
            let row: Vec<String> = (0..op.value_dim()).map(|j| format!("{}", m[(i, j)])).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

/// Resolves an operator source: `builtin:NAME,n[,N]` or a file path.
pub fn resolve_operator(source: &str) -> Result<Operator> {
    if let Some(spec) = source.strip_prefix("builtin:") {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.is_empty() || parts.len() > 3 {
            return Err(AbvError::InvalidInput(format!(
                "builtin spec '{spec}' should be NAME,n[,N]"
            )));
        }
        let name = parts[0].trim();
        let n: usize = parts
            .get(1)
            .ok_or_else(|| AbvError::InvalidInput("builtin spec needs a dimension".into()))?
            .trim()
            .parse()
            .map_err(|_| AbvError::InvalidInput(format!("bad dimension in '{spec}'")))?;
        let value_dim = match parts.get(2) {
            Some(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| AbvError::InvalidInput(format!("bad N in '{spec}'")))?,
            ),
            None => None,
        };
        builtin(name, n, value_dim)
    } else {
        let text = std::fs::read_to_string(Path::new(source))?;
        parse_operator_text(&text)
    }
}

/// Parses the domain spec format: `kind=disk|box|polygon` plus
/// `center`/`radius`, `min`/`max` or `vertex` lines.
pub fn parse_domain_text(src: &str) -> Result<Domain> {
    let mut kind: Option<String> = None;
    let mut center: Option<Vec<f64>> = None;
    let mut radius: Option<f64> = None;
    let mut min: Option<Vec<f64>> = None;
    let mut max: Option<Vec<f64>> = None;
    let mut vertices: Vec<[f64; 2]> = Vec::new();

    let parse_vec = |lineno: usize, rest: &str| -> Result<Vec<f64>> {
        rest.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("non-numeric token '{tok}'")))
            })
            .collect()
    };

    for (idx, raw) in src.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("kind=") {
            kind = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("center=") {
            center = Some(parse_vec(lineno, rest)?);
        } else if let Some(rest) = line.strip_prefix("radius=") {
            radius = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| parse_err(lineno, "bad radius"))?,
            );
        } else if let Some(rest) = line.strip_prefix("min=") {
            min = Some(parse_vec(lineno, rest)?);
        } else if let Some(rest) = line.strip_prefix("max=") {
            max = Some(parse_vec(lineno, rest)?);
        } else if let Some(rest) = line.strip_prefix("vertex=") {
            let v = parse_vec(lineno, rest)?;
            if v.len() != 2 {
                return Err(parse_err(lineno, "vertex needs two coordinates"));
            }
            vertices.push([v[0], v[1]]);
        } else {
            return Err(parse_err(lineno, format!("unrecognized line '{line}'")));
        }
    }
    match kind.as_deref() {
        Some("disk") => {
            let center = center.ok_or_else(|| parse_err(0, "disk needs center="))?;
            let radius = radius.ok_or_else(|| parse_err(0, "disk needs radius="))?;
            Domain::disk(center, radius)
        }
        Some("box") => {
            let min = min.ok_or_else(|| parse_err(0, "box needs min="))?;
            let max = max.ok_or_else(|| parse_err(0, "box needs max="))?;
            Domain::hyper_box(min, max)
        }
        Some("polygon") => Domain::polygon(vertices),
        Some(other) => Err(parse_err(0, format!("unknown kind '{other}'"))),
        None => Err(parse_err(0, "missing kind= line")),
    }
}

pub fn load_domain(path: &str) -> Result<Domain> {
    let text = std::fs::read_to_string(Path::new(path))?;
    parse_domain_text(&text)
}

/// Writes a field sample file: header with grid dims, origin and
/// spacing, then one row-major line of components per cell.
pub fn format_field(field: &DiscreteField) -> String {
    let mut out = String::new();
    let dims: Vec<String> = field.grid.shape.iter().map(|s| s.to_string()).collect();
    writeln!(out, "grid={}", dims.join(" ")).unwrap();
    let origin: Vec<String> = field.grid.origin.iter().map(|v| format!("{v:.17e}")).collect();
    writeln!(out, "origin={}", origin.join(" ")).unwrap();
    writeln!(out, "h={:.17e}", field.grid.h).unwrap();
    writeln!(out, "components={}", field.components).unwrap();
    for c in 0..field.grid.num_cells() {
        let row: Vec<String> = field.value(c).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn parse_field_text(src: &str) -> Result<DiscreteField> {
    let mut lines = src.lines().enumerate();
    let mut shape: Option<Vec<usize>> = None;
    let mut origin: Option<Vec<f64>> = None;
    let mut h: Option<f64> = None;
    let mut components: Option<usize> = None;
    let mut data: Vec<f64> = Vec::new();
    for (idx, raw) in &mut lines {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("grid=") {
            shape = Some(
                rest.split_whitespace()
                    .map(|t| t.parse().map_err(|_| parse_err(lineno, "bad grid dims")))
                    .collect::<Result<_>>()?,
            );
        } else if let Some(rest) = line.strip_prefix("origin=") {
            origin = Some(
                rest.split_whitespace()
                    .map(|t| t.parse().map_err(|_| parse_err(lineno, "bad origin")))
                    .collect::<Result<_>>()?,
            );
        } else if let Some(rest) = line.strip_prefix("h=") {
            h = Some(rest.trim().parse().map_err(|_| parse_err(lineno, "bad h"))?);
        } else if let Some(rest) = line.strip_prefix("components=") {
            components = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| parse_err(lineno, "bad components"))?,
            );
        } else {
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("non-numeric token '{tok}'")))?,
                );
            }
        }
    }
    let shape = shape.ok_or_else(|| parse_err(0, "missing grid= header"))?;
    let origin = origin.ok_or_else(|| parse_err(0, "missing origin= header"))?;
    let h = h.ok_or_else(|| parse_err(0, "missing h= header"))?;
    let components = components.ok_or_else(|| parse_err(0, "missing components= header"))?;
    let grid = Grid::new(origin, shape, h)?;
    let expected = grid.num_cells() * components;
    if data.len() != expected {
        return Err(parse_err(
            0,
            format!("field has {} values, expected {expected}", data.len()),
        ));
    }
    Ok(DiscreteField {
        grid,
        components,
        data,
    })
}

pub fn load_field(path: &str) -> Result<DiscreteField> {
    let text = std::fs::read_to_string(Path::new(path))?;
    parse_field_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{gradient, sym_gradient};

    #[test]
    fn operator_round_trip() {
        let op = gradient(2, 1).unwrap();
        let text = format_operator(&op);
        let parsed = parse_operator_text(&text).unwrap();
        assert_eq!(parsed, op);
        assert_eq!(parsed.space_dim(), 2);
        assert_eq!(parsed.value_dim(), 1);
        assert_eq!(parsed.target_dim(), 2);
        let sg = sym_gradient(3).unwrap();
        assert_eq!(parse_operator_text(&format_operator(&sg)).unwrap(), sg);
    }

    #[test]
    fn operator_parse_errors_carry_line_numbers() {
        // block A2 is one row short
        let text = "n=2\nN=1\nK=2\nA1:\n1\n0\nA2:\n0\n";
        match parse_operator_text(text) {
            Err(AbvError::Parse { line, message }) => {
                assert_eq!(line, 7, "{message}");
                assert!(message.contains("A2"));
            }
            other => panic!("unexpected {other:?}"),
        }
        // ragged row
        let text = "n=2\nN=1\nK=2\nA1:\n1 2\n0\nA2:\n0\n1\n";
        match parse_operator_text(text) {
            Err(AbvError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        // non-numeric token
        let text = "n=2\nN=1\nK=2\nA1:\n1\nfoo\nA2:\n0\n1\n";
        match parse_operator_text(text) {
            Err(AbvError::Parse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("foo"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn builtin_shorthand_matches_catalog() {
        let a = resolve_operator("builtin:symgrad,3").unwrap();
        assert_eq!(a, sym_gradient(3).unwrap());
        let g = resolve_operator("builtin:gradient,2,4").unwrap();
        assert_eq!(g, gradient(2, 4).unwrap());
        assert!(resolve_operator("builtin:symgrad").is_err());
    }

    #[test]
    fn domain_formats() {
        let d = parse_domain_text("kind=disk\ncenter=0 0\nradius=1\n").unwrap();
        assert!((d.perimeter() - std::f64::consts::TAU).abs() < 1e-12);
        let b = parse_domain_text("kind=box\nmin=0 0\nmax=1 0.25\n").unwrap();
        assert!((b.area() - 0.25).abs() < 1e-12);
        let p =
            parse_domain_text("kind=polygon\nvertex=0 0\nvertex=1 0\nvertex=0.5 1\n").unwrap();
        assert!((p.area() - 0.5).abs() < 1e-12);
        assert!(parse_domain_text("kind=disk\ncenter=0 0\n").is_err());
        assert!(matches!(
            parse_domain_text("kind=disk\nradius=1\nwhat\n"),
            Err(AbvError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn field_round_trip_is_exact() {
        let grid = Grid::square(2, -1.0, 1.0, 7).unwrap();
        let f = DiscreteField::from_fn(grid, 2, |x| vec![x[0] * 0.31 + 1e-17, (x[1] * 3.7).sin()]);
        let text = format_field(&f);
        let parsed = parse_field_text(&text).unwrap();
        assert_eq!(parsed.components, 2);
        assert_eq!(parsed.grid, f.grid);
        // 17 significant digits round-trip f64 exactly
        assert_eq!(parsed.data, f.data);
    }
}
