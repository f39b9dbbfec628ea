//! Polynomial vector fields with exact coefficient arithmetic, used
//! for nullspace bases, projections and averaged Taylor polynomials.

use std::collections::BTreeMap;

use crate::operator::Operator;

/// Multi-indices of exact degree `d` in `n` variables, graded
/// lexicographic within the degree.
pub fn multi_indices_of_degree(n: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 1 {
            prefix.push(d);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for i in (0..=d).rev() {
            prefix.push(i);
            rec(n - 1, d - i, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, d, &mut Vec::new(), &mut out);
    out
}

/// Multi-indices of degree at most `d`, ordered by degree then lex.
pub fn multi_indices_up_to(n: usize, d: u32) -> Vec<Vec<u32>> {
    (0..=d).flat_map(|k| multi_indices_of_degree(n, k)).collect()
}

/// `Γ(half/2)` for positive integer `half`.
fn gamma_half(half: u64) -> f64 {
    match half {
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (half as f64 / 2.0 - 1.0) * gamma_half(half - 2),
    }
}

/// Exact integral of the monomial `x^beta` over the unit ball of R^n.
pub fn unit_ball_monomial_integral(beta: &[u32]) -> f64 {
    if beta.iter().any(|&b| b % 2 == 1) {
        return 0.0;
    }
    let n = beta.len() as u64;
    let total: u64 = beta.iter().map(|&b| b as u64).sum();
    // sphere moment 2 Π Γ((β_i+1)/2) / Γ((|β|+n)/2), then radial factor
    let mut num = 2.0;
    for &b in beta {
        num *= gamma_half(b as u64 + 1);
    }
    let sphere = num / gamma_half(total + n);
    sphere / (total + n) as f64
}

/// A polynomial field `R^n → R^m` stored as a sparse map from
/// `(component, multi-index)` to coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVectorField {
    pub n: usize,
    pub components: usize,
    pub terms: BTreeMap<(usize, Vec<u32>), f64>,
}

impl PolyVectorField {
    pub fn zero(n: usize, components: usize) -> Self {
        PolyVectorField {
            n,
            components,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, values: &[f64]) -> Self {
        let mut p = PolyVectorField::zero(n, values.len());
        for (j, &v) in values.iter().enumerate() {
            if v != 0.0 {
                p.terms.insert((j, vec![0; n]), v);
            }
        }
        p
    }

    /// Single monomial term `c · x^beta` in component `j`.
    pub fn monomial(n: usize, components: usize, j: usize, beta: Vec<u32>, c: f64) -> Self {
        let mut p = PolyVectorField::zero(n, components);
        if c != 0.0 {
            p.terms.insert((j, beta), c);
        }
        p
    }

    pub fn add_term(&mut self, j: usize, beta: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let key = (j, beta);
        let entry = self.terms.entry(key.clone()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|(_, beta)| beta.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components];
        for ((j, beta), &c) in &self.terms {
            let mut m = c;
            for (d, &b) in beta.iter().enumerate() {
                for _ in 0..b {
                    m *= x[d];
                }
            }
            out[*j] += m;
        }
        out
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for ((j, beta), &c) in &other.terms {
            let entry = self.terms.entry((*j, beta.clone())).or_insert(0.0);
            *entry += a * c;
        }
        self.terms.retain(|_, c| *c != 0.0);
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.terms.values_mut() {
            *c *= a;
        }
    }

    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.abs() > tol);
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Exact L2 inner product over the unit ball centered at the
    /// origin (componentwise, summed).
    pub fn inner_unit_ball(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for ((j1, b1), &c1) in &self.terms {
            for ((j2, b2), &c2) in &other.terms {
                if j1 != j2 {
                    continue;
                }
                let sum: Vec<u32> = b1.iter().zip(b2).map(|(a, b)| a + b).collect();
                acc += c1 * c2 * unit_ball_monomial_integral(&sum);
            }
        }
        acc
    }

    /// Reparametrizes to local ball coordinates: returns `q` with
    /// `q(y) = p(center + radius · y)`.
    pub fn to_local(&self, center: &[f64], radius: f64) -> Self {
        let mut out = PolyVectorField::zero(self.n, self.components);
        for ((j, beta), &c) in &self.terms {
            // expand Π_d (center_d + radius y_d)^{β_d}
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![], c)];
            for (d, &b) in beta.iter().enumerate() {
                let mut next = Vec::new();
                for (idx, coef) in &partial {
                    for k in 0..=b {
                        let binom = binomial(b, k);
                        let term = coef
                            * binom
                            * center[d].powi((b - k) as i32)
                            * radius.powi(k as i32);
                        if term == 0.0 {
                            continue;
                        }
                        let mut nidx = idx.clone();
                        nidx.push(k);
                        next.push((nidx, term));
                    }
                    let _ = d;
                }
                partial = next;
            }
            for (idx, coef) in partial {
                out.add_term(*j, idx, coef);
            }
        }
        out
    }

    /// Inverse of [`to_local`]: returns `q` with
    /// `q(x) = p((x - center)/radius)`.
    pub fn to_global(&self, center: &[f64], radius: f64) -> Self {
        let inv_center: Vec<f64> = center.iter().map(|&c| -c / radius).collect();
        self.to_local(&inv_center, 1.0 / radius)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Applies `A` to a polynomial field symbolically; the result is an
/// exact polynomial with `K` components.
pub fn apply_operator(op: &Operator, p: &PolyVectorField) -> PolyVectorField {
    assert_eq!(p.n, op.space_dim());
    assert_eq!(p.components, op.value_dim());
    let mut out = PolyVectorField::zero(p.n, op.target_dim());
    for ((j, beta), &c) in &p.terms {
        for alpha in 0..op.space_dim() {
            if beta[alpha] == 0 {
                continue;
            }
            let mut db = beta.clone();
            db[alpha] -= 1;
            let dc = c * beta[alpha] as f64;
            let a = op.coeff(alpha);
            for row in 0..op.target_dim() {
                let coef = a[(row, *j)];
                if coef != 0.0 {
                    out.add_term(row, db.clone(), coef * dc);
                }
            }
        }
    }
    out
}
