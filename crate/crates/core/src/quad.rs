//! Quadrature rules on balls. In 2D and 3D the rules are
//! Gauss-Legendre in the radius crossed with uniform angles, which is
//! exact on polynomials up to the rule order; other dimensions fall
//! back to midpoint nodes restricted by the ball indicator.

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_k(x) and P'_k(x)
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = pj;
            }
            let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for j in 2..=k {
            let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = pj;
        }
        let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Cell-center (midpoint) nodes on the unit ball: a uniform grid over
/// the bounding box restricted by the indicator, `resolution` cells
/// per radius.
pub fn unit_ball_midpoint(n: usize, resolution: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let q = 2 * resolution.max(2);
    let step = 2.0 / q as f64;
    let w = step.powi(n as i32);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let y: Vec<f64> = idx.iter().map(|&i| -1.0 + (i as f64 + 0.5) * step).collect();
        if y.iter().map(|v| v * v).sum::<f64>() < 1.0 {
            nodes.push(y);
            weights.push(w);
        }
        let mut d = n;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < q {
                break;
            }
            idx[d] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }
    (nodes, weights)
}

/// Quadrature nodes and weights for the unit ball of `R^n`;
/// `resolution` counts radial points (nodes per radius).
pub fn unit_ball_rule(n: usize, resolution: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let res = resolution.max(2);
    match n {
        1 => {
            let (xs, ws) = gauss_legendre(2 * res);
            (xs.iter().map(|&x| vec![x]).collect(), ws)
        }
        2 => {
            // ∫_B f = ∫_0^1 r ∫_0^{2π} f(r cos, r sin) dθ dr
            let (rs, rws) = gauss_legendre(res);
            let ntheta = 4 * res;
            let dtheta = std::f64::consts::TAU / ntheta as f64;
            let mut nodes = Vec::with_capacity(res * ntheta);
            let mut weights = Vec::with_capacity(res * ntheta);
            for (r01, rw) in rs.iter().zip(&rws) {
                let r = 0.5 * (r01 + 1.0);
                let rw = 0.5 * rw;
                for t in 0..ntheta {
                    let theta = (t as f64 + 0.5) * dtheta;
                    nodes.push(vec![r * theta.cos(), r * theta.sin()]);
                    weights.push(r * rw * dtheta);
                }
            }
            (nodes, weights)
        }
        3 => {
            // ∫_B f = ∫_0^1 r² ∫_{-1}^1 ∫_0^{2π} f dθ dμ dr
            let (rs, rws) = gauss_legendre(res);
            let (mus, muws) = gauss_legendre(res.max(4));
            let ntheta = 2 * res.max(4);
            let dtheta = std::f64::consts::TAU / ntheta as f64;
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            for (r01, rw) in rs.iter().zip(&rws) {
                let r = 0.5 * (r01 + 1.0);
                let rw = 0.5 * rw;
                for (mu, muw) in mus.iter().zip(&muws) {
                    let s = (1.0 - mu * mu).sqrt();
                    for t in 0..ntheta {
                        let theta = (t as f64 + 0.5) * dtheta;
                        nodes.push(vec![r * s * theta.cos(), r * s * theta.sin(), r * mu]);
                        weights.push(r * r * rw * muw * dtheta);
                    }
                }
            }
            (nodes, weights)
        }
        _ => {
            // midpoint nodes restricted by the indicator
            let q = 2 * res;
            let step = 2.0 / q as f64;
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            let mut idx = vec![0usize; n];
            loop {
                let y: Vec<f64> = idx.iter().map(|&i| -1.0 + (i as f64 + 0.5) * step).collect();
                if y.iter().map(|v| v * v).sum::<f64>() < 1.0 {
                    nodes.push(y);
                    weights.push(step.powi(n as i32));
                }
                let mut d = n;
                loop {
                    if d == 0 {
                        break;
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < q {
                        break;
                    }
                    idx[d] = 0;
                }
                if idx.iter().all(|&i| i == 0) {
                    break;
                }
            }
            (nodes, weights)
        }
    }
}
