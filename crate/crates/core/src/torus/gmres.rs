//! Restarted GMRES with modified Gram–Schmidt and Givens rotations.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `op(y) = rhs` from `y = 0`. Right preconditioning is the caller's
/// business: fold `M⁻¹` into `op` and map the result back.
pub fn gmres<F: Fn(&[f64]) -> Vec<f64>>(
    op: F,
    rhs: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, GmresOutcome) {
    let len = rhs.len();
    let mut y = vec![0.0; len];
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return (y, GmresOutcome { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < max_iter {
        let applied = op(&y);
        let r: Vec<f64> = rhs.iter().zip(&applied).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        rel = beta / rhs_norm;
        if rel <= tol {
            return (y, GmresOutcome { iterations, relative_residual: rel, converged: true });
        }
        let m = restart.min(max_iter - iterations).max(1);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut w = op(&basis[j]);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i][j] = hij;
                w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = tmp;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            }
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iterations += 1;
            rel = g[j + 1].abs() / rhs_norm;
            if rel <= tol || hn <= f64::EPSILON * beta {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the triangular system
        let mut coef = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * coef[k]).sum();
            coef[i] = if h[i][i] == 0.0 { 0.0 } else { (g[i] - s) / h[i][i] };
        }
        for (c, v) in coef.iter().zip(&basis) {
            y.iter_mut().zip(v).for_each(|(yk, vk)| *yk += c * vk);
        }
        if rel <= tol {
            let applied = op(&y);
            let true_rel = norm(&rhs.iter().zip(&applied).map(|(b, a)| b - a).collect::<Vec<_>>()) / rhs_norm;
            return (y, GmresOutcome { iterations, relative_residual: true_rel, converged: true_rel <= tol * 10.0 });
        }
    }
    (y, GmresOutcome { iterations, relative_residual: rel, converged: false })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
