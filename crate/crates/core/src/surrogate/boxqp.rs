use nalgebra::{DMatrix, DVector};

/// Exact minimizer of `½ xᵀHx + qᵀx` over `lower ≤ x ≤ upper` for symmetric
/// positive definite `H`.
///
/// Tries the clamped unconstrained solution first, then a primal-dual active
/// set iteration, and finally exhaustive enumeration of the active sets for
/// small problems. Returns `None` only if `H` is not positive definite.
pub fn box_qp(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = q.len();
    let scale = 1.0 + h.amax() + q.amax();
    let tol = 1e-11 * scale;

    let x0 = h.clone().cholesky()?.solve(&(-q));
    let clamped = clamp(&x0, lower, upper);
    if kkt_holds(h, q, lower, upper, &clamped, tol) {
        return Some(clamped);
    }

    // Primal-dual active set; 0 free, 1 at lower, 2 at upper.
    let mut state: Vec<u8> = (0..n)
        .map(|k| {
            if x0[k] <= lower[k] {
                1
            } else if x0[k] >= upper[k] {
                2
            } else {
                0
            }
        })
        .collect();
    let mut visited = std::collections::HashSet::new();
    for _ in 0..(4 * n + 20) {
        if !visited.insert(state.clone()) {
            break;
        }
        let x = solve_with_active(h, q, lower, upper, &state)?;
        let g = h * &x + q;
        if kkt_holds(h, q, lower, upper, &x, tol) {
            return Some(x);
        }
        state = (0..n)
            .map(|k| {
                let at_lower = state[k] == 1 && g[k] >= 0.0;
                let at_upper = state[k] == 2 && g[k] <= 0.0;
                if at_lower || (state[k] == 0 && x[k] < lower[k]) {
                    1
                } else if at_upper || (state[k] == 0 && x[k] > upper[k]) {
                    2
                } else {
                    0
                }
            })
            .collect();
    }

    if n <= 12 {
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut state = vec![0u8; n];
        loop {
            if let Some(x) = solve_with_active(h, q, lower, upper, &state) {
                let feasible = (0..n).all(|k| x[k] >= lower[k] - tol && x[k] <= upper[k] + tol);
                if feasible {
                    let x = clamp(&x, lower, upper);
                    let v = 0.5 * x.dot(&(h * &x)) + q.dot(&x);
                    if best.as_ref().is_none_or(|(b, _)| v < *b) {
                        best = Some((v, x));
                    }
                }
            }
            if !advance(&mut state) {
                break;
            }
        }
        return best.map(|(_, x)| x);
    }

    Some(projected_gradient(h, q, lower, upper, clamped))
}

fn advance(state: &mut [u8]) -> bool {
    for s in state.iter_mut() {
        if *s < 2 {
            *s += 1;
            return true;
        }
        *s = 0;
    }
    false
}

fn clamp(x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |k, _| x[k].max(lower[k]).min(upper[k]))
}

fn solve_with_active(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    state: &[u8],
) -> Option<DVector<f64>> {
    let n = q.len();
    let mut x = DVector::zeros(n);
    let free: Vec<usize> = (0..n).filter(|&k| state[k] == 0).collect();
    for k in 0..n {
        match state[k] {
            1 => x[k] = lower[k],
            2 => x[k] = upper[k],
            _ => {}
        }
        if !x[k].is_finite() {
            return None;
        }
    }
    if free.is_empty() {
        return Some(x);
    }
    let hf = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
    let rhs = DVector::from_fn(free.len(), |r, _| {
        let k = free[r];
        let mut s = -q[k];
        for j in 0..n {
            if state[j] != 0 {
                s -= h[(k, j)] * x[j];
            }
        }
        s
    });
    let xf = hf.cholesky()?.solve(&rhs);
    for (r, &k) in free.iter().enumerate() {
        x[k] = xf[r];
    }
    Some(x)
}

fn kkt_holds(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x: &DVector<f64>,
    tol: f64,
) -> bool {
    let g = h * x + q;
    (0..x.len()).all(|k| {
        if x[k] < lower[k] - tol || x[k] > upper[k] + tol {
            return false;
        }
        let at_lower = x[k] <= lower[k];
        let at_upper = x[k] >= upper[k];
        match (at_lower, at_upper) {
            (true, true) => true,
            (true, false) => g[k] >= -tol,
            (false, true) => g[k] <= tol,
            (false, false) => g[k].abs() <= tol,
        }
    })
}

fn projected_gradient(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    mut x: DVector<f64>,
) -> DVector<f64> {
    let l = h.clone().symmetric_eigenvalues().amax().max(f64::MIN_POSITIVE);
    for _ in 0..1_000_000 {
        let next = clamp(&(&x - (h * &x + q) / l), lower, upper);
        let moved = (&next - &x).amax();
        x = next;
        if moved <= 1e-15 * (1.0 + x.amax()) {
            break;
        }
    }
    x
}
