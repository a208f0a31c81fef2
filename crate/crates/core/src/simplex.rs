//! Phase-one simplex for small dense feasibility problems
//! `A p = b, p ≥ 0`. Bland's rule, so it terminates on degenerate input.

const PIVOT_EPS: f64 = 1e-12;

pub(crate) struct PhaseOne {
    /// Sum of artificial variables at the optimum: the L1 distance between
    /// `b` and the closest point of `{A p : p ≥ 0}` reachable by the method.
    pub residual: f64,
    pub solution: Vec<f64>,
}

/// Minimizes the sum of artificials for `A p + s = b` with `s ≥ 0`.
pub(crate) fn phase_one(a: &[Vec<f64>], b: &[f64]) -> PhaseOne {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let width = n + m + 1;
    // Tableau rows: constraints, then the objective row (reduced costs).
    let mut t = vec![vec![0.0; width]; m + 1];
    let mut basis: Vec<usize> = (n..n + m).collect();
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = sign * b[i];
    }
    // Objective row: minimize sum of artificials, expressed in non-basics.
    let (rows, objective) = t.split_at_mut(m);
    for (j, cost) in objective[0].iter_mut().enumerate() {
        if (n..n + m).contains(&j) {
            continue;
        }
        *cost = -rows.iter().map(|row| row[j]).sum::<f64>();
    }

    while let Some(col) = (0..n + m).find(|&j| t[m][j] < -PIVOT_EPS) {
        let mut row: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][col] > PIVOT_EPS {
                let ratio = t[i][width - 1] / t[i][col];
                let better = ratio < best - PIVOT_EPS
                    || (ratio <= best + PIVOT_EPS && row.is_some_and(|r| basis[i] < basis[r]));
                if better {
                    best = ratio;
                    row = Some(i);
                }
            }
        }
        let Some(r) = row else {
            // Cannot happen for a phase-one problem (bounded below by 0).
            break;
        };
        pivot(&mut t, r, col);
        basis[r] = col;
    }

    let mut solution = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            solution[bv] = t[i][width - 1].max(0.0);
        }
    }
    PhaseOne {
        residual: -t[m][width - 1],
        solution,
    }
}

fn pivot(t: &mut [Vec<f64>], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[c];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simplex_point() {
        // p1 + p2 = 1, p1 - p2 = 0.5
        let r = phase_one(&[vec![1.0, 1.0], vec![1.0, -1.0]], &[1.0, 0.5]);
        assert!(r.residual.abs() < 1e-12);
        assert!((r.solution[0] - 0.75).abs() < 1e-12);
        assert!((r.solution[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // p1 + p2 = 1, p1 + p2 = 2
        let r = phase_one(&[vec![1.0, 1.0], vec![1.0, 1.0]], &[1.0, 2.0]);
        assert!((r.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs() {
        // p1 - p2 = -1 with p >= 0
        let r = phase_one(&[vec![1.0, -1.0]], &[-1.0]);
        assert!(r.residual.abs() < 1e-12);
        assert!((r.solution[1] - r.solution[0] - 1.0).abs() < 1e-12);
    }
}
