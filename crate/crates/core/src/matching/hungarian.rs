//! Rectangular maximum-weight assignment.
//!
//! Kuhn–Munkres with row/column potentials (O(r²c)) on negated weights,
//! followed by a lexicographic pass so that among equally good assignments
//! the one with the lowest column for the earliest row is returned.

const INF: f64 = f64::INFINITY;

/// Minimum-cost assignment of every row to a distinct column. `rows <= cols`.
fn min_cost(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let n = rows.len();
    let m = cols.len();
    debug_assert!(n <= m);
    if n == 0 {
        return Vec::new();
    }
    let c = |i: usize, j: usize| cost[rows[i - 1]][cols[j - 1]];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row matched to column j (1-based, 0 = free)
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = c(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            assignment[p[j] - 1] = cols[j - 1];
        }
    }
    assignment
}

fn best_total(weights: &[Vec<f64>], cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    min_cost(cost, rows, cols)
        .iter()
        .zip(rows)
        .map(|(&j, &i)| weights[i][j])
        .sum()
}

/// Assigns each row of `weights` to a distinct column maximizing the total.
/// Returns the column index for every row. Requires `rows <= cols` and
/// finite weights; the caller validates both.
pub(crate) fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let m = weights[0].len();
    let cost: Vec<Vec<f64>> = weights
        .iter()
        .map(|row| row.iter().map(|w| -w).collect())
        .collect();
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let optimum = best_total(weights, &cost, &all_rows, &all_cols);
    let tol = 1e-12 * optimum.abs().max(1.0);

    // Fix rows in order, each to the lowest column that still admits an optimum.
    let mut chosen = Vec::with_capacity(n);
    let mut free: Vec<usize> = all_cols;
    let mut fixed_total = 0.0;
    for i in 0..n {
        let rest: Vec<usize> = (i + 1..n).collect();
        let mut pick = None;
        for (k, &j) in free.iter().enumerate() {
            let remaining: Vec<usize> = free.iter().copied().filter(|&c| c != j).collect();
            let total = fixed_total + weights[i][j] + best_total(weights, &cost, &rest, &remaining);
            if total >= optimum - tol {
                pick = Some((k, j));
                break;
            }
        }
        // numerical fallback: keep the plain solver's column for this row
        let (k, j) = pick.unwrap_or_else(|| {
            let sub = min_cost(&cost, &(i..n).collect::<Vec<_>>(), &free);
            let j = sub[0];
            (
                free.iter().position(|&c| c == j).expect("column is free"),
                j,
            )
        });
        fixed_total += weights[i][j];
        chosen.push(j);
        free.remove(k);
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_minimum() {
        let costs = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let a = min_cost(&costs, &[0, 1, 2], &[0, 1, 2]);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| costs[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn ties_resolve_to_lowest_columns() {
        let w = vec![vec![1.0; 4]; 2];
        assert_eq!(max_weight_assignment(&w), vec![0, 1]);
        let w = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.5, 0.0]];
        // optima: (1,0) and (2,0) and (2,1)=1.0; (1,0) is lexicographically first
        assert_eq!(max_weight_assignment(&w), vec![1, 0]);
    }
}
