//! Rectangular linear assignment (shortest augmenting path with potentials).

use crate::scalar::Scalar;

/// Minimum-cost assignment of every row of a `rows x cols` cost matrix
/// (`rows <= cols`) to a distinct column. Returns the column chosen for
/// each row.
fn solve_wide<T: Scalar>(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> T) -> Vec<usize> {
    debug_assert!(rows <= cols);
    let inf = T::infinity();
    // 1-based with a sentinel column 0
    let mut u = vec![T::zero(); rows + 1];
    let mut v = vec![T::zero(); cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
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

    let mut assignment = vec![usize::MAX; rows];
    for j in 1..=cols {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Minimum-cost one-to-one assignment between `rows` and `cols` items;
/// `min(rows, cols)` pairs `(row, col)` sorted by row.
pub fn min_cost_assignment<T: Scalar>(
    rows: usize,
    cols: usize,
    cost: impl Fn(usize, usize) -> T,
) -> Vec<(usize, usize)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows <= cols {
        solve_wide(rows, cols, cost)
            .into_iter()
            .enumerate()
            .collect()
    } else {
        let mut pairs: Vec<(usize, usize)> = solve_wide(cols, rows, |c, r| cost(r, c))
            .into_iter()
            .enumerate()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(costs: &[Vec<f64>]) -> f64 {
        fn rec(costs: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == costs.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    best = best.min(costs[row][c] + rec(costs, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(costs, 0, &mut vec![false; costs[0].len()])
    }

    #[test]
    fn small_cases() {
        let c = [[-0.9, -0.3], [-0.4, -0.8]];
        assert_eq!(
            min_cost_assignment(2, 2, |r, k| c[r][k]),
            vec![(0, 0), (1, 1)]
        );
        let c = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let a = min_cost_assignment(3, 3, |r, k| c[r][k]);
        let total: f64 = a.iter().map(|&(r, k)| c[r][k]).sum();
        assert_eq!(total, 5.0);
        assert!(min_cost_assignment::<f64>(0, 3, |_, _| 0.0).is_empty());
    }

    #[test]
    fn tall_and_wide_match_brute_force() {
        let mut seed = 7u64;
        let mut next = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64)
        };
        for rows in 1..5 {
            for cols in 1..5 {
                let costs: Vec<Vec<f64>> = (0..rows)
                    .map(|_| (0..cols).map(|_| next()).collect())
                    .collect();
                let a = min_cost_assignment(rows, cols, |r, c| costs[r][c]);
                assert_eq!(a.len(), rows.min(cols));
                let total: f64 = a.iter().map(|&(r, c)| costs[r][c]).sum();
                let oracle = if rows <= cols {
                    brute(&costs)
                } else {
                    let t: Vec<Vec<f64>> = (0..cols)
                        .map(|c| (0..rows).map(|r| costs[r][c]).collect())
                        .collect();
                    brute(&t)
                };
                assert!((total - oracle).abs() < 1e-12);
            }
        }
    }
}
