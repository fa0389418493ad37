//! Minimum-cost rectangular linear assignment (shortest augmenting path
//! Hungarian method with row/column potentials), `O(n² m)`.

use ndarray::Array2;

/// Result of [`solve`]: `row_to_col[i]` is the column assigned to row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAssignment {
    pub row_to_col: Vec<Option<usize>>,
    pub total: f64,
}

impl LinearAssignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col.iter().enumerate().filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Assigns `min(rows, cols)` rows to distinct columns minimising the summed
/// cost. Costs must be finite. The total is summed in row order.
pub fn solve(cost: &Array2<f64>) -> LinearAssignment {
    let (rows, cols) = cost.dim();
    assert!(cost.iter().all(|c| c.is_finite()), "assignment costs must be finite");
    if rows == 0 || cols == 0 {
        return LinearAssignment { row_to_col: vec![None; rows], total: 0.0 };
    }
    let row_to_col = if rows <= cols {
        shortest_augmenting(rows, cols, |i, j| cost[[i, j]])
    } else {
        let col_to_row = shortest_augmenting(cols, rows, |i, j| cost[[j, i]]);
        let mut r2c = vec![None; rows];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                r2c[r] = Some(c);
            }
        }
        r2c
    };
    let total = row_to_col.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost[[r, c]])).sum();
    LinearAssignment { row_to_col, total }
}

/// `n <= m`; returns, for each of the `n` rows, its assigned column.
fn shortest_augmenting(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal() {
        let r = solve(&array![[1.0, 2.0], [2.0, 1.0]]);
        assert_eq!(r.row_to_col, vec![Some(0), Some(1)]);
        assert_eq!(r.total, 2.0);
    }

    #[test]
    fn crossed() {
        let r = solve(&array![[5.0, 1.0], [1.0, 5.0]]);
        assert_eq!(r.row_to_col, vec![Some(1), Some(0)]);
        assert_eq!(r.total, 2.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = array![[4.0, 1.0, 3.0]];
        assert_eq!(solve(&wide).row_to_col, vec![Some(1)]);
        let tall = array![[4.0], [1.0], [3.0]];
        let r = solve(&tall);
        assert_eq!(r.row_to_col, vec![None, Some(0), None]);
        assert_eq!(r.total, 1.0);
    }

    #[test]
    fn empty() {
        let r = solve(&Array2::zeros((0, 3)));
        assert!(r.row_to_col.is_empty());
        let r = solve(&Array2::zeros((2, 0)));
        assert_eq!(r.row_to_col, vec![None, None]);
    }

    #[test]
    fn negative_costs() {
        let r = solve(&array![[-0.8, 0.7], [0.2, -0.1]]);
        assert_eq!(r.row_to_col, vec![Some(0), Some(1)]);
    }
}
