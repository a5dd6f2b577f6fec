//! Minimum-cost linear assignment (Hungarian algorithm with potentials,
//! O(n² m) for n ≤ m).

/// Solves the rectangular assignment problem on `costs` (row-major,
/// `rows x cols`). Every row is assigned when `rows <= cols`, every column
/// when `rows > cols`. Returns the column chosen for each row.
///
/// # Panics
///
/// If `costs.len() != rows * cols` or any cost is not finite.
pub fn min_cost_assignment(costs: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(costs.len(), rows * cols, "cost matrix shape mismatch");
    assert!(costs.iter().all(|c| c.is_finite()), "costs must be finite");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve_wide(|i, j| costs[i * cols + j], rows, cols)
    } else {
        let by_col = solve_wide(|j, i| costs[i * cols + j], cols, rows);
        let mut out = vec![None; rows];
        for (j, row) in by_col.into_iter().enumerate() {
            if let Some(i) = row {
                out[i] = Some(j);
            }
        }
        out
    }
}

/// Total cost of an assignment. The selected entries are summed in ascending
/// order so that pairings with the same entries give the same total,
/// whichever rows they sit on.
pub fn assignment_cost(costs: &[f64], cols: usize, assignment: &[Option<usize>]) -> f64 {
    let mut picked: Vec<f64> = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| costs[i * cols + j]))
        .collect();
    picked.sort_by(f64::total_cmp);
    picked.into_iter().sum()
}

fn solve_wide(cost: impl Fn(usize, usize) -> f64, n: usize, m: usize) -> Vec<Option<usize>> {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    // 1-based; index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_square() {
        let costs = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = min_cost_assignment(&costs, 3, 3);
        assert_eq!(a, vec![Some(1), Some(0), Some(2)]);
        assert_eq!(assignment_cost(&costs, 3, &a), 5.0);
    }

    #[test]
    fn dominant_diagonal() {
        let costs = [1.0, 2.0, 2.0, 1.0];
        assert_eq!(min_cost_assignment(&costs, 2, 2), vec![Some(0), Some(1)]);
    }

    #[test]
    fn tall_and_wide() {
        // 3 rows, 2 cols: row 1 is left out
        let costs = [1.0, 9.0, 5.0, 5.0, 9.0, 1.0];
        assert_eq!(min_cost_assignment(&costs, 3, 2), vec![Some(0), None, Some(1)]);
        let wide = [9.0, 1.0, 9.0, 1.0, 9.0, 9.0];
        assert_eq!(min_cost_assignment(&wide, 2, 3), vec![Some(1), Some(0)]);
    }

    #[test]
    fn empty() {
        assert_eq!(min_cost_assignment(&[], 0, 3), Vec::<Option<usize>>::new());
        assert_eq!(min_cost_assignment(&[], 2, 0), vec![None, None]);
    }
}
