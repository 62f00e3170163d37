//! Exact rectangular linear assignment (Hungarian method with potentials,
//! shortest augmenting paths). `O(rows^2 * cols)`.

/// Minimum-cost assignment of every row to a distinct column.
///
/// `cost` is row-major with `rows * cols` entries and `rows <= cols`.
/// Returns `col_of_row`, where `col_of_row[i]` is the column assigned to row `i`.
pub fn solve(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols, "assignment needs rows <= cols ({rows} > {cols})");
    assert_eq!(cost.len(), rows * cols);
    if rows == 0 {
        return Vec::new();
    }
    // 1-based indexing with a virtual column 0, as in the classic e-maxx formulation.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut row_of_col = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![0.0f64; cols + 1];
    let mut used = vec![false; cols + 1];

    for i in 1..=rows {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let row = &cost[(i0 - 1) * cols..i0 * cols];
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
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
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![usize::MAX; rows];
    for j in 1..=cols {
        if row_of_col[j] != 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[f64], cols: usize, a: &[usize]) -> f64 {
        a.iter().enumerate().map(|(i, &j)| cost[i * cols + j]).sum()
    }

    #[test]
    fn small_square() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve(&cost, 3, 3);
        assert_eq!(total(&cost, 3, &a), 5.0);
        let mut seen = a.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn rectangular_picks_cheapest_columns() {
        // one row, three columns
        let a = solve(&[3.0, 0.5, 2.0], 1, 3);
        assert_eq!(a, vec![1]);
        let cost = [1.0, 9.0, 0.0, 9.0, 1.0, 0.0];
        let a = solve(&cost, 2, 3);
        assert_eq!(total(&cost, 3, &a), 1.0);
    }

    #[test]
    fn empty() {
        assert!(solve(&[], 0, 4).is_empty());
    }
}
