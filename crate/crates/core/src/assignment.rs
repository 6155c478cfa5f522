//! Minimum-cost rectangular assignment (Hungarian method with potentials).

/// Assigns rows to columns minimizing total cost. Returns, for each row, the
/// assigned column (`None` for surplus rows when there are more rows than
/// columns). `cost` is row-major with `cols` entries per row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        // Solve the transpose so that rows never outnumber columns.
        let t: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        let cols = min_cost_assignment(&t);
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                rows[i] = Some(j);
            }
        }
        return rows;
    }
    // 1-based potentials formulation; column 0 is a sentinel.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut rows = vec![None; n];
    for j in 1..=m {
        if owner[j] > 0 {
            rows[owner[j] - 1] = Some(j - 1);
        }
    }
    rows
}

/// Maximum-weight matching restricted to pairs with weight at least
/// `min_weight`. Returns `(row, col)` pairs sorted by row.
pub fn max_weight_matching(weight: &[Vec<f64>], min_weight: f64) -> Vec<(usize, usize)> {
    let n = weight.len();
    let m = weight.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let max = weight
        .iter()
        .flatten()
        .filter(|w| w.is_finite())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    // Inadmissible pairs cost more than leaving every row unmatched.
    let forbidden = (max + 1.0) * (n + m) as f64 + 1.0;
    let cost: Vec<Vec<f64>> = weight
        .iter()
        .map(|r| r.iter().map(|&w| if w >= min_weight { -w } else { forbidden }).collect())
        .collect();
    min_cost_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .filter(|&(i, j)| weight[i][j] >= min_weight)
        .collect()
}
