//! Maximum-weight assignment (Hungarian algorithm with potentials).

use nalgebra::DMatrix;

/// Returns `cols` with `cols[r]` the column assigned to row `r`, maximizing
/// the total weight. Requires `rows <= cols`; every row is assigned to a
/// distinct column.
pub fn max_weight_assignment(weights: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = weights.shape();
    assert!(n <= m, "assignment needs rows <= cols ({n} > {m})");
    if n == 0 {
        return Vec::new();
    }
    // Minimize the negated weights. 1-based arrays with a virtual row/col 0.
    let cost = |i: usize, j: usize| -weights[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
    let mut rows = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            rows[p[j] - 1] = j - 1;
        }
    }
    rows
}

/// Total weight of an assignment.
pub fn assignment_weight(weights: &DMatrix<f64>, cols: &[usize]) -> f64 {
    cols.iter().enumerate().map(|(r, &c)| weights[(r, c)]).sum()
}

/// Calls `f` with every permutation of `0..k` (Heap's algorithm).
pub fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut c = vec![0; k];
    f(&perm);
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}
