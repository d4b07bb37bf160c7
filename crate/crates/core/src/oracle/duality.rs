use nalgebra::{DMatrix, DVector};

/// Feasibility of `{u : Θu ≤ Λ}` by visiting every minimal face: each is
/// the solution set of `rank Θ` independent rows held at equality, and its
/// least-norm point is checked against all rows.
pub fn primal_feasible_by_vertices(theta: &DMatrix<f64>, lambda: &DVector<f64>, tol: f64) -> bool {
    let k = theta.nrows();
    if theta.ncols() == 0 || k == 0 {
        return lambda.iter().all(|&v| v >= -tol);
    }
    let rank = theta.rank(1e-9);
    let feasible = |u: &DVector<f64>| (theta * u - lambda).iter().all(|&v| v <= tol);
    if rank == 0 {
        return feasible(&DVector::zeros(theta.ncols()));
    }
    let mut subset: Vec<usize> = (0..rank).collect();
    loop {
        let rows = theta.select_rows(subset.iter());
        if rows.rank(1e-9) == rank {
            let rhs = DVector::from_iterator(rank, subset.iter().map(|&i| lambda[i]));
            if let Ok(pinv) = rows.clone().pseudo_inverse(1e-12) {
                if feasible(&(pinv * rhs)) {
                    return true;
                }
            }
        }
        // next combination in lexicographic order
        let mut i = rank;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if subset[i] < k - rank + i {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..rank {
            subset[j] = subset[j - 1] + 1;
        }
    }
}
