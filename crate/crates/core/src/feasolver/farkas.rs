//! Theorem-of-the-alternative helpers for systems `Θu ≤ Λ`.

use nalgebra::{DMatrix, DVector};

use super::lp::{lp_solve, LinearProgram, LpOutcome};

/// Tolerance on `‖yᵀΘ‖∞` for an accepted certificate.
pub const FARKAS_RESIDUAL_TOL: f64 = 1e-8;

/// Returns `y ≥ 0`, `Σy = 1`, with `yᵀΘ = 0` and `yᵀΛ ≤ -eps_strict` when
/// one exists, proving `{u : Θu ≤ Λ}` empty.
pub fn farkas_check(theta: &DMatrix<f64>, lambda: &DVector<f64>, eps_strict: f64) -> Option<DVector<f64>> {
    let k = theta.nrows();
    assert_eq!(k, lambda.len(), "theta and lambda disagree in row count");
    if k == 0 {
        return None;
    }
    let m = theta.ncols();
    let mut lp = LinearProgram::new(k);
    for i in 0..k {
        lp.lower[i] = 0.0;
    }
    for j in 0..m {
        lp.add_eq(theta.column(j).iter().copied().collect(), 0.0);
    }
    lp.add_eq(vec![1.0; k], 1.0);
    lp.minimize(lambda.iter().copied().collect());
    let LpOutcome::Optimal { x, .. } = lp_solve(&lp).ok()? else {
        return None;
    };
    let y = DVector::from_vec(x.into_iter().map(|v| v.max(0.0)).collect());
    let residual = theta.tr_mul(&y).amax();
    let scale = theta.amax().max(1.0);
    if residual <= FARKAS_RESIDUAL_TOL * scale && lambda.dot(&y) <= -eps_strict {
        Some(y)
    } else {
        None
    }
}

/// A point of `{u : Θu ≤ Λ}` when the system is feasible.
pub fn primal_point(theta: &DMatrix<f64>, lambda: &DVector<f64>) -> Option<DVector<f64>> {
    let m = theta.ncols();
    let mut lp = LinearProgram::new(m);
    for i in 0..theta.nrows() {
        lp.add_le(theta.row(i).iter().copied().collect(), lambda[i]);
    }
    lp.minimize(vec![0.0; m]);
    match lp_solve(&lp).ok()? {
        LpOutcome::Optimal { x, .. } => Some(DVector::from_vec(x)),
        _ => None,
    }
}

/// Largest value of `t ≤ 1` such that some `u` satisfies `Θu + t·s ≤ Λ`,
/// where `s_i` is the row norm of `Θ_i` (or 1 for zero rows): a normalized
/// depth of the feasible set. Negative when the system is infeasible.
pub fn primal_margin(theta: &DMatrix<f64>, lambda: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
    let m = theta.ncols();
    let mut lp = LinearProgram::new(m + 1);
    for i in 0..theta.nrows() {
        let mut row: Vec<f64> = theta.row(i).iter().copied().collect();
        let norm = theta.row(i).norm();
        row.push(if norm > 0.0 { norm } else { 1.0 });
        lp.add_le(row, lambda[i]);
    }
    lp.upper[m] = 1.0;
    let mut c = vec![0.0; m + 1];
    c[m] = -1.0;
    lp.minimize(c);
    match lp_solve(&lp).ok()? {
        LpOutcome::Optimal { x, .. } => Some((x[m], DVector::from_column_slice(&x[..m]))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_obstruction_has_certificate() {
        // -u <= 0 and u <= -5
        let theta = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let lambda = DVector::from_vec(vec![0.0, -5.0]);
        let y = farkas_check(&theta, &lambda, 1e-7).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-12 && (y[1] - 0.5).abs() < 1e-12);
        assert!(primal_point(&theta, &lambda).is_none());
        assert!(primal_margin(&theta, &lambda).unwrap().0 < 0.0);
    }

    #[test]
    fn feasible_system_has_no_certificate() {
        // -u <= 5 and u <= 0, satisfied by u = -5
        let theta = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let lambda = DVector::from_vec(vec![5.0, 0.0]);
        assert!(farkas_check(&theta, &lambda, 1e-7).is_none());
        let u = primal_point(&theta, &lambda).unwrap();
        assert!(-u[0] <= 5.0 + 1e-12 && u[0] <= 1e-12);
    }

    #[test]
    fn zero_theta_with_nonnegative_lambda() {
        let theta = DMatrix::zeros(3, 2);
        let lambda = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        assert!(farkas_check(&theta, &lambda, 1e-7).is_none());
        let lambda = DVector::from_vec(vec![0.0, -1.0, 2.0]);
        let y = farkas_check(&theta, &lambda, 1e-7).unwrap();
        assert!((y[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_loop_rows_have_no_columns() {
        let theta = DMatrix::zeros(2, 0);
        assert!(farkas_check(&theta, &DVector::from_vec(vec![1.0, 0.0]), 1e-7).is_none());
        assert!(farkas_check(&theta, &DVector::from_vec(vec![1.0, -0.5]), 1e-7).is_some());
        assert!(primal_point(&theta, &DVector::from_vec(vec![1.0, 0.0])).is_some());
    }
}
