//! Euclidean projection onto a small polyhedron `{u : Cu ≤ d}` by active-set
//! enumeration.

use nalgebra::{DMatrix, DVector};

use super::farkas::primal_point;

const QP_TOL: f64 = 1e-9;

/// Minimizer of `‖u - target‖²` over `{u : Cu ≤ d}`, or `None` when the set
/// is empty.
pub fn project_onto_polyhedron(c: &DMatrix<f64>, d: &DVector<f64>, target: &DVector<f64>) -> Option<DVector<f64>> {
    let m = c.ncols();
    let k = c.nrows();
    let feasible = |u: &DVector<f64>| (0..k).all(|i| c.row(i).transpose().dot(u) - d[i] <= QP_TOL * (1.0 + d[i].abs()));
    if m == 0 {
        return feasible(target).then(|| target.clone());
    }
    if feasible(target) {
        return Some(target.clone());
    }
    primal_point(c, d)?;

    let rows: Vec<usize> = (0..k).filter(|&i| c.row(i).norm() > 0.0).collect();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut subset = Vec::with_capacity(m);
    let mut visit = |active: &[usize]| -> bool {
        let ca = DMatrix::from_fn(active.len(), m, |r, j| c[(active[r], j)]);
        let da = DVector::from_fn(active.len(), |r, _| d[active[r]]);
        let gram = &ca * ca.transpose();
        let Some(inv) = gram.try_inverse() else {
            return false;
        };
        let lambda = inv * (&ca * target - da);
        let u = target - ca.transpose() * &lambda;
        if !feasible(&u) {
            return false;
        }
        let dist = (&u - target).norm_squared();
        if lambda.iter().all(|&l| l >= -QP_TOL) {
            best = Some((dist, u));
            return true;
        }
        if best.as_ref().map_or(true, |(b, _)| dist < *b) {
            best = Some((dist, u));
        }
        false
    };
    if enumerate_subsets(&rows, m, 0, &mut subset, &mut visit) {
        return best.map(|(_, u)| u);
    }
    // Degenerate active sets: fall back to the best feasible candidate, or
    // to any feasible point.
    best.map(|(_, u)| u).or_else(|| primal_point(c, d))
}

fn enumerate_subsets(
    rows: &[usize],
    max: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    if !current.is_empty() && visit(current) {
        return true;
    }
    if current.len() == max {
        return false;
    }
    for i in start..rows.len() {
        current.push(rows[i]);
        if enumerate_subsets(rows, max, i + 1, current, visit) {
            return true;
        }
        current.pop();
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_target_is_returned() {
        let c = DMatrix::from_row_slice(1, 1, &[1.0]);
        let d = DVector::from_vec(vec![1.0]);
        let u = project_onto_polyhedron(&c, &d, &DVector::from_vec(vec![0.5])).unwrap();
        assert_eq!(u[0], 0.5);
    }

    #[test]
    fn half_plane_projection_matches_closed_form() {
        // a·u <= d with a = (1, 2), d = 1, target (3, 3)
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let d = DVector::from_vec(vec![1.0]);
        let t = DVector::from_vec(vec![3.0, 3.0]);
        let u = project_onto_polyhedron(&c, &d, &t).unwrap();
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let expected = &t - &a * ((a.dot(&t) - 1.0) / a.norm_squared());
        assert!((u - expected).norm() < 1e-12);
    }

    #[test]
    fn corner_projection() {
        // u1 <= 0, u2 <= 0, target (1, 2) -> origin
        let c = DMatrix::identity(2, 2);
        let d = DVector::zeros(2);
        let u = project_onto_polyhedron(&c, &d, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!(u.norm() < 1e-12);
    }

    #[test]
    fn empty_set_is_reported() {
        let c = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let d = DVector::from_vec(vec![0.0, -5.0]);
        assert!(project_onto_polyhedron(&c, &d, &DVector::zeros(1)).is_none());
    }

    #[test]
    fn redundant_rows_are_handled() {
        let c = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 1.0]);
        let d = DVector::from_vec(vec![-1.0, -2.0, -1.0]);
        let u = project_onto_polyhedron(&c, &d, &DVector::zeros(1)).unwrap();
        assert!((u[0] + 1.0).abs() < 1e-12);
    }
}
