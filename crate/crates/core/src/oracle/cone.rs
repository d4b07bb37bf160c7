/// Euclidean distance from `y` to the planar diamond `|x1| + |x2| ≤ 1`,
/// taken as the least distance to its four edges.
pub fn diamond_distance(y: &[f64]) -> f64 {
    if y[0].abs() + y[1].abs() <= 1.0 {
        return 0.0;
    }
    let corners = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    (0..4)
        .map(|i| segment_distance(y, corners[i], corners[(i + 1) % 4]))
        .fold(f64::INFINITY, f64::min)
}

fn segment_distance(y: &[f64], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let t = (((y[0] - a[0]) * ab[0] + (y[1] - a[1]) * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
    let p = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((y[0] - p[0]).powi(2) + (y[1] - p[1]).powi(2)).sqrt()
}

/// Numeric estimate of tangent-cone membership: the smallest ratio
/// `dist(x + τd, A) / τ` over `τ = 1e-2, …, 1e-6` falls below `threshold`.
pub fn liminf_contains(dist: impl Fn(&[f64]) -> f64, x: &[f64], d: &[f64], threshold: f64) -> bool {
    (2..=6)
        .map(|k| {
            let tau = 10f64.powi(-k);
            let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + tau * b).collect();
            dist(&y) / tau
        })
        .fold(f64::INFINITY, f64::min)
        < threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        assert_eq!(diamond_distance(&[0.2, 0.3]), 0.0);
        assert!((diamond_distance(&[0.0, 2.0]) - 1.0).abs() < 1e-12);
        assert!((diamond_distance(&[1.0, 1.0]) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((diamond_distance(&[3.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_cone() {
        let dist = diamond_distance;
        assert!(liminf_contains(dist, &[0.0, 1.0], &[0.0, -1.0], 1e-3));
        assert!(!liminf_contains(dist, &[0.0, 1.0], &[0.0, 1.0], 1e-3));
        assert!(liminf_contains(dist, &[0.0, 1.0], &[1.0, -1.0], 1e-3));
    }
}
