//! Distances between sampled curves.

fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut ap_ab = 0.0;
    for i in 0..p.len() {
        let ab = b[i] - a[i];
        ab2 += ab * ab;
        ap_ab += (p[i] - a[i]) * ab;
    }
    let s = if ab2 > 0.0 {
        (ap_ab / ab2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut d2 = 0.0;
    for i in 0..p.len() {
        let q = a[i] + s * (b[i] - a[i]);
        d2 += (p[i] - q) * (p[i] - q);
    }
    d2.sqrt()
}

/// Distance from a point to a polyline given by its vertices.
pub fn point_polyline_distance(p: &[f64], line: &[Vec<f64>]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => point_segment_distance(p, only, only),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// `max_{a ∈ A} dist(a, B)` with `B` read as a polyline.
pub fn directed_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|p| point_polyline_distance(p, b))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines, measured at the vertices.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// At most `max` evenly strided points, always including both ends.
pub fn thin<T: Clone>(points: &[T], max: usize) -> Vec<T> {
    if points.len() <= max || max < 2 {
        return points.to_vec();
    }
    let stride = (points.len() - 1).div_ceil(max - 1);
    let mut out: Vec<T> = points.iter().step_by(stride).cloned().collect();
    if !(points.len() - 1).is_multiple_of(stride) {
        out.push(points[points.len() - 1].clone());
    }
    out
}
