//! Slow, obviously-correct reference computations that the acceptance run
//! and property tests compare the production code against. Nothing here
//! shares code with the simulator.

/// Integer lattice point; exact arithmetic keeps the hull oracle free of
/// rounding questions.
pub type IPoint = (i64, i64);

fn orient(o: IPoint, a: IPoint, b: IPoint) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: IPoint, a: IPoint, b: IPoint) -> bool {
    orient(a, b, p) == 0 && p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed triangle test that also accepts degenerate (collinear) triangles.
fn in_triangle(p: IPoint, a: IPoint, b: IPoint, c: IPoint) -> bool {
    let area = orient(a, b, c);
    if area == 0 {
        return on_segment(p, a, b) || on_segment(p, b, c) || on_segment(p, a, c);
    }
    let s = area.signum();
    orient(a, b, p) * s >= 0 && orient(b, c, p) * s >= 0 && orient(c, a, p) * s >= 0
}

/// Convex hull by exhaustion. Indices of the strictly extreme points,
/// counterclockwise from the lexicographically smallest; among duplicates
/// the lowest index represents the point. Fewer than three distinct points,
/// or all collinear: the distinct extremes in lexicographic order.
pub fn brute_force_hull(points: &[IPoint]) -> Vec<usize> {
    let distinct: Vec<usize> = (0..points.len()).filter(|&i| !points[..i].contains(&points[i])).collect();
    let mut extreme: Vec<usize> = distinct
        .iter()
        .copied()
        .filter(|&i| {
            let others: Vec<usize> = distinct.iter().copied().filter(|&j| j != i).collect();
            let p = points[i];
            // Carathéodory: a non-extreme point lies in some triangle of the others
            !others.iter().any(|&a| {
                others.iter().any(|&b| others.iter().any(|&c| in_triangle(p, points[a], points[b], points[c])))
            })
        })
        .collect();
    extreme.sort_by_key(|&i| points[i]);
    if extreme.len() <= 2 {
        return extreme;
    }
    let mut hull = vec![extreme[0]];
    loop {
        let cur = *hull.last().unwrap();
        let next = extreme
            .iter()
            .copied()
            .find(|&q| q != cur && extreme.iter().all(|&r| r == cur || r == q || orient(points[cur], points[q], points[r]) > 0))
            .expect("extreme points are in strictly convex position");
        if next == hull[0] {
            return hull;
        }
        hull.push(next);
    }
}

/// Faces of the 3-D convex hull of `nodes` whose three edges are all in
/// `edges`, found by testing every node triple. Triples come back sorted.
pub fn closed_hull_faces(nodes: &[[f64; 3]], edges: &[[usize; 2]]) -> Vec<[usize; 3]> {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let scale = nodes.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale.max(1.0).powi(3);
    let linked = |a: usize, b: usize| edges.iter().any(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a));
    let n = nodes.len();
    let mut faces = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if !(linked(i, j) && linked(j, k) && linked(i, k)) {
                    continue;
                }
                let normal = cross(sub(nodes[j], nodes[i]), sub(nodes[k], nodes[i]));
                let side: Vec<f64> = (0..n).map(|m| dot(normal, sub(nodes[m], nodes[i]))).collect();
                if side.iter().all(|&s| s <= tol) || side.iter().all(|&s| s >= -tol) {
                    faces.push([i, j, k]);
                }
            }
        }
    }
    faces
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of the average ranks).
/// `NaN` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_and_edge_points() {
        let pts = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (1, 0), (0, 0)];
        assert_eq!(brute_force_hull(&pts), vec![0, 1, 2, 3]);
    }

    #[test]
    fn hull_of_collinear_points() {
        assert_eq!(brute_force_hull(&[(2, 2), (0, 0), (1, 1)]), vec![1, 0]);
        assert_eq!(brute_force_hull(&[(3, 1), (3, 1)]), vec![0]);
        assert!(brute_force_hull(&[]).is_empty());
    }

    #[test]
    fn closed_faces_of_tetrahedron() {
        let nodes = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let all = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
        assert_eq!(closed_hull_faces(&nodes, &all).len(), 4);
        assert_eq!(closed_hull_faces(&nodes, &all[..5]), vec![[0, 1, 2], [0, 1, 3]]);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]) - 0.9486832980505138).abs() < 1e-12);
    }
}
