//! Planar convex hull and signed edge distances.
//!
//! The hull only needs ordered-field arithmetic, so it runs on floats as well
//! as on exact rationals.

use nalgebra::{Point2, Scalar, Vector2};
use num_traits::Num;

use crate::scalar::Real;

/// Twice the signed area of the triangle `(o, a, b)`; positive for a left turn.
pub fn cross<T>(o: &Point2<T>, a: &Point2<T>, b: &Point2<T>) -> T
where
    T: Scalar + Num + Copy,
{
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counterclockwise convex hull (monotone chain). Duplicate and collinear
/// boundary points are dropped; the first vertex is the lexicographically
/// smallest point. Returns vertex indices into `points`.
pub fn convex_hull_indices<T>(points: &[Point2<T>]) -> Vec<usize>
where
    T: Scalar + Num + Copy + PartialOrd,
{
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (p, q) = (&points[i], &points[j]);
        p.x.partial_cmp(&q.x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(p.y.partial_cmp(&q.y).unwrap_or(std::cmp::Ordering::Equal))
            .then(i.cmp(&j))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() < 3 {
        return order;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    let chain = |hull: &mut Vec<usize>, idx: usize, floor: usize| {
        while hull.len() >= floor + 2 {
            let n = hull.len();
            if cross(&points[hull[n - 2]], &points[hull[n - 1]], &points[idx]) > T::zero() {
                break;
            }
            hull.pop();
        }
        hull.push(idx);
    };
    for &i in &order {
        chain(&mut hull, i, 0);
    }
    let lower = hull.len() - 1;
    for &i in order.iter().rev().skip(1) {
        chain(&mut hull, i, lower);
    }
    hull.pop();
    if hull.len() < 3 {
        // every point collinear
        hull.truncate(2);
    }
    hull
}

/// Signed distance from `p` to the directed edge `a -> b`; positive on the
/// left (interior side of a counterclockwise polygon).
pub fn signed_edge_distance<T: Real>(p: &Point2<T>, a: &Point2<T>, b: &Point2<T>) -> T {
    let e = b - a;
    (e.x * (p.y - a.y) - e.y * (p.x - a.x)) / e.norm()
}

/// Outward unit normal of the counterclockwise edge `a -> b`.
pub fn outward_normal<T: Real>(a: &Point2<T>, b: &Point2<T>) -> Vector2<T> {
    let e = (b - a).normalize();
    Vector2::new(e.y, -e.x)
}

pub fn polygon_area<T: Real>(vertices: &[Point2<T>]) -> T {
    let n = vertices.len();
    let mut acc = T::zero();
    for i in 0..n {
        let (a, b) = (&vertices[i], &vertices[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    acc / T::lit(2.0)
}

pub fn polygon_centroid<T: Real>(vertices: &[Point2<T>]) -> Point2<T> {
    let n = vertices.len();
    let area = polygon_area(vertices);
    let mut c = Vector2::zeros();
    for i in 0..n {
        let (a, b) = (&vertices[i], &vertices[(i + 1) % n]);
        let w = a.x * b.y - b.x * a.y;
        c += (a.coords + b.coords) * w;
    }
    Point2::from(c / (T::lit(6.0) * area))
}
