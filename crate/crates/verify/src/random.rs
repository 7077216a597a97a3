use crate::oracles::P;
use rand::Rng;
use std::f64::consts::TAU;
use std::ops::{Range, RangeInclusive};

/// Convex polygon with vertices on an ellipse whose major semi-axis is drawn
/// from `radius`. Consecutive vertices are at least 0.15 rad apart so no
/// edge is vanishingly short.
pub fn convex_polygon<R: Rng>(rng: &mut R, center: P, radius: Range<f64>, edges: RangeInclusive<usize>) -> Vec<P> {
    let radius = rng.gen_range(radius);
    let edges = rng.gen_range(edges);
    let gap = 0.15;
    let mut angles: Vec<f64> = loop {
        let mut a: Vec<f64> = (0..edges).map(|_| rng.gen_range(0.0..TAU)).collect();
        a.sort_by(f64::total_cmp);
        let ok = a.windows(2).all(|w| w[1] - w[0] > gap) && a[0] + TAU - a[edges - 1] > gap;
        if ok {
            break a;
        }
    };
    let phase = rng.gen_range(0.0..TAU);
    angles.iter_mut().for_each(|a| *a += phase);
    let squash = rng.gen_range(0.5..1.0);
    let tilt = rng.gen_range(0.0..TAU);
    let (s, c) = tilt.sin_cos();
    angles
        .iter()
        .map(|a| {
            let (x, y) = (radius * a.cos(), radius * squash * a.sin());
            center + P::new(c * x - s * y, s * x + c * y)
        })
        .collect()
}

/// Polygon with 3 to 8 edges inside `[-10, 10]²`.
pub fn polygon_in_box<R: Rng>(rng: &mut R) -> Vec<P> {
    let radius = rng.gen_range(0.5..3.0);
    let lim = 10.0 - radius;
    let center = P::new(rng.gen_range(-lim..lim), rng.gen_range(-lim..lim));
    convex_polygon(rng, center, radius..radius * (1.0 + 1e-12), 3..=8)
}

/// A polygon paired with a second one near it.
pub fn nearby_pair<R: Rng>(rng: &mut R) -> (Vec<P>, Vec<P>) {
    let a = polygon_in_box(rng);
    let ca = a.iter().sum::<P>() / a.len() as f64;
    let radius = rng.gen_range(0.5..3.0);
    let lim = 10.0 - radius;
    let offset = P::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
    let center = (ca + offset).map(|v| v.clamp(-lim, lim));
    let b = convex_polygon(rng, center, radius..radius * (1.0 + 1e-12), 3..=8);
    (a, b)
}
