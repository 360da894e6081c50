//! Quadratic curve fitting `x = a·y² + b·y + c`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::seed;
use crate::synthgen::Quadratic;

/// Least squares on `y` shifted and scaled to roughly [-1, 1]; the
/// coefficients are mapped back to raw `y` afterwards.
pub fn lsq_polyfit(points: &[(f64, f64)]) -> Result<Quadratic> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points for a quadratic, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let scale = points
        .iter()
        .map(|p| (p.1 - mean).abs())
        .fold(0.0, f64::max)
        .max(1e-12);
    let a = DMatrix::from_fn(points.len(), 3, |i, j| {
        ((points[i].1 - mean) / scale).powi(2 - j as i32)
    });
    let x = DVector::from_iterator(points.len(), points.iter().map(|p| p.0));
    let svd = a.svd(true, true);
    let rank = svd.rank(1e-10 * svd.singular_values.max());
    if rank < 3 {
        return Err(Error::Fit("points span fewer than 3 distinct rows".into()));
    }
    let coef = svd
        .solve(&x, 1e-12)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let (qa, qb, qc) = (coef[0], coef[1], coef[2]);
    let (m, s) = (mean, scale);
    Ok(Quadratic {
        a: qa / (s * s),
        b: qb / s - 2.0 * qa * m / (s * s),
        c: qc - qb * m / s + qa * m * m / (s * s),
    })
}

/// Interpolating quadratic through three points with distinct `y`.
fn exact3(p: [(f64, f64); 3]) -> Option<Quadratic> {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let d = (y0 - y1) * (y0 - y2) * (y1 - y2);
    if d == 0.0 {
        return None;
    }
    let a = (y2 * (x1 - x0) + y1 * (x0 - x2) + y0 * (x2 - x1)) / d;
    let b = (y2 * y2 * (x0 - x1) + y1 * y1 * (x2 - x0) + y0 * y0 * (x1 - x2)) / d;
    let c = (y1 * y2 * (y1 - y2) * x0 + y2 * y0 * (y2 - y0) * x1 + y0 * y1 * (y0 - y1) * x2) / d;
    Some(Quadratic { a, b, c })
}

fn inliers(q: &Quadratic, points: &[(f64, f64)], tol: f64) -> Vec<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|&(x, y)| (x - q.eval(y)).abs() <= tol)
        .collect()
}

/// RANSAC over minimal three-point samples; the winner is refit by least
/// squares on its consensus set. Samples with a repeated `y` are redrawn.
pub fn ransac_polyfit(
    points: &[(f64, f64)],
    iters: u32,
    tol: f64,
    seed_value: u64,
) -> Result<Quadratic> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points for a quadratic, got {}",
            points.len()
        )));
    }
    let mut rng = seed::rng(seed_value);
    let n = points.len();
    let mut best: Option<(usize, Quadratic)> = None;
    for _ in 0..iters {
        let mut model = None;
        for _ in 0..64 {
            let idx = rand::seq::index::sample(&mut rng, n, 3);
            let s = [
                points[idx.index(0)],
                points[idx.index(1)],
                points[idx.index(2)],
            ];
            if let Some(q) = exact3(s) {
                model = Some(q);
                break;
            }
        }
        let Some(q) = model else { continue };
        let count = points
            .iter()
            .filter(|&&(x, y)| (x - q.eval(y)).abs() <= tol)
            .count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, q));
        }
    }
    let Some((_, q)) = best else {
        return Err(Error::Fit("no non-degenerate sample found".into()));
    };
    let consensus = inliers(&q, points, tol);
    // a consensus set on fewer than 3 rows keeps the sample model
    Ok(lsq_polyfit(&consensus).unwrap_or(q))
}

/// Independent RANSAC stream per lane.
pub(crate) fn lane_seed(seed_value: u64, lane: usize) -> u64 {
    seed::derive(seed_value, &format!("lane{lane}"))
}
