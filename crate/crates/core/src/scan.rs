//! Deterministic parallel scans over the enumeration and its pairs.
//!
//! Rows are processed in parallel and folded sequentially in enumeration
//! order, so results (including tie-breaks) do not depend on thread count.

use rayon::prelude::*;

use crate::domain::Point;

/// Largest `score(x, y)` over all pairs; earliest pair wins ties.
///
/// `score` returning `Err` aborts the scan with the first error in enumeration order.
pub fn max_over_pairs<E: Send>(
    points: &[Point],
    score: impl Fn(&Point, &Point) -> Result<f64, E> + Sync,
) -> Result<Option<(f64, usize, usize)>, E> {
    let rows: Vec<Result<Option<(f64, usize, usize)>, E>> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut best: Option<(f64, usize, usize)> = None;
            for (j, y) in points.iter().enumerate() {
                let s = score(x, y)?;
                if best.is_none_or(|(b, _, _)| s > b) {
                    best = Some((s, i, j));
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for row in rows {
        if let Some(cand) = row? {
            if best.is_none_or(|(b, _, _)| cand.0 > b) {
                best = Some(cand);
            }
        }
    }
    Ok(best)
}

/// Smallest `score(x, y)` over all pairs; earliest pair wins ties.
pub fn min_over_pairs<E: Send>(
    points: &[Point],
    score: impl Fn(&Point, &Point) -> Result<f64, E> + Sync,
) -> Result<Option<(f64, usize, usize)>, E> {
    Ok(max_over_pairs(points, |x, y| score(x, y).map(|s| -s))?.map(|(s, i, j)| (-s, i, j)))
}

/// Largest `score(x)` over the points; earliest point wins ties.
pub fn max_over_points<E: Send>(
    points: &[Point],
    score: impl Fn(&Point) -> Result<f64, E> + Sync,
) -> Result<Option<(f64, usize)>, E> {
    let scores: Vec<Result<f64, E>> = points.par_iter().map(&score).collect();
    let mut best: Option<(f64, usize)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, i));
        }
    }
    Ok(best)
}
