//! Geometric rate fitting shared by the decay diagnostics.

/// Values at or below this are treated as numerically zero when fitting.
pub const FIT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    /// Natural log of the fitted prefactor: `ln v_j ≈ intercept + j ln rate`.
    pub intercept: f64,
    pub points: usize,
}

/// Log-linear least squares of `values[j]` against `j` over the tail half of
/// the sequence. Entries at or below [`FIT_FLOOR`] are skipped. Returns `None`
/// when fewer than two usable points remain.
pub fn fit_tail_rate(values: &[f64]) -> Option<RateFit> {
    let start = values.len() / 2;
    let tail = usable(values, start);
    if tail.len() >= 2 {
        return least_squares(&tail);
    }
    least_squares(&usable(values, 0))
}

/// Same fit over every usable index in `range`.
pub fn fit_rate_over(values: &[f64], range: std::ops::Range<usize>) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = usable(values, 0)
        .into_iter()
        .filter(|(j, _)| range.contains(&(*j as usize)))
        .collect();
    least_squares(&pts)
}

fn usable(values: &[f64], start: usize) -> Vec<(f64, f64)> {
    values
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, v)| v.is_finite() && **v > FIT_FLOOR)
        .map(|(j, v)| (j as f64, v.ln()))
        .collect()
}

fn least_squares(pts: &[(f64, f64)]) -> Option<RateFit> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(RateFit {
        rate: slope.exp(),
        intercept: my - slope * mx,
        points: pts.len(),
    })
}
