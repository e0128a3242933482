use serde::Serialize;

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `log y = slope·log x + c` over the points with `lo ≤ x ≤ hi` and
/// `y > 0`. `None` when fewer than two usable points remain.
pub fn fit_loglog(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> Option<SlopeFit> {
    let tol = 1e-12;
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x >= lo * (1.0 - tol) && **x <= hi * (1.0 + tol) && **y > 0.0 && **x > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
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
    Some(SlopeFit { slope, intercept: my - slope * mx, points: pts.len() })
}
