//! Adaptive Simpson quadrature.

/// `∫_a^b f` to relative tolerance `rel_tol` (absolute floor `abs_tol`).
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // A coarse composite estimate sets the scale and keeps narrow features
    // from being skipped on the first bisection.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(pieces);
    for i in 0..pieces {
        let (x0, x1) = (a + i as f64 * h, if i + 1 == pieces { b } else { a + (i + 1) as f64 * h });
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += s.abs();
        parts.push((x0, x1, f0, fm, f1, s));
    }
    let tol = (rel_tol * total).max(abs_tol) / pieces as f64;
    parts
        .into_iter()
        .map(|(x0, x1, f0, fm, f1, s)| refine(&f, x0, x1, f0, fm, f1, s, tol, 50))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12, 0.0);
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| (-50.0 * x).exp(), 0.0, 3.0, 1e-10, 0.0);
        assert!((v - (1.0 - (-150.0f64).exp()) / 50.0).abs() < 1e-11);
        assert_eq!(adaptive_simpson(|x| x, 1.0, 1.0, 1e-8, 0.0), 0.0);
    }

    #[test]
    fn sharp_boundary_layer() {
        let v = adaptive_simpson(|x| (-(1.0 - x) * 2000.0).exp(), 0.0, 1.0, 1e-9, 0.0);
        assert!((v - 1.0 / 2000.0).abs() < 1e-12);
    }
}
