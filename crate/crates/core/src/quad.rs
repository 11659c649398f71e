//! Adaptive Simpson quadrature over piecewise-smooth integrands.

/// Panels each smooth piece is split into before adaptive refinement starts.
/// Periodic integrands can vanish on the coarse Simpson nodes and fool the
/// error estimate if refinement begins from a single panel.
const INITIAL_PANELS: usize = 32;
const MAX_DEPTH: u32 = 24;
/// Absolute tolerance floor per unit length; integrands this small are roundoff.
const ABS_FLOOR: f64 = 1e-24;

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    // below the roundoff floor further halving cannot improve the estimate
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth >= MAX_DEPTH || delta.abs() <= (15.0 * tol).max(floor) {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = abs_tol / INITIAL_PANELS as f64;
    (0..INITIAL_PANELS)
        .map(|p| {
            let lo = a + p as f64 * h;
            let hi = if p + 1 == INITIAL_PANELS { b } else { lo + h };
            // outer endpoints are sampled just inside so a jump at a breakpoint
            // takes this piece's value
            let fa = if p == 0 { f(a.next_up()) } else { f(lo) };
            let fb = if p + 1 == INITIAL_PANELS { f(b.next_down()) } else { f(hi) };
            let fm = f(0.5 * (lo + hi));
            let whole = simpson(fa, fm, fb, hi - lo);
            refine(f, lo, hi, fa, fm, fb, whole, panel_tol, 0)
        })
        .sum()
}

/// Integrates `f` over `[a, b]`, splitting at every breakpoint strictly inside
/// the interval, to a relative tolerance `rel_tol` measured against a coarse
/// estimate of `∫|f|`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> f64 {
    let pieces = split_points(a, b, breaks);
    let scale: f64 = pieces
        .windows(2)
        .map(|w| adaptive_simpson(&|t| f(t).abs(), w[0], w[1], f64::INFINITY))
        .sum();
    let abs_tol = (rel_tol * scale).max(ABS_FLOOR * (b - a));
    let total_len = b - a;
    pieces
        .windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], abs_tol * (w[1] - w[0]) / total_len))
        .sum()
}

/// Sorted `[a, interior breaks..., b]` without duplicates.
pub fn split_points(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);
    pts
}
