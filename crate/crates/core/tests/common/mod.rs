#![allow(dead_code)]

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// `∫_0^∞ φ(ru) (1+u)^{-(m+1)} du` for `φ = Σ c_i 1[u_i <= t]`, integrated
/// numerically piece by piece between the breakpoints `u_i / r`; the last
/// piece is mapped to `[0, 1)` by `u = a + (1+a) s/(1-s)`. Tolerances are
/// relative to the size of the kernel on each piece.
pub fn kernel_transform_oracle(jumps: &[f64], increments: &[f64], r: f64, m: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = jumps.iter().copied().zip(increments.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let kernel = |u: f64| (1.0 + u).powf(-(m + 1.0));
    let mut total = 0.0;
    let mut level = 0.0;
    let mut start = 0.0;
    for (u, c) in pairs {
        let end = u / r;
        if end > start && level > 0.0 {
            let scale = (end - start) * kernel(start);
            let piece = adaptive_simpson(&kernel, start, end, 1e-14 * scale);
            total += level * piece;
        }
        level += c;
        start = end.max(start);
    }
    let a = start;
    let tail = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - s;
        (1.0 + a) * kernel(a + (1.0 + a) * s / w) / (w * w)
    };
    total + level * adaptive_simpson(&tail, 0.0, 1.0, 1e-14 * (1.0 + a).powf(-m))
}
