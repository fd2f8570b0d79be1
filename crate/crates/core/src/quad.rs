//! Small adaptive quadrature toolkit used by density normalization checks,
//! the grid sampler and the numeric CDFs fed to KS tests.

/// Adaptive Simpson on a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    simpson_rec(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 52)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
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
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Integral of `f` over (a, +inf) via the rational map x = a + s*t/(1-t).
/// `scale` sets the decay length; pick it near the integrand's mass scale.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: &F, a: f64, scale: f64, tol: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - t;
        let x = a + scale * t / one_minus;
        let jac = scale / (one_minus * one_minus);
        let v = f(x) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(&g, 0.0, 1.0, tol)
}

/// Monotone CDF built by integrating a density once along sorted query
/// points; queries must be asked in nondecreasing order (the KS statistic
/// evaluates the CDF on sorted samples, which is exactly that).
pub struct CdfFromDensity<F: Fn(f64) -> f64> {
    density: F,
    lo: f64,
    norm: f64,
    tol: f64,
    last_x: std::cell::Cell<f64>,
    acc: std::cell::Cell<f64>,
}

impl<F: Fn(f64) -> f64> CdfFromDensity<F> {
    /// `norm` is the total mass (1 for a proper density); `lo` the left
    /// support endpoint.
    pub fn new(density: F, lo: f64, norm: f64, tol: f64) -> Self {
        CdfFromDensity {
            density,
            lo,
            norm,
            tol,
            last_x: std::cell::Cell::new(lo),
            acc: std::cell::Cell::new(0.0),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        let last = self.last_x.get();
        if x < last {
            // restart; callers are expected to sweep left to right
            self.last_x.set(self.lo);
            self.acc.set(0.0);
            return self.eval(x);
        }
        let inc = integrate(&|t| (self.density)(t), last, x, self.tol);
        let acc = self.acc.get() + inc;
        self.acc.set(acc);
        self.last_x.set(x);
        (acc / self.norm).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(&|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_tail() {
        let v = integrate_to_inf(&|x: f64| (-0.5 * x * x).exp(), 0.0, 1.0, 1e-12);
        assert!((v - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn cdf_sweep_matches_direct() {
        let cdf = CdfFromDensity::new(|x: f64| (-x).exp(), 0.0, 1.0, 1e-12);
        for &x in &[0.1, 0.5, 1.0, 2.5] {
            assert!((cdf.eval(x) - (1.0 - (-x).exp())).abs() < 1e-9);
        }
    }
}
