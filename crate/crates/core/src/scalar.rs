//! One-dimensional laws everything else composes: Inverse Gaussian, Gamma
//! and generalized Inverse Gaussian, with densities, exact samplers,
//! Laplace transforms and closed-form CDFs, plus the Brownian-bridge
//! zero-crossing law used by the path engines and the one-dimensional
//! Matsumoto-Yor property check.
//!
//! Conventions, pinned once and used everywhere:
//!
//! * `Gig { q, a, b }` has density proportional to
//!   `t^(q-1) exp(-(a t + b/t)/2)` on t > 0. Some references quote the
//!   same family with both coefficients halved; convert at the boundary.
//! * `Gamma { shape, rate }` is shape-rate: mean = shape/rate. With this
//!   reading, 1/(2 G) for G ~ Gamma(1/2, theta^2) is exactly the
//!   driftless hitting-time law Gig { q: -1/2, a: 0, b: theta^2 }.
//! * `Ig { mean, shape }` is the textbook Inverse Gaussian; the hitting
//!   time of 0 by theta + B(t) - eta t is Ig { mean: theta/eta,
//!   shape: theta^2 } = Gig { q: -1/2, a: eta^2, b: theta^2 }.
//!
//! Limit cases follow integrability: a = 0 needs q < 0 (inverse-Gamma
//! family), b = 0 needs q > 0 (Gamma family). The reciprocal map is
//! X ~ Gig(q,a,b) iff 1/X ~ Gig(-q,b,a).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::report::{Gate, VerificationReport};
use crate::stats;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - libm::lgamma(a)).exp()
    } else {
        // continued fraction for Q, Lentz's method
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (-x + a * x.ln() - libm::lgamma(a)).exp() * h;
        1.0 - q
    }
}

// ---------------------------------------------------------------------------
// Inverse Gaussian
// ---------------------------------------------------------------------------

/// Inverse Gaussian with mean `mean` and shape `shape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ig {
    pub mean: f64,
    pub shape: f64,
}

impl Ig {
    pub fn new(mean: f64, shape: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidParam("Ig mean must be > 0 and finite".into()));
        }
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(Error::InvalidParam("Ig shape must be > 0 and finite".into()));
        }
        Ok(Ig { mean, shape })
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (mu, lam) = (self.mean, self.shape);
        (lam / (2.0 * std::f64::consts::PI * x * x * x)).sqrt()
            * (-lam * (x - mu) * (x - mu) / (2.0 * mu * mu * x)).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (mu, lam) = (self.mean, self.shape);
        let s = (lam / x).sqrt();
        let t1 = normal_cdf(s * (x / mu - 1.0));
        let z2 = s * (x / mu + 1.0);
        // exp(2 lam/mu) * Phi(-z2); the Mills-ratio form stays finite when
        // the plain product would be inf * 0.
        let ex = 2.0 * lam / mu;
        let t2 = if ex < 700.0 {
            ex.exp() * normal_cdf(-z2)
        } else {
            (ex - 0.5 * z2 * z2 - (z2 * SQRT_2PI).ln()).exp()
        };
        (t1 + t2).clamp(0.0, 1.0)
    }

    /// Exact draw via the transformation-with-roots method.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let (mu, lam) = (self.mean, self.shape);
        let nu: f64 = rng.sample(StandardNormal);
        let y = nu * nu;
        let x = if y == 0.0 {
            mu
        } else {
            // root mu*(sqrt(1+s)-1)/(sqrt(1+s)+1) with s = 4 lam/(mu y),
            // algebraically the smaller root, stable for every y
            let s = 4.0 * lam / (mu * y);
            let r = (1.0 + s).sqrt();
            mu * (r - 1.0) / (r + 1.0)
        };
        let u: f64 = rng.random();
        if u <= mu / (mu + x) {
            x
        } else {
            mu * mu / x
        }
    }

    /// E[exp(-t X)] for t >= 0.
    pub fn laplace(&self, t: f64) -> f64 {
        let (mu, lam) = (self.mean, self.shape);
        ((lam / mu) * (1.0 - (1.0 + 2.0 * mu * mu * t / lam).sqrt())).exp()
    }
}

// ---------------------------------------------------------------------------
// Gamma (shape-rate)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaLaw {
    pub shape: f64,
    pub rate: f64,
}

impl GammaLaw {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0) || !(rate > 0.0) {
            return Err(Error::InvalidParam("Gamma shape and rate must be > 0".into()));
        }
        Ok(GammaLaw { shape, rate })
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (self.shape * self.rate.ln() + (self.shape - 1.0) * x.ln()
            - self.rate * x
            - libm::lgamma(self.shape))
        .exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.shape == 0.5 {
            libm::erf((self.rate * x).sqrt())
        } else {
            gamma_p(self.shape, self.rate * x)
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        rand_distr::Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated parameters")
            .sample(rng)
    }

    pub fn laplace(&self, t: f64) -> f64 {
        (1.0 + t / self.rate).powf(-self.shape)
    }
}

// ---------------------------------------------------------------------------
// Generalized Inverse Gaussian
// ---------------------------------------------------------------------------

/// Generalized Inverse Gaussian with density proportional to
/// `t^(q-1) exp(-(a t + b / t)/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gig {
    pub q: f64,
    pub a: f64,
    pub b: f64,
}

fn is_supported_q(q: f64) -> bool {
    q == -0.5 || q == 0.5 || q == 1.5
}

/// K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}; K_{3/2}(x) = K_{1/2}(x) (1 + 1/x).
fn bessel_k_half_family(order_abs: f64, x: f64) -> f64 {
    let k_half = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
    if order_abs == 0.5 {
        k_half
    } else {
        k_half * (1.0 + 1.0 / x)
    }
}

impl Gig {
    pub fn new(q: f64, a: f64, b: f64) -> Result<Self> {
        if !is_supported_q(q) {
            return Err(Error::UnsupportedIndex { q });
        }
        if !(a >= 0.0) || !(b >= 0.0) || (a == 0.0 && b == 0.0) {
            return Err(Error::InvalidParam("Gig needs a, b >= 0 and not both zero".into()));
        }
        if a == 0.0 && q >= 0.0 {
            return Err(Error::InvalidParam("Gig with a = 0 needs q < 0 to be normalizable".into()));
        }
        if b == 0.0 && q <= 0.0 {
            return Err(Error::InvalidParam("Gig with b = 0 needs q > 0 to be normalizable".into()));
        }
        Ok(Gig { q, a, b })
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (q, a, b) = (self.q, self.a, self.b);
        if a == 0.0 {
            // inverse-Gamma family: shape -q, scale b/2
            return ((-q) * (b / 2.0).ln() + (q - 1.0) * x.ln() - b / (2.0 * x)
                - libm::lgamma(-q))
            .exp();
        }
        if b == 0.0 {
            return GammaLaw { shape: q, rate: a / 2.0 }.density(x);
        }
        let norm = (a / b).powf(q / 2.0) / (2.0 * bessel_k_half_family(q.abs(), (a * b).sqrt()));
        norm * (q - 1.0) .mul_add(x.ln(), -(a * x + b / x) / 2.0).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (q, a, b) = (self.q, self.a, self.b);
        if q == -0.5 {
            if a == 0.0 {
                // P(b/Z^2 <= x) = erfc(sqrt(b/(2x)))
                return libm::erfc((b / (2.0 * x)).sqrt());
            }
            return Ig { mean: (b / a).sqrt(), shape: b }.cdf(x);
        }
        if q == 0.5 {
            if b == 0.0 {
                return GammaLaw { shape: 0.5, rate: a / 2.0 }.cdf(x);
            }
            // reciprocal of Gig(-1/2, b, a) = Ig(sqrt(a/b), a)
            return 1.0 - Ig { mean: (a / b).sqrt(), shape: a }.cdf(1.0 / x);
        }
        // q = 3/2 has no closed form here; integrate the density
        let cdf = crate::quad::CdfFromDensity::new(|t| self.density(t), 0.0, 1.0, 1e-11);
        cdf.eval(x)
    }

    /// Exact draw; q must be +-1/2 (including the Gamma / inverse-Gamma
    /// limit cases).
    pub fn sample(&self, rng: &mut impl Rng) -> Result<f64> {
        let (q, a, b) = (self.q, self.a, self.b);
        if q == -0.5 {
            if a == 0.0 {
                let mut z: f64 = rng.sample(StandardNormal);
                while z == 0.0 {
                    z = rng.sample(StandardNormal);
                }
                return Ok(b / (z * z));
            }
            return Ok(Ig { mean: (b / a).sqrt(), shape: b }.sample(rng));
        }
        if q == 0.5 {
            if b == 0.0 {
                return Ok(GammaLaw { shape: 0.5, rate: a / 2.0 }.sample(rng));
            }
            return Ok(1.0 / Ig { mean: (a / b).sqrt(), shape: a }.sample(rng));
        }
        Err(Error::UnsupportedIndex { q })
    }

    /// E[exp(-t X)] for q = +-1/2 including limits.
    pub fn laplace(&self, t: f64) -> Result<f64> {
        let (q, a, b) = (self.q, self.a, self.b);
        let shift = (a * b).sqrt() - ((a + 2.0 * t) * b).sqrt();
        if q == -0.5 {
            return Ok(shift.exp());
        }
        if q == 0.5 {
            return Ok((a / (a + 2.0 * t)).sqrt() * shift.exp());
        }
        Err(Error::UnsupportedIndex { q })
    }
}

/// K_{3/2}(x) / K_{1/2}(x) = 1 + 1/x for x > 0.
pub fn bessel_k_ratio_3half(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidParam("bessel_k_ratio_3half needs x > 0".into()));
    }
    Ok(1.0 + 1.0 / x)
}

// ---------------------------------------------------------------------------
// Brownian-bridge zero-crossing law
// ---------------------------------------------------------------------------

/// Probability that a Brownian bridge from x to y over a cell of width h
/// touches 0. Exact for endpoints of either sign.
pub fn bridge_crossing_probability(x: f64, y: f64, h: f64) -> f64 {
    if x * y <= 0.0 {
        return 1.0;
    }
    (-2.0 * x.abs() * y.abs() / h).exp()
}

/// First time in (0, h) at which a Brownian bridge from level `x_abs` to
/// level `y_abs` on the other side of 0 (or conditioned to touch 0)
/// crosses 0. Exact: the auxiliary variable is reciprocal-IG.
pub fn bridge_first_crossing_time(x_abs: f64, y_abs: f64, h: f64, rng: &mut impl Rng) -> f64 {
    if x_abs <= 0.0 {
        return 0.0;
    }
    if y_abs <= 1e-300 {
        return h;
    }
    let v = 1.0 / Ig { mean: 1.0 / (x_abs * y_abs), shape: 1.0 / h }.sample(rng);
    h * x_abs * x_abs / (x_abs * x_abs + v)
}

/// Last crossing time over the cell: time reversal of the first crossing.
pub fn bridge_last_crossing_time(x_abs: f64, y_abs: f64, h: f64, rng: &mut impl Rng) -> f64 {
    h - bridge_first_crossing_time(y_abs, x_abs, h, rng)
}

// ---------------------------------------------------------------------------
// One-dimensional Matsumoto-Yor property
// ---------------------------------------------------------------------------

/// Fine-grid simulation of one drifted path theta + B(t) - eta t with
/// bridge-corrected crossing detection; returns the first and last zero.
/// Runs until the path is deep enough below 0 that a return is
/// negligible (probability < ~3e-8).
pub fn first_last_zero_path_oracle(
    theta: f64,
    eta: f64,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    if !(theta > 0.0) || !(eta > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParam("path oracle needs theta > 0, eta > 0, dt > 0".into()));
    }
    let barrier = -8.5 / eta;
    let sq = dt.sqrt();
    let mut x = theta;
    let mut t = 0.0;
    let mut first: Option<f64> = None;
    let mut last: Option<f64> = None;
    while x > barrier {
        let xi: f64 = rng.sample(StandardNormal);
        let y = x + sq * xi - eta * dt;
        let crossed = if x * y <= 0.0 {
            true
        } else {
            rng.random::<f64>() < bridge_crossing_probability(x, y, dt)
        };
        if crossed {
            if first.is_none() {
                first = Some(t + bridge_first_crossing_time(x.abs(), y.abs(), dt, rng));
            }
            last = Some(t + bridge_last_crossing_time(x.abs(), y.abs(), dt, rng));
        }
        x = y;
        t += dt;
    }
    match (first, last) {
        (Some(f), Some(l)) => Ok((f, l.max(f))),
        _ => Err(Error::Numerical("path never crossed zero before the barrier".into())),
    }
}

/// Marginals of (first zero, last zero) functionals under the pinned
/// conventions. Verified against `first_last_zero_path_oracle`:
///
/// * tau            ~ Gig(-1/2, eta^2, theta^2) = Ig(theta/eta, theta^2)
/// * tau_tilde      ~ Gig(+1/2, eta^2, theta^2)
/// * tau_tilde-tau  ~ Gig(+1/2, eta^2, 0)   = Gamma(1/2, rate eta^2/2)
/// * 1/tau - 1/tau_tilde ~ Gig(+1/2, theta^2, 0) = Gamma(1/2, rate theta^2/2)
pub struct MyMarginals {
    pub tau: Ig,
    pub tau_tilde: Gig,
    pub gap: GammaLaw,
    pub inv_gap: GammaLaw,
}

pub fn my_marginals(theta: f64, eta: f64) -> Result<MyMarginals> {
    Ok(MyMarginals {
        tau: Ig::new(theta / eta, theta * theta)?,
        tau_tilde: Gig::new(0.5, eta * eta, theta * theta)?,
        gap: GammaLaw::new(0.5, eta * eta / 2.0)?,
        inv_gap: GammaLaw::new(0.5, theta * theta / 2.0)?,
    })
}

/// Sample n pairs from the first clause of the Matsumoto-Yor property
/// (1/tau and tau_tilde - tau independent), transform to the second-clause
/// coordinates (1/tau - 1/tau_tilde, tau_tilde), and test the transformed
/// marginals plus independence at alpha = 0.01.
pub fn verify_my_property_1d(
    theta: f64,
    eta: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<VerificationReport> {
    const ALPHA: f64 = 0.01;
    let start = std::time::Instant::now();
    let m = my_marginals(theta, eta)?;
    let mut w = Vec::with_capacity(n); // 1/tau - 1/tau_tilde
    let mut tilde = Vec::with_capacity(n);
    for _ in 0..n {
        let tau = m.tau.sample(rng);
        let gap = m.gap.sample(rng);
        let tt = tau + gap;
        w.push(1.0 / tau - 1.0 / tt);
        tilde.push(tt);
    }
    let mut report = VerificationReport::new("my-property-1d", 0, n as u64);
    let ks_w = stats::ks_test(&w, |x| m.inv_gap.cdf(x))?;
    report.check("ks 1/tau - 1/tau_tilde vs Gamma(1/2, theta^2/2)", ks_w.p_value, ALPHA, Gate::Above);
    let ks_t = stats::ks_test(&tilde, |x| m.tau_tilde.cdf(x))?;
    report.check("ks tau_tilde vs Gig(1/2, eta^2, theta^2)", ks_t.p_value, ALPHA, Gate::Above);
    let cap = n.min(4000);
    let dc = stats::distance_correlation_test(&w[..cap], 1, &tilde[..cap], 1, 200, rng)?;
    report.check("independence of transformed pair (dcor)", dc.p_value, ALPHA, Gate::Above);
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use crate::streams::replica_rng;

    #[test]
    fn ig_density_trivial_points() {
        let p = Ig::new(1.0, 1.0).unwrap();
        assert_eq!(p.density(-1.0), 0.0);
        assert_eq!(p.density(0.0), 0.0);
        assert!((p.density(1.0) - 1.0 / SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn ig_density_integrates_to_one() {
        let p = Ig::new(1.0, 1.0).unwrap();
        let total = quad::integrate_to_inf(&|x| p.density(x), 0.0, 1.0, 1e-12);
        assert!((total - 1.0).abs() < 1e-8, "total {total}");
    }

    #[test]
    fn ig_cdf_matches_quadrature() {
        let p = Ig::new(0.5, 2.0).unwrap();
        for &x in &[0.2, 0.5, 1.0, 3.0] {
            let q = quad::integrate(&|t| p.density(t), 0.0, x, 1e-12);
            assert!((p.cdf(x) - q).abs() < 1e-9);
        }
    }

    #[test]
    fn ig_sampler_mean_laplace_ks() {
        let p = Ig::new(1.0, 1.0).unwrap();
        let mut rng = replica_rng(2024, 100, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        let (mean, se) = stats::mean_se(&xs);
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean} se {se}");

        let lt: Vec<f64> = xs.iter().map(|x| (-1.5 * x).exp()).collect();
        let (lmean, lse) = stats::mean_se(&lt);
        assert!((lmean - p.laplace(1.5)).abs() <= 3.0 * lse);

        let numeric = quad::CdfFromDensity::new(|x| p.density(x), 0.0, 1.0, 1e-10);
        let ks = stats::ks_test(&xs[..10_000], |x| numeric.eval(x)).unwrap();
        assert!(ks.p_value > 0.01, "p {}", ks.p_value);
    }

    #[test]
    fn ig_laplace_values() {
        let p = Ig::new(1.0, 1.0).unwrap();
        assert_eq!(p.laplace(0.0), 1.0);
        assert!((p.laplace(1.5) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ig_scaling_law() {
        // t * IG(mu, r) = IG(t mu, t r)
        let p = Ig::new(0.8, 1.3).unwrap();
        let t = 2.5;
        let scaled = Ig::new(t * 0.8, t * 1.3).unwrap();
        let mut rng = replica_rng(2024, 101, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| t * p.sample(&mut rng)).collect();
        let ks = stats::ks_test(&xs, |x| scaled.cdf(x)).unwrap();
        assert!(ks.p_value > 0.01);
    }

    #[test]
    fn gig_matches_ig_at_negative_half() {
        // Gig(-1/2, eta^2, theta^2) is Ig(theta/eta, theta^2); some texts
        // quote the pair with both entries halved.
        let g = Gig::new(-0.5, 1.0, 1.0).unwrap();
        let p = Ig::new(1.0, 1.0).unwrap();
        assert!((g.density(0.7) - p.density(0.7)).abs() < 1e-12);
    }

    #[test]
    fn gig_reciprocal_identity() {
        let g = Gig::new(-0.5, 2.0, 3.0).unwrap();
        let r = Gig::new(0.5, 3.0, 2.0).unwrap();
        for &x in &[0.2, 0.7, 1.1, 2.9, 6.3] {
            let lhs = g.density(x);
            let rhs = r.density(1.0 / x) / (x * x);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0), "x={x} lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn gig_density_normalizations() {
        for g in [
            Gig::new(0.5, 2.0, 3.0).unwrap(),
            Gig::new(-0.5, 1.0, 2.0).unwrap(),
            Gig::new(1.5, 1.0, 2.0).unwrap(),
            Gig::new(-0.5, 0.0, 1.5).unwrap(),
            Gig::new(0.5, 2.5, 0.0).unwrap(),
        ] {
            let total = quad::integrate_to_inf(&|x| g.density(x), 0.0, 1.0, 1e-12);
            assert!((total - 1.0).abs() < 1e-8, "{g:?} total {total}");
        }
    }

    #[test]
    fn gig_limit_parameter_validation() {
        assert!(Gig::new(0.5, 0.0, 1.0).is_err());
        assert!(Gig::new(-0.5, 1.0, 0.0).is_err());
        assert!(Gig::new(0.25, 1.0, 1.0).is_err());
        assert!(Gig::new(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn gig_sampler_ks_against_density_and_cdf() {
        let mut rng = replica_rng(2024, 102, 0);
        for g in [
            Gig::new(-0.5, 1.0, 1.0).unwrap(),
            Gig::new(0.5, 2.0, 3.0).unwrap(),
            Gig::new(-0.5, 0.0, 1.0).unwrap(),
            Gig::new(0.5, 2.0, 0.0).unwrap(),
        ] {
            let xs: Vec<f64> = (0..10_000).map(|_| g.sample(&mut rng).unwrap()).collect();
            let ks = stats::ks_test(&xs, |x| g.cdf(x)).unwrap();
            assert!(ks.p_value > 0.01, "{g:?} p {}", ks.p_value);
            let numeric = quad::CdfFromDensity::new(|x| g.density(x), 0.0, 1.0, 1e-10);
            let ks2 = stats::ks_test(&xs[..4000], |x| numeric.eval(x)).unwrap();
            assert!(ks2.p_value > 0.01, "{g:?} numeric-cdf p {}", ks2.p_value);
        }
    }

    #[test]
    fn gig_reciprocal_draws_pass_ks() {
        let mut rng = replica_rng(2024, 103, 0);
        let g = Gig::new(-0.5, 2.0, 3.0).unwrap();
        let rec = Gig::new(0.5, 3.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| 1.0 / g.sample(&mut rng).unwrap()).collect();
        let ks = stats::ks_test(&xs, |x| rec.cdf(x)).unwrap();
        assert!(ks.p_value > 0.01);
    }

    #[test]
    fn gig_laplace_consistency() {
        let mut rng = replica_rng(2024, 104, 0);
        for g in [Gig::new(-0.5, 1.0, 1.0).unwrap(), Gig::new(0.5, 2.0, 3.0).unwrap()] {
            let xs: Vec<f64> = (0..40_000).map(|_| g.sample(&mut rng).unwrap()).collect();
            for &t in &[0.1, 0.5, 1.0, 2.0, 4.0] {
                let vals: Vec<f64> = xs.iter().map(|x| (-t * x).exp()).collect();
                let (m, se) = stats::mean_se(&vals);
                let exact = g.laplace(t).unwrap();
                assert!((m - exact).abs() <= 3.0 * se, "{g:?} t={t} m={m} exact={exact}");
            }
        }
    }

    #[test]
    fn gamma_convention_pinned_by_hitting_law() {
        // 1/(2 Gamma(1/2, theta^2)) must follow the driftless hitting law
        // Gig(-1/2, 0, theta^2).
        let theta = 1.3_f64;
        let gamma = GammaLaw::new(0.5, theta * theta).unwrap();
        let limit = Gig::new(-0.5, 0.0, theta * theta).unwrap();
        let mut rng = replica_rng(2024, 105, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| 1.0 / (2.0 * gamma.sample(&mut rng))).collect();
        let ks = stats::ks_test(&xs, |x| limit.cdf(x)).unwrap();
        assert!(ks.p_value > 0.01, "p {}", ks.p_value);
    }

    #[test]
    fn gamma_p_against_erf_special_case() {
        for &x in &[0.1, 0.5, 1.0, 2.0, 5.0] {
            assert!((gamma_p(0.5, x) - libm::erf(x.sqrt())).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_ratio_values() {
        assert_eq!(bessel_k_ratio_3half(1.0).unwrap(), 2.0);
        assert_eq!(bessel_k_ratio_3half(2.0).unwrap(), 1.5);
        assert!(bessel_k_ratio_3half(0.0).is_err());
        assert!(bessel_k_ratio_3half(-1.0).is_err());
    }

    #[test]
    fn bessel_ratio_matches_integral_representation() {
        // K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt
        let x = 0.8;
        let k = |nu: f64| {
            quad::integrate_to_inf(&|t: f64| (-x * t.cosh()).exp() * (nu * t).cosh(), 0.0, 1.0, 1e-14)
        };
        let ratio = k(1.5) / k(0.5);
        assert!((ratio - bessel_k_ratio_3half(x).unwrap()).abs() < 1e-10, "ratio {ratio}");
    }

    #[test]
    fn crossing_time_within_cell_bounds() {
        let mut rng = replica_rng(2024, 106, 0);
        for _ in 0..1000 {
            let s = bridge_first_crossing_time(1.0, 0.5, 0.01, &mut rng);
            assert!(s > 0.0 && s <= 0.01);
            let l = bridge_last_crossing_time(1.0, 0.5, 0.01, &mut rng);
            assert!(l >= 0.0 && l < 0.01);
        }
    }

    #[test]
    fn crossing_time_matches_quadrature_cdf() {
        // density on (0,h): prop. to s^{-3/2} (h-s)^{-1/2}
        //                   exp(-x^2/(2s) - y^2/(2(h-s)))
        let (x, y, h) = (1.0, 0.5, 1.0);
        let f = |s: f64| {
            if s <= 0.0 || s >= h {
                0.0
            } else {
                s.powf(-1.5) * (h - s).powf(-0.5) * (-x * x / (2.0 * s) - y * y / (2.0 * (h - s))).exp()
            }
        };
        let norm = quad::integrate(&f, 1e-12, h - 1e-12, 1e-13);
        let mut rng = replica_rng(2024, 107, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| bridge_first_crossing_time(x, y, h, &mut rng)).collect();
        let cdf = quad::CdfFromDensity::new(f, 0.0, norm, 1e-12);
        let ks = stats::ks_test(&xs, |s| cdf.eval(s)).unwrap();
        assert!(ks.p_value > 0.01, "p {}", ks.p_value);
    }

    #[test]
    fn my_property_passes_and_detects_swap() {
        let mut rng = replica_rng(2024, 108, 0);
        let report = verify_my_property_1d(1.0, 1.0, 10_000, &mut rng).unwrap();
        assert!(report.passed, "{report:?}");

        // negative control: swapped parameters in the clause-(ii) marginal
        let m = my_marginals(1.0, 1.0).unwrap();
        let mut rng = replica_rng(2024, 109, 0);
        let tilde: Vec<f64> = (0..10_000)
            .map(|_| m.tau.sample(&mut rng) + m.gap.sample(&mut rng))
            .collect();
        let swapped = Gig::new(0.5, 2.5, 0.4).unwrap();
        let ks = stats::ks_test(&tilde, |x| swapped.cdf(x)).unwrap();
        assert!(ks.p_value <= 0.01);
    }

    #[test]
    fn my_gap_depends_on_eta_only() {
        // the gap tau_tilde - tau has law Gamma(1/2, eta^2/2): changing
        // theta leaves it unchanged, changing eta does not.
        let mut rng = replica_rng(2024, 110, 0);
        let gap = |theta: f64, eta: f64, rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
            let m = my_marginals(theta, eta).unwrap();
            (0..8000).map(|_| m.gap.sample(rng)).collect()
        };
        let a = gap(1.0, 1.0, &mut rng);
        let b = gap(3.0, 1.0, &mut rng);
        let c = gap(1.0, 2.0, &mut rng);
        assert!(stats::ks2_test(&a, &b).unwrap().p_value > 0.01);
        assert!(stats::ks2_test(&a, &c).unwrap().p_value <= 0.01);
    }

    #[test]
    fn path_oracle_smoke_matches_marginals() {
        let mut rng = replica_rng(2024, 111, 0);
        let m = my_marginals(1.0, 1.0).unwrap();
        let mut taus = Vec::new();
        let mut tildes = Vec::new();
        for _ in 0..1200 {
            let (t, tt) = first_last_zero_path_oracle(1.0, 1.0, 5e-4, &mut rng).unwrap();
            taus.push(t);
            tildes.push(tt);
        }
        assert!(stats::ks_test(&taus, |x| m.tau.cdf(x)).unwrap().p_value > 0.01);
        assert!(stats::ks_test(&tildes, |x| m.tau_tilde.cdf(x)).unwrap().p_value > 0.01);
    }
}
