//! Special functions and quadrature helpers.
//!
//! The Mittag-Leffler function is evaluated by its Taylor series near the
//! origin and by numerical inversion of its Laplace transform on an optimal
//! parabolic contour elsewhere (Garrappa, SIAM J. Numer. Anal. 53, 2015).

use std::f64::consts::PI;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};

/// Largest |z| handled by the Taylor series.
pub const ML_SERIES_RADIUS: f64 = 1.0;

const MAX_SERIES_TERMS: usize = 200_000;
const LOG_MACH_EPS: f64 = -36.043_653_389_117_15;
const LOG_TARGET_EPS: f64 = -34.538_776_394_910_684;
const MAX_CONTOUR_NODES: f64 = 200.0;

/// Reciprocal gamma for positive arguments, accurate across the range where
/// `gamma` itself would overflow.
pub fn rgamma(x: f64) -> f64 {
    if x < 170.0 {
        1.0 / gamma(x)
    } else {
        (-ln_gamma(x)).exp()
    }
}

/// Two-parameter Mittag-Leffler function `E_{alpha,beta}(z)` for real `z`.
pub fn mittag_leffler(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return invalid(format!(
            "Mittag-Leffler parameters must be positive, got alpha={alpha}, beta={beta}"
        ));
    }
    if !z.is_finite() {
        return invalid(format!("Mittag-Leffler argument must be finite, got {z}"));
    }
    let fail = Error::NonConvergence { alpha, beta, z };
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(z.exp());
    }
    let value = if z.abs() <= ML_SERIES_RADIUS {
        series(alpha, beta, z)
    } else {
        contour(alpha, beta, z)
    };
    match value {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(fail),
    }
}

fn series(alpha: f64, beta: f64, z: f64) -> Option<f64> {
    let ln_abs = z.abs().ln();
    let negative = z < 0.0;
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for n in 0..MAX_SERIES_TERMS {
        let arg = alpha * n as f64 + beta;
        let mag = if arg < 170.0 {
            z.abs().powi(n as i32) / gamma(arg)
        } else {
            (n as f64 * ln_abs - ln_gamma(arg)).exp()
        };
        let term = if negative && n % 2 == 1 { -mag } else { mag };
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        if n > 0 && arg > 2.0 && mag <= 1e-17 * (sum + comp).abs() {
            return Some(sum + comp);
        }
        if mag == 0.0 && arg > 2.0 {
            return Some(sum + comp);
        }
    }
    None
}

struct ContourParams {
    mu: f64,
    h: f64,
    n: f64,
}

fn contour(alpha: f64, beta: f64, z: f64) -> Option<f64> {
    let lambda = Complex64::new(z, 0.0);
    let theta = lambda.arg();
    let kmin = (-alpha / 2.0 - theta / (2.0 * PI)).ceil() as i64;
    let kmax = (alpha / 2.0 - theta / (2.0 * PI)).floor() as i64;
    let radius = z.abs().powf(1.0 / alpha);
    let mut poles: Vec<(f64, Complex64)> = (kmin..=kmax)
        .map(|k| {
            let s = Complex64::from_polar(radius, (theta + 2.0 * k as f64 * PI) / alpha);
            ((s.re + s.norm()) / 2.0, s)
        })
        .collect();
    poles.sort_by(|a, b| a.0.total_cmp(&b.0));
    poles.retain(|p| p.0 > 1e-15);

    let mut s_star = vec![Complex64::new(0.0, 0.0)];
    let mut phi = vec![0.0];
    for (ph, s) in &poles {
        s_star.push(*s);
        phi.push(*ph);
    }
    let j1 = s_star.len();
    let mut p = vec![1.0; j1];
    p[0] = (-2.0 * (alpha - beta + 1.0)).max(0.0);
    let mut q = vec![1.0; j1];
    q[j1 - 1] = f64::INFINITY;
    phi.push(f64::INFINITY);

    let t = 1.0;
    let admissible: Vec<usize> = (0..j1)
        .filter(|&j| phi[j] < (LOG_TARGET_EPS - LOG_MACH_EPS) / t && phi[j] < phi[j + 1])
        .collect();
    if admissible.is_empty() {
        return None;
    }

    let mut log_eps = LOG_TARGET_EPS;
    let mut params: Vec<(usize, ContourParams)>;
    let mut tries = 0;
    loop {
        params = admissible
            .iter()
            .map(|&j| {
                let prm = if j + 1 < j1 {
                    optimal_param_rb(t, phi[j], phi[j + 1], p[j], q[j], log_eps)
                } else {
                    optimal_param_ru(t, phi[j], p[j], log_eps)
                };
                (j, prm)
            })
            .collect();
        let best = params.iter().map(|(_, c)| c.n).fold(f64::INFINITY, f64::min);
        if best <= MAX_CONTOUR_NODES {
            break;
        }
        log_eps += 10f64.ln();
        tries += 1;
        if tries > 8 {
            return None;
        }
    }
    let (region, prm) = params
        .into_iter()
        .min_by(|a, b| a.1.n.total_cmp(&b.1.n))
        .expect("admissible regions are non-empty");
    if !prm.n.is_finite() {
        return None;
    }

    let nn = prm.n as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in -nn..=nn {
        let u = prm.h * k as f64;
        let w = Complex64::new(1.0, u);
        let zc = prm.mu * w * w;
        let zd = Complex64::new(-2.0 * prm.mu * u, 2.0 * prm.mu);
        let f = zc.powf(alpha - beta) / (zc.powf(alpha) - lambda) * zd;
        acc += (zc * t).exp() * f;
    }
    let integral = acc * prm.h / Complex64::new(0.0, 2.0 * PI);

    let mut residues = Complex64::new(0.0, 0.0);
    for s in &s_star[region + 1..] {
        residues += s.powf(1.0 - beta) * (s * t).exp() / alpha;
    }
    Some((integral + residues).re)
}

fn optimal_param_rb(
    t: f64,
    phi_j: f64,
    phi_j1: f64,
    pj: f64,
    qj: f64,
    log_epsilon: f64,
) -> ContourParams {
    let fac = 1.01;
    let f_max = (log_epsilon - LOG_MACH_EPS).exp();
    let sq_j = phi_j.sqrt();
    let threshold = 2.0 * ((log_epsilon - LOG_MACH_EPS) / t).sqrt();
    let sq_j1 = phi_j1.sqrt().min(threshold - sq_j);
    let none = ContourParams {
        mu: 0.0,
        h: 0.0,
        n: f64::INFINITY,
    };

    let (bar_j, bar_j1, f_bar) = if pj < 1e-14 && qj < 1e-14 {
        (sq_j, sq_j1, 1.0)
    } else if pj < 1e-14 {
        let f_min = if sq_j > 0.0 {
            fac * (sq_j / (sq_j1 - sq_j)).powf(qj)
        } else {
            fac
        };
        if f_min >= f_max {
            return none;
        }
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fq = f_bar.powf(-1.0 / qj);
        (sq_j, (2.0 * sq_j1 - fq * sq_j) / (2.0 + fq), f_bar)
    } else if qj < 1e-14 {
        let f_min = fac * (sq_j1 / (sq_j1 - sq_j)).powf(pj);
        if f_min >= f_max {
            return none;
        }
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        ((2.0 * sq_j + fp * sq_j1) / (2.0 - fp), sq_j1, f_bar)
    } else {
        let mut f_min = fac * (sq_j + sq_j1) / (sq_j1 - sq_j).powf(pj.max(qj));
        if f_min >= f_max {
            return none;
        }
        f_min = f_min.max(1.5);
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        let fq = f_bar.powf(-1.0 / qj);
        let w = -phi_j1 * t / log_epsilon;
        let den = 2.0 + w - (1.0 + w) * fp + fq;
        (
            ((2.0 + w + fq) * sq_j + fp * sq_j1) / den,
            (-(1.0 + w) * fq * sq_j + (2.0 + w - (1.0 + w) * fp) * sq_j1) / den,
            f_bar,
        )
    };

    let log_eps = log_epsilon - f_bar.ln();
    let w = -bar_j1 * bar_j1 * t / log_eps;
    let mu = (((1.0 + w) * bar_j + bar_j1) / (2.0 + w)).powi(2);
    let h = -2.0 * PI / log_eps * (bar_j1 - bar_j) / ((1.0 + w) * bar_j + bar_j1);
    let n = ((1.0 - log_eps / t / mu).sqrt() / h).ceil();
    if !(h > 0.0 && mu > 0.0 && n.is_finite()) {
        return none;
    }
    ContourParams { mu, h, n }
}

fn optimal_param_ru(t: f64, phi_j: f64, pj: f64, log_epsilon: f64) -> ContourParams {
    let sq_phi = phi_j.sqrt();
    let mut phibar = if phi_j > 0.0 { phi_j * 1.01 } else { 0.01 };
    let mut sq_phibar = phibar.sqrt();
    let (f_min, f_max, f_tar) = (1.0_f64, 10.0_f64, 5.0_f64);

    let mut n;
    let mut a;
    let mut sq_mu;
    let mut iterations = 0;
    loop {
        let phi_t = phibar * t;
        let log_eps_phi_t = log_epsilon / phi_t;
        n = (phi_t / PI * (1.0 - 1.5 * log_eps_phi_t + (1.0 - 2.0 * log_eps_phi_t).sqrt())).ceil();
        a = PI * n / phi_t;
        sq_mu = sq_phibar * (4.0 - a).abs() / (7.0 - (1.0 + 12.0 * a).sqrt()).abs();
        let fbar = ((sq_phibar - sq_phi) / sq_mu).powf(-pj);
        let stop = pj < 1e-14 || (f_min < fbar && fbar < f_max);
        iterations += 1;
        if stop || iterations > 100 {
            break;
        }
        sq_phibar = f_tar.powf(-1.0 / pj) * sq_mu + sq_phi;
        phibar = sq_phibar * sq_phibar;
    }
    let mut mu = sq_mu * sq_mu;
    let mut h = (-3.0 * a - 2.0 + 2.0 * (1.0 + 12.0 * a).sqrt()) / (4.0 - a) / n;

    let threshold = (log_epsilon - LOG_MACH_EPS) / t;
    if mu > threshold {
        let qv = if pj.abs() < 1e-14 {
            0.0
        } else {
            f_tar.powf(-1.0 / pj) * mu.sqrt()
        };
        let phibar = (qv + phi_j.sqrt()).powi(2);
        if phibar < threshold {
            let w = (LOG_MACH_EPS / (LOG_MACH_EPS - log_epsilon)).sqrt();
            let u = (-phibar * t / LOG_MACH_EPS).sqrt();
            mu = threshold;
            n = (w * log_epsilon / 2.0 / PI / (u * w - 1.0)).ceil();
            h = w / n;
        } else {
            n = f64::INFINITY;
            h = 0.0;
        }
    }
    ContourParams { mu, h, n }
}

/// Integrates `f` over `[a, b]` with double-exponential (tanh-sinh) quadrature.
///
/// `f` receives `(x, x - a, b - x)`; the two distances are computed without
/// cancellation so integrands with endpoint singularities can use them.
pub fn tanh_sinh(mut f: impl FnMut(f64, f64, f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let r = 0.5 * (b - a);
    let t_max = 6.0;
    let mut eval = |t: f64| -> f64 {
        let ch = t.cosh();
        let u = 0.5 * PI * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        let near = r * 2.0 * e / (1.0 + e);
        let far = r * 2.0 / (1.0 + e);
        let w = r * 0.5 * PI * ch * 4.0 * e / ((1.0 + e) * (1.0 + e));
        if near <= 0.0 || w == 0.0 || !w.is_finite() {
            return 0.0;
        }
        let (x, da, db) = if t >= 0.0 {
            (b - near, far, near)
        } else {
            (a + near, near, far)
        };
        let v = f(x, da, db);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };

    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = h * sum;
    for _ in 0..10 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_max {
            let t = k as f64 * h;
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let next = h * sum;
        let done = (next - estimate).abs() <= tol * next.abs().max(1e-300);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

fn legendre16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16).expect("degree 16 is valid"))
}

/// Composite 16-point Gauss-Legendre rule over `panels` equal subintervals.
pub fn gauss_legendre(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let rule = legendre16();
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * width;
            let hi = if i + 1 == panels { b } else { lo + width };
            rule.integrate(lo, hi, &mut f)
        })
        .sum()
}
