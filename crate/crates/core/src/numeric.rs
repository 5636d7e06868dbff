//! Small numerical toolkit: bracketed root finding, adaptive quadrature,
//! one-dimensional maximization, Nelder–Mead, and a handful of sample
//! statistics shared by the fitting and evaluation code.

use crate::error::{Error, Result};

/// Relative step used when widening a bracket.
const BRACKET_GROWTH: f64 = 1.6;

/// Finds a root of `f` in `[a, b]` with Brent's method.
///
/// `f(a)` and `f(b)` must have opposite signs (or one of them be zero).
pub fn brent_root<F>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::domain(format!(
            "root not bracketed: f({a})={fa}, f({b})={fb}"
        )));
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        trace: format!("brent stalled near x={b}, f={fb}"),
    })
}

/// Moves `far` away from `anchor` until `f(far)` changes sign relative to
/// `f(anchor)`. Returns the widened endpoint.
pub fn expand_bracket<F>(mut f: F, anchor: f64, far: f64, limit: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let fa = f(anchor);
    let mut step = far - anchor;
    if step == 0.0 {
        return Err(Error::invalid("degenerate bracket"));
    }
    let mut x = far;
    for _ in 0..limit {
        let fx = f(x);
        if fx == 0.0 || fx.signum() != fa.signum() {
            return Ok(x);
        }
        step *= BRACKET_GROWTH;
        x = anchor + step;
        if !x.is_finite() {
            break;
        }
    }
    Err(Error::domain(format!(
        "could not bracket a sign change starting at {anchor}"
    )))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS7_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += GK_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the
/// summed estimate falls below `abs_tol` or the interval budget runs out.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pieces = vec![{
        let (v, e) = gauss_kronrod_15(&mut f, lo, hi);
        (lo, hi, v, e)
    }];
    for _ in 0..4000 {
        let total_err: f64 = pieces.iter().map(|p| p.3).sum();
        if total_err <= abs_tol {
            break;
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (l, h, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (l + h);
        let (v1, e1) = gauss_kronrod_15(&mut f, l, mid);
        let (v2, e2) = gauss_kronrod_15(&mut f, mid, h);
        pieces.push((l, mid, v1, e1));
        pieces.push((mid, h, v2, e2));
    }
    sign * pieces.iter().map(|p| p.2).sum::<f64>()
}

/// Integrates `f` over `[a, ∞)` through the substitution `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, abs_tol: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - t;
            let v = f(a + t / u) / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
    )
}

/// Integrates `f` over `(-∞, b]`.
pub fn integrate_from_neg_infinity<F: FnMut(f64) -> f64>(mut f: F, b: f64, abs_tol: f64) -> f64 {
    integrate_to_infinity(|x| f(2.0 * b - x), b, abs_tol)
}

/// Golden-section search for the maximizer of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Outcome of a Nelder–Mead minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex minimization.
///
/// Stops once the spread of function values across the simplex drops below
/// `ftol`; returns `NoConvergence` if `max_iter` is exhausted first.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: f64, ftol: f64, max_iter: usize) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for iter in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        if spread <= ftol * (1.0 + values[0].abs()) {
            return Ok(Minimum {
                x: simplex[0].clone(),
                value: values[0],
                iterations: iter,
            });
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] { along(-0.5) } else { along(0.5) };
            let fcn = f(&contracted);
            if fcn < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fcn;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    for k in 0..n {
                        simplex[i][k] = best[k] + 0.5 * (simplex[i][k] - best[k]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Err(Error::NoConvergence {
        iterations: max_iter,
        trace: format!(
            "nelder-mead best x={:?} f={} spread={}",
            simplex[best],
            values[best],
            values.iter().cloned().fold(f64::MIN, f64::max) - values[best]
        ),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Linear-interpolation quantile (type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Median of a scratch buffer; reorders the buffer.
pub fn median_in_place(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    let mid = n / 2;
    let (_, upper, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = xs[..mid].iter().cloned().fold(f64::MIN, f64::max);
        0.5 * (lower + upper)
    }
}

/// Silverman's rule-of-thumb bandwidth for a Gaussian kernel.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sd = if xs.len() > 1 { sample_variance(xs).sqrt() } else { 0.0 };
    let sorted = sorted_copy(xs);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        // Degenerate sample: fall back to a bandwidth tied to its magnitude.
        1e-6 * (1.0 + sorted[0].abs())
    }
}

/// Log of a Gaussian kernel density estimate at `x`.
pub fn kde_log_density(draws: &[f64], bandwidth: f64, x: f64) -> f64 {
    let zs: Vec<f64> = draws
        .iter()
        .map(|d| -0.5 * ((x - d) / bandwidth).powi(2))
        .collect();
    let m = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = zs.iter().map(|z| (z - m).exp()).sum();
    m + s.ln() - (draws.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

/// Gaussian kernel density estimate over sorted draws.
///
/// Evaluation only visits draws within ten bandwidths of the nearest draw's
/// distance; kernel terms further out are negligible next to the nearest one.
#[derive(Debug, Clone)]
pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
}

/// Kernel terms beyond this many bandwidths are below `exp(-50)`.
const KDE_WINDOW: f64 = 10.0;

impl Kde {
    /// Builds an estimate with Silverman's bandwidth.
    pub fn new(draws: &[f64]) -> Self {
        let bandwidth = silverman_bandwidth(draws);
        Self::with_bandwidth(draws, bandwidth)
    }

    pub fn with_bandwidth(draws: &[f64], bandwidth: f64) -> Self {
        Self {
            sorted: sorted_copy(draws),
            bandwidth,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s = &self.sorted;
        let i = s.partition_point(|&d| d < x);
        let nearest = [i.checked_sub(1), (i < s.len()).then_some(i)]
            .into_iter()
            .flatten()
            .map(|j| (s[j] - x).abs())
            .fold(f64::INFINITY, f64::min);
        let reach = nearest + KDE_WINDOW * h;
        let lo = s.partition_point(|&d| d < x - reach);
        let hi = s.partition_point(|&d| d <= x + reach);
        let window = &s[lo..hi];
        let m = window
            .iter()
            .map(|d| -0.5 * ((x - d) / h).powi(2))
            .fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = window.iter().map(|d| (-0.5 * ((x - d) / h).powi(2) - m).exp()).sum();
        m + s.ln() - (self.sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let sorted = sorted_copy(sample);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value for a KS statistic `d` on `n` points, with
/// Stephens' finite-sample correction.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as usize % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Convenience: KS test p-value of `sample` against `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    ks_p_value(sample.len(), ks_statistic(sample, cdf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windowed_kde_matches_full_sum() {
        let draws: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64 / 17.0).sin() * 3.0).collect();
        let kde = Kde::new(&draws);
        for x in [-4.0, -1.0, 0.0, 0.7, 2.9, 12.0, -40.0] {
            let full = kde_log_density(&draws, kde.bandwidth(), x);
            assert!((kde.log_density(x) - full).abs() < 1e-9 * (1.0 + full.abs()), "{x}");
        }
    }

    #[test]
    fn brent_finds_cube_root() {
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 50).is_err());
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        let g = integrate_to_infinity(|x| (-x * x / 2.0).exp(), 0.0, 1e-12);
        assert!((g - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-10);
        let c = integrate_from_neg_infinity(|x| 1.0 / (1.0 + x * x), 0.0, 1e-10);
        assert!((c - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
    }

    #[test]
    fn golden_section_locates_peak() {
        let x = golden_max(|x| -(x - 0.3).powi(2), -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let m = nelder_mead(
            |v| (1.0 - v[0]).powi(2) + 100.0 * (v[1] - v[0] * v[0]).powi(2),
            &[-1.2, 1.0],
            0.5,
            1e-14,
            5000,
        )
        .unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn ks_p_value_reference_points() {
        // Kolmogorov limiting distribution: P(K > 1.3581) = 0.05.
        let n = 1_000_000;
        let d = 1.358_1 / (n as f64).sqrt();
        assert!((ks_p_value(n, d) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn kde_of_single_point_is_normal_density() {
        let ld = kde_log_density(&[0.0], 1.0, 1.0);
        let expected = -0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((ld - expected).abs() < 1e-12);
    }
}
