//! Modified Bessel functions of the first kind, integer order, in log form.
//!
//! `log I_0` comes from the power series below `x = 20` and from the
//! large-argument expansion of `e^{-x} I_0(x)` above it, so it never
//! overflows. Higher orders are reached through the ratios
//! `r_k = I_{k+1}(x) / I_k(x)`: one continued fraction at the top order, then
//! the downward recurrence `r_{k-1} = x / (2k + x r_k)`, which only adds and
//! divides positive numbers.

const SERIES_LIMIT: f64 = 20.0;
const SMALL_ARG: f64 = 1e-4;
const GAUSS_LIMIT: f64 = 1.0;
const CF_TOL: f64 = 1e-16;
const CF_MAX_ITER: usize = 100_000;
const TINY: f64 = 1e-300;

/// `log I_0(x)` for `x >= 0`.
pub fn log_bessel_i0(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < SERIES_LIMIT {
        // I_0(x) = sum_m (x^2/4)^m / (m!)^2; the m = 0 term is kept out of
        // the sum so small arguments keep full relative precision.
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut tail = 0.0;
        let mut m = 1.0;
        loop {
            term *= q / (m * m);
            tail += term;
            if term <= tail * 1e-17 {
                break;
            }
            m += 1.0;
        }
        tail.ln_1p()
    } else {
        // e^{-x} I_0(x) sqrt(2 pi x) ~ sum_k ((2k-1)!!)^2 / (k! (8x)^k)
        let mut term: f64 = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            let next: f64 = term * (2.0 * k - 1.0_f64).powi(2) / (8.0 * k * x);
            if next >= term || next <= sum * 1e-17 {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
    }
}

/// `I_{nu+1}(x) / I_nu(x)` for `x >= 0`.
///
/// Gauss continued fraction for small arguments, Perron's continued fraction
/// otherwise; the latter converges in a few dozen terms even for `x` in the
/// millions.
pub fn bessel_ratio(nu: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    let v = nu as f64;
    if x == 0.0 {
        return 0.0;
    }
    if x <= SMALL_ARG {
        return x / (2.0 * (v + 1.0)) * (1.0 - x * x / (4.0 * (v + 1.0) * (v + 2.0)));
    }
    if x <= GAUSS_LIMIT {
        // 1/r = b_0 + 1/(b_1 + 1/(b_2 + ...)), b_k = 2(nu + 1 + k)/x
        let mut f = 2.0 * (v + 1.0) / x;
        let mut c = f;
        let mut d = 0.0;
        for k in 1..CF_MAX_ITER {
            let b = 2.0 * (v + 1.0 + k as f64) / x;
            d = b + d;
            if d == 0.0 {
                d = TINY;
            }
            c = b + 1.0 / c;
            if c == 0.0 {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < CF_TOL {
                break;
            }
        }
        1.0 / f
    } else {
        // r = x / (b_0 + a_1/(b_1 + a_2/(b_2 + ...))),
        // b_0 = 2nu + 2 + x, a_k = -(2nu + 2k + 1) x, b_k = 2nu + 2 + k + 2x
        let mut f = 2.0 * v + 2.0 + x;
        let mut c = f;
        let mut d = 0.0;
        for k in 1..CF_MAX_ITER {
            let kf = k as f64;
            let a = -(2.0 * v + 2.0 * kf + 1.0) * x;
            let b = 2.0 * v + 2.0 + kf + 2.0 * x;
            d = b + a * d;
            if d == 0.0 {
                d = TINY;
            }
            c = b + a / c;
            if c == 0.0 {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < CF_TOL {
                break;
            }
        }
        x / f
    }
}

// Both power series at once, normalized by their leading terms:
// I_nu = (x/2)^nu / nu! * s0 and I_{nu+1} = (x/2)^(nu+1) / (nu+1)! * s1.
// All terms are positive, so there is no cancellation.
fn paired_series(nu: u32, x: f64) -> (f64, f64) {
    let v = nu as f64;
    let half = 0.5 * x;
    let q = half * half;
    let (mut t0, mut t1) = (1.0, 1.0);
    // Sums without the leading 1, kept apart for precision at small x.
    let (mut s0, mut s1) = (0.0, 0.0);
    let mut m = 1.0;
    loop {
        t0 *= q / (m * (m + v));
        t1 *= q / (m * (m + v + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 <= (1.0 + s0) * 1e-17 && t1 <= (1.0 + s1) * 1e-17 {
            break;
        }
        m += 1.0;
    }
    let log_fact: f64 = (2..=nu).map(|k| (k as f64).ln()).sum();
    let log_i = v * half.ln() - log_fact + s0.ln_1p();
    (log_i, half / (v + 1.0) * (1.0 + s1) / (1.0 + s0))
}

/// `log I_nu(x)` for `x >= 0`. `log I_0(0) = 0`, `log I_nu(0) = -inf` for `nu >= 1`.
pub fn log_bessel_i(nu: u32, x: f64) -> f64 {
    log_bessel_i_and_ratio(nu, x).0
}

/// `(log I_nu(x), I_{nu+1}(x) / I_nu(x))` sharing one continued fraction.
pub fn log_bessel_i_and_ratio(nu: u32, x: f64) -> (f64, f64) {
    if x == 0.0 {
        let log_i = if nu == 0 { 0.0 } else { f64::NEG_INFINITY };
        return (log_i, 0.0);
    }
    if x < SERIES_LIMIT {
        return paired_series(nu, x);
    }
    let top = bessel_ratio(nu, x);
    let mut r = top;
    let mut log_sum = 0.0;
    for k in (1..=nu).rev() {
        // r holds r_k; step down to r_{k-1}.
        r = x / (2.0 * k as f64 + x * r);
        log_sum += r.ln();
    }
    (log_bessel_i0(x) + log_sum, top)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn frozen_values() {
        assert_eq!(log_bessel_i(0, 0.0), 0.0);
        assert_eq!(log_bessel_i(3, 0.0), f64::NEG_INFINITY);
        // Frozen from the double-double series oracle: I_0(2) = 2.2795853...,
        // I_1(2) = 1.5906368...
        let l0 = oracle::log_bessel_i(0, 2.0);
        let l1 = oracle::log_bessel_i(1, 2.0);
        assert!((l0 - 0.823_993_541_482_956).abs() < 1e-14);
        assert!((l1 - 0.464_134_473_546_160).abs() < 1e-14);
        assert!((l0.exp() - 2.279_585_302_336_067).abs() < 1e-14);
        assert!((log_bessel_i(0, 2.0) - l0).abs() < 1e-15);
        assert!((log_bessel_i(1, 2.0) - l1).abs() < 1e-15);
    }

    #[test]
    fn matches_series_oracle() {
        let orders = [0u32, 1, 2, 3, 5, 10, 25, 50, 120];
        let args = [
            1e-8, 1e-5, 1e-4, 2e-4, 0.01, 0.5, 1.0, 1.5, 2.0, 5.0, 10.0, 19.99, 20.0, 20.01, 35.0,
            100.0, 250.0, 500.0, 700.0,
        ];
        for &nu in &orders {
            for &x in &args {
                let got = log_bessel_i(nu, x);
                let want = oracle::log_bessel_i(nu, x);
                assert!(rel(got, want) <= 1e-12, "nu={nu} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn ratio_matches_oracle() {
        for &nu in &[0u32, 1, 4, 30] {
            for &x in &[1e-5, 0.3, 1.0, 1.01, 7.0, 19.5, 20.0, 64.0, 700.0] {
                let want = (oracle::log_bessel_i(nu + 1, x) - oracle::log_bessel_i(nu, x)).exp();
                assert!(rel(bessel_ratio(nu, x), want) <= 1e-12, "nu={nu} x={x}");
                assert!(rel(log_bessel_i_and_ratio(nu, x).1, want) <= 1e-12, "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn huge_arguments_stay_finite() {
        for &nu in &[0u32, 1, 1000] {
            for &x in &[1e3, 1e5, 2e6] {
                let (l, r) = log_bessel_i_and_ratio(nu, x);
                assert!(l.is_finite() && r.is_finite() && r > 0.0 && r < 1.0);
            }
        }
        // Leading large-x behaviour: log I_0(x) ~ x - log(2 pi x)/2.
        let x = 2e6;
        let lead = x - 0.5 * (2.0 * std::f64::consts::PI * x).ln();
        assert!((log_bessel_i(0, x) - lead).abs() < 1e-6);
    }
}
