//! Exponentially scaled modified Bessel functions and the exponential integral.

const SERIES_LIMIT: f64 = 30.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Power series of I_ν(x)·e^{-x} for ν ∈ {0, 1}.
fn bessel_series_scaled(nu: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let mut term = if nu == 0 { 1.0 } else { half };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + f64::from(nu)));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum * (-x).exp()
}

/// Large-argument expansion of I_ν(x)·e^{-x}.
fn bessel_asymptotic_scaled(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(nu * nu);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = f64::from(2 * k - 1);
        term *= -(mu - odd * odd) / (f64::from(k) * 8.0 * x);
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// I₀(x)·e^{-|x|}.
pub fn i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        bessel_series_scaled(0, ax)
    } else {
        bessel_asymptotic_scaled(0, ax)
    }
}

/// I₁(x)·e^{-|x|}.
pub fn i1e(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < SERIES_LIMIT {
        bessel_series_scaled(1, ax)
    } else {
        bessel_asymptotic_scaled(1, ax)
    };
    v.copysign(x)
}

/// Exponential integral E₁(x) for x > 0.
pub fn e1(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::INFINITY;
    }
    if x < 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        let mut k = 1.0;
        loop {
            term *= -x / k;
            let add = term / k;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
            k += 1.0;
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -f64::from(i * i);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}
