//! Special functions and one-dimensional quadrature.

pub use statrs::function::gamma::ln_gamma;

/// `ln I_nu(x)` for the modified Bessel function of the first kind, valid for
/// `x >= 0` and `nu > -1`. Integer order `-1` is mapped to `1`.
pub fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    let nu = if nu == -1.0 { 1.0 } else { nu };
    assert!(nu > -1.0, "order {nu} out of range");
    assert!(x >= 0.0, "argument {x} must be nonnegative");
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else if nu > 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    if x > 40.0 && x > 2.0 * nu * nu {
        if let Some(v) = ln_bessel_i_asymptotic(nu, x) {
            return v;
        }
    }
    ln_bessel_i_series(nu, x)
}

/// Power series summed outward from its largest term.
fn ln_bessel_i_series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let ln_half = half.ln();
    let disc = (nu * nu + x * x).sqrt();
    let peak = ((disc - nu - 2.0) * 0.5).max(0.0).round();
    let ln_term = |k: f64| (2.0 * k + nu) * ln_half - ln_gamma(k + 1.0) - ln_gamma(k + nu + 1.0);
    let ln_peak = ln_term(peak);

    let mut sum = 1.0;
    // terms above the peak
    let mut t = 1.0;
    let mut k = peak;
    loop {
        t *= q / ((k + 1.0) * (k + nu + 1.0));
        sum += t;
        k += 1.0;
        if t < 1e-17 * sum {
            break;
        }
    }
    // terms below the peak
    let mut t = 1.0;
    let mut k = peak;
    while k >= 1.0 {
        t *= k * (k + nu) / q;
        sum += t;
        k -= 1.0;
        if t < 1e-17 * sum {
            break;
        }
    }
    ln_peak + sum.ln()
}

/// Large-argument expansion; `None` if the series stops converging before
/// reaching full precision.
fn ln_bessel_i_asymptotic(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let j = (2 * k - 1) as f64;
        let next = -term * (mu - j * j) / (k as f64 * 8.0 * x);
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            return Some(x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln());
        }
    }
    None
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let mut segs = vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..2000 {
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            break;
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = segs.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
    segs.iter().map(|s| s.2).sum()
}

/// Integral of `f` over `[a, inf)` via `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}
