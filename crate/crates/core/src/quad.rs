//! Quadrature rules.
//!
//! Composite Simpson on uniform grids is used for integrated squared errors;
//! adaptive Gauss–Kronrod serves as the reference for closed-form integrals.

/// Composite Simpson weights for `n` uniformly spaced nodes with spacing `h`.
///
/// An odd number of intervals closes with Simpson's 3/8 rule on the last three;
/// two nodes fall back to the trapezoid rule.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    match n {
        0 | 1 => vec![0.0; n],
        2 => vec![0.5 * h, 0.5 * h],
        _ => {
            let intervals = n - 1;
            let mut w = vec![0.0; n];
            let simpson_end = if intervals.is_multiple_of(2) {
                intervals
            } else {
                intervals - 3
            };
            for k in (0..simpson_end).step_by(2) {
                w[k] += h / 3.0;
                w[k + 1] += 4.0 * h / 3.0;
                w[k + 2] += h / 3.0;
            }
            if simpson_end < intervals {
                let k = simpson_end;
                w[k] += 3.0 * h / 8.0;
                w[k + 1] += 9.0 * h / 8.0;
                w[k + 2] += 9.0 * h / 8.0;
                w[k + 3] += 3.0 * h / 8.0;
            }
            w
        }
    }
}

/// Uniform grid of `n` nodes over `[a, b]`, endpoints included.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { b } else { a + h * k as f64 }).collect()
}

/// Composite Simpson integral of `f` over `[a, b]` with `n` nodes.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / (n.max(2) - 1) as f64;
    let nodes = uniform_grid(a, b, n.max(2));
    simpson_weights(nodes.len(), h)
        .iter()
        .zip(&nodes)
        .map(|(w, &x)| w * f(x))
        .sum()
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
// 7-point Gauss weights on XGK[1], XGK[3], XGK[5], XGK[7]
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
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = h * XGK[k];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

fn gk_recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
        return value;
    }
    let m = 0.5 * (a + b);
    gk_recurse(f, a, m, 0.5 * tol, depth - 1) + gk_recurse(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive 15-point Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    gk_recurse(&f, a, b, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        for n in [3usize, 4, 5, 6, 7, 500, 2001] {
            let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, n);
            assert!((v - 2.0).abs() < 1e-12, "n={n}: {v}");
        }
    }

    #[test]
    fn weights_sum_to_length() {
        for n in 2..12 {
            let s: f64 = simpson_weights(n, 0.1).iter().sum();
            assert!((s - 0.1 * (n - 1) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_kronrod_oscillatory() {
        let v = adaptive_gauss_kronrod(|x| (7.0 * x).cos(), 0.0, 10.0, 1e-14);
        assert!((v - (70.0f64).sin() / 7.0).abs() < 1e-13);
    }
}
