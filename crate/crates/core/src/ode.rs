//! Fixed-step classical Runge–Kutta for small state vectors.

/// One RK4 step of `y' = f(t, y)`.
pub fn rk4_step<const N: usize, F>(f: &mut F, t: f64, y: [f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N] + ?Sized,
{
    let axpy = |a: &[f64; N], s: f64, b: &[f64; N]| -> [f64; N] {
        let mut out = *a;
        for (o, bi) in out.iter_mut().zip(b) {
            *o += s * bi;
        }
        out
    };
    let k1 = f(t, &y);
    let k2 = f(t + 0.5 * h, &axpy(&y, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &axpy(&y, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(&y, h, &k3));
    let mut out = y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Number of equal substeps no longer than `max_step` covering `span`.
pub fn substeps(span: f64, max_step: f64) -> usize {
    // the 1e-9 slack keeps exact multiples (0.3 / 0.001) from rounding up
    ((span / max_step) * (1.0 - 1e-9)).ceil().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_on_exponential() {
        let mut f = |_t: f64, y: &[f64; 1]| [-y[0]];
        let run = |h: f64, f: &mut dyn FnMut(f64, &[f64; 1]) -> [f64; 1]| {
            let n = (1.0 / h).round() as usize;
            let mut y = [1.0];
            for i in 0..n {
                y = rk4_step(f, i as f64 * h, y, h);
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let e1 = run(0.1, &mut f);
        let e2 = run(0.05, &mut f);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn substep_count() {
        assert_eq!(substeps(0.3, 0.001), 300);
        assert_eq!(substeps(0.3005, 0.001), 301);
        assert_eq!(substeps(1e-6, 0.001), 1);
    }
}
