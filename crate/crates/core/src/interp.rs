//! Piecewise-cubic interpolation: local four-point Lagrange stencils, cubic
//! Hermite segments, and a monotone cubic whose inverse is found by bracketed
//! Newton iteration.

/// Value and first derivative of the cubic through four nodes.
pub fn lagrange4(xs: &[f64], ys: &[f64], x: f64) -> (f64, f64) {
    debug_assert!(xs.len() == 4 && ys.len() == 4);
    let mut value = 0.0;
    let mut deriv = 0.0;
    for j in 0..4 {
        let mut denom = 1.0;
        let mut prod = 1.0;
        for k in 0..4 {
            if k != j {
                denom *= xs[j] - xs[k];
                prod *= x - xs[k];
            }
        }
        let mut dprod = 0.0;
        for m in 0..4 {
            if m == j {
                continue;
            }
            let mut p = 1.0;
            for k in 0..4 {
                if k != j && k != m {
                    p *= x - xs[k];
                }
            }
            dprod += p;
        }
        value += ys[j] * prod / denom;
        deriv += ys[j] * dprod / denom;
    }
    (value, deriv)
}

/// Index `i` with `xs[i] <= x <= xs[i+1]`, clamped to `[0, n-2]`.
pub fn interval(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    let p = xs.partition_point(|&v| v <= x);
    p.saturating_sub(1).min(n - 2)
}

/// Local cubic (four-point Lagrange) on arbitrary increasing nodes. Outside
/// `[xs[0], xs[n-1]]` the end stencil is extrapolated.
pub fn cubic_at(xs: &[f64], ys: &[f64], x: f64) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 4, "cubic interpolation needs four nodes");
    let i = interval(xs, x);
    let s = i.saturating_sub(1).min(n - 4);
    lagrange4(&xs[s..s + 4], &ys[s..s + 4], x)
}

/// [`cubic_at`] inside the node range, linear continuation of the end value
/// and end slope outside it.
pub fn cubic_or_linear(xs: &[f64], ys: &[f64], x: f64) -> (f64, f64) {
    let n = xs.len();
    if x < xs[0] {
        let (v, d) = cubic_at(xs, ys, xs[0]);
        (v + d * (x - xs[0]), d)
    } else if x > xs[n - 1] {
        let (v, d) = cubic_at(xs, ys, xs[n - 1]);
        (v + d * (x - xs[n - 1]), d)
    } else {
        cubic_at(xs, ys, x)
    }
}

/// Cubic on a uniform grid `x_i = x0 + i h` (no range check beyond clamping
/// the stencil).
pub fn uniform_cubic(x0: f64, h: f64, ys: &[f64], x: f64) -> (f64, f64) {
    let n = ys.len();
    let i = (((x - x0) / h).floor().max(0.0) as usize).min(n - 2);
    let s = i.saturating_sub(1).min(n - 4);
    let xs = [
        x0 + s as f64 * h,
        x0 + (s + 1) as f64 * h,
        x0 + (s + 2) as f64 * h,
        x0 + (s + 3) as f64 * h,
    ];
    lagrange4(&xs, &ys[s..s + 4], x)
}

/// Cubic Hermite segment on `[x0, x1]`.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;
    let deriv = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
    (value, deriv)
}

/// Piecewise cubic Hermite interpolant with caller-supplied node slopes.
#[derive(Clone, Debug)]
pub struct HermiteSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, slopes: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len() && ys.len() == slopes.len());
        Self { xs, ys, slopes }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Value and derivative; `None` outside the node range.
    pub fn eval(&self, x: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let i = interval(&self.xs, x);
        Some(hermite(
            self.xs[i],
            self.xs[i + 1],
            self.ys[i],
            self.ys[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            x,
        ))
    }
}

/// Monotone (strictly increasing) piecewise cubic: Hermite segments whose
/// slopes are limited so that every segment stays increasing.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    spline: HermiteSpline,
}

impl MonotoneCubic {
    /// Shape-preserving slopes (weighted harmonic means of the secants).
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Option<Self> {
        let slopes = pchip_slopes(&xs, &ys);
        Self::with_slopes(xs, ys, slopes)
    }

    /// Uses the supplied slopes where they keep each segment monotone and
    /// limits them otherwise. `None` unless `xs` and `ys` are both strictly
    /// increasing.
    pub fn with_slopes(xs: Vec<f64>, ys: Vec<f64>, mut slopes: Vec<f64>) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n || slopes.len() != n {
            return None;
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.windows(2).any(|w| !(w[1] > w[0])) {
            return None;
        }
        for m in slopes.iter_mut() {
            if !(*m > 0.0) {
                *m = 0.0;
            }
        }
        // Fritsch-Carlson: keep (alpha, beta) inside the radius-3 disc.
        for k in 0..n - 1 {
            let delta = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
            let alpha = slopes[k] / delta;
            let beta = slopes[k + 1] / delta;
            let r2 = alpha * alpha + beta * beta;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                slopes[k] = tau * alpha * delta;
                slopes[k + 1] = tau * beta * delta;
            }
        }
        Some(Self {
            spline: HermiteSpline::new(xs, ys, slopes),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.spline.domain()
    }

    pub fn range(&self) -> (f64, f64) {
        let ys = &self.spline.ys;
        (ys[0], ys[ys.len() - 1])
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        self.spline.eval(x).map(|(v, _)| v)
    }

    pub fn eval_with_derivative(&self, x: f64) -> Option<(f64, f64)> {
        self.spline.eval(x)
    }

    /// The `x` with `f(x) = y`; `None` if `y` is outside the range.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        let (ylo, yhi) = self.range();
        if !(y >= ylo && y <= yhi) {
            return None;
        }
        let HermiteSpline { xs, ys, slopes } = &self.spline;
        let i = interval(ys, y);
        let (mut a, mut b) = (xs[i], xs[i + 1]);
        let (ya, yb) = (ys[i], ys[i + 1]);
        if y == ya {
            return Some(a);
        }
        if y == yb {
            return Some(b);
        }
        let seg = |x: f64| hermite(xs[i], xs[i + 1], ya, yb, slopes[i], slopes[i + 1], x);
        let mut x = a + (b - a) * (y - ya) / (yb - ya);
        let tol = 4.0 * f64::EPSILON * (yb.abs().max(ya.abs()).max(yb - ya));
        for _ in 0..100 {
            let (f, df) = seg(x);
            let r = f - y;
            if r.abs() <= tol {
                break;
            }
            if r > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let newton = x - r / df;
            x = if df > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if b - a <= 4.0 * f64::EPSILON * b.abs().max(a.abs()).max(1e-300) {
                break;
            }
        }
        Some(x)
    }
}

/// Shape-preserving node slopes for monotone data.
pub fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    if n == 2 {
        return vec![d[0], d[0]];
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let edge = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = edge(h[0], h[1], d[0], d[1]);
    m[n - 1] = edge(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lagrange_reproduces_cubics() {
        let xs = [0.1, 0.4, 0.5, 1.3];
        let f = |x: f64| 2.0 * x * x * x - x + 0.5;
        let df = |x: f64| 6.0 * x * x - 1.0;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for &x in &[0.0, 0.33, 0.9, 1.5] {
            let (v, d) = lagrange4(&xs, &ys, x);
            assert!((v - f(x)).abs() < 1e-12);
            assert!((d - df(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn uniform_cubic_matches_generic() {
        let ys: Vec<f64> = (0..10).map(|i| (0.3 * i as f64).sin()).collect();
        let xs: Vec<f64> = (0..10).map(|i| 1.0 + 0.3 * i as f64).collect();
        for &x in &[1.0, 1.2, 2.05, 3.69, 3.7] {
            let a = uniform_cubic(1.0, 0.3, &ys, x);
            let b = cubic_at(&xs, &ys, x);
            assert!((a.0 - b.0).abs() < 1e-13 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_continuation_outside_nodes() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        assert!((cubic_or_linear(&xs, &ys, 5.0).0 - 11.0).abs() < 1e-12);
        assert!((cubic_or_linear(&xs, &ys, -1.0).0 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_cubic_rejects_non_monotone_data() {
        assert!(MonotoneCubic::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]).is_none());
        assert!(MonotoneCubic::new(vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]).is_none());
    }

    #[test]
    fn exact_slopes_reproduce_linear_map() {
        let xs: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.6 * x + 0.1).collect();
        let m = MonotoneCubic::with_slopes(xs, ys, vec![0.6; 11]).unwrap();
        assert!((m.eval(0.37).unwrap() - 0.322).abs() < 1e-15);
        assert!((m.inverse(0.322).unwrap() - 0.37).abs() < 1e-14);
        assert!(m.inverse(0.8).is_none());
    }

    #[test]
    fn limiter_keeps_segments_increasing() {
        let xs = vec![0.0, 1.0, 2.0, 3.0];
        let ys = vec![0.0, 0.01, 0.02, 3.0];
        let m = MonotoneCubic::with_slopes(xs, ys, vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=300 {
            let v = m.eval(i as f64 * 0.01).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn inverse_round_trips(
            increments in prop::collection::vec(0.01f64..2.0, 4..30),
            frac in 0.0f64..1.0,
        ) {
            let xs: Vec<f64> = (0..increments.len()).map(|i| i as f64 * 0.5).collect();
            let ys: Vec<f64> = increments
                .iter()
                .scan(0.0, |acc, d| { *acc += d; Some(*acc) })
                .collect();
            let m = MonotoneCubic::new(xs, ys).unwrap();
            let (lo, hi) = m.range();
            let y = lo + frac * (hi - lo);
            let x = m.inverse(y).unwrap();
            let back = m.eval(x).unwrap();
            prop_assert!((back - y).abs() <= 1e-12 * (hi - lo).max(1.0));
        }

        #[test]
        fn pchip_is_monotone(
            increments in prop::collection::vec(0.001f64..3.0, 3..20),
        ) {
            let xs: Vec<f64> = (0..increments.len()).map(|i| (i as f64).powf(1.3)).collect();
            let ys: Vec<f64> = increments
                .iter()
                .scan(0.0, |acc, d| { *acc += d; Some(*acc) })
                .collect();
            let x_end = xs[xs.len() - 1];
            let m = MonotoneCubic::new(xs, ys).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=500 {
                let v = m.eval(x_end * i as f64 / 500.0).unwrap();
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
