//! Finite differences on masked uniform grids and on (possibly non-uniform)
//! label sets.

/// Finite-difference weights at `z` for derivatives `0..=order` on `nodes`
/// (Fornberg's recursion). `w[d][j]` multiplies `f(nodes[j])` for the `d`-th
/// derivative.
pub fn fornberg_weights(z: f64, nodes: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// First derivative across a label set: five-point centered stencils in the
/// interior, three-point stencils (second order) at the two labels next to
/// each edge.
#[derive(Clone, Debug)]
pub struct LabelDerivative {
    stencils: Vec<(usize, Vec<f64>)>,
}

impl LabelDerivative {
    pub fn new(labels: &[f64]) -> Self {
        let n = labels.len();
        assert!(n >= 3, "label derivative needs at least three labels");
        let stencils = (0..n)
            .map(|i| {
                let start = if n >= 5 && i >= 2 && i + 2 < n {
                    i - 2
                } else if i == 0 {
                    0
                } else if i == n - 1 {
                    n - 3
                } else {
                    i - 1
                };
                let width = if n >= 5 && i >= 2 && i + 2 < n { 5 } else { 3 };
                let w = fornberg_weights(labels[i], &labels[start..start + width], 1);
                (start, w[1].clone())
            })
            .collect();
        Self { stencils }
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.stencils.len());
        self.stencils
            .iter()
            .map(|(start, w)| {
                w.iter()
                    .zip(&values[*start..*start + w.len()])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn apply_into(&self, values: &[f64], out: &mut [f64]) {
        for (o, (start, w)) in out.iter_mut().zip(&self.stencils) {
            *o = w
                .iter()
                .zip(&values[*start..*start + w.len()])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
}

/// First and second derivatives on a uniform grid restricted to `valid`
/// points: centered where both neighbours are valid, one-sided otherwise.
/// Points without enough valid neighbours get NaN.
pub fn masked_derivatives(values: &[f64], valid: &[bool], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let ok = |i: isize| i >= 0 && (i as usize) < n && valid[i as usize];
    let f = |i: isize| values[i as usize];
    let mut d1 = vec![f64::NAN; n];
    let mut d2 = vec![f64::NAN; n];
    for i in 0..n as isize {
        if !ok(i) {
            continue;
        }
        let iu = i as usize;
        if ok(i - 1) && ok(i + 1) {
            d1[iu] = (f(i + 1) - f(i - 1)) / (2.0 * h);
            d2[iu] = (f(i + 1) - 2.0 * f(i) + f(i - 1)) / (h * h);
        } else {
            let s: isize = if ok(i + 1) && ok(i + 2) {
                1
            } else if ok(i - 1) && ok(i - 2) {
                -1
            } else {
                continue;
            };
            let (f0, f1, f2) = (f(i), f(i + s), f(i + 2 * s));
            d1[iu] = s as f64 * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h);
            d2[iu] = if ok(i + 3 * s) {
                (2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f(i + 3 * s)) / (h * h)
            } else {
                (f0 - 2.0 * f1 + f2) / (h * h)
            };
        }
    }
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_centered_five_point() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let expect1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let expect2 = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
        for j in 0..5 {
            assert!((w[1][j] - expect1[j]).abs() < 1e-14);
            assert!((w[2][j] - expect2[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn label_derivative_exact_for_quadratics_everywhere() {
        let labels: Vec<f64> = (0..12)
            .map(|i| -1.0 + 0.17 * i as f64 + 0.01 * (i * i) as f64)
            .collect();
        let values: Vec<f64> = labels.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let d = LabelDerivative::new(&labels).apply(&values);
        for (x, dv) in labels.iter().zip(&d) {
            assert!((dv - (6.0 * x - 1.0)).abs() < 1e-11, "{x}: {dv}");
        }
    }

    #[test]
    fn label_derivative_fourth_order_interior() {
        let errs: Vec<f64> = [21usize, 41]
            .iter()
            .map(|&n| {
                let labels: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
                let values: Vec<f64> = labels.iter().map(|x| x.sin()).collect();
                let d = LabelDerivative::new(&labels).apply(&values);
                let mid = n / 2;
                (d[mid] - labels[mid].cos()).abs()
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn masked_derivatives_one_sided_at_mask_edges() {
        let h = 0.1;
        let values: Vec<f64> = (0..10).map(|i| (i as f64 * h).powi(2)).collect();
        let mut valid = vec![true; 10];
        valid[0] = false;
        valid[5] = false;
        let (d1, d2) = masked_derivatives(&values, &valid, h);
        assert!(d1[0].is_nan());
        assert!(d1[5].is_nan());
        for i in [1usize, 2, 4, 6, 9] {
            let x = i as f64 * h;
            assert!((d1[i] - 2.0 * x).abs() < 1e-12, "d1 at {i}");
            assert!((d2[i] - 2.0).abs() < 1e-9, "d2 at {i}");
        }
    }

    #[test]
    fn isolated_points_have_no_derivative() {
        let values = vec![1.0; 5];
        let valid = vec![false, true, false, true, true];
        let (d1, _) = masked_derivatives(&values, &valid, 1.0);
        assert!(d1[1].is_nan());
        assert!(d1[3].is_nan());
    }
}
