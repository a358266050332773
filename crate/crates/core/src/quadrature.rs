//! Fixed-order Gauss–Legendre rules on boxes.

/// Four-point Gauss–Legendre nodes on [-1, 1].
pub const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];

/// Matching weights, summing to 2.
pub const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_8,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_8,
];

/// Integral of `f` over the axis-aligned box `[lo, lo + width]^d` using the
/// tensor Gauss–Legendre rule of order 4.
pub fn box_integral<F: FnMut(&[f64]) -> f64>(lo: &[f64], width: f64, mut f: F) -> f64 {
    let d = lo.len();
    let half = 0.5 * width;
    let mut x = [0.0f64; 3];
    let total = 4usize.pow(d as u32);
    let mut acc = 0.0;
    for idx in 0..total {
        let mut w = 1.0;
        let mut r = idx;
        for a in 0..d {
            let q = r % 4;
            r /= 4;
            x[a] = lo[a] + half * (1.0 + GL4_NODES[q]);
            w *= GL4_WEIGHTS[q] * half;
        }
        acc += w * f(&x[..d]);
    }
    acc
}

/// Composite one-dimensional rule: `panels` equal panels on `[a, b]`.
pub fn composite_1d<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for q in 0..4 {
            acc += GL4_WEIGHTS[q] * 0.5 * h * f(lo + 0.5 * h * (1.0 + GL4_NODES[q]));
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let s: f64 = GL4_WEIGHTS.iter().sum();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_degree_seven() {
        let v = box_integral(&[0.0], 1.0, |x| x[0].powi(7));
        assert!((v - 0.125).abs() < 1e-14);
        let v = box_integral(&[0.0, 1.0], 0.5, |x| x[0] * x[1] * x[1]);
        // ∫_0^.5 x dx ∫_1^1.5 y^2 dy
        let oracle = 0.125 * ((1.5f64.powi(3) - 1.0) / 3.0);
        assert!((v - oracle).abs() < 1e-14);
    }

    #[test]
    fn composite_matches_closed_form() {
        let v = composite_1d(0.0, std::f64::consts::PI, 8, f64::sin);
        assert!((v - 2.0).abs() < 1e-10);
    }
}
