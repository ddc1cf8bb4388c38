//! Golden-section search for unimodal functions on a bracket.

/// `(3 - sqrt(5)) / 2`, the fraction of the bracket cut off each step.
const INV_PHI_SQ: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenSection {
    /// Target half-width of the final bracket.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    /// Half-width of the final bracket.
    pub bracket_half_width: f64,
}

impl Default for GoldenSection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

impl GoldenSection {
    pub fn new(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn minimize<F>(&self, f: F, lo: f64, hi: f64) -> Minimum
    where
        F: Fn(f64) -> f64,
    {
        let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut x1 = a + INV_PHI_SQ * (b - a);
        let mut x2 = b - INV_PHI_SQ * (b - a);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        let mut iterations = 0;

        while 0.5 * (b - a) > self.tol && iterations < self.max_iter {
            iterations += 1;
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = a + INV_PHI_SQ * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = b - INV_PHI_SQ * (b - a);
                f2 = f(x2);
            }
        }

        let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        Minimum {
            x,
            fx,
            iterations,
            bracket_half_width: 0.5 * (b - a),
        }
    }
}
