#![allow(dead_code)]

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

/// Composite Gauss-Legendre rule: `panels` equal sub-intervals, each
/// integrated with a fixed-degree rule.
pub struct Composite {
    rule: GaussLegendre,
    panels: usize,
}

impl Composite {
    pub fn new(degree: usize, panels: usize) -> Self {
        Self {
            rule: GaussLegendre::new(NonZeroUsize::new(degree).unwrap()),
            panels,
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = (b - a) / self.panels as f64;
        (0..self.panels)
            .map(|i| {
                let lo = a + h * i as f64;
                let hi = if i + 1 == self.panels { b } else { lo + h };
                self.rule.integrate(lo, hi, &mut f)
            })
            .sum()
    }

    pub fn integrate_2d<F: Fn(f64, f64) -> f64>(&self, x: (f64, f64), y: (f64, f64), f: F) -> f64 {
        self.integrate(x.0, x.1, |a| self.integrate(y.0, y.1, |b| f(a, b)))
    }
}
