//! Convex piecewise-linear functions on the real line, with exact
//! Legendre conjugates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convex function interpolating `(knots[i], values[i])`. Beyond the
/// outer knots it continues linearly with the given tail slope, or is `+∞`
/// when the tail is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexPwl {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub left: Option<f64>,
    pub right: Option<f64>,
}

impl ConvexPwl {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left: Option<f64>, right: Option<f64>) -> Result<Self> {
        let f = Self { knots, values, left, right };
        f.validate()?;
        Ok(f)
    }

    /// `|t|` on the whole line.
    pub fn abs() -> Self {
        Self { knots: vec![0.0], values: vec![0.0], left: Some(-1.0), right: Some(1.0) }
    }

    /// Zero on `[lo, hi]`, `+∞` elsewhere.
    pub fn indicator(lo: f64, hi: f64) -> Self {
        Self { knots: vec![lo, hi], values: vec![0.0, 0.0], left: None, right: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("convex piecewise-linear: {m}")));
        if self.knots.is_empty() || self.knots.len() != self.values.len() {
            return bad("needs ≥ 1 knot and one value per knot");
        }
        if self.knots.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("knots must be strictly increasing");
        }
        if self.values.iter().chain(&self.knots).any(|v| !v.is_finite()) {
            return bad("knots and values must be finite");
        }
        let s = self.slopes();
        let mut all: Vec<f64> = self.left.into_iter().collect();
        all.extend(&s);
        all.extend(self.right);
        // Slopes recomputed from accumulated values carry rounding of order
        // ε·|v|/Δt, hence the loose tolerance.
        let scale = 1.0 + all.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if all.windows(2).any(|w| w[1] < w[0] - 1e-9 * scale) {
            return bad("slopes must be nondecreasing");
        }
        Ok(())
    }

    /// Segment slopes between consecutive knots.
    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
            .collect()
    }

    /// Effective domain `(lo, hi)`, possibly infinite.
    pub fn domain(&self) -> (f64, f64) {
        let lo = if self.left.is_some() { f64::NEG_INFINITY } else { self.knots[0] };
        let hi = if self.right.is_some() { f64::INFINITY } else { *self.knots.last().unwrap() };
        (lo, hi)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let (k0, kn) = (self.knots[0], self.knots[n - 1]);
        if t < k0 {
            return self.left.map_or(f64::INFINITY, |a| self.values[0] + a * (t - k0));
        }
        if t > kn {
            return self.right.map_or(f64::INFINITY, |b| self.values[n - 1] + b * (t - kn));
        }
        if n == 1 {
            return self.values[0];
        }
        let i = self.knots.partition_point(|&k| k <= t).clamp(1, n - 1) - 1;
        let s = (t - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
        (1.0 - s) * self.values[i] + s * self.values[i + 1]
    }

    /// Affine minorants `(slope, intercept)` whose maximum equals the
    /// function on its domain.
    pub fn affine_pieces(&self) -> Vec<(f64, f64)> {
        let n = self.knots.len();
        let mut out = Vec::with_capacity(n + 1);
        if let Some(a) = self.left {
            out.push((a, self.values[0] - a * self.knots[0]));
        }
        for (i, s) in self.slopes().into_iter().enumerate() {
            out.push((s, self.values[i] - s * self.knots[i]));
        }
        if let Some(b) = self.right {
            out.push((b, self.values[n - 1] - b * self.knots[n - 1]));
        }
        if out.is_empty() {
            out.push((0.0, self.values[0]));
        }
        out
    }

    /// Largest element of the subdifferential at `t` (the right derivative),
    /// `+∞` at the right end of a bounded domain.
    pub fn right_derivative(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t < self.knots[0] {
            return self.left.unwrap_or(f64::NEG_INFINITY);
        }
        if t >= self.knots[n - 1] {
            return self.right.unwrap_or(f64::INFINITY);
        }
        let i = self.knots.partition_point(|&k| k <= t) - 1;
        self.slopes()[i]
    }

    /// Exact Legendre conjugate `f*(s) = sup_t (s t − f(t))`.
    pub fn conjugate(&self) -> Self {
        let n = self.knots.len();
        // Each slope is attained at the knot where it starts (or ends, for
        // the right tail).
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n + 1);
        if let Some(a) = self.left {
            pairs.push((a, 0));
        }
        for (i, s) in self.slopes().into_iter().enumerate() {
            pairs.push((s, i));
        }
        if let Some(b) = self.right {
            pairs.push((b, n - 1));
        }
        let mut knots: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (s, i) in pairs {
            let v = s * self.knots[i] - self.values[i];
            match knots.last() {
                Some(&last) if s <= last => {}
                _ => {
                    knots.push(s);
                    values.push(v);
                }
            }
        }
        if knots.is_empty() {
            knots.push(0.0);
            values.push(-self.values[0]);
        }
        let left = if self.left.is_some() { None } else { Some(self.knots[0]) };
        let right = if self.right.is_some() { None } else { Some(self.knots[n - 1]) };
        Self { knots, values, left, right }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_conjugate(f: &ConvexPwl, s: f64) -> f64 {
        // The sup of a concave piecewise-linear function sits at a knot or
        // runs off to infinity along a tail.
        let mut best = f.knots.iter().zip(&f.values).map(|(t, v)| s * t - v).fold(f64::NEG_INFINITY, f64::max);
        if let Some(a) = f.left {
            if s < a - 1e-12 {
                best = f64::INFINITY;
            }
        }
        if let Some(b) = f.right {
            if s > b + 1e-12 {
                best = f64::INFINITY;
            }
        }
        best
    }

    #[test]
    fn abs_and_indicator_are_conjugate() {
        let ind = ConvexPwl::indicator(-1.0, 1.0);
        let c = ind.conjugate();
        for s in [-3.0, -0.5, 0.0, 0.25, 2.0] {
            assert!((c.eval(s) - f64::abs(s)).abs() < 1e-15);
        }
        let back = ConvexPwl::abs().conjugate();
        assert_eq!(back.eval(0.3), 0.0);
        assert_eq!(back.eval(1.5), f64::INFINITY);
    }

    fn arb_pwl() -> impl Strategy<Value = ConvexPwl> {
        (
            -2.0..2.0f64,
            prop::collection::vec((0.05..1.0f64, 0.0..2.0f64), 0..6),
            -1.0..1.0f64,
            prop::option::of(0.0..2.0f64),
            prop::option::of(0.0..2.0f64),
        )
            .prop_map(|(t0, steps, s0, l, r)| {
                let mut knots = vec![t0];
                let mut values = vec![0.3];
                let mut slope = s0;
                let mut first = None;
                for (dt, ds) in steps {
                    slope += ds;
                    first.get_or_insert(slope);
                    let t = knots.last().unwrap() + dt;
                    values.push(values.last().unwrap() + slope * dt);
                    knots.push(t);
                }
                let lo = first.unwrap_or(s0);
                ConvexPwl {
                    knots,
                    values,
                    left: l.map(|d| lo - d),
                    right: r.map(|d| slope.max(lo) + d),
                }
            })
    }

    proptest! {
        #[test]
        fn conjugate_matches_brute_force(f in arb_pwl(), s in -5.0..5.0f64) {
            prop_assert!(f.validate().is_ok());
            let exact = f.conjugate().eval(s);
            let brute = brute_conjugate(&f, s);
            if brute.is_infinite() {
                prop_assert!(exact.is_infinite());
            } else {
                prop_assert!((exact - brute).abs() < 1e-9, "{} vs {}", exact, brute);
            }
        }

        #[test]
        fn biconjugate_is_identity(f in arb_pwl(), t in -3.0..3.0f64) {
            let g = f.conjugate().conjugate();
            let (a, b) = (f.eval(t), g.eval(t));
            if a.is_infinite() {
                prop_assert!(b.is_infinite());
            } else {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn affine_pieces_reproduce_the_function(f in arb_pwl(), t in -3.0..3.0f64) {
            let (lo, hi) = f.domain();
            prop_assume!(t >= lo && t <= hi);
            let m = f.affine_pieces().iter().map(|(a, b)| a * t + b).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((m - f.eval(t)).abs() < 1e-9);
        }
    }
}
