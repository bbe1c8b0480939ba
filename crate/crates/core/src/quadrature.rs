//! Composite Gauss–Legendre quadrature on intervals with breakpoints.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed composite rule: every gap between consecutive breakpoints is
/// split into `panels` equal panels carrying an `order`-point rule.
#[derive(Clone, Debug)]
pub struct Composite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Composite {
    pub fn new(order: usize, panels: usize) -> Self {
        let (base_x, base_w) = gauss_legendre(order);
        // Base rule mapped onto `panels` equal pieces of [0,1].
        let p = panels.max(1);
        let mut nodes = Vec::with_capacity(p * order);
        let mut weights = Vec::with_capacity(p * order);
        for j in 0..p {
            for (x, w) in base_x.iter().zip(&base_w) {
                nodes.push((j as f64 + 0.5 * (x + 1.0)) / p as f64);
                weights.push(0.5 * w / p as f64);
            }
        }
        Self { nodes, weights }
    }

    /// `∫_a^b f` with the rule applied between each pair of sorted, deduped
    /// breakpoints inside `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let mut pts: Vec<f64> = std::iter::once(a)
            .chain(breaks.iter().cloned().filter(|&t| t > a && t < b))
            .chain(std::iter::once(b))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut total = 0.0;
        for w in pts.windows(2) {
            let len = w[1] - w[0];
            for (x, wt) in self.nodes.iter().zip(&self.weights) {
                total += wt * len * f(w[0] + x * len);
            }
        }
        total
    }
}
