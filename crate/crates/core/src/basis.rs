//! Legendre polynomials and Gauss–Legendre rules on the reference cell `[-1, 1]`.

/// Value of the Legendre polynomial `P_n` at `x` (three-term recurrence).
pub fn legendre(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Derivative `P_n'(x)`.
pub fn legendre_derivative(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // P_n' = sum over k = n-1, n-3, ... of (2k+1) P_k
    let mut d = 0.0;
    let mut k = n as isize - 1;
    while k >= 0 {
        d += (2 * k + 1) as f64 * legendre(k as usize, x);
        k -= 2;
    }
    d
}

/// `∫_{-1}^{1} P_n^2 dξ = 2 / (2n + 1)`.
pub fn legendre_norm_sq(n: usize) -> f64 {
    2.0 / (2 * n + 1) as f64
}

/// A quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point Gauss–Legendre rule, exact for polynomials of degree `2n - 1`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "a Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let p = legendre(n, x);
                let dp = legendre_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let dp = legendre_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_{-1}^{1} f(ξ) dξ`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Precomputed basis values `P_j(ξ_q)` on a rule, row-major by node.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub dofs: usize,
    pub rule: GaussRule,
    values: Vec<f64>,
}

impl BasisTable {
    pub fn new(dofs: usize, rule: GaussRule) -> Self {
        let values = rule
            .nodes
            .iter()
            .flat_map(|&x| (0..dofs).map(move |j| legendre(j, x)))
            .collect();
        BasisTable { dofs, rule, values }
    }

    #[inline]
    pub fn value(&self, node: usize, j: usize) -> f64 {
        self.values[node * self.dofs + j]
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.values[node * self.dofs..(node + 1) * self.dofs]
    }
}

/// `P_j(1)`.
pub fn right_trace(_j: usize) -> f64 {
    1.0
}

/// `P_j(-1) = (-1)^j`.
pub fn left_trace(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}
