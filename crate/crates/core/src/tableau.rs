//! Globally stiffly accurate IMEX Runge–Kutta tableaus of ARS type.

use crate::error::{Error, Result};

/// Double Butcher tableau. `a_exp` is strictly lower triangular, `a_imp` lower
/// triangular with a zero first row.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub name: &'static str,
    pub order: usize,
    pub stages: usize,
    pub a_exp: Vec<Vec<f64>>,
    pub a_imp: Vec<Vec<f64>>,
    pub b_exp: Vec<f64>,
    pub b_imp: Vec<f64>,
    pub c_exp: Vec<f64>,
    pub c_imp: Vec<f64>,
}

impl ButcherTableau {
    /// Builds a tableau from its two coefficient matrices; weights come from the
    /// last rows (globally stiffly accurate) and abscissae from the row sums.
    pub fn new(name: &'static str, order: usize, a_exp: Vec<Vec<f64>>, a_imp: Vec<Vec<f64>>) -> Result<Self> {
        let s = a_exp.len();
        if s == 0 || a_imp.len() != s || a_exp.iter().chain(&a_imp).any(|r| r.len() != s) {
            return Err(Error::InvalidParameter(format!("{name}: tableau rows must be square")));
        }
        let c_exp = a_exp.iter().map(|r| r.iter().sum()).collect();
        let c_imp = a_imp.iter().map(|r| r.iter().sum()).collect();
        let t = ButcherTableau {
            name,
            order,
            stages: s,
            b_exp: a_exp[s - 1].clone(),
            b_imp: a_imp[s - 1].clone(),
            a_exp,
            a_imp,
            c_exp,
            c_imp,
        };
        t.check_structure()?;
        let defect = check_order_conditions(&t);
        if defect > 1e-13 {
            return Err(Error::InvalidParameter(format!("{name}: order conditions violated by {defect:e}")));
        }
        Ok(t)
    }

    fn check_structure(&self) -> Result<()> {
        let s = self.stages;
        let bad = |m: &str| Err(Error::InvalidParameter(format!("{}: {m}", self.name)));
        for i in 0..s {
            for j in i..s {
                if self.a_exp[i][j] != 0.0 {
                    return bad("explicit part must be strictly lower triangular");
                }
                if j > i && self.a_imp[i][j] != 0.0 {
                    return bad("implicit part must be lower triangular");
                }
            }
        }
        if self.a_imp[0].iter().any(|&a| a != 0.0) {
            return bad("first implicit row must vanish (ARS)");
        }
        if (1..s).any(|i| self.a_imp[i][i] == 0.0) {
            return bad("trailing implicit block must be invertible (ARS)");
        }
        Ok(())
    }

    /// Diagonal entry shared by all implicit stages (`a_22`).
    pub fn implicit_diagonal(&self) -> f64 {
        self.a_imp[1][1]
    }

    /// Whether all nonzero implicit diagonals coincide, so one factorization
    /// serves every stage.
    pub fn has_constant_diagonal(&self) -> bool {
        let a = self.implicit_diagonal();
        (1..self.stages).all(|i| self.a_imp[i][i] == a)
    }

    /// Backward/forward Euler pair written as a two-stage ARS tableau.
    pub fn imex1() -> Self {
        Self::new("IMEX1", 1, vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![vec![0.0, 0.0], vec![0.0, 1.0]])
            .expect("IMEX1 tableau is valid")
    }

    pub fn ars222() -> Self {
        let g = 1.0 - 1.0 / 2f64.sqrt();
        let d = 1.0 - 1.0 / (2.0 * g);
        Self::new(
            "ARS(2,2,2)",
            2,
            vec![vec![0.0, 0.0, 0.0], vec![g, 0.0, 0.0], vec![d, 1.0 - d, 0.0]],
            vec![vec![0.0, 0.0, 0.0], vec![0.0, g, 0.0], vec![0.0, 1.0 - g, g]],
        )
        .expect("ARS(2,2,2) tableau is valid")
    }

    pub fn ars443() -> Self {
        Self::new(
            "ARS(4,4,3)",
            3,
            vec![
                vec![0.0, 0.0, 0.0, 0.0, 0.0],
                vec![1.0 / 2.0, 0.0, 0.0, 0.0, 0.0],
                vec![11.0 / 18.0, 1.0 / 18.0, 0.0, 0.0, 0.0],
                vec![5.0 / 6.0, -5.0 / 6.0, 1.0 / 2.0, 0.0, 0.0],
                vec![1.0 / 4.0, 7.0 / 4.0, 3.0 / 4.0, -7.0 / 4.0, 0.0],
            ],
            vec![
                vec![0.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0 / 2.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0 / 6.0, 1.0 / 2.0, 0.0, 0.0],
                vec![0.0, -1.0 / 2.0, 1.0 / 2.0, 1.0 / 2.0, 0.0],
                vec![0.0, 3.0 / 2.0, -3.0 / 2.0, 1.0 / 2.0, 1.0 / 2.0],
            ],
        )
        .expect("ARS(4,4,3) tableau is valid")
    }

    /// The tableau of the order-`p` scheme.
    pub fn for_order(p: usize) -> Result<Self> {
        match p {
            1 => Ok(Self::imex1()),
            2 => Ok(Self::ars222()),
            3 => Ok(Self::ars443()),
            _ => Err(Error::InvalidParameter(format!("no IMEX tableau of order {p}"))),
        }
    }
}

/// Largest violation of the row-sum, globally-stiffly-accurate and IMEX order
/// conditions up to the nominal order (coupling conditions included).
pub fn check_order_conditions(t: &ButcherTableau) -> f64 {
    let s = t.stages;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let matvec = |m: &[Vec<f64>], x: &[f64]| m.iter().map(|r| dot(r, x)).collect::<Vec<f64>>();
    let mut defect = 0.0f64;
    let mut track = |v: f64| defect = defect.max(v.abs());

    for i in 0..s {
        track(t.c_exp[i] - t.a_exp[i].iter().sum::<f64>());
        track(t.c_imp[i] - t.a_imp[i].iter().sum::<f64>());
    }
    track(t.c_exp[s - 1] - 1.0);
    track(t.c_imp[s - 1] - 1.0);
    for j in 0..s {
        track(t.b_exp[j] - t.a_exp[s - 1][j]);
        track(t.b_imp[j] - t.a_imp[s - 1][j]);
    }

    let weights = [&t.b_exp, &t.b_imp];
    let abscissae = [&t.c_exp, &t.c_imp];
    let matrices = [&t.a_exp, &t.a_imp];
    for w in weights {
        track(w.iter().sum::<f64>() - 1.0);
        if t.order >= 2 {
            for c in abscissae {
                track(dot(w, c) - 0.5);
            }
        }
        if t.order >= 3 {
            for c1 in abscissae {
                for c2 in abscissae {
                    let cc: Vec<f64> = c1.iter().zip(c2.iter()).map(|(a, b)| a * b).collect();
                    track(dot(w, &cc) - 1.0 / 3.0);
                }
            }
            for m in matrices {
                for c in abscissae {
                    track(dot(w, &matvec(m, c)) - 1.0 / 6.0);
                }
            }
        }
    }
    defect
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tableaus_satisfy_conditions() {
        assert!(check_order_conditions(&ButcherTableau::imex1()) < 1e-15);
        assert!(check_order_conditions(&ButcherTableau::ars222()) < 1e-14);
        assert!(check_order_conditions(&ButcherTableau::ars443()) < 1e-13);
    }

    #[test]
    fn ars443_abscissae_and_diagonal() {
        let t = ButcherTableau::ars443();
        let expect = [0.0, 0.5, 2.0 / 3.0, 0.5, 1.0];
        for i in 0..5 {
            assert!((t.c_exp[i] - expect[i]).abs() < 1e-15);
            assert!((t.c_imp[i] - expect[i]).abs() < 1e-15);
        }
        assert!(t.has_constant_diagonal());
        assert_eq!(t.implicit_diagonal(), 0.5);
    }

    #[test]
    fn ars222_constants() {
        let t = ButcherTableau::ars222();
        let g = 1.0 - 1.0 / 2f64.sqrt();
        assert!((t.implicit_diagonal() - g).abs() < 1e-16);
        assert!((t.a_exp[2][0] - (1.0 - 1.0 / (2.0 * g))).abs() < 1e-15);
        assert!(t.has_constant_diagonal());
    }

    #[test]
    fn perturbed_tableau_is_rejected() {
        let mut a = ButcherTableau::ars443().a_exp;
        a[2][1] += 1e-6;
        let r = ButcherTableau::new("bad", 3, a, ButcherTableau::ars443().a_imp);
        assert!(r.is_err());
        // a second-order pair does not pass third-order checks
        let t = ButcherTableau::ars222();
        let mut t3 = t.clone();
        t3.order = 3;
        assert!(check_order_conditions(&t3) > 1e-3);
    }
}
