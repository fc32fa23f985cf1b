//! Exact rational simplex for `min c·x  s.t.  A x = b, x >= 0`.
//!
//! Dense tableau, two phases, Bland's rule throughout so cycling cannot
//! occur. The tableau keeps the artificial identity columns for the whole
//! run; after the last pivot they hold the basis inverse, from which the
//! row duals are read off.

use num_traits::{One, Signed, Zero};

use crate::rational::Rational;

#[derive(Clone, Debug)]
pub struct LinearProgram {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    cost: Vec<Rational>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub objective: Rational,
    pub x: Vec<Rational>,
    /// Optimal multipliers `y` of the equality rows: `y·A <= c` componentwise
    /// and `y·b = objective`.
    pub duals: Vec<Rational>,
    pub pivots: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    Shape(String),
}

impl std::fmt::Display for LpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpError::Infeasible => write!(f, "infeasible"),
            LpError::Unbounded => write!(f, "unbounded"),
            LpError::Shape(msg) => write!(f, "bad shape: {msg}"),
        }
    }
}

impl LinearProgram {
    pub fn new(rows: Vec<Vec<Rational>>, rhs: Vec<Rational>, cost: Vec<Rational>) -> Result<Self, LpError> {
        if rows.len() != rhs.len() {
            return Err(LpError::Shape(format!("{} rows, {} rhs", rows.len(), rhs.len())));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != cost.len()) {
            return Err(LpError::Shape(format!("row of width {}, cost of width {}", r.len(), cost.len())));
        }
        Ok(Self { rows, rhs, cost })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.solve_from(None)
    }

    /// Solves starting from `basis` (one structural column per row) when it
    /// is primal feasible; otherwise falls back to a full phase one.
    pub fn solve_from(&self, basis: Option<&[usize]>) -> Result<LpSolution, LpError> {
        let mut tab = Tableau::new(self);
        let warm = basis.is_some_and(|b| tab.install_basis(b));
        if !warm {
            tab = Tableau::new(self);
            tab.phase_one()?;
        }
        tab.phase_two(&self.cost)?;
        Ok(tab.solution(&self.cost))
    }
}

struct Tableau {
    m: usize,
    n: usize,
    /// m rows of width n + m + 1; the last column is the right-hand side.
    t: Vec<Vec<Rational>>,
    /// Reduced costs (width n + m) and the negated objective in the last slot.
    obj: Vec<Rational>,
    basis: Vec<usize>,
    row_sign: Vec<bool>,
    pivots: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.cost.len();
        let mut t = Vec::with_capacity(m);
        let mut row_sign = Vec::with_capacity(m);
        for (i, (row, b)) in lp.rows.iter().zip(&lp.rhs).enumerate() {
            let flip = b.is_negative();
            let mut r: Vec<Rational> = Vec::with_capacity(n + m + 1);
            r.extend(row.iter().map(|v| if flip { -v } else { v.clone() }));
            r.extend((0..m).map(|k| if k == i { Rational::one() } else { Rational::zero() }));
            r.push(if flip { -b } else { b.clone() });
            t.push(r);
            row_sign.push(flip);
        }
        Self {
            m,
            n,
            t,
            obj: vec![Rational::zero(); n + m + 1],
            basis: (n..n + m).collect(),
            row_sign,
            pivots: 0,
        }
    }

    fn width(&self) -> usize {
        self.n + self.m + 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let p = self.t[row][col].clone();
        if !p.is_one() {
            for v in self.t[row].iter_mut() {
                if !v.is_zero() {
                    *v /= &p;
                }
            }
        }
        let support: Vec<usize> = (0..w).filter(|&j| !self.t[row][j].is_zero()).collect();
        let pivot_row = std::mem::take(&mut self.t[row]);
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row || r[col].is_zero() {
                continue;
            }
            let factor = r[col].clone();
            for &j in &support {
                r[j] -= &factor * &pivot_row[j];
            }
        }
        if !self.obj[col].is_zero() {
            let factor = self.obj[col].clone();
            for &j in &support {
                self.obj[j] -= &factor * &pivot_row[j];
            }
        }
        self.t[row] = pivot_row;
        self.basis[row] = col;
        self.pivots += 1;
    }

    fn install_basis(&mut self, basis: &[usize]) -> bool {
        if basis.len() != self.m || basis.iter().any(|&c| c >= self.n) {
            return false;
        }
        for (row, &col) in basis.iter().enumerate() {
            if self.t[row][col].is_zero() {
                return false;
            }
            self.pivot(row, col);
        }
        let rhs = self.width() - 1;
        self.t.iter().all(|r| !r[rhs].is_negative())
    }

    fn set_costs(&mut self, cost: impl Fn(usize) -> Rational) {
        let w = self.width();
        self.obj = (0..w).map(|j| if j < w - 1 { cost(j) } else { Rational::zero() }).collect();
        for i in 0..self.m {
            let cb = cost(self.basis[i]);
            if cb.is_zero() {
                continue;
            }
            for j in 0..w {
                if !self.t[i][j].is_zero() {
                    let delta = &cb * &self.t[i][j];
                    self.obj[j] -= delta;
                }
            }
        }
    }

    /// Bland's rule iterations over columns `< allowed`.
    fn iterate(&mut self, allowed: usize) -> Result<(), LpError> {
        let rhs = self.width() - 1;
        loop {
            let Some(col) = (0..allowed).find(|&j| self.obj[j].is_negative()) else {
                return Ok(());
            };
            let mut best: Option<(usize, Rational)> = None;
            for i in 0..self.m {
                let a = &self.t[i][col];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.t[i][rhs] / a;
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return Err(LpError::Unbounded),
            }
        }
    }

    fn phase_one(&mut self) -> Result<(), LpError> {
        let n = self.n;
        self.set_costs(|j| if j >= n { Rational::one() } else { Rational::zero() });
        self.iterate(self.n + self.m)?;
        let rhs = self.width() - 1;
        if !self.obj[rhs].is_zero() {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out where a structural pivot exists;
        // rows without one are redundant and stay inert.
        for row in 0..self.m {
            if self.basis[row] >= self.n {
                if let Some(col) = (0..self.n).find(|&j| !self.t[row][j].is_zero()) {
                    self.pivot(row, col);
                }
            }
        }
        Ok(())
    }

    fn phase_two(&mut self, cost: &[Rational]) -> Result<(), LpError> {
        let n = self.n;
        self.set_costs(|j| if j < n { cost[j].clone() } else { Rational::zero() });
        self.iterate(self.n)
    }

    fn solution(&self, cost: &[Rational]) -> LpSolution {
        let rhs = self.width() - 1;
        let mut x = vec![Rational::zero(); self.n];
        for (row, &col) in self.basis.iter().enumerate() {
            if col < self.n {
                x[col] = self.t[row][rhs].clone();
            }
        }
        let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        let duals = (0..self.m)
            .map(|k| {
                let y: Rational = self
                    .basis
                    .iter()
                    .enumerate()
                    .filter(|&(_, &col)| col < self.n)
                    .map(|(row, &col)| &cost[col] * &self.t[row][self.n + k])
                    .sum();
                if self.row_sign[k] {
                    -y
                } else {
                    y
                }
            })
            .collect();
        LpSolution {
            objective,
            x,
            duals,
            pivots: self.pivots,
        }
    }
}
