//! Dense two-phase simplex.
//!
//! Small, deterministic LP solver used by Shokri's mechanism and the planar
//! earth mover's distance. Pricing is Dantzig's largest reduced cost; after a
//! run of degenerate pivots the solver switches to Bland's smallest-index
//! rule until the objective moves again, which rules out cycling.

use crate::distributions::Distribution;
use crate::error::{Error, Result};

/// Pivot tolerance used inside the tableau.
const PIVOT_TOL: f64 = 1e-9;
/// Tolerance for reporting constraint satisfaction.
pub const SOLUTION_TOL: f64 = 1e-7;
/// Pivot budget when none is given.
pub const DEFAULT_MAX_PIVOTS: usize = 1_000_000;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;
/// Largest transportation instance (number of plan entries) accepted.
pub const MAX_TRANSPORT_VARS: usize = 200 * 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `optimize objective·v` subject to linear constraints and `v ≥ lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
    pub lower_bounds: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, sense: Sense) -> Self {
        let n = objective.len();
        Self { num_vars: n, objective, sense, constraints: Vec::new(), lower_bounds: vec![0.0; n] }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars || self.lower_bounds.len() != self.num_vars {
            return Err(Error::Lp("objective or bounds length differs from num_vars".into()));
        }
        if self.objective.iter().chain(&self.lower_bounds).any(|v| !v.is_finite()) {
            return Err(Error::Lp("non-finite objective or bound".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.num_vars {
                return Err(Error::Lp(format!("constraint {i} has {} coefficients", c.coeffs.len())));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::Lp(format!("constraint {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, lb) in values.iter().zip(&self.lower_bounds) {
            worst = worst.max(lb - v);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(values).map(|(a, v)| a * v).sum();
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub pivots: usize,
}

pub fn solve(p: &LinearProgram) -> Result<LpSolution> {
    solve_with_limit(p, DEFAULT_MAX_PIVOTS)
}

pub fn solve_with_limit(p: &LinearProgram, max_pivots: usize) -> Result<LpSolution> {
    p.validate()?;
    let mut tableau = Tableau::build(p);
    let mut budget = max_pivots;

    // phase 1: maximize −Σ artificials
    if tableau.num_artificial > 0 {
        let mut c = vec![0.0; tableau.width()];
        for j in tableau.artificial_range() {
            c[j] = -1.0;
        }
        tableau.set_objective(&c);
        match tableau.optimize(tableau.width(), &mut budget) {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase 1 objective is bounded above by 0"),
            Outcome::IterationLimit => return Ok(tableau.finish(p, LpStatus::IterationLimit)),
        }
        let infeasibility = -tableau.objective_value();
        let scale = 1.0 + tableau.rhs_scale;
        if infeasibility > PIVOT_TOL * scale {
            return Ok(tableau.finish(p, LpStatus::Infeasible));
        }
        tableau.drive_out_artificials();
    }

    // phase 2
    let sign = match p.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let mut c = vec![0.0; tableau.width()];
    for (j, v) in p.objective.iter().enumerate() {
        c[j] = sign * v;
    }
    tableau.set_objective(&c);
    let limit = tableau.num_structural + tableau.num_slack;
    let status = match tableau.optimize(limit, &mut budget) {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };
    Ok(tableau.finish(p, status))
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    /// rows × (width + 1), last column is the right-hand side
    cells: Vec<f64>,
    rows: usize,
    num_structural: usize,
    num_slack: usize,
    num_artificial: usize,
    basis: Vec<usize>,
    /// reduced costs with `-objective` in the last slot
    reduced: Vec<f64>,
    rhs_scale: f64,
    pivots: usize,
}

impl Tableau {
    fn build(p: &LinearProgram) -> Self {
        let n = p.num_vars;
        // normalize each row so rhs ≥ 0 after shifting by the lower bounds
        let rows: Vec<(Vec<f64>, Relation, f64)> = p
            .constraints
            .iter()
            .map(|c| {
                let shift: f64 = c.coeffs.iter().zip(&p.lower_bounds).map(|(a, l)| a * l).sum();
                let rhs = c.rhs - shift;
                if rhs < 0.0 {
                    let flipped = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coeffs.iter().map(|a| -a).collect(), flipped, -rhs)
                } else {
                    (c.coeffs.clone(), c.relation, rhs)
                }
            })
            .collect();
        let num_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let num_artificial = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let m = rows.len();
        let width = n + num_slack + num_artificial;
        let stride = width + 1;
        let mut cells = vec![0.0; m * stride];
        let mut basis = Vec::with_capacity(m);
        let (mut next_slack, mut next_art) = (n, n + num_slack);
        let mut rhs_scale: f64 = 0.0;
        for (i, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
            let row = &mut cells[i * stride..(i + 1) * stride];
            row[..n].copy_from_slice(&coeffs);
            row[width] = rhs;
            rhs_scale = rhs_scale.max(rhs);
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis.push(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
            }
        }
        Self {
            cells,
            rows: m,
            num_structural: n,
            num_slack,
            num_artificial,
            basis,
            reduced: vec![0.0; stride],
            rhs_scale,
            pivots: 0,
        }
    }

    fn width(&self) -> usize {
        self.num_structural + self.num_slack + self.num_artificial
    }

    fn stride(&self) -> usize {
        self.width() + 1
    }

    fn artificial_range(&self) -> std::ops::Range<usize> {
        let start = self.num_structural + self.num_slack;
        start..start + self.num_artificial
    }

    fn row(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.cells[i * s..(i + 1) * s]
    }

    fn objective_value(&self) -> f64 {
        -self.reduced[self.width()]
    }

    /// Reduced costs `c_j − c_B·B⁻¹A_j` for a maximization objective `c`.
    fn set_objective(&mut self, c: &[f64]) {
        let width = self.width();
        let mut reduced = vec![0.0; width + 1];
        reduced[..width].copy_from_slice(c);
        for i in 0..self.rows {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = self.row(i);
                for (r, a) in reduced.iter_mut().zip(row) {
                    *r -= cb * a;
                }
            }
        }
        self.reduced = reduced;
    }

    fn optimize(&mut self, limit: usize, budget: &mut usize) -> Outcome {
        let width = self.width();
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run >= DEGENERATE_RUN;
            let entering = if bland {
                (0..limit).find(|&j| self.reduced[j] > PIVOT_TOL)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..limit {
                    let d = self.reduced[j];
                    if d > PIVOT_TOL && best.is_none_or(|(_, b)| d > b) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(col) = entering else { return Outcome::Optimal };

            // ratio test, ties to the smallest basic index
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let row = self.row(i);
                let a = row[col];
                if a > PIVOT_TOL {
                    let ratio = row[width].max(0.0) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, ratio)) = leave else { return Outcome::Unbounded };
            if *budget == 0 {
                return Outcome::IterationLimit;
            }
            *budget -= 1;
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let stride = self.stride();
        let piv = self.cells[r * stride + c];
        {
            let row = &mut self.cells[r * stride..(r + 1) * stride];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[c] = 1.0;
        }
        let nz: Vec<usize> = (0..stride).filter(|&j| self.cells[r * stride + j] != 0.0).collect();
        let (before, rest) = self.cells.split_at_mut(r * stride);
        let (prow, after) = rest.split_at_mut(stride);
        let update = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for &j in &nz {
                    row[j] -= f * prow[j];
                }
                row[c] = 0.0;
            }
        };
        before.chunks_exact_mut(stride).for_each(update);
        after.chunks_exact_mut(stride).for_each(update);
        update(&mut self.reduced);
        // keep basic values non-negative against rounding
        for i in 0..self.rows {
            let b = &mut self.cells[i * stride + stride - 1];
            if *b < 0.0 && *b > -PIVOT_TOL {
                *b = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Pivot basic artificials out after phase 1; rows where that is
    /// impossible are redundant and dropped.
    fn drive_out_artificials(&mut self) {
        let art = self.artificial_range();
        let limit = art.start;
        let mut i = 0;
        while i < self.rows {
            if art.contains(&self.basis[i]) {
                let row = self.row(i);
                let col = (0..limit)
                    .filter(|&j| row[j].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.remove_row(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    fn remove_row(&mut self, i: usize) {
        let s = self.stride();
        self.cells.drain(i * s..(i + 1) * s);
        self.basis.remove(i);
        self.rows -= 1;
    }

    fn finish(&self, p: &LinearProgram, status: LpStatus) -> LpSolution {
        let width = self.width();
        let mut values = p.lower_bounds.clone();
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.num_structural {
                values[b] += self.row(i)[width].max(0.0);
            }
        }
        let objective_value = p.objective_at(&values);
        LpSolution { status, values, objective_value, pivots: self.pivots }
    }
}

/// Result of an optimal-transport solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `supply.len() × demand.len()`, row-major
    pub plan: Vec<f64>,
    pub total_cost: f64,
}

/// Optimal transport between `supply` and `demand` under `cost`
/// (`supply.len() × demand.len()`, row-major), solved through [`solve`].
pub fn transportation(supply: &Distribution, demand: &Distribution, cost: &[f64]) -> Result<TransportPlan> {
    let (m, n) = (supply.len(), demand.len());
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch(format!(
            "cost has {} entries, expected {m}×{n}",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidParameter("transport costs must be finite and non-negative".into()));
    }
    // rows and columns without mass carry nothing
    let rows: Vec<usize> = (0..m).filter(|&i| supply.probs()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| demand.probs()[j] > 0.0).collect();
    let (mr, nc) = (rows.len(), cols.len());
    if mr * nc > MAX_TRANSPORT_VARS {
        return Err(Error::TooLarge(format!(
            "transport problem with {mr}×{nc} plan entries exceeds the dense cap of {MAX_TRANSPORT_VARS}"
        )));
    }
    let s_total: f64 = rows.iter().map(|&i| supply.probs()[i]).sum();
    let d_total: f64 = cols.iter().map(|&j| demand.probs()[j]).sum();
    let rescale = s_total / d_total;

    let objective: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost[i * n + j]))
        .collect();
    let mut lp = LinearProgram::new(objective, Sense::Minimize);
    for (a, &i) in rows.iter().enumerate() {
        let mut coeffs = vec![0.0; mr * nc];
        coeffs[a * nc..(a + 1) * nc].iter_mut().for_each(|v| *v = 1.0);
        lp.constrain(coeffs, Relation::Eq, supply.probs()[i]);
    }
    for (b, &j) in cols.iter().enumerate() {
        let mut coeffs = vec![0.0; mr * nc];
        for a in 0..mr {
            coeffs[a * nc + b] = 1.0;
        }
        lp.constrain(coeffs, Relation::Eq, demand.probs()[j] * rescale);
    }
    let sol = solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("transportation solve ended with {:?}", sol.status)));
    }
    let mut plan = vec![0.0; m * n];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan[i * n + j] = sol.values[a * nc + b];
        }
    }
    let total_cost = plan.iter().zip(cost).map(|(p, c)| p * c).sum();
    Ok(TransportPlan { plan, total_cost })
}
