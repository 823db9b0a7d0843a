//! Bounded-variable revised primal simplex on a scaled standard form.
//!
//! Each constraint row `i` becomes `a_i x - r_i = 0` with a logical variable
//! `r_i` carrying the row bounds, so the initial basis is all logicals.
//! Infeasible starts are handled by a composite phase 1 that minimizes the
//! sum of bound violations of basic variables.

#![allow(clippy::needless_range_loop)]

use super::lu::LuFactor;
use super::Sense;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
/// Dual infeasibility the dual method tolerates on one-sided variables;
/// the closing primal pass removes it.
const DUAL_SLACK: f64 = 1e-7;
const DEGENERATE_STEP: f64 = 1e-12;
const BLAND_AFTER: u32 = 10;
const REFACTOR_ETAS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarStatus {
    Basic,
    Lower,
    Upper,
    Free,
}

/// Warm-start information: which variable occupies each basis position and
/// where every nonbasic variable sits.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    pub head: Vec<usize>,
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct LpRun {
    pub outcome: LpOutcome,
    /// Scaled values of all structural and logical variables.
    pub x: Vec<f64>,
    pub basis: Basis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct IterationCap(pub usize);

/// Minimization problem in scaled standard form.
#[derive(Debug, Clone)]
pub(crate) struct StdLp {
    pub n: usize,
    pub m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub col_scale: Vec<f64>,
}

fn pow2_round(v: f64) -> f64 {
    if !v.is_finite() || v <= 0.0 {
        return 1.0;
    }
    2f64.powi(v.log2().round() as i32)
}

impl StdLp {
    pub fn from_model(model: &super::MilpModel) -> Self {
        let n = model.variables.len();
        let m = model.constraints.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in model.constraints.iter().enumerate() {
            for &(v, a) in &c.coeffs {
                cols[v.0].push((i, a));
            }
        }

        // Geometric-mean scaling with power-of-two factors.
        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        for _ in 0..4 {
            let mut rmin = vec![f64::INFINITY; m];
            let mut rmax = vec![0.0_f64; m];
            for (j, col) in cols.iter().enumerate() {
                for &(i, a) in col {
                    let v = (a * col_scale[j]).abs();
                    rmin[i] = rmin[i].min(v);
                    rmax[i] = rmax[i].max(v);
                }
            }
            for i in 0..m {
                if rmax[i] > 0.0 {
                    row_scale[i] = pow2_round(1.0 / (rmin[i] * rmax[i]).sqrt());
                }
            }
            for (j, col) in cols.iter().enumerate() {
                let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
                for &(i, a) in col {
                    let v = (a * row_scale[i]).abs();
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if hi > 0.0 {
                    col_scale[j] = pow2_round(1.0 / (lo * hi).sqrt());
                }
            }
        }

        let mut col_start = Vec::with_capacity(n + 1);
        let mut col_row = Vec::new();
        let mut col_val = Vec::new();
        col_start.push(0);
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                col_row.push(i);
                col_val.push(a * row_scale[i] * col_scale[j]);
            }
            col_start.push(col_row.len());
        }

        let mut cost = vec![0.0; n + m];
        let mut lower = vec![0.0; n + m];
        let mut upper = vec![0.0; n + m];
        for (j, v) in model.variables.iter().enumerate() {
            cost[j] = -v.objective * col_scale[j];
            lower[j] = v.lower / col_scale[j];
            upper[j] = v.upper / col_scale[j];
        }
        for (i, c) in model.constraints.iter().enumerate() {
            let r = c.rhs * row_scale[i];
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, r),
                Sense::Ge => (r, f64::INFINITY),
                Sense::Eq => (r, r),
            };
            lower[n + i] = lo;
            upper[n + i] = hi;
        }
        StdLp {
            n,
            m,
            col_start,
            col_row,
            col_val,
            cost,
            lower,
            upper,
            col_scale,
        }
    }

    fn column(&self, j: usize) -> ColumnIter<'_> {
        if j < self.n {
            let r = self.col_start[j]..self.col_start[j + 1];
            ColumnIter::Structural(self.col_row[r.clone()].iter().zip(self.col_val[r].iter()))
        } else {
            ColumnIter::Logical(Some(j - self.n))
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for k in self.col_start[j]..self.col_start[j + 1] {
                s += self.col_val[k] * y[self.col_row[k]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    /// Slack basis with every structural at its finite bound nearest zero.
    pub fn slack_basis(&self) -> Basis {
        let mut status = vec![VarStatus::Lower; self.n + self.m];
        for j in 0..self.n {
            status[j] = default_status(self.lower[j], self.upper[j]);
        }
        let head: Vec<usize> = (self.n..self.n + self.m).collect();
        for &h in &head {
            status[h] = VarStatus::Basic;
        }
        Basis { head, status }
    }
}

fn default_status(lower: f64, upper: f64) -> VarStatus {
    if lower.is_finite() {
        if upper.is_finite() && upper.abs() < lower.abs() {
            VarStatus::Upper
        } else {
            VarStatus::Lower
        }
    } else if upper.is_finite() {
        VarStatus::Upper
    } else {
        VarStatus::Free
    }
}

enum ColumnIter<'a> {
    Structural(std::iter::Zip<std::slice::Iter<'a, usize>, std::slice::Iter<'a, f64>>),
    Logical(Option<usize>),
}

impl Iterator for ColumnIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColumnIter::Structural(it) => it.next().map(|(&i, &v)| (i, v)),
            ColumnIter::Logical(i) => i.take().map(|i| (i, -1.0)),
        }
    }
}

struct Solver<'a> {
    lp: &'a StdLp,
    lower: &'a [f64],
    upper: &'a [f64],
    head: Vec<usize>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    lu: LuFactor,
}

impl<'a> Solver<'a> {
    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::Lower => self.lower[j],
            VarStatus::Upper => self.upper[j],
            VarStatus::Free => 0.0,
            VarStatus::Basic => self.x[j],
        }
    }

    /// Repairs statuses that point at infinite bounds after bounds changed.
    fn sanitize_statuses(&mut self) {
        for j in 0..self.status.len() {
            let (l, u) = (self.lower[j], self.upper[j]);
            self.status[j] = match self.status[j] {
                VarStatus::Basic => VarStatus::Basic,
                VarStatus::Lower if l.is_finite() => VarStatus::Lower,
                VarStatus::Upper if u.is_finite() => VarStatus::Upper,
                _ => default_status(l, u),
            };
        }
    }

    fn refactor(&mut self) {
        loop {
            let cols: Vec<Vec<(usize, f64)>> = self
                .head
                .iter()
                .map(|&j| self.lp.column(j).collect())
                .collect();
            match LuFactor::factorize(self.lp.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    return;
                }
                Err(sing) => {
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.head[p];
                        let (l, u) = (self.lower[out], self.upper[out]);
                        let v = self.x[out];
                        self.status[out] = if l.is_finite()
                            && (!u.is_finite() || (v - l).abs() <= (u - v).abs())
                        {
                            VarStatus::Lower
                        } else if u.is_finite() {
                            VarStatus::Upper
                        } else {
                            VarStatus::Free
                        };
                        let logical = self.lp.n + r;
                        // A logical of an uncovered row cannot already be basic.
                        self.head[p] = logical;
                        self.status[logical] = VarStatus::Basic;
                    }
                    for j in 0..self.x.len() {
                        if self.status[j] != VarStatus::Basic {
                            self.x[j] = self.nonbasic_value(j);
                        }
                    }
                }
            }
        }
    }

    fn compute_basic_values(&mut self) {
        let mut rhs = vec![0.0; self.lp.m];
        for j in 0..self.x.len() {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                for (i, a) in self.lp.column(j) {
                    rhs[i] -= a * v;
                }
            }
        }
        self.lu.ftran(&mut rhs);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[p];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - PRIMAL_TOL {
            -1.0
        } else if v > self.upper[j] + PRIMAL_TOL {
            1.0
        } else {
            0.0
        }
    }

    fn run(&mut self, cap: usize) -> Result<LpOutcome, IterationCap> {
        let lp = self.lp;
        let (n, m) = (lp.n, lp.m);
        let total = n + m;
        self.sanitize_statuses();
        self.refactor();
        self.compute_basic_values();

        let mut degenerate = 0u32;
        let mut bland = false;
        let mut fresh = true;
        let mut rejected: Vec<usize> = Vec::new();
        let mut cb = vec![0.0; m];
        let mut iterations = 0usize;

        loop {
            if self.lu.eta_count() >= REFACTOR_ETAS || self.lu.eta_nnz() > 8 * (m + 64) * 4 {
                self.refactor();
                self.compute_basic_values();
                fresh = true;
            }

            let mut phase1 = false;
            for (p, &j) in self.head.iter().enumerate() {
                let s = self.infeasibility(j);
                cb[p] = s;
                if s != 0.0 {
                    phase1 = true;
                }
            }
            if !phase1 {
                for (p, &j) in self.head.iter().enumerate() {
                    cb[p] = lp.cost[j];
                }
            }
            let mut y = cb.clone();
            self.lu.btran(&mut y);

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { lp.cost[j] };
                let d = cj - lp.dot_column(j, &y);
                let eligible = match st {
                    VarStatus::Lower => d < -DUAL_TOL,
                    VarStatus::Upper => d > DUAL_TOL,
                    VarStatus::Free => d.abs() > DUAL_TOL,
                    VarStatus::Basic => false,
                };
                if !eligible || rejected.contains(&j) {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                    entering = Some((j, d));
                }
            }

            let Some((q, dq)) = entering else {
                if !fresh {
                    self.refactor();
                    self.compute_basic_values();
                    fresh = true;
                    rejected.clear();
                    continue;
                }
                let still_infeasible = self.head.iter().any(|&j| self.infeasibility(j) != 0.0);
                let outcome = if still_infeasible {
                    LpOutcome::Infeasible
                } else {
                    LpOutcome::Optimal
                };
                return Ok(outcome);
            };

            iterations += 1;
            if iterations > cap {
                return Err(IterationCap(iterations));
            }

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let mut alpha = vec![0.0; m];
            for (i, a) in lp.column(q) {
                alpha[i] = a;
            }
            self.lu.ftran(&mut alpha);

            // Ratio test. For each basic position: the distance it may travel
            // and its rate of change per unit step.
            let limit = |p: usize, this: &Self| -> Option<(f64, f64, bool)> {
                let a = alpha[p];
                if a.abs() <= PIVOT_TOL {
                    return None;
                }
                let j = this.head[p];
                let rate = -dir * a;
                let v = this.x[j];
                let (l, u) = (this.lower[j], this.upper[j]);
                let target = if rate < 0.0 {
                    if v > u + PRIMAL_TOL {
                        u
                    } else if v >= l - PRIMAL_TOL {
                        l
                    } else {
                        return None;
                    }
                } else if v < l - PRIMAL_TOL {
                    l
                } else if v <= u + PRIMAL_TOL {
                    u
                } else {
                    return None;
                };
                if !target.is_finite() {
                    return None;
                }
                Some(((v - target).abs(), rate.abs(), target == u && l != u))
            };

            let mut leave: Option<(usize, f64, bool)> = None;
            if bland {
                let mut best = f64::INFINITY;
                for p in 0..m {
                    if let Some((dist, r, up)) = limit(p, self) {
                        let ratio = dist.max(0.0) / r;
                        let better = match leave {
                            None => true,
                            Some((bp, ..)) => {
                                ratio < best - 1e-12
                                    || (ratio <= best + 1e-12 && self.head[p] < self.head[bp])
                            }
                        };
                        if better {
                            best = best.min(ratio);
                            leave = Some((p, ratio, up));
                        }
                    }
                }
            } else {
                let mut theta_max = f64::INFINITY;
                for p in 0..m {
                    if let Some((dist, r, _)) = limit(p, self) {
                        theta_max = theta_max.min((dist + PRIMAL_TOL) / r);
                    }
                }
                if theta_max.is_finite() {
                    let mut best_alpha = 0.0;
                    for p in 0..m {
                        if let Some((dist, r, up)) = limit(p, self) {
                            let ratio = dist / r;
                            if ratio <= theta_max {
                                let a = alpha[p].abs();
                                let better = match leave {
                                    None => true,
                                    Some((bp, ..)) => {
                                        a > best_alpha
                                            || (a == best_alpha && self.head[p] < self.head[bp])
                                    }
                                };
                                if better {
                                    best_alpha = a;
                                    leave = Some((p, ratio.max(0.0), up));
                                }
                            }
                        }
                    }
                }
            }

            let flip = if dir > 0.0 {
                self.upper[q] - self.x[q]
            } else {
                self.x[q] - self.lower[q]
            };

            let (theta, leaving) = match leave {
                Some((p, ratio, up)) if ratio < flip => (ratio, Some((p, up))),
                _ if flip.is_finite() => (flip, None),
                None => {
                    if phase1 {
                        rejected.push(q);
                        continue;
                    }
                    return Ok(LpOutcome::Unbounded);
                }
                Some((p, ratio, up)) => (ratio, Some((p, up))),
            };

            if theta <= DEGENERATE_STEP {
                degenerate += 1;
                if degenerate >= BLAND_AFTER {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }

            if theta != 0.0 {
                self.x[q] += dir * theta;
                for p in 0..m {
                    if alpha[p] != 0.0 {
                        let j = self.head[p];
                        self.x[j] -= dir * alpha[p] * theta;
                    }
                }
            }

            match leaving {
                None => {
                    self.status[q] = if dir > 0.0 {
                        VarStatus::Upper
                    } else {
                        VarStatus::Lower
                    };
                    self.x[q] = self.nonbasic_value(q);
                }
                Some((p, to_upper)) => {
                    let out = self.head[p];
                    self.status[out] = if to_upper {
                        VarStatus::Upper
                    } else {
                        VarStatus::Lower
                    };
                    self.x[out] = self.nonbasic_value(out);
                    self.head[p] = q;
                    self.status[q] = VarStatus::Basic;
                    self.lu.update(p, &alpha);
                    rejected.clear();
                }
            }
            fresh = false;
        }
    }
}

impl Solver<'_> {
    /// Dual simplex from a dual feasible basis, used after bound changes.
    /// Returns `None` when the basis is not dual feasible or progress
    /// stalls; the caller then falls back to the primal method.
    fn dual_run(&mut self, cap: usize) -> Option<LpOutcome> {
        let lp = self.lp;
        let (n, m) = (lp.n, lp.m);
        let total = n + m;
        self.sanitize_statuses();
        self.refactor();
        self.compute_basic_values();

        let mut d = vec![0.0; total];
        let mut iterations = 0usize;
        loop {
            if self.lu.eta_count() >= REFACTOR_ETAS || self.lu.eta_nnz() > 8 * (m + 64) * 4 {
                self.refactor();
                self.compute_basic_values();
            }

            let mut y: Vec<f64> = self.head.iter().map(|&j| lp.cost[j]).collect();
            self.lu.btran(&mut y);
            let mut flipped = false;
            for j in 0..total {
                if self.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    d[j] = 0.0;
                    continue;
                }
                d[j] = lp.cost[j] - lp.dot_column(j, &y);
                let boxed = self.lower[j].is_finite() && self.upper[j].is_finite();
                match self.status[j] {
                    VarStatus::Lower if d[j] < -DUAL_TOL => {
                        if !boxed && d[j] > -DUAL_SLACK {
                            continue;
                        }
                        if !boxed {
                            return None;
                        }
                        self.status[j] = VarStatus::Upper;
                        flipped = true;
                    }
                    VarStatus::Upper if d[j] > DUAL_TOL => {
                        if !boxed && d[j] < DUAL_SLACK {
                            continue;
                        }
                        if !boxed {
                            return None;
                        }
                        self.status[j] = VarStatus::Lower;
                        flipped = true;
                    }
                    VarStatus::Free if d[j].abs() > DUAL_SLACK => return None,
                    _ => {}
                }
            }
            if flipped {
                self.compute_basic_values();
            }

            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64)> = None;
            for (p, &j) in self.head.iter().enumerate() {
                let v = self.x[j];
                let viol = if v < self.lower[j] - PRIMAL_TOL {
                    self.lower[j] - v
                } else if v > self.upper[j] + PRIMAL_TOL {
                    v - self.upper[j]
                } else {
                    continue;
                };
                if leave.is_none_or(|(_, bv)| viol > bv) {
                    leave = Some((p, viol));
                }
            }
            let Some((p, viol)) = leave else {
                return Some(LpOutcome::Optimal);
            };

            iterations += 1;
            if iterations > cap {
                return None;
            }

            let jp = self.head[p];
            let increase = self.x[jp] < self.lower[jp];
            let target = if increase {
                self.lower[jp]
            } else {
                self.upper[jp]
            };
            let mut rho = vec![0.0; m];
            rho[p] = 1.0;
            self.lu.btran(&mut rho);

            let cand = |j: usize, this: &Self| -> Option<f64> {
                let st = this.status[j];
                if st == VarStatus::Basic || this.lower[j] == this.upper[j] {
                    return None;
                }
                let a = lp.dot_column(j, &rho);
                if a.abs() <= PIVOT_TOL {
                    return None;
                }
                // x_p moves by -a per unit increase of x_j.
                let ok = match st {
                    VarStatus::Lower => (a < 0.0) == increase,
                    VarStatus::Upper => (a > 0.0) == increase,
                    VarStatus::Free => true,
                    VarStatus::Basic => false,
                };
                ok.then_some(a)
            };
            // Bound-flipping ratio test: walk the breakpoints in dual ratio
            // order and flip boxed candidates while the dual slope stays
            // positive.
            let mut cands: Vec<(f64, usize, f64)> = (0..total)
                .filter_map(|j| cand(j, self).map(|a| (d[j].abs() / a.abs(), j, a)))
                .collect();
            cands.sort_by(|x, y| {
                x.0.total_cmp(&y.0)
                    .then(y.2.abs().total_cmp(&x.2.abs()))
                    .then(x.1.cmp(&y.1))
            });
            let mut slope = viol;
            let mut flips: Vec<usize> = Vec::new();
            let mut entering: Option<usize> = None;
            for (i, &(ratio, j, a)) in cands.iter().enumerate() {
                let range = self.upper[j] - self.lower[j];
                let drop = a.abs() * range;
                if range.is_finite() && slope - drop > PRIMAL_TOL {
                    slope -= drop;
                    flips.push(j);
                    continue;
                }
                // Among near ties at this breakpoint prefer the largest pivot.
                let mut pick = (j, a.abs());
                for &(r2, j2, a2) in &cands[i + 1..] {
                    if r2 > ratio + 1e-12 {
                        break;
                    }
                    if a2.abs() > pick.1 {
                        pick = (j2, a2.abs());
                    }
                }
                entering = Some(pick.0);
                break;
            }
            let Some(q) = entering else {
                return if viol > 1e-7 {
                    Some(LpOutcome::Infeasible)
                } else {
                    None
                };
            };
            if !flips.is_empty() {
                let mut shift = vec![0.0; m];
                for &j in &flips {
                    let step = match self.status[j] {
                        VarStatus::Lower => {
                            self.status[j] = VarStatus::Upper;
                            self.x[j] = self.upper[j];
                            self.upper[j] - self.lower[j]
                        }
                        _ => {
                            self.status[j] = VarStatus::Lower;
                            self.x[j] = self.lower[j];
                            self.lower[j] - self.upper[j]
                        }
                    };
                    for (i, a) in lp.column(j) {
                        shift[i] += a * step;
                    }
                }
                self.lu.ftran(&mut shift);
                for (i, &v) in shift.iter().enumerate() {
                    if v != 0.0 {
                        let jb = self.head[i];
                        self.x[jb] -= v;
                    }
                }
            }

            let mut alpha = vec![0.0; m];
            for (i, a) in lp.column(q) {
                alpha[i] = a;
            }
            self.lu.ftran(&mut alpha);
            if alpha[p].abs() <= PIVOT_TOL {
                return None;
            }
            let dq = -(target - self.x[jp]) / alpha[p];
            self.x[q] += dq;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let j = self.head[i];
                    self.x[j] -= a * dq;
                }
            }
            self.status[jp] = if increase {
                VarStatus::Lower
            } else {
                VarStatus::Upper
            };
            self.x[jp] = target;
            self.head[p] = q;
            self.status[q] = VarStatus::Basic;
            self.lu.update(p, &alpha);
        }
    }
}

/// Solves `lp` under the given bounds starting from `basis`.
pub(crate) fn solve(
    lp: &StdLp,
    lower: &[f64],
    upper: &[f64],
    basis: Option<&Basis>,
) -> Result<LpRun, IterationCap> {
    let start = match basis {
        Some(b) => b.clone(),
        None => lp.slack_basis(),
    };
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Ok(LpRun {
            outcome: LpOutcome::Infeasible,
            x: vec![0.0; lp.n + lp.m],
            basis: start,
        });
    }
    let mut s = Solver {
        lp,
        lower,
        upper,
        head: start.head,
        status: start.status,
        x: vec![0.0; lp.n + lp.m],
        lu: LuFactor::default(),
    };
    let cap = 50 * (lp.n + lp.m);
    if basis.is_some() {
        // Optimality is confirmed by the primal pass below, which
        // normally performs no pivots.
        if let Some(LpOutcome::Infeasible) = s.dual_run(lp.m.max(1000)) {
            return Ok(LpRun {
                outcome: LpOutcome::Infeasible,
                x: s.x,
                basis: Basis {
                    head: s.head,
                    status: s.status,
                },
            });
        }
    }
    let outcome = s.run(cap)?;
    Ok(LpRun {
        outcome,
        x: s.x,
        basis: Basis {
            head: s.head,
            status: s.status,
        },
    })
}
