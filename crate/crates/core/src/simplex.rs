//! Bounded-variable dense revised simplex.
//!
//! Solves `min c'x  s.t.  A x = b,  lo <= x <= hi` (entries of `lo`/`hi` may
//! be infinite) and returns the primal point, the equality duals and the
//! reduced costs split into nonnegative lower/upper bound multipliers.
//!
//! All problems are pre-scaled by max-abs row/column equilibration plus a
//! global right-hand-side and cost normalization; the feasibility and
//! complementarity tolerances are absolute on the normalized data. The
//! pivoting rule is deterministic (Dantzig pricing with a Bland fallback once
//! a degeneracy-cycling heuristic triggers), so identical inputs produce
//! identical outputs.

use crate::linalg::{dot, invert, Mat};
use thiserror::Error;

pub const INF: f64 = f64::INFINITY;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid bounds at column {col}: lo {lo} > hi {hi}")]
    Bounds { col: usize, lo: f64, hi: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
}

/// Equality-form linear program with variable bounds.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LpProblem {
    pub fn ncols(&self) -> usize {
        self.c.len()
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.c.len();
        if self.lo.len() != n || self.hi.len() != n {
            return Err(LpError::Dimension(format!(
                "bounds have {}/{} entries, expected {n}",
                self.lo.len(),
                self.hi.len()
            )));
        }
        if self.rows.len() != self.rhs.len() {
            return Err(LpError::Dimension(format!(
                "{} rows but {} rhs entries",
                self.rows.len(),
                self.rhs.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite(format!("row {i}")));
            }
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("cost vector".into()));
        }
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("rhs".into()));
        }
        for j in 0..n {
            if self.lo[j] > self.hi[j] {
                return Err(LpError::Bounds {
                    col: j,
                    lo: self.lo[j],
                    hi: self.hi[j],
                });
            }
            if self.lo[j].is_nan() || self.hi[j].is_nan() {
                return Err(LpError::NonFinite(format!("bounds of column {j}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    /// Absolute primal feasibility tolerance on normalized data.
    pub feas: f64,
    /// Relative strong-duality tolerance.
    pub dual: f64,
    /// Absolute complementary-slackness tolerance on normalized data.
    pub cs: f64,
    /// Smallest pivot magnitude accepted.
    pub pivot: f64,
    pub iter_limit: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: 1e-7,
            dual: 1e-6,
            cs: 1e-7,
            pivot: 1e-9,
            iter_limit: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub obj: f64,
    /// Equality-row duals.
    pub y: Vec<f64>,
    /// Nonnegative multipliers of the lower bounds.
    pub mu_min: Vec<f64>,
    /// Nonnegative multipliers of the upper bounds.
    pub mu_max: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Residual report of the first-order optimality conditions.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// Max stationarity residual `|c - A'y - mu_min + mu_max|` (normalized).
    pub stationarity: f64,
    /// Max equality/bound violation (normalized).
    pub primal: f64,
    /// Most negative bound multiplier (normalized, 0 when clean).
    pub dual_sign: f64,
    /// Max complementarity residual (normalized).
    pub complementarity: f64,
    /// `|c'x - dual objective|` in original units.
    pub duality_gap_abs: f64,
    /// Duality gap relative to `1 + |c'x|`.
    pub duality_gap_rel: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual_sign)
            .max(self.complementarity)
    }

    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.stationarity <= tol.feas * 10.0
            && self.primal <= tol.feas
            && self.dual_sign <= tol.feas
            && self.complementarity <= tol.cs * 100.0
            && self.duality_gap_rel <= tol.dual
    }
}

/// Solve a bounded-variable LP. Statuses other than `Optimal` are reported
/// explicitly, never as a silently wrong answer.
pub fn solve_lp(p: &LpProblem, tol: &Tolerances) -> Result<LpSolution, LpError> {
    p.validate()?;
    let mut core = SimplexCore::new(p, tol.clone());
    let status = core.solve_cold();
    Ok(core.extract(status))
}

/// Check the KKT conditions of a solution against its problem.
pub fn verify_kkt(p: &LpProblem, s: &LpSolution, _tol: &Tolerances) -> KktReport {
    let sc = Scaling::compute(p);
    let n = p.ncols();
    let m = p.nrows();

    // Normalize the reported point the same way the solver normalizes data.
    let xs: Vec<f64> = (0..n).map(|j| s.x[j] / (sc.col[j] * sc.kb)).collect();
    let ys: Vec<f64> = (0..m).map(|i| s.y[i] / (sc.kc * sc.row[i])).collect();
    let mu_min_s: Vec<f64> = (0..n).map(|j| s.mu_min[j] * sc.col[j] / sc.kc).collect();
    let mu_max_s: Vec<f64> = (0..n).map(|j| s.mu_max[j] * sc.col[j] / sc.kc).collect();

    let mut primal = 0.0f64;
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..n {
            acc += p.rows[i][j] * sc.row[i] * sc.col[j] * xs[j];
        }
        primal = primal.max((acc - p.rhs[i] * sc.row[i] / sc.kb).abs());
    }
    let mut complementarity = 0.0f64;
    let mut dual_sign = 0.0f64;
    let mut stationarity = 0.0f64;
    for j in 0..n {
        let lo = p.lo[j] / (sc.col[j] * sc.kb);
        let hi = p.hi[j] / (sc.col[j] * sc.kb);
        if lo.is_finite() {
            primal = primal.max(lo - xs[j]);
            complementarity = complementarity.max((mu_min_s[j] * (xs[j] - lo)).abs());
        } else {
            complementarity = complementarity.max(mu_min_s[j].abs());
        }
        if hi.is_finite() {
            primal = primal.max(xs[j] - hi);
            complementarity = complementarity.max((mu_max_s[j] * (hi - xs[j])).abs());
        } else {
            complementarity = complementarity.max(mu_max_s[j].abs());
        }
        dual_sign = dual_sign.max(-mu_min_s[j]).max(-mu_max_s[j]);
        let mut aty = 0.0;
        for i in 0..m {
            aty += p.rows[i][j] * sc.row[i] * sc.col[j] * ys[i] * sc.kc;
        }
        // c'' - A''^T y'' - mu_min'' + mu_max''
        let cs = p.c[j] * sc.col[j] / sc.kc;
        stationarity = stationarity.max((cs - aty / sc.kc - mu_min_s[j] + mu_max_s[j]).abs());
    }

    // Dual objective in original units: b'y + lo'mu_min - hi'mu_max over
    // finite bounds.
    let mut dual_obj = dot(&p.rhs, &s.y);
    for j in 0..n {
        if p.lo[j].is_finite() {
            dual_obj += p.lo[j] * s.mu_min[j];
        }
        if p.hi[j].is_finite() {
            dual_obj -= p.hi[j] * s.mu_max[j];
        }
    }
    let primal_obj = dot(&p.c, &s.x);
    let gap = (primal_obj - dual_obj).abs();

    KktReport {
        stationarity,
        primal,
        dual_sign,
        complementarity,
        duality_gap_abs: gap,
        duality_gap_rel: gap / (1.0 + primal_obj.abs()),
    }
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Eq,
    Le,
    Ge,
}

/// Incremental construction of equality-form LPs. Inequality rows receive an
/// automatically appended slack column during `build`.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    lo: Vec<f64>,
    hi: Vec<f64>,
    c: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, Rel, f64)>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        self.lo.push(lo);
        self.hi.push(hi);
        self.c.push(cost);
        self.c.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.c[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lo[var] = lo;
        self.hi[var] = hi;
    }

    pub fn add_row(&mut self, rel: Rel, terms: &[(usize, f64)], rhs: f64) -> usize {
        self.rows.push((terms.to_vec(), rel, rhs));
        self.rows.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn build(self) -> LpProblem {
        self.build_with_slacks().0
    }

    /// Build the problem and report the slack column appended to each
    /// inequality row (`None` for equalities).
    pub fn build_with_slacks(mut self) -> (LpProblem, Vec<Option<usize>>) {
        let n_struct = self.c.len();
        let mut slack_of_row = vec![None; self.rows.len()];
        for (i, (_, rel, _)) in self.rows.iter().enumerate() {
            if *rel != Rel::Eq {
                let s = self.lo.len();
                self.lo.push(0.0);
                self.hi.push(INF);
                self.c.push(0.0);
                slack_of_row[i] = Some(s);
            }
        }
        let n = self.c.len();
        let mut rows = Vec::with_capacity(self.rows.len());
        let mut rhs = Vec::with_capacity(self.rows.len());
        for (i, (terms, rel, b)) in self.rows.iter().enumerate() {
            let mut row = vec![0.0; n];
            for &(j, v) in terms {
                assert!(j < n_struct, "row references unknown variable {j}");
                row[j] += v;
            }
            match rel {
                Rel::Eq => {}
                Rel::Le => row[slack_of_row[i].unwrap()] = 1.0,
                Rel::Ge => row[slack_of_row[i].unwrap()] = -1.0,
            }
            rows.push(row);
            rhs.push(*b);
        }
        (
            LpProblem {
                c: self.c,
                rows,
                rhs,
                lo: self.lo,
                hi: self.hi,
            },
            slack_of_row,
        )
    }
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub kb: f64,
    pub kc: f64,
}

impl Scaling {
    pub fn compute(p: &LpProblem) -> Scaling {
        let m = p.nrows();
        let n = p.ncols();
        let mut row = vec![1.0; m];
        for i in 0..m {
            let mx = p.rows[i].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if mx > 0.0 {
                row[i] = 1.0 / mx;
            }
        }
        let mut col = vec![1.0; n];
        for j in 0..n {
            let mut mx = 0.0f64;
            for i in 0..m {
                mx = mx.max((p.rows[i][j] * row[i]).abs());
            }
            if mx > 0.0 {
                col[j] = 1.0 / mx;
            }
        }
        let mut kb = 1.0f64;
        for i in 0..m {
            kb = kb.max((p.rhs[i] * row[i]).abs());
        }
        // Bounds participate in the primal magnitude as well: a variable fixed
        // at a huge bound would otherwise defeat the normalization.
        for j in 0..n {
            for b in [p.lo[j], p.hi[j]] {
                if b.is_finite() {
                    kb = kb.max((b / col[j]).abs());
                }
            }
        }
        let mut kc = 1.0f64;
        for j in 0..n {
            kc = kc.max((p.c[j] * col[j]).abs());
        }
        Scaling { row, col, kb, kc }
    }
}

// ---------------------------------------------------------------------------
// Core
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VStat {
    Basic,
    AtLo,
    AtUp,
    /// Free variable parked at zero.
    FreeZero,
}

#[derive(Debug, Clone)]
pub(crate) struct BasisState {
    stat: Vec<VStat>,
    basis: Vec<usize>,
}

enum LoopExit {
    Optimal,
    Unbounded,
    IterLimit,
}

/// Reusable solver state. `branchbound` keeps one instance per search tree and
/// re-optimizes after bound changes via the dual simplex.
pub(crate) struct SimplexCore {
    m: usize,
    n_struct: usize,
    n: usize,
    /// Column-major scaled matrix including one artificial column per row.
    acols: Vec<Vec<f64>>,
    c: Vec<f64>,
    c_work: Vec<f64>,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    scaling: Scaling,
    tol: Tolerances,
    orig_c: Vec<f64>,

    stat: Vec<VStat>,
    basis: Vec<usize>,
    binv: Mat,
    x: Vec<f64>,
    bland: bool,
    degen_streak: usize,
    pivots_since_refactor: usize,
    pub iterations: usize,
    in_phase1: bool,
}

impl SimplexCore {
    pub fn new(p: &LpProblem, tol: Tolerances) -> Self {
        let m = p.nrows();
        let n_struct = p.ncols();
        let scaling = Scaling::compute(p);
        let n = n_struct + m;

        let mut acols = Vec::with_capacity(n);
        for j in 0..n_struct {
            let mut col = vec![0.0; m];
            for i in 0..m {
                col[i] = p.rows[i][j] * scaling.row[i] * scaling.col[j];
            }
            acols.push(col);
        }
        // Artificial columns start as +e_i; the sign is fixed at phase-1 start.
        for i in 0..m {
            let mut col = vec![0.0; m];
            col[i] = 1.0;
            acols.push(col);
        }

        let mut c = vec![0.0; n];
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for j in 0..n_struct {
            c[j] = p.c[j] * scaling.col[j] / scaling.kc;
            lo[j] = p.lo[j] / (scaling.col[j] * scaling.kb);
            hi[j] = p.hi[j] / (scaling.col[j] * scaling.kb);
        }
        let b = (0..m)
            .map(|i| p.rhs[i] * scaling.row[i] / scaling.kb)
            .collect();

        SimplexCore {
            m,
            n_struct,
            n,
            acols,
            c_work: c.clone(),
            c,
            b,
            lo,
            hi,
            scaling,
            tol,
            orig_c: p.c.clone(),
            stat: vec![VStat::AtLo; n],
            basis: Vec::new(),
            binv: Mat::identity(m),
            x: vec![0.0; n],
            bland: false,
            degen_streak: 0,
            pivots_since_refactor: 0,
            iterations: 0,
            in_phase1: false,
        }
    }

    pub fn n_struct(&self) -> usize {
        self.n_struct
    }

    fn init_nonbasic(&mut self) {
        for j in 0..self.n_struct {
            let (l, h) = (self.lo[j], self.hi[j]);
            self.stat[j] = if l.is_finite() && (!h.is_finite() || l.abs() <= h.abs()) {
                VStat::AtLo
            } else if h.is_finite() {
                VStat::AtUp
            } else {
                VStat::FreeZero
            };
            self.x[j] = self.nonbasic_value(j);
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.stat[j] {
            VStat::AtLo => self.lo[j],
            VStat::AtUp => self.hi[j],
            VStat::FreeZero => 0.0,
            VStat::Basic => self.x[j],
        }
    }

    /// Cold solve: phase 1 with artificials, then phase 2.
    pub fn solve_cold(&mut self) -> LpStatus {
        if self.m == 0 {
            return self.solve_rowless();
        }
        self.bland = false;
        self.degen_streak = 0;
        self.init_nonbasic();

        // Residual determines each artificial's sign so it starts >= 0.
        let mut resid = self.b.clone();
        for j in 0..self.n_struct {
            let v = self.x[j];
            if v != 0.0 {
                for i in 0..self.m {
                    resid[i] -= self.acols[j][i] * v;
                }
            }
        }
        self.binv = Mat::identity(self.m);
        self.basis.clear();
        for i in 0..self.m {
            let art = self.n_struct + i;
            let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
            self.acols[art][i] = sign;
            *self.binv.at_mut(i, i) = sign;
            self.lo[art] = 0.0;
            self.hi[art] = INF;
            self.stat[art] = VStat::Basic;
            self.basis.push(art);
            self.x[art] = resid[i].abs();
        }

        // Phase 1: minimize the artificial sum.
        self.in_phase1 = true;
        for j in 0..self.n {
            self.c_work[j] = if j >= self.n_struct { 1.0 } else { 0.0 };
        }
        match self.primal_loop() {
            LoopExit::IterLimit => return LpStatus::IterLimit,
            LoopExit::Unbounded => unreachable!("phase 1 objective is bounded below"),
            LoopExit::Optimal => {}
        }
        let infeas: f64 = (self.n_struct..self.n).map(|j| self.x[j].max(0.0)).sum();
        if infeas > self.tol.feas * 10.0 {
            return LpStatus::Infeasible;
        }

        self.drive_out_artificials();
        for i in 0..self.m {
            let art = self.n_struct + i;
            self.lo[art] = 0.0;
            self.hi[art] = 0.0;
            if self.stat[art] != VStat::Basic {
                self.stat[art] = VStat::AtLo;
                self.x[art] = 0.0;
            }
        }

        // Phase 2 with the true costs.
        self.in_phase1 = false;
        self.c_work.copy_from_slice(&self.c);
        self.bland = false;
        self.degen_streak = 0;
        match self.primal_loop() {
            LoopExit::Optimal => LpStatus::Optimal,
            LoopExit::Unbounded => LpStatus::Unbounded,
            LoopExit::IterLimit => LpStatus::IterLimit,
        }
    }

    fn solve_rowless(&mut self) -> LpStatus {
        for j in 0..self.n_struct {
            let c = self.c[j];
            if c > 0.0 {
                if !self.lo[j].is_finite() {
                    return LpStatus::Unbounded;
                }
                self.stat[j] = VStat::AtLo;
            } else if c < 0.0 {
                if !self.hi[j].is_finite() {
                    return LpStatus::Unbounded;
                }
                self.stat[j] = VStat::AtUp;
            } else if self.lo[j].is_finite() {
                self.stat[j] = VStat::AtLo;
            } else if self.hi[j].is_finite() {
                self.stat[j] = VStat::AtUp;
            } else {
                self.stat[j] = VStat::FreeZero;
            }
            self.x[j] = self.nonbasic_value(j);
        }
        LpStatus::Optimal
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.n_struct {
                continue;
            }
            let rho: Vec<f64> = self.binv.row(r).to_vec();
            let mut target = None;
            for j in 0..self.n_struct {
                if self.stat[j] == VStat::Basic {
                    continue;
                }
                if self.lo[j] == self.hi[j] {
                    continue;
                }
                let alpha = dot(&rho, &self.acols[j]);
                if alpha.abs() > 1e-7 {
                    target = Some((j, alpha));
                    break;
                }
            }
            if let Some((j, _)) = target {
                let w = self.ftran(j);
                let art = self.basis[r];
                self.pivot(r, j, &w);
                self.stat[art] = VStat::AtLo;
                self.x[art] = 0.0;
                self.stat[j] = VStat::Basic;
                self.recompute_x();
            }
            // A row whose artificial cannot leave is redundant; the artificial
            // stays basic, pinned at zero by its bounds.
        }
    }

    fn duals(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (k, &bj) in self.basis.iter().enumerate() {
            let cb = self.c_work[bj];
            if cb != 0.0 {
                for i in 0..self.m {
                    y[i] += cb * self.binv.at(k, i);
                }
            }
        }
        y
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        self.binv.matvec(&self.acols[j], &mut w);
        w
    }

    fn pivot(&mut self, r: usize, j: usize, w: &[f64]) {
        let wr = w[r];
        debug_assert!(wr.abs() > self.tol.pivot * 0.01);
        let inv_wr = 1.0 / wr;
        for col in 0..self.m {
            *self.binv.at_mut(r, col) *= inv_wr;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = w[i];
            if f == 0.0 {
                continue;
            }
            for col in 0..self.m {
                let sub = f * self.binv.at(r, col);
                *self.binv.at_mut(i, col) -= sub;
            }
        }
        self.basis[r] = j;
        self.pivots_since_refactor += 1;
    }

    fn refactor(&mut self) -> bool {
        let mut bmat = Mat::zeros(self.m, self.m);
        for (k, &j) in self.basis.iter().enumerate() {
            for i in 0..self.m {
                *bmat.at_mut(i, k) = self.acols[j][i];
            }
        }
        match invert(&bmat, 1e-12) {
            Some(inv) => {
                self.binv = inv;
                self.pivots_since_refactor = 0;
                true
            }
            None => false,
        }
    }

    fn recompute_x(&mut self) {
        let mut t = self.b.clone();
        for j in 0..self.n {
            if self.stat[j] == VStat::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                for i in 0..self.m {
                    t[i] -= self.acols[j][i] * v;
                }
            }
        }
        let mut xb = vec![0.0; self.m];
        self.binv.matvec(&t, &mut xb);
        for (k, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[k];
        }
    }

    fn work_obj(&self) -> f64 {
        (0..self.n).map(|j| self.c_work[j] * self.x[j]).sum()
    }

    fn primal_loop(&mut self) -> LoopExit {
        let mut verified_after_refactor = false;
        loop {
            self.iterations += 1;
            if self.iterations > self.tol.iter_limit {
                return LoopExit::IterLimit;
            }
            if self.pivots_since_refactor >= 128 {
                if !self.refactor() {
                    log::warn!("basis refactorization failed; restarting");
                    return LoopExit::IterLimit;
                }
                self.recompute_x();
            }

            let y = self.duals();
            let mut entering: Option<(usize, f64, i8)> = None;
            for j in 0..self.n {
                if self.stat[j] == VStat::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.c_work[j] - dot(&y, &self.acols[j]);
                let cand: Option<(f64, i8)> = match self.stat[j] {
                    VStat::AtLo if d < -self.tol.pivot => Some((-d, 1)),
                    VStat::AtUp if d > self.tol.pivot => Some((d, -1)),
                    VStat::FreeZero if d.abs() > self.tol.pivot => {
                        Some((d.abs(), if d < 0.0 { 1 } else { -1 }))
                    }
                    _ => None,
                };
                if let Some((score, dir)) = cand {
                    if self.bland {
                        entering = Some((j, score, dir));
                        break;
                    }
                    if entering.map_or(true, |(_, s, _)| score > s) {
                        entering = Some((j, score, dir));
                    }
                }
            }

            let Some((j, _, dir)) = entering else {
                // Confirm optimality on a fresh factorization before claiming it.
                if self.pivots_since_refactor > 0 && !verified_after_refactor {
                    if !self.refactor() {
                        return LoopExit::IterLimit;
                    }
                    self.recompute_x();
                    verified_after_refactor = true;
                    continue;
                }
                return LoopExit::Optimal;
            };
            verified_after_refactor = false;

            let dirf = dir as f64;
            let w = self.ftran(j);
            // Moving x_j by t*dir changes basics by -t*dir*w.
            let mut t_best = INF;
            let mut leave: Option<(usize, VStat)> = None;
            let mut best_ピ = 0.0f64;
            for i in 0..self.m {
                let delta = -dirf * w[i];
                if delta.abs() <= self.tol.pivot {
                    continue;
                }
                let bi = self.basis[i];
                let (limit, side) = if delta > 0.0 {
                    if !self.hi[bi].is_finite() {
                        continue;
                    }
                    ((self.hi[bi] - self.x[bi]) / delta, VStat::AtUp)
                } else {
                    if !self.lo[bi].is_finite() {
                        continue;
                    }
                    ((self.lo[bi] - self.x[bi]) / delta, VStat::AtLo)
                };
                let limit = limit.max(0.0);
                let wmag = w[i].abs();
                if limit < t_best - 1e-12 || (limit < t_best + 1e-12 && wmag > best_ピ) {
                    t_best = limit;
                    leave = Some((i, side));
                    best_ピ = wmag;
                }
            }
            let t_flip = if self.stat[j] == VStat::FreeZero {
                INF
            } else {
                self.hi[j] - self.lo[j]
            };

            if t_best.is_infinite() && t_flip.is_infinite() {
                return LoopExit::Unbounded;
            }

            let prev_obj = self.work_obj();
            if t_flip <= t_best {
                // Bound-to-bound move without a basis change.
                let t = t_flip * dirf;
                self.x[j] += t;
                for i in 0..self.m {
                    let bi = self.basis[i];
                    self.x[bi] -= t * w[i];
                }
                self.stat[j] = if dir > 0 { VStat::AtUp } else { VStat::AtLo };
                self.x[j] = self.nonbasic_value(j);
            } else {
                let (r, side) = leave.unwrap();
                let t = t_best * dirf;
                self.x[j] += t;
                for i in 0..self.m {
                    let bi = self.basis[i];
                    self.x[bi] -= t * w[i];
                }
                let leaving = self.basis[r];
                self.stat[leaving] = side;
                self.x[leaving] = self.nonbasic_value(leaving);
                self.stat[j] = VStat::Basic;
                self.pivot(r, j, &w);
            }

            let improved = (prev_obj - self.work_obj()).abs() > 1e-13 * (1.0 + prev_obj.abs());
            if improved {
                self.degen_streak = 0;
            } else {
                self.degen_streak += 1;
                if self.degen_streak > 2 * (self.m + self.n) {
                    self.bland = true;
                }
            }
        }
    }

    // -- warm-path API used by branch-and-bound -----------------------------

    pub fn snapshot(&self) -> BasisState {
        BasisState {
            stat: self.stat.clone(),
            basis: self.basis.clone(),
        }
    }

    pub fn restore(&mut self, snap: &BasisState) -> bool {
        self.stat.copy_from_slice(&snap.stat);
        self.basis.clone_from(&snap.basis);
        if !self.refactor() {
            return false;
        }
        self.recompute_x();
        true
    }

    /// Change the bounds of a structural column (original units).
    pub fn set_bounds_orig(&mut self, j: usize, lo: f64, hi: f64) {
        debug_assert!(j < self.n_struct);
        let k = self.scaling.col[j] * self.scaling.kb;
        self.lo[j] = lo / k;
        self.hi[j] = hi / k;
        if self.stat[j] != VStat::Basic {
            match self.stat[j] {
                VStat::AtLo if !self.lo[j].is_finite() => {
                    self.stat[j] = if self.hi[j].is_finite() {
                        VStat::AtUp
                    } else {
                        VStat::FreeZero
                    }
                }
                VStat::AtUp if !self.hi[j].is_finite() => {
                    self.stat[j] = if self.lo[j].is_finite() {
                        VStat::AtLo
                    } else {
                        VStat::FreeZero
                    }
                }
                _ => {}
            }
            self.x[j] = self.nonbasic_value(j);
        }
    }

    /// Overwrite one row of the constraint matrix (original units) and its
    /// right-hand side. The caller must refactor via `restore`/`reopt`.
    pub fn rewrite_row_orig(&mut self, i: usize, row: &[f64], rhs: f64) {
        debug_assert_eq!(row.len(), self.n_struct);
        // Recompute the row scale for the new contents.
        let mx = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let r = if mx > 0.0 { 1.0 / mx } else { 1.0 };
        self.scaling.row[i] = r;
        for j in 0..self.n_struct {
            self.acols[j][i] = row[j] * r * self.scaling.col[j];
        }
        // Keep the artificial aligned with its stored sign.
        self.b[i] = rhs * r / self.scaling.kb;
    }

    pub fn infeasibility(&self) -> f64 {
        let mut v = 0.0f64;
        for &bi in &self.basis {
            if self.lo[bi].is_finite() {
                v = v.max(self.lo[bi] - self.x[bi]);
            }
            if self.hi[bi].is_finite() {
                v = v.max(self.x[bi] - self.hi[bi]);
            }
        }
        v
    }

    /// Dual-simplex reoptimization after bound or row changes. Falls back to a
    /// cold solve when the warm path stalls.
    pub fn reopt(&mut self) -> LpStatus {
        if self.m == 0 {
            return self.solve_rowless();
        }
        if !self.refactor() {
            return self.solve_cold();
        }
        self.recompute_x();
        self.c_work.copy_from_slice(&self.c);
        self.in_phase1 = false;

        let cap = 4 * (self.m + self.n);
        for _ in 0..cap {
            self.iterations += 1;
            let mut r_best: Option<usize> = None;
            let mut viol_best = self.tol.feas;
            for (k, &bi) in self.basis.iter().enumerate() {
                let viol = if self.lo[bi].is_finite() && self.x[bi] < self.lo[bi] {
                    self.lo[bi] - self.x[bi]
                } else if self.hi[bi].is_finite() && self.x[bi] > self.hi[bi] {
                    self.x[bi] - self.hi[bi]
                } else {
                    0.0
                };
                if viol > viol_best {
                    viol_best = viol;
                    r_best = Some(k);
                }
            }
            let Some(r) = r_best else {
                // Primal feasible; polish with the primal loop (usually a no-op).
                return match self.primal_loop() {
                    LoopExit::Optimal => LpStatus::Optimal,
                    LoopExit::Unbounded => LpStatus::Unbounded,
                    LoopExit::IterLimit => LpStatus::IterLimit,
                };
            };

            let bi = self.basis[r];
            // below_lo: the leaving basic must increase toward its lower bound.
            let below_lo = self.lo[bi].is_finite() && self.x[bi] < self.lo[bi];
            let rho: Vec<f64> = self.binv.row(r).to_vec();
            let y = self.duals();

            let mut pick: Option<(usize, f64, f64)> = None;
            for j in 0..self.n {
                if self.stat[j] == VStat::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let alpha = dot(&rho, &self.acols[j]);
                if alpha.abs() <= self.tol.pivot {
                    continue;
                }
                // dx_r/dx_j = -alpha. Check the movable direction of j.
                let ok = match self.stat[j] {
                    VStat::AtLo => {
                        if below_lo {
                            alpha < 0.0
                        } else {
                            alpha > 0.0
                        }
                    }
                    VStat::AtUp => {
                        if below_lo {
                            alpha > 0.0
                        } else {
                            alpha < 0.0
                        }
                    }
                    VStat::FreeZero => true,
                    VStat::Basic => false,
                };
                if !ok {
                    continue;
                }
                let d = self.c_work[j] - dot(&y, &self.acols[j]);
                let ratio = d.abs() / alpha.abs();
                let better = match &pick {
                    None => true,
                    Some((_, best, amag)) => {
                        ratio < best - 1e-12 || (ratio < best + 1e-12 && alpha.abs() > *amag)
                    }
                };
                if better {
                    pick = Some((j, ratio, alpha.abs()));
                }
            }

            let Some((j, _, _)) = pick else {
                return LpStatus::Infeasible;
            };
            let w = self.ftran(j);
            let leaving = self.basis[r];
            let side = if below_lo { VStat::AtLo } else { VStat::AtUp };
            self.stat[leaving] = side;
            self.stat[j] = VStat::Basic;
            self.pivot(r, j, &w);
            if self.pivots_since_refactor >= 64 && !self.refactor() {
                return self.solve_cold();
            }
            self.recompute_x();
        }
        // Stalled: correctness over speed.
        self.solve_cold()
    }

    pub fn extract(&self, status: LpStatus) -> LpSolution {
        let n = self.n_struct;
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j] = self.x[j] * self.scaling.col[j] * self.scaling.kb;
        }
        let obj = dot(&self.orig_c, &x);

        let mut y = vec![0.0; self.m];
        let mut mu_min = vec![0.0; n];
        let mut mu_max = vec![0.0; n];
        if status == LpStatus::Optimal && self.m > 0 {
            let ys = self.duals();
            for i in 0..self.m {
                y[i] = ys[i] * self.scaling.kc * self.scaling.row[i];
            }
            for j in 0..n {
                if self.stat[j] == VStat::Basic {
                    continue;
                }
                let d = self.c[j] - dot(&ys, &self.acols[j]);
                let d_orig = d * self.scaling.kc / self.scaling.col[j];
                match self.stat[j] {
                    VStat::AtLo | VStat::FreeZero => mu_min[j] = d_orig.max(0.0),
                    VStat::AtUp => mu_max[j] = (-d_orig).max(0.0),
                    VStat::Basic => {}
                }
                if self.lo[j] == self.hi[j] {
                    // Fixed variable: keep the full reduced cost on one side.
                    if d_orig >= 0.0 {
                        mu_min[j] = d_orig;
                        mu_max[j] = 0.0;
                    } else {
                        mu_max[j] = -d_orig;
                        mu_min[j] = 0.0;
                    }
                }
            }
        }
        LpSolution {
            status,
            x,
            obj,
            y,
            mu_min,
            mu_max,
            iterations: self.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn forced_point() {
        // min x s.t. x = 1, 0 <= x <= 2
        let p = LpProblem {
            c: vec![1.0],
            rows: vec![vec![1.0]],
            rhs: vec![1.0],
            lo: vec![0.0],
            hi: vec![2.0],
        };
        let s = solve_lp(&p, &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
        assert!((s.y[0] - 1.0).abs() < 1e-9);
        assert!((s.obj - 1.0).abs() < 1e-9);
    }

    #[test]
    fn merit_order_two_generators() {
        // 1 zone, load 100, gen A (cap 80, cost 10), gen B (cap 50, cost 20).
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 100.0);
        let p = b.build();
        let s = solve_lp(&p, &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 80.0).abs() < 1e-7);
        assert!((s.x[1] - 20.0).abs() < 1e-7);
        assert!((s.y[0] - 20.0).abs() < 1e-9);
        assert!((s.obj - 1200.0).abs() < 1e-7);
        // Marginal value of gen A's upper bound is the price spread.
        assert!((s.mu_max[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 200.0);
        let s = solve_lp(&b.build(), &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x with x >= 0 free above and a vacuous row.
        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, INF, -1.0);
        let y = b.add_var(0.0, 1.0, 0.0);
        b.add_row(Rel::Eq, &[(y, 1.0)], 0.5);
        let _ = x;
        let s = solve_lp(&b.build(), &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn rowless_problem() {
        let p = LpProblem {
            c: vec![1.0, -2.0],
            rows: vec![],
            rhs: vec![],
            lo: vec![-1.0, 0.0],
            hi: vec![5.0, 3.0],
        };
        let s = solve_lp(&p, &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![-1.0, 3.0]);
    }

    #[test]
    fn negative_bounds_and_free_vars() {
        // Flow-like free variable between two balances.
        let mut b = LpBuilder::new();
        let e1 = b.add_var(0.0, 100.0, 5.0);
        let e2 = b.add_var(0.0, 100.0, 9.0);
        let f = b.add_var(-30.0, 30.0, 0.0);
        b.add_row(Rel::Eq, &[(e1, 1.0), (f, 1.0)], 50.0);
        b.add_row(Rel::Eq, &[(e2, 1.0), (f, -1.0)], 50.0);
        let s = solve_lp(&b.build(), &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // Cheap zone exports at the line limit.
        assert!((s.x[0] - 80.0).abs() < 1e-7);
        assert!((s.x[1] - 20.0).abs() < 1e-7);
        assert!((s.x[2] + 30.0).abs() < 1e-7);
        assert!((s.y[0] - 5.0).abs() < 1e-9);
        assert!((s.y[1] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn kkt_clean_on_optimal() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 100.0);
        let p = b.build();
        let s = solve_lp(&p, &tol()).unwrap();
        let rep = verify_kkt(&p, &s, &tol());
        assert!(rep.passes(&tol()), "{rep:?}");
        assert!(rep.max_residual() <= 1e-7);
    }

    #[test]
    fn kkt_flags_perturbed_primal() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 100.0);
        let p = b.build();
        let mut s = solve_lp(&p, &tol()).unwrap();
        s.x[1] += 1.0;
        let rep = verify_kkt(&p, &s, &tol());
        assert!(rep.primal > 1e-7 || rep.stationarity > 1e-7);
    }

    #[test]
    fn kkt_gap_equals_objective_when_duals_zeroed() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 100.0);
        let p = b.build();
        let mut s = solve_lp(&p, &tol()).unwrap();
        s.y.iter_mut().for_each(|v| *v = 0.0);
        s.mu_min.iter_mut().for_each(|v| *v = 0.0);
        s.mu_max.iter_mut().for_each(|v| *v = 0.0);
        let rep = verify_kkt(&p, &s, &tol());
        assert!((rep.duality_gap_abs - s.obj.abs()).abs() < 1e-9);
    }

    #[test]
    fn cost_scaling_invariance() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 100.0);
        let p1 = b.build();
        let mut p2 = p1.clone();
        let k = 7.5;
        p2.c.iter_mut().for_each(|v| *v *= k);
        let s1 = solve_lp(&p1, &tol()).unwrap();
        let s2 = solve_lp(&p2, &tol()).unwrap();
        for j in 0..2 {
            assert!((s1.x[j] - s2.x[j]).abs() < 1e-8);
        }
        assert!((s2.obj - k * s1.obj).abs() < 1e-6);
        assert!((s2.y[0] - k * s1.y[0]).abs() < 1e-8);
    }

    #[test]
    fn warm_reopt_matches_cold_after_bound_fix() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        let gc = b.add_var(0.0, 60.0, 15.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0), (gc, 1.0)], 120.0);
        let p = b.build();

        let mut core = SimplexCore::new(&p, tol());
        assert_eq!(core.solve_cold(), LpStatus::Optimal);
        core.set_bounds_orig(0, 0.0, 20.0);
        let st = core.reopt();
        assert_eq!(st, LpStatus::Optimal);
        let warm = core.extract(st);

        let mut p2 = p.clone();
        p2.hi[0] = 20.0;
        let cold = solve_lp(&p2, &tol()).unwrap();
        assert!((warm.obj - cold.obj).abs() < 1e-7, "{} {}", warm.obj, cold.obj);
    }

    #[test]
    fn contradictory_bounds_infeasible_on_reopt() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        b.add_row(Rel::Eq, &[(ga, 1.0)], 50.0);
        let p = b.build();
        let mut core = SimplexCore::new(&p, tol());
        assert_eq!(core.solve_cold(), LpStatus::Optimal);
        core.set_bounds_orig(0, 60.0, 70.0);
        assert_eq!(core.reopt(), LpStatus::Infeasible);
    }
}
