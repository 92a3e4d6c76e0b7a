//! Independent brute-force references used by the test suites.
//!
//! Nothing here shares solver code with `simplex`, `branchbound` or the
//! leader MILP path: LPs are checked by basic-solution enumeration and the
//! bilevel heat market by exhaustive grid search, so the references fail
//! independently of the engines they audit.

use crate::linalg::{invert, Mat};
use crate::markets::{self, CouplingBounds};
use crate::simplex::LpProblem;
use crate::sysmodel::{EnergySystem, LoadData, Unit};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration limit exceeded: {0} evaluations")]
    LimitExceeded(usize),
    #[error("oracle precondition violated: {0}")]
    Precondition(String),
    #[error("market error inside oracle: {0}")]
    Market(#[from] markets::MarketError),
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Grid step in Wh for the bilevel search.
    pub step: f64,
    /// Hard cap on point evaluations.
    pub eval_limit: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            step: 1.0,
            eval_limit: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleLpOutcome {
    Optimal { obj: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Enumerate all basic solutions of `min c'x, Ax = b, lo <= x <= hi` and
/// return the best feasible one. Intended for problems with at most ~10
/// columns; every choice of basis columns and nonbasic bound assignment is
/// visited.
pub fn lp_vertex_oracle(p: &LpProblem, cfg: &OracleConfig) -> Result<OracleLpOutcome, OracleError> {
    let n = p.ncols();
    let m = p.nrows();
    if n > 12 {
        return Err(OracleError::Precondition(format!(
            "{n} columns exceed the enumeration guard"
        )));
    }
    let feas_scale = 1.0 + p.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-7 * feas_scale;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut feasible_seen = false;
    let mut evals = 0usize;

    // A free variable has no bound to rest on, so it must be basic; count them
    // to prune impossible basis choices early.
    let is_free = |j: usize| !p.lo[j].is_finite() && !p.hi[j].is_finite();

    let mut basis = Vec::with_capacity(m);
    enumerate_bases(n, m, 0, &mut basis, &mut |basis: &[usize]| {
        for j in 0..n {
            if is_free(j) && !basis.contains(&j) {
                return Ok(());
            }
        }
        let nonbasic: Vec<usize> = (0..n).filter(|j| !basis.contains(j)).collect();
        // Each nonbasic rests at one of its finite bounds.
        let mut sides = vec![0u8; nonbasic.len()];
        loop {
            evals += 1;
            if evals > cfg.eval_limit {
                return Err(OracleError::LimitExceeded(evals));
            }
            let mut x = vec![0.0; n];
            let mut ok = true;
            for (k, &j) in nonbasic.iter().enumerate() {
                let v = if sides[k] == 0 { p.lo[j] } else { p.hi[j] };
                if !v.is_finite() {
                    ok = false;
                    break;
                }
                x[j] = v;
            }
            if ok && m > 0 {
                let mut bmat = Mat::zeros(m, m);
                for (k, &j) in basis.iter().enumerate() {
                    for i in 0..m {
                        *bmat.at_mut(i, k) = p.rows[i][j];
                    }
                }
                match invert(&bmat, 1e-11) {
                    None => ok = false,
                    Some(binv) => {
                        let mut rhs = p.rhs.clone();
                        for (i, r) in p.rows.iter().enumerate() {
                            for &j in &nonbasic {
                                rhs[i] -= r[j] * x[j];
                            }
                        }
                        let mut xb = vec![0.0; m];
                        binv.matvec(&rhs, &mut xb);
                        for (k, &j) in basis.iter().enumerate() {
                            x[j] = xb[k];
                            if x[j] < p.lo[j] - tol || x[j] > p.hi[j] + tol {
                                ok = false;
                            }
                        }
                    }
                }
            }
            if ok {
                feasible_seen = true;
                let obj: f64 = (0..n).map(|j| p.c[j] * x[j]).sum();
                if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                    best = Some((obj, x));
                }
            }
            // Advance the bound-side odometer.
            let mut k = 0;
            loop {
                if k == sides.len() {
                    return Ok(());
                }
                if sides[k] == 0 {
                    sides[k] = 1;
                    break;
                }
                sides[k] = 0;
                k += 1;
            }
        }
    })?;

    if let Some((obj, x)) = best {
        Ok(OracleLpOutcome::Optimal { obj, x })
    } else if feasible_seen {
        unreachable!()
    } else {
        Ok(OracleLpOutcome::Infeasible)
    }
}

fn enumerate_bases<F>(
    n: usize,
    m: usize,
    start: usize,
    basis: &mut Vec<usize>,
    f: &mut F,
) -> Result<(), OracleError>
where
    F: FnMut(&[usize]) -> Result<(), OracleError>,
{
    if basis.len() == m {
        return f(basis);
    }
    let remaining = m - basis.len();
    for j in start..n {
        if n - j < remaining {
            break;
        }
        basis.push(j);
        enumerate_bases(n, m, j + 1, basis, f)?;
        basis.pop();
    }
    Ok(())
}

/// Exhaustive grid search over the heat output of every CHP/HP for a one-hour
/// system. Heat-only units close the balance by merit order; infeasible
/// residuals skip the grid point. Each surviving point is priced by an exact
/// follower clear and evaluated with the leader objective.
pub fn bilevel_grid_oracle(
    sys: &EnergySystem,
    loads: &LoadData,
    step: f64,
) -> Result<(f64, Vec<f64>), OracleError> {
    if sys.horizon != 1 {
        return Err(OracleError::Precondition(
            "grid oracle is limited to one-hour systems".into(),
        ));
    }
    let coupling: Vec<usize> = sys
        .units
        .iter()
        .enumerate()
        .filter(|(_, u)| matches!(u, Unit::Chp { .. } | Unit::HeatPump { .. }))
        .map(|(i, _)| i)
        .collect();
    if coupling.len() > 3 {
        return Err(OracleError::Precondition(format!(
            "{} coupling units exceed the oracle guard",
            coupling.len()
        )));
    }
    if step <= 0.0 {
        return Err(OracleError::Precondition("step must be positive".into()));
    }

    let grids: Vec<Vec<f64>> = coupling
        .iter()
        .map(|&ui| {
            let (hmin, hmax) = sys.units[ui].heat_bounds_at(0);
            let mut g = Vec::new();
            let mut h = hmin;
            while h < hmax - 1e-9 {
                g.push(h);
                h += step;
            }
            g.push(hmax);
            g
        })
        .collect();
    let total: usize = grids.iter().map(|g| g.len().max(1)).product();
    if total > 1_000_000 {
        return Err(OracleError::LimitExceeded(total));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; coupling.len()];
    loop {
        let h_coupling: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| grids[k].get(i).copied().unwrap_or(0.0))
            .collect();
        if let Some(obj) = evaluate_point(sys, loads, &coupling, &h_coupling)? {
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, h_coupling.clone()));
            }
        }

        // Odometer over the per-unit grids.
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best.ok_or_else(|| {
                    OracleError::Precondition("no feasible grid point".into())
                });
            }
            idx[k] += 1;
            if idx[k] < grids[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if idx.iter().all(|&v| v == 0) {
            // Wrapped all the way around with empty coupling set.
            return best.ok_or_else(|| OracleError::Precondition("no feasible grid point".into()));
        }
    }
}

/// Evaluate one grid point: close the heat balance with heat-only units by
/// merit order, clear the follower exactly, price the leader objective.
fn evaluate_point(
    sys: &EnergySystem,
    loads: &LoadData,
    coupling: &[usize],
    h_coupling: &[f64],
) -> Result<Option<f64>, OracleError> {
    let t = 0usize;
    let mut h_all = vec![0.0; sys.units.len()];
    for (k, &ui) in coupling.iter().enumerate() {
        h_all[ui] = h_coupling[k];
    }

    // Merit-order closure per heat zone.
    for (zi, zone) in sys.heat_zones.iter().enumerate() {
        let mut residual = loads.heat.get(zi, t);
        for &ui in coupling {
            if sys.units[ui].heat_zone() == Some(zone.as_str()) {
                residual -= h_all[ui];
            }
        }
        let mut heat_only: Vec<usize> = sys
            .units
            .iter()
            .enumerate()
            .filter(|(_, u)| {
                matches!(u, Unit::HeatOnly { .. }) && u.heat_zone() == Some(zone.as_str())
            })
            .map(|(i, _)| i)
            .collect();
        heat_only.sort_by(|&a, &b| {
            let ca = sys.units[a].heat_cost_at(t).unwrap_or(f64::INFINITY);
            let cb = sys.units[b].heat_cost_at(t).unwrap_or(f64::INFINITY);
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        });
        // Everyone starts at its minimum, the cheapest absorbs first.
        for &ui in &heat_only {
            let (hmin, _) = sys.units[ui].heat_bounds_at(t);
            h_all[ui] = hmin;
            residual -= hmin;
        }
        if residual < -1e-6 {
            return Ok(None);
        }
        for &ui in &heat_only {
            let (hmin, hmax) = sys.units[ui].heat_bounds_at(t);
            let add = residual.min(hmax - hmin);
            h_all[ui] += add;
            residual -= add;
            if residual <= 1e-9 {
                break;
            }
        }
        if residual > 1e-6 {
            return Ok(None);
        }
    }

    // Coupling bounds at this heat dispatch.
    let mut bounds = CouplingBounds::new();
    for &ui in coupling {
        let (emin, emax) = match &sys.units[ui] {
            Unit::Chp(chp) => match crate::sysmodel::chp_elec_bounds(h_all[ui], chp) {
                Ok(b) => b,
                Err(_) => return Ok(None),
            },
            Unit::HeatPump(hp) => match crate::sysmodel::hp_elec_bounds(h_all[ui], hp) {
                Ok(b) => b,
                Err(_) => return Ok(None),
            },
            _ => unreachable!(),
        };
        bounds.set(ui, t, emin, emax);
    }

    let follower = match markets::clear_follower(sys, &loads.elec, &bounds) {
        Ok(f) => f,
        Err(markets::MarketError::Infeasible { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };

    Ok(Some(markets::leader_objective(
        sys, &h_all, &follower, t,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{solve_lp, LpBuilder, LpStatus, Rel, Tolerances};

    #[test]
    fn oracle_matches_merit_order() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 100.0);
        let p = b.build();
        match lp_vertex_oracle(&p, &OracleConfig::default()).unwrap() {
            OracleLpOutcome::Optimal { obj, x } => {
                assert!((obj - 1200.0).abs() < 1e-9);
                assert!((x[0] - 80.0).abs() < 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn oracle_forced_point() {
        let p = LpProblem {
            c: vec![1.0],
            rows: vec![vec![1.0]],
            rhs: vec![1.0],
            lo: vec![0.0],
            hi: vec![2.0],
        };
        match lp_vertex_oracle(&p, &OracleConfig::default()).unwrap() {
            OracleLpOutcome::Optimal { obj, .. } => assert!((obj - 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oracle_detects_infeasible() {
        let mut b = LpBuilder::new();
        let ga = b.add_var(0.0, 80.0, 10.0);
        let gb = b.add_var(0.0, 50.0, 20.0);
        b.add_row(Rel::Eq, &[(ga, 1.0), (gb, 1.0)], 200.0);
        let p = b.build();
        assert_eq!(
            lp_vertex_oracle(&p, &OracleConfig::default()).unwrap(),
            OracleLpOutcome::Infeasible
        );
    }

    #[test]
    fn randomized_instances_match_solver() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5eed);
        let tol = Tolerances::default();
        for trial in 0..60 {
            let n = rng.random_range(2..=6);
            let m = rng.random_range(1..n);
            // Feasible by construction: b = A * x0 with x0 inside the box.
            let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..6.0)).collect();
            let x0: Vec<f64> = (0..n)
                .map(|j| rng.random_range(lo[j]..hi[j]))
                .collect();
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let rhs: Vec<f64> = rows
                .iter()
                .map(|r| r.iter().zip(&x0).map(|(a, b)| a * b).sum())
                .collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = LpProblem {
                c,
                rows,
                rhs,
                lo,
                hi,
            };
            let s = solve_lp(&p, &tol).unwrap();
            let o = lp_vertex_oracle(&p, &OracleConfig::default()).unwrap();
            match (s.status, o) {
                (LpStatus::Optimal, OracleLpOutcome::Optimal { obj, .. }) => {
                    assert!(
                        (s.obj - obj).abs() <= 1e-8 * (1.0 + obj.abs()),
                        "trial {trial}: solver {} vs oracle {obj}",
                        s.obj
                    );
                }
                (LpStatus::Infeasible, OracleLpOutcome::Infeasible) => {}
                (st, or) => panic!("trial {trial}: solver {st:?} vs oracle {or:?}"),
            }
        }
    }
}
