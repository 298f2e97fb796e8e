//! Two-phase dense simplex with Bland's rule, used as the exact fallback
//! for degenerate or non-converging LPs.

use crate::scalar::Real;

use super::{LinearProgram, SolveError, SolveReport, Status};

const PIV_TOL: f64 = 1e-9;

enum VarMap {
    /// `x = off + v`
    Shift { v: usize, off: f64 },
    /// `x = off - v`
    Neg { v: usize, off: f64 },
    /// `x = v_plus - v_minus`
    Split { plus: usize, minus: usize },
}

struct Tableau {
    /// rows x (cols + 1); last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let prow = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f.abs() > 0.0 {
                for (v, pv) in r.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule iteration for `min cost'v`. Returns `None` when
    /// optimal, or the unbounded entering column.
    fn run(&mut self, cost: &[f64], forbidden: &[bool]) -> Result<(), usize> {
        loop {
            // Reduced costs via the basic cost multipliers.
            let mut z = vec![0.0; self.ncols];
            for (i, &bi) in self.basis.iter().enumerate() {
                let cb = cost[bi];
                if cb != 0.0 {
                    for j in 0..self.ncols {
                        z[j] += cb * self.t[i][j];
                    }
                }
            }
            let entering = (0..self.ncols)
                .find(|&j| !forbidden[j] && cost[j] - z[j] < -PIV_TOL && !self.is_basic(j));
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][col];
                if a > PIV_TOL {
                    let ratio = self.t[i][self.ncols] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - PIV_TOL
                                || (ratio < lr + PIV_TOL && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return Err(col),
            }
        }
    }

    fn is_basic(&self, j: usize) -> bool {
        self.basis.contains(&j)
    }
}

pub fn solve<R: Real>(lp: &LinearProgram<R>, tol: R) -> Result<SolveReport<R>, SolveError> {
    let nvar = lp.objective.len();
    let q: Vec<f64> = lp.objective.iter().map(|v| v.to_f64_lossy()).collect();
    let bounds: Vec<(f64, f64)> = if lp.constraints.bounds.is_empty() {
        vec![(f64::NEG_INFINITY, f64::INFINITY); nvar]
    } else {
        lp.constraints
            .bounds
            .iter()
            .map(|(l, u)| (l.to_f64_lossy(), u.to_f64_lossy()))
            .collect()
    };

    // Variable substitution to v >= 0.
    let mut maps = Vec::with_capacity(nvar);
    let mut nv = 0usize;
    for &(lo, hi) in &bounds {
        if lo.is_finite() {
            maps.push(VarMap::Shift { v: nv, off: lo });
            nv += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Neg { v: nv, off: hi });
            nv += 1;
        } else {
            maps.push(VarMap::Split {
                plus: nv,
                minus: nv + 1,
            });
            nv += 2;
        }
    }

    // Structural rows: eq rows, ineq rows (with slack), finite-range rows.
    struct Row {
        coeffs: Vec<f64>,
        rhs: f64,
        slack: bool,
        kind: RowKind,
    }
    #[derive(Clone, Copy, PartialEq)]
    enum RowKind {
        Eq(usize),
        Ineq(usize),
        Range,
    }
    let mut rows: Vec<Row> = Vec::new();
    let substitute = |coeffs_x: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut c = vec![0.0; nv];
        let mut r = rhs;
        for (j, &a) in coeffs_x.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { v, off } => {
                    c[v] += a;
                    r -= a * off;
                }
                VarMap::Neg { v, off } => {
                    c[v] -= a;
                    r -= a * off;
                }
                VarMap::Split { plus, minus } => {
                    c[plus] += a;
                    c[minus] -= a;
                }
            }
        }
        (c, r)
    };

    if let Some((a, b)) = &lp.constraints.eq {
        for i in 0..a.nrows() {
            let coeffs: Vec<f64> = a.row(i).iter().map(|v| v.to_f64_lossy()).collect();
            let (c, r) = substitute(&coeffs, b[i].to_f64_lossy());
            rows.push(Row {
                coeffs: c,
                rhs: r,
                slack: false,
                kind: RowKind::Eq(i),
            });
        }
    }
    if let Some((g, h)) = &lp.constraints.ineq {
        for i in 0..g.nrows() {
            let coeffs: Vec<f64> = g.row(i).iter().map(|v| v.to_f64_lossy()).collect();
            let (c, r) = substitute(&coeffs, h[i].to_f64_lossy());
            rows.push(Row {
                coeffs: c,
                rhs: r,
                slack: true,
                kind: RowKind::Ineq(i),
            });
        }
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if lo.is_finite() && hi.is_finite() {
            let mut coeffs = vec![0.0; nvar];
            coeffs[j] = 1.0;
            let (c, r) = substitute(&coeffs, hi);
            rows.push(Row {
                coeffs: c,
                rhs: r,
                slack: true,
                kind: RowKind::Range,
            });
        }
    }

    let nrow = rows.len();
    let n_slack = rows.iter().filter(|r| r.slack).count();
    let ncols = nv + n_slack + nrow; // structural + slack + artificial
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(nrow);
    let mut signs = vec![1.0; nrow];
    let mut slack_col = vec![usize::MAX; nrow];
    let mut s_idx = nv;
    for (i, row) in rows.iter().enumerate() {
        let mut r = vec![0.0; ncols + 1];
        let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        signs[i] = sign;
        for (j, &a) in row.coeffs.iter().enumerate() {
            r[j] = sign * a;
        }
        if row.slack {
            r[s_idx] = sign;
            slack_col[i] = s_idx;
            s_idx += 1;
        }
        r[nv + n_slack + i] = 1.0; // artificial
        r[ncols] = sign * row.rhs;
        t.push(r);
    }

    let mut tab = Tableau {
        t,
        basis: (0..nrow).map(|i| nv + n_slack + i).collect(),
        ncols,
    };

    // Phase 1.
    let mut phase1_cost = vec![0.0; ncols];
    for j in nv + n_slack..ncols {
        phase1_cost[j] = 1.0;
    }
    let forbidden = vec![false; ncols];
    if tab.run(&phase1_cost, &forbidden).is_err() {
        return Err(SolveError::NumericalFailure(
            "phase-1 unbounded (should not happen)".into(),
        ));
    }
    let phase1_obj: f64 = tab
        .basis
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b >= nv + n_slack {
                tab.t[i][ncols]
            } else {
                0.0
            }
        })
        .sum();
    if phase1_obj > 1e-7 {
        return Ok(status_only(Status::Infeasible, nvar, lp));
    }

    // Pivot remaining zero-level artificials out where possible.
    for i in 0..nrow {
        if tab.basis[i] >= nv + n_slack {
            if let Some(col) = (0..nv + n_slack).find(|&j| tab.t[i][j].abs() > 1e-7) {
                tab.pivot(i, col);
            }
        }
    }

    // Phase 2: forbid artificials.
    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        match *map {
            VarMap::Shift { v, .. } => cost[v] += q[j],
            VarMap::Neg { v, .. } => cost[v] -= q[j],
            VarMap::Split { plus, minus } => {
                cost[plus] += q[j];
                cost[minus] -= q[j];
            }
        }
    }
    let mut forbidden = vec![false; ncols];
    for f in forbidden.iter_mut().skip(nv + n_slack) {
        *f = true;
    }
    if tab.run(&cost, &forbidden).is_err() {
        return Ok(status_only(Status::Unbounded, nvar, lp));
    }

    // Recover primal x.
    let mut v = vec![0.0; ncols];
    for (i, &b) in tab.basis.iter().enumerate() {
        v[b] = tab.t[i][ncols];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift { v: j, off } => off + v[j],
            VarMap::Neg { v: j, off } => off - v[j],
            VarMap::Split { plus, minus } => v[plus] - v[minus],
        })
        .collect();

    // Duals: simplex multipliers z_j for the artificial columns equal
    // (c_B' B^{-1}) per row; map back through the row sign flips.
    let mut multipliers = vec![0.0; nrow];
    for (i, &b) in tab.basis.iter().enumerate() {
        let cb = cost[b];
        if cb != 0.0 {
            for (r, m) in multipliers.iter_mut().enumerate() {
                *m += cb * tab.t[i][nv + n_slack + r];
            }
        }
    }
    let n_eq = lp.constraints.n_eq();
    let n_ineq = lp.constraints.n_ineq();
    let mut eq_duals = vec![R::zero(); n_eq];
    let mut ineq_duals = vec![R::zero(); n_ineq];
    for (i, row) in rows.iter().enumerate() {
        let y = -signs[i] * multipliers[i];
        match row.kind {
            RowKind::Eq(k) => eq_duals[k] = R::real(y),
            RowKind::Ineq(k) => ineq_duals[k] = R::real(y.max(0.0)),
            RowKind::Range => {}
        }
    }

    let xr: Vec<R> = x.iter().map(|&v| R::real(v)).collect();
    let objective = x.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
    let (rp, rd) = residuals(lp, &xr, &eq_duals, &ineq_duals);
    let status = if rp <= tol && rd <= tol.max(R::real(1e-7)) {
        Status::Optimal
    } else {
        Status::MaxIter
    };
    Ok(SolveReport {
        status,
        x: xr,
        eq_duals,
        ineq_duals,
        objective: R::real(objective),
        max_primal_residual: rp,
        max_dual_residual: rd,
        iterations: 0,
    })
}

fn status_only<R: Real>(status: Status, nvar: usize, _lp: &LinearProgram<R>) -> SolveReport<R> {
    SolveReport {
        status,
        x: vec![R::zero(); nvar],
        eq_duals: vec![],
        ineq_duals: vec![],
        objective: R::zero(),
        max_primal_residual: R::infinity(),
        max_dual_residual: R::infinity(),
        iterations: 0,
    }
}

fn residuals<R: Real>(
    lp: &LinearProgram<R>,
    x: &[R],
    eq_duals: &[R],
    ineq_duals: &[R],
) -> (R, R) {
    let mut rp = R::zero();
    if let Some((a, b)) = &lp.constraints.eq {
        let ax = a.matvec(x);
        for (v, bi) in ax.iter().zip(b) {
            rp = rp.max((*v - *bi).abs());
        }
    }
    if let Some((g, h)) = &lp.constraints.ineq {
        let gx = g.matvec(x);
        for (v, hi) in gx.iter().zip(h) {
            rp = rp.max((*v - *hi).max(R::zero()));
        }
    }
    for (j, (lo, hi)) in lp.constraints.bounds.iter().enumerate() {
        rp = rp.max((*lo - x[j]).max(R::zero()));
        rp = rp.max((x[j] - *hi).max(R::zero()));
    }
    // Dual residual: stationarity projected onto the box (bound
    // multipliers are implicit in the reduced costs).
    let mut r = lp.objective.clone();
    if let Some((a, _)) = &lp.constraints.eq {
        let aty = a.tr_matvec(eq_duals);
        for (ri, v) in r.iter_mut().zip(&aty) {
            *ri += *v;
        }
    }
    if let Some((g, _)) = &lp.constraints.ineq {
        let gty = g.tr_matvec(ineq_duals);
        for (ri, v) in r.iter_mut().zip(&gty) {
            *ri += *v;
        }
    }
    let bounds = if lp.constraints.bounds.is_empty() {
        vec![(R::neg_infinity(), R::infinity()); x.len()]
    } else {
        lp.constraints.bounds.clone()
    };
    let tol_at = R::real(1e-9);
    let mut rd = R::zero();
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let at_lo = x[j] - lo <= tol_at * (R::one() + lo.abs());
        let at_hi = hi - x[j] <= tol_at * (R::one() + hi.abs());
        if at_lo && r[j] >= R::zero() {
            continue; // bound multiplier absorbs positive reduced cost
        }
        if at_hi && r[j] <= R::zero() {
            continue;
        }
        rd = rd.max(r[j].abs());
    }
    (rp, rd)
}

/// Certified duality gap for an LP report: primal objective minus the
/// Lagrangian dual objective at the reported multipliers.
pub fn duality_gap<R: Real>(lp: &LinearProgram<R>, report: &SolveReport<R>) -> R {
    let nvar = lp.objective.len();
    let mut r = lp.objective.clone();
    let mut dual_obj = R::zero();
    if let Some((a, b)) = &lp.constraints.eq {
        let aty = a.tr_matvec(&report.eq_duals);
        for (ri, v) in r.iter_mut().zip(&aty) {
            *ri += *v;
        }
        for (yi, bi) in report.eq_duals.iter().zip(b) {
            dual_obj -= *yi * *bi;
        }
    }
    if let Some((g, h)) = &lp.constraints.ineq {
        let lam: Vec<R> = report.ineq_duals.iter().map(|v| v.max(R::zero())).collect();
        let gty = g.tr_matvec(&lam);
        for (ri, v) in r.iter_mut().zip(&gty) {
            *ri += *v;
        }
        for (li, hi) in lam.iter().zip(h) {
            dual_obj -= *li * *hi;
        }
    }
    let bounds = if lp.constraints.bounds.is_empty() {
        vec![(R::neg_infinity(), R::infinity()); nvar]
    } else {
        lp.constraints.bounds.clone()
    };
    let noise = R::real(1e-9);
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let rj = if r[j].abs() <= noise { R::zero() } else { r[j] };
        let lo_term = if rj > R::zero() {
            rj * lo
        } else if rj < R::zero() {
            rj * hi
        } else {
            R::zero()
        };
        if !lo_term.is_finite() && lo_term != R::zero() {
            return R::infinity(); // multipliers are not a certificate
        }
        dual_obj += lo_term;
    }
    let primal = crate::linalg::dot(&lp.objective, &report.x);
    (primal - dual_obj).abs() / (R::one() + primal.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::solver::Constraints;

    #[test]
    fn equality_lp() {
        // min x + y s.t. x + y = 2, x,y in [0, 5] -> objective 2
        let lp: LinearProgram<f64> = LinearProgram {
            objective: vec![1.0, 1.0],
            constraints: Constraints {
                eq: Some((Mat::from_rows(vec![vec![1.0, 1.0]]), vec![2.0])),
                ineq: None,
                bounds: vec![(0.0, 5.0), (0.0, 5.0)],
            },
        };
        let r = solve(&lp, 1e-8).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-9);
        assert!(duality_gap(&lp, &r) < 1e-8);
    }

    #[test]
    fn ineq_lp_with_negative_costs() {
        // min -x - 2y s.t. x + y <= 4, x <= 3, y <= 3, x,y >= 0
        let lp: LinearProgram<f64> = LinearProgram {
            objective: vec![-1.0, -2.0],
            constraints: Constraints {
                eq: None,
                ineq: Some((Mat::from_rows(vec![vec![1.0, 1.0]]), vec![4.0])),
                bounds: vec![(0.0, 3.0), (0.0, 3.0)],
            },
        };
        let r = solve(&lp, 1e-8).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective - (-7.0)).abs() < 1e-9);
        assert!((r.x[0] - 1.0).abs() < 1e-9);
        assert!((r.x[1] - 3.0).abs() < 1e-9);
        assert!(duality_gap(&lp, &r) < 1e-8);
    }

    #[test]
    fn free_variable_lp() {
        // min x s.t. x >= -7 via inequality on a free variable.
        let lp = LinearProgram {
            objective: vec![1.0],
            constraints: Constraints {
                eq: None,
                ineq: Some((Mat::from_rows(vec![vec![-1.0]]), vec![7.0])),
                bounds: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            },
        };
        let r = solve(&lp, 1e-8).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.x[0] + 7.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_lp() {
        let lp = LinearProgram {
            objective: vec![0.0],
            constraints: Constraints {
                eq: Some((Mat::from_rows(vec![vec![1.0]]), vec![2.0])),
                ineq: None,
                bounds: vec![(0.0, 1.0)],
            },
        };
        let r = solve(&lp, 1e-8).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn unbounded_lp() {
        let lp = LinearProgram {
            objective: vec![-1.0],
            constraints: Constraints {
                eq: None,
                ineq: None,
                bounds: vec![(0.0, f64::INFINITY)],
            },
        };
        let r = solve(&lp, 1e-8).unwrap();
        assert_eq!(r.status, Status::Unbounded);
    }
}
