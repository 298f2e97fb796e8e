//! Operator-splitting engine for convex QPs in the form
//! `min ½x'Px + q'x  s.t.  l <= Mx <= u`, with an active-set KKT polish.

use crate::linalg::{dot, inf_norm, Mat};
use crate::scalar::Real;

use super::{QuadraticProgram, SolveError, SolveReport, Status, DEFAULT_MAX_ITER};

const CHECK_EVERY: usize = 25;
const RHO_UPDATE_EVERY: usize = 100;

struct Stacked<R> {
    m: Mat<R>,
    l: Vec<R>,
    u: Vec<R>,
    n_eq: usize,
    n_ineq: usize,
}

fn stack_constraints<R: Real>(qp: &QuadraticProgram<R>) -> Stacked<R> {
    let nvar = qp.linear.len();
    let mut rows: Vec<Vec<R>> = Vec::new();
    let mut l = Vec::new();
    let mut u = Vec::new();
    let n_eq = qp.constraints.n_eq();
    if let Some((a, b)) = &qp.constraints.eq {
        for i in 0..a.nrows() {
            rows.push(a.row(i).to_vec());
            l.push(b[i]);
            u.push(b[i]);
        }
    }
    let n_ineq = qp.constraints.n_ineq();
    if let Some((g, h)) = &qp.constraints.ineq {
        for i in 0..g.nrows() {
            rows.push(g.row(i).to_vec());
            l.push(R::neg_infinity());
            u.push(h[i]);
        }
    }
    for (j, &(lo, hi)) in qp.constraints.bounds.iter().enumerate() {
        if lo.is_finite() || hi.is_finite() {
            let mut row = vec![R::zero(); nvar];
            row[j] = R::one();
            rows.push(row);
            l.push(lo);
            u.push(hi);
        }
    }
    let m = if rows.is_empty() {
        Mat::zeros(0, nvar)
    } else {
        Mat::from_rows(rows)
    };
    Stacked {
        m,
        l,
        u,
        n_eq,
        n_ineq,
    }
}

fn grad<R: Real>(qp: &QuadraticProgram<R>, x: &[R]) -> Vec<R> {
    qp.quadratic
        .matvec(x)
        .iter()
        .zip(&qp.linear)
        .map(|(px, qi)| *px + *qi)
        .collect()
}

fn objective<R: Real>(qp: &QuadraticProgram<R>, x: &[R]) -> R {
    R::real(0.5) * qp.quadratic.quad_form(x) + dot(&qp.linear, x)
}

pub fn solve<R: Real>(qp: &QuadraticProgram<R>, tol: R) -> Result<SolveReport<R>, SolveError> {
    solve_with(qp, tol, DEFAULT_MAX_ITER)
}

pub fn solve_with<R: Real>(
    qp: &QuadraticProgram<R>,
    tol: R,
    max_iter: usize,
) -> Result<SolveReport<R>, SolveError> {
    let nvar = qp.linear.len();
    let stacked = stack_constraints(qp);
    if stacked.m.nrows() == 0 {
        return solve_unconstrained(qp);
    }

    let sigma = R::real(1e-6);
    let alpha = R::real(1.6);
    let mut rho = R::real(0.1);

    let nrow = stacked.m.nrows();
    let rho_vec = |rho: R| -> Vec<R> {
        (0..nrow)
            .map(|i| {
                if stacked.l[i] == stacked.u[i] {
                    rho * R::real(1e3)
                } else {
                    rho
                }
            })
            .collect()
    };

    let factorize = |rho_d: &[R]| -> Result<crate::linalg::Lu<R>, SolveError> {
        let mut k = match &qp.quadratic {
            super::QuadTerm::Diag(d) => {
                let mut k = Mat::zeros(nvar, nvar);
                for j in 0..nvar {
                    k.set(j, j, d[j] + sigma);
                }
                k
            }
            super::QuadTerm::Dense(p) => {
                let mut k = p.clone();
                for j in 0..nvar {
                    k.add_to(j, j, sigma);
                }
                k
            }
        };
        for i in 0..nrow {
            let row = stacked.m.row(i).to_vec();
            let ri = rho_d[i];
            for a in 0..nvar {
                if row[a] == R::zero() {
                    continue;
                }
                for b in 0..nvar {
                    if row[b] != R::zero() {
                        k.add_to(a, b, ri * row[a] * row[b]);
                    }
                }
            }
        }
        k.lu()
            .ok_or_else(|| SolveError::NumericalFailure("singular splitting system".into()))
    };

    let mut rho_d = rho_vec(rho);
    let mut kkt = factorize(&rho_d)?;

    let mut x = vec![R::zero(); nvar];
    let mut z: Vec<R> = stacked
        .l
        .iter()
        .zip(&stacked.u)
        .map(|(&lo, &hi)| clamp(R::zero(), lo, hi))
        .collect();
    let mut y = vec![R::zero(); nrow];

    let mut iterations = 0;
    let mut status = Status::MaxIter;
    let mut best: Option<(Vec<R>, Vec<R>, R, R)> = None;

    while iterations < max_iter {
        iterations += 1;
        let x_prev = x.clone();
        let y_prev = y.clone();

        // x-step: (P + sigma I + M' diag(rho) M) xt = sigma x - q + M'(rho z - y)
        let mut rhs = vec![R::zero(); nvar];
        for j in 0..nvar {
            rhs[j] = sigma * x[j] - qp.linear[j];
        }
        let w: Vec<R> = (0..nrow).map(|i| rho_d[i] * z[i] - y[i]).collect();
        let mtw = stacked.m.tr_matvec(&w);
        for j in 0..nvar {
            rhs[j] += mtw[j];
        }
        let xt = kkt.solve(&rhs);
        if xt.iter().any(|v| v.is_nan()) {
            return Err(SolveError::NumericalFailure("NaN in splitting step".into()));
        }
        let zt = stacked.m.matvec(&xt);

        for j in 0..nvar {
            x[j] = alpha * xt[j] + (R::one() - alpha) * x[j];
        }
        for i in 0..nrow {
            let zi = alpha * zt[i] + (R::one() - alpha) * z[i];
            let znew = clamp(zi + y[i] / rho_d[i], stacked.l[i], stacked.u[i]);
            y[i] += rho_d[i] * (zi - znew);
            z[i] = znew;
        }

        if iterations % CHECK_EVERY != 0 && iterations != max_iter {
            continue;
        }

        let mx = stacked.m.matvec(&x);
        let r_prim = inf_norm(
            &mx.iter()
                .zip(&z)
                .map(|(a, b)| *a - *b)
                .collect::<Vec<_>>(),
        );
        let g = grad(qp, &x);
        let mty = stacked.m.tr_matvec(&y);
        let r_dual = inf_norm(
            &g.iter()
                .zip(&mty)
                .map(|(a, b)| *a + *b)
                .collect::<Vec<_>>(),
        );

        if best
            .as_ref()
            .map_or(true, |(_, _, bp, bd)| r_prim.max(r_dual) < bp.max(*bd))
        {
            best = Some((x.clone(), y.clone(), r_prim, r_dual));
        }

        if r_prim <= tol && r_dual <= tol {
            status = Status::Optimal;
            break;
        }

        // Try to finish early with a polish once in the neighbourhood.
        if r_prim.max(r_dual) <= R::real(1e-4) || iterations % 500 == 0 {
            if let Some((px, py, pp, pd)) = polish(qp, &stacked, &y, tol) {
                x = px;
                y = py;
                best = Some((x.clone(), y.clone(), pp, pd));
                status = Status::Optimal;
                break;
            }
        }

        // Infeasibility certificates.
        let dy: Vec<R> = y.iter().zip(&y_prev).map(|(a, b)| *a - *b).collect();
        let dx: Vec<R> = x.iter().zip(&x_prev).map(|(a, b)| *a - *b).collect();
        let eps_inf = R::real(1e-7);
        let ndy = inf_norm(&dy);
        if ndy > R::real(1e-12) {
            let mtdy = inf_norm(&stacked.m.tr_matvec(&dy));
            if mtdy <= eps_inf * ndy {
                let mut support = R::zero();
                let mut valid = true;
                for i in 0..nrow {
                    if dy[i] > eps_inf * ndy {
                        if stacked.u[i].is_finite() {
                            support += stacked.u[i] * dy[i];
                        } else {
                            valid = false;
                        }
                    } else if dy[i] < -eps_inf * ndy {
                        if stacked.l[i].is_finite() {
                            support += stacked.l[i] * dy[i];
                        } else {
                            valid = false;
                        }
                    }
                }
                if valid && support < -eps_inf * ndy {
                    status = Status::Infeasible;
                    break;
                }
            }
        }
        let ndx = inf_norm(&dx);
        if ndx > R::real(1e-12) {
            let pdx = inf_norm(&qp.quadratic.matvec(&dx));
            let qdx = dot(&qp.linear, &dx);
            if pdx <= eps_inf * ndx && qdx < -eps_inf * ndx {
                let mdx = stacked.m.matvec(&dx);
                let ok = (0..nrow).all(|i| {
                    (!stacked.u[i].is_finite() || mdx[i] <= eps_inf * ndx)
                        && (!stacked.l[i].is_finite() || mdx[i] >= -eps_inf * ndx)
                });
                if ok {
                    status = Status::Unbounded;
                    break;
                }
            }
        }

        if iterations % RHO_UPDATE_EVERY == 0 {
            let scale_p = inf_norm(&mx).max(inf_norm(&z)).max(R::one());
            let scale_d = inf_norm(&g).max(inf_norm(&mty)).max(R::one());
            let ratio = ((r_prim / scale_p) / (r_dual / scale_d).max(R::real(1e-30))).sqrt();
            let new_rho = clamp(rho * ratio, R::real(1e-6), R::real(1e6));
            if new_rho > rho * R::real(5.0) || new_rho < rho / R::real(5.0) {
                rho = new_rho;
                rho_d = rho_vec(rho);
                kkt = factorize(&rho_d)?;
            }
        }
    }

    if status == Status::MaxIter {
        // Final polish attempt from the best iterate seen.
        if let Some((_, by, _, _)) = &best {
            if let Some((px, py, pp, pd)) = polish(qp, &stacked, by, tol) {
                best = Some((px, py, pp, pd));
                status = Status::Optimal;
            }
        }
    }

    let (x, y, r_prim, r_dual) = best.unwrap_or((x, y, R::infinity(), R::infinity()));
    let (eq_duals, ineq_duals) = split_duals(&stacked, &y);
    Ok(SolveReport {
        objective: objective(qp, &x),
        status,
        x,
        eq_duals,
        ineq_duals,
        max_primal_residual: r_prim,
        max_dual_residual: r_dual,
        iterations,
    })
}

fn split_duals<R: Real>(stacked: &Stacked<R>, y: &[R]) -> (Vec<R>, Vec<R>) {
    let eq = y[..stacked.n_eq].to_vec();
    let ineq = y[stacked.n_eq..stacked.n_eq + stacked.n_ineq].to_vec();
    (eq, ineq)
}

fn clamp<R: Real>(v: R, lo: R, hi: R) -> R {
    v.max(lo).min(hi)
}

/// Solve the KKT system restricted to the active set, with regularization
/// and iterative refinement. Returns `(x, y, r_prim, r_dual)` when the
/// polished point meets the tolerance.
fn polish<R: Real>(
    qp: &QuadraticProgram<R>,
    stacked: &Stacked<R>,
    y: &[R],
    tol: R,
) -> Option<(Vec<R>, Vec<R>, R, R)> {
    let nvar = qp.linear.len();
    let nrow = stacked.m.nrows();
    let ytol = R::real(1e-9) * (R::one() + inf_norm(y));

    #[derive(Clone, Copy, PartialEq)]
    enum Side {
        Lower,
        Upper,
    }
    let mut active: Vec<(usize, Side)> = Vec::new();
    for i in 0..nrow {
        if stacked.l[i] == stacked.u[i] {
            active.push((i, Side::Upper));
        } else if y[i] > ytol && stacked.u[i].is_finite() {
            active.push((i, Side::Upper));
        } else if y[i] < -ytol && stacked.l[i].is_finite() {
            active.push((i, Side::Lower));
        }
    }
    let na = active.len();
    let dim = nvar + na;
    let delta = R::real(1e-9);

    let mut k_reg = Mat::zeros(dim, dim);
    match &qp.quadratic {
        super::QuadTerm::Diag(d) => {
            for j in 0..nvar {
                k_reg.set(j, j, d[j] + delta);
            }
        }
        super::QuadTerm::Dense(p) => {
            for a in 0..nvar {
                for b in 0..nvar {
                    k_reg.set(a, b, p.get(a, b));
                }
                k_reg.add_to(a, a, delta);
            }
        }
    }
    for (t, &(i, _)) in active.iter().enumerate() {
        let row = stacked.m.row(i);
        for j in 0..nvar {
            k_reg.set(nvar + t, j, row[j]);
            k_reg.set(j, nvar + t, row[j]);
        }
        k_reg.set(nvar + t, nvar + t, -delta);
    }
    let lu = k_reg.lu()?;

    let mut rhs = vec![R::zero(); dim];
    for j in 0..nvar {
        rhs[j] = -qp.linear[j];
    }
    for (t, &(i, side)) in active.iter().enumerate() {
        rhs[nvar + t] = match side {
            Side::Lower => stacked.l[i],
            Side::Upper => stacked.u[i],
        };
    }

    // Unregularized KKT apply, for iterative refinement.
    let apply_k0 = |sol: &[R]| -> Vec<R> {
        let x = &sol[..nvar];
        let nu = &sol[nvar..];
        let mut out = vec![R::zero(); dim];
        let px = qp.quadratic.matvec(x);
        for j in 0..nvar {
            out[j] = px[j];
        }
        for (t, &(i, _)) in active.iter().enumerate() {
            let row = stacked.m.row(i);
            for j in 0..nvar {
                out[j] += row[j] * nu[t];
                out[nvar + t] += row[j] * x[j];
            }
        }
        out
    };

    let mut sol = lu.solve(&rhs);
    for _ in 0..3 {
        let k0s = apply_k0(&sol);
        let resid: Vec<R> = rhs.iter().zip(&k0s).map(|(r, k)| *r - *k).collect();
        let d = lu.solve(&resid);
        for (s, di) in sol.iter_mut().zip(&d) {
            *s += *di;
        }
    }
    if sol.iter().any(|v| v.is_nan()) {
        return None;
    }

    let x: Vec<R> = sol[..nvar].to_vec();
    let mut y_pol = vec![R::zero(); nrow];
    for (t, &(i, _)) in active.iter().enumerate() {
        y_pol[i] = sol[nvar + t];
    }

    // Residuals against the full constraint set.
    let mx = stacked.m.matvec(&x);
    let mut r_prim = R::zero();
    for i in 0..nrow {
        let over = (mx[i] - stacked.u[i]).max(R::zero());
        let under = (stacked.l[i] - mx[i]).max(R::zero());
        r_prim = r_prim.max(over).max(under);
    }
    // Dual feasibility of the multipliers (signs must match bound sides).
    for i in 0..nrow {
        if stacked.l[i] == stacked.u[i] {
            continue;
        }
        if y_pol[i] > R::zero() && !stacked.u[i].is_finite() {
            return None;
        }
        if y_pol[i] < R::zero() && !stacked.l[i].is_finite() {
            return None;
        }
    }
    let g = grad(qp, &x);
    let mty = stacked.m.tr_matvec(&y_pol);
    let r_dual = inf_norm(
        &g.iter()
            .zip(&mty)
            .map(|(a, b)| *a + *b)
            .collect::<Vec<_>>(),
    );

    if r_prim <= tol && r_dual <= tol {
        Some((x, y_pol, r_prim, r_dual))
    } else {
        None
    }
}

fn solve_unconstrained<R: Real>(qp: &QuadraticProgram<R>) -> Result<SolveReport<R>, SolveError> {
    let nvar = qp.linear.len();
    match &qp.quadratic {
        super::QuadTerm::Diag(d) => {
            let mut x = vec![R::zero(); nvar];
            for j in 0..nvar {
                if d[j] > R::zero() {
                    x[j] = -qp.linear[j] / d[j];
                } else if qp.linear[j] != R::zero() {
                    return Ok(SolveReport {
                        status: Status::Unbounded,
                        x,
                        eq_duals: vec![],
                        ineq_duals: vec![],
                        objective: R::neg_infinity(),
                        max_primal_residual: R::zero(),
                        max_dual_residual: R::infinity(),
                        iterations: 0,
                    });
                }
            }
            Ok(SolveReport {
                objective: objective(qp, &x),
                status: Status::Optimal,
                x,
                eq_duals: vec![],
                ineq_duals: vec![],
                max_primal_residual: R::zero(),
                max_dual_residual: R::zero(),
                iterations: 0,
            })
        }
        super::QuadTerm::Dense(p) => {
            let lu = p
                .lu()
                .ok_or_else(|| SolveError::NumericalFailure("singular Hessian".into()))?;
            let x = lu.solve(&qp.linear.iter().map(|v| -*v).collect::<Vec<_>>());
            Ok(SolveReport {
                objective: objective(qp, &x),
                status: Status::Optimal,
                x,
                eq_duals: vec![],
                ineq_duals: vec![],
                max_primal_residual: R::zero(),
                max_dual_residual: R::zero(),
                iterations: 0,
            })
        }
    }
}
