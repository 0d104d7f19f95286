//! Dense two-phase simplex solver.
//!
//! Deterministic by construction: fixed scan orders, Dantzig pricing with a
//! permanent switch to Bland's rule after a degenerate stall, smallest-index
//! tie breaking in the ratio test. Sized for the desk-scale transport and
//! min-max programs of this crate (hundreds of rows, thousands of columns).

use crate::error::{Error, Result};

/// Feasibility tolerance: phase-1 mass above this is reported infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-10;
const REDUCED_COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-11;
const STALL_LIMIT: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
}

/// One constraint row, with sparse structural coefficients.
#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub kind: RowKind,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Values of the structural variables.
    pub x: Vec<f64>,
    /// Objective recomputed as cᵀx from the returned point.
    pub objective: f64,
}

/// Minimize `costs · x` subject to `rows` and `x ≥ 0`.
pub fn solve_lp(ncols: usize, costs: &[f64], rows: &[LpRow]) -> Result<LpSolution> {
    assert_eq!(costs.len(), ncols);
    let m = rows.len();

    // Column layout: structural | slacks | artificials.
    let nslack = rows.iter().filter(|r| r.kind == RowKind::Le).count();
    let mut art_rows: Vec<usize> = Vec::new();

    // First pass: sign-normalize and decide which rows need artificials.
    // A Le row keeps its +1 slack as the initial basic variable only when
    // its rhs was already non-negative.
    let mut a = vec![vec![0.0f64; ncols + nslack]; m];
    let mut b = vec![0.0f64; m];
    let mut basis = vec![usize::MAX; m];
    let mut slack_idx = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let flip = row.rhs < 0.0;
        let s = if flip { -1.0 } else { 1.0 };
        for &(j, v) in &row.coeffs {
            assert!(j < ncols, "coefficient column out of range");
            a[i][j] += s * v;
        }
        b[i] = s * row.rhs;
        if row.kind == RowKind::Le {
            a[i][ncols + slack_idx] = s;
            if !flip {
                basis[i] = ncols + slack_idx;
            }
            slack_idx += 1;
        }
        if basis[i] == usize::MAX {
            art_rows.push(i);
        }
    }

    let nart = art_rows.len();
    let total = ncols + nslack + nart;
    // Tableau: m rows of [coefficients | rhs].
    let width = total + 1;
    let mut t = vec![0.0f64; m * width];
    for i in 0..m {
        t[i * width..i * width + ncols + nslack].copy_from_slice(&a[i]);
        t[i * width + total] = b[i];
    }
    for (k, &i) in art_rows.iter().enumerate() {
        t[i * width + ncols + nslack + k] = 1.0;
        basis[i] = ncols + nslack + k;
    }
    drop(a);

    // Phase 1: minimize the artificial mass.
    if nart > 0 {
        let mut phase1 = vec![0.0f64; total];
        for k in 0..nart {
            phase1[ncols + nslack + k] = 1.0;
        }
        let allowed = vec![true; total];
        run_simplex(&mut t, &mut basis, m, width, &phase1, &allowed)?;
        let infeas: f64 = (0..m)
            .filter(|&i| basis[i] >= ncols + nslack)
            .map(|i| t[i * width + total])
            .sum();
        if infeas > FEASIBILITY_TOL {
            return Err(Error::Infeasible { residual: infeas });
        }
        // Pivot remaining zero-level artificials out, or drop their rows.
        let mut drop_rows = Vec::new();
        for i in 0..m {
            if basis[i] < ncols + nslack {
                continue;
            }
            let mut pivoted = false;
            for j in 0..ncols + nslack {
                if t[i * width + j].abs() > PIVOT_TOL {
                    pivot(&mut t, &mut basis, m, width, i, j);
                    pivoted = true;
                    break;
                }
            }
            if !pivoted {
                drop_rows.push(i);
            }
        }
        if !drop_rows.is_empty() {
            let mut keep = Vec::with_capacity(m - drop_rows.len());
            for i in 0..m {
                if !drop_rows.contains(&i) {
                    keep.push(i);
                }
            }
            let mut nt = vec![0.0f64; keep.len() * width];
            let mut nb = Vec::with_capacity(keep.len());
            for (ni, &i) in keep.iter().enumerate() {
                nt[ni * width..(ni + 1) * width].copy_from_slice(&t[i * width..(i + 1) * width]);
                nb.push(basis[i]);
            }
            t = nt;
            basis = nb;
        }
    }

    // Phase 2: artificials are barred from re-entering.
    let m = basis.len();
    let mut full_costs = vec![0.0f64; total];
    full_costs[..ncols].copy_from_slice(costs);
    let mut allowed = vec![true; total];
    for j in ncols + nslack..total {
        allowed[j] = false;
    }
    run_simplex(&mut t, &mut basis, m, width, &full_costs, &allowed)?;

    let mut x = vec![0.0f64; ncols];
    for i in 0..m {
        if basis[i] < ncols {
            x[basis[i]] = t[i * width + total].max(0.0);
        }
    }
    let objective = x.iter().zip(costs).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution { x, objective })
}

/// Run the simplex to optimality for the given costs on the current basis.
fn run_simplex(
    t: &mut [f64],
    basis: &mut [usize],
    m: usize,
    width: usize,
    costs: &[f64],
    allowed: &[bool],
) -> Result<()> {
    let total = width - 1;
    // Reduced-cost row, rebuilt from the basis and updated per pivot.
    let mut z = vec![0.0f64; width];
    z[..total].copy_from_slice(costs);
    for i in 0..m {
        let cb = costs[basis[i]];
        if cb != 0.0 {
            for j in 0..width {
                z[j] -= cb * t[i * width + j];
            }
        }
    }

    let mut bland = false;
    let mut stall = 0usize;
    let mut last_obj = f64::INFINITY;
    loop {
        // Entering column.
        let mut enter = None;
        if bland {
            for j in 0..total {
                if allowed[j] && z[j] < -REDUCED_COST_TOL {
                    enter = Some(j);
                    break;
                }
            }
        } else {
            let mut best = -REDUCED_COST_TOL;
            for j in 0..total {
                if allowed[j] && z[j] < best {
                    best = z[j];
                    enter = Some(j);
                }
            }
        }
        let Some(enter) = enter else {
            return Ok(());
        };

        // Ratio test; ties resolved toward the smallest basis index.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let aij = t[i * width + enter];
            if aij > PIVOT_TOL {
                let ratio = t[i * width + total] / aij;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best_ratio - 1e-12
                            || (ratio < best_ratio + 1e-12 && basis[i] < basis[l])
                    }
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(Error::Unbounded);
        };

        pivot_with_z(t, basis, m, width, leave, enter, &mut z);

        let obj = -z[total];
        if obj >= last_obj - 1e-13 {
            stall += 1;
            if stall > STALL_LIMIT {
                bland = true;
            }
        } else {
            stall = 0;
        }
        last_obj = obj;
    }
}

fn pivot(t: &mut [f64], basis: &mut [usize], m: usize, width: usize, row: usize, col: usize) {
    let piv = t[row * width + col];
    debug_assert!(piv.abs() > 0.0);
    let inv = 1.0 / piv;
    for j in 0..width {
        t[row * width + j] *= inv;
    }
    t[row * width + col] = 1.0;
    for i in 0..m {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f != 0.0 {
            for j in 0..width {
                t[i * width + j] -= f * t[row * width + j];
            }
            t[i * width + col] = 0.0;
        }
    }
    basis[row] = col;
}

fn pivot_with_z(
    t: &mut [f64],
    basis: &mut [usize],
    m: usize,
    width: usize,
    row: usize,
    col: usize,
    z: &mut [f64],
) {
    pivot(t, basis, m, width, row, col);
    let f = z[col];
    if f != 0.0 {
        for j in 0..width {
            z[j] -= f * t[row * width + j];
        }
        z[col] = 0.0;
    }
}

/// Exact transport program: minimize Σ γ_ij c(i,j) over couplings of
/// `supply` and `demand`. Returns the optimum and the support of an optimal
/// plan. Total masses must agree to 1e-9.
pub fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    mut cost: impl FnMut(usize, usize) -> f64,
) -> Result<(f64, Vec<(usize, usize, f64)>)> {
    let ns = supply.len();
    let nd = demand.len();
    if ns == 0 || nd == 0 {
        return Err(Error::EmptySet { what: "transport support" });
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if (total_s - total_d).abs() > 1e-9 {
        return Err(Error::MarginalMismatch {
            defect: (total_s - total_d).abs(),
        });
    }

    let ncols = ns * nd;
    let mut costs = vec![0.0f64; ncols];
    for i in 0..ns {
        for j in 0..nd {
            costs[i * nd + j] = cost(i, j);
        }
    }
    let mut rows = Vec::with_capacity(ns + nd - 1);
    for (i, &s) in supply.iter().enumerate() {
        let coeffs = (0..nd).map(|j| (i * nd + j, 1.0)).collect();
        rows.push(LpRow {
            coeffs,
            rhs: s,
            kind: RowKind::Eq,
        });
    }
    // The last demand row is implied by the others and the supply rows.
    for (j, &d) in demand.iter().enumerate().take(nd - 1) {
        let coeffs = (0..ns).map(|i| (i * nd + j, 1.0)).collect();
        rows.push(LpRow {
            coeffs,
            rhs: d,
            kind: RowKind::Eq,
        });
    }

    let sol = solve_lp(ncols, &costs, &rows)?;
    let mut plan = Vec::new();
    for i in 0..ns {
        for j in 0..nd {
            let v = sol.x[i * nd + j];
            if v > 1e-12 {
                plan.push((i, j, v));
            }
        }
    }
    Ok((sol.objective, plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_basic_lp() {
        // min -x - 2y  s.t. x + y <= 4, y <= 3, x,y >= 0  -> (1, 3), obj -7
        let rows = vec![
            LpRow {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                rhs: 4.0,
                kind: RowKind::Le,
            },
            LpRow {
                coeffs: vec![(1, 1.0)],
                rhs: 3.0,
                kind: RowKind::Le,
            },
        ];
        let sol = solve_lp(2, &[-1.0, -2.0], &rows).unwrap();
        assert!((sol.objective + 7.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        // x <= 1 and x = 3
        let rows = vec![
            LpRow {
                coeffs: vec![(0, 1.0)],
                rhs: 1.0,
                kind: RowKind::Le,
            },
            LpRow {
                coeffs: vec![(0, 1.0)],
                rhs: 3.0,
                kind: RowKind::Eq,
            },
        ];
        assert!(matches!(
            solve_lp(1, &[1.0], &rows),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn detects_unboundedness() {
        // min -x s.t. x >= 0 (no upper bound)
        let rows = vec![LpRow {
            coeffs: vec![(0, -1.0)],
            rhs: 0.0,
            kind: RowKind::Le,
        }];
        assert!(matches!(solve_lp(1, &[-1.0], &rows), Err(Error::Unbounded)));
    }

    #[test]
    fn handles_redundant_equalities() {
        // x + y = 1 stated twice.
        let rows = vec![
            LpRow {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                rhs: 1.0,
                kind: RowKind::Eq,
            },
            LpRow {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                rhs: 1.0,
                kind: RowKind::Eq,
            },
        ];
        let sol = solve_lp(2, &[2.0, 1.0], &rows).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transport_point_masses() {
        let (v, plan) = solve_transport(&[1.0], &[1.0], |_, _| 0.7).unwrap();
        assert!((v - 0.7).abs() < 1e-12);
        assert_eq!(plan.len(), 1);
    }

    #[test]
    fn transport_splits_mass() {
        // P uniform on two atoms at distance 1, Q point mass at the first.
        let (v, _) = solve_transport(&[0.5, 0.5], &[1.0], |i, _| if i == 0 { 0.0 } else { 1.0 })
            .unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn transport_identity_is_free() {
        let p = [0.2, 0.3, 0.5];
        let (v, _) =
            solve_transport(&p, &p, |i, j| if i == j { 0.0 } else { 1.0 }).unwrap();
        assert!(v.abs() < 1e-12);
    }
}
