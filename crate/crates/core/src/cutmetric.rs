//! The cut metric on P(Ω^n): exact evaluation by linear programming,
//! certified upper and lower bounds, couplings, and the Wasserstein ℓ1
//! distance used for overlap distributions.
//!
//! The cut distance minimizes, over couplings γ of μ and ν, the maximum
//! adversarial discrepancy over coordinate sets I, events B and spins ω.
//! For a fixed (I, ω, ±) the optimal B keeps exactly the pairs whose
//! integrand has the chosen sign, so the inner maximum runs over the finite
//! family of linear functionals
//! f_{I,ω,±}(γ) = Σ_{(σ,τ)} γ(σ,τ) · max(0, ±Σ_{i∈I}(1{σ_i=ω}−1{τ_i=ω})),
//! and the min-max becomes `minimize t subject to f(γ) ≤ t` over the
//! coupling polytope. Exact mode solves that program with lazily generated
//! adversary rows; upper mode evaluates the full adversary family on a
//! cheap coupling; lower mode optimizes single functionals over the
//! polytope (a transport program each).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{solve_lp, solve_transport, LpRow, RowKind};
use crate::measure::{index_to_config, kahan_sum, DenseMeasure};

/// Budgets gating exact mode and the adversary enumeration.
#[derive(Debug, Clone, Copy)]
pub struct CutBudget {
    /// Maximum |supp μ|·|supp ν| admitted to the coupling LP.
    pub max_pairs: usize,
    /// Maximum size 2(2^n−1)|Ω| of the adversary family.
    pub max_functionals: u128,
}

impl Default for CutBudget {
    fn default() -> Self {
        CutBudget {
            max_pairs: 1 << 16,
            max_functionals: 1 << 18,
        }
    }
}

/// Evaluation mode for [`cut_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CutMode {
    Exact,
    Upper,
    Lower,
}

/// A sparse coupling γ with prescribed marginals.
#[derive(Debug, Clone)]
pub struct Coupling {
    entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub fn new(entries: Vec<(usize, usize, f64)>) -> Self {
        Coupling { entries }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// The independent coupling μ ⊗ ν on the product of the supports.
    pub fn independent(mu: &DenseMeasure, nu: &DenseMeasure) -> Self {
        let mut entries = Vec::new();
        for i in mu.support() {
            for j in nu.support() {
                entries.push((i, j, mu.prob(i) * nu.prob(j)));
            }
        }
        Coupling { entries }
    }

    /// Maximal diagonal mass min(μ(σ), ν(σ)), residuals matched by a
    /// two-pointer rule over ascending indices. Certifies Cutm ≤ TV.
    pub fn greedy_diagonal(mu: &DenseMeasure, nu: &DenseMeasure) -> Self {
        let mut entries = Vec::new();
        let len = mu.probs().len();
        let mut res_mu = Vec::new();
        let mut res_nu = Vec::new();
        for idx in 0..len {
            let a = mu.prob(idx);
            let b = nu.prob(idx);
            let d = a.min(b);
            if d > 0.0 {
                entries.push((idx, idx, d));
            }
            if a > d {
                res_mu.push((idx, a - d));
            }
            if b > d {
                res_nu.push((idx, b - d));
            }
        }
        let (mut i, mut j) = (0usize, 0usize);
        let mut carry_mu = res_mu.first().map_or(0.0, |e| e.1);
        let mut carry_nu = res_nu.first().map_or(0.0, |e| e.1);
        while i < res_mu.len() && j < res_nu.len() {
            let m = carry_mu.min(carry_nu);
            if m > 0.0 {
                entries.push((res_mu[i].0, res_nu[j].0, m));
            }
            carry_mu -= m;
            carry_nu -= m;
            if carry_mu <= 1e-15 {
                i += 1;
                carry_mu = res_mu.get(i).map_or(0.0, |e| e.1);
            }
            if carry_nu <= 1e-15 {
                j += 1;
                carry_nu = res_nu.get(j).map_or(0.0, |e| e.1);
            }
        }
        Coupling { entries }
    }

    /// Check the marginal defect against the prescribed measures.
    pub fn verify(&self, mu: &DenseMeasure, nu: &DenseMeasure, tol: f64) -> Result<()> {
        let mut row = vec![0.0f64; mu.probs().len()];
        let mut col = vec![0.0f64; nu.probs().len()];
        for &(i, j, m) in &self.entries {
            row[i] += m;
            col[j] += m;
        }
        let mut defect = 0.0f64;
        for (r, p) in row.iter().zip(mu.probs()) {
            defect = defect.max((r - p).abs());
        }
        for (c, p) in col.iter().zip(nu.probs()) {
            defect = defect.max((c - p).abs());
        }
        if defect > tol {
            return Err(Error::MarginalMismatch { defect });
        }
        Ok(())
    }
}

/// The adversary functional achieving the reported value: a coordinate set
/// I, a spin ω and a sign.
#[derive(Debug, Clone, Serialize)]
pub struct AdversaryWitness {
    /// Coordinate set I (0-based variable indices).
    pub vars: Vec<usize>,
    pub omega: usize,
    pub sign: i8,
    /// (1/n) Σ over the coupling of mass × max(0, sign × Σ_{i∈I} ...).
    pub value: f64,
}

/// Outcome of a cut-distance evaluation.
#[derive(Debug, Clone)]
pub struct CutEvaluation {
    pub value: f64,
    pub mode: CutMode,
    /// The coupling achieving the value (absent in lower mode, which
    /// optimizes over the whole polytope per adversary).
    pub coupling: Option<Coupling>,
    pub witness: AdversaryWitness,
}

impl CutEvaluation {
    /// Witness report with 1-based coordinate indices, matching the other
    /// file formats of the crate.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Rep<'a> {
            value: f64,
            mode: CutMode,
            coupling_support_size: usize,
            adversary: Adv<'a>,
        }
        #[derive(Serialize)]
        struct Adv<'a> {
            #[serde(rename = "I")]
            i: Vec<usize>,
            omega: usize,
            sign: i8,
            #[serde(skip)]
            _marker: std::marker::PhantomData<&'a ()>,
        }
        let rep = Rep {
            value: self.value,
            mode: self.mode,
            coupling_support_size: self.coupling.as_ref().map_or(0, |c| c.support_size()),
            adversary: Adv {
                i: self.witness.vars.iter().map(|v| v + 1).collect(),
                omega: self.witness.omega,
                sign: self.witness.sign,
                _marker: std::marker::PhantomData,
            },
        };
        serde_json::to_string_pretty(&rep).expect("witness serializes")
    }
}

/// Total variation distance (1/2) Σ |p − q|.
pub fn tv_distance(p: &DenseMeasure, q: &DenseMeasure) -> Result<f64> {
    p.tv(q)
}

/// Product measure from per-variable marginals (see `DenseMeasure`).
pub fn product_measure(
    omega: crate::graph::SpinDomain,
    marginals: &[Vec<f64>],
) -> Result<DenseMeasure> {
    DenseMeasure::product_of_marginals(omega, marginals)
}

/// Mixture Σ_i p_i μ_i of measures on a common space.
pub fn mixture_measure(weights: &[f64], components: &[DenseMeasure]) -> Result<DenseMeasure> {
    DenseMeasure::mixture(weights, components)
}

/// Decoded coupling entries, ready for adversary evaluation.
struct PairList {
    n: usize,
    q: usize,
    sigmas: Vec<Vec<usize>>,
    taus: Vec<Vec<usize>>,
    masses: Vec<f64>,
}

impl PairList {
    fn from_coupling(n: usize, q: usize, c: &Coupling) -> Self {
        let mut sigmas = Vec::with_capacity(c.entries.len());
        let mut taus = Vec::with_capacity(c.entries.len());
        let mut masses = Vec::with_capacity(c.entries.len());
        for &(i, j, m) in &c.entries {
            sigmas.push(index_to_config(i, n, q));
            taus.push(index_to_config(j, n, q));
            masses.push(m);
        }
        PairList {
            n,
            q,
            sigmas,
            taus,
            masses,
        }
    }

    /// delta[ω][i][p] = 1{σ_i=ω} − 1{τ_i=ω} for pair p.
    fn deltas(&self) -> Vec<Vec<Vec<i8>>> {
        let mut d = vec![vec![vec![0i8; self.masses.len()]; self.n]; self.q];
        for (p, (s, t)) in self.sigmas.iter().zip(&self.taus).enumerate() {
            for i in 0..self.n {
                for omega in 0..self.q {
                    d[omega][i][p] =
                        (s[i] == omega) as i8 - (t[i] == omega) as i8;
                }
            }
        }
        d
    }
}

fn functional_family_size(n: usize, q: usize) -> u128 {
    2 * ((1u128 << n) - 1) * q as u128
}

fn mask_to_vars(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Evaluate the whole adversary family on a fixed weighted pair list via a
/// Gray-code walk over the coordinate sets. Returns the maximum functional
/// (undivided by n) and, when a threshold is given, every functional
/// strictly above it.
fn adversary_scan(
    pairs: &PairList,
    threshold: Option<f64>,
) -> (f64, u64, usize, i8, Vec<(u64, usize, i8, f64)>) {
    let n = pairs.n;
    let npairs = pairs.masses.len();
    let deltas = pairs.deltas();
    let mut best = (f64::NEG_INFINITY, 0u64, 0usize, 1i8);
    let mut violations = Vec::new();
    for omega in 0..pairs.q {
        let mut h = vec![0i32; npairs];
        let record = |mask: u64, h: &[i32], violations: &mut Vec<(u64, usize, i8, f64)>,
                          best: &mut (f64, u64, usize, i8)| {
            let mut fplus = 0.0f64;
            let mut fminus = 0.0f64;
            for (hp, m) in h.iter().zip(&pairs.masses) {
                if *hp > 0 {
                    fplus += m * *hp as f64;
                } else if *hp < 0 {
                    fminus -= m * *hp as f64;
                }
            }
            for (f, sign) in [(fplus, 1i8), (fminus, -1i8)] {
                if f > best.0 {
                    *best = (f, mask, omega, sign);
                }
                if let Some(t) = threshold {
                    if f > t {
                        violations.push((mask, omega, sign, f));
                    }
                }
            }
        };
        let mut gray = 0u64;
        for k in 1u64..(1u64 << n) {
            let bit = k.trailing_zeros() as usize;
            gray ^= 1 << bit;
            let entering = gray >> bit & 1 == 1;
            let drow = &deltas[omega][bit];
            if entering {
                for (hp, d) in h.iter_mut().zip(drow) {
                    *hp += *d as i32;
                }
            } else {
                for (hp, d) in h.iter_mut().zip(drow) {
                    *hp -= *d as i32;
                }
            }
            record(gray, &h, &mut violations, &mut best);
        }
    }
    (best.0, best.1, best.2, best.3, violations)
}

fn check_same_space(mu: &DenseMeasure, nu: &DenseMeasure) -> Result<()> {
    if mu.n() != nu.n() || mu.q() != nu.q() {
        return Err(Error::DimensionMismatch {
            left: mu.probs().len(),
            right: nu.probs().len(),
        });
    }
    Ok(())
}

/// Cut distance in the requested mode.
pub fn cut_distance(
    mu: &DenseMeasure,
    nu: &DenseMeasure,
    mode: CutMode,
    budget: &CutBudget,
) -> Result<CutEvaluation> {
    match mode {
        CutMode::Exact => cut_exact(mu, nu, budget),
        CutMode::Upper => {
            let coupling = Coupling::greedy_diagonal(mu, nu);
            cut_upper_with_coupling(mu, nu, coupling, budget)
        }
        CutMode::Lower => cut_lower(mu, nu, budget, &[]),
    }
}

/// Adversary maximum for a given coupling: a certified upper bound.
pub fn cut_upper_with_coupling(
    mu: &DenseMeasure,
    nu: &DenseMeasure,
    coupling: Coupling,
    budget: &CutBudget,
) -> Result<CutEvaluation> {
    check_same_space(mu, nu)?;
    coupling.verify(mu, nu, 1e-10)?;
    let family = functional_family_size(mu.n(), mu.q());
    if family > budget.max_functionals {
        return Err(Error::BudgetExceeded {
            need: family,
            budget: budget.max_functionals,
        });
    }
    let pairs = PairList::from_coupling(mu.n(), mu.q(), &coupling);
    let (fmax, mask, omega, sign, _) = adversary_scan(&pairs, None);
    let value = fmax.max(0.0) / mu.n() as f64;
    Ok(CutEvaluation {
        value,
        mode: CutMode::Upper,
        witness: AdversaryWitness {
            vars: mask_to_vars(mask),
            omega,
            sign,
            value,
        },
        coupling: Some(coupling),
    })
}

/// Lower bound: max over candidate adversaries of the transport minimum of
/// that single functional over the coupling polytope. Singletons have a
/// closed form; supplied or default larger sets solve a transport program.
pub fn cut_lower(
    mu: &DenseMeasure,
    nu: &DenseMeasure,
    budget: &CutBudget,
    extra_adversaries: &[(Vec<usize>, usize, i8)],
) -> Result<CutEvaluation> {
    check_same_space(mu, nu)?;
    let n = mu.n();
    let q = mu.q();
    let mmu = mu.single_marginals();
    let mnu = nu.single_marginals();
    let mut best = AdversaryWitness {
        vars: vec![0],
        omega: 0,
        sign: 1,
        value: 0.0,
    };
    for i in 0..n {
        for omega in 0..q {
            let diff = mmu[i][omega] - mnu[i][omega];
            let (value, sign) = if diff >= 0.0 { (diff, 1) } else { (-diff, -1) };
            let value = value / n as f64;
            if value > best.value {
                best = AdversaryWitness {
                    vars: vec![i],
                    omega,
                    sign,
                    value,
                };
            }
        }
    }

    // Transport-backed candidates: the full coordinate set plus any
    // supplied adversaries, when the pair budget allows the program.
    let supp_mu = mu.support();
    let supp_nu = nu.support();
    let npairs = supp_mu.len() * supp_nu.len();
    if npairs <= budget.max_pairs.min(1 << 14) {
        let mut candidates: Vec<(Vec<usize>, usize, i8)> = Vec::new();
        for omega in 0..q {
            for sign in [1i8, -1] {
                candidates.push(((0..n).collect(), omega, sign));
            }
        }
        candidates.extend_from_slice(extra_adversaries);
        let sup: Vec<f64> = supp_mu.iter().map(|&i| mu.prob(i)).collect();
        let dem: Vec<f64> = supp_nu.iter().map(|&j| nu.prob(j)).collect();
        let sigmas: Vec<Vec<usize>> = supp_mu.iter().map(|&i| index_to_config(i, n, q)).collect();
        let taus: Vec<Vec<usize>> = supp_nu.iter().map(|&j| index_to_config(j, n, q)).collect();
        for (vars, omega, sign) in candidates {
            let cost = |i: usize, j: usize| -> f64 {
                let mut hsum = 0i32;
                for &v in &vars {
                    hsum += (sigmas[i][v] == omega) as i32 - (taus[j][v] == omega) as i32;
                }
                (sign as i32 * hsum).max(0) as f64
            };
            let (val, _) = solve_transport(&sup, &dem, cost)?;
            let val = val / n as f64;
            if val > best.value {
                best = AdversaryWitness {
                    vars: vars.clone(),
                    omega,
                    sign,
                    value: val,
                };
            }
        }
    }

    Ok(CutEvaluation {
        value: best.value,
        mode: CutMode::Lower,
        coupling: None,
        witness: best,
    })
}

const GENERATION_TOL: f64 = 1e-10;
const MAX_NEW_ROWS_PER_ROUND: usize = 64;

/// Exact cut distance: minimize t over the coupling polytope subject to
/// every adversary functional, with violated functionals generated lazily
/// from full Gray-code scans at the current optimum.
fn cut_exact(mu: &DenseMeasure, nu: &DenseMeasure, budget: &CutBudget) -> Result<CutEvaluation> {
    check_same_space(mu, nu)?;
    let n = mu.n();
    let q = mu.q();
    let family = functional_family_size(n, q);
    if family > budget.max_functionals {
        return Err(Error::BudgetExceeded {
            need: family,
            budget: budget.max_functionals,
        });
    }
    let supp_mu = mu.support();
    let supp_nu = nu.support();
    let npairs = supp_mu.len() * supp_nu.len();
    if npairs > budget.max_pairs {
        return Err(Error::BudgetExceeded {
            need: npairs as u128,
            budget: budget.max_pairs as u128,
        });
    }
    let sigmas: Vec<Vec<usize>> = supp_mu.iter().map(|&i| index_to_config(i, n, q)).collect();
    let taus: Vec<Vec<usize>> = supp_nu.iter().map(|&j| index_to_config(j, n, q)).collect();

    // Active adversary set: all singletons plus the full coordinate set.
    let mut active: Vec<(u64, usize, i8)> = Vec::new();
    for i in 0..n {
        for omega in 0..q {
            for sign in [1i8, -1] {
                active.push((1u64 << i, omega, sign));
            }
        }
    }
    let full_mask = (1u64 << n) - 1;
    for omega in 0..q {
        for sign in [1i8, -1] {
            active.push((full_mask, omega, sign));
        }
    }

    let t_col = npairs;
    let costs: Vec<f64> = (0..npairs).map(|_| 0.0).chain([1.0]).collect();
    let sup: Vec<f64> = supp_mu.iter().map(|&i| mu.prob(i)).collect();
    let dem: Vec<f64> = supp_nu.iter().map(|&j| nu.prob(j)).collect();

    let functional_row = |mask: u64, omega: usize, sign: i8| -> LpRow {
        let mut coeffs = Vec::new();
        for (pi, s) in sigmas.iter().enumerate() {
            for (pj, t) in taus.iter().enumerate() {
                let mut h = 0i32;
                let mut bits = mask;
                while bits != 0 {
                    let i = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    h += (s[i] == omega) as i32 - (t[i] == omega) as i32;
                }
                let c = (sign as i32 * h).max(0);
                if c > 0 {
                    coeffs.push((pi * taus.len() + pj, c as f64));
                }
            }
        }
        coeffs.push((t_col, -1.0));
        LpRow {
            coeffs,
            rhs: 0.0,
            kind: RowKind::Le,
        }
    };

    // The family is finite, so generation terminates; the cap is defensive.
    let max_rounds = family as usize + 2;
    for _round in 0..max_rounds {
        let mut rows = Vec::with_capacity(supp_mu.len() + supp_nu.len() + active.len());
        for (pi, &s) in sup.iter().enumerate() {
            rows.push(LpRow {
                coeffs: (0..taus.len()).map(|pj| (pi * taus.len() + pj, 1.0)).collect(),
                rhs: s,
                kind: RowKind::Eq,
            });
        }
        for (pj, &d) in dem.iter().enumerate().take(taus.len() - 1) {
            rows.push(LpRow {
                coeffs: (0..sigmas.len()).map(|pi| (pi * taus.len() + pj, 1.0)).collect(),
                rhs: d,
                kind: RowKind::Eq,
            });
        }
        for &(mask, omega, sign) in &active {
            rows.push(functional_row(mask, omega, sign));
        }

        let sol = solve_lp(npairs + 1, &costs, &rows)?;
        let t_star = sol.x[t_col];

        let mut entries = Vec::new();
        for pi in 0..sigmas.len() {
            for pj in 0..taus.len() {
                let v = sol.x[pi * taus.len() + pj];
                if v > 1e-14 {
                    entries.push((supp_mu[pi], supp_nu[pj], v));
                }
            }
        }
        let coupling = Coupling::new(entries);
        let pairs = PairList::from_coupling(n, q, &coupling);
        let (fmax, mask, omega, sign, violations) =
            adversary_scan(&pairs, Some(t_star + GENERATION_TOL));

        if violations.is_empty() {
            let value = fmax.max(0.0) / n as f64;
            return Ok(CutEvaluation {
                value,
                mode: CutMode::Exact,
                witness: AdversaryWitness {
                    vars: mask_to_vars(mask),
                    omega,
                    sign,
                    value,
                },
                coupling: Some(coupling),
            });
        }
        let mut sorted = violations;
        sorted.sort_by(|a, b| b.3.partial_cmp(&a.3).unwrap().then(a.0.cmp(&b.0)));
        let mut added = 0usize;
        for (mask, omega, sign, _) in sorted {
            if added >= MAX_NEW_ROWS_PER_ROUND {
                break;
            }
            if !active.contains(&(mask, omega, sign)) {
                active.push((mask, omega, sign));
                added += 1;
            }
        }
        if added == 0 {
            // All violations already active: the LP is as tight as the
            // tolerance allows; accept the scanned value.
            let value = fmax.max(0.0) / n as f64;
            return Ok(CutEvaluation {
                value,
                mode: CutMode::Exact,
                witness: AdversaryWitness {
                    vars: mask_to_vars(mask),
                    omega,
                    sign,
                    value,
                },
                coupling: Some(coupling),
            });
        }
    }
    unreachable!("adversary generation exceeded the finite family size")
}

/// Exact Wasserstein ℓ1 distance between two finitely supported
/// distributions over abstract atoms, for a caller-supplied ground metric.
pub fn wasserstein_d1<T>(
    p: &[(T, f64)],
    q: &[(T, f64)],
    mut ground: impl FnMut(&T, &T) -> f64,
) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptySet { what: "atom list" });
    }
    let pw: Vec<f64> = p.iter().map(|(_, w)| *w).collect();
    let qw: Vec<f64> = q.iter().map(|(_, w)| *w).collect();
    for w in pw.iter().chain(&qw) {
        if *w < 0.0 {
            return Err(Error::Unnormalized { sum: *w });
        }
    }
    let ps = kahan_sum(pw.iter().copied());
    let qs = kahan_sum(qw.iter().copied());
    if (ps - 1.0).abs() > 1e-9 || (qs - 1.0).abs() > 1e-9 {
        return Err(Error::Unnormalized { sum: ps });
    }
    let (value, _) = solve_transport(&pw, &qw, |i, j| ground(&p[i].0, &q[j].0))?;
    Ok(value)
}
