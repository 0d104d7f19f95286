//! ε-symmetry scoring, the pinning procedure, the subcube state
//! decomposition, and mixture-approximation checks.
//!
//! Pinning draws a random coordinate set I of random size Θ and a spin
//! vector Σ from μ_I, then splits Ω^n into the subcubes S^{I,σ}. The
//! conditional on each subcube is compared, in cut distance, against the
//! product of its own marginals; the mixture of those products approximates
//! μ itself.

use rand::Rng;
use serde::Serialize;

use crate::cutmetric::{cut_distance, CutBudget, CutEvaluation, CutMode};
use crate::error::{Error, Result};
use crate::measure::{for_each_config, kahan_sum, DenseMeasure, Event, EventSet, SubcubeEvent};
use crate::models::{sample_config, SeedStream};

/// Θ upper bound: ceil(min(2 ε^{−4} ln|Ω|, ((2 ln|Ω|)/ε)^c)).
/// Both bounds appear with unspecified absolute constants; the exponent `c`
/// is configuration (default 10).
pub fn theta_max(epsilon: f64, q: usize, c_exponent: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "pinning needs 0 < epsilon < 1/2, got {epsilon}"
        )));
    }
    let lnq = (q as f64).ln();
    let lemma_bound = 2.0 * epsilon.powi(-4) * lnq;
    let theorem_bound = (2.0 * lnq / epsilon).powf(c_exponent);
    Ok(lemma_bound.min(theorem_bound).ceil() as usize)
}

/// Sampled pinning plan: Θ, the coordinate set I, and Σ ~ μ_I.
#[derive(Debug, Clone, Serialize)]
pub struct PinningPlan {
    pub epsilon: f64,
    pub theta_max: usize,
    pub theta: usize,
    /// I, sorted (0-based).
    pub vars: Vec<usize>,
    /// Σ on I, aligned with `vars`.
    pub sigma: Vec<usize>,
}

/// Options for [`run_pinning`].
#[derive(Debug, Clone, Copy)]
pub struct PinningOptions {
    pub c_exponent: f64,
    /// Fix Θ instead of sampling it uniformly from {1, …, θ_max ∧ n}.
    pub fixed_theta: Option<usize>,
    /// Preferred cut-distance mode; exact falls back to upper (flagged)
    /// when its budgets are exceeded.
    pub mode: CutMode,
    pub budget: CutBudget,
}

impl Default for PinningOptions {
    fn default() -> Self {
        PinningOptions {
            c_exponent: 10.0,
            fixed_theta: None,
            mode: CutMode::Upper,
            budget: CutBudget::default(),
        }
    }
}

/// Draw Θ uniform on {1, …, min(θ_max, n)} (or take the fixed override),
/// then I uniform of size Θ and Σ ~ μ_I.
pub fn make_plan(
    mu: &DenseMeasure,
    epsilon: f64,
    opts: &PinningOptions,
    rng: &mut impl Rng,
) -> Result<PinningPlan> {
    let n = mu.n();
    let bound = theta_max(epsilon, mu.q(), opts.c_exponent)?;
    let effective = bound.min(n);
    let theta = match opts.fixed_theta {
        Some(t) => {
            if t == 0 || t > n {
                return Err(Error::InvalidParameter(format!(
                    "theta must lie in 1..={n}, got {t}"
                )));
            }
            t
        }
        None => rng.gen_range(1..=effective.max(1)),
    };
    // Uniform Θ-subset via partial Fisher-Yates.
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..theta {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut vars = pool[..theta].to_vec();
    vars.sort_unstable();
    let full = sample_config(mu, rng);
    let sigma = vars.iter().map(|&i| full[i]).collect();
    Ok(PinningPlan {
        epsilon,
        theta_max: bound,
        theta,
        vars,
        sigma,
    })
}

/// One subcube state S^{I,σ}: its mass, conditional, and the product of
/// the conditional's marginals.
#[derive(Debug, Clone)]
pub struct PinnedState {
    pub sigma: Vec<usize>,
    pub mass: f64,
    pub conditional: DenseMeasure,
    pub product: DenseMeasure,
}

/// The full decomposition of Ω^n over all σ ∈ Ω^I.
#[derive(Debug, Clone)]
pub struct StateDecomposition {
    pub vars: Vec<usize>,
    pub states: Vec<PinnedState>,
}

impl StateDecomposition {
    /// bar μ^I = Σ_σ μ(S^{I,σ}) bar μ^{I,σ}; zero-mass states drop out.
    pub fn mixture(&self) -> Result<DenseMeasure> {
        let weights: Vec<f64> = self.states.iter().map(|s| s.mass).collect();
        let comps: Vec<DenseMeasure> = self.states.iter().map(|s| s.product.clone()).collect();
        DenseMeasure::mixture(&weights, &comps)
    }

    /// Σ_σ μ(S^{I,σ}) μ^{I,σ}, which must reproduce μ.
    pub fn recompose(&self) -> Result<DenseMeasure> {
        let weights: Vec<f64> = self.states.iter().map(|s| s.mass).collect();
        let comps: Vec<DenseMeasure> =
            self.states.iter().map(|s| s.conditional.clone()).collect();
        DenseMeasure::mixture(&weights, &comps)
    }
}

/// Split μ into the subcube states of the coordinate set `vars`, in the
/// lexicographic order of σ ∈ Ω^I. Zero-mass states carry the uniform
/// fallback conditional.
pub fn decompose(mu: &DenseMeasure, vars: &[usize]) -> Result<StateDecomposition> {
    let mut sorted = vars.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::EmptySet { what: "pinning coordinate set" });
    }
    for &v in &sorted {
        if v >= mu.n() {
            return Err(Error::IndexOutOfRange { index: v, n: mu.n() });
        }
    }
    let q = mu.q();
    let mut sigmas = Vec::with_capacity(q.pow(sorted.len() as u32));
    for_each_config(sorted.len(), q, |_, sigma| {
        sigmas.push(sigma.to_vec());
    });
    let states = sigmas
        .into_iter()
        .map(|sigma| {
            let event = Event::Subcube(SubcubeEvent::new(&sorted, &sigma)?);
            let mass = mu.event_prob(&event);
            let conditional = mu.condition(&event)?;
            let product = conditional.marginal_product();
            Ok(PinnedState {
                sigma,
                mass,
                conditional,
                product,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StateDecomposition {
        vars: sorted,
        states,
    })
}

/// ε-symmetry score.
///
/// Order 2 is (1/n²) Σ_{i≠j} TV(μ_{i,j} − μ_i ⊗ μ_j) over ordered pairs;
/// order k sums TV(μ_{i_1…i_k} − ⊗ μ_{i_j}) over i_1 < … < i_k divided
/// by n^k.
pub fn symmetry_score(mu: &DenseMeasure, order: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::InvalidParameter(format!(
            "symmetry score needs order >= 2, got {order}"
        )));
    }
    let n = mu.n();
    if n < order {
        return Err(Error::InvalidParameter(format!(
            "symmetry score of order {order} needs n >= {order}, got {n}"
        )));
    }
    let singles = mu.single_marginals();
    let mut terms = Vec::new();
    if order == 2 {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let joint = mu.tuple_marginal(&[i, j])?;
                let prod = DenseMeasure::product_of_marginals(
                    mu.omega(),
                    &[singles[i].clone(), singles[j].clone()],
                )?;
                terms.push(joint.tv(&prod)?);
            }
        }
        return Ok(kahan_sum(terms) / (n * n) as f64);
    }
    let mut combo = vec![0usize; order];
    for_each_combination(n, order, &mut combo, &mut |set: &[usize]| -> Result<()> {
        let joint = mu.marginal(set)?;
        let rows: Vec<Vec<f64>> = set.iter().map(|&i| singles[i].clone()).collect();
        let prod = DenseMeasure::product_of_marginals(mu.omega(), &rows)?;
        terms.push(joint.tv(&prod)?);
        Ok(())
    })?;
    Ok(kahan_sum(terms) / (n as f64).powi(order as i32))
}

fn for_each_combination(
    n: usize,
    k: usize,
    buf: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    fn rec(
        start: usize,
        n: usize,
        k: usize,
        depth: usize,
        buf: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if depth == k {
            return f(&buf[..k]);
        }
        for v in start..n {
            if n - v < k - depth {
                break;
            }
            buf[depth] = v;
            rec(v + 1, n, k, depth + 1, buf, f)?;
        }
        Ok(())
    }
    rec(0, n, k, 0, buf, f)
}

/// A cut value together with the mode that produced it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModedValue {
    pub mode: CutMode,
    pub value: f64,
}

/// Cut distance in the requested mode, degrading exact to upper when the
/// exact budgets are exceeded. The returned mode records which path
/// produced the number.
pub fn cut_with_fallback(
    mu: &DenseMeasure,
    nu: &DenseMeasure,
    mode: CutMode,
    budget: &CutBudget,
) -> Result<ModedValue> {
    let attempt = cut_distance(mu, nu, mode, budget);
    let eval: CutEvaluation = match attempt {
        Ok(e) => e,
        Err(Error::BudgetExceeded { .. }) if mode == CutMode::Exact => {
            cut_distance(mu, nu, CutMode::Upper, budget)?
        }
        Err(e) => return Err(e),
    };
    Ok(ModedValue {
        mode: eval.mode,
        value: eval.value,
    })
}

/// Per-state entry of a pinning report.
#[derive(Debug, Clone, Serialize)]
pub struct StateReport {
    pub sigma: Vec<usize>,
    pub mass: f64,
    pub cutm_mode: CutMode,
    pub cutm_value: f64,
    pub symmetry2: f64,
}

/// Report of one pinning run.
#[derive(Debug, Clone, Serialize)]
pub struct PinningReport {
    pub theta: usize,
    /// I as 1-based coordinate indices.
    #[serde(rename = "I")]
    pub vars: Vec<usize>,
    /// The sampled Σ.
    pub sigma: Vec<usize>,
    pub per_state: Vec<StateReport>,
    /// Cutm(μ^{I,Σ}, bar μ^{I,Σ}) for the sampled Σ.
    pub sampled_state_cutm: ModedValue,
    /// μ(S^{I,σ})-weighted average of the per-state distances.
    pub avg_state_cutm: ModedValue,
    /// Cutm(μ, bar μ^I) against the product mixture.
    pub mixture_cutm: ModedValue,
    /// True when an exact request fell back to upper mode anywhere.
    pub exact_fallback: bool,
}

impl PinningReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The pinning procedure: sample a plan, decompose, and measure.
///
/// Per-state cut distances are computed for positive-mass states; zero-mass
/// states carry the uniform-fallback conditional and weight 0 in the
/// average.
pub fn run_pinning(
    mu: &DenseMeasure,
    epsilon: f64,
    seed: u64,
    opts: &PinningOptions,
) -> Result<(PinningPlan, StateDecomposition, PinningReport)> {
    let mut rng = SeedStream::new(seed).substream(0);
    let plan = make_plan(mu, epsilon, opts, &mut rng)?;
    let decomposition = decompose(mu, &plan.vars)?;

    let mut fallback = false;
    let mut per_state = Vec::with_capacity(decomposition.states.len());
    let mut weighted = Vec::new();
    for state in &decomposition.states {
        let cutm = if state.mass > 0.0 {
            let mv = cut_with_fallback(&state.conditional, &state.product, opts.mode, &opts.budget)?;
            if opts.mode == CutMode::Exact && mv.mode != CutMode::Exact {
                fallback = true;
            }
            mv
        } else {
            ModedValue {
                mode: opts.mode,
                value: 0.0,
            }
        };
        if state.mass > 0.0 {
            weighted.push(state.mass * cutm.value);
        }
        let symmetry2 = if mu.n() >= 2 {
            symmetry_score(&state.conditional, 2)?
        } else {
            0.0
        };
        per_state.push(StateReport {
            sigma: state.sigma.clone(),
            mass: state.mass,
            cutm_mode: cutm.mode,
            cutm_value: cutm.value,
            symmetry2,
        });
    }

    let avg_value = kahan_sum(weighted.iter().copied());
    let avg_mode = if per_state.iter().all(|s| s.cutm_mode == CutMode::Exact) {
        CutMode::Exact
    } else {
        opts.mode
    };

    let sampled_idx = decomposition
        .states
        .iter()
        .position(|s| s.sigma == plan.sigma)
        .expect("the sampled sigma indexes a state");
    let sampled_state_cutm = ModedValue {
        mode: per_state[sampled_idx].cutm_mode,
        value: per_state[sampled_idx].cutm_value,
    };

    let mixture = decomposition.mixture()?;
    let mixture_cutm = cut_with_fallback(mu, &mixture, opts.mode, &opts.budget)?;
    if opts.mode == CutMode::Exact && mixture_cutm.mode != CutMode::Exact {
        fallback = true;
    }

    let report = PinningReport {
        theta: plan.theta,
        vars: plan.vars.iter().map(|v| v + 1).collect(),
        sigma: plan.sigma.clone(),
        per_state,
        sampled_state_cutm,
        avg_state_cutm: ModedValue {
            mode: avg_mode,
            value: avg_value,
        },
        mixture_cutm,
        exact_fallback: fallback,
    };
    Ok((plan, decomposition, report))
}

/// Report of a mixture-approximation check against a partial partition.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureReport {
    /// z = Σ_h μ(S_h).
    pub covered_mass: f64,
    pub mixture_cutm: ModedValue,
    pub part_symmetry2: Vec<f64>,
    /// Every part scores ≤ (ε/9)³.
    pub parts_symmetric: bool,
    /// Cut distance ≤ 2ε.
    pub within_bound: bool,
}

/// Check a partial partition into pairwise disjoint positive-mass parts:
/// z = Σ μ(S_h), the mixture (1/z) Σ_i μ(S_i) ⊗_j μ_j[·|S_i], its cut
/// distance to μ, and each part's pairwise symmetry score.
pub fn mixture_check(
    mu: &DenseMeasure,
    partition: &[EventSet],
    epsilon: f64,
    mode: CutMode,
    budget: &CutBudget,
) -> Result<MixtureReport> {
    if partition.is_empty() {
        return Err(Error::EmptySet { what: "partition" });
    }
    let mut seen = std::collections::BTreeSet::new();
    for part in partition {
        for &idx in part.indices() {
            if !seen.insert(idx) {
                return Err(Error::InvalidParameter(format!(
                    "partition parts overlap at configuration {idx}"
                )));
            }
        }
    }
    let mut masses = Vec::with_capacity(partition.len());
    let mut products = Vec::with_capacity(partition.len());
    let mut part_symmetry2 = Vec::with_capacity(partition.len());
    for part in partition {
        let event = Event::Set(part.clone());
        let mass = mu.event_prob(&event);
        if mass <= 0.0 {
            return Err(Error::ZeroSupport);
        }
        let cond = mu.condition(&event)?;
        products.push(cond.marginal_product());
        part_symmetry2.push(if mu.n() >= 2 {
            symmetry_score(&cond, 2)?
        } else {
            0.0
        });
        masses.push(mass);
    }
    let z = kahan_sum(masses.iter().copied());
    let weights: Vec<f64> = masses.iter().map(|m| m / z).collect();
    let mixture = DenseMeasure::mixture(&weights, &products)?;
    let mixture_cutm = cut_with_fallback(mu, &mixture, mode, budget)?;
    let threshold = (epsilon / 9.0).powi(3);
    Ok(MixtureReport {
        covered_mass: z,
        parts_symmetric: part_symmetry2.iter().all(|&s| s <= threshold),
        within_bound: mixture_cutm.value <= 2.0 * epsilon,
        mixture_cutm,
        part_symmetry2,
    })
}
