//! Exact Gibbs quantities by enumeration: partition function, Gibbs table,
//! and the standard messages obtained by removing constraints.
//!
//! Everything here is an oracle: no sampling, no approximation. Products of
//! more than 32 weight factors are accumulated in the log domain so large β
//! and constraint counts cannot underflow.

use crate::bp::MessageSet;
use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::measure::{for_each_config, kahan_sum, DenseMeasure, Event};

/// Default enumeration budget: at most 2^24 configurations.
pub const DEFAULT_ENUM_BUDGET: u128 = 1 << 24;

/// Beyond this many weight factors, products move to the log domain.
const DIRECT_PRODUCT_LIMIT: usize = 32;

/// Number of configurations q^n, checked against the budget.
pub fn state_count(g: &FactorGraph, budget: u128) -> Result<usize> {
    let need = (g.q() as u128)
        .checked_pow(g.n() as u32)
        .unwrap_or(u128::MAX);
    if need > budget {
        return Err(Error::BudgetExceeded { need, budget });
    }
    Ok(need as usize)
}

/// Online log-sum-exp accumulator: total = exp(max) * sum.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, logw: f64) {
        if logw == f64::NEG_INFINITY {
            return;
        }
        if logw > self.max {
            self.sum = self.sum * (self.max - logw).exp() + 1.0;
            self.max = logw;
        } else {
            self.sum += (logw - self.max).exp();
        }
    }

    fn is_zero(&self) -> bool {
        self.max == f64::NEG_INFINITY
    }
}

/// ψ_G(σ) as a product, skipping constraints marked in `removed`.
fn weight_direct(g: &FactorGraph, config: &[usize], removed: Option<&[bool]>) -> f64 {
    let mut w = 1.0;
    for (i, c) in g.constraints().iter().enumerate() {
        if removed.is_some_and(|r| r[i]) {
            continue;
        }
        w *= c.weight(config);
    }
    w
}

/// ln ψ_G(σ) (−∞ on a zero factor), skipping constraints in `removed`.
fn weight_log(g: &FactorGraph, config: &[usize], removed: Option<&[bool]>) -> f64 {
    let mut lw = 0.0;
    for (i, c) in g.constraints().iter().enumerate() {
        if removed.is_some_and(|r| r[i]) {
            continue;
        }
        let v = c.weight(config);
        if v == 0.0 {
            return f64::NEG_INFINITY;
        }
        lw += v.ln();
    }
    lw
}

/// Exact partition function and Gibbs table with the default budget.
pub fn gibbs_table(g: &FactorGraph) -> Result<(f64, DenseMeasure)> {
    gibbs_table_with_budget(g, DEFAULT_ENUM_BUDGET)
}

/// Z(G) = Σ_τ ψ_G(τ) and μ_G = ψ_G / Z over all q^n configurations.
/// Hard pins restrict the support; Z must stay positive.
pub fn gibbs_table_with_budget(g: &FactorGraph, budget: u128) -> Result<(f64, DenseMeasure)> {
    let total = state_count(g, budget)?;
    let n = g.n();
    let q = g.q();
    let mut table = vec![0.0f64; total];

    if g.num_constraints() <= DIRECT_PRODUCT_LIMIT {
        for_each_config(n, q, |idx, config| {
            table[idx] = weight_direct(g, config, None);
        });
        let z = kahan_sum(table.iter().copied());
        if !(z > 0.0) {
            return Err(Error::ZeroSupport);
        }
        for w in &mut table {
            *w /= z;
        }
        Ok((z, DenseMeasure::new(n, g.omega(), table)?))
    } else {
        for_each_config(n, q, |idx, config| {
            table[idx] = weight_log(g, config, None);
        });
        let max = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::ZeroSupport);
        }
        for w in &mut table {
            *w = (*w - max).exp();
        }
        let scaled = kahan_sum(table.iter().copied());
        let z = max.exp() * scaled;
        for w in &mut table {
            *w /= scaled;
        }
        Ok((z, DenseMeasure::new(n, g.omega(), table)?))
    }
}

/// Direction of a standard message on the incidence (x, a).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageDir {
    /// μ_{G,a→x}[·|S]: remove every constraint of ∂x except a.
    ToVariable,
    /// μ_{G,x→a}[·|S]: remove constraint a only.
    ToConstraint,
}

/// One standard message on Ω, normalized. Errors with a zero normalizer
/// when S is incompatible with the surviving hard constraints.
pub fn standard_message(
    g: &FactorGraph,
    event: &Event,
    x: usize,
    a: usize,
    dir: MessageDir,
) -> Result<Vec<f64>> {
    if x >= g.n() {
        return Err(Error::IndexOutOfRange { index: x, n: g.n() });
    }
    if a >= g.num_constraints() {
        return Err(Error::IndexOutOfRange {
            index: a,
            n: g.num_constraints(),
        });
    }
    let mut removed = vec![false; g.num_constraints()];
    match dir {
        MessageDir::ToVariable => {
            for &b in g.var_constraints(x) {
                removed[b] = b != a;
            }
        }
        MessageDir::ToConstraint => removed[a] = true,
    }
    message_with_removed(g, event, x, &removed)
}

fn message_with_removed(
    g: &FactorGraph,
    event: &Event,
    x: usize,
    removed: &[bool],
) -> Result<Vec<f64>> {
    let n = g.n();
    let q = g.q();
    state_count(g, DEFAULT_ENUM_BUDGET)?;
    if event.is_empty(n, q) {
        return Err(Error::EmptySet { what: "conditioning event" });
    }
    let kept = removed.iter().filter(|r| !**r).count();
    let mut dist = vec![0.0f64; q];
    if kept <= DIRECT_PRODUCT_LIMIT {
        event.for_each_member(n, q, |_, config| {
            dist[config[x]] += weight_direct(g, config, Some(removed));
        });
    } else {
        let mut acc = vec![LogSum::new(); q];
        event.for_each_member(n, q, |_, config| {
            acc[config[x]].add(weight_log(g, config, Some(removed)));
        });
        let max = acc
            .iter()
            .filter(|a| !a.is_zero())
            .map(|a| a.max)
            .fold(f64::NEG_INFINITY, f64::max);
        if max != f64::NEG_INFINITY {
            for (d, a) in dist.iter_mut().zip(&acc) {
                if !a.is_zero() {
                    *d = (a.max - max).exp() * a.sum;
                }
            }
        }
    }
    let total = kahan_sum(dist.iter().copied());
    if !(total > 0.0) {
        return Err(Error::ZeroNormalizer {
            what: format!("standard message at variable {x}"),
        });
    }
    for d in &mut dist {
        *d /= total;
    }
    Ok(dist)
}

/// All standard messages (μ_{G,x→a}[·|S], μ_{G,a→x}[·|S]) for every
/// incidence, assembled into a message set.
pub fn standard_messages(g: &FactorGraph, event: &Event) -> Result<MessageSet> {
    let incidences = g.incidences();
    let mut to_con = Vec::with_capacity(incidences.len());
    let mut to_var = Vec::with_capacity(incidences.len());
    for &(x, a) in &incidences {
        to_con.push(standard_message(g, event, x, a, MessageDir::ToConstraint)?);
        to_var.push(standard_message(g, event, x, a, MessageDir::ToVariable)?);
    }
    MessageSet::new(g.n(), g.q(), incidences, to_con, to_var)
}

/// Potts edge message across the arity-2 constraint `a`: the marginal of
/// `from` given S in the graph with `a` removed (the k = 2 special case of
/// the standard message from the variable into the constraint).
pub fn potts_edge_message(
    g: &FactorGraph,
    event: &Event,
    a: usize,
    from: usize,
) -> Result<Vec<f64>> {
    if g.constraints()[a].table().arity() != 2 {
        return Err(Error::InvalidParameter(format!(
            "constraint {a} is not an edge (arity {})",
            g.constraints()[a].table().arity()
        )));
    }
    standard_message(g, event, from, a, MessageDir::ToConstraint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{demo_edge_graph, empty_graph, Constraint, SpinDomain, WeightTable};
    use crate::measure::{EventSet, SubcubeEvent};
    use std::sync::Arc;

    #[test]
    fn demo_edge_gibbs_table() {
        let g = demo_edge_graph();
        let (z, mu) = gibbs_table(&g).unwrap();
        assert!((z - 3.0).abs() < 1e-12);
        let expect = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
        for (p, e) in mu.probs().iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_graph_is_uniform() {
        // empty product: psi == 1 per configuration, so Z counts them
        let g = empty_graph(3, 2).unwrap();
        let (z, mu) = gibbs_table(&g).unwrap();
        assert!((z - 8.0).abs() < 1e-12);
        assert_eq!(mu.probs(), &[0.125; 8]);
    }

    #[test]
    fn pinned_empty_graph_is_point_mass() {
        let g = empty_graph(3, 2).unwrap();
        let pinned = g.pin(&[0, 1, 2], &[0, 1, 0]).unwrap();
        let (z, mu) = gibbs_table(&pinned).unwrap();
        assert!((z - 1.0).abs() < 1e-12);
        let expect = DenseMeasure::point_mass(3, SpinDomain::new(2).unwrap(), &[0, 1, 0]).unwrap();
        assert_eq!(mu.probs(), expect.probs());
    }

    #[test]
    fn conflicting_pins_have_zero_support() {
        let g = empty_graph(2, 2).unwrap();
        let pinned = g.pin(&[0, 0], &[0, 1]).unwrap();
        assert!(matches!(gibbs_table(&pinned), Err(Error::ZeroSupport)));
    }

    #[test]
    fn budget_is_enforced() {
        let g = empty_graph(8, 2).unwrap();
        assert!(matches!(
            gibbs_table_with_budget(&g, 255),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn gibbs_invariant_under_constraint_permutation() {
        let omega = SpinDomain::new(2).unwrap();
        let t1 = Arc::new(WeightTable::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap());
        let t2 = Arc::new(WeightTable::new(2, 2, vec![0.9, 1.3, 0.2, 1.0]).unwrap());
        let g1 = FactorGraph::build(
            3,
            omega,
            vec![
                Constraint::new(vec![0, 1], Arc::clone(&t1)),
                Constraint::new(vec![1, 2], Arc::clone(&t2)),
            ],
        )
        .unwrap();
        let g2 = FactorGraph::build(
            3,
            omega,
            vec![
                Constraint::new(vec![1, 2], t2),
                Constraint::new(vec![0, 1], t1),
            ],
        )
        .unwrap();
        let (z1, m1) = gibbs_table(&g1).unwrap();
        let (z2, m2) = gibbs_table(&g2).unwrap();
        assert!((z1 - z2).abs() < 1e-12);
        for (a, b) in m1.probs().iter().zip(m2.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn log_domain_matches_direct_product() {
        // 40 copies of the same edge constraint force the log path.
        let omega = SpinDomain::new(2).unwrap();
        let t = Arc::new(WeightTable::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap());
        let direct = FactorGraph::build(2, omega, vec![Constraint::new(vec![0, 1], Arc::clone(&t))])
            .unwrap();
        let many: Vec<Constraint> = (0..40)
            .map(|_| Constraint::new(vec![0, 1], Arc::clone(&t)))
            .collect();
        let g = FactorGraph::build(2, omega, many).unwrap();
        let (_, mu) = gibbs_table(&g).unwrap();
        // single edge at beta = 40 ln 2
        let (_, one) = gibbs_table(&direct).unwrap();
        assert!(one.probs()[0] > 0.0);
        let w = 0.5f64.powi(40);
        let z = 2.0 * w + 2.0;
        assert!((mu.probs()[0] - w / z).abs() < 1e-15);
        assert!((mu.probs()[1] - 1.0 / z).abs() < 1e-12);
    }

    #[test]
    fn demo_edge_messages_with_full_cube() {
        let g = demo_edge_graph();
        let msgs = standard_messages(&g, &Event::Full).unwrap();
        for &(x, a) in msgs.incidences() {
            let tv = msgs.to_variable_at(x, a).unwrap();
            let tc = msgs.to_constraint_at(x, a).unwrap();
            for v in tv.iter().chain(tc) {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn messages_conditioned_on_pinned_event() {
        // S = {00, 01}: variable 0 pinned to 0.
        let g = demo_edge_graph();
        let s = Event::Set(EventSet::new(vec![0, 1]));
        let m = standard_message(&g, &s, 0, 0, MessageDir::ToConstraint).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert!(m[1].abs() < 1e-12);
    }

    #[test]
    fn message_zero_normalizer_on_incompatible_hard_pin() {
        let g = demo_edge_graph().pin(&[0], &[1]).unwrap();
        // S forces variable 0 to 0 but the pin (kept for the x->a message
        // of the original edge) forces 1.
        let s = Event::Subcube(SubcubeEvent::new(&[0], &[0]).unwrap());
        let r = standard_message(&g, &s, 0, 0, MessageDir::ToConstraint);
        assert!(matches!(r, Err(Error::ZeroNormalizer { .. })));
    }

    #[test]
    fn potts_edge_message_matches_removed_edge_marginal() {
        let g = demo_edge_graph();
        let m = potts_edge_message(&g, &Event::Full, 0, 1).unwrap();
        // Removing the single edge leaves the uniform measure.
        assert!((m[0] - 0.5).abs() < 1e-15);
    }
}
