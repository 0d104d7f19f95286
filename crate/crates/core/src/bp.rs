//! The message space M(G), its metric, the Belief Propagation operator,
//! fixed-point iteration, and residuals of the canonical messages.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs;
use crate::graph::FactorGraph;
use crate::measure::{kahan_sum, Event};

/// A family of message pairs (ν_{x→a}, ν_{a→x}), one pair per incidence
/// (x, a) with x ∈ ∂a. Every message is a normalized distribution on Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    n: usize,
    q: usize,
    incidences: Vec<(usize, usize)>,
    to_constraint: Vec<Vec<f64>>,
    to_variable: Vec<Vec<f64>>,
}

impl MessageSet {
    pub fn new(
        n: usize,
        q: usize,
        incidences: Vec<(usize, usize)>,
        to_constraint: Vec<Vec<f64>>,
        to_variable: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if to_constraint.len() != incidences.len() || to_variable.len() != incidences.len() {
            return Err(Error::DimensionMismatch {
                left: to_constraint.len(),
                right: incidences.len(),
            });
        }
        for dist in to_constraint.iter().chain(&to_variable) {
            if dist.len() != q {
                return Err(Error::DimensionMismatch {
                    left: dist.len(),
                    right: q,
                });
            }
            let s = kahan_sum(dist.iter().copied());
            if (s - 1.0).abs() > 1e-9 || dist.iter().any(|&p| p < 0.0) {
                return Err(Error::Unnormalized { sum: s });
            }
        }
        Ok(MessageSet {
            n,
            q,
            incidences,
            to_constraint,
            to_variable,
        })
    }

    /// All messages uniform on Ω.
    pub fn uniform(g: &FactorGraph) -> Self {
        let incidences = g.incidences();
        let u = vec![1.0 / g.q() as f64; g.q()];
        MessageSet {
            n: g.n(),
            q: g.q(),
            to_constraint: vec![u.clone(); incidences.len()],
            to_variable: vec![u; incidences.len()],
            incidences,
        }
    }

    /// Seeded random messages (interior of the simplex).
    pub fn random(g: &FactorGraph, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let incidences = g.incidences();
        let q = g.q();
        let draw = |rng: &mut rand_chacha::ChaCha12Rng| {
            let mut v: Vec<f64> = (0..q).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        };
        let to_constraint = (0..incidences.len()).map(|_| draw(&mut rng)).collect();
        let to_variable = (0..incidences.len()).map(|_| draw(&mut rng)).collect();
        MessageSet {
            n: g.n(),
            q,
            incidences,
            to_constraint,
            to_variable,
        }
    }

    pub fn incidences(&self) -> &[(usize, usize)] {
        &self.incidences
    }

    pub fn len(&self) -> usize {
        self.incidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidences.is_empty()
    }

    fn position(&self, x: usize, a: usize) -> Option<usize> {
        self.incidences.binary_search(&(x, a)).ok()
    }

    pub fn to_constraint(&self, pos: usize) -> &[f64] {
        &self.to_constraint[pos]
    }

    pub fn to_variable(&self, pos: usize) -> &[f64] {
        &self.to_variable[pos]
    }

    /// ν_{x→a}, if the incidence exists.
    pub fn to_constraint_at(&self, x: usize, a: usize) -> Option<&[f64]> {
        self.position(x, a).map(|p| self.to_constraint[p].as_slice())
    }

    /// ν_{a→x}, if the incidence exists.
    pub fn to_variable_at(&self, x: usize, a: usize) -> Option<&[f64]> {
        self.position(x, a).map(|p| self.to_variable[p].as_slice())
    }

    fn same_shape(&self, other: &MessageSet) -> bool {
        self.n == other.n && self.q == other.q && self.incidences == other.incidences
    }

    /// JSON dump: one record per directed message.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Rec<'a> {
            x: usize,
            a: usize,
            dir: &'static str,
            dist: &'a [f64],
        }
        let mut recs = Vec::with_capacity(2 * self.incidences.len());
        for (pos, &(x, a)) in self.incidences.iter().enumerate() {
            recs.push(Rec {
                x: x + 1,
                a: a + 1,
                dir: "xa",
                dist: &self.to_constraint[pos],
            });
            recs.push(Rec {
                x: x + 1,
                a: a + 1,
                dir: "ax",
                dist: &self.to_variable[pos],
            });
        }
        serde_json::to_string_pretty(&recs).expect("messages serialize")
    }
}

fn tv_q(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// The metric D1 on M(G):
/// (1/|V|) Σ_{x, a∈∂x} [ TV(ν_{x→a}, ν'_{x→a}) + TV(ν_{a→x}, ν'_{a→x}) ].
pub fn message_metric(a: &MessageSet, b: &MessageSet) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::GraphMismatch);
    }
    let mut total = 0.0;
    for pos in 0..a.len() {
        total += tv_q(&a.to_constraint[pos], &b.to_constraint[pos]);
        total += tv_q(&a.to_variable[pos], &b.to_variable[pos]);
    }
    Ok(total / a.n as f64)
}

/// One synchronous application of the Belief Propagation operator:
/// ν̂_{x→a}(σ) ∝ Π_{b∈∂x∖a} ν_{b→x}(σ) (empty product → uniform) and
/// ν̂_{a→x}(σ) ∝ Σ_{τ} 1{τ_x=σ} ψ_a(τ) Π_{y∈∂a∖x} ν_{y→a}(τ_y).
pub fn bp_step(g: &FactorGraph, nu: &MessageSet) -> Result<MessageSet> {
    let expect = MessageSet::uniform(g);
    if !nu.same_shape(&expect) {
        return Err(Error::GraphMismatch);
    }
    let q = g.q();
    let mut to_con = Vec::with_capacity(nu.len());
    let mut to_var = Vec::with_capacity(nu.len());
    for &(x, a) in nu.incidences() {
        // variable-to-constraint update
        let mut vx = vec![1.0f64; q];
        for &b in g.var_constraints(x) {
            if b == a {
                continue;
            }
            let inc = nu
                .to_variable_at(x, b)
                .expect("incidence exists by construction");
            for (v, m) in vx.iter_mut().zip(inc) {
                *v *= m;
            }
        }
        to_con.push(normalize(vx, || format!("BP update x{x}->a{a}"))?);

        // constraint-to-variable update: sum over assignments of the
        // distinct variables of ∂a.
        let vars = g.constraints()[a].neighbor_set();
        let tuple = g.constraints()[a].neighbors();
        let slot_of: Vec<usize> = tuple
            .iter()
            .map(|v| vars.binary_search(v).expect("member"))
            .collect();
        let x_slot = vars.binary_search(&x).expect("x in its own constraint");
        let incoming: Vec<Option<&[f64]>> = vars
            .iter()
            .map(|&y| {
                if y == x {
                    None
                } else {
                    Some(nu.to_constraint_at(y, a).expect("incidence exists"))
                }
            })
            .collect();

        let mut va = vec![0.0f64; q];
        let mut assign = vec![0usize; vars.len()];
        let combos = q.pow(vars.len() as u32);
        let mut args = vec![0usize; tuple.len()];
        for _ in 0..combos {
            for (slot, arg) in slot_of.iter().zip(args.iter_mut()) {
                *arg = assign[*slot];
            }
            let mut w = g.constraints()[a].table().value(&args);
            if w != 0.0 {
                for (val, inc) in assign.iter().zip(&incoming) {
                    if let Some(msg) = inc {
                        w *= msg[*val];
                    }
                }
                va[assign[x_slot]] += w;
            }
            for slot in (0..assign.len()).rev() {
                assign[slot] += 1;
                if assign[slot] < q {
                    break;
                }
                assign[slot] = 0;
            }
        }
        to_var.push(normalize(va, || format!("BP update a{a}->x{x}"))?);
    }
    MessageSet::new(g.n(), q, nu.incidences().to_vec(), to_con, to_var)
}

fn normalize(mut v: Vec<f64>, what: impl Fn() -> String) -> Result<Vec<f64>> {
    let s = kahan_sum(v.iter().copied());
    if !(s > 0.0) {
        return Err(Error::ZeroNormalizer { what: what() });
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(v)
}

/// Result of a fixed-point search.
#[derive(Debug, Clone)]
pub struct BpFixedPoint {
    pub messages: MessageSet,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped synchronous iteration ν ← (1−λ)·BP(ν) + λ·ν until
/// D1(ν, BP(ν)) < tol or `max_iters`. Non-convergence is reported through
/// the returned residual, not as an error.
pub fn bp_iterate(
    g: &FactorGraph,
    nu0: &MessageSet,
    damping: f64,
    max_iters: usize,
    tol: f64,
) -> Result<BpFixedPoint> {
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::InvalidParameter(format!(
            "damping must lie in [0,1), got {damping}"
        )));
    }
    let mut nu = nu0.clone();
    let mut residual = 0.0;
    for it in 0..=max_iters {
        let next = bp_step(g, &nu)?;
        residual = message_metric(&nu, &next)?;
        if residual < tol || it == max_iters {
            return Ok(BpFixedPoint {
                messages: nu,
                residual,
                iterations: it,
            });
        }
        nu = blend(&next, &nu, damping)?;
    }
    Ok(BpFixedPoint {
        messages: nu,
        residual,
        iterations: max_iters,
    })
}

fn blend(new: &MessageSet, old: &MessageSet, damping: f64) -> Result<MessageSet> {
    let mut to_con = Vec::with_capacity(new.len());
    let mut to_var = Vec::with_capacity(new.len());
    for pos in 0..new.len() {
        let mix = |a: &[f64], b: &[f64]| -> Result<Vec<f64>> {
            let v: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(x, y)| (1.0 - damping) * x + damping * y)
                .collect();
            normalize(v, || "damped blend".to_string())
        };
        to_con.push(mix(&new.to_constraint[pos], &old.to_constraint[pos])?);
        to_var.push(mix(&new.to_variable[pos], &old.to_variable[pos])?);
    }
    MessageSet::new(
        new.n,
        new.q,
        new.incidences.clone(),
        to_con,
        to_var,
    )
}

/// The canonical message set (μ_{G,x→a}[·|S], μ_{G,a→x}[·|S]).
pub fn canonical_messages(g: &FactorGraph, event: &Event) -> Result<MessageSet> {
    gibbs::standard_messages(g, event)
}

/// D1 distance between the canonical messages and their BP image.
pub fn canonical_residual(g: &FactorGraph, event: &Event) -> Result<f64> {
    let canon = canonical_messages(g, event)?;
    let stepped = bp_step(g, &canon)?;
    message_metric(&canon, &stepped)
}

/// Potts-form fixed-point residual on an all-edges graph:
/// (1/n) Σ over directed adjacent pairs Σ_ω |μ_{v→w}[ω|S] − update(ω)|
/// with update(ω) ∝ Π_{u∈∂v∖w} (1 − (1−e^{−β}) μ_{u→v}[ω|S]).
/// Edge messages follow the removed-edge definition; self-loops are skipped.
pub fn potts_bp_residual(g: &FactorGraph, beta: f64, event: &Event) -> Result<f64> {
    let q = g.q();
    let damp = 1.0 - (-beta).exp();
    // Edge list: (constraint, v, w) for both directions of each edge.
    let mut edges = Vec::new();
    for (a, c) in g.constraints().iter().enumerate() {
        if c.table().is_hard() {
            continue;
        }
        if c.table().arity() != 2 {
            return Err(Error::InvalidParameter(format!(
                "constraint {a} has arity {}, Potts residual needs edges",
                c.table().arity()
            )));
        }
        let set = c.neighbor_set();
        if set.len() != 2 {
            continue; // self-loop: constant factor, no message
        }
        edges.push((a, set[0], set[1]));
        edges.push((a, set[1], set[0]));
    }
    // Messages across each edge, keyed by (constraint, source).
    let mut msg = std::collections::BTreeMap::new();
    for &(a, v, _w) in &edges {
        msg.entry((a, v))
            .or_insert(gibbs::potts_edge_message(g, event, a, v)?);
    }
    let mut total = 0.0;
    for &(a, v, w) in &edges {
        // update for the message v -> w from the messages u -> v, u != w.
        let mut prod = vec![1.0f64; q];
        for &(b, s, t) in &edges {
            if t == v && !(b == a && s == w) {
                let m = &msg[&(b, s)];
                for (p, mval) in prod.iter_mut().zip(m) {
                    *p *= 1.0 - damp * mval;
                }
            }
        }
        let z = kahan_sum(prod.iter().copied());
        if !(z > 0.0) {
            return Err(Error::ZeroNormalizer {
                what: format!("Potts BP update across constraint {a}"),
            });
        }
        let lhs = &msg[&(a, v)];
        for omega in 0..q {
            total += (lhs[omega] - prod[omega] / z).abs();
        }
    }
    Ok(total / g.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{demo_edge_graph, empty_graph, Constraint, SpinDomain, WeightTable};
    use crate::measure::EventSet;
    use std::sync::Arc;

    fn path3() -> FactorGraph {
        let omega = SpinDomain::new(2).unwrap();
        let t = Arc::new(WeightTable::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap());
        FactorGraph::build(
            3,
            omega,
            vec![
                Constraint::new(vec![0, 1], Arc::clone(&t)),
                Constraint::new(vec![1, 2], t),
            ],
        )
        .unwrap()
    }

    #[test]
    fn metric_zero_on_self() {
        let g = demo_edge_graph();
        let nu = MessageSet::uniform(&g);
        assert_eq!(message_metric(&nu, &nu).unwrap(), 0.0);
    }

    #[test]
    fn metric_on_demo_edge_point_masses() {
        // uniform vs (1,0)-everywhere: 4 directed messages of TV 1/2 over
        // |V| = 2 gives 1.
        let g = demo_edge_graph();
        let nu = MessageSet::uniform(&g);
        let ones = MessageSet::new(
            2,
            2,
            nu.incidences().to_vec(),
            vec![vec![1.0, 0.0]; 2],
            vec![vec![1.0, 0.0]; 2],
        )
        .unwrap();
        assert!((message_metric(&nu, &ones).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_single_direction_point_masses() {
        // one variable with one unary constraint: one incidence
        let omega = SpinDomain::new(2).unwrap();
        let t = Arc::new(WeightTable::new(1, 2, vec![1.0, 1.0]).unwrap());
        let g = FactorGraph::build(1, omega, vec![Constraint::new(vec![0], t)]).unwrap();
        let base = MessageSet::uniform(&g);
        let d0 = MessageSet::new(
            1,
            2,
            base.incidences().to_vec(),
            vec![vec![1.0, 0.0]],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        let d1 = MessageSet::new(
            1,
            2,
            base.incidences().to_vec(),
            vec![vec![0.0, 1.0]],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        assert!((message_metric(&d0, &d1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bp_step_on_empty_graph() {
        let g = empty_graph(3, 2).unwrap();
        let nu = MessageSet::uniform(&g);
        let out = bp_step(&g, &nu).unwrap();
        assert!(out.is_empty());
        assert_eq!(message_metric(&nu, &out).unwrap(), 0.0);
    }

    #[test]
    fn bp_step_uniform_on_demo_edge() {
        let g = demo_edge_graph();
        let out = bp_step(&g, &MessageSet::uniform(&g)).unwrap();
        for pos in 0..out.len() {
            for &v in out.to_variable(pos) {
                assert!((v - 0.5).abs() < 1e-12);
            }
            for &v in out.to_constraint(pos) {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bp_preserves_normalization() {
        let g = path3();
        let nu = MessageSet::random(&g, 7);
        let out = bp_step(&g, &nu).unwrap();
        for pos in 0..out.len() {
            let s1 = kahan_sum(out.to_constraint(pos).iter().copied());
            let s2 = kahan_sum(out.to_variable(pos).iter().copied());
            assert!((s1 - 1.0).abs() < 1e-12);
            assert!((s2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_messages_are_fixed_points_on_trees() {
        let g = path3();
        let r = canonical_residual(&g, &Event::Full).unwrap();
        assert!(r < 1e-9, "tree residual {r}");
    }

    #[test]
    fn canonical_fixed_point_survives_bp_step_exactly() {
        let g = path3();
        let canon = canonical_messages(&g, &Event::Full).unwrap();
        let stepped = bp_step(&g, &canon).unwrap();
        assert!(message_metric(&canon, &stepped).unwrap() < 1e-12);
    }

    #[test]
    fn iterate_converges_on_tree_from_uniform() {
        let g = path3();
        let fp = bp_iterate(&g, &MessageSet::uniform(&g), 0.0, 50, 1e-10).unwrap();
        assert!(fp.residual < 1e-10);
        // diameter of the incidence graph is 4; variable-depth 2
        assert!(fp.iterations <= 4, "took {} iterations", fp.iterations);
        let canon = canonical_messages(&g, &Event::Full).unwrap();
        assert!(message_metric(&fp.messages, &canon).unwrap() < 1e-9);
    }

    #[test]
    fn iterate_on_empty_graph_stops_immediately() {
        let g = empty_graph(2, 2).unwrap();
        let fp = bp_iterate(&g, &MessageSet::uniform(&g), 0.0, 10, 1e-12).unwrap();
        assert_eq!(fp.iterations, 0);
        assert_eq!(fp.residual, 0.0);
    }

    #[test]
    fn demo_edge_converges_fast_from_random() {
        let g = demo_edge_graph();
        let fp = bp_iterate(&g, &MessageSet::random(&g, 3), 0.0, 10, 1e-10).unwrap();
        assert!(fp.iterations <= 2);
        assert!(fp.residual < 1e-10);
    }

    #[test]
    fn potts_residual_zero_on_tree() {
        let g = path3();
        let beta = (2.0f64).ln();
        let r = potts_bp_residual(&g, beta, &Event::Full).unwrap();
        assert!(r < 1e-9, "potts residual {r}");
    }

    #[test]
    fn canonical_residual_on_conditioned_event() {
        // S = {00, 01}: still a valid message family on the demo edge.
        let g = demo_edge_graph();
        let s = Event::Set(EventSet::new(vec![0, 1]));
        let r = canonical_residual(&g, &s).unwrap();
        assert!(r.is_finite());
    }

    #[test]
    fn json_dump_shape() {
        let g = demo_edge_graph();
        let nu = MessageSet::uniform(&g);
        let text = nu.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.as_array().unwrap().len(), 4);
        assert_eq!(parsed[0]["dir"], "xa");
        assert_eq!(parsed[0]["x"], 1);
    }
}
