//! Dense probability measures on Ω^n, subcube and general events,
//! marginals and conditionals.
//!
//! Configurations are indexed lexicographically with variable 0 most
//! significant: index(σ) = Σ_i σ_i q^{n-1-i}. All mass sums use
//! compensated summation so results are deterministic and accurate at the
//! full enumeration budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpinDomain;

pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Kahan compensated sum over a slice.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// index ↦ configuration, most significant digit first.
pub fn index_to_config(mut index: usize, n: usize, q: usize) -> Vec<usize> {
    let mut config = vec![0usize; n];
    for i in (0..n).rev() {
        config[i] = index % q;
        index /= q;
    }
    config
}

/// configuration ↦ index.
pub fn config_to_index(config: &[usize], q: usize) -> usize {
    let mut idx = 0usize;
    for &s in config {
        idx = idx * q + s;
    }
    idx
}

/// Iterate all configurations of length `n` in index order, reusing one
/// buffer (odometer increment, so the per-step cost is amortized O(1)).
pub fn for_each_config(n: usize, q: usize, mut f: impl FnMut(usize, &[usize])) {
    let total = q.pow(n as u32);
    let mut config = vec![0usize; n];
    for idx in 0..total {
        f(idx, &config);
        for i in (0..n).rev() {
            config[i] += 1;
            if config[i] < q {
                break;
            }
            config[i] = 0;
        }
    }
}

/// The subcube event S^{I,σ} = {τ : τ|_I = σ}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubcubeEvent {
    vars: Vec<usize>,
    sigma: Vec<usize>,
}

impl SubcubeEvent {
    /// `vars` and `sigma` are stored sorted by variable index.
    pub fn new(vars: &[usize], sigma: &[usize]) -> Result<Self> {
        if vars.len() != sigma.len() {
            return Err(Error::DimensionMismatch {
                left: vars.len(),
                right: sigma.len(),
            });
        }
        let mut pairs: Vec<(usize, usize)> = vars.iter().copied().zip(sigma.iter().copied()).collect();
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 != w[1].1 {
                return Err(Error::InvalidParameter(format!(
                    "variable {} pinned to two different spins",
                    w[0].0
                )));
            }
        }
        pairs.dedup();
        Ok(SubcubeEvent {
            vars: pairs.iter().map(|p| p.0).collect(),
            sigma: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn contains(&self, config: &[usize]) -> bool {
        self.vars
            .iter()
            .zip(&self.sigma)
            .all(|(&x, &s)| config[x] == s)
    }

    /// Number of configurations in the subcube inside Ω^n.
    pub fn size(&self, n: usize, q: usize) -> usize {
        q.pow((n - self.vars.len()) as u32)
    }
}

/// An explicit event S ⊆ Ω^n as a sorted set of configuration indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSet {
    indices: Vec<usize>,
}

impl EventSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        EventSet { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A conditioning event: the full cube, a compact subcube, or an explicit
/// index set. Subcubes stay compact until an operation needs their members.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Full,
    Subcube(SubcubeEvent),
    Set(EventSet),
}

impl Event {
    pub fn full() -> Self {
        Event::Full
    }

    pub fn is_empty(&self, _n: usize, _q: usize) -> bool {
        matches!(self, Event::Set(s) if s.is_empty())
    }

    pub fn size(&self, n: usize, q: usize) -> usize {
        match self {
            Event::Full => q.pow(n as u32),
            Event::Subcube(sc) => sc.size(n, q),
            Event::Set(s) => s.len(),
        }
    }

    pub fn contains_index(&self, idx: usize, n: usize, q: usize) -> bool {
        match self {
            Event::Full => true,
            Event::Subcube(sc) => sc.contains(&index_to_config(idx, n, q)),
            Event::Set(s) => s.indices.binary_search(&idx).is_ok(),
        }
    }

    /// Visit every member configuration in index order.
    pub fn for_each_member(&self, n: usize, q: usize, mut f: impl FnMut(usize, &[usize])) {
        match self {
            Event::Full => for_each_config(n, q, f),
            Event::Subcube(sc) => {
                let free: Vec<usize> = (0..n).filter(|i| !sc.vars.contains(i)).collect();
                let mut config = vec![0usize; n];
                for (&x, &s) in sc.vars.iter().zip(&sc.sigma) {
                    config[x] = s;
                }
                let total = q.pow(free.len() as u32);
                for _ in 0..total {
                    f(config_to_index(&config, q), &config);
                    for &i in free.iter().rev() {
                        config[i] += 1;
                        if config[i] < q {
                            break;
                        }
                        config[i] = 0;
                    }
                }
            }
            Event::Set(s) => {
                for &idx in &s.indices {
                    f(idx, &index_to_config(idx, n, q));
                }
            }
        }
    }
}

/// An explicit probability vector over Ω^n.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMeasure {
    n: usize,
    omega: SpinDomain,
    probs: Vec<f64>,
}

impl DenseMeasure {
    /// Validate non-negativity and normalization (within `NORMALIZATION_TOL`).
    pub fn new(n: usize, omega: SpinDomain, probs: Vec<f64>) -> Result<Self> {
        let expect = omega.size().checked_pow(n as u32).ok_or_else(|| {
            Error::InvalidParameter(format!("q^n overflows for q={}, n={n}", omega.size()))
        })?;
        if probs.len() != expect {
            return Err(Error::DimensionMismatch {
                left: probs.len(),
                right: expect,
            });
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidParameter("negative or non-finite probability".into()));
        }
        let total = kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Unnormalized { sum: total });
        }
        Ok(DenseMeasure { n, omega, probs })
    }

    /// Normalize a non-negative mass vector; errors if the total mass is 0.
    pub fn from_masses(n: usize, omega: SpinDomain, mut masses: Vec<f64>) -> Result<Self> {
        let total = kahan_sum(masses.iter().copied());
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroSupport);
        }
        for m in &mut masses {
            *m /= total;
        }
        DenseMeasure::new(n, omega, masses)
    }

    pub fn uniform(n: usize, omega: SpinDomain) -> Self {
        let total = omega.size().pow(n as u32);
        DenseMeasure {
            n,
            omega,
            probs: vec![1.0 / total as f64; total],
        }
    }

    pub fn point_mass(n: usize, omega: SpinDomain, config: &[usize]) -> Result<Self> {
        if config.len() != n {
            return Err(Error::DimensionMismatch {
                left: config.len(),
                right: n,
            });
        }
        let total = omega.size().pow(n as u32);
        let mut probs = vec![0.0; total];
        probs[config_to_index(config, omega.size())] = 1.0;
        Ok(DenseMeasure { n, omega, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega(&self) -> SpinDomain {
        self.omega
    }

    pub fn q(&self) -> usize {
        self.omega.size()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, idx: usize) -> f64 {
        self.probs[idx]
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    /// Probability of an event.
    pub fn event_prob(&self, event: &Event) -> f64 {
        match event {
            Event::Full => 1.0,
            _ => {
                let mut terms = Vec::new();
                event.for_each_member(self.n, self.q(), |idx, _| terms.push(self.probs[idx]));
                kahan_sum(terms)
            }
        }
    }

    /// Joint marginal μ_I on Ω^I for a variable set `I` (sorted, deduped).
    /// `I = ∅` yields the trivial one-point measure.
    pub fn marginal(&self, vars: &[usize]) -> Result<DenseMeasure> {
        let mut set: Vec<usize> = vars.to_vec();
        set.sort_unstable();
        set.dedup();
        for &x in &set {
            if x >= self.n {
                return Err(Error::IndexOutOfRange { index: x, n: self.n });
            }
        }
        Ok(self.marginal_sorted(&set))
    }

    fn marginal_sorted(&self, set: &[usize]) -> DenseMeasure {
        let q = self.q();
        let k = set.len();
        let mut out = vec![0.0; q.pow(k as u32)];
        for_each_config(self.n, q, |idx, config| {
            let mut sub = 0usize;
            for &x in set {
                sub = sub * q + config[x];
            }
            out[sub] += self.probs[idx];
        });
        DenseMeasure {
            n: k,
            omega: self.omega,
            probs: out,
        }
    }

    /// Joint law of an ordered index tuple (repeats allowed), as a measure
    /// on Ω^len(tuple).
    pub fn tuple_marginal(&self, tuple: &[usize]) -> Result<DenseMeasure> {
        for &x in tuple {
            if x >= self.n {
                return Err(Error::IndexOutOfRange { index: x, n: self.n });
            }
        }
        let q = self.q();
        let mut out = vec![0.0; q.pow(tuple.len() as u32)];
        for_each_config(self.n, q, |idx, config| {
            let mut sub = 0usize;
            for &x in tuple {
                sub = sub * q + config[x];
            }
            out[sub] += self.probs[idx];
        });
        Ok(DenseMeasure {
            n: tuple.len(),
            omega: self.omega,
            probs: out,
        })
    }

    /// All single-variable marginals as an n × q table.
    pub fn single_marginals(&self) -> Vec<Vec<f64>> {
        let q = self.q();
        let mut out = vec![vec![0.0; q]; self.n];
        for_each_config(self.n, q, |idx, config| {
            let p = self.probs[idx];
            for (i, &s) in config.iter().enumerate() {
                out[i][s] += p;
            }
        });
        out
    }

    /// μ[·|S]. On μ(S) = 0 the fallback is the uniform distribution on S
    /// (for both subcube and explicit events). Empty explicit events error.
    pub fn condition(&self, event: &Event) -> Result<DenseMeasure> {
        if let Event::Set(s) = event {
            if s.is_empty() {
                return Err(Error::EmptySet { what: "conditioning event" });
            }
        }
        let q = self.q();
        let mass = self.event_prob(event);
        let mut out = vec![0.0; self.probs.len()];
        if mass > 0.0 {
            event.for_each_member(self.n, q, |idx, _| {
                out[idx] = self.probs[idx] / mass;
            });
        } else {
            let card = event.size(self.n, q) as f64;
            event.for_each_member(self.n, q, |idx, _| {
                out[idx] = 1.0 / card;
            });
        }
        DenseMeasure::from_masses(self.n, self.omega, out)
    }

    /// Product measure ⊗_i ρ_i from per-variable marginals (n rows of q
    /// non-negative entries, each row summing to 1).
    pub fn product_of_marginals(omega: SpinDomain, marginals: &[Vec<f64>]) -> Result<DenseMeasure> {
        let q = omega.size();
        let n = marginals.len();
        for row in marginals {
            if row.len() != q {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: q,
                });
            }
            let s = kahan_sum(row.iter().copied());
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Unnormalized { sum: s });
            }
        }
        let total = q.pow(n as u32);
        let mut probs = vec![0.0; total];
        for_each_config(n, q, |idx, config| {
            let mut p = 1.0;
            for (i, &s) in config.iter().enumerate() {
                p *= marginals[i][s];
            }
            probs[idx] = p;
        });
        DenseMeasure::from_masses(n, omega, probs)
    }

    /// The product of this measure's own marginals, ⊗_i μ_i.
    pub fn marginal_product(&self) -> DenseMeasure {
        DenseMeasure::product_of_marginals(self.omega, &self.single_marginals())
            .expect("marginals of a measure are normalized")
    }

    /// Mixture Σ_i w_i μ_i of measures on a common space.
    pub fn mixture(weights: &[f64], components: &[DenseMeasure]) -> Result<DenseMeasure> {
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                left: weights.len(),
                right: components.len(),
            });
        }
        if components.is_empty() {
            return Err(Error::EmptySet { what: "mixture component list" });
        }
        let wsum = kahan_sum(weights.iter().copied());
        if (wsum - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Unnormalized { sum: wsum });
        }
        let first = &components[0];
        let mut probs = vec![0.0; first.probs.len()];
        for (w, comp) in weights.iter().zip(components) {
            if comp.n != first.n || comp.q() != first.q() {
                return Err(Error::DimensionMismatch {
                    left: comp.probs.len(),
                    right: first.probs.len(),
                });
            }
            for (o, p) in probs.iter_mut().zip(&comp.probs) {
                *o += w * p;
            }
        }
        DenseMeasure::from_masses(first.n, first.omega, probs)
    }

    /// Half-ℓ1 total variation distance to another measure on the same space.
    pub fn tv(&self, other: &DenseMeasure) -> Result<f64> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::DimensionMismatch {
                left: self.probs.len(),
                right: other.probs.len(),
            });
        }
        let diff = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs());
        Ok(0.5 * kahan_sum(diff))
    }

    /// CSV with header `index,prob`, one row per configuration index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,prob\n");
        for (i, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{i},{p}\n"));
        }
        out
    }

    pub fn from_csv(n: usize, omega: SpinDomain, text: &str) -> Result<DenseMeasure> {
        let mut probs = vec![0.0; omega.size().pow(n as u32)];
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                if line.trim() != "index,prob" {
                    return Err(Error::InvalidParameter(format!(
                        "bad measure CSV header: {line:?}"
                    )));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (idx, prob) = line.split_once(',').ok_or_else(|| {
                Error::InvalidParameter(format!("bad measure CSV row: {line:?}"))
            })?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|e| Error::InvalidParameter(format!("bad index: {e}")))?;
            if idx >= probs.len() {
                return Err(Error::IndexOutOfRange { index: idx, n: probs.len() });
            }
            probs[idx] = prob
                .trim()
                .parse()
                .map_err(|e| Error::InvalidParameter(format!("bad prob: {e}")))?;
        }
        DenseMeasure::new(n, omega, probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q2() -> SpinDomain {
        SpinDomain::new(2).unwrap()
    }

    /// The Gibbs table of the demo edge graph, entered directly.
    fn demo_measure() -> DenseMeasure {
        DenseMeasure::new(2, q2(), vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]).unwrap()
    }

    #[test]
    fn index_round_trip() {
        for idx in 0..27 {
            let c = index_to_config(idx, 3, 3);
            assert_eq!(config_to_index(&c, 3), idx);
        }
        // variable 0 most significant
        assert_eq!(config_to_index(&[1, 0, 0], 2), 4);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(
            DenseMeasure::new(1, q2(), vec![0.5, 0.6]),
            Err(Error::Unnormalized { .. })
        ));
    }

    #[test]
    fn marginal_of_demo_measure() {
        let mu = demo_measure();
        let m1 = mu.marginal(&[0]).unwrap();
        assert!((m1.prob(0) - 0.5).abs() < 1e-15);
        assert!((m1.prob(1) - 0.5).abs() < 1e-15);
        // I = [n] returns the measure itself
        let all = mu.marginal(&[0, 1]).unwrap();
        assert_eq!(all.probs(), mu.probs());
        // empty I is the trivial point measure
        let none = mu.marginal(&[]).unwrap();
        assert_eq!(none.probs().len(), 1);
        assert!((none.probs()[0] - 1.0).abs() <= NORMALIZATION_TOL);
    }

    #[test]
    fn marginal_of_uniform_is_uniform() {
        let mu = DenseMeasure::uniform(4, q2());
        let m = mu.marginal(&[1, 3]).unwrap();
        assert_eq!(m.probs(), &[0.25; 4]);
    }

    #[test]
    fn condition_on_subcube() {
        let mu = demo_measure();
        let event = Event::Subcube(SubcubeEvent::new(&[0], &[0]).unwrap());
        let cond = mu.condition(&event).unwrap();
        let expect = [1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0];
        for (a, b) in cond.probs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn condition_zero_mass_falls_back_to_uniform() {
        let delta = DenseMeasure::point_mass(2, q2(), &[1, 1]).unwrap();
        let event = Event::Subcube(SubcubeEvent::new(&[0], &[0]).unwrap());
        let cond = delta.condition(&event).unwrap();
        assert_eq!(cond.probs(), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn condition_on_full_cube_is_identity() {
        let mu = demo_measure();
        let cond = mu.condition(&Event::Full).unwrap();
        for (a, b) in cond.probs().iter().zip(mu.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn condition_rejects_empty_set() {
        let mu = demo_measure();
        assert!(matches!(
            mu.condition(&Event::Set(EventSet::new(vec![]))),
            Err(Error::EmptySet { .. })
        ));
    }

    #[test]
    fn subcube_members_in_order() {
        let sc = SubcubeEvent::new(&[1], &[1]).unwrap();
        let mut seen = Vec::new();
        Event::Subcube(sc).for_each_member(2, 2, |idx, _| seen.push(idx));
        assert_eq!(seen, vec![1, 3]);
    }

    #[test]
    fn product_and_mixture() {
        let mu = demo_measure();
        let prod = mu.marginal_product();
        assert_eq!(prod.probs(), &[0.25; 4]);

        let a = DenseMeasure::point_mass(1, q2(), &[0]).unwrap();
        let b = DenseMeasure::point_mass(1, q2(), &[1]).unwrap();
        let mix = DenseMeasure::mixture(&[1.0, 0.0], &[a.clone(), b]).unwrap();
        assert_eq!(mix.probs(), a.probs());
    }

    #[test]
    fn tv_basics() {
        let mu = demo_measure();
        assert_eq!(mu.tv(&mu).unwrap(), 0.0);
        let d0 = DenseMeasure::point_mass(2, q2(), &[0, 0]).unwrap();
        let d3 = DenseMeasure::point_mass(2, q2(), &[1, 1]).unwrap();
        assert_eq!(d0.tv(&d3).unwrap(), 1.0);
        let prod = mu.marginal_product();
        assert!((mu.tv(&prod).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let mu = demo_measure();
        let text = mu.to_csv();
        assert!(text.starts_with("index,prob\n0,"));
        let back = DenseMeasure::from_csv(2, q2(), &text).unwrap();
        assert_eq!(back.probs(), mu.probs());
    }

    #[test]
    fn marginals_normalized() {
        let mu = demo_measure();
        for set in [vec![0], vec![1], vec![0, 1]] {
            let m = mu.marginal(&set).unwrap();
            let s = kahan_sum(m.probs().iter().copied());
            assert!((s - 1.0).abs() <= NORMALIZATION_TOL);
        }
    }
}
