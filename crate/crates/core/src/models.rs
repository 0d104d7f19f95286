//! Seeded generators for the random factor graph model G(n, m, P), its
//! Poissonized variant with m ~ Po(dn/k), and the Potts / k-SAT weight
//! families.
//!
//! Reproducibility contract: every sampled object draws from its own
//! counter-based substream of the root seed, so generation is
//! order-independent and bitwise deterministic for a fixed seed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Constraint, FactorGraph, SpinDomain, WeightTable};
use crate::measure::{index_to_config, kahan_sum, DenseMeasure};

/// A finite family of weight tables (Ψ, P): shared arity, P a distribution.
#[derive(Debug, Clone)]
pub struct WeightFamily {
    arity: usize,
    q: usize,
    tables: Vec<Arc<WeightTable>>,
    probs: Vec<f64>,
}

impl WeightFamily {
    pub fn new(q: usize, tables: Vec<Arc<WeightTable>>, probs: Vec<f64>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::EmptySet { what: "weight family" });
        }
        if tables.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                left: tables.len(),
                right: probs.len(),
            });
        }
        let arity = tables[0].arity();
        if tables.iter().any(|t| t.arity() != arity) {
            return Err(Error::InvalidParameter(
                "all tables in a family must share one arity".into(),
            ));
        }
        let total = kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 || probs.iter().any(|&p| p < 0.0) {
            return Err(Error::Unnormalized { sum: total });
        }
        Ok(WeightFamily {
            arity,
            q,
            tables,
            probs,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn tables(&self) -> &[Arc<WeightTable>] {
        &self.tables
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Potts family: the single table ψ_β(σ1,σ2) = exp(−β·1{σ1=σ2}).
pub fn potts_family(q: usize, beta: f64) -> Result<WeightFamily> {
    if q < 2 {
        return Err(Error::InvalidParameter(format!("potts needs q >= 2, got {q}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("potts needs beta > 0, got {beta}")));
    }
    let same = (-beta).exp();
    let mut values = vec![1.0; q * q];
    for s in 0..q {
        values[s * q + s] = same;
    }
    let table = Arc::new(WeightTable::new(2, q, values)?);
    WeightFamily::new(q, vec![table], vec![1.0])
}

/// k-SAT family: 2^k tables indexed by the sign pattern ξ ∈ {±1}^k with
/// ψ_ξ(σ) = 1 − (1−e^{−β}) 2^{−k} Π_i (1+ξ_i σ_i), P uniform.
///
/// Spins are encoded 0 ↔ +1 and 1 ↔ −1, so ψ_ξ(σ) = e^{−β} exactly when
/// the spin pattern coincides with ξ (the clause is violated) and 1
/// otherwise.
pub fn ksat_family(k: usize, beta: f64) -> Result<WeightFamily> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k-SAT needs k >= 2, got {k}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("k-SAT needs beta > 0, got {beta}")));
    }
    let unsat = (-beta).exp();
    let count = 1usize << k;
    let mut tables = Vec::with_capacity(count);
    for xi in 0..count {
        let values = (0..count)
            .map(|sigma| if sigma == xi { unsat } else { 1.0 })
            .collect();
        tables.push(Arc::new(WeightTable::new(k, 2, values)?));
    }
    let probs = vec![1.0 / count as f64; count];
    WeightFamily::new(2, tables, probs)
}

/// Number of constraints: fixed, or Po(dn/k) for average degree d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintCount {
    Fixed(usize),
    AverageDegree(f64),
}

/// Full model specification; sampling is a pure function of this value.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub n: usize,
    pub family: WeightFamily,
    pub count: ConstraintCount,
    pub seed: u64,
}

/// Counter-based substreams of one root seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed }
    }

    /// Independent stream `i`; draws here never affect other substreams.
    pub fn substream(&self, i: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(i);
        rng
    }
}

/// Poisson draw by CDF inversion from a single uniform.
pub fn poisson_sample(lambda: f64, rng: &mut impl Rng) -> usize {
    debug_assert!(lambda >= 0.0);
    let u: f64 = rng.gen();
    let mut k = 0usize;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let cap = (lambda + 20.0 * lambda.sqrt() + 100.0) as usize;
    while u >= cdf && k < cap {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// Draw G(n, m, P): m constraints with ∂a ∈ V^k uniform (repeats allowed)
/// and ψ_a ~ P, all independent. With `AverageDegree(d)`, m ~ Po(dn/k)
/// comes from substream 0; constraint i draws from substream i+1.
pub fn sample_graph(spec: &ModelSpec) -> Result<FactorGraph> {
    if spec.n == 0 {
        return Err(Error::InvalidParameter("model needs n >= 1".into()));
    }
    let stream = SeedStream::new(spec.seed);
    let k = spec.family.arity();
    let m = match spec.count {
        ConstraintCount::Fixed(m) => m,
        ConstraintCount::AverageDegree(d) => {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "average degree must be positive, got {d}"
                )));
            }
            let lambda = d * spec.n as f64 / k as f64;
            poisson_sample(lambda, &mut stream.substream(0))
        }
    };
    let mut constraints = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = stream.substream(1 + i as u64);
        let neighbors: Vec<usize> = (0..k).map(|_| rng.gen_range(0..spec.n)).collect();
        let u: f64 = rng.gen();
        let mut choice = spec.family.tables().len() - 1;
        let mut cdf = 0.0;
        for (t, &p) in spec.family.probs().iter().enumerate() {
            cdf += p;
            if u < cdf {
                choice = t;
                break;
            }
        }
        constraints.push(Constraint::new(
            neighbors,
            Arc::clone(&spec.family.tables()[choice]),
        ));
    }
    FactorGraph::build(spec.n, SpinDomain::new(spec.family.q())?, constraints)
}

/// Exact inverse-CDF sample from a dense table; deterministic per seed.
pub fn sample_config(mu: &DenseMeasure, rng: &mut impl Rng) -> Vec<usize> {
    let u: f64 = rng.gen();
    let mut cdf = 0.0;
    let mut chosen = None;
    for (idx, &p) in mu.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cdf += p;
        chosen = Some(idx);
        if u < cdf {
            break;
        }
    }
    let idx = chosen.expect("a normalized measure has positive mass");
    index_to_config(idx, mu.n(), mu.q())
}

/// CLI-facing model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpecFile {
    pub model: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub seed: u64,
}

impl ModelSpecFile {
    /// Resolve into a sampling spec. Exactly one of `d`, `m` must be set.
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let count = match (self.d, self.m) {
            (Some(d), None) => ConstraintCount::AverageDegree(d),
            (None, Some(m)) => ConstraintCount::Fixed(m),
            _ => {
                return Err(Error::InvalidParameter(
                    "exactly one of \"d\" or \"m\" must be given".into(),
                ))
            }
        };
        let family = match self.model.as_str() {
            "potts" => {
                if let Some(k) = self.k {
                    if k != 2 {
                        return Err(Error::InvalidParameter(
                            "the potts family has arity 2".into(),
                        ));
                    }
                }
                potts_family(self.q.unwrap_or(2), self.beta)?
            }
            "ksat" => {
                if let Some(q) = self.q {
                    if q != 2 {
                        return Err(Error::InvalidParameter("k-SAT is binary".into()));
                    }
                }
                ksat_family(self.k.ok_or_else(|| {
                    Error::InvalidParameter("k-SAT needs an explicit \"k\"".into())
                })?, self.beta)?
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown model {other:?} (expected \"potts\" or \"ksat\")"
                )))
            }
        };
        Ok(ModelSpec {
            n: self.n,
            family,
            count,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::gibbs_table;
    use crate::graph::demo_edge_graph;

    #[test]
    fn potts_table_at_ln2() {
        let fam = potts_family(2, (2.0f64).ln()).unwrap();
        assert_eq!(fam.arity(), 2);
        let t = &fam.tables()[0];
        let expect = [0.5, 1.0, 1.0, 0.5];
        for (v, e) in t.values().iter().zip(expect) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn potts_rejects_bad_parameters() {
        assert!(potts_family(1, 1.0).is_err());
        assert!(potts_family(3, 0.0).is_err());
        assert!(potts_family(3, -1.0).is_err());
    }

    #[test]
    fn potts_minimum_value_is_positive() {
        for (q, beta) in [(2, 0.5), (3, 4.0), (5, 12.0)] {
            let fam = potts_family(q, beta).unwrap();
            let min = fam.tables()[0]
                .values()
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            assert!((min - (-beta as f64).exp()).abs() < 1e-15);
            assert!(min > 0.0);
        }
    }

    #[test]
    fn ksat_tables_have_single_unsat_entry() {
        let beta = 1.0;
        let fam = ksat_family(2, beta).unwrap();
        assert_eq!(fam.tables().len(), 4);
        for (xi, t) in fam.tables().iter().enumerate() {
            let mut low = 0;
            for (idx, &v) in t.values().iter().enumerate() {
                if idx == xi {
                    assert!((v - (-beta as f64).exp()).abs() < 1e-15);
                    low += 1;
                } else {
                    assert!((v - 1.0).abs() < 1e-15);
                }
            }
            assert_eq!(low, 1);
        }
    }

    #[test]
    fn sample_graph_is_deterministic() {
        let spec = ModelSpec {
            n: 10,
            family: potts_family(2, 1.0).unwrap(),
            count: ConstraintCount::AverageDegree(2.0),
            seed: 42,
        };
        let g1 = sample_graph(&spec).unwrap();
        let g2 = sample_graph(&spec).unwrap();
        assert_eq!(g1.num_constraints(), g2.num_constraints());
        for (a, b) in g1.constraints().iter().zip(g2.constraints()) {
            assert_eq!(a.neighbors(), b.neighbors());
            assert_eq!(a.table().values(), b.table().values());
        }
    }

    #[test]
    fn fixed_zero_constraints_gives_empty_graph() {
        let spec = ModelSpec {
            n: 5,
            family: potts_family(2, 1.0).unwrap(),
            count: ConstraintCount::Fixed(0),
            seed: 7,
        };
        let g = sample_graph(&spec).unwrap();
        assert_eq!(g.num_constraints(), 0);
    }

    #[test]
    fn poisson_mean_tracks_lambda() {
        let stream = SeedStream::new(11);
        let lambda = 10.0;
        let draws = 10_000;
        let mut rng = stream.substream(0);
        let total: usize = (0..draws).map(|_| poisson_sample(lambda, &mut rng)).sum();
        let mean = total as f64 / draws as f64;
        let se = (lambda / draws as f64).sqrt();
        assert!((mean - lambda).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sample_config_point_mass() {
        let mu = DenseMeasure::point_mass(3, SpinDomain::new(2).unwrap(), &[1, 0, 1]).unwrap();
        let mut rng = SeedStream::new(5).substream(0);
        for _ in 0..10 {
            assert_eq!(sample_config(&mu, &mut rng), vec![1, 0, 1]);
        }
    }

    #[test]
    fn sample_config_frequencies_match_demo_gibbs() {
        let (_, mu) = gibbs_table(&demo_edge_graph()).unwrap();
        let mut rng = SeedStream::new(1234).substream(9);
        let draws = 100_000;
        let mut count00 = 0usize;
        for _ in 0..draws {
            if sample_config(&mu, &mut rng) == vec![0, 0] {
                count00 += 1;
            }
        }
        let p = 1.0 / 6.0;
        let freq = count00 as f64 / draws as f64;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * sigma, "freq {freq}");
    }

    #[test]
    fn spec_file_requires_one_size_field() {
        let bad = ModelSpecFile {
            model: "potts".into(),
            n: 4,
            k: None,
            q: Some(2),
            beta: 1.0,
            d: Some(1.0),
            m: Some(3),
            seed: 0,
        };
        assert!(bad.to_spec().is_err());
        let good = ModelSpecFile { m: None, ..bad };
        assert!(good.to_spec().is_ok());
    }
}
