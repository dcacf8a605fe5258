//! Finite structural causal models, causal queries and surrogate
//! explanations.
//!
//! Every variable has a finite domain `0..cardinality` and one exogenous
//! parent `U_i` with domain `0..exogenous_cardinality`. Mechanisms are total
//! lookup tables indexed in mixed radix over `(parents..., u_i)`, first parent
//! most significant and `u_i` least significant. Queries are answered by
//! exhaustive enumeration of the exogenous joint, capped at 2^20 states.

mod canonical;
mod query;
mod surrogate;

pub use canonical::{canonical_example, canonical_examples, CanonicalExample, CANONICAL_NAMES};
pub use query::{
    discrepancy, eval_query, sample_answer, Answer, CausalQuery, Discrepancy, Intervention,
    QueryDistribution, WeightedQuery,
};
pub use surrogate::{
    empirical_risk, identifiability_check, identifiability_check_with, population_risk, Cluster,
    Edge, IdentifiabilityReport, Surrogate, SurrogateClass, SurrogateRisk, TaskSpec,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest exogenous joint that will be enumerated.
pub const MAX_EXOGENOUS_STATES: usize = 1 << 20;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default = "one")]
    pub exogenous_cardinality: usize,
    /// Mechanism `f_i`, one output value per `(parents..., u_i)` assignment.
    pub table: Vec<usize>,
}

fn one() -> usize {
    1
}

/// Distribution of the exogenous vector `(U_1, ..., U_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Exogenous {
    /// Mutually independent `U_i`, one probability vector per variable.
    Independent { distributions: Vec<Vec<f64>> },
    /// Arbitrary joint table in mixed radix over `(U_1, ..., U_d)`, `U_1`
    /// most significant.
    Joint { table: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmModel {
    pub variables: Vec<Variable>,
    pub exogenous: Exogenous,
}

/// Index-resolved form used by all computations.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub cards: Vec<usize>,
    pub u_cards: Vec<usize>,
    pub parents: Vec<Vec<usize>>,
    pub tables: Vec<Vec<usize>>,
    pub order: Vec<usize>,
    /// Exogenous states with positive mass: `(u, probability)`.
    pub support: Vec<(Vec<usize>, f64)>,
}

impl ScmModel {
    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::Validation(format!("unknown variable `{name}`")))
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        Ok(&self.variables[self.index_of(name)?])
    }

    /// All directed edges `(parent, child)` in variable order.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.variables
            .iter()
            .flat_map(|v| v.parents.iter().map(move |p| (p.clone(), v.name.clone())))
            .collect()
    }

    /// Checks domains, table totality, acyclicity and normalization of `P_U`.
    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }

    pub(crate) fn compile(&self) -> Result<Compiled> {
        let d = self.variables.len();
        if d == 0 {
            return Err(Error::Validation("an SCM needs at least one variable".into()));
        }
        for (i, v) in self.variables.iter().enumerate() {
            if v.name.is_empty() {
                return Err(Error::Validation(format!("variables[{i}].name is empty")));
            }
            if self.variables[..i].iter().any(|w| w.name == v.name) {
                return Err(Error::Validation(format!("variables[{i}].name `{}` is repeated", v.name)));
            }
            if v.cardinality == 0 {
                return Err(Error::Validation(format!("variables[{i}].cardinality must be >= 1")));
            }
            if v.exogenous_cardinality == 0 {
                return Err(Error::Validation(format!(
                    "variables[{i}].exogenous_cardinality must be >= 1"
                )));
            }
        }
        let mut parents = Vec::with_capacity(d);
        for (i, v) in self.variables.iter().enumerate() {
            let mut ps = Vec::with_capacity(v.parents.len());
            for (j, p) in v.parents.iter().enumerate() {
                let idx = self.index_of(p).map_err(|_| {
                    Error::Validation(format!("variables[{i}].parents[{j}]: unknown variable `{p}`"))
                })?;
                if ps.contains(&idx) {
                    return Err(Error::Validation(format!("variables[{i}].parents[{j}]: `{p}` is repeated")));
                }
                ps.push(idx);
            }
            parents.push(ps);
        }
        let cards: Vec<usize> = self.variables.iter().map(|v| v.cardinality).collect();
        let u_cards: Vec<usize> = self.variables.iter().map(|v| v.exogenous_cardinality).collect();
        for (i, v) in self.variables.iter().enumerate() {
            let expected = parents[i]
                .iter()
                .try_fold(v.exogenous_cardinality, |acc, &p| acc.checked_mul(cards[p]))
                .ok_or_else(|| Error::Validation(format!("variables[{i}].table is too large")))?;
            if v.table.len() != expected {
                return Err(Error::Validation(format!(
                    "variables[{i}].table has {} entries, expected {expected}",
                    v.table.len()
                )));
            }
            if let Some(k) = v.table.iter().position(|&x| x >= v.cardinality) {
                return Err(Error::Validation(format!(
                    "variables[{i}].table[{k}] = {} is outside the domain of size {}",
                    v.table[k], v.cardinality
                )));
            }
        }
        let order = topological_order(&parents).ok_or_else(|| {
            Error::Validation("the parent graph has a cycle".into())
        })?;
        let support = exogenous_support(&self.exogenous, &u_cards)?;
        Ok(Compiled {
            cards,
            u_cards,
            parents,
            tables: self.variables.iter().map(|v| v.table.clone()).collect(),
            order,
            support,
        })
    }

    /// `n` i.i.d. draws of the endogenous variables, optionally under a hard
    /// intervention. Each row holds one value per variable.
    pub fn sample(&self, n: usize, intervention: &Intervention, seed: u64) -> Result<Vec<Vec<usize>>> {
        let c = self.compile()?;
        let fixed = c.resolve_intervention(self, intervention)?;
        let mut r = rng::stream(seed);
        let cumulative: Vec<f64> = c
            .support
            .iter()
            .scan(0.0, |acc, (_, p)| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().unwrap_or(&1.0);
        Ok((0..n)
            .map(|_| {
                let x = r.random::<f64>() * total;
                let k = cumulative.partition_point(|&c| c <= x).min(c.support.len() - 1);
                c.evaluate(&c.support[k].0, &fixed)
            })
            .collect())
    }
}

impl Compiled {
    /// Intervened value per variable, `None` where the mechanism applies.
    pub fn resolve_intervention(&self, scm: &ScmModel, iv: &Intervention) -> Result<Vec<Option<usize>>> {
        let mut fixed = vec![None; self.cards.len()];
        for (name, &value) in iv {
            let i = scm.index_of(name)?;
            if value >= self.cards[i] {
                return Err(Error::Validation(format!(
                    "intervention value {value} for `{name}` is outside its domain of size {}",
                    self.cards[i]
                )));
            }
            fixed[i] = Some(value);
        }
        Ok(fixed)
    }

    /// Endogenous assignment for exogenous state `u`.
    pub fn evaluate(&self, u: &[usize], fixed: &[Option<usize>]) -> Vec<usize> {
        let mut v = vec![0; self.cards.len()];
        for &i in &self.order {
            v[i] = match fixed[i] {
                Some(x) => x,
                None => {
                    let idx = self.parents[i]
                        .iter()
                        .fold(0, |acc, &p| acc * self.cards[p] + v[p]);
                    self.tables[i][idx * self.u_cards[i] + u[i]]
                }
            };
        }
        v
    }

    /// Distribution of `readout(v)` over `0..n_out` by exact enumeration.
    pub fn distribution(&self, fixed: &[Option<usize>], n_out: usize, readout: impl Fn(&[usize]) -> usize) -> Vec<f64> {
        let mut out = vec![0.0; n_out];
        for (u, p) in &self.support {
            out[readout(&self.evaluate(u, fixed))] += p;
        }
        out
    }
}

fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let d = parents.len();
    let mut placed = vec![false; d];
    let mut order = Vec::with_capacity(d);
    while order.len() < d {
        let next = (0..d).find(|&i| !placed[i] && parents[i].iter().all(|&p| placed[p]))?;
        placed[next] = true;
        order.push(next);
    }
    Some(order)
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if let Some(k) = p.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation(format!("{what}[{k}] = {} is not a probability", p[k])));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::Validation(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

fn exogenous_support(exo: &Exogenous, u_cards: &[usize]) -> Result<Vec<(Vec<usize>, f64)>> {
    let states = u_cards
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c))
        .filter(|&s| s <= MAX_EXOGENOUS_STATES)
        .ok_or_else(|| {
            Error::Validation(format!(
                "the exogenous joint has more than {MAX_EXOGENOUS_STATES} states"
            ))
        })?;
    let decode = |mut k: usize| {
        let mut u = vec![0; u_cards.len()];
        for i in (0..u_cards.len()).rev() {
            u[i] = k % u_cards[i];
            k /= u_cards[i];
        }
        u
    };
    let mut support = Vec::new();
    match exo {
        Exogenous::Independent { distributions } => {
            if distributions.len() != u_cards.len() {
                return Err(Error::Validation(format!(
                    "exogenous.distributions has {} entries for {} variables",
                    distributions.len(),
                    u_cards.len()
                )));
            }
            for (i, (dist, &c)) in distributions.iter().zip(u_cards).enumerate() {
                if dist.len() != c {
                    return Err(Error::Validation(format!(
                        "exogenous.distributions[{i}] has {} entries, expected {c}",
                        dist.len()
                    )));
                }
                check_distribution(dist, &format!("exogenous.distributions[{i}]"))?;
            }
            for k in 0..states {
                let u = decode(k);
                let p: f64 = u.iter().zip(distributions).map(|(&x, d)| d[x]).product();
                if p > 0.0 {
                    support.push((u, p));
                }
            }
        }
        Exogenous::Joint { table } => {
            if table.len() != states {
                return Err(Error::Validation(format!(
                    "exogenous.table has {} entries, expected {states}",
                    table.len()
                )));
            }
            check_distribution(table, "exogenous.table")?;
            for (k, &p) in table.iter().enumerate() {
                if p > 0.0 {
                    support.push((decode(k), p));
                }
            }
        }
    }
    Ok(support)
}

/// Mixed-radix index of `values` over `cards`, first entry most significant.
pub(crate) fn mixed_radix(values: impl IntoIterator<Item = usize>, cards: impl IntoIterator<Item = usize>) -> usize {
    values.into_iter().zip(cards).fold(0, |acc, (v, c)| acc * c + v)
}
