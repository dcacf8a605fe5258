use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::query::{check_intervention, discrepancy, plan, target_indices, Answer, CausalQuery, Discrepancy, Intervention, Plan, QueryDistribution};
use super::{mixed_radix, ScmModel};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub parent: String,
    pub child: String,
}

impl Edge {
    pub fn new(parent: &str, child: &str) -> Self {
        Edge {
            parent: parent.into(),
            child: child.into(),
        }
    }
}

/// Merges low-level `members` into the high-level variable `name`;
/// `table` maps member assignments (mixed radix, first member most
/// significant) to high-level values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub name: String,
    pub members: Vec<String>,
    pub table: Vec<usize>,
}

/// A candidate explanation, i.e. a query-answering map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Surrogate {
    /// The model with only `kept_edges` intact. A child whose edge from `p`
    /// was removed reads a constant: `fill[p]` if given, else the mode of
    /// `p`'s observational marginal (smallest value on ties).
    SubCircuit {
        name: String,
        kept_edges: Vec<Edge>,
        #[serde(default)]
        fill: BTreeMap<String, usize>,
    },
    /// A separate, usually smaller, model whose variables are the clusters
    /// of a map `τ` from low-level variables.
    AbstractScm {
        name: String,
        model: ScmModel,
        clusters: Vec<Cluster>,
    },
}

impl Surrogate {
    pub fn name(&self) -> &str {
        match self {
            Surrogate::SubCircuit { name, .. } | Surrogate::AbstractScm { name, .. } => name,
        }
    }

    /// The sub-circuit keeping every edge: the model itself.
    pub fn full(scm: &ScmModel) -> Self {
        Surrogate::SubCircuit {
            name: "full".into(),
            kept_edges: scm.edges().into_iter().map(|(p, c)| Edge { parent: p, child: c }).collect(),
            fill: BTreeMap::new(),
        }
    }

    /// An abstraction with one singleton cluster per variable of `model`,
    /// each mapped by the identity.
    pub fn identity_abstraction(name: &str, model: ScmModel) -> Self {
        let clusters = model
            .variables
            .iter()
            .map(|v| Cluster {
                name: v.name.clone(),
                members: vec![v.name.clone()],
                table: (0..v.cardinality).collect(),
            })
            .collect();
        Surrogate::AbstractScm {
            name: name.into(),
            model,
            clusters,
        }
    }
}

/// Builds the model a sub-circuit answers queries on.
fn ablate(scm: &ScmModel, kept: &[Edge], fill: &BTreeMap<String, usize>) -> Result<ScmModel> {
    let edges = scm.edges();
    for e in kept {
        if !edges.iter().any(|(p, c)| *p == e.parent && *c == e.child) {
            return Err(Error::Validation(format!(
                "kept edge {} -> {} is not an edge of the model",
                e.parent, e.child
            )));
        }
    }
    for (name, &v) in fill {
        let var = scm.variable(name)?;
        if v >= var.cardinality {
            return Err(Error::Validation(format!(
                "fill value {v} for `{name}` is outside its domain of size {}",
                var.cardinality
            )));
        }
    }
    let compiled = scm.compile()?;
    let fill_value = |p: usize| -> usize {
        if let Some(&v) = fill.get(&scm.variables[p].name) {
            return v;
        }
        let card = compiled.cards[p];
        let fixed = vec![None; compiled.cards.len()];
        let marginal = compiled.distribution(&fixed, card, |v| v[p]);
        (0..card).fold(0, |best, x| if marginal[x] > marginal[best] { x } else { best })
    };

    let mut out = scm.clone();
    for (i, var) in scm.variables.iter().enumerate() {
        let keep: Vec<bool> = var
            .parents
            .iter()
            .map(|p| kept.iter().any(|e| e.parent == *p && e.child == var.name))
            .collect();
        if keep.iter().all(|&k| k) {
            continue;
        }
        let parent_idx = &compiled.parents[i];
        let fills: Vec<usize> = parent_idx.iter().map(|&p| fill_value(p)).collect();
        let kept_idx: Vec<usize> = (0..parent_idx.len()).filter(|&j| keep[j]).collect();
        let kept_cards: Vec<usize> = kept_idx.iter().map(|&j| compiled.cards[parent_idx[j]]).collect();
        let n_kept: usize = kept_cards.iter().product();
        let u_card = var.exogenous_cardinality;
        let mut table = Vec::with_capacity(n_kept * u_card);
        for k in 0..n_kept {
            let mut rem = k;
            let mut assignment = fills.clone();
            for (pos, &j) in kept_idx.iter().enumerate().rev() {
                assignment[j] = rem % kept_cards[pos];
                rem /= kept_cards[pos];
            }
            let idx = mixed_radix(assignment.iter().copied(), parent_idx.iter().map(|&p| compiled.cards[p]));
            for u in 0..u_card {
                table.push(var.table[idx * u_card + u]);
            }
        }
        out.variables[i].parents = kept_idx.iter().map(|&j| var.parents[j].clone()).collect();
        out.variables[i].table = table;
    }
    Ok(out)
}

struct Abstraction<'a> {
    low: &'a ScmModel,
    high: &'a ScmModel,
    clusters: &'a [Cluster],
}

impl Abstraction<'_> {
    fn validate(&self) -> Result<()> {
        self.high.validate()?;
        let mut seen: Vec<&str> = Vec::new();
        for (k, c) in self.clusters.iter().enumerate() {
            let high = self.high.variable(&c.name).map_err(|_| {
                Error::Validation(format!("clusters[{k}].name `{}` is not a variable of the abstract model", c.name))
            })?;
            if self.clusters[..k].iter().any(|o| o.name == c.name) {
                return Err(Error::Validation(format!("clusters[{k}].name `{}` is repeated", c.name)));
            }
            if c.members.is_empty() {
                return Err(Error::Validation(format!("clusters[{k}].members is empty")));
            }
            let mut size = 1usize;
            for m in &c.members {
                let v = self.low.variable(m)?;
                if seen.contains(&m.as_str()) {
                    return Err(Error::Validation(format!("variable `{m}` belongs to two clusters")));
                }
                seen.push(m);
                size = size.saturating_mul(v.cardinality);
            }
            if c.table.len() != size {
                return Err(Error::Validation(format!(
                    "clusters[{k}].table has {} entries, expected {size}",
                    c.table.len()
                )));
            }
            if let Some(j) = c.table.iter().position(|&x| x >= high.cardinality) {
                return Err(Error::Validation(format!(
                    "clusters[{k}].table[{j}] is outside the domain of `{}`",
                    c.name
                )));
            }
        }
        Ok(())
    }

    fn cluster_of(&self, low_name: &str) -> Result<usize> {
        self.clusters
            .iter()
            .position(|c| c.members.iter().any(|m| m == low_name))
            .ok_or_else(|| Error::Validation(format!("variable `{low_name}` is not covered by the abstraction")))
    }

    /// Clusters exactly covering `names`, in order of first appearance.
    fn covering(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = Vec::new();
        for n in names {
            let k = self.cluster_of(n)?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        for &k in &out {
            if let Some(m) = self.clusters[k].members.iter().find(|m| !names.contains(&m.as_str())) {
                return Err(Error::Validation(format!(
                    "query splits cluster `{}`: member `{m}` is missing",
                    self.clusters[k].name
                )));
            }
        }
        Ok(out)
    }

    fn member_indices(&self, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let idx = self.clusters[k]
            .members
            .iter()
            .map(|m| self.low.index_of(m))
            .collect::<Result<Vec<_>>>()?;
        let cards = idx.iter().map(|&i| self.low.variables[i].cardinality).collect();
        Ok((idx, cards))
    }

    fn map_value(&self, k: usize, low: &[usize]) -> Result<usize> {
        let (idx, cards) = self.member_indices(k)?;
        Ok(self.clusters[k].table[mixed_radix(idx.iter().map(|&i| low[i]), cards)])
    }

    fn map_intervention(&self, iv: &Intervention) -> Result<Intervention> {
        let names: Vec<&str> = iv.keys().map(|s| s.as_str()).collect();
        let mut low = vec![0; self.low.n_variables()];
        for (n, &v) in iv {
            low[self.low.index_of(n)?] = v;
        }
        self.covering(&names)?
            .into_iter()
            .map(|k| Ok((self.clusters[k].name.clone(), self.map_value(k, &low)?)))
            .collect()
    }

    /// The low-level reference plan (answers pushed through `τ`) and the
    /// corresponding query on the abstract model.
    fn translate(&self, q: &CausalQuery) -> Result<(Plan, CausalQuery)> {
        match q {
            CausalQuery::ObservationalMarginal { targets } | CausalQuery::InterventionalMarginal { targets, .. } => {
                let iv = match q {
                    CausalQuery::InterventionalMarginal { intervention, .. } => intervention.clone(),
                    _ => Intervention::new(),
                };
                check_intervention(self.low, &iv)?;
                target_indices(self.low, targets)?;
                let names: Vec<&str> = targets.iter().map(|s| s.as_str()).collect();
                let ks = self.covering(&names)?;
                let high_targets: Vec<String> = ks.iter().map(|&k| self.clusters[k].name.clone()).collect();
                let high_cards: Vec<usize> = high_targets
                    .iter()
                    .map(|n| self.high.variable(n).map(|v| v.cardinality))
                    .collect::<Result<_>>()?;
                let maps: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)> = ks
                    .iter()
                    .map(|&k| {
                        let (idx, cards) = self.member_indices(k)?;
                        Ok((idx, cards, self.clusters[k].table.clone()))
                    })
                    .collect::<Result<_>>()?;
                let n_out = high_cards.iter().product();
                let readout = move |v: &[usize]| {
                    let values = maps
                        .iter()
                        .map(|(idx, cards, table)| table[mixed_radix(idx.iter().map(|&i| v[i]), cards.iter().copied())]);
                    mixed_radix(values, high_cards.iter().copied())
                };
                let high_q = if iv.is_empty() {
                    CausalQuery::ObservationalMarginal { targets: high_targets }
                } else {
                    CausalQuery::InterventionalMarginal {
                        intervention: self.map_intervention(&iv)?,
                        targets: high_targets,
                    }
                };
                Ok((
                    Plan::Distribution {
                        intervention: iv,
                        n_out,
                        readout: Box::new(readout),
                    },
                    high_q,
                ))
            }
            CausalQuery::AverageEffect {
                variable,
                treated,
                control,
                outcome,
            } => {
                let kx = self.covering(&[variable])?[0];
                let ky = self.covering(&[outcome])?[0];
                let treated_iv: Intervention = [(variable.clone(), *treated)].into();
                let control_iv: Intervention = [(variable.clone(), *control)].into();
                check_intervention(self.low, &treated_iv)?;
                check_intervention(self.low, &control_iv)?;
                let high_t = self.map_intervention(&treated_iv)?;
                let high_c = self.map_intervention(&control_iv)?;
                let y = self.low.index_of(outcome)?;
                let y_table = self.clusters[ky].table.clone();
                Ok((
                    Plan::Effect {
                        treated: treated_iv,
                        control: control_iv,
                        value: Box::new(move |v| y_table[v[y]] as f64),
                    },
                    CausalQuery::AverageEffect {
                        variable: self.clusters[kx].name.clone(),
                        treated: high_t[&self.clusters[kx].name],
                        control: high_c[&self.clusters[kx].name],
                        outcome: self.clusters[ky].name.clone(),
                    },
                ))
            }
        }
    }
}

/// A surrogate prepared against one model: answers queries and supplies the
/// matching reference plan for the truth.
enum Prepared<'a> {
    Circuit { truth: &'a ScmModel, ablated: ScmModel },
    Abstract(Abstraction<'a>),
}

impl<'a> Prepared<'a> {
    fn new(scm: &'a ScmModel, e: &'a Surrogate) -> Result<Self> {
        match e {
            Surrogate::SubCircuit { kept_edges, fill, .. } => Ok(Prepared::Circuit {
                truth: scm,
                ablated: ablate(scm, kept_edges, fill)?,
            }),
            Surrogate::AbstractScm { model, clusters, .. } => {
                let a = Abstraction {
                    low: scm,
                    high: model,
                    clusters,
                };
                a.validate()?;
                Ok(Prepared::Abstract(a))
            }
        }
    }

    /// `(reference plan on the true model, surrogate's exact answer)`.
    fn answer(&self, q: &CausalQuery) -> Result<(Plan, Answer)> {
        match self {
            Prepared::Circuit { truth, ablated } => {
                let answer = plan(ablated, q)?.exact(ablated, &ablated.compile()?)?;
                Ok((plan(truth, q)?, answer))
            }
            Prepared::Abstract(a) => {
                let (reference, high_q) = a.translate(q)?;
                let answer = plan(a.high, &high_q)?.exact(a.high, &a.high.compile()?)?;
                Ok((reference, answer))
            }
        }
    }
}

/// Enumerable surrogate class `ℰ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurrogateClass {
    Explicit { surrogates: Vec<Surrogate> },
    /// Every sub-circuit keeping a subset of `edges` (all model edges when
    /// absent) plus every edge outside `edges`.
    EdgeSubsets {
        #[serde(default)]
        edges: Option<Vec<Edge>>,
        #[serde(default)]
        fill: BTreeMap<String, usize>,
    },
}

impl SurrogateClass {
    /// Surrogates in a fixed order; edge subsets go from all kept to none.
    pub fn enumerate(&self, scm: &ScmModel) -> Result<Vec<Surrogate>> {
        match self {
            SurrogateClass::Explicit { surrogates } => Ok(surrogates.clone()),
            SurrogateClass::EdgeSubsets { edges, fill } => {
                let all: Vec<Edge> = scm.edges().into_iter().map(|(p, c)| Edge { parent: p, child: c }).collect();
                let varying = edges.clone().unwrap_or_else(|| all.clone());
                if varying.len() > 20 {
                    return Err(Error::Validation(format!(
                        "{} edges give too many subsets to enumerate",
                        varying.len()
                    )));
                }
                for e in &varying {
                    if !all.contains(e) {
                        return Err(Error::Validation(format!(
                            "edge {} -> {} is not an edge of the model",
                            e.parent, e.child
                        )));
                    }
                }
                let fixed: Vec<Edge> = all.iter().filter(|e| !varying.contains(e)).cloned().collect();
                let m = varying.len();
                Ok((0..1usize << m)
                    .rev()
                    .map(|mask| {
                        let chosen: Vec<Edge> = (0..m)
                            .filter(|&i| mask >> (m - 1 - i) & 1 == 1)
                            .map(|i| varying[i].clone())
                            .collect();
                        let label = chosen
                            .iter()
                            .map(|e| format!("{}->{}", e.parent, e.child))
                            .collect::<Vec<_>>()
                            .join(",");
                        let mut kept = fixed.clone();
                        kept.extend(chosen);
                        Surrogate::SubCircuit {
                            name: format!("keep[{label}]"),
                            kept_edges: kept,
                            fill: fill.clone(),
                        }
                    })
                    .collect())
            }
        }
    }
}

/// An interpretability task `(μ, ℰ, D)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub mu: QueryDistribution,
    pub surrogate_class: SurrogateClass,
    #[serde(default)]
    pub discrepancy: Discrepancy,
}

impl TaskSpec {
    pub fn validate(&self, scm: &ScmModel) -> Result<()> {
        scm.validate()?;
        self.mu.validate(scm)?;
        for q in self.mu.queries() {
            self.discrepancy.check(q)?;
        }
        if self.surrogate_class.enumerate(scm)?.is_empty() {
            return Err(Error::Validation("the surrogate class is empty".into()));
        }
        Ok(())
    }
}

/// `L_μ(e) = Σ_q μ(q) · D(q(model), S_e(q))`, computed exactly.
pub fn population_risk(task: &TaskSpec, e: &Surrogate, scm: &ScmModel) -> Result<f64> {
    task.validate(scm)?;
    risk_unchecked(task, e, scm)
}

fn risk_unchecked(task: &TaskSpec, e: &Surrogate, scm: &ScmModel) -> Result<f64> {
    let prepared = Prepared::new(scm, e)?;
    let compiled = scm.compile()?;
    let mut total = 0.0;
    for wq in &task.mu.0 {
        let (reference, answer) = prepared.answer(&wq.query)?;
        let truth = reference.exact(scm, &compiled)?;
        total += wq.weight * discrepancy(task.discrepancy, &truth, &answer)?;
    }
    Ok(total)
}

/// Uniform average over `query_sample` of the discrepancy between the
/// surrogate's answer and a plug-in estimate of the true answer from
/// `trace_sample_size` simulated draws per intervention arm.
pub fn empirical_risk(
    task: &TaskSpec,
    e: &Surrogate,
    scm: &ScmModel,
    query_sample: &[CausalQuery],
    trace_sample_size: usize,
    seed: u64,
) -> Result<f64> {
    if query_sample.is_empty() {
        return Err(Error::Input("query sample is empty".into()));
    }
    scm.validate()?;
    let prepared = Prepared::new(scm, e)?;
    let mut total = 0.0;
    for (j, q) in query_sample.iter().enumerate() {
        task.discrepancy.check(q)?;
        let (reference, answer) = prepared.answer(q)?;
        let estimate = reference.sampled(scm, trace_sample_size, rng::derive_seed(seed, j as u64))?;
        total += discrepancy(task.discrepancy, &estimate, &answer)?;
    }
    Ok(total / query_sample.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRisk {
    pub name: String,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    /// Population risk of every surrogate, in class order.
    pub risks: Vec<SurrogateRisk>,
    pub min_risk: f64,
    pub epsilon: f64,
    /// Names of surrogates with risk `≤ min_risk + epsilon`.
    pub minimizers: Vec<String>,
    pub identifiable: bool,
}

/// Exhaustive identifiability check with strict equality between surrogates.
pub fn identifiability_check(task: &TaskSpec, scm: &ScmModel, epsilon: f64) -> Result<IdentifiabilityReport> {
    identifiability_check_with(task, scm, epsilon, |a, b| a == b)
}

/// As [`identifiability_check`], treating minimizers related by
/// `equivalent` as the same explanation. The task is identifiable when every
/// minimizer is equivalent to the first one.
pub fn identifiability_check_with(
    task: &TaskSpec,
    scm: &ScmModel,
    epsilon: f64,
    equivalent: impl Fn(&Surrogate, &Surrogate) -> bool,
) -> Result<IdentifiabilityReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::Validation(format!("epsilon must be >= 0, got {epsilon}")));
    }
    task.validate(scm)?;
    let class = task.surrogate_class.enumerate(scm)?;
    let risks = class
        .iter()
        .map(|e| {
            risk_unchecked(task, e, scm)
                .map(|risk| SurrogateRisk {
                    name: e.name().to_string(),
                    risk,
                })
                .map_err(|err| Error::Validation(format!("surrogate `{}`: {err}", e.name())))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_risk = risks.iter().map(|r| r.risk).fold(f64::INFINITY, f64::min);
    let winners: Vec<usize> = (0..class.len()).filter(|&i| risks[i].risk <= min_risk + epsilon).collect();
    let identifiable = winners.iter().all(|&i| equivalent(&class[winners[0]], &class[i]));
    Ok(IdentifiabilityReport {
        minimizers: winners.iter().map(|&i| risks[i].name.clone()).collect(),
        risks,
        min_risk,
        epsilon,
        identifiable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::tests::chain;
    use crate::scm::{eval_query, Exogenous, Variable};

    #[test]
    fn ablation_uses_mode_fill() {
        // A ~ Bernoulli(0.7) has mode 1, so B reads 1 without its edge
        let m = ablate(&chain(0.7), &[], &BTreeMap::new()).unwrap();
        assert!(m.variables[1].parents.is_empty());
        assert_eq!(m.variables[1].table, vec![1]);
        let a = eval_query(&m, &CausalQuery::observational(&["B"])).unwrap();
        assert_eq!(a, Answer::Distribution(vec![0.0, 1.0]));
    }

    #[test]
    fn explicit_fill_overrides_mode() {
        let fill = [("A".to_string(), 0)].into();
        let m = ablate(&chain(0.7), &[], &fill).unwrap();
        assert_eq!(m.variables[1].table, vec![0]);
        assert!(ablate(&chain(0.7), &[], &[("A".to_string(), 5)].into()).is_err());
        assert!(ablate(&chain(0.7), &[Edge::new("B", "A")], &BTreeMap::new()).is_err());
    }

    #[test]
    fn full_surrogate_has_zero_risk() {
        let task = TaskSpec {
            mu: QueryDistribution::uniform(vec![
                CausalQuery::observational(&["B"]),
                CausalQuery::interventional(&[("A", 1)], &["B"]),
                CausalQuery::average_effect("A", 1, 0, "B"),
            ]),
            surrogate_class: SurrogateClass::EdgeSubsets {
                edges: None,
                fill: BTreeMap::new(),
            },
            discrepancy: Discrepancy::Standard,
        };
        let m = chain(0.7);
        assert_eq!(population_risk(&task, &Surrogate::full(&m), &m).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_mu_gives_single_discrepancy() {
        let m = chain(0.7);
        let task = TaskSpec {
            mu: QueryDistribution::point(CausalQuery::observational(&["B"])),
            surrogate_class: SurrogateClass::EdgeSubsets {
                edges: None,
                fill: BTreeMap::new(),
            },
            discrepancy: Discrepancy::Standard,
        };
        let cut = &task.surrogate_class.enumerate(&m).unwrap()[1];
        // truth {0.3, 0.7} against the ablated {0, 1}
        assert!((population_risk(&task, cut, &m).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn merging_abstraction_pushes_truth_through_tau() {
        // low level: two independent fair bits X1, X2; high level: their sum
        // parity as a single bit S ~ Bernoulli(0.5)
        let bit = |name: &str| Variable {
            name: name.into(),
            cardinality: 2,
            parents: vec![],
            exogenous_cardinality: 2,
            table: vec![0, 1],
        };
        let low = ScmModel {
            variables: vec![bit("X1"), bit("X2")],
            exogenous: Exogenous::Independent {
                distributions: vec![vec![0.5, 0.5]; 2],
            },
        };
        let high = ScmModel {
            variables: vec![bit("S")],
            exogenous: Exogenous::Independent {
                distributions: vec![vec![0.5, 0.5]],
            },
        };
        let e = Surrogate::AbstractScm {
            name: "parity".into(),
            model: high,
            clusters: vec![Cluster {
                name: "S".into(),
                members: vec!["X1".into(), "X2".into()],
                table: vec![0, 1, 1, 0],
            }],
        };
        let task = TaskSpec {
            mu: QueryDistribution::point(CausalQuery::observational(&["X1", "X2"])),
            surrogate_class: SurrogateClass::Explicit { surrogates: vec![e.clone()] },
            discrepancy: Discrepancy::Standard,
        };
        assert_eq!(population_risk(&task, &e, &low).unwrap(), 0.0);
        // do(X1=1, X2=1) maps to do(S=0)
        let task = TaskSpec {
            mu: QueryDistribution::point(CausalQuery::interventional(&[("X1", 1), ("X2", 1)], &["X1", "X2"])),
            ..task
        };
        assert_eq!(population_risk(&task, &e, &low).unwrap(), 0.0);
        // a query splitting the cluster is not answerable
        let split = TaskSpec {
            mu: QueryDistribution::point(CausalQuery::observational(&["X1"])),
            ..task
        };
        assert!(population_risk(&split, &e, &low).is_err());
    }

    #[test]
    fn epsilon_infinity_returns_everything() {
        let m = chain(0.7);
        let task = TaskSpec {
            mu: QueryDistribution::point(CausalQuery::observational(&["B"])),
            surrogate_class: SurrogateClass::EdgeSubsets {
                edges: None,
                fill: BTreeMap::new(),
            },
            discrepancy: Discrepancy::Standard,
        };
        let r = identifiability_check(&task, &m, f64::INFINITY).unwrap();
        assert_eq!(r.minimizers.len(), 2);
        assert!(!r.identifiable);
        let r = identifiability_check(&task, &m, 0.0).unwrap();
        assert_eq!(r.minimizers, vec!["keep[A->B]".to_string()]);
        assert!(r.identifiable);
    }

    #[test]
    fn equivalence_hook_merges_minimizers() {
        let m = chain(0.7);
        let task = TaskSpec {
            mu: QueryDistribution::point(CausalQuery::observational(&["A"])),
            surrogate_class: SurrogateClass::EdgeSubsets {
                edges: None,
                fill: BTreeMap::new(),
            },
            discrepancy: Discrepancy::Standard,
        };
        assert!(!identifiability_check(&task, &m, 0.0).unwrap().identifiable);
        assert!(identifiability_check_with(&task, &m, 0.0, |_, _| true).unwrap().identifiable);
    }

    #[test]
    fn scalar_query_under_total_variation_is_rejected() {
        let m = chain(0.7);
        let task = TaskSpec {
            mu: QueryDistribution::point(CausalQuery::average_effect("A", 1, 0, "B")),
            surrogate_class: SurrogateClass::EdgeSubsets {
                edges: None,
                fill: BTreeMap::new(),
            },
            discrepancy: Discrepancy::TotalVariation,
        };
        assert!(population_risk(&task, &Surrogate::full(&m), &m).is_err());
    }

    #[test]
    fn surrogate_json_round_trip() {
        let e = Surrogate::full(&chain(0.7));
        let j = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<Surrogate>(&j).unwrap(), e);
    }
}
