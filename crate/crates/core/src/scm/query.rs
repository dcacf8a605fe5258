use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{mixed_radix, Compiled, ScmModel, MAX_EXOGENOUS_STATES};
use crate::error::{Error, Result};
use crate::rng;

/// Hard intervention `do(V_I = v_I)`, keyed by variable name.
pub type Intervention = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CausalQuery {
    /// Joint distribution of `targets`.
    ObservationalMarginal { targets: Vec<String> },
    /// Joint distribution of `targets` under `intervention`.
    InterventionalMarginal {
        intervention: Intervention,
        targets: Vec<String>,
    },
    /// `E[outcome | do(variable = treated)] - E[outcome | do(variable = control)]`,
    /// reading outcome values as integers.
    AverageEffect {
        variable: String,
        treated: usize,
        control: usize,
        outcome: String,
    },
}

impl CausalQuery {
    pub fn observational(targets: &[&str]) -> Self {
        CausalQuery::ObservationalMarginal {
            targets: targets.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn interventional(intervention: &[(&str, usize)], targets: &[&str]) -> Self {
        CausalQuery::InterventionalMarginal {
            intervention: intervention.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            targets: targets.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn average_effect(variable: &str, treated: usize, control: usize, outcome: &str) -> Self {
        CausalQuery::AverageEffect {
            variable: variable.into(),
            treated,
            control,
            outcome: outcome.into(),
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, CausalQuery::AverageEffect { .. })
    }

    /// Short human-readable form, e.g. `P(Y | do(A=1))`.
    pub fn label(&self) -> String {
        let iv = |m: &Intervention| {
            m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
        };
        match self {
            CausalQuery::ObservationalMarginal { targets } => format!("P({})", targets.join(",")),
            CausalQuery::InterventionalMarginal { intervention, targets } => {
                format!("P({} | do({}))", targets.join(","), iv(intervention))
            }
            CausalQuery::AverageEffect {
                variable,
                treated,
                control,
                outcome,
            } => format!("ATE({variable}: {treated} vs {control} -> {outcome})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    /// Probabilities over joint target assignments in mixed radix, first
    /// target most significant.
    Distribution(Vec<f64>),
    Scalar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discrepancy {
    /// Total variation for distributions, absolute difference for scalars.
    #[default]
    Standard,
    /// Distributional queries only.
    TotalVariation,
    /// Scalar queries only.
    AbsoluteDifference,
}

impl Discrepancy {
    pub fn check(&self, q: &CausalQuery) -> Result<()> {
        match (self, q.is_scalar()) {
            (Discrepancy::TotalVariation, true) => Err(Error::Validation(format!(
                "total variation cannot compare the scalar query {}",
                q.label()
            ))),
            (Discrepancy::AbsoluteDifference, false) => Err(Error::Validation(format!(
                "absolute difference cannot compare the distributional query {}",
                q.label()
            ))),
            _ => Ok(()),
        }
    }
}

pub fn discrepancy(d: Discrepancy, a: &Answer, b: &Answer) -> Result<f64> {
    match (a, b) {
        (Answer::Distribution(p), Answer::Distribution(q)) if d != Discrepancy::AbsoluteDifference => {
            if p.len() != q.len() {
                return Err(Error::Validation(format!(
                    "distributions over {} and {} outcomes cannot be compared",
                    p.len(),
                    q.len()
                )));
            }
            Ok(0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>())
        }
        (Answer::Scalar(x), Answer::Scalar(y)) if d != Discrepancy::TotalVariation => Ok((x - y).abs()),
        _ => Err(Error::Validation(format!(
            "discrepancy {d:?} cannot compare {a:?} with {b:?}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedQuery {
    pub query: CausalQuery,
    pub weight: f64,
}

/// Query distribution `μ`: a finite list of weighted queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryDistribution(pub Vec<WeightedQuery>);

impl QueryDistribution {
    pub fn uniform(queries: Vec<CausalQuery>) -> Self {
        let w = 1.0 / queries.len() as f64;
        QueryDistribution(queries.into_iter().map(|query| WeightedQuery { query, weight: w }).collect())
    }

    pub fn point(query: CausalQuery) -> Self {
        QueryDistribution(vec![WeightedQuery { query, weight: 1.0 }])
    }

    /// `(1 - w) μ + w δ_q`.
    pub fn with_added(&self, query: CausalQuery, weight: f64) -> Self {
        let mut out: Vec<WeightedQuery> = self
            .0
            .iter()
            .map(|wq| WeightedQuery {
                query: wq.query.clone(),
                weight: wq.weight * (1.0 - weight),
            })
            .collect();
        out.push(WeightedQuery { query, weight });
        QueryDistribution(out)
    }

    pub fn queries(&self) -> impl Iterator<Item = &CausalQuery> {
        self.0.iter().map(|wq| &wq.query)
    }

    pub fn validate(&self, scm: &ScmModel) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Validation("the query distribution is empty".into()));
        }
        for (i, wq) in self.0.iter().enumerate() {
            if !(wq.weight > 0.0 && wq.weight.is_finite()) {
                return Err(Error::Validation(format!("mu[{i}].weight must be positive")));
            }
            plan(scm, &wq.query).map_err(|e| Error::Validation(format!("mu[{i}].query: {e}")))?;
        }
        let total: f64 = self.0.iter().map(|wq| wq.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("mu weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

type Readout = Box<dyn Fn(&[usize]) -> usize + Send + Sync>;
type Value = Box<dyn Fn(&[usize]) -> f64 + Send + Sync>;

/// A query reduced to interventions on the model plus a readout of the
/// endogenous assignment.
pub(crate) enum Plan {
    Distribution {
        intervention: Intervention,
        n_out: usize,
        readout: Readout,
    },
    Effect {
        treated: Intervention,
        control: Intervention,
        value: Value,
    },
}

pub(crate) fn target_indices(scm: &ScmModel, targets: &[String]) -> Result<Vec<usize>> {
    if targets.is_empty() {
        return Err(Error::Validation("a marginal query needs at least one target".into()));
    }
    let mut idx = Vec::with_capacity(targets.len());
    for t in targets {
        let i = scm.index_of(t)?;
        if idx.contains(&i) {
            return Err(Error::Validation(format!("target `{t}` is repeated")));
        }
        idx.push(i);
    }
    Ok(idx)
}

pub(crate) fn check_intervention(scm: &ScmModel, iv: &Intervention) -> Result<()> {
    for (name, &v) in iv {
        let var = scm.variable(name)?;
        if v >= var.cardinality {
            return Err(Error::Validation(format!(
                "intervention value {v} for `{name}` is outside its domain of size {}",
                var.cardinality
            )));
        }
    }
    Ok(())
}

/// Identity plan: the query answered on `scm` itself.
pub(crate) fn plan(scm: &ScmModel, q: &CausalQuery) -> Result<Plan> {
    let marginal = |iv: Intervention, targets: &[String]| -> Result<Plan> {
        check_intervention(scm, &iv)?;
        let idx = target_indices(scm, targets)?;
        let cards: Vec<usize> = idx.iter().map(|&i| scm.variables[i].cardinality).collect();
        let n_out = cards
            .iter()
            .try_fold(1usize, |a, &c| a.checked_mul(c))
            .filter(|&n| n <= MAX_EXOGENOUS_STATES)
            .ok_or_else(|| Error::Validation("the target joint is too large".into()))?;
        Ok(Plan::Distribution {
            intervention: iv,
            n_out,
            readout: Box::new(move |v| mixed_radix(idx.iter().map(|&i| v[i]), cards.iter().copied())),
        })
    };
    match q {
        CausalQuery::ObservationalMarginal { targets } => marginal(Intervention::new(), targets),
        CausalQuery::InterventionalMarginal { intervention, targets } => marginal(intervention.clone(), targets),
        CausalQuery::AverageEffect {
            variable,
            treated,
            control,
            outcome,
        } => {
            let treated: Intervention = [(variable.clone(), *treated)].into();
            let control: Intervention = [(variable.clone(), *control)].into();
            check_intervention(scm, &treated)?;
            check_intervention(scm, &control)?;
            let y = scm.index_of(outcome)?;
            Ok(Plan::Effect {
                treated,
                control,
                value: Box::new(move |v| v[y] as f64),
            })
        }
    }
}

impl Plan {
    pub fn exact(&self, scm: &ScmModel, c: &Compiled) -> Result<Answer> {
        match self {
            Plan::Distribution {
                intervention,
                n_out,
                readout,
            } => {
                let fixed = c.resolve_intervention(scm, intervention)?;
                Ok(Answer::Distribution(c.distribution(&fixed, *n_out, readout)))
            }
            Plan::Effect { treated, control, value } => {
                let mean = |iv: &Intervention| -> Result<f64> {
                    let fixed = c.resolve_intervention(scm, iv)?;
                    Ok(c.support.iter().map(|(u, p)| p * value(&c.evaluate(u, &fixed))).sum())
                };
                Ok(Answer::Scalar(mean(treated)? - mean(control)?))
            }
        }
    }

    /// Plug-in estimate from `n` samples per intervention.
    pub fn sampled(&self, scm: &ScmModel, n: usize, seed: u64) -> Result<Answer> {
        if n == 0 {
            return Err(Error::Input("trace sample size must be >= 1".into()));
        }
        match self {
            Plan::Distribution {
                intervention,
                n_out,
                readout,
            } => {
                let mut counts = vec![0.0; *n_out];
                for row in scm.sample(n, intervention, seed)? {
                    counts[readout(&row)] += 1.0;
                }
                Ok(Answer::Distribution(counts.into_iter().map(|c| c / n as f64).collect()))
            }
            Plan::Effect { treated, control, value } => {
                let mean = |iv: &Intervention, s: u64| -> Result<f64> {
                    Ok(scm.sample(n, iv, s)?.iter().map(|r| value(r)).sum::<f64>() / n as f64)
                };
                Ok(Answer::Scalar(
                    mean(treated, rng::derive_seed(seed, 1))? - mean(control, rng::derive_seed(seed, 2))?,
                ))
            }
        }
    }
}

/// Exact answer by enumerating every exogenous state with positive mass.
pub fn eval_query(scm: &ScmModel, q: &CausalQuery) -> Result<Answer> {
    let c = scm.compile()?;
    plan(scm, q)?.exact(scm, &c)
}

/// Plug-in answer from `n` simulated draws (per intervention arm).
pub fn sample_answer(scm: &ScmModel, q: &CausalQuery, n: usize, seed: u64) -> Result<Answer> {
    scm.validate()?;
    plan(scm, q)?.sampled(scm, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::tests::chain;

    #[test]
    fn copy_chain_marginal() {
        let a = eval_query(&chain(0.7), &CausalQuery::observational(&["B"])).unwrap();
        let Answer::Distribution(p) = a else { panic!() };
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn intervention_severs_exogenous_influence() {
        let a = eval_query(&chain(0.7), &CausalQuery::interventional(&[("A", 0)], &["B"])).unwrap();
        assert_eq!(a, Answer::Distribution(vec![1.0, 0.0]));
    }

    #[test]
    fn joint_targets_in_mixed_radix() {
        let a = eval_query(&chain(0.7), &CausalQuery::observational(&["A", "B"])).unwrap();
        let Answer::Distribution(p) = a else { panic!() };
        // only (0,0) and (1,1) occur
        assert_eq!(p.len(), 4);
        assert!((p[0] - 0.3).abs() < 1e-15 && p[1] == 0.0 && p[2] == 0.0 && (p[3] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn bad_queries_are_rejected() {
        let m = chain(0.7);
        assert!(eval_query(&m, &CausalQuery::observational(&["Z"])).is_err());
        assert!(eval_query(&m, &CausalQuery::observational(&[])).is_err());
        assert!(eval_query(&m, &CausalQuery::observational(&["A", "A"])).is_err());
        assert!(eval_query(&m, &CausalQuery::interventional(&[("A", 2)], &["B"])).is_err());
    }

    #[test]
    fn discrepancies() {
        let a = Answer::Distribution(vec![0.5, 0.5]);
        let b = Answer::Distribution(vec![1.0, 0.0]);
        assert_eq!(discrepancy(Discrepancy::Standard, &a, &b).unwrap(), 0.5);
        assert_eq!(discrepancy(Discrepancy::Standard, &Answer::Scalar(0.2), &Answer::Scalar(0.5)).unwrap(), 0.3);
        assert!(discrepancy(Discrepancy::TotalVariation, &Answer::Scalar(0.2), &Answer::Scalar(0.5)).is_err());
        assert!(discrepancy(Discrepancy::Standard, &a, &Answer::Scalar(0.5)).is_err());
    }

    #[test]
    fn sampled_answer_converges() {
        let q = CausalQuery::observational(&["B"]);
        let Answer::Distribution(p) = sample_answer(&chain(0.7), &q, 100_000, 3).unwrap() else { panic!() };
        assert!((p[1] - 0.7).abs() < 0.01);
    }

    #[test]
    fn query_json_shape() {
        let q = CausalQuery::interventional(&[("A", 1)], &["B"]);
        let j = serde_json::to_string(&q).unwrap();
        assert_eq!(j, r#"{"kind":"interventional_marginal","intervention":{"A":1},"targets":["B"]}"#);
        assert_eq!(serde_json::from_str::<CausalQuery>(&j).unwrap(), q);
    }
}
