use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::query::{CausalQuery, Discrepancy, QueryDistribution};
use super::surrogate::{Edge, Surrogate, SurrogateClass, TaskSpec};
use super::{Exogenous, ScmModel, Variable};
use crate::error::{Error, Result};

pub const CANONICAL_NAMES: [&str; 3] = ["overdetermined-or", "chain3", "underspecified-probe"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalExample {
    pub name: String,
    pub description: String,
    pub scm: ScmModel,
    pub task: TaskSpec,
    pub declared_identifiable: bool,
    /// A query outside `μ` that separates the competing minimizers.
    pub withheld: Option<CausalQuery>,
}

fn var(name: &str, parents: &[&str], exogenous_cardinality: usize, table: Vec<usize>) -> Variable {
    Variable {
        name: name.into(),
        cardinality: 2,
        parents: parents.iter().map(|s| s.to_string()).collect(),
        exogenous_cardinality,
        table,
    }
}

/// `Y = A ∨ B` with `A = B = U`, `P(U = 1) = 0.5`. Both single-edge
/// circuits reproduce the output marginal exactly.
fn overdetermined_or() -> CanonicalExample {
    let scm = ScmModel {
        variables: vec![
            var("A", &[], 2, vec![0, 1]),
            var("B", &[], 2, vec![0, 1]),
            var("Y", &["A", "B"], 1, vec![0, 1, 1, 1]),
        ],
        // (U_A, U_B, U_Y) with U_A = U_B
        exogenous: Exogenous::Joint {
            table: vec![0.5, 0.0, 0.0, 0.5],
        },
    };
    CanonicalExample {
        name: "overdetermined-or".into(),
        description: "two redundant, independently sufficient paths into Y; the output marginal cannot tell them apart".into(),
        scm,
        task: TaskSpec {
            mu: QueryDistribution::point(CausalQuery::observational(&["Y"])),
            surrogate_class: SurrogateClass::EdgeSubsets {
                edges: Some(vec![Edge::new("A", "Y"), Edge::new("B", "Y")]),
                fill: BTreeMap::new(),
            },
            discrepancy: Discrepancy::Standard,
        },
        declared_identifiable: false,
        withheld: None,
    }
}

/// `A ~ Bernoulli(0.7)`, `B = A xor U_B` with `P(U_B = 1) = 0.1`, `C = B`;
/// `μ` is uniform over the joint under every single-variable intervention.
fn chain3() -> CanonicalExample {
    let scm = ScmModel {
        variables: vec![
            var("A", &[], 2, vec![0, 1]),
            var("B", &["A"], 2, vec![0, 1, 1, 0]),
            var("C", &["B"], 1, vec![0, 1]),
        ],
        exogenous: Exogenous::Independent {
            distributions: vec![vec![0.3, 0.7], vec![0.9, 0.1], vec![1.0]],
        },
    };
    let queries = ["A", "B", "C"]
        .iter()
        .flat_map(|v| (0..2).map(move |x| CausalQuery::interventional(&[(v, x)], &["A", "B", "C"])))
        .collect();
    CanonicalExample {
        name: "chain3".into(),
        description: "a noisy three-variable chain probed by interventions on every variable".into(),
        scm,
        task: TaskSpec {
            mu: QueryDistribution::uniform(queries),
            surrogate_class: SurrogateClass::EdgeSubsets {
                edges: None,
                fill: BTreeMap::new(),
            },
            discrepancy: Discrepancy::Standard,
        },
        declared_identifiable: true,
        withheld: None,
    }
}

/// `A = B = U`, `Y = A`. Explanations "Y reads A" and "Y reads B" agree on
/// every observational query and differ under `do(B = 1)`.
fn underspecified_probe() -> CanonicalExample {
    let shared = Exogenous::Joint {
        table: vec![0.5, 0.0, 0.0, 0.5],
    };
    let model_reading = |source: &str| ScmModel {
        variables: vec![
            var("A", &[], 2, vec![0, 1]),
            var("B", &[], 2, vec![0, 1]),
            var("Y", &[source], 1, vec![0, 1]),
        ],
        exogenous: shared.clone(),
    };
    CanonicalExample {
        name: "underspecified-probe".into(),
        description: "two correlated candidate sources for Y; only an intervention separates them".into(),
        scm: model_reading("A"),
        task: TaskSpec {
            mu: QueryDistribution::point(CausalQuery::observational(&["Y"])),
            surrogate_class: SurrogateClass::Explicit {
                surrogates: vec![
                    Surrogate::identity_abstraction("y-reads-a", model_reading("A")),
                    Surrogate::identity_abstraction("y-reads-b", model_reading("B")),
                ],
            },
            discrepancy: Discrepancy::Standard,
        },
        declared_identifiable: false,
        withheld: Some(CausalQuery::interventional(&[("B", 1)], &["Y"])),
    }
}

pub fn canonical_examples() -> Vec<CanonicalExample> {
    vec![overdetermined_or(), chain3(), underspecified_probe()]
}

pub fn canonical_example(name: &str) -> Result<CanonicalExample> {
    canonical_examples().into_iter().find(|e| e.name == name).ok_or_else(|| {
        Error::Input(format!(
            "unknown example `{name}`; expected one of {}",
            CANONICAL_NAMES.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{eval_query, identifiability_check, population_risk, Answer};

    #[test]
    fn all_examples_validate() {
        for ex in canonical_examples() {
            ex.task.validate(&ex.scm).unwrap();
        }
        assert_eq!(
            canonical_examples().iter().map(|e| e.name.as_str()).collect::<Vec<_>>(),
            CANONICAL_NAMES
        );
    }

    #[test]
    fn or_gate_average_effect() {
        // E[Y | do(A=1)] = 1, E[Y | do(A=0)] = P(B=1) = 0.5
        let ex = overdetermined_or();
        let a = eval_query(&ex.scm, &CausalQuery::average_effect("A", 1, 0, "Y")).unwrap();
        assert_eq!(a, Answer::Scalar(0.5));
    }

    #[test]
    fn or_gate_single_edge_circuit_has_zero_risk() {
        let ex = overdetermined_or();
        let a_only = Surrogate::SubCircuit {
            name: "a-only".into(),
            kept_edges: vec![Edge::new("A", "Y")],
            fill: [("B".to_string(), 0)].into(),
        };
        assert_eq!(population_risk(&ex.task, &a_only, &ex.scm).unwrap(), 0.0);
    }

    #[test]
    fn declared_statuses_hold() {
        for ex in canonical_examples() {
            let r = identifiability_check(&ex.task, &ex.scm, 0.0).unwrap();
            assert_eq!(r.identifiable, ex.declared_identifiable, "{}", ex.name);
        }
    }

    #[test]
    fn enriching_underspecified_probe_restores_identifiability() {
        let ex = underspecified_probe();
        let q = ex.withheld.clone().unwrap();
        for w in [1e-6, 0.3, 0.9] {
            let task = TaskSpec {
                mu: ex.task.mu.with_added(q.clone(), w),
                ..ex.task.clone()
            };
            let r = identifiability_check(&task, &ex.scm, 0.0).unwrap();
            assert!(r.identifiable);
            assert_eq!(r.minimizers, vec!["y-reads-a".to_string()]);
        }
    }

    #[test]
    fn unknown_name() {
        assert!(canonical_example("nope").is_err());
        assert!(canonical_example("chain3").is_ok());
    }
}
