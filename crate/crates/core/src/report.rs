//! Single-model analysis reports.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::document::ModelDocument;
use crate::error::Result;
use crate::generic::{performance_report_with, size_warning, MetricsReport, SolverConfig};
use crate::model::PoolModel;
use crate::structured::{PartKind, Structured, DEFAULT_MAX_EXPANSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Structured solver for structured documents, generic otherwise.
    Auto,
    Generic,
    /// For explicit documents this requires a nested pool.
    Structured,
}

/// Mean job counts, response times and service rates of the parts of a
/// pool: classes, or job types for the randomized families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartsReport {
    pub kind: PartKind,
    pub lambda: Vec<f64>,
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<Option<f64>>,
    pub gamma: Vec<Option<f64>>,
}

impl PartsReport {
    fn new(kind: PartKind, lambda: Vec<f64>, l: Vec<f64>) -> Self {
        let t: Vec<Option<f64>> = lambda
            .iter()
            .zip(&l)
            .map(|(&a, &n)| (a > 0.0).then(|| n / a))
            .collect();
        let gamma = t.iter().map(|t| t.map(|t| 1.0 / t)).collect();
        PartsReport {
            kind,
            lambda,
            l,
            t,
            gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub input: Value,
    /// `generic`, or `structured:<family>`.
    pub solver: String,
    pub psi: f64,
    #[serde(rename = "L")]
    pub l_total: f64,
    /// Mean response time over all jobs; absent without traffic.
    #[serde(rename = "T")]
    pub t_total: Option<f64>,
    /// Overall mean service rate `Λ / L`.
    pub gamma: Option<f64>,
    pub rho: f64,
    pub parts: Option<PartsReport>,
    /// Every metric of the generic recursion, when it ran.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricsReport>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing_ms: Option<f64>,
}

fn totals(lambda: f64, l: f64) -> (Option<f64>, Option<f64>) {
    if lambda > 0.0 {
        (Some(l / lambda), Some(lambda / l))
    } else {
        (None, None)
    }
}

/// Analyzes a document with the chosen solver.
pub fn analyze(
    doc: &ModelDocument,
    choice: SolverChoice,
    config: SolverConfig,
) -> Result<ReportDocument> {
    let input = doc.to_value();
    let structured = match (doc, choice) {
        (ModelDocument::Structured(s), SolverChoice::Auto | SolverChoice::Structured) => {
            Some(s.clone())
        }
        (ModelDocument::Explicit(raw), SolverChoice::Structured) => {
            Some(Structured::Nested(raw.clone()))
        }
        _ => None,
    };
    if let Some(s) = structured {
        return analyze_structured(&s, input);
    }
    let (model, parts) = match doc {
        ModelDocument::Explicit(raw) => {
            let model = PoolModel::validate(raw)?;
            let labels = (0..model.class_count()).collect();
            (model, Some((PartKind::Class, labels)))
        }
        ModelDocument::Structured(s) => {
            let (model, labels) = s.expand_with_parts(DEFAULT_MAX_EXPANSION)?;
            let kind = s.part_kind();
            (model, (kind != PartKind::None).then_some((kind, labels)))
        }
    };
    let mut warnings = model.warnings().to_vec();
    warnings.extend(size_warning(&model));
    let metrics = performance_report_with(&model, config)?;
    let parts = parts.map(|(kind, labels)| {
        let n = labels.iter().max().map_or(0, |m| m + 1);
        let (mut lambda, mut l) = (vec![0.0; n], vec![0.0; n]);
        for (c, &u) in labels.iter().enumerate() {
            lambda[u] += model.classes()[c].lambda;
            l[u] += metrics.l_class[c];
        }
        PartsReport::new(kind, lambda, l)
    });
    let arrivals = model.aggregate_rates().1;
    let (t_total, gamma) = totals(arrivals, metrics.l_total);
    Ok(ReportDocument {
        input,
        solver: "generic".into(),
        psi: metrics.psi,
        l_total: metrics.l_total,
        t_total,
        gamma,
        rho: metrics.rho,
        parts,
        metrics: Some(metrics),
        warnings,
        timing_ms: None,
    })
}

fn analyze_structured(s: &Structured, input: Value) -> Result<ReportDocument> {
    let mut warnings = Vec::new();
    if let Structured::Nested(raw) = s {
        warnings.extend(PoolModel::validate(raw)?.warnings().iter().cloned());
    }
    let r = s.solve()?;
    let kind = s.part_kind();
    let parts =
        (kind != PartKind::None).then(|| PartsReport::new(kind, s.part_arrivals(), r.l_parts));
    let (t_total, gamma) = totals(s.total_arrivals(), r.l_total);
    Ok(ReportDocument {
        input,
        solver: format!("structured:{}", s.family()),
        psi: r.psi,
        l_total: r.l_total,
        t_total,
        gamma,
        rho: s.total_arrivals() / s.total_capacity(),
        parts,
        metrics: None,
        warnings,
        timing_ms: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use approx::assert_relative_eq;

    fn doc(text: &str) -> ModelDocument {
        ModelDocument::from_json(text).unwrap()
    }

    const M_MODEL: &str = r#"{"servers":[{"id":1,"mu":1},{"id":2,"mu":1},{"id":3,"mu":1}],
        "classes":[{"id":1,"lambda":1,"servers":[1,3]},{"id":2,"lambda":1,"servers":[2,3]}]}"#;

    #[test]
    fn m_model_report() {
        let r = analyze(&doc(M_MODEL), SolverChoice::Auto, SolverConfig::default()).unwrap();
        assert_eq!(r.solver, "generic");
        assert_relative_eq!(r.psi, 0.2, max_relative = 1e-12);
        assert_relative_eq!(r.l_total, 2.8, max_relative = 1e-12);
        let m = r.metrics.as_ref().unwrap();
        assert_relative_eq!(m.t_class[0].unwrap(), 1.4, max_relative = 1e-12);
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<ReportDocument>(&text).unwrap(), r);
    }

    #[test]
    fn structured_randomized() {
        let d = doc(r#"{"structured":{"family":"randomized_homogeneous","K":3,"d":2,"rho":0.5}}"#);
        let s = analyze(&d, SolverChoice::Auto, SolverConfig::default()).unwrap();
        assert_eq!(s.solver, "structured:randomized_homogeneous");
        assert_relative_eq!(s.psi, 0.375, max_relative = 1e-14);
        assert_relative_eq!(s.l_total, 4.0 / 3.0, max_relative = 1e-14);
        let g = analyze(&d, SolverChoice::Generic, SolverConfig::default()).unwrap();
        assert_relative_eq!(g.psi, s.psi, max_relative = 1e-10);
        assert_relative_eq!(g.l_total, s.l_total, max_relative = 1e-10);
        assert!(s.parts.is_none() && g.parts.is_none());
    }

    #[test]
    fn generic_parts_aggregate_types() {
        let d = doc(
            r#"{"structured":{"family":"heterogeneous_degrees","K":5,"rho":0.6,
                "types":[{"p":0.5,"d":2},{"p":0.5,"d":4}]}}"#,
        );
        let s = analyze(&d, SolverChoice::Structured, SolverConfig::default()).unwrap();
        let g = analyze(&d, SolverChoice::Generic, SolverConfig::default()).unwrap();
        let (sp, gp) = (s.parts.unwrap(), g.parts.unwrap());
        assert_eq!(sp.kind, PartKind::Type);
        for u in 0..2 {
            assert_relative_eq!(sp.l[u], gp.l[u], max_relative = 1e-10);
            assert_relative_eq!(sp.lambda[u], gp.lambda[u], max_relative = 1e-12);
        }
    }

    #[test]
    fn explicit_nested_with_structured_solver() {
        let d = doc(r#"{"servers":[{"id":1,"mu":1},{"id":2,"mu":1}],
            "classes":[{"id":1,"lambda":0.3,"servers":[1]},{"id":2,"lambda":0.5,"servers":[1,2]}]}"#);
        let s = analyze(&d, SolverChoice::Structured, SolverConfig::default()).unwrap();
        assert_eq!(s.solver, "structured:nested");
        assert_relative_eq!(s.psi, 8.4 / 17.0, max_relative = 1e-13);
        assert!(matches!(
            analyze(
                &doc(M_MODEL),
                SolverChoice::Structured,
                SolverConfig::default()
            ),
            Err(Error::InvalidDescriptor(_))
        ));
    }
}
