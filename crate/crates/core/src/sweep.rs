//! Parameter sweeps over model documents and the global/ring/line comparison.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::document::ModelDocument;
use crate::error::{Error, Result};
use crate::generic::SolverConfig;
use crate::model::PoolModel;
use crate::report::{analyze, SolverChoice};
use crate::structured::{
    line_homogeneous_global, line_homogeneous_metrics, randomized_homogeneous_metrics,
    ring_homogeneous_metrics, LineHomogeneous, PartKind, RandomizedHomogeneous, RingHomogeneous,
    Structured,
};

/// First line of every CSV table; bumped whenever the column layout changes.
pub const CSV_VERSION_LINE: &str = "# bfpool-sweep v1";

/// Loads at or above this value are reported as unstable without evaluation.
pub const UNSTABLE_LOAD: f64 = 1.0 - 1e-9;

/// Inclusive arithmetic range `START:STOP:STEP`, or a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    /// Values `start + n·step` up to `stop`, rounded to 12 decimals so
    /// that e.g. `0.1:0.3:0.1` prints as `0.1, 0.2, 0.3`.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|n| ((self.start + n as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        let range = match parts.as_slice() {
            [v] => Range {
                start: num(v)?,
                stop: num(v)?,
                step: 1.0,
            },
            [a, b, c] => Range {
                start: num(a)?,
                stop: num(b)?,
                step: num(c)?,
            },
            _ => {
                return Err(format!(
                    "expected START:STOP:STEP or a single value, got {s:?}"
                ))
            }
        };
        if !(range.start.is_finite() && range.stop.is_finite() && range.step.is_finite()) {
            return Err("range bounds must be finite".into());
        }
        if range.start > range.stop {
            return Err("range start exceeds stop".into());
        }
        if range.step <= 0.0 {
            return Err("range step must be positive".into());
        }
        Ok(range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Rho,
    D,
    K,
    /// Share of the first of two job types.
    Mix,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Rho => "rho",
            SweepParameter::D => "d",
            SweepParameter::K => "K",
            SweepParameter::Mix => "mix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: RowStatus,
    /// Aligned with [`SweepTable::columns`]; `None` for unstable rows and
    /// undefined entries.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_VERSION_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.parameter.clone(), "status".into()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.value.to_string()];
            record.push(match row.status {
                RowStatus::Ok => "ok".into(),
                RowStatus::Unstable => "unstable".into(),
            });
            record.extend(
                row.values
                    .iter()
                    .map(|v| v.map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&record)?;
        }
        w.flush()
    }
}

fn descriptor_error(msg: impl Into<String>) -> Error {
    Error::InvalidDescriptor(msg.into())
}

fn scale_explicit(raw: &crate::model::RawModel, rho: f64) -> Result<crate::model::RawModel> {
    let current = PoolModel::validate(raw)?.load();
    if current <= 0.0 {
        return Err(descriptor_error(
            "cannot rescale the load of a model without traffic",
        ));
    }
    let mut out = raw.clone();
    for c in &mut out.classes {
        c.lambda *= rho / current;
    }
    Ok(out)
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 {
        return Err(descriptor_error(format!(
            "{what} must be a nonnegative integer, got {value}"
        )));
    }
    Ok(value as usize)
}

/// The document with one parameter replaced.
pub fn with_parameter(
    doc: &ModelDocument,
    param: SweepParameter,
    value: f64,
) -> Result<ModelDocument> {
    use Structured as S;
    let unsupported = || {
        descriptor_error(format!(
            "parameter {} does not apply to this document",
            param.name()
        ))
    };
    let s = match (doc, param) {
        (ModelDocument::Explicit(raw), SweepParameter::Rho) => {
            return Ok(ModelDocument::Explicit(scale_explicit(raw, value)?))
        }
        (ModelDocument::Explicit(_), _) => return Err(unsupported()),
        (ModelDocument::Structured(s), _) => s,
    };
    let mut s = s.clone();
    match (&mut s, param) {
        (S::RandomizedHomogeneous(p), SweepParameter::Rho) => p.lambda = value * p.mu,
        (S::HeterogeneousDegrees(p), SweepParameter::Rho) => p.lambda = value * p.mu,
        (S::HeterogeneousGroups(p), SweepParameter::Rho) => {
            let capacity: f64 = p.groups.iter().map(|g| g.k as f64 * g.mu).sum();
            p.lambda = value * capacity / p.server_count() as f64;
        }
        (S::Nested(raw), SweepParameter::Rho) => *raw = scale_explicit(raw, value)?,
        (S::Line(p), SweepParameter::Rho) => {
            let scale =
                value * p.mu.iter().sum::<f64>() / p.classes.iter().map(|c| c.lambda).sum::<f64>();
            if !scale.is_finite() {
                return Err(descriptor_error(
                    "cannot rescale the load of a model without traffic",
                ));
            }
            p.classes.iter_mut().for_each(|c| c.lambda *= scale);
        }
        (S::Ring(p), SweepParameter::Rho) => {
            let scale =
                value * p.mu.iter().sum::<f64>() / p.classes.iter().map(|c| c.lambda).sum::<f64>();
            if !scale.is_finite() {
                return Err(descriptor_error(
                    "cannot rescale the load of a model without traffic",
                ));
            }
            p.classes.iter_mut().for_each(|c| c.lambda *= scale);
        }
        (S::LineHomogeneous(p), SweepParameter::Rho) => p.rho = value,
        (S::RingHomogeneous(p), SweepParameter::Rho) => p.rho = value,
        (S::RandomizedHomogeneous(p), SweepParameter::D) => p.d = as_count(value, "d")?,
        (S::LineHomogeneous(p), SweepParameter::D) => p.d = as_count(value, "d")?,
        (S::RingHomogeneous(p), SweepParameter::D) => p.d = as_count(value, "d")?,
        (S::RandomizedHomogeneous(p), SweepParameter::K) => p.k = as_count(value, "K")?,
        (S::HeterogeneousDegrees(p), SweepParameter::K) => p.k = as_count(value, "K")?,
        (S::LineHomogeneous(p), SweepParameter::K) => p.k = as_count(value, "K")?,
        (S::RingHomogeneous(p), SweepParameter::K) => p.k = as_count(value, "K")?,
        (S::HeterogeneousDegrees(p), SweepParameter::Mix) if p.types.len() == 2 => {
            p.types[0].p = value;
            p.types[1].p = 1.0 - value;
        }
        (S::HeterogeneousGroups(p), SweepParameter::Mix) if p.types.len() == 2 => {
            p.types[0].p = value;
            p.types[1].p = 1.0 - value;
        }
        _ => return Err(unsupported()),
    }
    Ok(ModelDocument::Structured(s))
}

fn load_of(doc: &ModelDocument) -> Result<f64> {
    match doc {
        ModelDocument::Explicit(raw) => Ok(PoolModel::validate(raw)?.load()),
        ModelDocument::Structured(s) => Ok(s.total_arrivals() / s.total_capacity()),
    }
}

fn is_unstable(e: &Error) -> bool {
    matches!(e, Error::UnstableModel { .. } | Error::Overloaded(_))
}

/// One row per swept value with `psi`, `L`, `T`, `gamma = Λ/L` and the
/// service rate of every part. Per-type columns are always present for the
/// randomized families with types; per-class columns only when `per_class`.
pub fn sweep(
    doc: &ModelDocument,
    param: SweepParameter,
    range: &Range,
    choice: SolverChoice,
    per_class: bool,
    config: SolverConfig,
) -> Result<SweepTable> {
    let mut columns: Vec<String> = ["psi", "L", "T", "gamma"].map(String::from).to_vec();
    let mut part_columns: Option<(PartKind, usize)> = None;
    let mut rows = Vec::new();
    for value in range.values() {
        let d = with_parameter(doc, param, value)?;
        if load_of(&d)? >= UNSTABLE_LOAD {
            rows.push(SweepRow {
                value,
                status: RowStatus::Unstable,
                values: vec![],
            });
            continue;
        }
        let report = match analyze(&d, choice, config) {
            Ok(r) => r,
            Err(e) if is_unstable(&e) => {
                rows.push(SweepRow {
                    value,
                    status: RowStatus::Unstable,
                    values: vec![],
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut values = vec![
            Some(report.psi),
            Some(report.l_total),
            report.t_total,
            report.gamma,
        ];
        if let Some(parts) = &report.parts {
            let wanted = parts.kind == PartKind::Type || per_class;
            if wanted {
                match part_columns {
                    None => {
                        let prefix = if parts.kind == PartKind::Type {
                            "type"
                        } else {
                            "class"
                        };
                        columns
                            .extend((1..=parts.gamma.len()).map(|u| format!("gamma_{prefix}_{u}")));
                        part_columns = Some((parts.kind, parts.gamma.len()));
                    }
                    Some((_, n)) if n != parts.gamma.len() => {
                        return Err(descriptor_error(
                            "the number of parts changes along the sweep; drop --per-class",
                        ))
                    }
                    Some(_) => {}
                }
                values.extend(parts.gamma.iter().copied());
            }
        }
        rows.push(SweepRow {
            value,
            status: RowStatus::Ok,
            values,
        });
    }
    for row in &mut rows {
        row.values.resize(columns.len(), None);
    }
    Ok(SweepTable {
        parameter: param.name().into(),
        columns,
        rows,
    })
}

/// Global (random `d`-subsets), ring (`d` consecutive servers modulo `K`)
/// and line (`d` consecutive servers) assignments at equal load, all with
/// unit service rates. Reports `γ = Kρ/L` for each, plus `γ_i` of every
/// line class when `per_class`.
pub fn compare(k: usize, d: usize, range: &Range, per_class: bool) -> Result<SweepTable> {
    if d == 0 || d > k {
        return Err(descriptor_error(format!(
            "need 1 ≤ d ≤ K, got d = {d}, K = {k}"
        )));
    }
    let mut columns: Vec<String> = ["gamma_global", "gamma_ring", "gamma_line"]
        .map(String::from)
        .to_vec();
    if per_class {
        columns.extend((1..=k - d + 1).map(|i| format!("gamma_line_class_{i}")));
    }
    let mut rows = Vec::new();
    for rho in range.values() {
        if rho >= UNSTABLE_LOAD {
            rows.push(SweepRow {
                value: rho,
                status: RowStatus::Unstable,
                values: vec![],
            });
            continue;
        }
        let arrivals = k as f64 * rho;
        let global = randomized_homogeneous_metrics(&RandomizedHomogeneous {
            k,
            mu: 1.0,
            lambda: rho,
            d,
        });
        let ring = ring_homogeneous_metrics(&RingHomogeneous { k, d, rho });
        let line_desc = LineHomogeneous { k, d, rho };
        let line = if per_class {
            line_homogeneous_metrics(&line_desc)
        } else {
            line_homogeneous_global(&line_desc)
        };
        let (global, ring, line) = match (global, ring, line) {
            (Ok(g), Ok(r), Ok(l)) => (g, r, l),
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                if is_unstable(&e) {
                    rows.push(SweepRow {
                        value: rho,
                        status: RowStatus::Unstable,
                        values: vec![],
                    });
                    continue;
                }
                return Err(e);
            }
        };
        let mut values = vec![
            Some(arrivals / global.l_total),
            Some(arrivals / ring.l_total),
            Some(arrivals / line.l_total),
        ];
        if per_class {
            let rate = line_desc.class_rate();
            values.extend(line.l_parts.iter().map(|&l| Some(rate / l)));
        }
        rows.push(SweepRow {
            value: rho,
            status: RowStatus::Ok,
            values,
        });
    }
    Ok(SweepTable {
        parameter: "rho".into(),
        columns,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn range_parsing() {
        let r: Range = "0.05:0.95:0.05".parse().unwrap();
        let v = r.values();
        assert_eq!(v.len(), 19);
        assert_eq!(v[2], 0.15);
        assert_eq!(v[18], 0.95);
        assert_eq!("0.5".parse::<Range>().unwrap().values(), vec![0.5]);
        assert!("1:0:0.1".parse::<Range>().is_err());
        assert!("0:1:0".parse::<Range>().is_err());
        assert!("0:1".parse::<Range>().is_err());
    }

    #[test]
    fn mm1_rho_sweep_gamma() {
        let doc = ModelDocument::from_json(
            r#"{"servers":[{"id":1,"mu":1}],"classes":[{"id":1,"lambda":0.5,"servers":[1]}]}"#,
        )
        .unwrap();
        let t = sweep(
            &doc,
            SweepParameter::Rho,
            &"0.1:1.0:0.1".parse().unwrap(),
            SolverChoice::Auto,
            false,
            SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(t.rows.len(), 10);
        for row in &t.rows[..9] {
            assert_relative_eq!(
                row.values[3].unwrap(),
                1.0 - row.value,
                max_relative = 1e-12
            );
        }
        assert_eq!(t.rows[9].status, RowStatus::Unstable);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# bfpool-sweep v1\nrho,status,psi,L,T,gamma\n"));
        assert!(text.ends_with("1,unstable,,,,\n"));
    }

    #[test]
    fn compare_k3_d2_global_equals_ring() {
        let t = compare(3, 2, &"0.1:0.9:0.2".parse().unwrap(), false).unwrap();
        for row in &t.rows {
            assert_relative_eq!(
                row.values[0].unwrap(),
                row.values[1].unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn compare_d_equals_k_coincide() {
        let t = compare(6, 6, &"0.5".parse().unwrap(), true).unwrap();
        let v = &t.rows[0].values;
        assert_eq!(v.len(), 4);
        for x in v {
            assert_relative_eq!(x.unwrap(), 6.0 * (1.0 - 0.5), max_relative = 1e-12);
        }
    }

    #[test]
    fn parameter_changes() {
        let doc = ModelDocument::from_json(
            r#"{"structured":{"family":"heterogeneous_degrees","K":10,"rho":0.5,
                "types":[{"p":0.5,"d":2},{"p":0.5,"d":4}]}}"#,
        )
        .unwrap();
        let ModelDocument::Structured(Structured::HeterogeneousDegrees(p)) =
            with_parameter(&doc, SweepParameter::Mix, 0.25).unwrap()
        else {
            panic!()
        };
        assert_eq!((p.types[0].p, p.types[1].p), (0.25, 0.75));
        assert!(with_parameter(&doc, SweepParameter::D, 3.0).is_err());
        assert!(with_parameter(&doc, SweepParameter::K, 2.5).is_err());
    }
}
