//! On-disk JSON representation of IFS specifications.
//!
//! The format is strict: unknown fields are rejected so that typos fail
//! loudly instead of silently changing the system under study.
//!
//! ```json
//! {
//!   "dimension": 1,
//!   "ambient": { "box": { "lo": [0.0], "hi": [1.0] } },
//!   "prefix": [],
//!   "tail": { "periodic": [ [
//!     { "ratio": 0.3333333333333333, "translation": 0.0 },
//!     { "ratio": 0.3333333333333333, "translation": 0.6666666666666666 }
//!   ] ] }
//! }
//! ```
//!
//! Maps are `{ratio, translation, reflect?}` in dimension 1 and
//! `{ratio, rotation_degrees?, translation: [x, y]}` in dimension 2.
//! Generator tails look like
//! `{"generator": {"name": "unbounded", "params": {...}}}`; specs written
//! by the generators themselves carry an additional optional top-level
//! `provenance` block recording how they were produced.

use serde::{Deserialize, Serialize};

use crate::error::{MoranError, Result};
use crate::examples::{ArbitraryValuesParams, KSequence, ScalingFunction, UnboundedExampleParams};
use crate::ifs_core::{
    AmbientSet, GeneratorSpec, IFSSpec, LevelSystem, Similarity, Tail,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub dimension: usize,
    pub ambient: AmbientJson,
    #[serde(default)]
    pub prefix: Vec<Vec<MapJson>>,
    pub tail: TailJson,
    /// Free-form record of how a generated spec was produced; ignored by
    /// validation but preserved on round trips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum AmbientJson {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// One similarity; which fields apply depends on the spec dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapJson {
    pub ratio: f64,
    pub translation: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflect: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_degrees: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum TailJson {
    Periodic(Vec<Vec<MapJson>>),
    Generator(GeneratorJson),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorJson {
    pub name: String,
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnboundedParamsJson {
    pub eps: f64,
    /// Scaling function for the neighbourhood growth: "log" or
    /// {"power": p} with 0 < p < 1.
    pub f: ScalingJson,
    /// Number of completed construction rounds to materialize.
    #[serde(default)]
    pub depth: Option<usize>,
    /// Cap on materialized levels.
    #[serde(default)]
    pub level_budget: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingJson {
    Log,
    Power(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArbitraryParamsJson {
    pub s: f64,
    pub t: f64,
    /// The digit-count sequence k_n: "linear" (k_n = n) or an explicit table.
    pub k: KSequenceJson,
    #[serde(default)]
    pub level_budget: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSequenceJson {
    Linear,
    Table(Vec<u64>),
}

fn point_from(dim: usize, v: &[f64], what: &str) -> Result<[f64; 2]> {
    if v.len() != dim {
        return Err(MoranError::SpecFile(format!(
            "{what} must have {dim} coordinate(s), got {}",
            v.len()
        )));
    }
    Ok([v[0], if dim == 2 { v[1] } else { 0.0 }])
}

fn point_to(dim: usize, p: &[f64; 2]) -> Vec<f64> {
    p[..dim].to_vec()
}

fn map_from(dim: usize, m: &MapJson) -> Result<Similarity> {
    match dim {
        1 => {
            if m.rotation_degrees.is_some() {
                return Err(MoranError::SpecFile(
                    "rotation_degrees is only valid in dimension 2".into(),
                ));
            }
            let t = m.translation.as_f64().ok_or_else(|| {
                MoranError::SpecFile("translation must be a number in dimension 1".into())
            })?;
            Ok(Similarity::interval(m.ratio, t, m.reflect.unwrap_or(false)))
        }
        2 => {
            if m.reflect.is_some() {
                return Err(MoranError::SpecFile(
                    "reflect is only valid in dimension 1".into(),
                ));
            }
            let t: Vec<f64> = serde_json::from_value(m.translation.clone()).map_err(|_| {
                MoranError::SpecFile("translation must be [x, y] in dimension 2".into())
            })?;
            let t = point_from(2, &t, "translation")?;
            Ok(Similarity::planar(
                m.ratio,
                m.rotation_degrees.unwrap_or(0.0),
                t,
            ))
        }
        d => Err(MoranError::UnsupportedDimension(d)),
    }
}

fn map_to(dim: usize, s: &Similarity) -> MapJson {
    if dim == 1 {
        let reflect = s.orthogonal[0][0] < 0.0;
        MapJson {
            ratio: s.ratio,
            translation: serde_json::json!(s.translation[0]),
            reflect: if reflect { Some(true) } else { None },
            rotation_degrees: None,
        }
    } else {
        let deg = s.orthogonal[1][0].atan2(s.orthogonal[0][0]).to_degrees();
        MapJson {
            ratio: s.ratio,
            translation: serde_json::json!(point_to(2, &s.translation)),
            reflect: None,
            rotation_degrees: if deg == 0.0 { None } else { Some(deg) },
        }
    }
}

fn level_from(dim: usize, maps: &[MapJson]) -> Result<LevelSystem> {
    Ok(LevelSystem::new(
        maps.iter().map(|m| map_from(dim, m)).collect::<Result<_>>()?,
    ))
}

fn generator_from(g: &GeneratorJson) -> Result<GeneratorSpec> {
    match g.name.as_str() {
        "unbounded" => {
            let p: UnboundedParamsJson = serde_json::from_value(g.params.clone())
                .map_err(|e| MoranError::SpecFile(format!("unbounded params: {e}")))?;
            let f = match p.f {
                ScalingJson::Log => ScalingFunction::Log,
                ScalingJson::Power(q) => ScalingFunction::Power(q),
            };
            Ok(GeneratorSpec::Unbounded(UnboundedExampleParams {
                eps: p.eps,
                f,
                depth: p.depth.unwrap_or(3),
                level_budget: p.level_budget.unwrap_or(64),
            }))
        }
        "arbitrary_values" => {
            let p: ArbitraryParamsJson = serde_json::from_value(g.params.clone())
                .map_err(|e| MoranError::SpecFile(format!("arbitrary_values params: {e}")))?;
            let k = match p.k {
                KSequenceJson::Linear => KSequence::Linear,
                KSequenceJson::Table(v) => KSequence::Table(v),
            };
            Ok(GeneratorSpec::ArbitraryValues(ArbitraryValuesParams {
                s: p.s,
                t: p.t,
                k,
                level_budget: p.level_budget.unwrap_or(24),
            }))
        }
        other => Err(MoranError::SpecFile(format!("unknown generator '{other}'"))),
    }
}

impl SpecFile {
    pub fn to_spec(&self) -> Result<IFSSpec> {
        let dim = self.dimension;
        let ambient = match &self.ambient {
            AmbientJson::Box { lo, hi } => AmbientSet::Box {
                lo: point_from(dim, lo, "ambient lo")?,
                hi: point_from(dim, hi, "ambient hi")?,
            },
            AmbientJson::Ball { center, radius } => AmbientSet::Ball {
                center: point_from(dim, center, "ambient center")?,
                radius: *radius,
            },
        };
        let prefix = self
            .prefix
            .iter()
            .map(|l| level_from(dim, l))
            .collect::<Result<_>>()?;
        let tail = match &self.tail {
            TailJson::Periodic(levels) => Tail::Periodic(
                levels
                    .iter()
                    .map(|l| level_from(dim, l))
                    .collect::<Result<_>>()?,
            ),
            TailJson::Generator(g) => Tail::Generator(generator_from(g)?),
        };
        Ok(IFSSpec {
            dimension: dim,
            ambient,
            prefix,
            tail,
        })
    }

    /// Serialize an explicit (prefix + periodic) spec back to the file form.
    pub fn from_spec(spec: &IFSSpec, provenance: Option<serde_json::Value>) -> Result<SpecFile> {
        let dim = spec.dimension;
        let ambient = match &spec.ambient {
            AmbientSet::Box { lo, hi } => AmbientJson::Box {
                lo: point_to(dim, lo),
                hi: point_to(dim, hi),
            },
            AmbientSet::Ball { center, radius } => AmbientJson::Ball {
                center: point_to(dim, center),
                radius: *radius,
            },
        };
        let level_to = |l: &LevelSystem| l.maps.iter().map(|m| map_to(dim, m)).collect();
        let tail = match &spec.tail {
            Tail::Periodic(levels) => TailJson::Periodic(levels.iter().map(level_to).collect()),
            Tail::Generator(_) => {
                return Err(MoranError::SpecFile(
                    "only explicit specs can be serialized from memory; write generator specs via the generator output".into(),
                ))
            }
        };
        Ok(SpecFile {
            dimension: dim,
            ambient,
            prefix: spec.prefix.iter().map(level_to).collect(),
            tail,
            provenance,
        })
    }
}

pub fn parse_spec_str(s: &str) -> Result<IFSSpec> {
    let file: SpecFile =
        serde_json::from_str(s).map_err(|e| MoranError::SpecFile(e.to_string()))?;
    file.to_spec()
}

pub fn spec_to_string(spec: &IFSSpec, provenance: Option<serde_json::Value>) -> Result<String> {
    let file = SpecFile::from_spec(spec, provenance)?;
    serde_json::to_string_pretty(&file).map_err(|e| MoranError::SpecFile(e.to_string()))
}
