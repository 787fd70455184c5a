//! Rule base: consistency constraints, a unit table with conversion factors,
//! and a formula library. Ships with a starter set covering SI units and
//! common physics/finance formulas; extensible via a JSON rules file.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Unit-compatibility facet of a constraint: a dimension plus the unit
/// symbols the constraint expects values in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitFacet {
    pub dimension: String,
    #[serde(default)]
    pub units: Vec<String>,
}

/// One consistency constraint. At least one facet must be non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    /// Entity-class tags the relation's endpoints should mention.
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub unit: Option<UnitFacet>,
    /// Transformation pattern text, e.g. "speed = distance / time".
    #[serde(default)]
    pub equation: Option<String>,
}

impl Constraint {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.unit.is_none() && self.equation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub name: String,
    pub expression: String,
    /// Variable name to dimension tag.
    #[serde(default)]
    pub variables: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDef {
    pub symbol: String,
    pub dimension: String,
    /// Factor to the dimension's base unit; absent when no fixed conversion
    /// exists (e.g. currencies).
    #[serde(default)]
    pub to_base: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct RuleBase {
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub units: Vec<UnitDef>,
    #[serde(default)]
    pub formulas: Vec<Formula>,
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("failed to read rules file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse rules file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid rule base: {0}")]
    Invalid(String),
}

impl RuleBase {
    pub fn load(path: &std::path::Path) -> Result<RuleBase, RuleError> {
        let raw = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base: RuleBase = serde_json::from_str(&raw).map_err(|e| RuleError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        for c in &self.constraints {
            if c.is_empty() {
                return Err(RuleError::Invalid(format!("constraint {} has no facets", c.id)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for u in &self.units {
            if !seen.insert(u.symbol.clone()) {
                return Err(RuleError::Invalid(format!("duplicate unit symbol {}", u.symbol)));
            }
            if let Some(f) = u.to_base {
                if !(f.is_finite() && f > 0.0) {
                    return Err(RuleError::Invalid(format!(
                        "unit {} has non-positive conversion factor",
                        u.symbol
                    )));
                }
            }
        }
        for f in &self.formulas {
            if f.variables.is_empty() {
                return Err(RuleError::Invalid(format!("formula {} has no variables", f.name)));
            }
            for v in f.variables.keys() {
                if !f.expression.contains(v.as_str()) {
                    return Err(RuleError::Invalid(format!(
                        "formula {}: variable {v} missing from expression",
                        f.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn unit(&self, symbol: &str) -> Option<&UnitDef> {
        self.units.iter().find(|u| u.symbol.eq_ignore_ascii_case(symbol))
    }

    pub fn dimension_of(&self, symbol: &str) -> Option<&str> {
        self.unit(symbol).map(|u| u.dimension.as_str())
    }

    /// Multiplicative factor converting `from` into `to`, when both units
    /// share a dimension with known base factors. Inversion symmetry
    /// (factor(a,b) = 1/factor(b,a)) follows from the base-factor form.
    pub fn convert(&self, from: &str, to: &str) -> Option<f64> {
        let a = self.unit(from)?;
        let b = self.unit(to)?;
        if a.dimension != b.dimension {
            return None;
        }
        if from.eq_ignore_ascii_case(to) {
            return Some(1.0);
        }
        Some(a.to_base? / b.to_base?)
    }

    pub fn formula(&self, name: &str) -> Option<&Formula> {
        self.formulas.iter().find(|f| f.name.eq_ignore_ascii_case(name))
    }

    /// Starter rule base: SI conversions plus common physics and finance
    /// formulas, with one constraint per formula.
    pub fn starter() -> RuleBase {
        let units = vec![
            unit("m", "length", Some(1.0)),
            unit("km", "length", Some(1000.0)),
            unit("cm", "length", Some(0.01)),
            unit("mm", "length", Some(0.001)),
            unit("mi", "length", Some(1609.344)),
            unit("s", "time", Some(1.0)),
            unit("min", "time", Some(60.0)),
            unit("h", "time", Some(3600.0)),
            unit("day", "time", Some(86400.0)),
            unit("kg", "mass", Some(1.0)),
            unit("g", "mass", Some(0.001)),
            unit("t", "mass", Some(1000.0)),
            unit("lb", "mass", Some(0.45359237)),
            unit("j", "energy", Some(1.0)),
            unit("kj", "energy", Some(1000.0)),
            unit("kwh", "energy", Some(3_600_000.0)),
            unit("w", "power", Some(1.0)),
            unit("kw", "power", Some(1000.0)),
            unit("m/s", "speed", Some(1.0)),
            unit("km/h", "speed", Some(1.0 / 3.6)),
            unit("l", "volume", Some(1.0)),
            unit("ml", "volume", Some(0.001)),
            unit("m3", "volume", Some(1000.0)),
            unit("kg/m3", "density", Some(1.0)),
            unit("g/cm3", "density", Some(1000.0)),
            unit("pa", "pressure", Some(1.0)),
            unit("kpa", "pressure", Some(1000.0)),
            unit("n", "force", Some(1.0)),
            unit("%", "ratio", Some(0.01)),
            unit("usd", "currency", None),
            unit("eur", "currency", None),
            unit("cny", "currency", None),
        ];

        let formulas = vec![
            formula("speed", "speed = distance / time", &[("speed", "speed"), ("distance", "length"), ("time", "time")]),
            formula("density", "density = mass / volume", &[("density", "density"), ("mass", "mass"), ("volume", "volume")]),
            formula("energy", "energy = power * time", &[("energy", "energy"), ("power", "power"), ("time", "time")]),
            formula("force", "force = mass * acceleration", &[("force", "force"), ("mass", "mass"), ("acceleration", "acceleration")]),
            formula("work", "work = force * distance", &[("work", "energy"), ("force", "force"), ("distance", "length")]),
            formula("power", "power = work / time", &[("power", "power"), ("work", "energy"), ("time", "time")]),
            formula("pressure", "pressure = force / area", &[("pressure", "pressure"), ("force", "force"), ("area", "area")]),
            formula("momentum", "momentum = mass * velocity", &[("momentum", "momentum"), ("mass", "mass"), ("velocity", "speed")]),
            formula("kinetic_energy", "kinetic_energy = 0.5 * mass * velocity ^ 2", &[("kinetic_energy", "energy"), ("mass", "mass"), ("velocity", "speed")]),
            formula("acceleration", "acceleration = velocity / time", &[("acceleration", "acceleration"), ("velocity", "speed"), ("time", "time")]),
            formula("area", "area = length * width", &[("area", "area"), ("length", "length"), ("width", "length")]),
            formula("percentage_change", "percentage_change = (new - old) / old * 100", &[("new", "any"), ("old", "any")]),
            formula("compound_growth", "amount = principal * (1 + rate) ^ years", &[("amount", "currency"), ("principal", "currency"), ("rate", "ratio"), ("years", "time")]),
            formula("profit_margin", "profit_margin = (revenue - cost) / revenue * 100", &[("revenue", "currency"), ("cost", "currency")]),
            formula("average", "average = total / count", &[("average", "any"), ("total", "any"), ("count", "count")]),
        ];

        let constraints = formulas
            .iter()
            .map(|f| {
                // the output variable (named like the formula) fixes the
                // constraint's unit dimension
                let primary_dim = f
                    .variables
                    .get(&f.name)
                    .or_else(|| f.variables.values().next())
                    .map(String::as_str)
                    .unwrap_or_default();
                Constraint {
                    id: format!("c-{}", f.name),
                    entities: f.variables.keys().cloned().collect(),
                    unit: if primary_dim == "any" {
                        None
                    } else {
                        Some(UnitFacet { dimension: primary_dim.to_string(), units: vec![] })
                    },
                    equation: Some(f.expression.clone()),
                }
            })
            .collect();

        let base = RuleBase { constraints, units, formulas };
        base.validate().expect("starter rule base must validate");
        base
    }
}

fn unit(symbol: &str, dimension: &str, to_base: Option<f64>) -> UnitDef {
    UnitDef { symbol: symbol.into(), dimension: dimension.into(), to_base }
}

fn formula(name: &str, expression: &str, vars: &[(&str, &str)]) -> Formula {
    Formula {
        name: name.into(),
        expression: expression.into(),
        variables: vars.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starter_base_validates() {
        let base = RuleBase::starter();
        assert!(base.constraints.len() >= 15);
        assert!(base.formulas.len() >= 15);
    }

    #[test]
    fn conversion_symmetric_under_inversion() {
        let base = RuleBase::starter();
        for a in &base.units {
            for b in &base.units {
                if let Some(f) = base.convert(&a.symbol, &b.symbol) {
                    let back = base.convert(&b.symbol, &a.symbol).unwrap();
                    assert!(
                        (f * back - 1.0).abs() < 1e-9,
                        "factor({},{}) * factor({},{}) = {}",
                        a.symbol,
                        b.symbol,
                        b.symbol,
                        a.symbol,
                        f * back
                    );
                }
            }
        }
    }

    #[test]
    fn known_conversions_have_expected_factors() {
        let base = RuleBase::starter();
        assert!((base.convert("km", "m").unwrap() - 1000.0).abs() < 1e-9);
        assert!((base.convert("h", "min").unwrap() - 60.0).abs() < 1e-9);
        assert!((base.convert("km/h", "m/s").unwrap() - 1.0 / 3.6).abs() < 1e-9);
        // same dimension but no fixed factor
        assert_eq!(base.convert("usd", "eur"), None);
        assert_eq!(base.dimension_of("usd"), Some("currency"));
        // different dimensions never convert
        assert_eq!(base.convert("km", "h"), None);
    }

    #[test]
    fn facetless_constraint_rejected() {
        let base = RuleBase {
            constraints: vec![Constraint {
                id: "empty".into(),
                entities: vec![],
                unit: None,
                equation: None,
            }],
            units: vec![],
            formulas: vec![],
        };
        assert!(base.validate().is_err());
    }

    #[test]
    fn rules_file_round_trips() {
        let base = RuleBase::starter();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.json");
        std::fs::write(&path, serde_json::to_string_pretty(&base).unwrap()).unwrap();
        let loaded = RuleBase::load(&path).unwrap();
        assert_eq!(loaded.constraints, base.constraints);
        assert_eq!(loaded.units, base.units);
        assert_eq!(loaded.formulas, base.formulas);
    }
}
