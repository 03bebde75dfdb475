use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FormulaError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameter {
    pub value: f64,
    #[serde(default)]
    pub unit: String,
}

/// Named constants stored in the argumentation (speeds, frame rate, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Parameter>", into = "BTreeMap<String, Parameter>")]
pub struct ParameterEnv(BTreeMap<String, Parameter>);

impl ParameterEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64, unit: impl Into<String>) -> Result<(), FormulaError> {
        let name = name.into();
        if !value.is_finite() {
            return Err(FormulaError::NonFinite(name));
        }
        self.0.insert(name, Parameter { value, unit: unit.into() });
        Ok(())
    }

    pub fn with(mut self, name: &str, value: f64, unit: &str) -> Self {
        self.insert(name, value, unit).expect("finite parameter value");
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).map(|p| p.value)
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Parameter> {
        self.0.remove(name)
    }

    /// Replace values of existing parameters, keeping their units. Unknown
    /// names are returned as an error.
    pub fn set_value(&mut self, name: &str, value: f64) -> Result<(), FormulaError> {
        if !value.is_finite() {
            return Err(FormulaError::NonFinite(name.to_string()));
        }
        match self.0.get_mut(name) {
            Some(p) => {
                p.value = value;
                Ok(())
            }
            None => Err(FormulaError::UnboundParam(name.to_string())),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<BTreeMap<String, Parameter>> for ParameterEnv {
    type Error = FormulaError;

    fn try_from(map: BTreeMap<String, Parameter>) -> Result<Self, Self::Error> {
        if let Some((name, _)) = map.iter().find(|(_, p)| !p.value.is_finite()) {
            return Err(FormulaError::NonFinite(name.clone()));
        }
        Ok(Self(map))
    }
}

impl From<ParameterEnv> for BTreeMap<String, Parameter> {
    fn from(env: ParameterEnv) -> Self {
        env.0
    }
}
