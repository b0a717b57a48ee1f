//! Hyperparameter search spaces.
//!
//! A [`SearchSpace`] is an ordered list of [`HyperparameterDomain`]s. Configurations
//! are encoded into a fixed-length vector in `[0, 1]^d` for the surrogate: numeric
//! domains map affinely (after a log transform for logarithmic scales) and
//! categorical domains expand into one-hot blocks.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("domain `{0}`: invalid bounds (need lo < hi, and lo > 0 on a log scale)")]
    InvalidBounds(String),
    #[error("domain `{0}`: categorical choices must be non-empty and duplicate-free")]
    InvalidChoices(String),
    #[error("domain `{0}`: {1}")]
    Malformed(String, String),
    #[error("duplicate domain name `{0}`")]
    DuplicateName(String),
    #[error("value out of domain `{0}`")]
    OutOfDomain(String),
    #[error("configuration has no value for domain `{0}`")]
    MissingValue(String),
    #[error("configuration names unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("encoded vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    #[serde(alias = "logarithmic")]
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Continuous { lo: f64, hi: f64, scale: Scale },
    Integer { lo: f64, hi: f64, scale: Scale },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainSpec", into = "DomainSpec")]
pub struct HyperparameterDomain {
    name: String,
    kind: DomainKind,
}

impl HyperparameterDomain {
    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64, scale: Scale) -> Result<Self, SpaceError> {
        Self::new(name.into(), DomainKind::Continuous { lo, hi, scale })
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64, scale: Scale) -> Result<Self, SpaceError> {
        Self::new(
            name.into(),
            DomainKind::Integer {
                lo: lo as f64,
                hi: hi as f64,
                scale,
            },
        )
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = S>,
    ) -> Result<Self, SpaceError> {
        Self::new(
            name.into(),
            DomainKind::Categorical {
                choices: choices.into_iter().map(Into::into).collect(),
            },
        )
    }

    pub fn new(name: String, kind: DomainKind) -> Result<Self, SpaceError> {
        match &kind {
            DomainKind::Continuous { lo, hi, scale } | DomainKind::Integer { lo, hi, scale } => {
                let ok = lo.is_finite() && hi.is_finite() && lo < hi && (*scale == Scale::Linear || *lo > 0.0);
                if !ok {
                    return Err(SpaceError::InvalidBounds(name));
                }
                if matches!(kind, DomainKind::Integer { .. }) && (lo.fract() != 0.0 || hi.fract() != 0.0) {
                    return Err(SpaceError::InvalidBounds(name));
                }
            }
            DomainKind::Categorical { choices } => {
                let unique: HashSet<&String> = choices.iter().collect();
                if choices.is_empty() || unique.len() != choices.len() {
                    return Err(SpaceError::InvalidChoices(name));
                }
            }
        }
        Ok(Self { name, kind })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// Number of encoded coordinates this domain occupies.
    pub fn width(&self) -> usize {
        match &self.kind {
            DomainKind::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    fn contains(&self, value: &Value) -> bool {
        match (&self.kind, value) {
            (DomainKind::Continuous { lo, hi, .. }, Value::Number(v)) => v.is_finite() && lo <= v && v <= hi,
            (DomainKind::Integer { lo, hi, .. }, Value::Number(v)) => {
                v.is_finite() && lo <= v && v <= hi && v.fract() == 0.0
            }
            (DomainKind::Categorical { choices }, Value::Label(l)) => choices.iter().any(|c| c == l),
            _ => false,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match &self.kind {
            DomainKind::Continuous { lo, hi, scale } => Value::Number(sample_numeric(*lo, *hi, *scale, rng)),
            DomainKind::Integer { lo, hi, scale } => {
                // widen by half a unit so the end points get a full-width bucket
                let v = match scale {
                    Scale::Linear => rng.random_range(lo - 0.5..hi + 0.5).round(),
                    Scale::Log => sample_numeric(*lo, *hi, Scale::Log, rng).round(),
                };
                Value::Number(v.clamp(*lo, *hi))
            }
            DomainKind::Categorical { choices } => Value::Label(choices[rng.random_range(0..choices.len())].clone()),
        }
    }
}

fn sample_numeric<R: Rng + ?Sized>(lo: f64, hi: f64, scale: Scale, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let v = match scale {
        Scale::Linear => lo + u * (hi - lo),
        Scale::Log => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
    };
    v.clamp(lo, hi)
}

fn to_unit(v: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => (v - lo) / (hi - lo),
        Scale::Log => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
    }
}

fn from_unit(u: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let v = match scale {
        Scale::Linear => lo + u * (hi - lo),
        Scale::Log => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
    };
    v.clamp(lo, hi)
}

/// Flat on-disk form of a domain: `{name, kind, bounds|choices, scale}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSpec {
    name: String,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Continuous,
    Integer,
    Categorical,
}

impl TryFrom<DomainSpec> for HyperparameterDomain {
    type Error = SpaceError;

    fn try_from(spec: DomainSpec) -> Result<Self, Self::Error> {
        let malformed = |msg: &str| SpaceError::Malformed(spec.name.clone(), msg.to_string());
        let kind = match spec.kind {
            KindTag::Continuous | KindTag::Integer => {
                if spec.choices.is_some() {
                    return Err(malformed("numeric domains take `bounds`, not `choices`"));
                }
                let [lo, hi] = spec.bounds.ok_or_else(|| malformed("missing `bounds`"))?;
                let scale = spec.scale.unwrap_or(Scale::Linear);
                if matches!(spec.kind, KindTag::Continuous) {
                    DomainKind::Continuous { lo, hi, scale }
                } else {
                    DomainKind::Integer { lo, hi, scale }
                }
            }
            KindTag::Categorical => {
                if spec.bounds.is_some() || spec.scale.is_some() {
                    return Err(malformed("categorical domains take only `choices`"));
                }
                DomainKind::Categorical {
                    choices: spec.choices.clone().ok_or_else(|| malformed("missing `choices`"))?,
                }
            }
        };
        HyperparameterDomain::new(spec.name, kind)
    }
}

impl From<HyperparameterDomain> for DomainSpec {
    fn from(d: HyperparameterDomain) -> Self {
        match d.kind {
            DomainKind::Continuous { lo, hi, scale } => DomainSpec {
                name: d.name,
                kind: KindTag::Continuous,
                bounds: Some([lo, hi]),
                scale: Some(scale),
                choices: None,
            },
            DomainKind::Integer { lo, hi, scale } => DomainSpec {
                name: d.name,
                kind: KindTag::Integer,
                bounds: Some([lo, hi]),
                scale: Some(scale),
                choices: None,
            },
            DomainKind::Categorical { choices } => DomainSpec {
                name: d.name,
                kind: KindTag::Categorical,
                bounds: None,
                scale: None,
                choices: Some(choices),
            },
        }
    }
}

/// A hyperparameter value: a number for numeric domains, a label for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Label(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Label(l) => f.write_str(l),
        }
    }
}

/// One point of a search space, keyed by domain name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HyperparameterDomain>", into = "Vec<HyperparameterDomain>")]
pub struct SearchSpace {
    domains: Vec<HyperparameterDomain>,
    encoded_dim: usize,
}

impl TryFrom<Vec<HyperparameterDomain>> for SearchSpace {
    type Error = SpaceError;

    fn try_from(domains: Vec<HyperparameterDomain>) -> Result<Self, Self::Error> {
        SearchSpace::new(domains)
    }
}

impl From<SearchSpace> for Vec<HyperparameterDomain> {
    fn from(space: SearchSpace) -> Self {
        space.domains
    }
}

impl SearchSpace {
    pub fn new(domains: Vec<HyperparameterDomain>) -> Result<Self, SpaceError> {
        let mut seen = HashSet::new();
        for d in &domains {
            if !seen.insert(d.name.as_str()) {
                return Err(SpaceError::DuplicateName(d.name.clone()));
            }
        }
        let encoded_dim = domains.iter().map(HyperparameterDomain::width).sum();
        Ok(Self { domains, encoded_dim })
    }

    pub fn domains(&self) -> &[HyperparameterDomain] {
        &self.domains
    }

    pub fn encoded_dim(&self) -> usize {
        self.encoded_dim
    }

    pub fn domain(&self, name: &str) -> Option<&HyperparameterDomain> {
        self.domains.iter().find(|d| d.name == name)
    }

    /// Draws a configuration uniformly (log-uniformly on logarithmic scales).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut config = Configuration::new();
        for d in &self.domains {
            config.insert(d.name.clone(), d.sample(rng));
        }
        config
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        for (name, _) in config.iter() {
            if self.domain(name).is_none() {
                return Err(SpaceError::UnknownDomain(name.to_string()));
            }
        }
        for d in &self.domains {
            let value = config.get(&d.name).ok_or_else(|| SpaceError::MissingValue(d.name.clone()))?;
            if !d.contains(value) {
                return Err(SpaceError::OutOfDomain(d.name.clone()));
            }
        }
        Ok(())
    }

    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>, SpaceError> {
        self.validate(config)?;
        let mut out = Vec::with_capacity(self.encoded_dim);
        for d in &self.domains {
            match (&d.kind, config.get(&d.name)) {
                (DomainKind::Continuous { lo, hi, scale }, Some(Value::Number(v)))
                | (DomainKind::Integer { lo, hi, scale }, Some(Value::Number(v))) => {
                    out.push(to_unit(*v, *lo, *hi, *scale).clamp(0.0, 1.0));
                }
                (DomainKind::Categorical { choices }, Some(Value::Label(l))) => {
                    out.extend(choices.iter().map(|c| if c == l { 1.0 } else { 0.0 }));
                }
                _ => return Err(SpaceError::OutOfDomain(d.name.clone())),
            }
        }
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode). Numeric coordinates are clamped to
    /// `[0, 1]`, integers rounded, and each one-hot block resolved by argmax
    /// (first index on ties).
    pub fn decode(&self, encoded: &[f64]) -> Result<Configuration, SpaceError> {
        if encoded.len() != self.encoded_dim {
            return Err(SpaceError::DimensionMismatch {
                got: encoded.len(),
                expected: self.encoded_dim,
            });
        }
        let mut config = Configuration::new();
        let mut offset = 0;
        for d in &self.domains {
            let value = match &d.kind {
                DomainKind::Continuous { lo, hi, scale } => Value::Number(from_unit(encoded[offset], *lo, *hi, *scale)),
                DomainKind::Integer { lo, hi, scale } => {
                    Value::Number(from_unit(encoded[offset], *lo, *hi, *scale).round().clamp(*lo, *hi))
                }
                DomainKind::Categorical { choices } => {
                    let block = &encoded[offset..offset + choices.len()];
                    let mut best = 0;
                    for (i, v) in block.iter().enumerate() {
                        if *v > block[best] {
                            best = i;
                        }
                    }
                    Value::Label(choices[best].clone())
                }
            };
            offset += d.width();
            config.insert(d.name.clone(), value);
        }
        Ok(config)
    }

    /// Renders a configuration as `name=value` pairs in domain order.
    pub fn describe(&self, config: &Configuration) -> String {
        self.domains
            .iter()
            .filter_map(|d| config.get(&d.name).map(|v| format!("{}={}", d.name, v)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ks_statistic(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = x - i as f64 / n;
                let hi = (i as f64 + 1.0) / n - x;
                lo.max(hi)
            })
            .fold(0.0, f64::max)
    }

    // asymptotic Kolmogorov critical value at alpha = 0.01
    fn ks_critical(n: usize) -> f64 {
        1.6276 / (n as f64).sqrt()
    }

    #[test]
    fn single_choice_categorical_always_sampled() {
        let space = SearchSpace::new(vec![HyperparameterDomain::categorical("op", ["conv"]).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c = space.sample(&mut rng);
            assert_eq!(c.get("op"), Some(&Value::Label("conv".into())));
        }
    }

    #[test]
    fn linear_sampling_is_uniform() {
        let space =
            SearchSpace::new(vec![HyperparameterDomain::continuous("x", 0.0, 1.0, Scale::Linear).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| match space.sample(&mut rng).get("x") {
                Some(Value::Number(v)) => *v,
                _ => unreachable!(),
            })
            .collect();
        assert!(draws.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(ks_statistic(draws) < ks_critical(10_000));
    }

    #[test]
    fn log_sampling_is_uniform_in_log_space() {
        let space =
            SearchSpace::new(vec![HyperparameterDomain::continuous("lr", 1e-4, 1e-1, Scale::Log).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| match space.sample(&mut rng).get("lr") {
                Some(Value::Number(v)) => (v.log10() + 4.0) / 3.0,
                _ => unreachable!(),
            })
            .collect();
        assert!(ks_statistic(draws) < ks_critical(10_000));
    }

    #[test]
    fn one_hot_block() {
        let space = SearchSpace::new(vec![HyperparameterDomain::categorical("c", ["a", "b", "c"]).unwrap()]).unwrap();
        let cfg = Configuration::new().with("c", Value::Label("b".into()));
        assert_eq!(space.encode(&cfg).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn log_endpoints_and_midpoint() {
        let space =
            SearchSpace::new(vec![HyperparameterDomain::continuous("lr", 1e-4, 1e-1, Scale::Log).unwrap()]).unwrap();
        let lo = Configuration::new().with("lr", Value::Number(1e-4));
        assert_eq!(space.encode(&lo).unwrap(), vec![0.0]);
        let mid = Configuration::new().with("lr", Value::Number(10f64.powf(-2.5)));
        assert!((space.encode(&mid).unwrap()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_names_the_domain() {
        let space = SearchSpace::new(vec![
            HyperparameterDomain::continuous("lr", 1e-4, 1e-1, Scale::Log).unwrap(),
            HyperparameterDomain::categorical("act", ["relu", "tanh"]).unwrap(),
        ])
        .unwrap();
        let bad = Configuration::new()
            .with("lr", Value::Number(0.5))
            .with("act", Value::Label("relu".into()));
        assert_eq!(space.encode(&bad), Err(SpaceError::OutOfDomain("lr".into())));
        let bad = Configuration::new()
            .with("lr", Value::Number(0.01))
            .with("act", Value::Label("gelu".into()));
        assert_eq!(space.encode(&bad), Err(SpaceError::OutOfDomain("act".into())));
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(HyperparameterDomain::continuous("x", 1.0, 1.0, Scale::Linear).is_err());
        assert!(HyperparameterDomain::continuous("x", 0.0, 1.0, Scale::Log).is_err());
        assert!(HyperparameterDomain::categorical("c", Vec::<String>::new()).is_err());
        assert!(HyperparameterDomain::categorical("c", ["a", "a"]).is_err());
        let d = HyperparameterDomain::continuous("x", 0.0, 1.0, Scale::Linear).unwrap();
        assert_eq!(
            SearchSpace::new(vec![d.clone(), d]),
            Err(SpaceError::DuplicateName("x".into()))
        );
    }

    #[test]
    fn integer_domain_rounds_on_decode() {
        let space = SearchSpace::new(vec![HyperparameterDomain::integer("layers", 1, 8, Scale::Linear).unwrap()]).unwrap();
        let cfg = space.decode(&[0.5]).unwrap();
        assert_eq!(cfg.get("layers"), Some(&Value::Number(5.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [false; 8];
        for _ in 0..500 {
            if let Some(Value::Number(v)) = space.sample(&mut rng).get("layers") {
                seen[*v as usize - 1] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn sampling_is_reproducible() {
        let space = SearchSpace::new(vec![
            HyperparameterDomain::continuous("lr", 1e-4, 1e-1, Scale::Log).unwrap(),
            HyperparameterDomain::integer("width", 16, 512, Scale::Log).unwrap(),
            HyperparameterDomain::categorical("act", ["relu", "tanh", "gelu"]).unwrap(),
        ])
        .unwrap();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50).map(|_| space.sample(&mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50).map(|_| space.sample(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }
}
