use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbVariant {
    /// Bernoulli for binary data, multinomial for frequency data.
    Auto,
    Bernoulli,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub alpha: f64,
    pub variant: NbVariant,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams {
            alpha: 1.0,
            variant: NbVariant::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Scale each feature vector to unit L2 norm before training and scoring.
    pub normalize: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 10,
            seed: 0,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (features as f64).sqrt().round() as usize,
            MaxFeatures::Log2 => (features as f64).log2().round() as usize,
            MaxFeatures::All => features,
            MaxFeatures::Count(c) => c,
        };
        k.clamp(1, features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_features: MaxFeatures,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    NaiveBayes(NbParams),
    LinearSvm(SvmParams),
    RandomForest(ForestParams),
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierSpec::NaiveBayes(p) if !(p.alpha > 0.0) => {
                Err(Error::InvalidSpec(format!("alpha must be > 0, got {}", p.alpha)))
            }
            ClassifierSpec::LinearSvm(p) if !(p.lambda > 0.0) => {
                Err(Error::InvalidSpec(format!("lambda must be > 0, got {}", p.lambda)))
            }
            ClassifierSpec::LinearSvm(p) if p.epochs == 0 => Err(Error::InvalidSpec("epochs must be >= 1".into())),
            ClassifierSpec::RandomForest(p) if p.trees == 0 => Err(Error::InvalidSpec("trees must be >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Short name used in report file names and tables.
    pub fn short_name(&self) -> &'static str {
        match self {
            ClassifierSpec::NaiveBayes(_) => "nb",
            ClassifierSpec::LinearSvm(_) => "svm",
            ClassifierSpec::RandomForest(_) => "rf",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ClassifierSpec::NaiveBayes(_) => None,
            ClassifierSpec::LinearSvm(p) => Some(p.seed),
            ClassifierSpec::RandomForest(p) => Some(p.seed),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ClassifierSpec::NaiveBayes(_) => {}
            ClassifierSpec::LinearSvm(p) => p.seed = seed,
            ClassifierSpec::RandomForest(p) => p.seed = seed,
        }
    }

    /// Parses like [`FromStr`], but uses `seed` unless the text sets one.
    pub fn parse_with_seed(s: &str, seed: u64) -> Result<Self> {
        let mut spec: ClassifierSpec = s.parse()?;
        let explicit = s
            .split_once(':')
            .is_some_and(|(_, opts)| opts.split(',').any(|kv| kv.trim().starts_with("seed=")));
        if !explicit {
            spec.set_seed(seed);
        }
        Ok(spec)
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidSpec(format!("bad value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidSpec(format!("bad value `{v}` for `{key}`"))),
    }
}

/// `nb[:alpha=1,variant=auto]`, `svm[:lambda=1e-4,epochs=10,seed=0,normalize=true]`,
/// `rf[:trees=100,max_features=sqrt,max_depth=0,min_split=2,bootstrap=true,seed=0]`.
/// `max_depth=0` means unlimited.
impl FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, opts) = s.split_once(':').unwrap_or((s, ""));
        let pairs = opts
            .split(',')
            .map(str::trim)
            .filter(|kv| !kv.is_empty())
            .map(|kv| {
                kv.split_once('=')
                    .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got `{kv}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let unknown = |k: &str| Error::InvalidSpec(format!("unknown option `{k}` for `{kind}`"));
        let spec = match kind.trim() {
            "nb" | "naive_bayes" => {
                let mut p = NbParams::default();
                for (k, v) in pairs {
                    match k {
                        "alpha" => p.alpha = parse_num(k, v)?,
                        "variant" => {
                            p.variant = match v {
                                "auto" => NbVariant::Auto,
                                "bernoulli" => NbVariant::Bernoulli,
                                "multinomial" => NbVariant::Multinomial,
                                _ => return Err(Error::InvalidSpec(format!("unknown nb variant `{v}`"))),
                            }
                        }
                        _ => return Err(unknown(k)),
                    }
                }
                ClassifierSpec::NaiveBayes(p)
            }
            "svm" | "linear_svm" => {
                let mut p = SvmParams::default();
                for (k, v) in pairs {
                    match k {
                        "lambda" => p.lambda = parse_num(k, v)?,
                        "epochs" => p.epochs = parse_num(k, v)?,
                        "seed" => p.seed = parse_num(k, v)?,
                        "normalize" => p.normalize = parse_bool(k, v)?,
                        _ => return Err(unknown(k)),
                    }
                }
                ClassifierSpec::LinearSvm(p)
            }
            "rf" | "random_forest" => {
                let mut p = ForestParams::default();
                for (k, v) in pairs {
                    match k {
                        "trees" => p.trees = parse_num(k, v)?,
                        "max_depth" | "depth" => {
                            let d: usize = parse_num(k, v)?;
                            p.max_depth = (d > 0).then_some(d);
                        }
                        "min_split" | "min_samples_split" => p.min_samples_split = parse_num(k, v)?,
                        "bootstrap" => p.bootstrap = parse_bool(k, v)?,
                        "seed" => p.seed = parse_num(k, v)?,
                        "max_features" | "mtry" => {
                            p.max_features = match v {
                                "sqrt" => MaxFeatures::Sqrt,
                                "log2" => MaxFeatures::Log2,
                                "all" => MaxFeatures::All,
                                n => MaxFeatures::Count(parse_num(k, n)?),
                            }
                        }
                        _ => return Err(unknown(k)),
                    }
                }
                ClassifierSpec::RandomForest(p)
            }
            other => return Err(Error::InvalidSpec(format!("unknown classifier `{other}` (nb | svm | rf)"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierSpec::NaiveBayes(p) => {
                let variant = match p.variant {
                    NbVariant::Auto => "auto",
                    NbVariant::Bernoulli => "bernoulli",
                    NbVariant::Multinomial => "multinomial",
                };
                write!(f, "nb:alpha={},variant={variant}", p.alpha)
            }
            ClassifierSpec::LinearSvm(p) => write!(
                f,
                "svm:lambda={},epochs={},seed={},normalize={}",
                p.lambda, p.epochs, p.seed, p.normalize
            ),
            ClassifierSpec::RandomForest(p) => {
                let mf = match p.max_features {
                    MaxFeatures::Sqrt => "sqrt".to_string(),
                    MaxFeatures::Log2 => "log2".to_string(),
                    MaxFeatures::All => "all".to_string(),
                    MaxFeatures::Count(c) => c.to_string(),
                };
                write!(
                    f,
                    "rf:trees={},max_features={mf},max_depth={},min_split={},bootstrap={},seed={}",
                    p.trees,
                    p.max_depth.unwrap_or(0),
                    p.min_samples_split,
                    p.bootstrap,
                    p.seed
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let nb: ClassifierSpec = "nb".parse().unwrap();
        assert_eq!(nb, ClassifierSpec::NaiveBayes(NbParams::default()));
        let svm: ClassifierSpec = "svm".parse().unwrap();
        assert_eq!(svm, ClassifierSpec::LinearSvm(SvmParams { lambda: 1e-4, epochs: 10, seed: 0, normalize: true }));
        match "rf".parse::<ClassifierSpec>().unwrap() {
            ClassifierSpec::RandomForest(p) => {
                assert_eq!(p.trees, 100);
                assert_eq!(p.max_features, MaxFeatures::Sqrt);
                assert_eq!(p.max_depth, None);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["nb:alpha=0.5,variant=bernoulli", "svm:lambda=0.01,epochs=3,seed=7,normalize=false", "rf:trees=5,max_features=3,max_depth=4,min_split=2,bootstrap=false,seed=9"] {
            let spec: ClassifierSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            assert_eq!(spec.to_string().parse::<ClassifierSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!("nb:alpha=0".parse::<ClassifierSpec>().is_err());
        assert!("svm:lambda=-1".parse::<ClassifierSpec>().is_err());
        assert!("rf:trees=0".parse::<ClassifierSpec>().is_err());
        assert!("part".parse::<ClassifierSpec>().is_err());
        assert!("rf:color=red".parse::<ClassifierSpec>().is_err());
    }

    #[test]
    fn default_seed_applies_unless_explicit() {
        assert_eq!(ClassifierSpec::parse_with_seed("svm", 42).unwrap().seed(), Some(42));
        assert_eq!(ClassifierSpec::parse_with_seed("rf:seed=3", 42).unwrap().seed(), Some(3));
    }

    #[test]
    fn resolve_max_features() {
        assert_eq!(MaxFeatures::Sqrt.resolve(100), 10);
        assert_eq!(MaxFeatures::Sqrt.resolve(0), 1);
        assert_eq!(MaxFeatures::Count(50).resolve(10), 10);
    }
}
