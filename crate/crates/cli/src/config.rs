//! Experiment configuration: a TOML file that fully determines a run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clanwalk_core::kernel::{validate_kernel, Kernel, KernelSpec};
use clanwalk_core::lossnet::PatternSpec;
use clanwalk_core::oracle::Horizon;
use clanwalk_core::site::{Site, MAX_DIM};
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// A configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// A number or the string "auto".
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Auto<T> {
    Value(T),
    Word(AutoWord),
}

impl<T> Default for Auto<T> {
    fn default() -> Self {
        Auto::Word(AutoWord::Auto)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum AutoWord {
    Auto,
}

impl<T: Copy> Auto<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Auto::Value(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Jump {
    offset: String,
    p: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelBlock {
    jump: Vec<Jump>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
enum PatternBlock {
    Threshold { level: u32 },
    Zero { sites: Vec<String> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonBlock {
    grid: Vec<f64>,
    #[serde(default)]
    infinite: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlphaEntry {
    site: String,
    ratio: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeBlock {
    #[serde(default)]
    kind: ModeKind,
    #[serde(default)]
    alpha: Vec<AlphaEntry>,
    /// α_i/ρ at sites not listed in `alpha`.
    default_ratio: Option<f64>,
    hook: Option<String>,
    floor: Option<f64>,
    strength: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ModeKind {
    #[default]
    NuRho,
    NuAlpha,
    Custom,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClanBlock {
    #[serde(default = "default_generations")]
    generations: usize,
    #[serde(default = "default_width_grid")]
    grid: Vec<f64>,
}

impl Default for ClanBlock {
    fn default() -> Self {
        ClanBlock {
            generations: default_generations(),
            grid: default_width_grid(),
        }
    }
}

fn default_generations() -> usize {
    5
}

fn default_width_grid() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}

fn default_epsilon() -> f64 {
    1e-4
}

fn default_sigma_samples() -> usize {
    100_000
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    replicas: usize,
    rho: f64,
    #[serde(default)]
    beta1: Auto<f64>,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default)]
    box_radius: Auto<i32>,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default = "default_sigma_samples")]
    sigma_samples: usize,
    kernel: KernelBlock,
    pattern: PatternBlock,
    horizons: HorizonBlock,
    #[serde(default)]
    mode: ModeBlock,
    #[serde(default)]
    clans: ClanBlock,
}

/// Initial law of μ-mode experiments.
#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    NuRho,
    /// Ratios α_i/ρ by site, with a default for unlisted sites.
    NuAlpha {
        ratios: BTreeMap<Site, f64>,
        default_ratio: f64,
    },
    SoftExclusion {
        floor: f64,
        strength: f64,
    },
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kernel: Kernel,
    pub rho: f64,
    pub beta1: Option<f64>,
    pub pattern: PatternSpec,
    /// Finite horizons, increasing.
    pub grid: Vec<f64>,
    pub infinite: bool,
    pub replicas: usize,
    pub seed: u64,
    pub box_radius: Option<i32>,
    pub epsilon: f64,
    pub output: PathBuf,
    pub sigma_samples: usize,
    pub mode: Mode,
    pub generations: usize,
    pub width_grid: Vec<f64>,
    /// SHA-256 of the config file bytes.
    pub hash: String,
}

fn parse_site(s: &str, dim: usize) -> anyhow::Result<Site> {
    let coords: Vec<i32> = s
        .split(',')
        .map(|c| c.trim().parse::<i32>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad(format!("site {s:?} is not a comma-separated integer list")))?;
    if coords.len() != dim {
        return Err(bad(format!(
            "site {s:?} has {} coordinates, kernel dimension is {dim}",
            coords.len()
        )));
    }
    let mut out = [0; MAX_DIM];
    out[..dim].copy_from_slice(&coords);
    Ok(out)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| bad("config is not UTF-8"))?;
        Self::parse(text, hex(&Sha256::digest(&bytes)))
    }

    pub fn parse(text: &str, hash: String) -> anyhow::Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let offsets: Vec<Vec<i32>> = raw
            .kernel
            .jump
            .iter()
            .map(|j| {
                j.offset
                    .split(',')
                    .map(|c| c.trim().parse::<i32>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()
            .map_err(|_| bad("kernel offsets must be comma-separated integers"))?;
        let dim = offsets
            .first()
            .map(Vec::len)
            .ok_or_else(|| bad("kernel has no jumps"))?;
        let kernel_spec = KernelSpec {
            dim,
            entries: offsets
                .into_iter()
                .zip(raw.kernel.jump.iter().map(|j| j.p))
                .collect(),
        };
        let kernel =
            validate_kernel(&kernel_spec).map_err(|r| bad(format!("kernel rejected: {r}")))?;

        if !(raw.rho >= 0.0 && raw.rho.is_finite()) {
            return Err(bad("rho must be finite and nonnegative"));
        }
        if raw.replicas == 0 {
            return Err(bad("replicas must be at least 1"));
        }
        if !(raw.epsilon > 0.0 && raw.epsilon < 1.0) {
            return Err(bad("epsilon must lie in (0, 1)"));
        }
        let g = &raw.horizons.grid;
        if g.is_empty()
            || g.iter().any(|t| !(t.is_finite() && *t >= 0.0))
            || g.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(bad(
                "horizon grid must be nonempty, finite, nonnegative and increasing",
            ));
        }
        if let Some(b) = raw.beta1.value() {
            if b.is_nan() || b <= 0.0 {
                return Err(bad("beta1 must be positive or \"auto\""));
            }
        }
        if let Some(r) = raw.box_radius.value() {
            if r < 0 {
                return Err(bad("box_radius must be nonnegative or \"auto\""));
            }
        }
        let pattern = match &raw.pattern {
            PatternBlock::Threshold { level } => PatternSpec::threshold(*level),
            PatternBlock::Zero { sites } => {
                let s: Vec<Site> = sites
                    .iter()
                    .map(|s| parse_site(s, dim))
                    .collect::<anyhow::Result<_>>()?;
                PatternSpec::zero_lambda(&s).map_err(|e| bad(e.to_string()))?
            }
        };
        let m = &raw.mode;
        let mode = match m.kind {
            ModeKind::NuRho => Mode::NuRho,
            ModeKind::NuAlpha => {
                let mut ratios = BTreeMap::new();
                for a in &m.alpha {
                    if !(a.ratio > 0.0 && a.ratio <= 1.0) {
                        return Err(bad(format!(
                            "alpha ratio {} at {} outside (0, 1]",
                            a.ratio, a.site
                        )));
                    }
                    ratios.insert(parse_site(&a.site, dim)?, a.ratio);
                }
                let default_ratio = m.default_ratio.unwrap_or(1.0);
                if !(default_ratio > 0.0 && default_ratio <= 1.0) {
                    return Err(bad("default_ratio outside (0, 1]"));
                }
                Mode::NuAlpha {
                    ratios,
                    default_ratio,
                }
            }
            ModeKind::Custom => match m.hook.as_deref() {
                Some("soft_exclusion") => {
                    let floor = m
                        .floor
                        .ok_or_else(|| bad("soft_exclusion needs mode.floor"))?;
                    let strength = m
                        .strength
                        .ok_or_else(|| bad("soft_exclusion needs mode.strength"))?;
                    if !(floor > 0.0 && floor <= 1.0 && strength >= 0.0) {
                        return Err(bad("soft_exclusion needs floor in (0, 1] and strength ≥ 0"));
                    }
                    Mode::SoftExclusion { floor, strength }
                }
                Some(other) => return Err(bad(format!("unknown rate hook {other:?}"))),
                None => return Err(bad("custom mode needs mode.hook")),
            },
        };
        Ok(ExperimentConfig {
            kernel,
            rho: raw.rho,
            beta1: raw.beta1.value(),
            pattern,
            grid: raw.horizons.grid,
            infinite: raw.horizons.infinite,
            replicas: raw.replicas,
            seed: raw.seed,
            box_radius: raw.box_radius.value(),
            epsilon: raw.epsilon,
            output: raw.output,
            sigma_samples: raw.sigma_samples,
            mode,
            generations: raw.clans.generations,
            width_grid: raw.clans.grid,
            hash,
        })
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// The finite horizons followed by ∞ when requested.
    pub fn horizons(&self) -> Vec<Horizon> {
        let mut h: Vec<Horizon> = self.grid.iter().map(|&t| Horizon::Finite(t)).collect();
        if self.infinite {
            h.push(Horizon::Infinite);
        }
        h
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 1
replicas = 10
rho = 0.1
[kernel]
jump = [{ offset = "1", p = 0.7 }, { offset = "-1", p = 0.3 }]
[pattern]
kind = "threshold"
level = 1
[horizons]
grid = [0.0, 1.0]
"#;

    #[test]
    fn parses_defaults() {
        let c = ExperimentConfig::parse(BASE, String::new()).unwrap();
        assert_eq!(c.dim(), 1);
        assert_eq!(c.beta1, None);
        assert_eq!(c.box_radius, None);
        assert_eq!(c.mode, Mode::NuRho);
        assert_eq!(
            c.horizons(),
            vec![Horizon::Finite(0.0), Horizon::Finite(1.0)]
        );
    }

    #[test]
    fn auto_and_numbers() {
        let text = format!("beta1 = \"auto\"\nbox_radius = 3\n{BASE}");
        let c = ExperimentConfig::parse(&text, String::new()).unwrap();
        assert_eq!((c.beta1, c.box_radius), (None, Some(3)));
        let text = format!("beta1 = 0.02\n{BASE}");
        assert_eq!(
            ExperimentConfig::parse(&text, String::new()).unwrap().beta1,
            Some(0.02)
        );
        let text = format!("beta1 = \"soon\"\n{BASE}");
        assert!(ExperimentConfig::parse(&text, String::new()).is_err());
    }

    #[test]
    fn rejects_bad_grids_and_kernels() {
        let text = BASE.replace("grid = [0.0, 1.0]", "grid = [1.0, 0.5]");
        assert!(ExperimentConfig::parse(&text, String::new()).is_err());
        let text = BASE.replace("p = 0.3", "p = 0.4");
        assert!(ExperimentConfig::parse(&text, String::new()).is_err());
        let text = BASE.replace("replicas = 10", "replicas = 0");
        assert!(ExperimentConfig::parse(&text, String::new()).is_err());
    }
}
