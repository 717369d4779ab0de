//! Experiment configuration: TOML by default, JSON when the file ends in
//! `.json`. Missing fields fall back to the single-puncture setup on the
//! standard torus.

use std::path::{Path, PathBuf};

use cloaklab::geometry::{Link, LinkComponent, ManifoldModel};
use cloaklab::helmholtz::{FourierMode, Source};
use cloaklab::mesh::RegionWindow;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Sweep,
    Spectrum,
    Capacity,
    Conductivity,
    Surgery,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Sweep => "sweep",
            Suite::Spectrum => "spectrum",
            Suite::Capacity => "capacity",
            Suite::Conductivity => "conductivity",
            Suite::Surgery => "surgery",
            Suite::All => "all",
        }
    }

    pub fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Conductivity, Suite::Surgery, Suite::Capacity, Suite::Spectrum, Suite::Sweep],
            s => vec![s],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    T2,
    T3,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    /// Punctures of the 2-torus.
    pub points: Option<Vec<Vec<f64>>>,
    /// Direction of the straight circles in the 3-torus.
    pub axis: Option<usize>,
    /// Transverse base points of the circles.
    pub base: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub wave: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    Zero,
    Fourier {
        modes: Vec<ModeConfig>,
    },
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum WindowConfig {
    Whole,
    Annulus {
        #[serde(default)]
        component: usize,
        a: f64,
        b: f64,
    },
    Box {
        lo: [f64; 2],
        hi: [f64; 2],
    },
}

fn one() -> f64 {
    1.0
}

fn default_k2() -> f64 {
    0.5
}

fn default_manifold() -> Manifold {
    Manifold::T2
}

fn default_suite() -> Suite {
    Suite::All
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_manifold")]
    pub manifold: Manifold,
    pub periods: Option<Vec<f64>>,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    pub mesh_h: Option<f64>,
    #[serde(default = "default_k2")]
    pub k2: f64,
    #[serde(default)]
    pub lambda_list: Vec<f64>,
    pub source: Option<SourceConfig>,
    pub window: Option<WindowConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_suite")]
    pub suite: Suite,
}

impl ExperimentConfig {
    pub fn from_str_with(text: &str, json: bool) -> Result<Self, CliError> {
        if json {
            serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::from_str_with(&text, json)
    }
}

/// A configuration that passed validation.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: ManifoldModel,
    pub link: Link,
    pub eps_list: Vec<f64>,
    pub h: f64,
    pub k2: f64,
    pub lambdas: Vec<f64>,
    pub source: Source,
    pub window: RegionWindow,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub suite: Suite,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn wrap(x: f64, p: f64) -> f64 {
    x.rem_euclid(p)
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        let dim = match cfg.manifold {
            Manifold::T2 => 2,
            Manifold::T3 => 3,
        };
        let model = match &cfg.periods {
            Some(p) => ManifoldModel::flat_torus(p),
            None => ManifoldModel::standard(dim),
        }
        .map_err(|e| invalid(e.to_string()))?;
        if model.dimension() != dim {
            return Err(invalid(format!("manifold {dim}-d needs {dim} periods")));
        }
        let p = model.periods().to_vec();
        let components = match cfg.manifold {
            Manifold::T2 => {
                if cfg.link.axis.is_some() || cfg.link.base.is_some() {
                    return Err(invalid("t2 links are given by points"));
                }
                let pts = cfg.link.points.clone().unwrap_or_else(|| vec![vec![p[0] / 2.0, p[1] / 2.0]]);
                pts.iter()
                    .map(|q| match q.as_slice() {
                        &[x, y] => Ok(LinkComponent::Point { position: [x, y] }),
                        _ => Err(invalid("t2 link points need 2 coordinates")),
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
            Manifold::T3 => {
                if cfg.link.points.is_some() {
                    return Err(invalid("t3 links are given by axis and base points"));
                }
                let axis = cfg.link.axis.unwrap_or(2);
                if axis > 2 {
                    return Err(invalid(format!("axis {axis} out of range")));
                }
                let (a, b) = cloaklab::geometry::transverse_axes(axis);
                let base = cfg.link.base.clone().unwrap_or_else(|| vec![[p[a] / 2.0, p[b] / 2.0]]);
                base.into_iter().map(|base| LinkComponent::Circle { axis, base }).collect()
            }
        };
        let link = Link::new(&model, components, cfg.r).map_err(|e| invalid(e.to_string()))?;
        let r_bound = link.radius_bound();

        let eps = &cfg.eps_list;
        if eps.is_empty() {
            return Err(invalid("eps_list is empty"));
        }
        if eps.iter().any(|&e| !(e > 0.0 && e < r_bound)) {
            return Err(invalid(format!("eps_list entries must lie in (0, R), R = {r_bound}")));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("eps_list must be strictly decreasing"));
        }
        let eps_min = eps[eps.len() - 1];
        let h = cfg.mesh_h.unwrap_or(eps_min / 4.0);
        if !(h > 0.0 && h <= eps_min / 4.0) {
            return Err(invalid(format!("mesh_h = {h} must lie in (0, min(eps_list) / 4 = {}]", eps_min / 4.0)));
        }
        if !cfg.k2.is_finite() || cfg.lambda_list.iter().any(|l| !l.is_finite()) {
            return Err(invalid("k2 and lambda_list must be finite"));
        }

        let anchor = link.point_at(0, 0.0, 0.0, 0.0);
        let source = match cfg.source.clone() {
            None => {
                let mut c = anchor.clone();
                c[0] = wrap(c[0] + 1.8 * r_bound, p[0]);
                Source::Bump {
                    center: c,
                    radius: 0.5 * r_bound,
                    amplitude: 1.0,
                }
            }
            Some(SourceConfig::Zero) => Source::Zero,
            Some(SourceConfig::Fourier { modes }) => Source::Fourier(
                modes
                    .into_iter()
                    .map(|m| FourierMode {
                        wave: m.wave,
                        cos_coeff: m.cos,
                        sin_coeff: m.sin,
                    })
                    .collect(),
            ),
            Some(SourceConfig::Bump { center, radius, amplitude }) => Source::Bump { center, radius, amplitude },
        };
        source.validate(&model).map_err(|e| invalid(e.to_string()))?;

        let window = match cfg.window.clone() {
            None if dim == 2 => RegionWindow::Box {
                lo: [wrap(anchor[0] + 1.2 * r_bound, p[0]), wrap(anchor[1] - 0.6 * r_bound, p[1])],
                hi: [
                    wrap(anchor[0] + 1.2 * r_bound, p[0]) + 1.2 * r_bound,
                    wrap(anchor[1] - 0.6 * r_bound, p[1]) + 1.2 * r_bound,
                ],
            },
            None | Some(WindowConfig::Whole) => RegionWindow::Whole,
            Some(WindowConfig::Annulus { component, a, b }) => RegionWindow::Annulus {
                component,
                inner: a,
                outer: b,
            },
            Some(WindowConfig::Box { lo, hi }) => RegionWindow::Box { lo, hi },
        };

        let suite = cfg.suite;
        let needs_problem = suite.members().contains(&Suite::Sweep);
        if needs_problem && dim == 2 {
            window.validate(&link).map_err(|e| invalid(e.to_string()))?;
            if window.distance_to_link(&link) < r_bound {
                return Err(invalid("window intersects T(R)"));
            }
            if let Some(d) = source.distance_to_link(&link) {
                if d < r_bound {
                    return Err(invalid("source support intersects T(R)"));
                }
            }
        }
        if dim == 3 && matches!(suite, Suite::Sweep | Suite::Spectrum) {
            return Err(invalid(format!("suite {} runs on t2 only", suite.name())));
        }
        if suite.members().contains(&Suite::Capacity) && eps[0] >= 0.5 * r_bound {
            return Err(invalid(format!("capacity needs eps_list below R / 2 = {}", 0.5 * r_bound)));
        }
        Ok(Self {
            model,
            link,
            eps_list: cfg.eps_list,
            h,
            k2: cfg.k2,
            lambdas: cfg.lambda_list,
            source,
            window,
            output_dir: cfg.output_dir,
            seed: cfg.seed,
            suite,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Experiment, CliError> {
        Experiment::new(ExperimentConfig::from_str_with(s, false)?)
    }

    #[test]
    fn defaults_fill_in() {
        let e = parse("eps_list = [0.2, 0.1]\nsuite = \"sweep\"").unwrap();
        assert_eq!(e.h, 0.025);
        assert_eq!(e.link.len(), 1);
        assert!(matches!(e.window, RegionWindow::Box { .. }));
        assert_eq!(e.k2, 0.5);
    }

    #[test]
    fn error_classes() {
        assert!(matches!(parse(""), Err(CliError::Validation(_))));
        assert!(matches!(parse("eps_list = [0.1]\nsuite = \"nope\""), Err(CliError::Parse(_))));
        assert!(matches!(parse("eps_list = [0.1]\nbogus = 1"), Err(CliError::Parse(_))));
        assert!(matches!(parse("eps_list = [0.1, 0.2]"), Err(CliError::Validation(_))));
        assert!(matches!(parse("eps_list = [0.1]\nmesh_h = 0.05"), Err(CliError::Validation(_))));
        assert!(matches!(parse("eps_list = [1.5]"), Err(CliError::Validation(_))));
        let near = "eps_list = [0.1]\nsuite = \"sweep\"\n[source]\ntype = \"bump\"\ncenter = [3.5, 3.1]\nradius = 0.1";
        assert!(matches!(parse(near), Err(CliError::Validation(_))));
    }

    #[test]
    fn three_torus_links() {
        let e = parse("manifold = \"t3\"\neps_list = [0.1]\nsuite = \"capacity\"\n[link]\naxis = 0\nbase = [[1.0, 2.0]]").unwrap();
        assert_eq!(e.model.dimension(), 3);
        assert!(parse("manifold = \"t3\"\neps_list = [0.1]\nsuite = \"sweep\"").is_err());
    }

    #[test]
    fn json_input() {
        let cfg = ExperimentConfig::from_str_with(r#"{"eps_list": [0.1], "suite": "surgery", "seed": 3}"#, true).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.suite, Suite::Surgery);
    }
}
