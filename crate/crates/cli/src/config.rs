use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use extremal_core::faces::{AprioriCriterion, DEFAULT_FRONTIER_CAP};
use extremal_core::graphical::{Score, SearchOptions};
use extremal_core::ingest::Norm;
use extremal_core::models::{HuslerReissModel, LogisticModel, MaxLinearModel, RecursiveMLModel};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Standardize,
    Chi,
    Cluster,
    Epca,
    Faces,
    LearnTree,
    FitGraph,
    Simulate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Standardize,
        Stage::Chi,
        Stage::Cluster,
        Stage::Epca,
        Stage::Faces,
        Stage::LearnTree,
        Stage::FitGraph,
        Stage::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Standardize => "standardize",
            Stage::Chi => "chi",
            Stage::Cluster => "cluster",
            Stage::Epca => "epca",
            Stage::Faces => "faces",
            Stage::LearnTree => "learn_tree",
            Stage::FitGraph => "fit_graph",
            Stage::Simulate => "simulate",
        }
    }
}

/// How many radial exceedances to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    K(usize),
    /// Empirical radial quantile; `k = floor((1 - q) n)`.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChiConfig {
    /// Level of the pairwise matrix.
    pub quantile: f64,
    /// Levels of the χ curves, strictly increasing.
    pub levels: Vec<f64>,
    /// Bootstrap replicates for the curve bands; 0 disables them.
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for ChiConfig {
    fn default() -> Self {
        ChiConfig {
            quantile: 0.9,
            levels: vec![0.8, 0.82, 0.84, 0.86, 0.88, 0.9, 0.92, 0.94, 0.96, 0.98],
            n_boot: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub p: usize,
    pub cut: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            p: 10,
            cut: extremal_core::angular::DEFAULT_CUT,
            seed: 1,
            restarts: extremal_core::angular::DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpcaConfig {
    /// Components kept for the eigenvector-by-label table and the loss.
    pub p: usize,
}

impl Default for EpcaConfig {
    fn default() -> Self {
        EpcaConfig { p: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FacesMethod {
    Goix,
    Simpson,
    Meyer,
    Apriori,
}

/// Goix exceedances are always taken in the sup norm and Meyer's in the l1
/// norm, whatever the pipeline norm; both use the pipeline's `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacesConfig {
    pub method: FacesMethod,
    pub epsilon: f64,
    /// Mass threshold.
    pub u: f64,
    pub delta: f64,
    /// Accepted distance of the Simpson tail index from one.
    pub rv_tol: f64,
    pub criterion: AprioriCriterion,
    pub cap: usize,
}

impl Default for FacesConfig {
    fn default() -> Self {
        FacesConfig {
            method: FacesMethod::Meyer,
            epsilon: 0.1,
            u: 0.1,
            delta: 0.5,
            rv_tol: 0.15,
            criterion: AprioriCriterion::EtaTest { z: AprioriCriterion::DEFAULT_Z },
            cap: DEFAULT_FRONTIER_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub max_clique: usize,
    /// Level of the χ weights and of the censoring threshold `1/(1-q)`;
    /// defaults to the exceedance level.
    pub censor_quantile: Option<f64>,
    pub score: Score,
    /// Fit this graph (JSON edge list) instead of searching.
    pub graph: Option<PathBuf>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        let o = SearchOptions::default();
        GraphConfig {
            max_clique: o.max_clique,
            censor_quantile: None,
            score: o.score,
            graph: None,
        }
    }
}

/// Model to draw from. The parameter fields follow the model types:
/// `A` as nested rows, `diag` plus `edges` `{from, to, beta}`, `d` plus
/// `theta`, and `gamma` as a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    /// The Hüsler–Reiss model selected by the graph stage.
    Fitted,
    Maxlinear(MaxLinearModel),
    Recml(RecursiveMLModel),
    Logistic(LogisticModel),
    Hr(HuslerReissModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub seed: u64,
    /// Draw max-linear data from the limiting Pareto distribution instead
    /// of the max-stable one.
    pub limit: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            model: ModelSpec::Fitted,
            n: 1000,
            seed: 1,
            limit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// CSV with a header row of labels.
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub norm: Norm,
    pub exceedances: Level,
    pub chi: ChiConfig,
    pub clustering: ClusteringConfig,
    pub epca: EpcaConfig,
    pub faces: FacesConfig,
    pub graph: GraphConfig,
    pub simulation: SimulationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            output_dir: PathBuf::from("extremal-out"),
            stages: Stage::ALL.to_vec(),
            norm: Norm::L1,
            exceedances: Level::Quantile(0.9),
            chi: ChiConfig::default(),
            clustering: ClusteringConfig::default(),
            epca: EpcaConfig::default(),
            faces: FacesConfig::default(),
            graph: GraphConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    ensure!(v > 0.0 && v < 1.0, "{name} must lie in (0, 1), got {v}");
    Ok(())
}

impl PipelineConfig {
    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Stages to run, deduplicated and in execution order; stages that read
    /// the data pull in `standardize`.
    pub fn planned_stages(&self) -> Vec<Stage> {
        let mut s = self.stages.clone();
        if s.iter().any(|&x| x != Stage::Simulate) {
            s.push(Stage::Standardize);
        }
        s.sort();
        s.dedup();
        s
    }

    fn needs_input(&self) -> bool {
        self.planned_stages().iter().any(|&s| s != Stage::Simulate)
    }

    /// Range checks that do not need the data; `k < n`, `p <= d` and the like
    /// are checked when the stage runs.
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.stages.is_empty(), "no stages selected");
        if self.needs_input() {
            ensure!(self.input.is_some(), "an input CSV is required for stages other than simulate");
        }
        match self.exceedances {
            Level::K(k) => ensure!(k >= 1, "k must be at least 1"),
            Level::Quantile(q) => unit_open("exceedance quantile", q)?,
        }

        let c = &self.chi;
        unit_open("chi quantile", c.quantile)?;
        ensure!(!c.levels.is_empty(), "chi levels must not be empty");
        for &q in &c.levels {
            unit_open("chi level", q)?;
        }
        ensure!(c.levels.windows(2).all(|w| w[0] < w[1]), "chi levels must be strictly increasing");

        let k = &self.clustering;
        ensure!(k.p >= 1, "clustering p must be at least 1");
        unit_open("clustering cut", k.cut)?;
        ensure!(k.restarts >= 1, "clustering restarts must be at least 1");

        ensure!(self.epca.p >= 1, "epca p must be at least 1");

        let f = &self.faces;
        unit_open("faces epsilon", f.epsilon)?;
        ensure!(f.u > 0.0 && f.u.is_finite(), "faces u must be positive, got {}", f.u);
        ensure!((0.0..1.0).contains(&f.delta), "faces delta must lie in [0, 1), got {}", f.delta);
        ensure!(f.rv_tol > 0.0, "faces rv_tol must be positive");
        ensure!(f.cap >= 1, "faces cap must be at least 1");
        match f.criterion {
            AprioriCriterion::CondChi { threshold } => ensure!(threshold >= 0.0, "cond_chi threshold must be nonnegative"),
            AprioriCriterion::EtaTest { z } => ensure!(z.is_finite(), "eta_test z must be finite"),
        }

        let g = &self.graph;
        ensure!(g.max_clique == 2 || g.max_clique == 3, "max_clique must be 2 or 3, got {}", g.max_clique);
        if let Some(q) = g.censor_quantile {
            unit_open("censor quantile", q)?;
        }

        let s = &self.simulation;
        ensure!(s.n >= 1, "simulation n must be at least 1");
        if self.stages.contains(&Stage::Simulate) && s.model == ModelSpec::Fitted && !self.stages.contains(&Stage::FitGraph) {
            bail!("simulating the fitted model needs the fit_graph stage");
        }
        Ok(())
    }
}

/// Recursively overlays `top` on `base`: objects merge key by key, anything
/// else in `top` replaces the base value.
pub fn merge_json(base: &mut serde_json::Value, top: serde_json::Value) {
    match (base, top) {
        (serde_json::Value::Object(b), serde_json::Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    // tagged values are replaced whole so stale fields of
                    // another variant do not survive
                    Some(slot) if slot.is_object() && v.is_object() && !is_tagged(&v) => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn is_tagged(v: &serde_json::Value) -> bool {
    ["model", "criterion"].iter().any(|t| v.get(t).is_some_and(|c| c.is_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let mut c = PipelineConfig {
            input: Some("data.csv".into()),
            ..Default::default()
        };
        c.validate().unwrap();
        let json = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), c);

        c.simulation.model = ModelSpec::Logistic(LogisticModel::new(3, 0.5).unwrap());
        c.faces.criterion = AprioriCriterion::CondChi { threshold: 0.3 };
        c.exceedances = Level::K(202);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), c);
    }

    #[test]
    fn model_params_files() {
        let m: ModelSpec = serde_json::from_str(r#"{"model": "maxlinear", "A": [[1, 0], [0, 1]]}"#).unwrap();
        assert!(matches!(m, ModelSpec::Maxlinear(_)));
        let m: ModelSpec =
            serde_json::from_str(r#"{"model": "recml", "diag": [1, 1], "edges": [{"from": 0, "to": 1, "beta": 0.5}]}"#).unwrap();
        assert!(matches!(m, ModelSpec::Recml(_)));
        let m: ModelSpec = serde_json::from_str(r#"{"model": "hr", "gamma": [[0, 1], [1, 0]]}"#).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&serde_json::to_string(&m).unwrap()).unwrap(), m);
        // invalid parameters are rejected by the model constructors
        assert!(serde_json::from_str::<ModelSpec>(r#"{"model": "logistic", "d": 2, "theta": 1.5}"#).is_err());
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let ok = PipelineConfig {
            input: Some("x.csv".into()),
            ..Default::default()
        };
        let bad: Vec<Box<dyn Fn(&mut PipelineConfig)>> = vec![
            Box::new(|c| c.exceedances = Level::Quantile(1.0)),
            Box::new(|c| c.exceedances = Level::K(0)),
            Box::new(|c| c.chi.levels = vec![0.9, 0.8]),
            Box::new(|c| c.clustering.cut = 0.0),
            Box::new(|c| c.clustering.restarts = 0),
            Box::new(|c| c.faces.epsilon = 1.0),
            Box::new(|c| c.faces.delta = 1.0),
            Box::new(|c| c.graph.max_clique = 4),
            Box::new(|c| c.input = None),
            Box::new(|c| c.stages = vec![Stage::Simulate]),
            Box::new(|c| c.stages.clear()),
        ];
        for (i, f) in bad.iter().enumerate() {
            let mut c = ok.clone();
            f(&mut c);
            assert!(c.validate().is_err(), "case {i}");
        }
        let sim = PipelineConfig {
            stages: vec![Stage::Simulate],
            simulation: SimulationConfig {
                model: ModelSpec::Hr(HuslerReissModel::bivariate(1.0).unwrap()),
                ..Default::default()
            },
            ..Default::default()
        };
        sim.validate().unwrap();
        assert_eq!(sim.planned_stages(), vec![Stage::Simulate]);
        assert_eq!(ok.planned_stages(), Stage::ALL.to_vec());
    }

    #[test]
    fn merge_overrides_nested_fields() {
        let mut base = serde_json::to_value(PipelineConfig::default()).unwrap();
        merge_json(
            &mut base,
            serde_json::json!({
                "clustering": {"p": 4},
                "faces": {"criterion": {"criterion": "cond_chi", "threshold": 0.2}},
                "simulation": {"n": 7},
            }),
        );
        let c: PipelineConfig = serde_json::from_value(base).unwrap();
        assert_eq!(c.simulation.n, 7);
        assert_eq!(c.simulation.model, ModelSpec::Fitted);
        assert_eq!(c.clustering.p, 4);
        assert_eq!(c.clustering.restarts, ClusteringConfig::default().restarts);
        assert_eq!(c.faces.criterion, AprioriCriterion::CondChi { threshold: 0.2 });
    }

    proptest! {
        #[test]
        fn config_round_trips(
            q in 0.01f64..0.99,
            k in 1usize..5000,
            use_k: bool,
            p in 1usize..20,
            cut in 0.001f64..0.5,
            seed: u64,
            eps in 0.01f64..0.99,
            u in 0.001f64..1.0,
            delta in 0.0f64..0.99,
            censor in proptest::option::of(0.5f64..0.99),
            n in 1usize..100_000,
        ) {
            let c = PipelineConfig {
                input: Some("in.csv".into()),
                exceedances: if use_k { Level::K(k) } else { Level::Quantile(q) },
                clustering: ClusteringConfig { p, cut, seed, restarts: 3 },
                faces: FacesConfig { epsilon: eps, u, delta, ..Default::default() },
                graph: GraphConfig { censor_quantile: censor, ..Default::default() },
                simulation: SimulationConfig { n, seed: seed ^ 1, ..Default::default() },
                ..Default::default()
            };
            prop_assert!(c.validate().is_ok());
            let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
