use anyhow::{bail, ensure, Context, Result};
use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use extremal_core::angular::{centers_to_faces, spherical_kmeans, AngularCloud, ClusterResult};
use extremal_core::coefficients::{chi_curve, chi_matrix, ChiEstimate};
use extremal_core::epca::{estimate_sigma, pca_loss, ExtremalPCA};
use extremal_core::faces::{apriori_faces, goix_faces, meyer_faces, simpson_faces, FaceSet};
use extremal_core::graphical::{
    chi_weights, fit_graph, greedy_block_search_from, mst_learn, ExtremalGraph, FittedModel, SearchOptions, SearchResult, SearchStep,
};
use extremal_core::ingest::{extract_exceedances, k_from_quantile, rank_transform, ExceedanceSet, Norm, ObservationMatrix, StandardizedSample};
use extremal_core::models::{simulate_hr_pareto, simulate_logistic, simulate_max_linear, simulate_max_linear_pareto, simulate_recursive_ml};

use crate::config::{FacesMethod, Level, ModelSpec, PipelineConfig, Stage};
use crate::output::{num, OutputDir};
use crate::plot::{emit_plot_data, PlotRecord};

/// Bumped on breaking changes to the manifest layout.
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Results of the stages that ran, for later stages and the plot tables.
#[derive(Debug, Default)]
pub struct StageOutputs {
    pub sample: Option<StandardizedSample>,
    pub exceedances: Option<ExceedanceSet>,
    pub chi_matrix: Option<DMatrix<f64>>,
    /// One curve per pair `i < j`, in lexicographic order.
    pub chi_curves: Vec<Vec<ChiEstimate>>,
    pub cluster: Option<(ClusterResult, FaceSet)>,
    pub epca: Option<ExtremalPCA>,
    pub faces: Option<FaceSet>,
    pub tree: Option<ExtremalGraph>,
    pub search: Option<SearchResult>,
    pub simulated: Option<ObservationMatrix>,
}

impl StageOutputs {
    pub fn fitted(&self) -> Option<&FittedModel> {
        self.search.as_ref().map(|s| s.best_model())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: Status,
    pub artifacts: Vec<String>,
    pub summary: serde_json::Value,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub n: usize,
    pub d: usize,
    pub labels: Vec<String>,
}

/// Values resolved from the configuration once the data is known.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Derived {
    pub k: Option<usize>,
    pub censor_quantile: Option<f64>,
    pub censor_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub chi_bootstrap: u64,
    pub clustering: u64,
    pub simulation: u64,
    pub clique_fit: u64,
}

/// Built-in tuning constants that affect numeric outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixed {
    pub kmeans_max_iterations: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub fit_max_iterations: usize,
    pub fit_rel_tol: f64,
    pub chi_band_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// A stage name, or `config` when validation failed.
    pub stage: String,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub config: PipelineConfig,
    pub input: Option<InputRecord>,
    pub derived: Derived,
    pub seeds: Seeds,
    pub fixed: Fixed,
    pub stages: Vec<StageRecord>,
    pub plot_data: PlotRecord,
    pub failure: Option<Failure>,
}

impl Manifest {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: OutputDir,
    outputs: StageOutputs,
    input: Option<InputRecord>,
    derived: Derived,
}

impl Runner<'_> {
    fn sample(&self) -> Result<&StandardizedSample> {
        self.outputs.sample.as_ref().context("no standardized sample")
    }

    fn k(&self) -> Result<usize> {
        self.derived.k.context("k is not resolved")
    }

    fn labels(&self) -> Result<Vec<String>> {
        Ok(self.sample()?.labels().to_vec())
    }

    fn run(&mut self, stage: Stage) -> Result<serde_json::Value> {
        match stage {
            Stage::Standardize => self.standardize(),
            Stage::Chi => self.chi(),
            Stage::Cluster => self.cluster(),
            Stage::Epca => self.epca(),
            Stage::Faces => self.faces(),
            Stage::LearnTree => self.learn_tree(),
            Stage::FitGraph => self.fit_graph(),
            Stage::Simulate => self.simulate(),
        }
    }

    fn standardize(&mut self) -> Result<serde_json::Value> {
        let path = self.cfg.input.as_ref().context("no input path")?;
        let data = ObservationMatrix::from_csv_path(path).with_context(|| format!("loading {}", path.display()))?;
        let sample = rank_transform(&data);
        let n = sample.n();
        let (k, censor) = match self.cfg.exceedances {
            Level::K(k) => (k, 1.0 - k as f64 / n as f64),
            Level::Quantile(q) => (k_from_quantile(n, q)?, q),
        };
        let censor = self.cfg.graph.censor_quantile.unwrap_or(censor);
        let exc = extract_exceedances(&sample, self.cfg.norm, k)?;
        self.input = Some(InputRecord {
            path: path.display().to_string(),
            n,
            d: sample.d(),
            labels: sample.labels().to_vec(),
        });
        self.derived = Derived {
            k: Some(k),
            censor_quantile: Some(censor),
            censor_threshold: Some(1.0 / (1.0 - censor)),
        };
        self.out.json("standardized.json", &sample)?;
        self.out.json("exceedances.json", &exc)?;
        let summary = json!({"n": n, "d": sample.d(), "k": k, "threshold": exc.threshold});
        self.outputs.sample = Some(sample);
        self.outputs.exceedances = Some(exc);
        Ok(summary)
    }

    fn chi(&mut self) -> Result<serde_json::Value> {
        let c = &self.cfg.chi;
        let sample = self.sample()?;
        let d = sample.d();
        let m = chi_matrix(sample, c.quantile)?;
        let mut curves = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                // every pair sees the same bootstrap row draws
                curves.push(chi_curve(sample, i, j, &c.levels, c.n_boot, c.seed)?);
            }
        }
        let labels = self.labels()?;
        let mut header = vec!["label"];
        header.extend(labels.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = (0..d)
            .map(|i| std::iter::once(labels[i].clone()).chain((0..d).map(|j| num(m[(i, j)]))).collect())
            .collect();
        self.out.csv("chi_matrix.csv", &header, rows)?;
        let off = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)));
        let max = off.map(|(i, j)| m[(i, j)]).fold(0.0, f64::max);
        self.outputs.chi_matrix = Some(m);
        self.outputs.chi_curves = curves;
        Ok(json!({"level": c.quantile, "pairs": d * (d - 1) / 2, "max_offdiagonal": max}))
    }

    fn cloud(&self) -> Result<AngularCloud> {
        Ok(AngularCloud::from_exceedances(self.outputs.exceedances.as_ref().context("no exceedances")?)?)
    }

    fn cluster(&mut self) -> Result<serde_json::Value> {
        let c = &self.cfg.clustering;
        let cloud = self.cloud()?;
        let res = spherical_kmeans(&cloud, c.p, c.seed, c.restarts)?;
        let faces = centers_to_faces(&res, &cloud, c.cut)?;
        let labels = self.labels()?;
        let counts = res.counts();
        let masses = res.masses(&cloud);
        let mut header = vec!["cluster", "count", "mass"];
        header.extend(labels.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = (0..res.p())
            .map(|r| {
                let mut row = vec![r.to_string(), counts[r].to_string(), num(masses[r])];
                row.extend(res.centers.row(r).iter().map(|&v| num(v)));
                row
            })
            .collect();
        self.out.csv("cluster_centers.csv", &header, rows)?;
        let exc = self.outputs.exceedances.as_ref().expect("cloud came from it");
        let rows = res.assignment.iter().zip(&exc.indices).map(|(a, i)| vec![i.to_string(), a.to_string()]);
        self.out.csv("cluster_assignment.csv", &["row", "cluster"], rows)?;
        let list: Vec<serde_json::Value> = faces
            .faces
            .iter()
            .map(|f| json!({"indices": f.indices, "weight": f.mass, "count": f.count}))
            .collect();
        self.out.json("cluster_faces.json", &list)?;
        self.out.json("cluster.json", &res)?;
        let summary = json!({"p": res.p(), "counts": counts, "cost": res.cost, "faces": faces.index_sets()});
        self.outputs.cluster = Some((res, faces));
        Ok(summary)
    }

    fn epca(&mut self) -> Result<serde_json::Value> {
        let pca = estimate_sigma(&self.cloud()?);
        let d = pca.d();
        let p = self.cfg.epca.p;
        ensure!(p <= d, "epca p = {p} exceeds d = {d}");
        let loss = pca_loss(&pca, p)?;
        let labels = self.labels()?;
        let explained = pca.explained();
        let rows = (0..d).map(|c| vec![(c + 1).to_string(), num(pca.eigenvalues[c]), num(explained[c])]);
        self.out.csv("epca_eigenvalues.csv", &["component", "eigenvalue", "explained"], rows)?;
        let names: Vec<String> = (1..=d).map(|c| format!("v{c}")).collect();
        let mut header = vec!["label"];
        header.extend(names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = (0..d)
            .map(|i| std::iter::once(labels[i].clone()).chain((0..d).map(|c| num(pca.eigenvectors[(i, c)]))).collect())
            .collect();
        self.out.csv("epca_eigenvectors.csv", &header, rows)?;
        self.out.json("epca.json", &pca)?;
        let summary = json!({"p": p, "loss": loss, "explained": explained[..p].to_vec()});
        self.outputs.epca = Some(pca);
        Ok(summary)
    }

    fn faces(&mut self) -> Result<serde_json::Value> {
        let f = &self.cfg.faces;
        let k = self.k()?;
        let sample = self.sample()?;
        let set = match f.method {
            FacesMethod::Goix => goix_faces(&extract_exceedances(sample, Norm::Linf, k)?, f.epsilon, f.u)?,
            FacesMethod::Meyer => meyer_faces(&extract_exceedances(sample, Norm::L1, k)?, f.u)?,
            FacesMethod::Simpson => simpson_faces(sample, f.delta, k, f.u, f.rv_tol)?,
            FacesMethod::Apriori => apriori_faces(sample, k, f.criterion, f.cap)?,
        };
        let labels = self.labels()?;
        let maximal = set.maximal();
        let named: Vec<Vec<&str>> = maximal.iter().map(|s| s.iter().map(|&i| labels[i].as_str()).collect()).collect();
        self.out.json("faces.json", &json!({"k": k, "face_set": set, "maximal": maximal, "maximal_labels": named}))?;
        let summary = json!({"method": f.method, "faces": set.len(), "maximal": maximal});
        self.outputs.faces = Some(set);
        Ok(summary)
    }

    fn censor(&self) -> Result<(f64, f64)> {
        Ok((
            self.derived.censor_quantile.context("censoring level is not resolved")?,
            self.derived.censor_threshold.context("censoring level is not resolved")?,
        ))
    }

    fn learn_tree(&mut self) -> Result<serde_json::Value> {
        let (q, _) = self.censor()?;
        let sample = self.sample()?;
        let w = chi_weights(sample, q)?;
        let tree = mst_learn(&w)?;
        let labels = self.labels()?;
        let rows: Vec<Vec<String>> = tree
            .edges()
            .iter()
            .map(|&(i, j)| {
                let w = w[(i, j)];
                vec![i.to_string(), j.to_string(), labels[i].clone(), labels[j].clone(), num((-w).exp()), num(w)]
            })
            .collect();
        self.out.csv("tree_edges.csv", &["i", "j", "label_i", "label_j", "chi", "weight"], rows)?;
        self.out.json("tree.json", &tree)?;
        let summary = json!({"level": q, "edges": tree.edges()});
        self.outputs.tree = Some(tree);
        Ok(summary)
    }

    fn fit_graph(&mut self) -> Result<serde_json::Value> {
        let (q, threshold) = self.censor()?;
        let g = &self.cfg.graph;
        let options = SearchOptions {
            max_clique: g.max_clique,
            score: g.score,
        };
        let sample = self.sample()?;
        let result = match &g.graph {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let graph: ExtremalGraph = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                if graph.d() != sample.d() {
                    bail!("graph has d = {} but the data has d = {}", graph.d(), sample.d());
                }
                let model = fit_graph(sample.pareto(), threshold, &graph)?;
                SearchResult {
                    path: vec![SearchStep {
                        added: None,
                        model,
                        candidates: 0,
                    }],
                    best: 0,
                    options,
                }
            }
            None => {
                let start = match &self.outputs.tree {
                    Some(t) => t.clone(),
                    None => mst_learn(&chi_weights(sample, q)?)?,
                };
                greedy_block_search_from(sample.pareto(), threshold, start, options)?
            }
        };
        let rows: Vec<Vec<String>> = result
            .path
            .iter()
            .enumerate()
            .map(|(s, step)| {
                let (i, j) = step.added.map(|(i, j)| (i.to_string(), j.to_string())).unwrap_or_default();
                let m = &step.model;
                vec![
                    s.to_string(),
                    i,
                    j,
                    m.graph.edges().len().to_string(),
                    m.n_params.to_string(),
                    num(m.loglik),
                    num(m.aic),
                    num(m.bic),
                    step.candidates.to_string(),
                ]
            })
            .collect();
        self.out.csv(
            "aic_path.csv",
            &["step", "added_i", "added_j", "edges", "n_params", "loglik", "aic", "bic", "candidates"],
            rows,
        )?;
        let best = result.best_model();
        self.out.json("graph.json", &best.graph)?;
        self.out.json("fitted_model.json", best)?;
        self.out.json("search.json", &result)?;
        let summary = json!({
            "level": q,
            "threshold": threshold,
            "steps": result.path.len(),
            "best_step": result.best,
            "edges": best.graph.edges(),
            "aic": best.aic,
            "bic": best.bic,
        });
        info!("selected graph with {} edges", best.graph.edges().len());
        self.outputs.search = Some(result);
        Ok(summary)
    }

    fn simulate(&mut self) -> Result<serde_json::Value> {
        let s = &self.cfg.simulation;
        let data = match &s.model {
            ModelSpec::Fitted => {
                let fitted = self.outputs.fitted().context("the fit_graph stage produced no model")?;
                let x = simulate_hr_pareto(&fitted.model()?, s.n, s.seed)?;
                ObservationMatrix::new(x, self.labels()?)?
            }
            ModelSpec::Maxlinear(m) if s.limit => simulate_max_linear_pareto(m, s.n, s.seed)?,
            ModelSpec::Maxlinear(m) => simulate_max_linear(m, s.n, s.seed)?,
            ModelSpec::Recml(m) => simulate_recursive_ml(m, s.n, s.seed)?,
            ModelSpec::Logistic(m) => simulate_logistic(m, s.n, s.seed)?,
            ModelSpec::Hr(m) => ObservationMatrix::with_default_labels(simulate_hr_pareto(m, s.n, s.seed)?)?,
        };
        data.write_csv(self.out.writer("simulated.csv")?)?;
        let summary = json!({"n": data.n(), "d": data.d()});
        self.outputs.simulated = Some(data);
        Ok(summary)
    }
}

/// Runs the configured stages in order and writes their artifacts, the
/// plot tables and `manifest.json` under the output directory.
///
/// Stage failures do not produce an `Err`: they are recorded in the returned
/// manifest (see [`Manifest::succeeded`]). `Err` means the output directory
/// itself could not be written.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(Manifest, StageOutputs)> {
    let out = OutputDir::create(&config.output_dir)?;
    let mut r = Runner {
        cfg: config,
        out,
        outputs: StageOutputs::default(),
        input: None,
        derived: Derived::default(),
    };
    let mut records = Vec::new();
    let mut failure = None;
    if let Err(e) = config.validate() {
        failure = Some(Failure {
            stage: "config".into(),
            diagnostic: format!("{e:#}"),
        });
    }
    for stage in config.planned_stages() {
        if failure.is_some() {
            records.push(StageRecord {
                stage,
                status: Status::Skipped,
                artifacts: Vec::new(),
                summary: serde_json::Value::Null,
                diagnostic: None,
            });
            continue;
        }
        info!("stage {}", stage.name());
        let res = r.run(stage);
        let artifacts = r.out.take_written();
        match res {
            Ok(summary) => records.push(StageRecord {
                stage,
                status: Status::Ok,
                artifacts,
                summary,
                diagnostic: None,
            }),
            Err(e) => {
                let diagnostic = format!("{e:#}");
                log::error!("stage {} failed: {diagnostic}", stage.name());
                records.push(StageRecord {
                    stage,
                    status: Status::Failed,
                    artifacts,
                    summary: serde_json::Value::Null,
                    diagnostic: Some(diagnostic.clone()),
                });
                failure = Some(Failure {
                    stage: stage.name().into(),
                    diagnostic,
                });
            }
        }
    }
    let plot_data = emit_plot_data(&r.outputs, r.derived.censor_quantile, &mut r.out)?;
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: extremal_core::VERSION.into(),
        config: config.clone(),
        input: r.input,
        derived: r.derived,
        seeds: Seeds {
            chi_bootstrap: config.chi.seed,
            clustering: config.clustering.seed,
            simulation: config.simulation.seed,
            clique_fit: extremal_core::graphical::FIT_SEED,
        },
        fixed: Fixed {
            kmeans_max_iterations: extremal_core::angular::MAX_ITERATIONS,
            gamma_min: extremal_core::graphical::GAMMA_MIN,
            gamma_max: extremal_core::graphical::GAMMA_MAX,
            fit_max_iterations: extremal_core::graphical::FIT_MAX_ITERATIONS,
            fit_rel_tol: extremal_core::graphical::FIT_REL_TOL,
            chi_band_level: 0.95,
        },
        stages: records,
        plot_data,
        failure,
    };
    r.out.json(MANIFEST_FILE, &manifest)?;
    Ok((manifest, r.outputs))
}
