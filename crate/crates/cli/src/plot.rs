use anyhow::Result;
use serde::{Deserialize, Serialize};

use extremal_core::coefficients::chi_matrix;
use extremal_core::graphical::model_chi_matrix;

use crate::output::{num, opt, OutputDir};
use crate::pipeline::StageOutputs;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlotRecord {
    pub files: Vec<String>,
    /// Why a table was not written.
    pub notes: Vec<String>,
}

pub const CHI_CURVES: &str = "plot/chi_curves.csv";
pub const SCREE: &str = "plot/scree.csv";
pub const EIGENVECTORS_BY_LABEL: &str = "plot/eigenvectors_by_label.csv";
pub const CHI_SCATTER: &str = "plot/chi_scatter.csv";

/// Plot-ready tables from whatever stages produced output: χ curves
/// (`i, j, q, value, lo, hi`), the scree table (one row per component), the
/// eigenvectors keyed by variable label, and fitted against empirical `χ`
/// per pair at the censoring level. Tables whose stage did not run are
/// skipped with a note.
pub fn emit_plot_data(outputs: &StageOutputs, censor_quantile: Option<f64>, out: &mut OutputDir) -> Result<PlotRecord> {
    out.take_written();
    let mut notes = Vec::new();

    if outputs.chi_curves.is_empty() {
        notes.push(format!("{CHI_CURVES}: chi stage did not run"));
    } else {
        let rows = outputs.chi_curves.iter().flatten().map(|e| {
            vec![
                e.subset[0].to_string(),
                e.subset[1].to_string(),
                num(e.level),
                num(e.value),
                opt(e.ci_lower),
                opt(e.ci_upper),
            ]
        });
        out.csv(CHI_CURVES, &["i", "j", "q", "value", "lo", "hi"], rows)?;
    }

    match (&outputs.epca, &outputs.sample) {
        (Some(pca), Some(sample)) => {
            let explained = pca.explained();
            let mut cum = 0.0;
            let rows: Vec<Vec<String>> = (0..pca.d())
                .map(|c| {
                    cum += explained[c];
                    vec![(c + 1).to_string(), num(pca.eigenvalues[c]), num(explained[c]), num(cum)]
                })
                .collect();
            out.csv(SCREE, &["component", "eigenvalue", "explained", "cumulative"], rows)?;
            let d = pca.d();
            let names: Vec<String> = (1..=d).map(|c| format!("v{c}")).collect();
            let mut header = vec!["label"];
            header.extend(names.iter().map(String::as_str));
            let labels = sample.labels();
            let rows = (0..d).map(|i| std::iter::once(labels[i].clone()).chain((0..d).map(move |c| num(pca.eigenvectors[(i, c)]))));
            out.csv(EIGENVECTORS_BY_LABEL, &header, rows)?;
        }
        _ => {
            notes.push(format!("{SCREE}: epca stage did not run"));
            notes.push(format!("{EIGENVECTORS_BY_LABEL}: epca stage did not run"));
        }
    }

    match (outputs.fitted(), &outputs.sample, censor_quantile) {
        (Some(fitted), Some(sample), Some(q)) => {
            let emp = chi_matrix(sample, q)?;
            let fit = model_chi_matrix(fitted)?;
            let labels = sample.labels();
            let d = sample.d();
            let rows = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).map(|(i, j)| {
                vec![
                    i.to_string(),
                    j.to_string(),
                    labels[i].clone(),
                    labels[j].clone(),
                    num(q),
                    num(emp[(i, j)]),
                    num(fit[(i, j)]),
                ]
            });
            out.csv(CHI_SCATTER, &["i", "j", "label_i", "label_j", "q", "empirical", "fitted"], rows)?;
        }
        _ => notes.push(format!("{CHI_SCATTER}: fit_graph stage did not run")),
    }

    Ok(PlotRecord {
        files: out.take_written(),
        notes,
    })
}
