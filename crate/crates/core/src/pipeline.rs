//! Split, renormalize and mask a graph for training, and score a model on
//! the held-out parts.

use crate::graph::{make_split, GraphError, MedGraph, SplitPlan, SplitRatios, Subset, Task};
use crate::metrics::{
    baseline_column_mean, baseline_popularity, masked_mse, ranking_metrics, MetricError, MetricReport,
    RankingResult,
};
use crate::model::{MedGcnModel, ModelError, NodeFeatures};
use crate::tensor::Matrix;

/// A graph prepared for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    /// The input graph with lab ranges refit on training-visible edges.
    /// Held-out targets are read from here.
    pub full: MedGraph,
    /// `full` with held-out medication rows and lab edges removed. The
    /// model only ever sees this graph.
    pub view: MedGraph,
    pub plan_med: SplitPlan,
    pub plan_lab: SplitPlan,
    pub features: NodeFeatures,
}

/// Medication split under `seed`, lab-edge split under `seed + 1`.
pub fn prepare(graph: &MedGraph, ratios: SplitRatios, seed: u64) -> Result<Prepared, GraphError> {
    let plan_med = make_split(graph, Task::Medication, ratios, seed)?;
    let plan_lab = make_split(graph, Task::Imputation, ratios, seed.wrapping_add(1))?;
    Prepared::from_plans(graph, plan_med, plan_lab)
}

impl Prepared {
    pub fn from_plans(graph: &MedGraph, plan_med: SplitPlan, plan_lab: SplitPlan) -> Result<Self, GraphError> {
        if plan_med.task != Task::Medication || plan_lab.task != Task::Imputation {
            return Err(GraphError::Split(
                "expected a medication plan and an imputation plan".into(),
            ));
        }
        plan_med.check_against(graph)?;
        plan_lab.check_against(graph)?;
        let full = graph.refit_lab_norm(&plan_lab.edge_mask(Subset::Train))?;
        let view = full
            .apply_split_masking(&plan_med)?
            .apply_split_masking(&plan_lab)?;
        let features = NodeFeatures::one_hot(&view);
        Ok(Self {
            full,
            view,
            plan_med,
            plan_lab,
            features,
        })
    }

    pub fn rows(&self, subset: Subset) -> Vec<usize> {
        self.plan_med
            .encounters()
            .map(|p| p.get(subset).to_vec())
            .unwrap_or_default()
    }

    pub fn row_mask(&self, subset: Subset) -> Vec<bool> {
        self.plan_med.row_mask(subset)
    }

    pub fn edge_mask(&self, subset: Subset) -> Matrix {
        self.plan_lab.edge_mask(subset)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ranking: RankingResult,
    pub mse: f64,
    pub n_edges: usize,
    pub popularity: RankingResult,
    pub column_mean_mse: f64,
}

impl Evaluation {
    pub fn report(&self) -> MetricReport {
        let k = self.ranking.k;
        let mut r = MetricReport::default();
        r.push("lrap", self.ranking.lrap, self.ranking.n_rows_scored, None);
        r.push(&format!("map@{k}"), self.ranking.map_at_k, self.ranking.n_rows_scored, Some(k));
        r.push("mse", self.mse, self.n_edges, None);
        r.push("baseline_popularity_lrap", self.popularity.lrap, self.popularity.n_rows_scored, None);
        r.push(
            &format!("baseline_popularity_map@{k}"),
            self.popularity.map_at_k,
            self.popularity.n_rows_scored,
            Some(k),
        );
        r.push("baseline_column_mean_mse", self.column_mean_mse, self.n_edges, None);
        r
    }
}

/// Scores `model` on one subset: medication ranking over its encounters and
/// imputation MSE over its lab edges, next to the two baselines.
pub fn evaluate(model: &MedGcnModel, prep: &Prepared, subset: Subset, k: usize) -> Result<Evaluation, EvalError> {
    let out = model.predict(&prep.view, &prep.features)?;
    evaluate_outputs(&out.p, &out.v, prep, subset, k)
}

pub fn evaluate_outputs(
    p: &Matrix,
    v: &Matrix,
    prep: &Prepared,
    subset: Subset,
    k: usize,
) -> Result<Evaluation, EvalError> {
    let rows = prep.rows(subset);
    let truth = prep.full.a_em.select_rows(&rows);
    let ranking = ranking_metrics(&p.select_rows(&rows), &truth, k)?;
    let train_rows = prep.rows(Subset::Train);
    let pop = baseline_popularity(&prep.view.a_em, &train_rows, &rows);
    let popularity = ranking_metrics(&pop, &truth, k)?;

    let mask = prep.edge_mask(subset);
    let mse = masked_mse(v, &prep.full.a_el, &mask)?;
    let col = baseline_column_mean(&prep.view.a_el, &prep.view.m_el);
    let column_mean_mse = masked_mse(&col, &prep.full.a_el, &mask)?;
    Ok(Evaluation {
        ranking,
        mse,
        n_edges: mask.count_nonzero(),
        popularity,
        column_mean_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, tests::toy_records};
    use crate::model::{init_model, ModelHyper};

    #[test]
    fn view_hides_held_out_parts() {
        let g = build_graph(&toy_records()).unwrap();
        let prep = prepare(&g, SplitRatios::new(0.5, 0.25, 0.25), 3).unwrap();
        for i in prep.rows(Subset::Test).into_iter().chain(prep.rows(Subset::Val)) {
            assert!(prep.view.a_em.row(i).iter().all(|&v| v == 0.0));
        }
        let held = prep.edge_mask(Subset::Test);
        for i in 0..4 {
            for j in 0..3 {
                if held.get(i, j) == 1.0 {
                    assert_eq!(prep.view.m_el.get(i, j), 0.0);
                    assert_eq!(prep.full.m_el.get(i, j), 1.0);
                }
            }
        }
        assert_eq!(prep.full.fingerprint(), g.fingerprint());
    }

    #[test]
    fn evaluation_runs_on_toy() {
        let g = build_graph(&toy_records()).unwrap();
        let prep = prepare(&g, SplitRatios::new(0.5, 0.25, 0.25), 3).unwrap();
        let hyper = ModelHyper {
            hidden_dim: 4,
            ..Default::default()
        };
        let m = init_model(&prep.view, &prep.features, hyper, 0).unwrap();
        let e = evaluate(&m, &prep, Subset::Test, 2).unwrap();
        assert!((0.0..=1.0).contains(&e.ranking.lrap));
        let r = e.report();
        assert_eq!(r.get("mse"), Some(e.mse));
        assert!(r.get("map@2").is_some());
    }
}
