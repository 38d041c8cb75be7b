//! Full-batch training with Adam, validation-based early stopping, and the
//! per-epoch log.
//!
//! The objective is `L_M + λ·L_L`: weighted binary cross-entropy over the
//! training encounters' medication rows plus squared error over the
//! training-visible lab edges, both divided by the encounter count.

mod loss;

pub use loss::{loss_combined, loss_lab, loss_medication, ClassWeight};

use std::borrow::Cow;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{GraphError, MedGraph, SplitPlan, Subset};
use crate::metrics::{lrap, masked_mse, MetricError};
use crate::model::{init_model, HeadKind, HeteroAdjacency, MedGcnModel, ModelError, ModelHyper};
use crate::pipeline::Prepared;
use crate::tensor::{adam_step, AdamConfig, AdamState, Matrix, Tape, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training data: {0}")]
    Data(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric guard: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    /// Both losses, the lab term scaled by λ.
    Both,
    /// Medication loss only; the lab head gets no gradient.
    MedicationOnly,
    /// Lab loss only; the medication head gets no gradient.
    LabOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValMetric {
    /// LRAP over validation encounters, maximized.
    Lrap,
    /// Per-edge MSE over validation lab edges, minimized.
    Mse,
}

impl ValMetric {
    fn better(self, new: f64, old: f64) -> bool {
        match self {
            ValMetric::Lrap => new > old,
            ValMetric::Mse => new < old,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValMetric::Lrap => "lrap",
            ValMetric::Mse => "mse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub task_mode: TaskMode,
    /// `None` picks LRAP, or MSE in lab-only mode.
    pub val_metric: Option<ValMetric>,
    pub model: ModelHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lr: 0.001,
            max_epochs: 1000,
            patience: 50,
            seed: 0,
            task_mode: TaskMode::Both,
            val_metric: None,
            model: ModelHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(TrainError::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        Ok(())
    }

    pub fn metric(&self) -> ValMetric {
        self.val_metric.unwrap_or(match self.task_mode {
            TaskMode::LabOnly => ValMetric::Mse,
            _ => ValMetric::Lrap,
        })
    }
}

/// Tracks the best validation value. Ties keep the earlier epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub metric: ValMetric,
    pub patience: usize,
    pub best_epoch: usize,
    pub best_value: f64,
}

impl EarlyStopping {
    /// Starts from the value at epoch 0.
    pub fn new(metric: ValMetric, patience: usize, initial: f64) -> Self {
        Self {
            metric,
            patience,
            best_epoch: 0,
            best_value: initial,
        }
    }

    /// Records `value` for `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if self.metric.better(value, self.best_value) {
            self.best_epoch = epoch;
            self.best_value = value;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        epoch - self.best_epoch >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_med: f64,
    pub loss_lab: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub metric: ValMetric,
    /// Validation value of the untrained model.
    pub initial_val_metric: f64,
    pub epochs: Vec<EpochLog>,
    /// 0 if no epoch beat the untrained model.
    pub best_epoch: usize,
    pub best_val_metric: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    /// Tab-separated log: a header, then one line per epoch.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("epoch\tloss_med\tloss_lab\tval_{}\n", self.metric.name());
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.epoch, e.loss_med, e.loss_lab, e.val_metric);
        }
        out
    }

    pub fn final_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub loss_med: f64,
    pub loss_lab: f64,
    /// The value that was differentiated.
    pub objective: f64,
}

/// Owns the model and optimizer state for one run over a prepared graph.
pub struct Trainer<'p> {
    prep: &'p Prepared,
    config: TrainConfig,
    model: MedGcnModel,
    states: Vec<AdamState>,
    rng: ChaCha8Rng,
    adj: HeteroAdjacency<'p>,
    class_weight: ClassWeight,
    train_rows: Vec<bool>,
    val_rows: Vec<usize>,
    val_edges: Matrix,
}

impl<'p> Trainer<'p> {
    pub fn new(prep: &'p Prepared, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let train_rows = prep.row_mask(Subset::Train);
        let class_weight = match config.task_mode {
            TaskMode::LabOnly => ClassWeight::from_targets(&prep.view.a_em, Some(&train_rows))
                .unwrap_or_else(|_| ClassWeight::unit()),
            _ => ClassWeight::from_targets(&prep.view.a_em, Some(&train_rows))?,
        };
        let model = init_model(&prep.view, &prep.features, config.model, config.seed)?;
        let states = model.params().into_iter().map(AdamState::for_param).collect();
        // dropout draws use their own stream, apart from initialization
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d20b);
        Ok(Self {
            prep,
            config,
            model,
            states,
            rng,
            adj: HeteroAdjacency::from_graph(&prep.view),
            class_weight,
            train_rows,
            val_rows: prep.rows(Subset::Val),
            val_edges: prep.edge_mask(Subset::Val),
        })
    }

    pub fn model(&self) -> &MedGcnModel {
        &self.model
    }

    pub fn into_model(self) -> MedGcnModel {
        self.model
    }

    pub fn class_weight(&self) -> ClassWeight {
        self.class_weight
    }

    /// A training-mode forward and backward pass. Returns the losses and
    /// one gradient per parameter, in [`MedGcnModel::params`] order;
    /// parameters the objective does not reach get exact zeros.
    pub fn gradients(&mut self) -> Result<(StepLosses, Vec<Matrix>), TrainError> {
        let view: &MedGraph = &self.prep.view;
        let n_e = view.n_encounters() as f64;
        let mut tape = Tape::new();
        let vars = self
            .model
            .forward_tape(&mut tape, &self.adj, &self.prep.features, true, &mut self.rng)?;
        let l_med = tape.bce_with_logits(
            vars.med_logits,
            Cow::Borrowed(&view.a_em),
            self.class_weight.weight(),
            Some(self.train_rows.clone()),
            n_e,
        )?;
        let l_lab = tape.masked_squared_error(
            vars.v,
            Cow::Borrowed(&view.a_el),
            Cow::Borrowed(&view.m_el),
            n_e,
        )?;
        let objective = match self.config.task_mode {
            TaskMode::Both => {
                let scaled = tape.scale(l_lab, self.config.lambda);
                tape.add(l_med, scaled)?
            }
            TaskMode::MedicationOnly => l_med,
            TaskMode::LabOnly => l_lab,
        };
        let losses = StepLosses {
            loss_med: tape.scalar(l_med),
            loss_lab: tape.scalar(l_lab),
            objective: tape.scalar(objective),
        };
        tape.backward(objective)?;
        let grads = self
            .model
            .params()
            .into_iter()
            .map(|p| tape.grad_for(p).unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
            .collect();
        Ok((losses, grads))
    }

    /// One epoch: gradients, then an Adam update.
    pub fn step(&mut self) -> Result<StepLosses, TrainError> {
        let (losses, grads) = self.gradients()?;
        let mut params = self.model.params_mut();
        for (p, g) in params.iter_mut().zip(grads) {
            p.grad = Some(g);
        }
        adam_step(&mut params, &mut self.states, &AdamConfig::with_lr(self.config.lr))?;
        Ok(losses)
    }

    /// Validation value of the current weights.
    pub fn validate(&self) -> Result<f64, TrainError> {
        let features = &self.prep.features;
        Ok(match self.config.metric() {
            ValMetric::Lrap => {
                let p = self.model.predict_head(&self.adj, features, HeadKind::Medication)?;
                lrap(
                    &p.select_rows(&self.val_rows),
                    &self.prep.full.a_em.select_rows(&self.val_rows),
                )?
            }
            ValMetric::Mse => {
                let v = self.model.predict_head(&self.adj, features, HeadKind::Lab)?;
                masked_mse(&v, &self.prep.full.a_el, &self.val_edges)?
            }
        })
    }

    /// Runs to early stopping and returns the best-validation model.
    pub fn run(mut self) -> Result<(MedGcnModel, TrainReport), TrainError> {
        let metric = self.config.metric();
        let initial = self.validate()?;
        let mut stopper = EarlyStopping::new(metric, self.config.patience, initial);
        let mut best = self.model.clone();
        let mut epochs = Vec::new();
        let mut stop_reason = StopReason::MaxEpochs;
        for epoch in 1..=self.config.max_epochs {
            let losses = self.step()?;
            if !losses.objective.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            let value = self.validate()?;
            if !value.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            epochs.push(EpochLog {
                epoch,
                loss_med: losses.loss_med,
                loss_lab: losses.loss_lab,
                val_metric: value,
            });
            if stopper.observe(epoch, value) {
                best = self.model.clone();
            }
            if stopper.should_stop(epoch) {
                stop_reason = StopReason::Patience;
                break;
            }
        }
        let report = TrainReport {
            metric,
            initial_val_metric: initial,
            epochs,
            best_epoch: stopper.best_epoch,
            best_val_metric: stopper.best_value,
            stop_reason,
        };
        Ok((best.without_grads(), report))
    }
}

impl MedGcnModel {
    fn without_grads(mut self) -> Self {
        for p in self.params_mut() {
            p.grad = None;
        }
        self
    }
}

pub fn train_prepared(prep: &Prepared, config: TrainConfig) -> Result<(MedGcnModel, TrainReport), TrainError> {
    Trainer::new(prep, config)?.run()
}

/// Refits, masks and trains on `graph` under the two plans.
pub fn train(
    graph: &MedGraph,
    plan_med: &SplitPlan,
    plan_lab: &SplitPlan,
    config: TrainConfig,
) -> Result<(MedGcnModel, TrainReport), TrainError> {
    let prep = Prepared::from_plans(graph, plan_med.clone(), plan_lab.clone())?;
    train_prepared(&prep, config)
}
