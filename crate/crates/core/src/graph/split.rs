use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GraphError, GraphFingerprint, MedGraph, NodeType};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Partition encounters; held-out encounters lose their medication edges.
    Medication,
    /// Partition observed encounter–lab edges.
    Imputation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }

    /// A two-stage split: `train_val` of the items go to train+val (the rest
    /// to test), and `val_within` of that share goes to validation.
    /// `nested(0.8, 0.1)` is the 8:2 then 9:1 protocol.
    pub fn nested(train_val: f64, val_within: f64) -> Self {
        Self {
            train: train_val * (1.0 - val_within),
            val: train_val * val_within,
            test: 1.0 - train_val,
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(GraphError::Split(format!(
                "ratios must all be positive, got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GraphError::Split(format!("ratios {parts:?} do not sum to 1")));
        }
        Ok(())
    }

    /// Item counts for `n` items: validation and test get their rounded
    /// share (at least one each) and train takes the rest.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize), GraphError> {
        self.validate()?;
        if n < 3 {
            return Err(GraphError::Split(format!(
                "cannot split {n} items three ways"
            )));
        }
        let share = |r: f64| ((r * n as f64).round() as usize).max(1);
        let (val, test) = (share(self.val), share(self.test));
        if val + test >= n {
            return Err(GraphError::Split(format!(
                "{n} items leave no training items after {val} val / {test} test"
            )));
        }
        Ok((n - val - test, val, test))
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::nested(0.8, 0.1)
    }
}

/// Train/val/test assignment of some item type. Each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Partition<T> {
    pub fn get(&self, s: Subset) -> &[T] {
        match s {
            Subset::Train => &self.train,
            Subset::Val => &self.val,
            Subset::Test => &self.test,
        }
    }

    pub fn held_out(&self) -> impl Iterator<Item = &T> {
        self.val.iter().chain(&self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitParts {
    Encounters(Partition<usize>),
    Edges(Partition<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub task: Task,
    pub seed: u64,
    pub fingerprint: GraphFingerprint,
    pub n_encounters: usize,
    pub n_labs: usize,
    pub parts: SplitParts,
}

/// Shuffles the task's items under `seed` and cuts them by `ratios`.
pub fn make_split(
    graph: &MedGraph,
    task: Task,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitPlan, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = match task {
        Task::Medication => {
            let items: Vec<usize> = (0..graph.n_encounters()).collect();
            SplitParts::Encounters(partition(items, ratios, &mut rng)?)
        }
        Task::Imputation => SplitParts::Edges(partition(graph.observed_edges(), ratios, &mut rng)?),
    };
    Ok(SplitPlan {
        task,
        seed,
        fingerprint: graph.fingerprint(),
        n_encounters: graph.n_encounters(),
        n_labs: graph.n(NodeType::Lab),
        parts,
    })
}

fn partition<T: Ord + Clone>(
    mut items: Vec<T>,
    ratios: SplitRatios,
    rng: &mut ChaCha8Rng,
) -> Result<Partition<T>, GraphError> {
    let (n_train, n_val, _) = ratios.counts(items.len())?;
    items.shuffle(rng);
    let mut test = items.split_off(n_train + n_val);
    let mut val = items.split_off(n_train);
    let mut train = items;
    train.sort();
    val.sort();
    test.sort();
    Ok(Partition { train, val, test })
}

impl SplitPlan {
    pub fn encounters(&self) -> Option<&Partition<usize>> {
        match &self.parts {
            SplitParts::Encounters(p) => Some(p),
            SplitParts::Edges(_) => None,
        }
    }

    pub fn edges(&self) -> Option<&Partition<(usize, usize)>> {
        match &self.parts {
            SplitParts::Edges(p) => Some(p),
            SplitParts::Encounters(_) => None,
        }
    }

    /// True at encounter ordinals in `subset` (medication plans only; an
    /// imputation plan yields all-false).
    pub fn row_mask(&self, subset: Subset) -> Vec<bool> {
        let mut mask = vec![false; self.n_encounters];
        if let Some(p) = self.encounters() {
            for &i in p.get(subset) {
                mask[i] = true;
            }
        }
        mask
    }

    /// N_E × N_L indicator of the edges in `subset` (imputation plans only).
    pub fn edge_mask(&self, subset: Subset) -> Matrix {
        let mut m = Matrix::zeros(self.n_encounters, self.n_labs);
        if let Some(p) = self.edges() {
            for &(i, j) in p.get(subset) {
                m.set(i, j, 1.0);
            }
        }
        m
    }

    pub fn check_against(&self, graph: &MedGraph) -> Result<(), GraphError> {
        if graph.fingerprint() != self.fingerprint
            || graph.n_encounters() != self.n_encounters
            || graph.n(NodeType::Lab) != self.n_labs
        {
            return Err(GraphError::Integrity(format!(
                "split plan was made for graph {} ({}x{}), not {} ({}x{})",
                self.fingerprint,
                self.n_encounters,
                self.n_labs,
                graph.fingerprint(),
                graph.n_encounters(),
                graph.n(NodeType::Lab)
            )));
        }
        Ok(())
    }
}

impl MedGraph {
    /// Training view under `plan`: held-out encounters lose their medication
    /// rows, or held-out lab edges are removed from `a_el`, `m_el` and the
    /// raw values. `self` is left untouched.
    pub fn apply_split_masking(&self, plan: &SplitPlan) -> Result<MedGraph, GraphError> {
        plan.check_against(self)?;
        let mut g = self.clone();
        match &plan.parts {
            SplitParts::Encounters(p) => {
                for &i in p.held_out() {
                    g.a_em.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                }
            }
            SplitParts::Edges(p) => {
                for &(i, j) in p.held_out() {
                    g.a_el.set(i, j, 0.0);
                    g.m_el.set(i, j, 0.0);
                    g.raw_el.set(i, j, 0.0);
                }
            }
        }
        Ok(g)
    }
}
