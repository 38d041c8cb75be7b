//! Reference implementations and fixtures shared by the integration tests.
//! The oracles here are written out by brute force on purpose and call
//! nothing from the crate beyond its data types.

#![allow(dead_code)]

use std::path::PathBuf;

use medgcn::data::load_csv_bundle;
use medgcn::graph::{MedGraph, NodeRegistry, NodeType};
use medgcn::model::{LayerWeights, MedGcnModel};
use medgcn::tensor::Matrix;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy")
}

pub fn fixture_checkpoint() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy.ckpt")
}

pub fn fixture_graph() -> MedGraph {
    load_csv_bundle(&fixture_dir()).expect("fixture loads").0
}

/// Every permutation of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                go(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Orderings of the labels that list scores from high to low.
fn consistent_orderings(scores: &[f64]) -> Vec<Vec<usize>> {
    permutations(scores.len())
        .into_iter()
        .filter(|p| p.windows(2).all(|w| scores[w[0]] >= scores[w[1]]))
        .collect()
}

/// LRAP of one row with ties resolved by averaging: a relevant label's rank
/// and the number of relevant labels at or above it are each averaged over
/// every ordering that is consistent with the scores.
pub fn brute_lrap_row(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let n_rel = relevant.iter().filter(|&&r| r).count();
    if n_rel == 0 {
        return None;
    }
    let orders = consistent_orderings(scores);
    let mut total = 0.0;
    for j in 0..scores.len() {
        if !relevant[j] {
            continue;
        }
        let (mut rank_sum, mut hit_sum) = (0usize, 0usize);
        for o in &orders {
            let pos = o.iter().position(|&x| x == j).unwrap();
            rank_sum += pos + 1;
            hit_sum += o[..=pos].iter().filter(|&&x| relevant[x]).count();
        }
        let c = orders.len() as f64;
        total += (hit_sum as f64 / c) / (rank_sum as f64 / c);
    }
    Some(total / n_rel as f64)
}

/// AP@k of one row under the ordering that lists tied labels by index (the
/// lexicographically first consistent ordering), normalized by
/// `min(k, #relevant)`.
pub fn brute_ap_row(scores: &[f64], relevant: &[bool], k: usize) -> Option<f64> {
    let n_rel = relevant.iter().filter(|&&r| r).count();
    if n_rel == 0 || k == 0 {
        return None;
    }
    let order = consistent_orderings(scores).into_iter().next().unwrap();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &j) in order.iter().take(k).enumerate() {
        if relevant[j] {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Some(sum / k.min(n_rel) as f64)
}

fn brute_mean(scores: &Matrix, relevance: &Matrix, f: impl Fn(&[f64], &[bool]) -> Option<f64>) -> Option<f64> {
    let mut vals = Vec::new();
    for i in 0..scores.rows() {
        let rel: Vec<bool> = relevance.row(i).iter().map(|&v| v != 0.0).collect();
        if let Some(v) = f(scores.row(i), &rel) {
            vals.push(v);
        }
    }
    if vals.is_empty() {
        return None;
    }
    Some(vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn brute_lrap(scores: &Matrix, relevance: &Matrix) -> Option<f64> {
    brute_mean(scores, relevance, brute_lrap_row)
}

pub fn brute_map(scores: &Matrix, relevance: &Matrix, k: usize) -> Option<f64> {
    brute_mean(scores, relevance, |s, r| brute_ap_row(s, r, k))
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// One unnormalized ReLU layer over one-hot features, evaluated with
/// explicit loops: the self term is row `i` of the type's own weight, and
/// each neighbour adds its edge weight times its own type's weight row.
/// Returns the new representation of every node of every type.
pub fn straight_line_layer(g: &MedGraph, layer: &LayerWeights) -> [Vec<Vec<f64>>; 4] {
    let w = |t: NodeType| &layer.get(t).expect("weight per type").value;
    let d = w(NodeType::Encounter).cols();
    let n = |t: NodeType| g.n(t);
    let blocks = [
        (NodeType::Patient, &g.a_ep),
        (NodeType::Lab, &g.a_el),
        (NodeType::Medication, &g.a_em),
    ];

    let mut out: [Vec<Vec<f64>>; 4] = Default::default();
    for t in NodeType::ALL {
        out[t.index()] = (0..n(t)).map(|i| w(t).row(i).to_vec()).collect();
    }
    for i in 0..n(NodeType::Encounter) {
        for (t, a) in blocks {
            for j in 0..n(t) {
                let e = a.get(i, j);
                if e == 0.0 {
                    continue;
                }
                for c in 0..d {
                    out[NodeType::Encounter.index()][i][c] += e * w(t).get(j, c);
                    out[t.index()][j][c] += e * w(NodeType::Encounter).get(i, c);
                }
            }
        }
    }
    out.map(|rows| rows.into_iter().map(|r| r.into_iter().map(relu).collect()).collect())
}

/// `perms[t][new] = old`.
pub type Perms = [Vec<usize>; 4];

fn permute(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m.get(rows[i], cols[j]))
}

pub fn permute_graph(g: &MedGraph, p: &Perms) -> MedGraph {
    let mut registry = NodeRegistry::default();
    for t in NodeType::ALL {
        for &old in &p[t.index()] {
            registry.insert(t, g.registry.id(t, old).unwrap());
        }
    }
    let [pe, pp, pl, pm] = p.each_ref().map(Vec::as_slice);
    let out = MedGraph {
        registry,
        a_ep: permute(&g.a_ep, pe, pp),
        a_el: permute(&g.a_el, pe, pl),
        m_el: permute(&g.m_el, pe, pl),
        a_em: permute(&g.a_em, pe, pm),
        raw_el: permute(&g.raw_el, pe, pl),
        lab_norm: pl.iter().map(|&l| g.lab_norm[l]).collect(),
    };
    out.validate().expect("permuted graph is valid");
    out
}

/// The model that computes on `permute_graph(g, p)` what `m` computes on
/// `g`: first-layer one-hot weights and head output columns follow their
/// nodes.
pub fn permute_model(m: &MedGcnModel, p: &Perms, permuted: &MedGraph) -> MedGcnModel {
    let mut out = m.clone();
    for (t, w) in out.layers[0].weights.iter_mut() {
        let rows = &p[t.index()];
        let all: Vec<usize> = (0..w.cols()).collect();
        w.value = permute(&w.value, rows, &all);
    }
    for (head, cols) in [
        (&mut out.head_med, &p[NodeType::Medication.index()]),
        (&mut out.head_lab, &p[NodeType::Lab.index()]),
    ] {
        let rows: Vec<usize> = (0..head.weight.rows()).collect();
        head.weight.value = permute(&head.weight.value, &rows, cols);
        head.bias.value = permute(&head.bias.value, &[0], cols);
    }
    out.lab_norm = p[NodeType::Lab.index()].iter().map(|&l| m.lab_norm[l]).collect();
    out.fingerprint = permuted.fingerprint();
    out
}
