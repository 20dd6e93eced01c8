//! pUCT tree search over a learned (or hand-coded) model.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use super::model::LearnedModel;
use crate::nn::NnError;

/// What the search needs from a model.
pub trait SearchModel {
    type Latent: Clone;

    fn n_actions(&self) -> usize;

    /// `(policy, value)` at a latent state.
    fn predict(&self, s: &Self::Latent) -> Result<(Vec<f64>, f64), NnError>;

    /// `(reward, next latent)` for taking `action` at `s`.
    fn step(&self, s: &Self::Latent, action: usize) -> Result<(f64, Self::Latent), NnError>;
}

impl SearchModel for LearnedModel<f64> {
    type Latent = Vec<f64>;

    fn n_actions(&self) -> usize {
        self.spec.n_actions
    }

    fn predict(&self, s: &Vec<f64>) -> Result<(Vec<f64>, f64), NnError> {
        LearnedModel::predict(self, s)
    }

    fn step(&self, s: &Vec<f64>, action: usize) -> Result<(f64, Vec<f64>), NnError> {
        self.dynamics(s, action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    pub n_sims: usize,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    /// Sample the action from visits^(1/τ) instead of taking the most visited.
    pub temperature: Option<f64>,
    /// `(alpha, fraction)` of Dirichlet noise mixed into the root priors.
    pub root_dirichlet: Option<(f64, f64)>,
    pub unvisited: UnvisitedValue,
}

/// Value term of edges that have not been visited yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnvisitedValue {
    /// Normalized value 0: the most pessimistic reading.
    Zero,
    /// The parent's mean return, normalized; every sibling gets tried once
    /// before the prior has to carry the search.
    #[default]
    ParentMean,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            n_sims: 20,
            gamma: 0.997,
            c1: 1.25,
            c2: 19652.0,
            temperature: None,
            root_dirichlet: None,
            unvisited: UnvisitedValue::ParentMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub n_visits: u32,
    pub q_sum: f64,
    pub prior: f64,
    /// Natural-unit reward, set when the child is expanded.
    pub reward: f64,
    pub child: Option<usize>,
}

impl EdgeStats {
    pub fn fresh(prior: f64) -> Self {
        EdgeStats {
            n_visits: 0,
            q_sum: 0.0,
            prior,
            reward: 0.0,
            child: None,
        }
    }

    pub fn q(&self) -> f64 {
        if self.n_visits > 0 {
            self.q_sum / self.n_visits as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxStats {
    pub min_q: f64,
    pub max_q: f64,
}

impl Default for MinMaxStats {
    fn default() -> Self {
        MinMaxStats {
            min_q: f64::INFINITY,
            max_q: f64::NEG_INFINITY,
        }
    }
}

impl MinMaxStats {
    pub fn update(&mut self, q: f64) {
        self.min_q = self.min_q.min(q);
        self.max_q = self.max_q.max(q);
    }

    /// Maps `q` into [0, 1]; a degenerate range maps to the midpoint.
    pub fn normalize(&self, q: f64) -> f64 {
        if self.max_q > self.min_q {
            ((q - self.min_q) / (self.max_q - self.min_q)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }
}

pub fn puct_score(
    edge: &EdgeStats,
    total_visits: u32,
    minmax: &MinMaxStats,
    c1: f64,
    c2: f64,
) -> f64 {
    let q = if edge.n_visits > 0 {
        minmax.normalize(edge.q())
    } else {
        0.0
    };
    q + exploration(edge, total_visits, c1, c2)
}

fn exploration(edge: &EdgeStats, total_visits: u32, c1: f64, c2: f64) -> f64 {
    let n = total_visits as f64;
    edge.prior * n.sqrt() / (1.0 + edge.n_visits as f64) * (c1 + ((n + c2 + 1.0) / c2).ln())
}

/// Highest pUCT score with unvisited edges valued at 0; ties go to the
/// lowest index.
pub fn puct_select(edges: &[EdgeStats], minmax: &MinMaxStats, c1: f64, c2: f64) -> usize {
    select_with(edges, minmax, c1, c2, UnvisitedValue::Zero)
}

pub fn select_with(
    edges: &[EdgeStats],
    minmax: &MinMaxStats,
    c1: f64,
    c2: f64,
    unvisited: UnvisitedValue,
) -> usize {
    let total: u32 = edges.iter().map(|e| e.n_visits).sum();
    let fresh = match unvisited {
        UnvisitedValue::Zero => 0.0,
        UnvisitedValue::ParentMean if total > 0 => {
            minmax.normalize(edges.iter().map(|e| e.q_sum).sum::<f64>() / total as f64)
        }
        UnvisitedValue::ParentMean => 0.0,
    };
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, e) in edges.iter().enumerate() {
        let q = if e.n_visits > 0 {
            minmax.normalize(e.q())
        } else {
            fresh
        };
        let s = q + exploration(e, total, c1, c2);
        if s > best_score {
            best = a;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Node<L> {
    pub latent: L,
    pub edges: Vec<EdgeStats>,
}

#[derive(Debug, Clone)]
pub struct SearchTree<L> {
    pub nodes: Vec<Node<L>>,
    pub minmax: MinMaxStats,
}

impl<L: Clone> SearchTree<L> {
    /// A tree holding only the expanded root.
    pub fn new<M: SearchModel<Latent = L>>(model: &M, root: L) -> Result<Self, NnError> {
        let (policy, _) = model.predict(&root)?;
        check_policy(&policy, model.n_actions())?;
        let edges = policy.into_iter().map(EdgeStats::fresh).collect();
        Ok(SearchTree {
            nodes: vec![Node {
                latent: root,
                edges,
            }],
            minmax: MinMaxStats::default(),
        })
    }

    /// Expands the child behind `(node, action)` and returns `(child, leaf value)`.
    /// An already expanded edge is left untouched and reports `None`.
    pub fn expand<M: SearchModel<Latent = L>>(
        &mut self,
        model: &M,
        node: usize,
        action: usize,
    ) -> Result<Option<(usize, f64)>, NnError> {
        if self.nodes[node].edges[action].child.is_some() {
            return Ok(None);
        }
        let (reward, latent) = model.step(&self.nodes[node].latent, action)?;
        let (policy, value) = model.predict(&latent)?;
        check_policy(&policy, model.n_actions())?;
        if !reward.is_finite() || !value.is_finite() {
            return Err(NnError::NonFinite("reward/value prediction".into()));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            latent,
            edges: policy.into_iter().map(EdgeStats::fresh).collect(),
        });
        let e = &mut self.nodes[node].edges[action];
        e.reward = reward;
        e.child = Some(id);
        Ok(Some((id, value)))
    }

    /// Pushes the leaf value back along `path` of `(node, action)` edges,
    /// root first. Each edge receives `reward + γ·(return below it)`.
    pub fn backpropagate(&mut self, path: &[(usize, usize)], leaf_value: f64, gamma: f64) {
        let mut g = leaf_value;
        for &(node, action) in path.iter().rev() {
            let e = &mut self.nodes[node].edges[action];
            g = e.reward + gamma * g;
            e.q_sum += g;
            e.n_visits += 1;
            let q = e.q();
            self.minmax.update(q);
        }
    }

    /// Checks that each expanded edge's visits are one more than its child's.
    pub fn is_consistent(&self) -> bool {
        self.nodes.iter().all(|n| {
            n.edges.iter().all(|e| match e.child {
                Some(c) => {
                    let below: u32 = self.nodes[c].edges.iter().map(|x| x.n_visits).sum();
                    e.n_visits == below + 1
                }
                None => e.n_visits == 0,
            })
        })
    }
}

fn check_policy(p: &[f64], n: usize) -> Result<(), NnError> {
    if p.len() != n {
        return Err(NnError::Shape(format!(
            "policy of length {} for {n} actions",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("policy prediction".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub visit_distribution: Vec<f64>,
    pub visit_counts: Vec<u32>,
    pub root_value: f64,
    pub chosen_action: usize,
}

/// Runs `cfg.n_sims` simulations from `root`.
pub fn run_mcts<M: SearchModel, R: Rng>(
    model: &M,
    root: M::Latent,
    cfg: &MctsConfig,
    rng: &mut R,
) -> Result<SearchResult, NnError> {
    let mut tree = SearchTree::new(model, root)?;
    if let Some((alpha, frac)) = cfg.root_dirichlet {
        let n = model.n_actions();
        if n > 1 {
            let d =
                Dirichlet::new_with_size(alpha, n).map_err(|e| NnError::Shape(e.to_string()))?;
            let noise = d.sample(rng);
            for (e, x) in tree.nodes[0].edges.iter_mut().zip(noise) {
                e.prior = (1.0 - frac) * e.prior + frac * x;
            }
        }
    }
    for _ in 0..cfg.n_sims {
        let mut node = 0;
        let mut path = Vec::new();
        loop {
            let a = select_with(
                &tree.nodes[node].edges,
                &tree.minmax,
                cfg.c1,
                cfg.c2,
                cfg.unvisited,
            );
            path.push((node, a));
            match tree.nodes[node].edges[a].child {
                Some(c) => node = c,
                None => break,
            }
        }
        let &(leaf_parent, a) = path.last().expect("non-empty path");
        let (_, value) = tree
            .expand(model, leaf_parent, a)?
            .expect("selection stops at unexpanded edges");
        tree.backpropagate(&path, value, cfg.gamma);
    }
    let root = &tree.nodes[0];
    let counts: Vec<u32> = root.edges.iter().map(|e| e.n_visits).collect();
    let total: u32 = counts.iter().sum();
    let q_total: f64 = root.edges.iter().map(|e| e.q_sum).sum();
    let visit_distribution = if total > 0 {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    } else {
        root.edges.iter().map(|e| e.prior).collect()
    };
    let most_visited =
        (0..counts.len()).fold(0, |best, a| if counts[a] > counts[best] { a } else { best });
    let chosen_action = match cfg.temperature {
        Some(tau) if tau > 0.0 && total > 0 => {
            let w: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(1.0 / tau)).collect();
            let sum: f64 = w.iter().sum();
            let mut u = rng.gen::<f64>() * sum;
            let mut pick = most_visited;
            for (a, wa) in w.iter().enumerate() {
                if u < *wa {
                    pick = a;
                    break;
                }
                u -= wa;
            }
            pick
        }
        _ => most_visited,
    };
    Ok(SearchResult {
        visit_distribution,
        visit_counts: counts,
        root_value: if total > 0 {
            q_total / total as f64
        } else {
            0.0
        },
        chosen_action,
    })
}
