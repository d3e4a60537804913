//! Model specification: covariates, contact network, parameters and the
//! logistic-link agent rates, plus the JSON document format used by the CLI.

use serde::{Deserialize, Serialize};

use crate::distributions::ProbVector;
use crate::error::{Error, Result};
use crate::numeric::logistic;

/// Row-major `N × d` covariate matrix; row `n` belongs to agent `n`.
#[derive(Clone, Debug)]
pub struct Covariates {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "covariates: expected {n}×{d} = {} values, got {}",
                n * d,
                values.len()
            )));
        }
        if d == 0 {
            return Err(Error::DimensionMismatch("covariate dimension must be ≥ 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("covariates must be finite".into()));
        }
        Ok(Self { n, d, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, agent: usize) -> &[f64] {
        &self.values[agent * self.d..(agent + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Undirected contact network over `N` agents.
///
/// The complete graph is implicit (no adjacency stored). Sparse networks
/// keep sorted neighbor lists. The self-inclusive complete variant — each
/// agent counting itself among its `N` "neighbors" — reproduces the
/// homogeneous count dynamics exactly and exists for oracle comparisons.
#[derive(Clone, Debug)]
pub enum Network {
    Complete { n: usize, include_self: bool },
    Sparse { neighbors: Vec<Vec<u32>> },
}

impl Network {
    /// Standard complete graph (self excluded); needs at least two agents.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidNetwork(
                "complete graph needs ≥ 2 agents (degree ≥ 1)".into(),
            ));
        }
        Ok(Network::Complete { n, include_self: false })
    }

    /// Complete graph where each agent also counts itself; the neighbor
    /// fraction becomes `I(x)/N`, matching the homogeneous count model.
    pub fn complete_self_inclusive(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidNetwork("empty network".into()));
        }
        Ok(Network::Complete { n, include_self: true })
    }

    /// Builds a sparse network from undirected edges; validates agent
    /// bounds, rejects self-loops and duplicate edges, and requires every
    /// agent to have degree ≥ 1. Lists are stored sorted.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({a}, {b}) out of bounds for {n} agents"
                )));
            }
            if a == b {
                return Err(Error::InvalidNetwork(format!("self-loop at agent {a}")));
            }
            neighbors[a as usize].push(b);
            neighbors[b as usize].push(a);
        }
        for (agent, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidNetwork(format!("duplicate edge at agent {agent}")));
            }
            if list.is_empty() {
                return Err(Error::InvalidNetwork(format!("agent {agent} is isolated")));
            }
        }
        Ok(Network::Sparse { neighbors })
    }

    pub fn n(&self) -> usize {
        match self {
            Network::Complete { n, .. } => *n,
            Network::Sparse { neighbors } => neighbors.len(),
        }
    }

    /// Degree of `agent` (the self-inclusive complete graph counts self).
    pub fn degree(&self, agent: usize) -> usize {
        match self {
            Network::Complete { n, include_self: false } => n - 1,
            Network::Complete { n, include_self: true } => *n,
            Network::Sparse { neighbors } => neighbors[agent].len(),
        }
    }

    /// Neighbors of `agent`, ascending.
    pub fn neighbors(&self, agent: usize) -> Vec<usize> {
        match self {
            Network::Complete { n, include_self } => (0..*n)
                .filter(|&m| *include_self || m != agent)
                .collect(),
            Network::Sparse { neighbors } => {
                neighbors[agent].iter().map(|&m| m as usize).collect()
            }
        }
    }

    /// Checks stored symmetry (trivial for complete graphs; sparse lists
    /// are symmetric by construction, re-validated here for loaded data).
    pub fn validate_symmetry(&self) -> Result<()> {
        if let Network::Sparse { neighbors } = self {
            for (a, list) in neighbors.iter().enumerate() {
                for &b in list {
                    if neighbors[b as usize].binary_search(&(a as u32)).is_err() {
                        return Err(Error::InvalidNetwork(format!(
                            "asymmetric adjacency between {a} and {b}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Model parameters `θ = (β₀, β_λ, β_γ, ρ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta0: Vec<f64>,
    pub beta_lambda: Vec<f64>,
    pub beta_gamma: Vec<f64>,
    pub rho: f64,
}

impl ModelParams {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.beta0.len() != d || self.beta_lambda.len() != d || self.beta_gamma.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "theta: coefficient vectors must have length d = {d}"
            )));
        }
        // ρ = 1 (perfect reporting) is a valid simulation/filtering model;
        // the inference entry points require the open interval separately
        // because chains carry ρ on the logit scale.
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidModel(format!(
                "reporting probability rho = {} outside (0, 1]",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Per-cluster homogenised rates for a partition of the agents.
#[derive(Clone, Debug)]
pub struct ClusterRates {
    /// Cluster id per agent.
    pub assignment: Vec<u32>,
    /// Agents per cluster.
    pub sizes: Vec<usize>,
    /// Mean infection rate per cluster.
    pub lambda_bar: Vec<f64>,
    /// Mean recovery rate per cluster.
    pub gamma_bar: Vec<f64>,
    /// Agent indices per cluster, ascending.
    pub members: Vec<Vec<usize>>,
}

/// Per-agent logistic-link rates plus their homogenised means.
#[derive(Clone, Debug)]
pub struct AgentRates {
    /// Initial infection probabilities α₀.
    pub alpha0: ProbVector,
    /// Infection rates λ.
    pub lambda: ProbVector,
    /// Recovery rates γ.
    pub gamma: ProbVector,
    /// Population mean of λ.
    pub lambda_bar: f64,
    /// Population mean of γ.
    pub gamma_bar: f64,
    /// Optional cluster refinement of the means.
    pub clusters: Option<ClusterRates>,
}

impl AgentRates {
    pub fn n(&self) -> usize {
        self.alpha0.len()
    }

    /// Attaches a cluster partition, computing per-cluster rate means.
    pub fn with_clusters(mut self, assignment: Vec<u32>) -> Result<Self> {
        let n = self.n();
        if assignment.len() != n {
            return Err(Error::DimensionMismatch("cluster assignment length != N".into()));
        }
        let k = match assignment.iter().max() {
            Some(&m) => m as usize + 1,
            None => return Err(Error::InvalidModel("empty cluster assignment".into())),
        };
        let mut sizes = vec![0usize; k];
        let mut members = vec![Vec::new(); k];
        let mut lambda_bar = vec![0.0; k];
        let mut gamma_bar = vec![0.0; k];
        for (agent, &c) in assignment.iter().enumerate() {
            let c = c as usize;
            sizes[c] += 1;
            members[c].push(agent);
            lambda_bar[c] += self.lambda[agent];
            gamma_bar[c] += self.gamma[agent];
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidModel("cluster ids must be contiguous and non-empty".into()));
        }
        for c in 0..k {
            lambda_bar[c] /= sizes[c] as f64;
            gamma_bar[c] /= sizes[c] as f64;
        }
        self.clusters = Some(ClusterRates { assignment, sizes, lambda_bar, gamma_bar, members });
        Ok(self)
    }
}

/// Computes the logistic-link rates `α₀ⁿ, λⁿ, γⁿ = (1 + exp(-β·wⁿ))⁻¹`.
pub fn agent_rates(theta: &ModelParams, covariates: &Covariates) -> Result<AgentRates> {
    theta.validate(covariates.d())?;
    let n = covariates.n();
    let link = |beta: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|agent| {
                let w = covariates.row(agent);
                let dot: f64 = beta.iter().zip(w).map(|(b, x)| b * x).sum();
                logistic(dot)
            })
            .collect()
    };
    let lambda = ProbVector::new(link(&theta.beta_lambda))?;
    let gamma = ProbVector::new(link(&theta.beta_gamma))?;
    let lambda_bar = lambda.sum() / n as f64;
    let gamma_bar = gamma.sum() / n as f64;
    Ok(AgentRates {
        alpha0: ProbVector::new(link(&theta.beta0))?,
        lambda,
        gamma,
        lambda_bar,
        gamma_bar,
        clusters: None,
    })
}

/// Which latent dynamics a model document describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sis,
    Sir,
}

/// A fully validated model: dynamics kind, covariates, network and θ.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub covariates: Covariates,
    pub network: Network,
    pub theta: ModelParams,
}

impl ModelSpec {
    pub fn n(&self) -> usize {
        self.covariates.n()
    }

    pub fn d(&self) -> usize {
        self.covariates.d()
    }

    pub fn rates(&self) -> Result<AgentRates> {
        agent_rates(&self.theta, &self.covariates)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.into_spec()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let network = match &self.network {
            Network::Complete { .. } => NetworkDocument::Full,
            Network::Sparse { neighbors } => {
                let mut edges = Vec::new();
                for (a, list) in neighbors.iter().enumerate() {
                    for &b in list {
                        if (a as u32) < b {
                            edges.push([a as u32, b]);
                        }
                    }
                }
                NetworkDocument::Edges { edges }
            }
        };
        let doc = ModelDocument {
            model: Some(self.kind),
            n: self.n(),
            d: self.d(),
            covariates: self.covariates.values().to_vec(),
            network,
            theta: self.theta.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }
}

/// Wire format for model documents (agent indices are zero-based).
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ModelKind>,
    #[serde(rename = "N")]
    n: usize,
    d: usize,
    /// Row-major `N × d`.
    covariates: Vec<f64>,
    network: NetworkDocument,
    theta: ModelParams,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum NetworkDocument {
    Full,
    Edges { edges: Vec<[u32; 2]> },
}

impl ModelDocument {
    fn into_spec(self) -> Result<ModelSpec> {
        let covariates = Covariates::new(self.n, self.d, self.covariates)?;
        let network = match self.network {
            NetworkDocument::Full => Network::complete(self.n)?,
            NetworkDocument::Edges { edges } => {
                let pairs: Vec<(u32, u32)> = edges.iter().map(|e| (e[0], e[1])).collect();
                let net = Network::from_edges(self.n, &pairs)?;
                net.validate_symmetry()?;
                net
            }
        };
        self.theta.validate(self.d)?;
        Ok(ModelSpec {
            kind: self.model.unwrap_or(ModelKind::Sis),
            covariates,
            network,
            theta: self.theta,
        })
    }
}
