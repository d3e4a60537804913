//! Heterogeneous agent-based SIR dynamics.
//!
//! Agents move susceptible → infected → recovered; recovered is absorbing.
//! Observations thin the infected count exactly as in the SIS model. The
//! summary `(S(x), I(x))` drives the backward information filter, so its
//! one-step law is provided both exactly and under homogenised rates.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::distributions::{poibin_table, ProbVector};
use crate::error::{Error, Result};
use crate::model::{AgentRates, Network};
use crate::state::PopulationState;

/// Agent phase labels on the wire: 0 = susceptible, 1 = infected,
/// 2 = recovered.
pub const SUSCEPTIBLE: u8 = 0;
pub const INFECTED: u8 = 1;
pub const RECOVERED: u8 = 2;

/// Three-phase population state held as two disjoint bit planes with
/// cached counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SirState {
    infected: PopulationState,
    recovered: PopulationState,
}

impl SirState {
    /// All agents susceptible.
    pub fn susceptible(n: usize) -> Self {
        Self {
            infected: PopulationState::zeros(n),
            recovered: PopulationState::zeros(n),
        }
    }

    /// Builds from phase digits (0/1/2).
    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        let mut state = Self::susceptible(digits.len());
        for (agent, &d) in digits.iter().enumerate() {
            if d > 2 {
                return Err(Error::InvalidArgument(format!("phase digit {d} at agent {agent}")));
            }
            state.set_agent(agent, d);
        }
        Ok(state)
    }

    /// Initial state from infection indicators (no recovered agents).
    pub fn from_infection_indicators(bits: &PopulationState) -> Self {
        Self {
            infected: bits.clone(),
            recovered: PopulationState::zeros(bits.len()),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.infected.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.infected.is_empty()
    }

    #[inline]
    pub fn agent(&self, ix: usize) -> u8 {
        if self.infected.get(ix) {
            INFECTED
        } else if self.recovered.get(ix) {
            RECOVERED
        } else {
            SUSCEPTIBLE
        }
    }

    pub fn set_agent(&mut self, ix: usize, phase: u8) {
        self.infected.set(ix, phase == INFECTED);
        self.recovered.set(ix, phase == RECOVERED);
    }

    #[inline]
    pub fn infected_count(&self) -> usize {
        self.infected.count_ones()
    }

    #[inline]
    pub fn recovered_count(&self) -> usize {
        self.recovered.count_ones()
    }

    #[inline]
    pub fn susceptible_count(&self) -> usize {
        self.len() - self.infected_count() - self.recovered_count()
    }

    /// The infected bit plane.
    pub fn infected_plane(&self) -> &PopulationState {
        &self.infected
    }

    pub fn to_digits(&self) -> Vec<u8> {
        (0..self.len()).map(|ix| self.agent(ix)).collect()
    }

    /// Mixed-radix index with base 3 (agent 0 least significant); the
    /// exact oracles enumerate states through this encoding.
    pub fn to_trit_index(&self) -> usize {
        let mut ix = 0usize;
        for agent in (0..self.len()).rev() {
            ix = ix * 3 + self.agent(agent) as usize;
        }
        ix
    }

    pub fn from_trit_index(n: usize, mut ix: usize) -> Self {
        let mut state = Self::susceptible(n);
        for agent in 0..n {
            state.set_agent(agent, (ix % 3) as u8);
            ix /= 3;
        }
        state
    }
}

/// Per-agent next-phase probabilities `(α_S, α_I, α_R)`.
#[derive(Clone, Debug)]
pub struct SirProbs {
    pub probs: Vec<[f64; 3]>,
}

/// Transition probabilities of every agent given state `x`.
///
/// Susceptible agents are infected with rate `λⁿ · (infected neighborhood
/// fraction)` and otherwise stay susceptible; infected agents recover with
/// rate `γⁿ`; recovered agents stay recovered.
pub fn sir_probs(x: &SirState, rates: &AgentRates, network: &Network) -> SirProbs {
    let n = x.len();
    debug_assert_eq!(rates.n(), n);
    let probs = (0..n)
        .map(|agent| match x.agent(agent) {
            INFECTED => {
                let g = rates.gamma[agent];
                [0.0, 1.0 - g, g]
            }
            RECOVERED => [0.0, 0.0, 1.0],
            _ => {
                let (hits, deg) = match network {
                    Network::Complete { include_self, n: total } => {
                        let deg = if *include_self { *total } else { *total - 1 };
                        (x.infected_count(), deg)
                    }
                    Network::Sparse { neighbors } => {
                        let list = &neighbors[agent];
                        let hits = list.iter().filter(|&&m| x.infected.get(m as usize)).count();
                        (hits, list.len())
                    }
                };
                let p = rates.lambda[agent] * hits as f64 / deg as f64;
                [1.0 - p, p, 0.0]
            }
        })
        .collect();
    SirProbs { probs }
}

/// Homogenised transition probabilities: global infected fraction
/// `I(x)/N` and mean rates `λ̄, γ̄`.
pub fn sir_coarse_probs(x: &SirState, rates: &AgentRates) -> SirProbs {
    let n = x.len();
    let frac = x.infected_count() as f64 / n as f64;
    let p_inf = rates.lambda_bar * frac;
    let probs = (0..n)
        .map(|agent| match x.agent(agent) {
            INFECTED => [0.0, 1.0 - rates.gamma_bar, rates.gamma_bar],
            RECOVERED => [0.0, 0.0, 1.0],
            _ => [1.0 - p_inf, p_inf, 0.0],
        })
        .collect();
    SirProbs { probs }
}

/// A simulated SIR path with observed counts.
#[derive(Clone, Debug)]
pub struct SirTrajectory {
    pub states: Vec<SirState>,
    pub y: Vec<u64>,
}

/// Simulates `x_{0:T}` and `y_{0:T}`; initially each agent is infected
/// with probability `α₀ⁿ` and nobody has recovered.
pub fn sir_simulate<R: Rng + ?Sized>(
    rng: &mut R,
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    horizon: usize,
) -> SirTrajectory {
    let n = rates.n();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut y = Vec::with_capacity(horizon + 1);
    let init = crate::sis::sample_bernoulli_state(rng, &rates.alpha0);
    let mut x = SirState::from_infection_indicators(&init);
    for t in 0..=horizon {
        if t > 0 {
            let probs = sir_probs(&x, rates, network);
            let mut next = SirState::susceptible(n);
            for agent in 0..n {
                let [ps, pi, _] = probs.probs[agent];
                let u = rng.gen::<f64>();
                let phase = if u < pi {
                    INFECTED
                } else if u < pi + ps {
                    SUSCEPTIBLE
                } else {
                    RECOVERED
                };
                next.set_agent(agent, phase);
            }
            x = next;
        }
        let infected = x.infected_count() as u64;
        let obs = if infected == 0 {
            0
        } else {
            Binomial::new(infected, rho).expect("valid rho").sample(rng)
        };
        states.push(x.clone());
        y.push(obs);
    }
    SirTrajectory { states, y }
}

/// Deterministic phase reconstruction from infection indicators: given
/// who is infected at `t`, the previous state fixes everyone else
/// (susceptibles not infected stay susceptible; infected agents that do
/// not stay infected recover; recovery is absorbing).
pub fn reconstruct_next(prev: &SirState, infected: &PopulationState) -> SirState {
    debug_assert_eq!(prev.len(), infected.len());
    let mut next = SirState::susceptible(prev.len());
    for agent in 0..prev.len() {
        let phase = if infected.get(agent) {
            debug_assert_ne!(prev.agent(agent), RECOVERED, "recovered agents cannot reinfect");
            INFECTED
        } else if prev.agent(agent) == SUSCEPTIBLE {
            SUSCEPTIBLE
        } else {
            RECOVERED
        };
        next.set_agent(agent, phase);
    }
    next
}

/// Joint pmf over the summary `(s', i')` on the simplex `s' + i' ≤ n`.
#[derive(Clone, Debug)]
pub struct SummaryPmf {
    n: usize,
    masses: Vec<f64>,
}

impl SummaryPmf {
    fn zeros(n: usize) -> Self {
        Self { n, masses: vec![0.0; (n + 1) * (n + 1)] }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn mass(&self, s: usize, i: usize) -> f64 {
        if s > self.n || i > self.n {
            return 0.0;
        }
        self.masses[s * (self.n + 1) + i]
    }

    #[inline]
    fn add(&mut self, s: usize, i: usize, value: f64) {
        self.masses[s * (self.n + 1) + i] += value;
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Marginal over `i'` (the susceptible-count law).
    pub fn susceptible_marginal(&self) -> Vec<f64> {
        (0..=self.n)
            .map(|s| (0..=self.n).map(|i| self.mass(s, i)).sum())
            .collect()
    }
}

/// Exact one-step law of `(S, I)` from state `x`: survivors of the
/// susceptible pool are Poisson-Binomial in the per-agent escape
/// probabilities, and recoveries Poisson-Binomial in the infected agents'
/// `γⁿ`, independently.
pub fn sir_summary_transition_exact(
    x: &SirState,
    rates: &AgentRates,
    network: &Network,
) -> SummaryPmf {
    let probs = sir_probs(x, rates, network);
    let mut alpha_inf = Vec::with_capacity(x.susceptible_count());
    let mut stay_inf = Vec::with_capacity(x.infected_count());
    for agent in 0..x.len() {
        match x.agent(agent) {
            SUSCEPTIBLE => alpha_inf.push(probs.probs[agent][1]),
            INFECTED => stay_inf.push(probs.probs[agent][1]),
            _ => {}
        }
    }
    let s = alpha_inf.len();
    let pb_new = poibin_table(&ProbVector::new(alpha_inf).expect("probabilities")).pmf();
    let pb_stay = poibin_table(&ProbVector::new(stay_inf).expect("probabilities")).pmf();
    let mut out = SummaryPmf::zeros(x.len());
    for (k, &pk) in pb_new.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        for (m, &pm) in pb_stay.iter().enumerate() {
            if pm == 0.0 {
                continue;
            }
            out.add(s - k, k + m, pk * pm);
        }
    }
    debug_assert!((out.total() - 1.0).abs() < 1e-9);
    out
}

/// Homogenised one-step summary law from counts `(s, i)` in a population
/// of `n`: infections `Bin(s, λ̄ i/n)` and recoveries `Bin(i, γ̄)`.
pub fn sir_summary_transition_coarse(
    s: usize,
    i: usize,
    n: usize,
    lambda_bar: f64,
    gamma_bar: f64,
) -> SummaryPmf {
    debug_assert!(s + i <= n);
    let lf = crate::numeric::LogFactorial::new(s.max(i));
    let p_inf = lambda_bar * i as f64 / n as f64;
    let mut out = SummaryPmf::zeros(n);
    for k in 0..=s {
        let pk = lf.ln_binom_pmf(k, s, p_inf).exp();
        if pk == 0.0 {
            continue;
        }
        for r in 0..=i {
            let pr = lf.ln_binom_pmf(r, i, gamma_bar).exp();
            if pr == 0.0 {
                continue;
            }
            out.add(s - k, i - r + k, pk * pr);
        }
    }
    out
}
