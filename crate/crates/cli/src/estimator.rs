//! Likelihood-estimator dispatch shared by the MCMC and prediction
//! commands: one call evaluates the configured filter (or the exact
//! forward algorithm) at a parameter value.

use anyhow::bail;

use epismc::model::{agent_rates, AgentRates, Covariates, ModelKind, ModelParams, Network};
use epismc::oracle::{forward_filter_sir, forward_filter_sis, MAX_EXACT_SIR, MAX_EXACT_SIS};
use epismc::smc::{
    bif_sir, bif_sis, bif_sis_clustered, run_apf_sir, run_apf_sis, run_bpf_sir, run_bpf_sis,
    run_csmc_sir, run_csmc_sis, FilterOutput, PmfMode, SisTwist,
};

use crate::config::{EstimatorKind, TwistKind};

/// A fully resolved likelihood estimator; `estimate` is the closure body
/// handed to the MCMC kernels.
pub struct Estimator<'a> {
    pub kind: ModelKind,
    pub covariates: &'a Covariates,
    pub network: &'a Network,
    pub y: &'a [u64],
    pub method: EstimatorKind,
    pub particles: usize,
    pub mode: PmfMode,
    pub twist: TwistKind,
    pub clusters: Option<&'a [u32]>,
}

/// Attaches the cluster assignment (when the twist needs one) and builds
/// the SIS twisting table for the current rates.
pub fn build_sis_twist(
    y: &[u64],
    rates: AgentRates,
    rho: f64,
    mode: PmfMode,
    twist: TwistKind,
    clusters: Option<&[u32]>,
) -> epismc::Result<(AgentRates, SisTwist)> {
    match twist {
        TwistKind::Count => {
            let table = bif_sis(y, &rates, rho, mode)?;
            Ok((rates, SisTwist::Count(table)))
        }
        TwistKind::Clustered => {
            let assignment = clusters
                .ok_or_else(|| {
                    epismc::Error::InvalidArgument(
                        "the clustered twist needs a cluster assignment".into(),
                    )
                })?
                .to_vec();
            let rates = rates.with_clusters(assignment)?;
            let table = bif_sis_clustered(y, &rates, rho, mode)?;
            Ok((rates, SisTwist::Clustered(table)))
        }
    }
}

fn finished<S>(out: FilterOutput<S>) -> f64 {
    if out.system.collapsed {
        f64::NEG_INFINITY
    } else {
        out.log_likelihood
    }
}

impl Estimator<'_> {
    /// Rejects configurations that could only fail at every evaluation.
    pub fn validate(&self) -> anyhow::Result<()> {
        let n = self.covariates.n();
        if self.method == EstimatorKind::Exact {
            let limit = match self.kind {
                ModelKind::Sis => MAX_EXACT_SIS,
                ModelKind::Sir => MAX_EXACT_SIR,
            };
            if n > limit {
                bail!("the exact likelihood supports N <= {limit} for this model, got {n}");
            }
        } else if self.particles == 0 {
            bail!("particle count must be positive");
        }
        if self.twist == TwistKind::Clustered {
            if self.method != EstimatorKind::Csmc {
                bail!("the clustered twist applies to the csmc estimator only");
            }
            if self.kind == ModelKind::Sir {
                bail!("the clustered twist is available for the SIS model only");
            }
            match self.clusters {
                None => bail!("the clustered twist needs a `clusters` assignment"),
                Some(assignment) if assignment.len() != n => bail!(
                    "cluster assignment covers {} agents, the model has {n}",
                    assignment.len()
                ),
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Log-likelihood estimate at `theta`; `-inf` on collapse or any
    /// evaluation error, which a pseudo-marginal chain always rejects.
    pub fn estimate(&self, theta: &ModelParams, seed: u64) -> f64 {
        self.try_estimate(theta, seed).unwrap_or(f64::NEG_INFINITY)
    }

    fn try_estimate(&self, theta: &ModelParams, seed: u64) -> epismc::Result<f64> {
        let rates = agent_rates(theta, self.covariates)?;
        let rho = theta.rho;
        let (net, y, p) = (self.network, self.y, self.particles);
        match (self.kind, self.method) {
            (ModelKind::Sis, EstimatorKind::Exact) => {
                Ok(forward_filter_sis(&rates, net, rho, y)?.log_likelihood)
            }
            (ModelKind::Sir, EstimatorKind::Exact) => {
                Ok(forward_filter_sir(&rates, net, rho, y)?.log_likelihood)
            }
            (ModelKind::Sis, EstimatorKind::Bpf) => {
                Ok(finished(run_bpf_sis(&rates, net, rho, y, p, seed)?))
            }
            (ModelKind::Sir, EstimatorKind::Bpf) => {
                Ok(finished(run_bpf_sir(&rates, net, rho, y, p, seed)?))
            }
            (ModelKind::Sis, EstimatorKind::Apf) => {
                Ok(finished(run_apf_sis(&rates, net, rho, y, p, seed, self.mode)?))
            }
            (ModelKind::Sir, EstimatorKind::Apf) => {
                Ok(finished(run_apf_sir(&rates, net, rho, y, p, seed, self.mode)?))
            }
            (ModelKind::Sis, EstimatorKind::Csmc) => {
                let (rates, twist) =
                    build_sis_twist(y, rates, rho, self.mode, self.twist, self.clusters)?;
                Ok(finished(run_csmc_sis(&rates, net, rho, y, &twist, p, seed, self.mode)?))
            }
            (ModelKind::Sir, EstimatorKind::Csmc) => {
                let bif = bif_sir(y, &rates, rho)?;
                Ok(finished(run_csmc_sir(&rates, net, rho, y, &bif, p, seed)?))
            }
        }
    }
}
