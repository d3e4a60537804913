//! `filter`: replicate particle-filter runs with per-step diagnostics,
//! reporting the spread of the likelihood estimates.

use std::path::Path;
use std::time::Instant;

use anyhow::bail;
use rayon::prelude::*;

use epismc::model::{ModelKind, ModelSpec};
use epismc::smc::{
    bif_sir, run_apf_sir, run_apf_sis, run_bpf_sir, run_bpf_sis, run_csmc_sir, run_csmc_sis,
    BifSir, FilterOutput, SisTwist,
};
use epismc::streams::derive_seed;

use crate::config::{DataDocument, FilterConfig, FilterMethod, TwistKind};
use crate::csvout::{num, Table};
use crate::estimator::build_sis_twist;

struct RepRecord {
    log_likelihood: f64,
    ess: Vec<f64>,
    log_step_factors: Vec<f64>,
    collapsed: bool,
    collapse_time: Option<usize>,
    wall_seconds: f64,
}

fn record<S>(out: FilterOutput<S>, wall_seconds: f64) -> RepRecord {
    RepRecord {
        log_likelihood: out.log_likelihood,
        ess: out.system.ess,
        log_step_factors: out.system.log_step_factors,
        collapsed: out.system.collapsed,
        collapse_time: out.system.collapse_time,
        wall_seconds,
    }
}

pub fn run(config: &FilterConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    if config.reps == 0 {
        bail!("reps must be positive");
    }
    let spec = ModelSpec::load(&config.model)?;
    let data = DataDocument::load(&config.data)?;
    let mut y = data.y;
    if let Some(perturb) = &config.perturb {
        perturb.apply(&mut y, spec.n())?;
    }
    if config.twist == TwistKind::Clustered && config.method != FilterMethod::Csmc {
        bail!("the clustered twist applies to the csmc method only");
    }
    let rates = spec.rates()?;
    let rho = spec.theta.rho;

    // The controlled filters' twisting tables depend only on (y, rates, ρ),
    // so they are built once and shared across replicates.
    let (rates, sis_twist, sir_bif): (_, Option<SisTwist>, Option<BifSir>) =
        match (spec.kind, config.method) {
            (ModelKind::Sis, FilterMethod::Csmc) => {
                let (rates, twist) = build_sis_twist(
                    &y,
                    rates,
                    rho,
                    config.mode,
                    config.twist,
                    config.clusters.as_deref(),
                )?;
                (rates, Some(twist), None)
            }
            (ModelKind::Sir, FilterMethod::Csmc) => {
                if config.twist == TwistKind::Clustered {
                    bail!("the clustered twist is available for the SIS model only");
                }
                let bif = bif_sir(&y, &rates, rho)?;
                (rates, None, Some(bif))
            }
            _ => (rates, None, None),
        };

    let records: Vec<RepRecord> = (0..config.reps)
        .into_par_iter()
        .map(|rep| -> anyhow::Result<RepRecord> {
            let rep_seed = derive_seed(seed, "filter/rep", &[rep as u64]);
            let start = Instant::now();
            let rec = match (spec.kind, config.method) {
                (ModelKind::Sis, FilterMethod::Bpf) => {
                    let out = run_bpf_sis(&rates, &spec.network, rho, &y, config.particles, rep_seed)?;
                    record(out, start.elapsed().as_secs_f64())
                }
                (ModelKind::Sir, FilterMethod::Bpf) => {
                    let out = run_bpf_sir(&rates, &spec.network, rho, &y, config.particles, rep_seed)?;
                    record(out, start.elapsed().as_secs_f64())
                }
                (ModelKind::Sis, FilterMethod::Apf) => {
                    let out = run_apf_sis(
                        &rates,
                        &spec.network,
                        rho,
                        &y,
                        config.particles,
                        rep_seed,
                        config.mode,
                    )?;
                    record(out, start.elapsed().as_secs_f64())
                }
                (ModelKind::Sir, FilterMethod::Apf) => {
                    let out = run_apf_sir(
                        &rates,
                        &spec.network,
                        rho,
                        &y,
                        config.particles,
                        rep_seed,
                        config.mode,
                    )?;
                    record(out, start.elapsed().as_secs_f64())
                }
                (ModelKind::Sis, FilterMethod::Csmc) => {
                    let twist = sis_twist.as_ref().expect("built above");
                    let out = run_csmc_sis(
                        &rates,
                        &spec.network,
                        rho,
                        &y,
                        twist,
                        config.particles,
                        rep_seed,
                        config.mode,
                    )?;
                    record(out, start.elapsed().as_secs_f64())
                }
                (ModelKind::Sir, FilterMethod::Csmc) => {
                    let bif = sir_bif.as_ref().expect("built above");
                    let out = run_csmc_sir(
                        &rates,
                        &spec.network,
                        rho,
                        &y,
                        bif,
                        config.particles,
                        rep_seed,
                    )?;
                    record(out, start.elapsed().as_secs_f64())
                }
            };
            Ok(rec)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut table = Table::create(
        out,
        &[
            "rep",
            "t",
            "ess",
            "log_incremental_likelihood",
            "collapse_flag",
            "log_likelihood",
        ],
    )?;
    for (rep, rec) in records.iter().enumerate() {
        let total = num(rec.log_likelihood);
        for (t, (&ess, &step)) in rec.ess.iter().zip(&rec.log_step_factors).enumerate() {
            let flag = rec.collapsed && rec.collapse_time.is_none_or(|tc| t >= tc);
            table.row([
                rep.to_string(),
                t.to_string(),
                num(ess),
                num(step),
                u8::from(flag).to_string(),
                total.clone(),
            ])?;
        }
    }
    table.finish()?;

    let finite: Vec<f64> = records
        .iter()
        .filter(|r| r.log_likelihood.is_finite())
        .map(|r| r.log_likelihood)
        .collect();
    let collapsed = records.iter().filter(|r| r.collapsed).count();
    let mean_wall = records.iter().map(|r| r.wall_seconds).sum::<f64>() / records.len() as f64;
    println!(
        "{} P={} reps={}: {} finite estimates, {} collapsed",
        config.method.name(),
        config.particles,
        config.reps,
        finite.len(),
        collapsed
    );
    if !finite.is_empty() {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let variance = if finite.len() > 1 {
            finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (finite.len() - 1) as f64
        } else {
            f64::NAN
        };
        println!("mean log-likelihood estimate: {}", num(mean));
        println!("variance of log-likelihood estimates: {}", num(variance));
    }
    println!("mean wall time per replicate: {:.6} s", mean_wall);
    Ok(())
}
