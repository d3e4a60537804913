//! `surface`: controlled-filter log-likelihood estimates over a grid of
//! two parameter coordinates, shifted so the grid maximum sits at zero.

use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;

use epismc::model::{agent_rates, ModelKind, ModelParams, ModelSpec};
use epismc::smc::{bif_sir, run_csmc_sir, run_csmc_sis, PmfMode};
use epismc::streams::derive_seed;

use crate::config::{AxisConfig, DataDocument, SurfaceConfig, TwistKind};
use crate::csvout::{num, Table};
use crate::estimator::build_sis_twist;

/// One of the sweepable parameter coordinates.
#[derive(Clone, Copy)]
enum Coord {
    Beta0(usize),
    BetaLambda(usize),
    BetaGamma(usize),
    Rho,
}

impl Coord {
    fn parse(text: &str) -> anyhow::Result<Self> {
        if text == "rho" {
            return Ok(Coord::Rho);
        }
        let (name, rest) = text
            .split_once('[')
            .with_context(|| format!("coordinate {text:?} is not `rho` or `name[index]`"))?;
        let index: usize = rest
            .strip_suffix(']')
            .and_then(|ix| ix.parse().ok())
            .with_context(|| format!("coordinate {text:?} has no valid index"))?;
        match name {
            "beta0" => Ok(Coord::Beta0(index)),
            "beta_lambda" => Ok(Coord::BetaLambda(index)),
            "beta_gamma" => Ok(Coord::BetaGamma(index)),
            _ => bail!("unknown coordinate {name:?} (expected beta0 / beta_lambda / beta_gamma / rho)"),
        }
    }

    fn set(self, theta: &mut ModelParams, value: f64) {
        match self {
            Coord::Beta0(j) => theta.beta0[j] = value,
            Coord::BetaLambda(j) => theta.beta_lambda[j] = value,
            Coord::BetaGamma(j) => theta.beta_gamma[j] = value,
            Coord::Rho => theta.rho = value,
        }
    }

    fn validate(self, axis: &AxisConfig, d: usize) -> anyhow::Result<()> {
        let index = match self {
            Coord::Beta0(j) | Coord::BetaLambda(j) | Coord::BetaGamma(j) => j,
            Coord::Rho => {
                if !(axis.min > 0.0 && axis.max <= 1.0) {
                    bail!("rho axis must stay inside (0, 1]");
                }
                return Ok(());
            }
        };
        if index >= d {
            bail!("coordinate index {index} outside the model's dimension d = {d}");
        }
        Ok(())
    }
}

fn axis_values(axis: &AxisConfig) -> anyhow::Result<Vec<f64>> {
    if axis.steps == 0 {
        bail!("axis needs at least one step");
    }
    if !(axis.min <= axis.max) {
        bail!("axis range is empty or not finite");
    }
    if axis.steps == 1 {
        return Ok(vec![axis.min]);
    }
    let span = axis.max - axis.min;
    Ok((0..axis.steps)
        .map(|i| axis.min + span * i as f64 / (axis.steps - 1) as f64)
        .collect())
}

pub fn run(config: &SurfaceConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    let spec = ModelSpec::load(&config.model)?;
    let data = DataDocument::load(&config.data)?;
    let y = data.y;
    if spec.kind == ModelKind::Sir && config.mode == PmfMode::TransPoi {
        bail!("the SIR controlled filter always uses exact count tables");
    }
    if config.twist == TwistKind::Clustered && spec.kind == ModelKind::Sir {
        bail!("the clustered twist is available for the SIS model only");
    }
    let x_coord = Coord::parse(&config.x.coord)?;
    let y_coord = Coord::parse(&config.y.coord)?;
    x_coord.validate(&config.x, spec.d())?;
    y_coord.validate(&config.y, spec.d())?;
    let x_values = axis_values(&config.x)?;
    let y_values = axis_values(&config.y)?;

    let points: Vec<(usize, usize)> = (0..x_values.len())
        .flat_map(|i| (0..y_values.len()).map(move |j| (i, j)))
        .collect();
    let estimates: Vec<f64> = points
        .par_iter()
        .map(|&(i, j)| {
            let mut theta = spec.theta.clone();
            x_coord.set(&mut theta, x_values[i]);
            y_coord.set(&mut theta, y_values[j]);
            let point_seed = derive_seed(seed, "surface", &[i as u64, j as u64]);
            // A grid point that fails (infeasible twist, collapse) scores
            // -inf rather than aborting the sweep.
            evaluate(&spec, &config_view(config), &theta, &y, point_seed)
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();

    let max = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        bail!("every grid point failed; nothing to report");
    }

    let mut table = Table::create(
        out,
        &["x_value", "y_value", "log_likelihood", "log_likelihood_shifted"],
    )?;
    for (&(i, j), &value) in points.iter().zip(&estimates) {
        table.row([
            num(x_values[i]),
            num(y_values[j]),
            num(value),
            num(value - max),
        ])?;
    }
    table.finish()?;

    let best = estimates
        .iter()
        .position(|&v| v == max)
        .expect("a finite maximum exists");
    let (bi, bj) = points[best];
    println!(
        "evaluated {}x{} grid; maximum log-likelihood {} at {} = {}, {} = {}",
        x_values.len(),
        y_values.len(),
        num(max),
        config.x.coord,
        num(x_values[bi]),
        config.y.coord,
        num(y_values[bj]),
    );
    Ok(())
}

struct PointView<'a> {
    particles: usize,
    mode: PmfMode,
    twist: TwistKind,
    clusters: Option<&'a [u32]>,
}

fn config_view(config: &SurfaceConfig) -> PointView<'_> {
    PointView {
        particles: config.particles,
        mode: config.mode,
        twist: config.twist,
        clusters: config.clusters.as_deref(),
    }
}

fn evaluate(
    spec: &ModelSpec,
    view: &PointView<'_>,
    theta: &ModelParams,
    y: &[u64],
    seed: u64,
) -> epismc::Result<f64> {
    let rates = agent_rates(theta, &spec.covariates)?;
    let out = match spec.kind {
        ModelKind::Sis => {
            let (rates, twist) =
                build_sis_twist(y, rates, theta.rho, view.mode, view.twist, view.clusters)?;
            let out = run_csmc_sis(
                &rates,
                &spec.network,
                theta.rho,
                y,
                &twist,
                view.particles,
                seed,
                view.mode,
            )?;
            (out.log_likelihood, out.system.collapsed)
        }
        ModelKind::Sir => {
            let bif = bif_sir(y, &rates, theta.rho)?;
            let out = run_csmc_sir(
                &rates,
                &spec.network,
                theta.rho,
                y,
                &bif,
                view.particles,
                seed,
            )?;
            (out.log_likelihood, out.system.collapsed)
        }
    };
    Ok(if out.1 { f64::NEG_INFINITY } else { out.0 })
}
