//! CSV output helpers. Every numeric field goes through Rust's shortest
//! round-trip decimal formatting, so written values parse back exactly.

use std::path::Path;

use anyhow::Context;

use epismc::model::ModelParams;

pub struct Table {
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    pub fn create<S: AsRef<[u8]>>(path: &Path, header: &[S]) -> anyhow::Result<Self> {
        let file = std::fs::File::create(path)
            .with_context(|| format!("creating output file {}", path.display()))?;
        let mut table = Table { writer: csv::Writer::from_writer(file) };
        table.row(header)?;
        Ok(table)
    }

    pub fn row<I, S>(&mut self, record: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(record)?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation (`-inf` for minus infinity).
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Chain column names: the regression coordinates then `rho`.
pub fn theta_headers(d: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * d + 1);
    for j in 0..d {
        names.push(format!("beta0_{j}"));
    }
    for j in 0..d {
        names.push(format!("beta_lambda_{j}"));
    }
    for j in 0..d {
        names.push(format!("beta_gamma_{j}"));
    }
    names.push("rho".into());
    names
}

/// Chain column values on the natural scale, matching [`theta_headers`].
pub fn theta_fields(theta: &ModelParams) -> Vec<String> {
    theta
        .beta0
        .iter()
        .chain(&theta.beta_lambda)
        .chain(&theta.beta_gamma)
        .chain(std::iter::once(&theta.rho))
        .map(|&v| num(v))
        .collect()
}
