//! Chain post-processing and persistence.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dram::ChainEnsemble;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub burn: usize,
    pub thin: usize,
    pub source: String,
    /// Stored state with the largest log-posterior across the whole ensemble.
    pub map_point: Vec<f64>,
    pub map_log_posterior: f64,
}

/// Provenance written next to the sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Provenance {
    names: Vec<String>,
    count: usize,
    burn: usize,
    thin: usize,
    source: String,
    map_point: Vec<f64>,
    map_log_posterior: f64,
}

impl PosteriorSamples {
    /// Wraps externally produced samples; the MAP is the sample with the
    /// largest supplied log-posterior.
    pub fn from_samples(names: Vec<String>, samples: Vec<Vec<f64>>, log_posterior: Vec<f64>, source: &str) -> Result<Self> {
        ensure!(!samples.is_empty(), "posterior sample set is empty");
        ensure!(samples.len() == log_posterior.len(), "sample and log-posterior counts differ");
        ensure!(
            samples.iter().all(|s| s.len() == names.len()),
            "every sample must have {} coordinates",
            names.len()
        );
        let best = argmax(&log_posterior);
        Ok(PosteriorSamples {
            map_point: samples[best].clone(),
            map_log_posterior: log_posterior[best],
            names,
            samples,
            log_posterior,
            burn: 0,
            thin: 1,
            source: source.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("posterior has no parameter '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index_of(name)?;
        Ok(self.samples.iter().map(|s| s[j]).collect())
    }

    /// Projects every sample (and the MAP point) onto `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let idx: Vec<usize> = names.iter().map(|n| self.index_of(n)).collect::<Result<_>>()?;
        Ok(self.samples.iter().map(|s| idx.iter().map(|&j| s[j]).collect()).collect())
    }

    pub fn select_map(&self, names: &[String]) -> Result<Vec<f64>> {
        names.iter().map(|n| Ok(self.map_point[self.index_of(n)?])).collect()
    }

    /// Writes `<stem>.csv` (parameters + log_posterior) and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        write_table(&csv_path, &self.names, self.samples.iter().map(Vec::as_slice), &self.log_posterior)?;
        let prov = Provenance {
            names: self.names.clone(),
            count: self.len(),
            burn: self.burn,
            thin: self.thin,
            source: self.source.clone(),
            map_point: self.map_point.clone(),
            map_log_posterior: self.map_log_posterior,
        };
        write_json(&dir.join(format!("{stem}.json")), &prov)
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let json_path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let prov: Provenance = serde_json::from_str(&text)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let (header, rows) = read_numeric_csv(&csv_path)?;
        let mut expected = prov.names.clone();
        expected.push("log_posterior".into());
        if header != expected {
            return Err(Error::Parse {
                path: csv_path,
                row: 1,
                column: 1,
                message: format!("header {header:?} does not match provenance names {expected:?}"),
            });
        }
        let d = prov.names.len();
        let mut samples = Vec::with_capacity(rows.len());
        let mut log_posterior = Vec::with_capacity(rows.len());
        for mut r in rows {
            log_posterior.push(r[d]);
            r.truncate(d);
            samples.push(r);
        }
        ensure!(samples.len() == prov.count, "provenance count {} but {} rows", prov.count, samples.len());
        Ok(PosteriorSamples {
            names: prov.names,
            samples,
            log_posterior,
            burn: prov.burn,
            thin: prov.thin,
            source: prov.source,
            map_point: prov.map_point,
            map_log_posterior: prov.map_log_posterior,
        })
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Keeps states `burn, burn + thin, ...` of every chain and pools them in
/// chain order. Each chain contributes `floor((n - burn) / thin)` states.
pub fn clean_chains(ens: &ChainEnsemble, burn: usize, thin: usize) -> Result<PosteriorSamples> {
    ensure!(thin >= 1, "thinning stride must be at least 1");
    ensure!(!ens.chains.is_empty(), "ensemble has no chains");
    let n = ens.n_samples();
    ensure!(burn < n, "burn-in {burn} must be smaller than the chain length {n}");
    ensure!(ens.chains.iter().all(|c| c.len() == n), "chains have unequal lengths");
    let per_chain = (n - burn) / thin;
    ensure!(per_chain > 0, "burn-in {burn} and stride {thin} leave no samples from chains of length {n}");

    let dim = ens.dim();
    let mut samples = Vec::with_capacity(per_chain * ens.chains.len());
    let mut log_posterior = Vec::with_capacity(per_chain * ens.chains.len());
    let mut map = (0usize, 0usize);
    let mut map_lp = f64::NEG_INFINITY;
    for (c, chain) in ens.chains.iter().enumerate() {
        ensure!(chain.dim == dim, "chain {c} has dimension {} instead of {dim}", chain.dim);
        for k in 0..per_chain {
            let i = burn + k * thin;
            samples.push(chain.state(i).to_vec());
            log_posterior.push(chain.log_posterior[i]);
        }
        let best = argmax(&chain.log_posterior);
        if chain.log_posterior[best] > map_lp || c == 0 {
            map_lp = chain.log_posterior[best];
            map = (c, best);
        }
    }
    Ok(PosteriorSamples {
        names: ens.param_names.clone(),
        samples,
        log_posterior,
        burn,
        thin,
        source: ens.id(),
        map_point: ens.chains[map.0].state(map.1).to_vec(),
        map_log_posterior: map_lp,
    })
}

#[derive(Serialize)]
struct EnsembleManifest<'a> {
    id: String,
    param_names: &'a [String],
    n_chains: usize,
    n_samples: usize,
    seeds: Vec<u64>,
    acceptance_rates: Vec<f64>,
    warnings: Vec<Vec<String>>,
    config: &'a super::dram::EnsembleConfig,
}

/// Writes `chain_<k>.csv` per chain and `chains.json`.
pub fn write_ensemble(ens: &ChainEnsemble, dir: &Path) -> Result<()> {
    for (k, chain) in ens.chains.iter().enumerate() {
        let path = dir.join(format!("chain_{k}.csv"));
        let rows = (0..chain.len()).map(|i| chain.state(i));
        write_table(&path, &ens.param_names, rows, &chain.log_posterior)?;
    }
    let manifest = EnsembleManifest {
        id: ens.id(),
        param_names: &ens.param_names,
        n_chains: ens.chains.len(),
        n_samples: ens.n_samples(),
        seeds: ens.chains.iter().map(|c| c.seed).collect(),
        acceptance_rates: ens.acceptance_rates(),
        warnings: ens.chains.iter().map(|c| c.warnings.clone()).collect(),
        config: &ens.config,
    };
    write_json(&dir.join("chains.json"), &manifest)
}

fn write_table<'a>(
    path: &Path,
    names: &[String],
    rows: impl Iterator<Item = &'a [f64]>,
    log_posterior: &[f64],
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{},log_posterior", names.join(",")).map_err(io)?;
    for (row, lp) in rows.zip(log_posterior) {
        for v in row {
            write!(out, "{v},").map_err(io)?;
        }
        writeln!(out, "{lp}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a CSV with a header row and numeric cells. Error rows count data
/// rows from 1, excluding the header.
pub(crate) fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row: r + 1,
                    column: c + 1,
                    message: format!("'{cell}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (row, column) = match e.position() {
        Some(p) => (p.line() as usize, 0),
        None => (0, 0),
    };
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message: format!("{kind:?}"),
        },
    }
}
