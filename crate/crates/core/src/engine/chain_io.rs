//! Chain persistence: one CSV per parameter block plus `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Acceptance, ChainOutput, FitConfig};
use crate::conditionals::{ModelState, Sym2};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    version: String,
    seed: u64,
    config_hash: String,
    n_draws: usize,
    time_scale: f64,
    covariate_names: Vec<String>,
    subject_ids: Vec<String>,
    acceptance: Acceptance,
    config: FitConfig,
}

/// SHA-256 of the canonical JSON form of a config, hex encoded.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(dir.join(name))?)
}

fn write_rows<F>(dir: &Path, name: &str, header: Vec<String>, chain: &ChainOutput, row: F) -> Result<()>
where
    F: Fn(&ModelState, usize) -> Vec<f64>,
{
    let mut w = writer(dir, name)?;
    let mut h = vec!["iter".to_string()];
    h.extend(header);
    w.write_record(&h)?;
    for (b, s) in chain.draws.iter().enumerate() {
        let mut rec = vec![chain.iterations[b].to_string()];
        rec.extend(row(s, b).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a chain into `dir`, creating it if needed.
pub fn write_chain(dir: &Path, chain: &ChainOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let names = &chain.covariate_names;
    write_rows(dir, "gamma.csv", names.clone(), chain, |s, _| s.gamma.clone())?;
    write_rows(dir, "beta.csv", names.clone(), chain, |s, _| s.beta.clone())?;
    let z_header = chain
        .subject_ids
        .iter()
        .flat_map(|id| [format!("obs:{id}"), format!("event:{id}")])
        .collect();
    write_rows(dir, "z.csv", z_header, chain, |s, _| s.z.iter().flat_map(|z| *z).collect())?;
    let dh = vec!["D11".into(), "D12".into(), "D22".into()];
    write_rows(dir, "D.csv", dh, chain, |s, _| vec![s.d.d11, s.d.d12, s.d.d22])?;
    let l = chain.config.grid_cells;
    let gh: Vec<String> = (1..=l).map(|i| format!("g_{i}")).collect();
    write_rows(dir, "g1.csv", gh.clone(), chain, |s, _| s.g1.clone())?;
    write_rows(dir, "g2.csv", gh, chain, |s, _| s.g2.clone())?;
    let hh = ["gamma0", "beta0", "sigma2_1", "sigma2_2", "theta_1", "theta_2", "deviance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_rows(dir, "hyper.csv", hh, chain, |s, b| {
        vec![
            s.gamma0,
            s.beta0,
            s.sigma2[0],
            s.sigma2[1],
            s.theta[0],
            s.theta[1],
            chain.deviance[b],
        ]
    })?;
    let meta = Meta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: chain.seed,
        config_hash: config_hash(&chain.config),
        n_draws: chain.n_draws(),
        time_scale: chain.time_scale,
        covariate_names: chain.covariate_names.clone(),
        subject_ids: chain.subject_ids.clone(),
        acceptance: chain.acceptance,
        config: chain.config.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Writes one chain directly into `dir`, or several into `dir/chain_<k>`.
pub fn write_chains(dir: &Path, chains: &[ChainOutput]) -> Result<()> {
    if chains.len() == 1 {
        return write_chain(dir, &chains[0]);
    }
    for (k, c) in chains.iter().enumerate() {
        write_chain(&dir.join(format!("chain_{}", k + 1)), c)?;
    }
    Ok(())
}

fn read_rows(dir: &Path, name: &str, width: usize) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let path = dir.join(name);
    let mut r = csv::Reader::from_path(&path)?;
    let mut iters = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width + 1 {
            return Err(Error::validation(format!(
                "{}: expected {} columns, found {}",
                path.display(),
                width + 1,
                rec.len()
            )));
        }
        let bad = |f: &str| Error::validation(format!("{}: unparsable value '{f}'", path.display()));
        iters.push(rec[0].parse::<usize>().map_err(|_| bad(&rec[0]))?);
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|_| bad(f)))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok((iters, rows))
}

/// Reads a chain written by [`write_chain`].
pub fn read_chain(dir: &Path) -> Result<ChainOutput> {
    let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let p = meta.covariate_names.len();
    let n = meta.subject_ids.len();
    let l = meta.config.grid_cells;
    let (iterations, gamma) = read_rows(dir, "gamma.csv", p)?;
    let (_, beta) = read_rows(dir, "beta.csv", p)?;
    let (_, z) = read_rows(dir, "z.csv", 2 * n)?;
    let (_, d) = read_rows(dir, "D.csv", 3)?;
    let (_, g1) = read_rows(dir, "g1.csv", l)?;
    let (_, g2) = read_rows(dir, "g2.csv", l)?;
    let (_, hyper) = read_rows(dir, "hyper.csv", 7)?;
    let m = iterations.len();
    for (name, len) in [
        ("beta", beta.len()),
        ("z", z.len()),
        ("D", d.len()),
        ("g1", g1.len()),
        ("g2", g2.len()),
        ("hyper", hyper.len()),
    ] {
        if len != m {
            return Err(Error::validation(format!("{name}.csv has {len} rows, gamma.csv has {m}")));
        }
    }
    let mut draws = Vec::with_capacity(m);
    let mut deviance = Vec::with_capacity(m);
    for b in 0..m {
        let h = &hyper[b];
        draws.push(ModelState {
            gamma: gamma[b].clone(),
            beta: beta[b].clone(),
            gamma0: h[0],
            beta0: h[1],
            z: z[b].chunks(2).map(|c| [c[0], c[1]]).collect(),
            d: Sym2::new(d[b][0], d[b][1], d[b][2]),
            g1: g1[b].clone(),
            g2: g2[b].clone(),
            sigma2: [h[2], h[3]],
            theta: [h[4], h[5]],
        });
        deviance.push(h[6]);
    }
    Ok(ChainOutput {
        draws,
        deviance,
        iterations,
        acceptance: meta.acceptance,
        runtime_secs: 0.0,
        seed: meta.seed,
        config: meta.config,
        time_scale: meta.time_scale,
        covariate_names: meta.covariate_names,
        subject_ids: meta.subject_ids,
    })
}

/// Reads a single chain directory or every `chain_<k>` subdirectory.
pub fn read_chains(dir: &Path) -> Result<Vec<ChainOutput>> {
    if !dir.is_dir() {
        return Err(Error::validation(format!("chain directory {} does not exist", dir.display())));
    }
    if dir.join("meta.json").exists() {
        return Ok(vec![read_chain(dir)?]);
    }
    let mut subdirs: Vec<(usize, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            name.strip_prefix("chain_")
                .and_then(|k| k.parse::<usize>().ok())
                .map(|k| (k, e.path()))
        })
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::validation(format!("no chain found in {}", dir.display())));
    }
    subdirs.iter().map(|(_, p)| read_chain(p)).collect()
}
