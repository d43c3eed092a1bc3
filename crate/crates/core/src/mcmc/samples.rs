//! Multi-chain draws and their on-disk layout.
//!
//! A samples directory holds `meta.json` plus one CSV per non-empty block
//! with columns `chain,draw,<labels...>`. Rows are written in chain-major,
//! draw-minor order so chains can be appended one after another.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SamplerConfig;
use crate::error::{Error, Result};
use crate::model::{ModelContext, ModelSpec, ParameterState, BLOCK_NAMES};

pub const SAMPLES_SCHEMA: &str = "nowcast-samples/1";
pub const META_FILE: &str = "meta.json";
const LATENT_Y: &str = "latent_y";
const LATENT_X: &str = "latent_x";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub initial_log_posterior: f64,
    pub final_log_posterior: f64,
    /// Post-burn-in acceptance rate per kernel group.
    pub acceptance: BTreeMap<String, f64>,
    /// Every proposal scale at the end of burn-in and at the last iteration.
    #[serde(skip)]
    pub scales_after_burn_in: Vec<f64>,
    #[serde(skip)]
    pub scales_at_end: Vec<f64>,
}

/// Kept draws of one chain. Continuous blocks are row-major
/// `kept × block width`; latent blocks likewise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub blocks: Vec<Vec<f64>>,
    pub latent_y: Vec<u64>,
    pub latent_x: Vec<u64>,
    pub log_posterior: Vec<f64>,
    pub stats: ChainStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub block_labels: Vec<Vec<String>>,
    pub latent_y_labels: Vec<String>,
    pub latent_x_labels: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    schema: String,
    spec: ModelSpec,
    config: SamplerConfig,
    n_chains: usize,
    n_kept: usize,
    blocks: Vec<BlockMeta>,
    chain_stats: Vec<ChainStats>,
}

#[derive(Serialize, Deserialize)]
struct BlockMeta {
    name: String,
    file: Option<String>,
    labels: Vec<String>,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_kept(&self) -> usize {
        self.chains.first().map_or(0, |c| c.log_posterior.len())
    }

    pub fn n_draws(&self) -> usize {
        self.n_chains() * self.n_kept()
    }

    /// Block index and column of a continuous label, e.g. `"phi[3]"`.
    pub fn locate(&self, label: &str) -> Option<(usize, usize)> {
        self.block_labels
            .iter()
            .enumerate()
            .find_map(|(b, ls)| ls.iter().position(|l| l == label).map(|j| (b, j)))
    }

    /// Draws of one continuous parameter, per chain.
    pub fn column(&self, label: &str) -> Option<Vec<Vec<f64>>> {
        let (b, j) = self.locate(label)?;
        let w = self.block_labels[b].len();
        Some(
            self.chains
                .iter()
                .map(|c| c.blocks[b].chunks(w).map(|row| row[j]).collect())
                .collect(),
        )
    }

    /// Draws of one latent total (label `y[t]`) or true count (`x[t]`), per chain.
    pub fn latent_column(&self, label: &str) -> Option<Vec<Vec<u64>>> {
        let is_y = self.latent_y_labels.iter().any(|l| l == label);
        let labels = if is_y { &self.latent_y_labels } else { &self.latent_x_labels };
        let j = labels.iter().position(|l| l == label)?;
        let w = labels.len();
        Some(
            self.chains
                .iter()
                .map(|c| {
                    let data = if is_y { &c.latent_y } else { &c.latent_x };
                    data.chunks(w).map(|r| r[j]).collect()
                })
                .collect(),
        )
    }

    /// The full parameter state of one kept draw.
    pub fn state(&self, ctx: &ModelContext, chain: usize, draw: usize) -> Result<ParameterState> {
        let c = self
            .chains
            .get(chain)
            .ok_or_else(|| Error::Domain(format!("no chain {chain}")))?;
        if draw >= self.n_kept() {
            return Err(Error::Domain(format!("no draw {draw}")));
        }
        let blocks: Vec<&[f64]> = c
            .blocks
            .iter()
            .zip(&self.block_labels)
            .map(|(b, l)| &b[draw * l.len()..(draw + 1) * l.len()])
            .collect();
        let wy = self.latent_y_labels.len();
        let wx = self.latent_x_labels.len();
        ParameterState::from_blocks(
            ctx,
            &blocks,
            &c.latent_y[draw * wy..(draw + 1) * wy],
            &c.latent_x[draw * wx..(draw + 1) * wx],
        )
    }

    /// All kept states in chain-major order.
    pub fn states<'a>(
        &'a self,
        ctx: &'a ModelContext,
    ) -> impl Iterator<Item = Result<ParameterState>> + 'a {
        (0..self.n_chains())
            .flat_map(move |c| (0..self.n_kept()).map(move |d| self.state(ctx, c, d)))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blocks = Vec::new();
        for (b, name) in BLOCK_NAMES.iter().enumerate() {
            let labels = &self.block_labels[b];
            let file = (!labels.is_empty()).then(|| format!("{name}.csv"));
            if let Some(f) = &file {
                write_block(&dir.join(f), labels, self.chains.iter().map(|c| &c.blocks[b][..]))?;
            }
            blocks.push(BlockMeta {
                name: name.to_string(),
                file,
                labels: labels.clone(),
            });
        }
        for (name, labels, pick) in [
            (LATENT_Y, &self.latent_y_labels, (|c: &ChainDraws| &c.latent_y[..]) as fn(&ChainDraws) -> &[u64]),
            (LATENT_X, &self.latent_x_labels, |c: &ChainDraws| &c.latent_x[..]),
        ] {
            let file = (!labels.is_empty()).then(|| format!("{name}.csv"));
            if let Some(f) = &file {
                write_block(&dir.join(f), labels, self.chains.iter().map(pick))?;
            }
            blocks.push(BlockMeta {
                name: name.to_string(),
                file,
                labels: labels.clone(),
            });
        }
        write_block(
            &dir.join("log_posterior.csv"),
            &["log_posterior".to_string()],
            self.chains.iter().map(|c| &c.log_posterior[..]),
        )?;
        let meta = Meta {
            schema: SAMPLES_SCHEMA.to_string(),
            spec: self.spec.clone(),
            config: self.config.clone(),
            n_chains: self.n_chains(),
            n_kept: self.n_kept(),
            blocks,
            chain_stats: self.chains.iter().map(|c| c.stats.clone()).collect(),
        };
        let path = dir.join(META_FILE);
        let text = serde_json::to_string_pretty(&meta)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Meta = serde_json::from_str(&text)?;
        if meta.schema != SAMPLES_SCHEMA {
            return Err(Error::Config(format!(
                "{}: schema '{}' is not '{SAMPLES_SCHEMA}'",
                path.display(),
                meta.schema
            )));
        }
        let (m, n) = (meta.n_chains, meta.n_kept);
        let mut chains: Vec<ChainDraws> = meta
            .chain_stats
            .iter()
            .map(|st| ChainDraws {
                blocks: Vec::new(),
                latent_y: Vec::new(),
                latent_x: Vec::new(),
                log_posterior: Vec::new(),
                stats: st.clone(),
            })
            .collect();
        if chains.len() != m {
            return Err(Error::Config("chain statistics do not match the chain count".into()));
        }
        let mut block_labels = Vec::new();
        let mut latent_y_labels = Vec::new();
        let mut latent_x_labels = Vec::new();
        for bm in &meta.blocks {
            let w = bm.labels.len();
            let data: Vec<Vec<String>> = match &bm.file {
                Some(f) => read_block(&dir.join(f), &bm.labels, m, n)?,
                None => vec![Vec::new(); m],
            };
            match bm.name.as_str() {
                LATENT_Y | LATENT_X => {
                    for (c, cells) in chains.iter_mut().zip(data) {
                        let v = cells
                            .iter()
                            .map(|s| s.parse::<u64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| Error::Config(format!("{}: {e}", bm.name)))?;
                        if bm.name == LATENT_Y {
                            c.latent_y = v;
                        } else {
                            c.latent_x = v;
                        }
                    }
                    if bm.name == LATENT_Y {
                        latent_y_labels = bm.labels.clone();
                    } else {
                        latent_x_labels = bm.labels.clone();
                    }
                }
                _ => {
                    for (c, cells) in chains.iter_mut().zip(data) {
                        c.blocks.push(parse_floats(&cells, &bm.name)?);
                    }
                    block_labels.push(bm.labels.clone());
                }
            }
            debug_assert!(w == bm.labels.len());
        }
        if block_labels.len() != BLOCK_NAMES.len() {
            return Err(Error::Config("samples directory lacks some parameter blocks".into()));
        }
        let lp = read_block(&dir.join("log_posterior.csv"), &["log_posterior".to_string()], m, n)?;
        for (c, cells) in chains.iter_mut().zip(lp) {
            c.log_posterior = parse_floats(&cells, "log_posterior")?;
        }
        Ok(Self {
            spec: meta.spec,
            config: meta.config,
            block_labels,
            latent_y_labels,
            latent_x_labels,
            chains,
        })
    }
}

fn parse_floats(cells: &[String], name: &str) -> Result<Vec<f64>> {
    cells
        .iter()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn write_block<'a, T: std::fmt::Display + Copy>(
    path: &Path,
    labels: &[String],
    chains: impl Iterator<Item = &'a [T]>,
) -> Result<()>
where
    T: 'a,
{
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    write!(w, "chain,draw").map_err(io)?;
    for l in labels {
        // labels contain commas, so they are quoted
        write!(w, ",\"{l}\"").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let width = labels.len();
    for (c, data) in chains.enumerate() {
        for (d, row) in data.chunks(width).enumerate() {
            write!(w, "{},{}", c + 1, d + 1).map_err(io)?;
            for v in row {
                write!(w, ",{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Cells of a block file as strings, per chain, row-major.
fn read_block(path: &Path, labels: &[String], m: usize, n: usize) -> Result<Vec<Vec<String>>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let header = rdr.headers()?.clone();
    if header.len() != labels.len() + 2 || header.iter().skip(2).zip(labels).any(|(a, b)| a != b) {
        return Err(Error::Config(format!("{}: header does not match meta.json", path.display())));
    }
    let mut out = vec![Vec::with_capacity(n * labels.len()); m];
    let mut counts = vec![0usize; m];
    for rec in rdr.records() {
        let rec = rec?;
        let chain: usize = rec[0]
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad chain index", path.display())))?;
        if chain == 0 || chain > m {
            return Err(Error::Config(format!("{}: chain {chain} out of range", path.display())));
        }
        counts[chain - 1] += 1;
        out[chain - 1].extend(rec.iter().skip(2).map(str::to_string));
    }
    if counts.iter().any(|&c| c != n) {
        return Err(Error::Config(format!(
            "{}: expected {n} draws in each of {m} chains",
            path.display()
        )));
    }
    Ok(out)
}
