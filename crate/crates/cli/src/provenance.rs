//! Config hash, seed and version stamped on every artifact.

use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::Settings;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Without leading comment marker.
    pub fn line(&self) -> String {
        format!("nopcode {} config={} seed={}", self.tool_version, self.config_hash, self.seed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Settings that change results. Output location, thread count, memory
/// budget and shard size are excluded: they never change an artifact.
#[derive(Serialize)]
struct Semantic<'a> {
    n: &'a [usize],
    modes: Vec<&'static str>,
    task: &'static str,
    ig_threshold: f64,
    select_top: Option<usize>,
    top_k: usize,
    no_select: bool,
    discretizer: String,
    classifiers: Vec<String>,
    k_folds: usize,
    seed: u64,
    paper_protocol: bool,
    inputs: &'a [(String, String)],
}

/// `inputs` are `(role, content digest)` pairs for the files the command reads.
pub fn provenance(settings: &Settings, classifiers: &[String], inputs: &[(String, String)]) -> Provenance {
    let semantic = Semantic {
        n: &settings.n.0,
        modes: settings.mode.modes().iter().map(|m| m.as_str()).collect(),
        task: settings.task.as_str(),
        ig_threshold: settings.ig_threshold,
        select_top: settings.select_top,
        top_k: settings.top_k,
        no_select: settings.no_select,
        discretizer: settings.discretizer.to_string(),
        classifiers: classifiers.to_vec(),
        k_folds: settings.k_folds,
        seed: settings.seed,
        paper_protocol: settings.paper_protocol,
        inputs,
    };
    let json = serde_json::to_vec(&semantic).expect("settings serialize");
    Provenance {
        tool_version: TOOL_VERSION,
        config_hash: sha256_hex(&json)[..16].to_string(),
        seed: settings.seed,
    }
}
