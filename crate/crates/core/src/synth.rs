//! Synthetic corpora with planted class motifs.
//!
//! Every method is uniform noise over the defined opcodes. Each class owns
//! `motifs_per_class` random motifs of `motif_len` opcodes, distinct across
//! classes. An app carries its class motifs with probability `motif_rate`;
//! a carrying app gets `motif_copies` insertions, each a motif of its class
//! (cycled in order, so every motif appears when copies >= motifs) spliced
//! into a random method at a random position.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AppRecord, OpcodeSeq};
use crate::opcode::OpcodeTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: Vec<String>,
    pub apps_per_class: usize,
    pub methods_per_app: usize,
    pub min_method_len: usize,
    pub max_method_len: usize,
    pub motif_len: usize,
    pub motifs_per_class: usize,
    pub motif_copies: usize,
    pub motif_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: vec!["benign".into(), "malware".into()],
            apps_per_class: 100,
            methods_per_app: 8,
            min_method_len: 10,
            max_method_len: 60,
            motif_len: 3,
            motifs_per_class: 3,
            motif_copies: 3,
            motif_rate: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// `count` classes named `{prefix}{i}`.
    pub fn named_classes(prefix: &str, count: usize) -> Vec<String> {
        (0..count).map(|i| format!("{prefix}{i}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        let distinct: BTreeSet<&String> = self.classes.iter().collect();
        if self.classes.is_empty() || distinct.len() != self.classes.len() {
            return bad("classes must be non-empty and distinct");
        }
        if self.methods_per_app == 0 || self.min_method_len > self.max_method_len {
            return bad("need methods_per_app >= 1 and min_method_len <= max_method_len");
        }
        if self.motif_copies > 0 && self.motifs_per_class > 0 && self.motif_len == 0 {
            return bad("motif_len must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.motif_rate) {
            return bad("motif_rate must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Apps in generation order, labelled with their class.
    pub apps: Vec<AppRecord>,
    /// Motifs per class, in `classes` order.
    pub motifs: Vec<Vec<Vec<u8>>>,
}

fn app_id(class: &str, i: usize) -> String {
    format!("{class}_{i:04}")
}

pub fn generate(config: &SynthConfig, table: &OpcodeTable) -> Result<SynthCorpus> {
    config.validate()?;
    let alphabet: Vec<u8> = table.defined().iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut seen = BTreeSet::new();
    let mut motifs = Vec::with_capacity(config.classes.len());
    for _ in &config.classes {
        let mut own = Vec::with_capacity(config.motifs_per_class);
        while own.len() < config.motifs_per_class {
            let m: Vec<u8> = (0..config.motif_len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
            if seen.insert(m.clone()) {
                own.push(m);
            }
        }
        motifs.push(own);
    }

    let mut apps = Vec::with_capacity(config.classes.len() * config.apps_per_class);
    for (c, class) in config.classes.iter().enumerate() {
        for i in 0..config.apps_per_class {
            let mut methods: Vec<Vec<u8>> = (0..config.methods_per_app)
                .map(|_| {
                    let len = rng.gen_range(config.min_method_len..=config.max_method_len);
                    (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect()
                })
                .collect();
            let carries = rng.gen_bool(config.motif_rate);
            if carries && !motifs[c].is_empty() {
                // (start, len) of motifs already spliced into each method
                let mut planted: Vec<Vec<(usize, usize)>> = vec![Vec::new(); config.methods_per_app];
                for k in 0..config.motif_copies {
                    let motif = &motifs[c][k % motifs[c].len()];
                    let j = rng.gen_range(0..config.methods_per_app);
                    let target = &mut methods[j];
                    let free: Vec<usize> = (0..=target.len())
                        .filter(|&p| planted[j].iter().all(|&(s, l)| p <= s || p >= s + l))
                        .collect();
                    let at = *free.choose(&mut rng).unwrap();
                    target.splice(at..at, motif.iter().copied());
                    for (s, _) in planted[j].iter_mut() {
                        if *s >= at {
                            *s += motif.len();
                        }
                    }
                    planted[j].push((at, motif.len()));
                }
            }
            let seqs = methods
                .into_iter()
                .enumerate()
                .map(|(j, ops)| OpcodeSeq::new(format!("Lsynth/C{:03};", j / 4), format!("m{j}()V"), ops))
                .collect();
            apps.push(AppRecord::new(app_id(class, i), seqs)?.with_label(class.clone()));
        }
    }
    Ok(SynthCorpus { apps, motifs })
}

/// Smali text for one class, with directives, labels and dummy operands
/// around the instructions.
fn class_text(class_name: &str, methods: &[&OpcodeSeq], table: &OpcodeTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, ".class public {class_name}");
    let _ = writeln!(s, ".super Ljava/lang/Object;");
    let _ = writeln!(s, ".source \"Synth.java\"\n");
    for m in methods {
        let _ = writeln!(s, "# synthetic method");
        let _ = writeln!(s, ".method public {}", m.method_sig);
        let _ = writeln!(s, "    .registers 4\n");
        for (k, &op) in m.opcodes.iter().enumerate() {
            if k % 16 == 0 {
                let _ = writeln!(s, "    .line {}", k + 1);
                let _ = writeln!(s, "    :L{k}");
            }
            let _ = writeln!(s, "    {} v0, v1", table.mnemonic(op).expect("defined opcode"));
        }
        let _ = writeln!(s, ".end method\n");
    }
    s
}

/// Writes one directory per app under `root`, each a smali tree with one
/// file per class.
pub fn write_smali_tree(apps: &[AppRecord], root: &Path, table: &OpcodeTable) -> Result<()> {
    for app in apps {
        let dir = root.join(&app.app_id);
        let classes: BTreeSet<&str> = app.methods.iter().map(|m| m.class_name.as_str()).collect();
        for class in classes {
            let methods: Vec<&OpcodeSeq> = app.methods.iter().filter(|m| m.class_name == class).collect();
            let rel = class.trim_start_matches('L').trim_end_matches(';');
            let path = dir.join(format!("{rel}.smali"));
            let parent = path.parent().expect("class path has a parent");
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(class_text(class, &methods, table).as_bytes())
                .map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
