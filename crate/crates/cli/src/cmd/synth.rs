use std::io::Write;

use anyhow::Result;
use nopcode_core::fsutil::atomic_write;
use nopcode_core::ingest::write_opseq_with_header;
use nopcode_core::opcode::load_opcode_table;
use nopcode_core::synth::{generate, write_smali_tree, SynthConfig};

use crate::args::{Settings, SynthArgs};
use crate::pipeline::{Ctx, Needs};
use crate::provenance::sha256_hex;

pub fn run(settings: Settings, args: &SynthArgs) -> Result<()> {
    let classes = match args.families {
        Some(k) => SynthConfig::named_classes("family", k),
        None => args.classes.split(',').map(|s| s.trim().to_string()).collect(),
    };
    let config = SynthConfig {
        classes,
        apps_per_class: args.apps_per_class,
        methods_per_app: args.methods_per_app,
        min_method_len: args.min_method_len,
        max_method_len: args.max_method_len,
        motif_len: args.motif_len,
        motifs_per_class: args.motifs_per_class,
        motif_copies: args.motif_copies,
        motif_rate: args.motif_rate,
        seed: settings.seed,
    };
    let config_json = serde_json::to_string(&config)?;
    let ctx = Ctx::with_inputs(
        settings,
        Needs {
            opseq: false,
            labels: false,
        },
        vec![("synth".into(), sha256_hex(config_json.as_bytes()))],
    )?;
    let table = load_opcode_table();
    let corpus = generate(&config, table)?;
    let dir = &args.dir;
    if !args.no_smali {
        write_smali_tree(&corpus.apps, &dir.join("apps"), table)?;
    }
    let categorization = args.families.is_some();
    atomic_write(&dir.join("labels.csv"), |w| {
        if categorization {
            writeln!(w, "app_id,label,family")?;
        } else {
            writeln!(w, "app_id,label")?;
        }
        for app in &corpus.apps {
            let class = app.label.as_deref().expect("synthetic apps are labelled");
            if categorization {
                writeln!(w, "{},malware,{class}", app.app_id)?;
            } else {
                writeln!(w, "{},{class}", app.app_id)?;
            }
        }
        Ok(())
    })?;
    atomic_write(&dir.join("corpus.opseq"), |w| {
        write_opseq_with_header(&corpus.apps, &[ctx.prov.line()], w)
    })?;
    atomic_write(&dir.join("synth.json"), |w| {
        let motifs: Vec<Vec<String>> = corpus
            .motifs
            .iter()
            .map(|ms| ms.iter().map(|m| hex::encode(m)).collect())
            .collect();
        let doc = serde_json::json!({
            "tool_version": ctx.prov.tool_version,
            "config_hash": ctx.prov.config_hash,
            "seed": ctx.prov.seed,
            "config": config,
            "motifs": motifs,
        });
        writeln!(w, "{}", serde_json::to_string_pretty(&doc).expect("json"))
    })?;
    println!("{}\t{} apps", dir.display(), corpus.apps.len());
    Ok(())
}
