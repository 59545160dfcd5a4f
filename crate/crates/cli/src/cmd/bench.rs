use std::collections::BTreeMap;
use std::io::Write;

use anyhow::Result;
use nopcode_core::eval::benchmark;

use crate::args::Settings;
use crate::pipeline::{Ctx, Needs};

fn machine() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "# machine: os={} arch={} cpus={} threads={} (wall-clock seconds; machine-dependent)",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cpus,
        rayon::current_num_threads()
    )
}

/// One TSV per mode: a row per n, a `train/predict` cell per classifier.
pub fn run(settings: Settings) -> Result<()> {
    let ctx = Ctx::new(
        settings,
        Needs {
            opseq: true,
            labels: true,
        },
    )?;
    let apps = ctx.labeled_apps()?;
    let names = ctx.spec_names();
    for mode in ctx.settings.mode.modes() {
        let mut owned = Vec::new();
        for &n in &ctx.settings.n.0 {
            owned.push((n, ctx.maybe_select(ctx.dataset(&apps, n, mode)?)));
        }
        let refs: Vec<_> = owned.iter().map(|(n, ds)| (*n, ds)).collect();
        let rows = benchmark(&refs, &ctx.specs)?;
        let mut cells: BTreeMap<(usize, &str), String> = BTreeMap::new();
        for (r, name) in rows.iter().zip(names.iter().cycle()) {
            cells.insert((r.n, name), format!("{:.6}/{:.6}", r.train_seconds, r.predict_seconds));
        }
        let spec_line: Vec<String> = names.iter().zip(&ctx.specs).map(|(n, s)| format!("{n}={s}")).collect();
        let table = |w: &mut dyn Write| -> std::io::Result<()> {
            writeln!(w, "{}", machine())?;
            writeln!(w, "# cells: train/predict seconds; mode={mode} classifiers: {}", spec_line.join(" "))?;
            writeln!(w, "n\t{}", names.join("\t"))?;
            for (n, ds) in &owned {
                let row: Vec<&str> = names.iter().map(|c| cells[&(*n, c.as_str())].as_str()).collect();
                writeln!(w, "{n}\t{}", row.join("\t"))?;
                log::info!("n={n} {mode}: {} apps, {} features", ds.len(), ds.num_features());
            }
            Ok(())
        };
        ctx.write_text(&ctx.out(format!("bench/bench_{mode}.tsv")), "#", |w| table(w))?;
        table(&mut std::io::stdout().lock())?;
    }
    Ok(())
}
