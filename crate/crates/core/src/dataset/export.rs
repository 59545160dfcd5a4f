use std::io::Write;

use super::LabeledDataset;

fn arff_name(s: &str) -> String {
    let plain = !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
    }
}

/// Sparse ARFF: one numeric attribute per gram (named by its hex), then a
/// nominal `class` attribute.
pub fn export_arff<W: Write>(ds: &LabeledDataset, relation: &str, mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "@relation {}", arff_name(relation))?;
    writeln!(sink)?;
    for g in ds.vocab().grams() {
        writeln!(sink, "@attribute {} numeric", g.to_hex())?;
    }
    let classes: Vec<String> = ds.label_set().iter().map(|l| arff_name(l)).collect();
    writeln!(sink, "@attribute class {{{}}}", classes.join(","))?;
    writeln!(sink)?;
    writeln!(sink, "@data")?;
    let class_index = ds.num_features();
    for ((_, v), &t) in ds.rows().iter().zip(ds.targets()) {
        let mut cells: Vec<String> = v.pairs().iter().map(|(i, x)| format!("{i} {x}")).collect();
        cells.push(format!("{class_index} {}", classes[t]));
        writeln!(sink, "{{{}}}", cells.join(", "))?;
    }
    sink.flush()
}

/// Dense CSV: header of gram hex names plus `class`, one row per app.
pub fn export_csv<W: Write>(ds: &LabeledDataset, mut sink: W) -> std::io::Result<()> {
    let mut header: Vec<String> = ds.vocab().grams().iter().map(|g| g.to_hex()).collect();
    header.push("class".to_string());
    writeln!(sink, "{}", header.join(","))?;
    let width = ds.num_features();
    let mut line = String::new();
    for ((_, v), &t) in ds.rows().iter().zip(ds.targets()) {
        line.clear();
        let mut next = 0usize;
        for &(i, x) in v.pairs() {
            for _ in next..i as usize {
                line.push_str("0,");
            }
            line.push_str(&x.to_string());
            line.push(',');
            next = i as usize + 1;
        }
        for _ in next..width {
            line.push_str("0,");
        }
        line.push_str(&csv_field(&ds.label_set()[t]));
        writeln!(sink, "{line}")?;
    }
    sink.flush()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::app;
    use crate::ngram::FeatureMode;

    #[test]
    fn arff_rows() {
        let apps = [
            app("m", "malware", &[&[0x6e, 0x6e]]),
            app("b", "benign", &[&[]]),
        ];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Frequency).unwrap();
        let mut out = Vec::new();
        export_arff(&ds, "ngrams n=1", &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("@relation 'ngrams n=1'\n"));
        assert!(text.contains("@attribute 6e numeric\n"));
        assert!(text.contains("@attribute class {benign,malware}\n"));
        let data: Vec<&str> = text.split("@data\n").nth(1).unwrap().lines().collect();
        assert_eq!(data, ["{0 2, 1 malware}", "{1 benign}"]);
    }

    #[test]
    fn csv_dense_rows() {
        let apps = [
            app("m", "malware", &[&[0x6e, 0x6e, 0x0e]]),
            app("b", "benign", &[&[0x12]]),
        ];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Frequency).unwrap();
        let mut out = Vec::new();
        export_csv(&ds, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "0e,12,6e,class\n1,0,2,malware\n0,1,0,benign\n"
        );
    }
}
