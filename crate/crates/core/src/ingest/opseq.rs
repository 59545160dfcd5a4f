//! OPSEQ: one method per line, `app_id<TAB>class->method_sig<TAB>hex`.
//!
//! Apps without methods are carried as `#app<TAB>app_id` so they survive a
//! round trip. Every other line starting with `#` is a free-form header.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use super::{validate_app_id, AppRecord, OpcodeSeq};
use crate::error::{Error, Result};
use crate::hex;
use crate::opcode::load_opcode_table;

const EMPTY_APP_TAG: &str = "#app\t";

pub fn write_opseq<W: Write>(apps: &[AppRecord], sink: W) -> std::io::Result<()> {
    write_opseq_with_header(apps, &[], sink)
}

/// Writes apps sorted by id; within an app, methods are stably sorted by
/// class name (file order is kept inside a class).
pub fn write_opseq_with_header<W: Write>(
    apps: &[AppRecord],
    header: &[String],
    mut sink: W,
) -> std::io::Result<()> {
    for h in header {
        debug_assert!(!h.contains('\n'));
        writeln!(sink, "# {h}")?;
    }
    let mut order: Vec<&AppRecord> = apps.iter().collect();
    order.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    for app in order {
        if app.methods.is_empty() {
            writeln!(sink, "{EMPTY_APP_TAG}{}", app.app_id)?;
            continue;
        }
        let mut methods: Vec<&OpcodeSeq> = app.methods.iter().collect();
        methods.sort_by(|a, b| a.class_name.cmp(&b.class_name));
        for m in methods {
            writeln!(
                sink,
                "{}\t{}->{}\t{}",
                app.app_id,
                m.class_name,
                m.method_sig,
                hex::encode(&m.opcodes)
            )?;
        }
    }
    sink.flush()
}

pub fn read_opseq<R: BufRead>(source: R) -> Result<Vec<AppRecord>> {
    let table = load_opcode_table();
    let mut apps: Vec<AppRecord> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();

    let mut open = |id: &str, apps: &mut Vec<AppRecord>, line_no: usize| -> Result<()> {
        validate_app_id(id).map_err(|_| Error::format(line_no, format!("invalid app id `{id}`")))?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateAppId(id.to_string()));
        }
        apps.push(AppRecord {
            app_id: id.to_string(),
            methods: Vec::new(),
            label: None,
        });
        Ok(())
    };

    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::format(line_no, e.to_string()))?;
        if let Some(id) = line.strip_prefix(EMPTY_APP_TAG) {
            open(id, &mut apps, line_no)?;
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(app_id), Some(method), Some(hex_field), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::format(line_no, "expected exactly three tab-separated fields"));
        };
        let (class_name, method_sig) = method
            .split_once("->")
            .ok_or_else(|| Error::format(line_no, "method field lacks `->`"))?;
        let opcodes = hex::decode(hex_field).map_err(|r| Error::format(line_no, r))?;
        if let Some(bad) = opcodes.iter().find(|&&b| !table.is_defined(b)) {
            return Err(Error::format(line_no, format!("undefined opcode 0x{bad:02x}")));
        }
        if apps.last().map(|a| a.app_id.as_str()) != Some(app_id) {
            open(app_id, &mut apps, line_no)?;
        }
        apps.last_mut()
            .expect("app opened above")
            .methods
            .push(OpcodeSeq::new(class_name, method_sig, opcodes));
    }
    Ok(apps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_app() -> Vec<AppRecord> {
        vec![AppRecord::new("app1", vec![OpcodeSeq::new("Lcom/A;", "f()V", vec![0x08, 0x54, 0x6e])]).unwrap()]
    }

    #[test]
    fn line_format() {
        let mut out = Vec::new();
        write_opseq(&one_app(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "app1\tLcom/A;->f()V\t08546e\n");
    }

    #[test]
    fn round_trip_with_empty_method_and_app() {
        let mut apps = one_app();
        apps[0].methods.push(OpcodeSeq::new("Lcom/B;", "<init>()V", vec![]));
        apps.push(AppRecord::new("app2", vec![]).unwrap());
        let mut out = Vec::new();
        write_opseq_with_header(&apps, &["tool test".into()], &mut out).unwrap();
        let back = read_opseq(out.as_slice()).unwrap();
        assert_eq!(back, apps);
    }

    #[test]
    fn odd_hex_rejected() {
        let err = read_opseq("a\tLA;->f()V\t085\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn undefined_opcode_rejected() {
        let err = read_opseq("a\tLA;->f()V\t3e\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn wrong_field_count_rejected() {
        assert!(read_opseq("a\tLA;->f()V\n".as_bytes()).is_err());
        assert!(read_opseq("a\tLA;->f()V\t0e\textra\n".as_bytes()).is_err());
    }

    #[test]
    fn non_contiguous_app_is_duplicate() {
        let text = "a\tLA;->f()V\t0e\nb\tLA;->f()V\t0e\na\tLA;->g()V\t0e\n";
        assert!(matches!(read_opseq(text.as_bytes()), Err(Error::DuplicateAppId(id)) if id == "a"));
    }
}
