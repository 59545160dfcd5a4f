use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use super::{AppRecord, OpcodeSeq};
use crate::error::{Error, Result};
use crate::opcode::OpcodeTable;

/// Directives that open a block of data lines which are not instructions.
const DATA_BLOCKS: &[&str] = &[
    "annotation",
    "subannotation",
    "packed-switch",
    "sparse-switch",
    "array-data",
];

enum LineKind<'a> {
    Skip,
    MethodStart(&'a str),
    MethodEnd,
    ClassDecl(&'a str),
    BlockStart,
    BlockEnd,
    Instruction(&'a str),
}

fn classify(line: &str) -> LineKind<'_> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') || line.starts_with(':') {
        return LineKind::Skip;
    }
    if let Some(directive) = line.strip_prefix('.') {
        let mut tokens = directive.split_whitespace();
        let head = tokens.next().unwrap_or("");
        return match head {
            "method" => LineKind::MethodStart(tokens.last().unwrap_or("")),
            "class" => LineKind::ClassDecl(tokens.last().unwrap_or("")),
            "end" => match tokens.next() {
                Some("method") => LineKind::MethodEnd,
                Some(kind) if DATA_BLOCKS.contains(&kind) => LineKind::BlockEnd,
                _ => LineKind::Skip,
            },
            kind if DATA_BLOCKS.contains(&kind) => LineKind::BlockStart,
            _ => LineKind::Skip,
        };
    }
    // first token is the mnemonic; everything after it is operands
    let mnemonic = line.split_whitespace().next().unwrap_or(line);
    LineKind::Instruction(mnemonic)
}

/// Walks one class body, emitting methods. `line_offset` is added to
/// reported line numbers.
fn walk_lines(
    text: &str,
    table: &OpcodeTable,
    line_offset: usize,
) -> Result<(Option<String>, Vec<OpcodeSeq>)> {
    let mut class_name = None;
    let mut methods = Vec::new();
    let mut current: Option<OpcodeSeq> = None;
    let mut block_depth = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = line_offset + i + 1;
        let kind = classify(raw);
        if block_depth > 0 {
            match kind {
                LineKind::BlockStart => block_depth += 1,
                LineKind::BlockEnd => block_depth -= 1,
                _ => {}
            }
            continue;
        }
        match kind {
            LineKind::Skip | LineKind::BlockEnd => {}
            LineKind::BlockStart => block_depth = 1,
            LineKind::ClassDecl(name) => class_name = Some(name.to_string()),
            LineKind::MethodStart(sig) => {
                if let Some(done) = current.take() {
                    methods.push(done);
                }
                current = Some(OpcodeSeq::new(
                    class_name.clone().unwrap_or_default(),
                    sig,
                    Vec::new(),
                ));
            }
            LineKind::MethodEnd => {
                if let Some(done) = current.take() {
                    methods.push(done);
                }
            }
            LineKind::Instruction(token) => {
                let byte = table.lookup(token).ok_or_else(|| Error::UnknownMnemonic {
                    path: None,
                    line: line_no,
                    token: token.to_string(),
                })?;
                match current.as_mut() {
                    Some(m) => m.opcodes.push(byte),
                    None => {
                        return Err(Error::format(
                            line_no,
                            format!("instruction `{token}` outside of a method"),
                        ))
                    }
                }
            }
        }
    }
    if let Some(done) = current.take() {
        methods.push(done);
    }
    Ok((class_name, methods))
}

/// Parses a single `.method ... .end method` span. The returned sequence
/// has an empty `class_name`; use [`parse_smali_class`] for whole files.
pub fn parse_smali_method(method_text: &str, table: &OpcodeTable) -> Result<OpcodeSeq> {
    let (_, mut methods) = walk_lines(method_text, table, 0)?;
    match methods.len() {
        0 => Ok(OpcodeSeq::new("", "", Vec::new())),
        1 => Ok(methods.remove(0)),
        k => Err(Error::format(1, format!("expected one method, found {k}"))),
    }
}

/// Parses a whole smali class file. Returns the class descriptor and its
/// methods in file order.
pub fn parse_smali_class(text: &str, table: &OpcodeTable) -> Result<(Option<String>, Vec<OpcodeSeq>)> {
    walk_lines(text, table, 0)
}

fn collect_smali_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "smali") {
            files.push(entry.into_path());
        }
    }
    files.sort();
    Ok(files)
}

fn class_from_path(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file).with_extension("");
    let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
    format!("L{};", parts.join("/"))
}

/// Parses every `*.smali` file under `root_dir` into one application
/// record. Files are parsed in parallel; the result is ordered by class
/// name, then by method position within the file.
pub fn parse_smali_tree(root_dir: &Path, app_id: &str, table: &OpcodeTable) -> Result<AppRecord> {
    if !root_dir.is_dir() {
        return Err(Error::io(
            root_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let files = collect_smali_files(root_dir)?;
    let mut classes: Vec<(String, PathBuf, Vec<OpcodeSeq>)> = files
        .par_iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let (class, mut methods) = walk_lines(&text, table, 0).map_err(|e| match e {
                Error::UnknownMnemonic { line, token, .. } => Error::UnknownMnemonic {
                    path: Some(path.clone()),
                    line,
                    token,
                },
                Error::Format { line, reason } => Error::Format {
                    line,
                    reason: format!("{}: {reason}", path.display()),
                },
                other => other,
            })?;
            let class = class.unwrap_or_else(|| class_from_path(root_dir, path));
            for m in &mut methods {
                m.class_name.clone_from(&class);
            }
            Ok((class, path.clone(), methods))
        })
        .collect::<Result<_>>()?;
    classes.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let methods = classes.into_iter().flat_map(|(_, _, m)| m).collect();
    AppRecord::new(app_id, methods)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcode::load_opcode_table;

    #[test]
    fn two_instruction_body() {
        let text = ".method public f()V\n    .registers 1\n    const/4 v0, 0x0\n    return-void\n.end method\n";
        let seq = parse_smali_method(text, load_opcode_table()).unwrap();
        assert_eq!(seq.method_sig, "f()V");
        assert_eq!(seq.opcodes, vec![0x12, 0x0e]);
    }

    #[test]
    fn abstract_method_is_empty() {
        let text = ".method public abstract g(I)V\n.end method\n";
        let seq = parse_smali_method(text, load_opcode_table()).unwrap();
        assert!(seq.opcodes.is_empty());
    }

    #[test]
    fn directives_and_labels_skipped() {
        let text = "\
.method public h()V
    .line 42
    :label_0
    # a comment
    invoke-virtual {p0}, Lcom/A;->x()V

.end method
";
        let seq = parse_smali_method(text, load_opcode_table()).unwrap();
        assert_eq!(seq.opcodes, vec![0x6e]);
    }

    #[test]
    fn payload_and_annotation_blocks_skipped() {
        let text = "\
.method public s(I)V
    .annotation system Ldalvik/annotation/Throws;
        value = {
            Ljava/io/IOException;
        }
    .end annotation
    packed-switch p1, :pswitch_data_0
    fill-array-data v0, :array_0
    return-void
    :pswitch_data_0
    .packed-switch 0x1
        :pswitch_0
    .end packed-switch
    :array_0
    .array-data 4
        0x1
        0x2
    .end array-data
    .sparse-switch
        0x5 -> :sswitch_0
    .end sparse-switch
.end method
";
        let seq = parse_smali_method(text, load_opcode_table()).unwrap();
        assert_eq!(seq.opcodes, vec![0x2b, 0x26, 0x0e]);
    }

    #[test]
    fn unknown_mnemonic_reports_line() {
        let text = ".method f()V\n    frobnicate v0\n.end method\n";
        match parse_smali_method(text, load_opcode_table()) {
            Err(Error::UnknownMnemonic { line, token, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(token, "frobnicate");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn class_file_assigns_class_name() {
        let text = ".class public Lcom/A;\n.super Ljava/lang/Object;\n\n.method a()V\n    return-void\n.end method\n\n.method b()V\n    nop\n    return-void\n.end method\n";
        let (class, methods) = parse_smali_class(text, load_opcode_table()).unwrap();
        assert_eq!(class.as_deref(), Some("Lcom/A;"));
        assert_eq!(methods.len(), 2);
        assert_eq!(methods[1].opcodes, vec![0x00, 0x0e]);
        assert_eq!(methods[0].class_name, "Lcom/A;");
    }
}
