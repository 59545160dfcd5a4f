//! Per-method opcode sequences and the sources they are read from.

mod labels;
mod opseq;
mod smali;

pub use labels::{read_labels, write_labels, LabelRow};
pub use opseq::{read_opseq, write_opseq, write_opseq_with_header};
pub use smali::{parse_smali_class, parse_smali_method, parse_smali_tree};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The opcode stream of one method, operands discarded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpcodeSeq {
    pub class_name: String,
    pub method_sig: String,
    pub opcodes: Vec<u8>,
}

impl OpcodeSeq {
    pub fn new(class_name: impl Into<String>, method_sig: impl Into<String>, opcodes: Vec<u8>) -> Self {
        OpcodeSeq {
            class_name: class_name.into(),
            method_sig: method_sig.into(),
            opcodes,
        }
    }
}

/// All methods of one application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub methods: Vec<OpcodeSeq>,
    pub label: Option<String>,
}

impl AppRecord {
    pub fn new(app_id: impl Into<String>, methods: Vec<OpcodeSeq>) -> Result<Self> {
        let app_id = app_id.into();
        validate_app_id(&app_id)?;
        Ok(AppRecord {
            app_id,
            methods,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn instruction_count(&self) -> usize {
        self.methods.iter().map(|m| m.opcodes.len()).sum()
    }
}

pub fn validate_app_id(id: &str) -> Result<()> {
    if id.is_empty() || id.starts_with('#') || id.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidAppId(id.to_string()));
    }
    Ok(())
}

/// Fails with `DuplicateAppId` on the first repeated id.
pub fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateAppId(id.to_string()));
        }
    }
    Ok(())
}

/// Attaches labels by app id. Returns the ids that had no label.
pub fn attach_labels<'a>(
    apps: &mut [AppRecord],
    lookup: impl Fn(&str) -> Option<&'a str>,
) -> Vec<String> {
    let mut missing = Vec::new();
    for app in apps.iter_mut() {
        match lookup(&app.app_id) {
            Some(l) => app.label = Some(l.to_string()),
            None => missing.push(app.app_id.clone()),
        }
    }
    missing
}
