//! Canonical text and binary encodings of [`FeatureBank`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::bank::{FeatureBank, Split, ViewDescriptor};
use crate::error::{Error, Result};

const TEXT_MAGIC: &str = "VOROBANK1";
const BINARY_MAGIC: &[u8; 4] = b"VBNK";
const BINARY_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BankFormat {
    #[default]
    Binary,
    Text,
}

/// Writes `bank` to `path`. Output is a pure function of the bank and format.
pub fn save_bank(bank: &FeatureBank, path: impl AsRef<Path>, format: BankFormat) -> Result<()> {
    let bytes = match format {
        BankFormat::Text => encode_text(bank).into_bytes(),
        BankFormat::Binary => encode_binary(bank),
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a bank, detecting the format from its leading bytes.
pub fn load_bank(path: impl AsRef<Path>) -> Result<FeatureBank> {
    let bytes = fs::read(path)?;
    decode_bank(&bytes)
}

pub fn decode_bank(bytes: &[u8]) -> Result<FeatureBank> {
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
            line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
            reason: "invalid UTF-8".into(),
        })?;
        decode_text(text)
    }
}

pub fn encode_text(bank: &FeatureBank) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{TEXT_MAGIC} {} {} {} {} {}",
        bank.n_samples(),
        bank.dim(),
        bank.n_views(),
        bank.n_classes(),
        bank.split()
    );
    for d in bank.views() {
        let _ = writeln!(out, "view {} {}", d.id, d.provenance);
    }
    for v in 0..bank.n_views() {
        for (i, &label) in bank.labels().iter().enumerate() {
            let _ = write!(out, "{label}");
            for x in bank.row(v, i) {
                // 9 significant digits round-trip every f32 exactly
                let _ = write!(out, " {x:.8e}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn decode_text(text: &str) -> Result<FeatureBank> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, reason: "empty file".into() })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 6 || toks[0] != TEXT_MAGIC {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected `{TEXT_MAGIC} <n_samples> <n_dims> <n_views> <n_classes> <split>`"),
        });
    }
    let count = |i: usize, name: &str| -> Result<usize> {
        toks[i].parse().map_err(|_| Error::Parse { line: 1, reason: format!("{name} `{}` is not a count", toks[i]) })
    };
    let (n, dim, n_views, n_classes) =
        (count(1, "n_samples")?, count(2, "n_dims")?, count(3, "n_views")?, count(4, "n_classes")?);
    let split: Split =
        toks[5].parse().map_err(|_| Error::Parse { line: 1, reason: format!("unknown split tag `{}`", toks[5]) })?;

    let mut views = Vec::with_capacity(n_views);
    for _ in 0..n_views {
        let (line, l) = lines.next().ok_or(Error::Parse { line: 0, reason: "missing view descriptor".into() })?;
        let rest = l
            .strip_prefix("view ")
            .ok_or_else(|| Error::Parse { line, reason: "expected `view <id> <provenance>`".into() })?;
        let (id, prov) = rest.split_once(' ').unwrap_or((rest, ""));
        if id.is_empty() {
            return Err(Error::Parse { line, reason: "empty view id".into() });
        }
        views.push(ViewDescriptor::new(id, prov));
    }

    let mut labels = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n_views);
    for v in 0..n_views {
        let mut m = Vec::with_capacity(n * dim);
        for i in 0..n {
            let (line, l) =
                lines.next().ok_or(Error::Parse { line: 0, reason: format!("missing sample {i} of view {v}") })?;
            let mut toks = l.split_whitespace();
            let label: u32 = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse { line, reason: "expected integer class label".into() })?;
            if v == 0 {
                labels.push(label);
            } else if labels[i] != label {
                return Err(Error::Parse {
                    line,
                    reason: format!("label {label} disagrees with view 0 label {} for sample {i}", labels[i]),
                });
            }
            let before = m.len();
            for t in toks {
                let x: f32 = t.parse().map_err(|_| Error::Parse { line, reason: format!("`{t}` is not a number") })?;
                if !x.is_finite() {
                    return Err(Error::Parse { line, reason: format!("non-finite value `{t}`") });
                }
                m.push(x);
            }
            if m.len() - before != dim {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected {dim} values, found {}", m.len() - before),
                });
            }
        }
        features.push(m);
    }
    if let Some((line, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Parse { line, reason: "trailing content after last sample".into() });
    }
    FeatureBank::new(dim, n_classes, split, views, labels, features)
}

pub fn encode_binary(bank: &FeatureBank) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    for x in [bank.n_samples(), bank.dim(), bank.n_views(), bank.n_classes()] {
        out.extend_from_slice(&(x as u32).to_le_bytes());
    }
    out.push(bank.split().tag());
    for d in bank.views() {
        let s = descriptor_string(d);
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    for &y in bank.labels() {
        out.extend_from_slice(&y.to_le_bytes());
    }
    for v in 0..bank.n_views() {
        for x in bank.view_matrix(v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn descriptor_string(d: &ViewDescriptor) -> String {
    if d.provenance.is_empty() {
        d.id.clone()
    } else {
        format!("{} {}", d.id, d.provenance)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated { expected: self.pos.saturating_add(n), actual: self.bytes.len() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<FeatureBank> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != BINARY_MAGIC {
        return Err(Error::Binary { offset: 0, reason: "bad magic".into() });
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != BINARY_VERSION {
        return Err(Error::Binary { offset: 4, reason: format!("unsupported version {version}") });
    }
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let n_views = r.u32()? as usize;
    let n_classes = r.u32()? as usize;
    let tag_offset = r.pos;
    let tag = r.take(1)?[0];
    let split = Split::from_tag(tag)
        .ok_or_else(|| Error::Binary { offset: tag_offset, reason: format!("unknown split tag {tag}") })?;

    let mut views = Vec::with_capacity(n_views.min(1 << 16));
    for _ in 0..n_views {
        let len = r.u32()? as usize;
        let at = r.pos;
        let s = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Binary { offset: at, reason: "view descriptor is not UTF-8".into() })?;
        let (id, prov) = s.split_once(' ').unwrap_or((s, ""));
        views.push(ViewDescriptor::new(id, prov));
    }

    // Everything after the descriptors has a size fixed by the header.
    let payload = n
        .checked_mul(4)
        .and_then(|l| n.checked_mul(dim)?.checked_mul(n_views)?.checked_mul(4)?.checked_add(l))
        .ok_or_else(|| Error::Binary { offset: 6, reason: "header sizes overflow".into() })?;
    let expected = r.pos + payload;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::Binary { offset: expected, reason: "trailing bytes after feature matrices".into() });
    }

    let labels: Vec<u32> =
        r.take(4 * n)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4"))).collect();
    let mut features = Vec::with_capacity(n_views);
    for v in 0..n_views {
        let at = r.pos;
        let m: Vec<f32> =
            r.take(4 * n * dim)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
        if let Some(i) = m.iter().position(|x| !x.is_finite()) {
            return Err(Error::Binary { offset: at + 4 * i, reason: format!("non-finite feature in view {v}") });
        }
        features.push(m);
    }
    FeatureBank::new(dim, n_classes, split, views, labels, features)
}
