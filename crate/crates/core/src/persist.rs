//! Index file format.
//!
//! A single pretty-printed JSON document with sorted keys. Every float is
//! written with 17 significant digits in scientific notation, which
//! round-trips `f64` exactly and prints identically on every platform.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::index::ScoreIndex;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format_version: u64,
    #[serde(flatten)]
    index: ScoreIndex,
}

struct SigDigitsFormatter<'a> {
    pretty: PrettyFormatter<'a>,
}

impl Formatter for SigDigitsFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}

/// Serializes with sorted keys and 17-digit floats.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // Going through `Value` sorts object keys (serde_json's map is a BTreeMap).
    let value = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::new();
    let formatter = SigDigitsFormatter {
        pretty: PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn index_to_string(index: &ScoreIndex) -> Result<String> {
    to_canonical_json(&IndexFile {
        format_version: FORMAT_VERSION,
        index: index.clone(),
    })
}

pub fn index_from_str(text: &str) -> Result<ScoreIndex> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::Format("missing format_version".into()))?
        .as_u64()
        .ok_or_else(|| Error::Format("format_version is not an unsigned integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let file: IndexFile = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
    Ok(file.index)
}

/// Writes the index through a temporary sibling file and a rename, so
/// readers never observe a partial file.
pub fn save_index(index: &ScoreIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = index_to_string(index)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<ScoreIndex> {
    index_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CapabilityTaxonomy;
    use crate::scoring::{ElementStat, ModelProfile};
    use crate::vocab::Vocabulary;

    fn sample() -> ScoreIndex {
        let mut knowledge = std::collections::BTreeMap::new();
        knowledge.insert(
            "math".to_string(),
            ElementStat {
                score_agg: 2.0 / 3.0,
                cost_agg: 0.1 + 0.2,
                support: 3,
            },
        );
        ScoreIndex {
            version: 4,
            alpha_used: 0.5,
            taxonomy: CapabilityTaxonomy::default(),
            vocabulary: Vocabulary::default(),
            models: [(
                "m".to_string(),
                ModelProfile {
                    knowledge_stats: knowledge,
                    capability_stats: Default::default(),
                    overall_mean_score: 1e-300,
                    overall_mean_cost: 0.0,
                },
            )]
            .into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let idx = sample();
        let text = index_to_string(&idx).unwrap();
        assert!(text.contains("6.6666666666666663e-1"));
        assert!(text.contains("3.0000000000000004e-1"));
        let back = index_from_str(&text).unwrap();
        assert_eq!(back, idx);
        assert_eq!(index_to_string(&back).unwrap(), text);
    }

    #[test]
    fn keys_are_sorted() {
        let text = index_to_string(&sample()).unwrap();
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("alpha_used") < pos("format_version"));
        assert!(pos("format_version") < pos("models"));
        assert!(pos("taxonomy") < pos("version"));
    }

    #[test]
    fn future_version_rejected() {
        let text = index_to_string(&sample())
            .unwrap()
            .replace("\"format_version\": 1,", "\"format_version\": 999,");
        assert!(matches!(
            index_from_str(&text),
            Err(Error::Version { found: 999, .. })
        ));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let text = index_to_string(&sample()).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(index_from_str(cut), Err(Error::Format(_))));
        assert!(matches!(index_from_str(""), Err(Error::Format(_))));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        save_index(&sample(), &path).unwrap();
        assert_eq!(load_index(&path).unwrap(), sample());
    }
}
