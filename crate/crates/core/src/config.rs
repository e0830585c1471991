//! Structured config files for anchor specs and search spaces.
//!
//! Files are TOML documents; a document whose first non-blank character is
//! `{` is read as JSON instead. An anchor spec looks like:
//!
//! ```toml
//! scales = [16, 32, 64, 128, 256, 512]
//! ratios = [1.0]            # h/w, optional, default [1.0]
//! base_stride = 16
//! stride_divisor = 2        # 1, 2 or 4, optional, default 1
//!
//! [shifts_per_scale]        # optional; 0, 1 or 3 extra anchors per scale
//! 16 = 3
//! ```

use serde::de::DeserializeOwned;

use crate::anchor_layout::AnchorSpec;
use crate::error::{Error, Result};
use crate::optimizer::SearchSpace;

fn parse_document<T: DeserializeOwned>(text: &str) -> Result<T> {
    if text.trim().is_empty() {
        return Err(Error::Config("document is empty".into()));
    }
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn parse_anchor_spec(text: &str) -> Result<AnchorSpec> {
    parse_document(text)
}

pub fn parse_search_space(text: &str) -> Result<SearchSpace> {
    parse_document(text)
}

pub fn anchor_spec_to_toml(spec: &AnchorSpec) -> String {
    toml::to_string(spec).expect("spec serializes to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor_layout::ShiftCount;

    #[test]
    fn parses_toml_spec() {
        let spec = parse_anchor_spec(
            "scales = [16, 32]\nbase_stride = 16\nstride_divisor = 2\n[shifts_per_scale]\n16 = 3\n",
        )
        .unwrap();
        assert_eq!(spec.scales(), &[16.0, 32.0]);
        assert_eq!(spec.ratios(), &[1.0]);
        assert_eq!(spec.sliding_stride(), 8.0);
        assert_eq!(spec.shift_for(16.0).unwrap(), ShiftCount::Three);
        assert_eq!(spec.shift_for(32.0).unwrap(), ShiftCount::None);
    }

    #[test]
    fn toml_roundtrip() {
        let spec = AnchorSpec::wider_face_baseline()
            .with_shift(32.0, ShiftCount::One)
            .unwrap();
        let text = anchor_spec_to_toml(&spec);
        assert_eq!(parse_anchor_spec(&text).unwrap(), spec);
    }

    #[test]
    fn parses_json_spec() {
        let spec = parse_anchor_spec(r#"{"scales":[16],"base_stride":16}"#).unwrap();
        assert_eq!(spec, AnchorSpec::single_scale(16.0, 16.0).unwrap());
    }

    #[test]
    fn rejects_invalid_documents() {
        assert!(parse_anchor_spec("").is_err());
        assert!(parse_anchor_spec("scales = [16]\n").is_err());
        assert!(parse_anchor_spec("scales = [16]\nbase_stride = 16\nstride_divisor = 3\n").is_err());
        assert!(parse_anchor_spec("scales = [16]\nbase_stride = 16\n[shifts_per_scale]\n32 = 1\n").is_err());
        assert!(parse_anchor_spec("scales = [16]\nbase_stride = 16\n[shifts_per_scale]\n16 = 2\n").is_err());
        assert!(parse_anchor_spec("scales = [16]\nbase_stride = 16\nbogus = 1\n").is_err());
    }
}
