//! Flat `key=value` text, used for config files and checkpoint headers.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parses `key=value` lines. Blank lines and lines starting with `#` are ignored.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn render(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Overwrites `slot` with the parsed value of `key` when present.
pub fn take<T: FromStr>(map: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = map.get(key) {
        *slot = v
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse {key}={v}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_skips_comments() {
        let m = parse("# c\n\nd_model = 16\nseed=3\n").unwrap();
        assert_eq!(m["d_model"], "16");
        let mut seed = 0u64;
        take(&m, "seed", &mut seed).unwrap();
        assert_eq!(seed, 3);
        assert!(parse("oops").is_err());
    }
}
