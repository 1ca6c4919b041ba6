//! Program corpora with ground-truth sidecar files.
//!
//! Each `<name>.cir` may have a `<name>.expected` next to it:
//!
//! ```text
//! verdict: Unsafe
//! kind: AssertionFailure
//! detectors: race,deadlock,thread_leak,memory,assertion
//! ```
//!
//! `kind` is required for unsafe programs; `detectors` is optional and
//! replaces the default detector set for that program.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ebf_core::exec::{BugKind, Detectors};
use ebf_core::mir::{parse_program, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truth {
    Safe,
    Unsafe(BugKind),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expected {
    pub truth: Truth,
    pub detectors: Option<Detectors>,
}

impl Expected {
    pub fn parse(text: &str) -> Result<Expected> {
        let (mut verdict, mut kind, mut detectors) = (None, None, None);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| anyhow!("line {}: expected `key: value`", i + 1))?;
            let value = value.trim();
            match key.trim() {
                "verdict" => verdict = Some(value.to_string()),
                "kind" => {
                    kind = Some(
                        value
                            .parse::<BugKind>()
                            .map_err(|_| anyhow!("line {}: unknown bug kind '{}'", i + 1, value))?,
                    )
                }
                "detectors" => {
                    detectors = Some(
                        crate::args::parse_detectors(value).map_err(|e| anyhow!("line {}: {}", i + 1, e))?,
                    )
                }
                other => bail!("line {}: unknown key '{}'", i + 1, other),
            }
        }
        let truth = match verdict.as_deref() {
            Some("Safe") => Truth::Safe,
            Some("Unsafe") => Truth::Unsafe(kind.ok_or_else(|| anyhow!("unsafe program needs a kind"))?),
            Some(v) => bail!("unknown verdict '{}'", v),
            None => bail!("missing verdict"),
        };
        Ok(Expected { truth, detectors })
    }
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub path: PathBuf,
    /// Path relative to the corpus root, with `/` separators.
    pub name: String,
    pub program: Program,
    pub expected: Expected,
}

impl Entry {
    pub fn detectors(&self, default: Detectors) -> Detectors {
        self.expected.detectors.unwrap_or(default)
    }
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "cir") {
            out.push(path);
        }
    }
    Ok(())
}

/// Load every `.cir` under `dir`, sorted by path. Programs without a
/// sidecar are skipped with a warning; unparsable files are errors.
pub fn load(dir: &Path) -> Result<Vec<Entry>> {
    let mut paths = Vec::new();
    collect(dir, &mut paths)?;
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let sidecar = path.with_extension("expected");
        let name = path
            .strip_prefix(dir)
            .unwrap_or(&path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let Ok(expected_text) = fs::read_to_string(&sidecar) else {
            log::warn!("{}: no ground truth, skipped", path.display());
            continue;
        };
        let expected = Expected::parse(&expected_text).with_context(|| format!("{}", sidecar.display()))?;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let program = parse_program(&text).map_err(|e| anyhow!("{}: {}", path.display(), e))?;
        out.push(Entry {
            path,
            name,
            program,
            expected,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_parsing() {
        let e = Expected::parse("verdict: Unsafe\nkind: Deadlock\n").unwrap();
        assert_eq!(e.truth, Truth::Unsafe(BugKind::Deadlock));
        assert_eq!(e.detectors, None);
        let e = Expected::parse("# note\nverdict: Safe\ndetectors: all\n").unwrap();
        assert_eq!(e.truth, Truth::Safe);
        assert_eq!(e.detectors, Some(Detectors::all()));
        assert!(Expected::parse("verdict: Unsafe\n").is_err());
        assert!(Expected::parse("verdict: Maybe\n").is_err());
        assert!(Expected::parse("kind: Deadlock\n").is_err());
        assert!(Expected::parse("verdict: Safe\ncolour: red\n").is_err());
    }
}
