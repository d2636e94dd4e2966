use std::io::{BufRead, Write};

use super::SynthImage;
use crate::error::Result;

/// Writes one JSON record per line.
pub fn write_jsonl<W: Write>(mut out: W, images: &[SynthImage]) -> Result<()> {
    for img in images {
        serde_json::to_writer(&mut out, img)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records written by [`write_jsonl`]; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SynthImage>> {
    let mut images = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        images.push(serde_json::from_str(&line)?);
    }
    Ok(images)
}
