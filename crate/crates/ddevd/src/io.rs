//! Blocked CSV input and tabular output.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ddevd_core::BlockedSample;

use crate::error::{CliError, CliResult};

pub const HEADER: [&str; 2] = ["block_id", "value"];

pub fn parse_blocked_csv(path: &Path) -> CliResult<BlockedSample> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_blocked_csv_reader(file)
}

/// Rows `block_id,value` grouped by ascending block id, input order kept
/// within a block.
pub fn parse_blocked_csv_reader<R: Read>(reader: R) -> CliResult<BlockedSample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut blocks: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut seen_header = false;
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if !seen_header {
            if record.iter().collect::<Vec<_>>() != HEADER {
                return Err(CliError::Parse { line, message: "header must be `block_id,value`".into() });
            }
            seen_header = true;
            continue;
        }
        if record.len() != 2 {
            return Err(CliError::Parse { line, message: format!("expected 2 fields, found {}", record.len()) });
        }
        let id: u64 = record[0]
            .parse()
            .map_err(|_| CliError::Parse { line, message: format!("block id `{}` is not a non-negative integer", &record[0]) })?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| CliError::Parse { line, message: format!("value `{}` is not a number", &record[1]) })?;
        if !value.is_finite() {
            return Err(CliError::Parse { line, message: format!("value `{}` is not finite", &record[1]) });
        }
        blocks.entry(id).or_default().push(value);
    }
    if !seen_header {
        return Err(CliError::EmptyInput("no header".into()));
    }
    if blocks.is_empty() {
        return Err(CliError::EmptyInput("no data rows".into()));
    }
    Ok(BlockedSample::new(blocks.into_values().collect())?)
}

pub fn write_blocked_csv<W: Write>(sample: &BlockedSample, writer: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CliError::Io { path: "<output>".into(), source: e.into() };
    w.write_record(HEADER).map_err(io)?;
    for (i, block) in sample.blocks().iter().enumerate() {
        for v in block {
            w.write_record([i.to_string(), format!("{v:?}")]).map_err(io)?;
        }
    }
    w.flush().map_err(|source| CliError::Io { path: "<output>".into(), source })?;
    Ok(())
}

/// Serializes rows with a header to CSV text.
pub fn csv_text<S: serde::Serialize>(rows: &[S]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io { path: "<output>".into(), source: e.into() };
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: "<output>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> CliResult<BlockedSample> {
        parse_blocked_csv_reader(s.as_bytes())
    }

    #[test]
    fn groups_rows() {
        let s = parse("block_id,value\n0,1.5\n0,2.5\n").unwrap();
        assert_eq!(s.blocks(), &[vec![1.5, 2.5]]);
        let s = parse("block_id,value\n1,2\n0,1\n1,3\n").unwrap();
        assert_eq!(s.block_sizes(), vec![1, 2]);
        assert_eq!(s.blocks()[1], vec![2.0, 3.0]);
    }

    #[test]
    fn rejects_bad_rows() {
        match parse("block_id,value\n0,1\n0,NaN\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("block_id,value\nx,1\n"), Err(CliError::Parse { line: 2, .. })));
        assert!(matches!(parse("block_id,value\n0,1,2\n"), Err(CliError::Parse { line: 2, .. })));
        assert!(matches!(parse("id,v\n0,1\n"), Err(CliError::Parse { line: 1, .. })));
        assert!(matches!(parse(""), Err(CliError::EmptyInput(_))));
        assert!(matches!(parse("block_id,value\n"), Err(CliError::EmptyInput(_))));
    }

    #[test]
    fn round_trip() {
        let s = BlockedSample::new(vec![vec![0.1, 1e-300], vec![3.0]]).unwrap();
        let mut buf = Vec::new();
        write_blocked_csv(&s, &mut buf).unwrap();
        assert_eq!(parse_blocked_csv_reader(buf.as_slice()).unwrap(), s);
    }
}
