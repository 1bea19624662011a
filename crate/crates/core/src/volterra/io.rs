use std::io::{Read, Write};

use super::{Result, VolterraError};
use crate::numfmt::format_value;

/// Reads a `t,value` table.
pub fn read_tabulated<R: Read>(source: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(VolterraError::Config(format!(
            "expected header `t,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut t = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| VolterraError::Config(format!("line {line}: bad number")))
        };
        t.push(parse(0)?);
        values.push(parse(1)?);
    }
    Ok((t, values))
}

pub fn write_tabulated<W: Write>(sink: W, t: &[f64], values: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["t", "value"])?;
    for (t, v) in t.iter().zip(values) {
        writer.write_record([format_value(*t), format_value(*v)])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_roundtrip() {
        let mut out = Vec::new();
        write_tabulated(&mut out, &[0.0, 0.5], &[0.0, 1.25]).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "t,value\n0,0\n0.5,1.25\n");
        let (t, v) = read_tabulated(out.as_slice()).unwrap();
        assert_eq!(t, vec![0.0, 0.5]);
        assert_eq!(v, vec![0.0, 1.25]);
        assert!(read_tabulated("x,y\n1,2\n".as_bytes()).is_err());
    }
}
