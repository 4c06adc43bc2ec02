//! CSV signal files: L rows by m columns of decimal reals, one sample per
//! row. Files have no header by default; `has_header` skips one line.

use std::path::Path;

use ssmshrink_core::Signal;

use crate::CliError;

pub fn load(path: &Path, has_header: bool) -> Result<Signal, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("opening {}: {e}", path.display())))?;
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut sample = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Usage(format!(
                    "{} row {} column {}: not a decimal real: {field:?}",
                    path.display(),
                    row + 1,
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Usage(format!(
                    "{} row {} column {}: non-finite value",
                    path.display(),
                    row + 1,
                    col + 1
                )));
            }
            sample.push(v);
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: signal file has no samples",
            path.display()
        )));
    }
    Signal::from_real_samples(&samples).map_err(|e| CliError::Usage(e.to_string()))
}
