//! Delimiter-separated text to epoch conversion.
//!
//! Each row holds one epoch: `C·T` values in `[channel][time]` order followed by an
//! integer label (`-1` for unlabeled). No header row.

use std::io::Read;

use crate::data::tensor::EpochTensor;
use crate::error::{Error, Result};

pub fn parse_delimited<R: Read>(
    reader: R,
    delimiter: u8,
    channels: usize,
    samples: usize,
) -> Result<(Vec<EpochTensor>, Vec<Option<usize>>)> {
    let width = channels * samples;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut epochs = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        if record.len() != width + 1 {
            return Err(Error::Parse(format!(
                "row {row}: expected {} fields, found {}",
                width + 1,
                record.len()
            )));
        }
        let values = record
            .iter()
            .take(width)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {row}: {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let label_field = &record[width];
        let label: i64 = label_field
            .parse()
            .map_err(|e| Error::Parse(format!("row {row}: label {label_field:?}: {e}")))?;
        labels.push(match label {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(Error::Parse(format!("row {row}: invalid label {l}"))),
        });
        epochs.push(EpochTensor::new(channels, samples, values)?);
    }
    Ok((epochs, labels))
}
