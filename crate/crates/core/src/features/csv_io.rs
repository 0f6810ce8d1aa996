use std::collections::BTreeSet;
use std::io::{Read, Write};

use super::{FeatureError, FeatureVector, FEATURE_CHANNELS, FEATURE_DIM};
use crate::signal::StateLabel;

/// Feature rows with their state labels, as stored in the corpus CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledFeatures {
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<StateLabel>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn distinct_labels(&self) -> BTreeSet<StateLabel> {
        self.labels.iter().cloned().collect()
    }
}

fn csv_err(e: impl std::fmt::Display) -> FeatureError {
    FeatureError::Csv(e.to_string())
}

/// Header of the 14 channel names plus `label`; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_feature_csv<W: Write>(data: &LabeledFeatures, out: W) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_CHANNELS.iter().copied().chain(["label"])).map_err(csv_err)?;
    for (fv, label) in data.vectors.iter().zip(&data.labels) {
        let mut row: Vec<String> = fv.values.iter().map(|v| v.to_string()).collect();
        row.push(label.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<LabeledFeatures, FeatureError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let expected: Vec<&str> = FEATURE_CHANNELS.iter().copied().chain(["label"]).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Csv(format!("unexpected header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = LabeledFeatures::default();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut values = [0.0; FEATURE_DIM];
        for (k, slot) in values.iter_mut().enumerate() {
            *slot = record[k]
                .parse()
                .map_err(|e| FeatureError::Csv(format!("row {}: column {}: {e}", i + 1, FEATURE_CHANNELS[k])))?;
            if !(0.0..=1.0).contains(slot) {
                return Err(FeatureError::Csv(format!(
                    "row {}: {} = {} is outside [0, 1]",
                    i + 1,
                    FEATURE_CHANNELS[k],
                    slot
                )));
            }
        }
        let label = &record[FEATURE_DIM];
        if label.is_empty() {
            return Err(FeatureError::Csv(format!("row {}: empty label", i + 1)));
        }
        out.vectors.push(FeatureVector::raw(i, values));
        out.labels.push(StateLabel::new(label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec((prop::array::uniform14(0.0f64..=1.0), 0usize..4), 0..30)) {
            let labels = StateLabel::default_set();
            let data = LabeledFeatures {
                vectors: rows.iter().enumerate().map(|(i, (v, _))| FeatureVector::raw(i, *v)).collect(),
                labels: rows.iter().map(|(_, l)| labels[*l].clone()).collect(),
            };
            let mut buf = Vec::new();
            write_feature_csv(&data, &mut buf).unwrap();
            prop_assert_eq!(read_feature_csv(&buf[..]).unwrap(), data);
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "a,b,label\n0.1,0.2,Neutral\n";
        assert!(read_feature_csv(text.as_bytes()).is_err());
    }
}
