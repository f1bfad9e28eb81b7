use std::io::{Read, Write};

use crate::dataset::{MedicationState, ParticipantId, UpdrsScore};
use crate::error::{Error, Result};

use super::{GaitFeatureVector, FEATURE_NAMES};

const ID_COLUMNS: [&str; 4] = ["walk_id", "participant", "medication", "label"];

/// One walk in the features table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub walk_id: String,
    pub participant: ParticipantId,
    pub medication: MedicationState,
    pub label: UpdrsScore,
    pub features: GaitFeatureVector,
}

pub fn write_features_csv<W: Write>(writer: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::parse("features writer", e);
    w.write_record(ID_COLUMNS.iter().chain(FEATURE_NAMES.iter())).map_err(ser)?;
    for row in rows {
        let mut record = vec![
            row.walk_id.clone(),
            row.participant.to_string(),
            row.medication.to_string(),
            row.label.value().to_string(),
        ];
        let values = row.features.to_array();
        record.extend(values[..10].iter().map(|v| v.to_string()));
        record.push(row.features.n_steps.to_string());
        w.write_record(&record).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io("features writer", e))?;
    Ok(())
}

/// Reads a table written by [`write_features_csv`]; columns are matched by
/// name, so extra columns are ignored.
pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| Error::parse("features header", e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse("features header", format!("missing column {name}")))
    };
    let ids: Vec<usize> = ID_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let feats: Vec<usize> = FEATURE_NAMES.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let ctx = || format!("features row {line}");
        let rec = rec.map_err(|e| Error::parse(ctx(), e))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let mut values = [0.0; 11];
        for (v, &k) in values.iter_mut().zip(&feats) {
            *v = field(k)
                .parse()
                .map_err(|e| Error::parse(ctx(), format!("{:?}: {e}", field(k))))?;
        }
        let label: u8 = field(ids[3])
            .parse()
            .map_err(|e| Error::parse(ctx(), format!("label {:?}: {e}", field(ids[3]))))?;
        out.push(FeatureRow {
            walk_id: field(ids[0]).to_string(),
            participant: ParticipantId::new(field(ids[1]))?,
            medication: field(ids[2]).parse()?,
            label: UpdrsScore::new(label)?,
            features: GaitFeatureVector::from_array(values)?,
        });
    }
    Ok(out)
}
