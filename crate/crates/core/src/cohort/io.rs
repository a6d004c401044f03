use std::collections::btree_map::Entry;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::{ObservationTable, OutcomeTable, PatientOutcome, RawObservation};
use crate::error::{Error, Result};

pub const OBSERVATIONS_HEADER: [&str; 4] = ["patient_id", "variable", "offset_minutes", "value"];
pub const OUTCOMES_HEADER: [&str; 3] = ["patient_id", "event_hours", "death_flag"];

/// Iterates data records after validating the header. Yields `(line, record)`.
fn records<R: Read>(
    reader: R,
    header: &[&str],
) -> Result<Option<impl Iterator<Item = Result<(u64, StringRecord)>>>> {
    let rdr = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut iter = rdr.into_records();
    let first = match iter.next() {
        None => return Ok(None),
        Some(r) => r?,
    };
    if !is_header(&first, header) {
        return Err(Error::BadHeader {
            expected: header.join(","),
            found: first.iter().collect::<Vec<_>>().join(","),
        });
    }
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    Ok(Some(iter.map(move |r| {
        let rec = r?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if is_header(&rec, &header) {
            return Err(Error::DuplicateHeader { line });
        }
        if rec.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        Ok((line, rec))
    })))
}

fn is_header<S: AsRef<str>>(rec: &StringRecord, header: &[S]) -> bool {
    rec.len() == header.len() && rec.iter().zip(header).all(|(a, b)| a.trim() == b.as_ref())
}

fn parse_f64(line: u64, field: &str, name: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{name}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{name}: `{field}` is not finite")));
    }
    Ok(v)
}

/// Parses an observations CSV (`patient_id,variable,offset_minutes,value`).
///
/// Per-patient lists come back sorted by offset; rows sharing an offset keep
/// their file order.
pub fn ingest_observations<R: Read>(reader: R) -> Result<ObservationTable> {
    let mut table = ObservationTable::default();
    let Some(rows) = records(reader, &OBSERVATIONS_HEADER)? else {
        return Err(Error::NoObservations);
    };
    for row in rows {
        let (line, rec) = row?;
        let offset: i64 = rec[2].trim().parse().map_err(|_| {
            Error::parse(line, format!("offset_minutes: `{}` is not an integer", &rec[2]))
        })?;
        let offset = u32::try_from(offset)
            .map_err(|_| Error::parse(line, format!("offset_minutes {offset} out of range")))?;
        let value = parse_f64(line, &rec[3], "value")?;
        let obs = RawObservation {
            patient_id: rec[0].trim().to_string(),
            variable: rec[1].trim().to_string(),
            offset_minutes: offset,
            value,
        };
        table
            .patients
            .entry(obs.patient_id.clone())
            .or_default()
            .push(obs);
    }
    if table.patients.is_empty() {
        return Err(Error::NoObservations);
    }
    for list in table.patients.values_mut() {
        list.sort_by_key(|o| o.offset_minutes);
    }
    let late = table.late_observations();
    if late > 0 {
        log::info!("{late} observations recorded after the first 24 h are ignored by the model");
    }
    Ok(table)
}

/// Parses an outcomes CSV (`patient_id,event_hours,death_flag`).
pub fn ingest_outcomes<R: Read>(reader: R) -> Result<OutcomeTable> {
    let mut table = OutcomeTable::default();
    let Some(rows) = records(reader, &OUTCOMES_HEADER)? else {
        return Err(Error::NoOutcomes);
    };
    for row in rows {
        let (line, rec) = row?;
        let id = rec[0].trim().to_string();
        let event_hours = parse_f64(line, &rec[1], "event_hours")?;
        if event_hours <= 0.0 {
            return Err(Error::Range(format!(
                "line {line}: event_hours must be > 0, got {event_hours}"
            )));
        }
        let death_flag = match rec[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Range(format!(
                    "line {line}: death_flag must be 0 or 1, got `{other}`"
                )))
            }
        };
        match table.outcomes.entry(id) {
            Entry::Occupied(e) => return Err(Error::DuplicatePatient(e.key().clone())),
            Entry::Vacant(e) => {
                let patient_id = e.key().clone();
                e.insert(PatientOutcome {
                    patient_id,
                    event_hours,
                    death_flag,
                });
            }
        }
    }
    Ok(table)
}

pub fn write_observations<W: Write>(table: &ObservationTable, writer: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(writer);
    w.write_record(OBSERVATIONS_HEADER)?;
    for obs in table.patients.values().flatten() {
        w.write_record([
            obs.patient_id.as_str(),
            obs.variable.as_str(),
            &obs.offset_minutes.to_string(),
            &obs.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outcomes<W: Write>(table: &OutcomeTable, writer: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(writer);
    w.write_record(OUTCOMES_HEADER)?;
    for o in table.outcomes.values() {
        w.write_record([
            o.patient_id.as_str(),
            &o.event_hours.to_string(),
            if o.death_flag { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
