//! File formats: datasets (CSV plus a JSON column sidecar), configs, traces and labels.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{MindsError, Result};
use crate::gibbs::TraceRow;
use crate::model::{MixedDataset, ModelConfig};

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Declares which CSV columns hold binary items and which continuous measures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    #[serde(default)]
    pub id_column: Option<String>,
    pub binary: Vec<String>,
    pub continuous: Vec<String>,
}

impl ColumnSpec {
    pub fn for_dataset(data: &MixedDataset) -> Self {
        Self {
            id_column: Some("subject".into()),
            binary: data.item_names.clone(),
            continuous: data.measure_names.clone(),
        }
    }
}

/// An ingested dataset and the 1-based data rows dropped for missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: MixedDataset,
    pub dropped_rows: Vec<usize>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | ".")
}

/// Read a CSV with header; rows with a missing cell in a used column are dropped.
pub fn read_dataset<R: Read>(reader: R, spec: &ColumnSpec) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| MindsError::Ingest {
                row: 0,
                column: name.to_string(),
                message: "column declared in the sidecar is missing from the header".into(),
            })
    };
    let bin_idx: Vec<usize> = spec.binary.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let cont_idx: Vec<usize> = spec.continuous.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let id_idx = spec.id_column.as_deref().map(find).transpose()?;
    if bin_idx.is_empty() || cont_idx.is_empty() {
        return Err(MindsError::Config(
            "at least one binary and one continuous column are required".into(),
        ));
    }

    let (mut bin, mut cont, mut ids, mut dropped) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        if bin_idx.iter().chain(cont_idx.iter()).any(|&c| is_missing(cell(c))) {
            dropped.push(row);
            continue;
        }
        for (&c, name) in bin_idx.iter().zip(&spec.binary) {
            match cell(c).trim() {
                "0" | "0.0" => bin.push(0u8),
                "1" | "1.0" => bin.push(1u8),
                other => {
                    return Err(MindsError::Ingest {
                        row,
                        column: name.clone(),
                        message: format!("binary cell must be 0 or 1, found '{other}'"),
                    })
                }
            }
        }
        for (&c, name) in cont_idx.iter().zip(&spec.continuous) {
            let v: f64 = cell(c).trim().parse().map_err(|_| MindsError::Ingest {
                row,
                column: name.clone(),
                message: format!("cannot parse '{}' as a number", cell(c)),
            })?;
            if !v.is_finite() {
                return Err(MindsError::Ingest {
                    row,
                    column: name.clone(),
                    message: "value is not finite".into(),
                });
            }
            cont.push(v);
        }
        ids.push(id_idx.map_or_else(|| row.to_string(), |c| cell(c).to_string()));
    }
    if !dropped.is_empty() {
        warn!("dropped {} row(s) with missing cells: {:?}", dropped.len(), dropped);
    }
    let n = ids.len();
    let binary = Array2::from_shape_vec((n, bin_idx.len()), bin).expect("row-major fill");
    let continuous = Array2::from_shape_vec((n, cont_idx.len()), cont).expect("row-major fill");
    let data = MixedDataset::with_names(binary, continuous, spec.binary.clone(), spec.continuous.clone(), ids)?;
    Ok(Ingested {
        data,
        dropped_rows: dropped,
    })
}

/// Load `<stem>.csv` with its sidecar `<stem>.json`, or an explicit sidecar path.
pub fn load_dataset(csv_path: &Path, sidecar: Option<&Path>) -> Result<Ingested> {
    let side = sidecar
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv_path.with_extension("json"));
    let spec: ColumnSpec = read_json(&side)?;
    read_dataset(fs::File::open(csv_path)?, &spec)
}

pub fn write_dataset<W: Write>(out: W, data: &MixedDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject".to_string()];
    header.extend(data.item_names.iter().cloned());
    header.extend(data.measure_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n_subjects() {
        let mut rec = vec![data.subject_ids[i].clone()];
        rec.extend(data.binary.row(i).iter().map(|y| y.to_string()));
        rec.extend(data.continuous.row(i).iter().map(|&x| format_float(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `<stem>.csv` and its sidecar `<stem>.json`.
pub fn save_dataset(csv_path: &Path, data: &MixedDataset) -> Result<()> {
    write_dataset(fs::File::create(csv_path)?, data)?;
    write_json(&csv_path.with_extension("json"), &ColumnSpec::for_dataset(data))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_config(path: &Path) -> Result<ModelConfig> {
    let c: ModelConfig = read_json(path)?;
    c.validate()?;
    Ok(c)
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration",
        "log_likelihood",
        "center_norm",
        "loading_norm",
        "threshold_norm",
        "trait_variance",
        "mean_noise_variance",
    ])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format_float(r.log_likelihood),
            format_float(r.center_norm),
            format_float(r.loading_norm),
            format_float(r.threshold_norm),
            format_float(r.trait_variance),
            format_float(r.mean_noise_variance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `subject,label` with 1-based labels.
pub fn write_labels_csv<W: Write>(out: W, subject_ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject", "label"])?;
    for (id, l) in subject_ids.iter().zip(labels) {
        w.write_record([id.clone(), (l + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Labels keyed by subject id, plus any `p1..pK` probability columns present.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub subject_ids: Vec<String>,
    /// 0-based.
    pub labels: Vec<usize>,
    pub probabilities: Option<Array2<f64>>,
}

pub fn read_labels<R: Read>(reader: R) -> Result<LabelTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let subject = col("subject").ok_or_else(|| MindsError::Ingest {
        row: 0,
        column: "subject".into(),
        message: "missing column".into(),
    })?;
    let label = col("label").ok_or_else(|| MindsError::Ingest {
        row: 0,
        column: "label".into(),
        message: "missing column".into(),
    })?;
    let prob_cols: Vec<usize> = (1..).map_while(|k| col(&format!("p{k}"))).collect();
    let (mut ids, mut labels, mut probs) = (Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        ids.push(rec.get(subject).unwrap_or("").to_string());
        let l: usize = rec
            .get(label)
            .and_then(|s| s.trim().parse().ok())
            .filter(|&l: &usize| l >= 1)
            .ok_or_else(|| MindsError::Ingest {
                row,
                column: "label".into(),
                message: "labels must be positive integers".into(),
            })?;
        labels.push(l - 1);
        for (k, &c) in prob_cols.iter().enumerate() {
            let p: f64 = rec
                .get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| MindsError::Ingest {
                    row,
                    column: format!("p{}", k + 1),
                    message: "cannot parse probability".into(),
                })?;
            probs.push(p);
        }
    }
    let probabilities = (!prob_cols.is_empty())
        .then(|| Array2::from_shape_vec((ids.len(), prob_cols.len()), probs).expect("row-major fill"));
    Ok(LabelTable {
        subject_ids: ids,
        labels,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec() -> ColumnSpec {
        ColumnSpec {
            id_column: Some("id".into()),
            binary: vec!["q1".into(), "q2".into()],
            continuous: vec!["m1".into()],
        }
    }

    #[test]
    fn rows_with_missing_cells_are_dropped() {
        let csv = "id,q1,q2,m1,unused\na,1,0,0.5,\nb,,1,2.0,x\nc,0,1,NA,\nd,1,1,-1e3,\n";
        let ing = read_dataset(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(ing.dropped_rows, vec![2, 3]);
        assert_eq!(ing.data.binary, array![[1, 0], [1, 1]]);
        assert_eq!(ing.data.continuous, array![[0.5], [-1000.0]]);
        assert_eq!(ing.data.subject_ids, vec!["a", "d"]);
    }

    #[test]
    fn bad_binary_cell_names_row_and_column() {
        let csv = "id,q1,q2,m1\na,1,0,0.5\nb,2,1,2.0\n";
        match read_dataset(csv.as_bytes(), &spec()) {
            Err(MindsError::Ingest { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "q1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparsable_number_is_an_ingest_error() {
        let csv = "id,q1,q2,m1\na,1,0,zero\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), &spec()),
            Err(MindsError::Ingest { row: 1, .. })
        ));
    }

    #[test]
    fn missing_header_column_is_reported() {
        let csv = "id,q1,m1\na,1,0.5\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), &spec()),
            Err(MindsError::Ingest { row: 0, .. })
        ));
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let data = MixedDataset::new(
            array![[1, 0], [0, 1]],
            array![[0.1 + 0.2], [std::f64::consts::PI / 7.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let back = read_dataset(buf.as_slice(), &ColumnSpec::for_dataset(&data)).unwrap();
        assert_eq!(back.data, data);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 123456.789] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn labels_round_trip() {
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &["x".into(), "y".into()], &[1, 0]).unwrap();
        let t = read_labels(buf.as_slice()).unwrap();
        assert_eq!(t.labels, vec![1, 0]);
        assert!(t.probabilities.is_none());
    }
}
