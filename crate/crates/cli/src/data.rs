//! CSV ingestion and export.
//!
//! Files are UTF-8 with a header row and `.` as the decimal separator. Only
//! the mapped columns are parsed; a row with a missing, non-numeric or
//! non-finite mapped cell is dropped and counted.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rkhs_iv::Dataset;
use serde::Serialize;

use crate::error::CliError;

/// Which CSV columns play which role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ColumnMapping {
    pub y: String,
    pub z: String,
    pub x: Vec<String>,
    pub w: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub rows_read: usize,
    /// Rows dropped because a mapped cell was unusable.
    pub dropped_rows: usize,
}

pub fn load_csv(path: &Path, mapping: &ColumnMapping) -> Result<LoadedData, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, mapping)
}

pub fn read_csv<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<LoadedData, CliError> {
    if mapping.w.is_empty() {
        return Err(CliError::Config(
            "at least one instrument column (--w) is required".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read CSV header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Config(format!("column '{name}' not found in CSV header")))
    };
    let iy = find(&mapping.y)?;
    let iz = find(&mapping.z)?;
    let ix = mapping
        .x
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;
    let iw = mapping
        .w
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;

    let (mut y, mut z, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rows_read = 0;
    let mut dropped_rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Data(format!("malformed CSV: {e}")))?;
        rows_read += 1;
        let cell = |i: usize| -> Option<f64> {
            let v: f64 = record.get(i)?.trim().parse().ok()?;
            v.is_finite().then_some(v)
        };
        let row = (|| {
            let yi = cell(iy)?;
            let zi = cell(iz)?;
            let xi = ix.iter().map(|&i| cell(i)).collect::<Option<Vec<_>>>()?;
            let wi = iw.iter().map(|&i| cell(i)).collect::<Option<Vec<_>>>()?;
            Some((yi, zi, xi, wi))
        })();
        match row {
            Some((yi, zi, xi, wi)) => {
                y.push(yi);
                z.push(zi);
                x.extend(xi);
                w.extend(wi);
            }
            None => dropped_rows += 1,
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(CliError::Data(format!(
            "no usable rows ({rows_read} read, {dropped_rows} dropped)"
        )));
    }
    let dataset = Dataset::new(
        DVector::from_vec(y),
        DVector::from_vec(z),
        DMatrix::from_row_slice(n, ix.len(), &x),
        DMatrix::from_row_slice(n, iw.len(), &w),
    )?;
    Ok(LoadedData {
        dataset,
        rows_read,
        dropped_rows,
    })
}

/// Column names used by [`write_dataset_csv`].
pub fn default_mapping(p: usize, m: usize) -> ColumnMapping {
    ColumnMapping {
        y: "y".into(),
        z: "z".into(),
        x: (1..=p).map(|j| format!("x{j}")).collect(),
        w: (1..=m).map(|j| format!("w{j}")).collect(),
    }
}

/// Writes `y, z, x1.., w1..` with shortest round-trip number formatting.
pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<(), CliError> {
    let mapping = default_mapping(data.p(), data.w.ncols());
    let mut wtr = csv::Writer::from_writer(out);
    let header: Vec<&str> = [mapping.y.as_str(), mapping.z.as_str()]
        .into_iter()
        .chain(mapping.x.iter().map(String::as_str))
        .chain(mapping.w.iter().map(String::as_str))
        .collect();
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    wtr.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut row = vec![data.y[i].to_string(), data.z[i].to_string()];
        row.extend(data.x.row(i).iter().map(|v| v.to_string()));
        row.extend(data.w.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rkhs_iv::simulation::{draw_sample, DgpDesign, DgpSpec, TreatmentFunction};
    use rkhs_iv::RandomStream;

    fn mapping() -> ColumnMapping {
        ColumnMapping {
            y: "y".into(),
            z: "z".into(),
            x: vec!["x".into()],
            w: vec!["w".into()],
        }
    }

    #[test]
    fn reads_complete_rows() {
        let csv = "y,z,x,w\n1,2,3,4\n5,6,7,8\n9,10,11,12\n";
        let d = read_csv(csv.as_bytes(), &mapping()).unwrap();
        assert_eq!(d.dataset.n(), 3);
        assert_eq!(d.dropped_rows, 0);
        assert_eq!(d.dataset.x[(2, 0)], 11.0);
    }

    #[test]
    fn drops_rows_with_missing_cells() {
        let csv = "y,z,x,w,extra\n1,2,3,4,a\n5,,7,8,b\n9,10,11,12,c\n";
        let d = read_csv(csv.as_bytes(), &mapping()).unwrap();
        assert_eq!(d.dataset.n(), 2);
        assert_eq!(d.dropped_rows, 1);
        let csv = "y,z,x,w\n1,2,3,4\n5,NaN,7,8\n9,ten,11,12\n1,2\n";
        let d = read_csv(csv.as_bytes(), &mapping()).unwrap();
        assert_eq!((d.dataset.n(), d.dropped_rows), (1, 3));
    }

    #[test]
    fn missing_columns_and_empty_files_are_reported() {
        let err = read_csv("y,z,w\n1,2,3\n".as_bytes(), &mapping()).unwrap_err();
        assert_eq!(
            err,
            CliError::Config("column 'x' not found in CSV header".into())
        );
        let err = read_csv("y,z,x,w\n,,,\n".as_bytes(), &mapping()).unwrap_err();
        assert!(matches!(err, CliError::Data(_)));
    }

    #[test]
    fn round_trip_is_exact() {
        let spec = DgpSpec {
            design: DgpDesign::PartiallyLinear,
            ..DgpSpec::new(TreatmentFunction::NonPolynomial, 0.5, 50)
        };
        let d = draw_sample(&spec, RandomStream::new(1, 0));
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &default_mapping(1, 1)).unwrap();
        assert_eq!(back.dataset, d);
    }
}
