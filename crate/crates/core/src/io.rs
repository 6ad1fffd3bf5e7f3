//! CSV formats for datasets and matrices.
//!
//! Dataset: header `task,y,x1,...,xd`, one example per row, 0-based task.
//! Matrix: header `c1,...,cm`, one matrix row per line, full precision.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::TaskDataset;
use crate::scalar::Real;

fn parse_value<T: Real>(field: &str, line: usize) -> Result<T> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: '{field}' is not a number")))?;
    Ok(T::lit(v))
}

pub fn read_dataset_from<T: Real, R: Read>(reader: R) -> Result<TaskDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "task" || &headers[1] != "y" {
        return Err(Error::Parse("dataset header must start with 'task,y'".into()));
    }
    let d = headers.len() - 2;
    let (mut x, mut y, mut task) = (Vec::new(), Vec::new(), Vec::new());
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let t: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad task index '{}'", &record[0])))?;
        task.push(t);
        y.push(parse_value(&record[1], line)?);
        for field in record.iter().skip(2) {
            x.push(parse_value(field, line)?);
        }
    }
    let m = task.iter().max().map_or(0, |t| t + 1);
    TaskDataset::from_parts(d, m, x, y, task)
}

pub fn read_dataset<T: Real>(path: impl AsRef<Path>) -> Result<TaskDataset<T>> {
    read_dataset_from(std::fs::File::open(path)?)
}

pub fn write_dataset_to<T: Real, W: Write>(data: &TaskDataset<T>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["task".to_string(), "y".to_string()];
    header.extend((1..=data.d()).map(|k| format!("x{k}")));
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = vec![data.task(i).to_string(), data.y(i).to_string()];
        row.extend(data.x(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_dataset<T: Real>(data: &TaskDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_to(data, std::fs::File::create(path)?)
}

pub fn read_matrix_from<T: Real, R: Read>(reader: R) -> Result<DMatrix<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = rdr.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        for field in record.iter() {
            values.push(parse_value(field, k + 2)?);
        }
        rows += 1;
    }
    if values.len() != rows * cols {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn read_matrix<T: Real>(path: impl AsRef<Path>) -> Result<DMatrix<T>> {
    read_matrix_from(std::fs::File::open(path)?)
}

pub fn write_matrix_to<T: Real, W: Write>(matrix: &DMatrix<T>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record((1..=matrix.ncols()).map(|k| format!("c{k}")))?;
    for row in matrix.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix<T: Real>(matrix: &DMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_to(matrix, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let data = TaskDataset::from_examples(
            2,
            2,
            vec![(vec![0.1, -2.5], 1.0 / 3.0, 1), (vec![1e-17, 4.0], -7.0, 0)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("task,y,x1,x2\n"));
        let back: TaskDataset<f64> = read_dataset_from(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0 / 3.0, -0.0, 1e300, 2.0f64.sqrt(), 5.0, -1e-300]);
        let mut buf = Vec::new();
        write_matrix_to(&m, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("c1,c2,c3\n"));
        let back: DMatrix<f64> = read_matrix_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn parse_errors() {
        assert!(read_dataset_from::<f64, _>("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_dataset_from::<f64, _>("task,y,x1\n0,abc,1\n".as_bytes()).is_err());
        assert!(read_matrix_from::<f64, _>("c1,c2\n1,2\n3\n".as_bytes()).is_err());
    }
}
