//! Time series with named channels and the thermocouple dataset CSV schema.

use crate::error::{Error, Result};
use crate::filter::{InputSeries, MeasurementSeries};
use crate::graph::Sensor;
use nalgebra::DVector;
use std::path::Path;

/// Dataset columns, in file order.
pub const DATASET_HEADER: [&str; 9] = ["t_s", "mdot_kg_s", "tc0_K", "tc1_K", "tc2a_K", "tc2b_K", "tc3_K", "tc4a_K", "tc4b_K"];

/// Strictly increasing timestamps with equally long named channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::input("channel names and columns differ in number"));
        }
        if let Some(c) = columns.iter().position(|c| c.len() != t.len()) {
            return Err(Error::input(format!("channel {} has {} rows, time has {}", names[c], columns[c].len(), t.len())));
        }
        if let Some(k) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("timestamp at row {} is not finite", k + 1)));
        }
        if let Some(k) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::input(format!("time is not strictly increasing at row {}", k + 2)));
        }
        Ok(Self { t, names, columns })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|c| self.columns[c].as_slice())
    }

    /// Every `factor`-th row, starting with the first.
    pub fn decimate(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::input("decimation factor must be at least 1"));
        }
        let pick = |v: &[f64]| v.iter().step_by(factor).copied().collect::<Vec<_>>();
        Ok(Self { t: pick(&self.t), names: self.names.clone(), columns: self.columns.iter().map(|c| pick(c)).collect() })
    }

    /// Mean sample interval, after checking every interval is within
    /// `rel_tol` of it.
    pub fn uniform_interval(&self, rel_tol: f64) -> Result<f64> {
        if self.t.len() < 2 {
            return Err(Error::input("a uniform interval needs at least two samples"));
        }
        let dt = (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64;
        if let Some(k) = self.t.windows(2).position(|w| ((w[1] - w[0]) - dt).abs() > rel_tol * dt) {
            return Err(Error::input(format!(
                "sample interval {} s at row {} deviates from {dt} s by more than {}%",
                self.t[k + 1] - self.t[k],
                k + 2,
                rel_tol * 100.0
            )));
        }
        Ok(dt)
    }

    /// Writes `time_header` followed by the channels. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv(&self, path: &Path, time_header: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![time_header.to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for k in 0..self.t.len() {
            let mut row = vec![self.t[k].to_string()];
            row.extend(self.columns.iter().map(|c| c[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV whose first column is time. Cells must parse as finite
    /// numbers; rows are reported 1-based after the header.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let fail = |row: usize, msg: String| Error::Dataset { path: shown.clone(), row, msg };
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.is_empty() {
            return Err(fail(0, "empty header".into()));
        }
        let mut t = Vec::new();
        let mut columns = vec![Vec::new(); header.len() - 1];
        for (k, rec) in r.records().enumerate() {
            let row = k + 1;
            let rec = rec.map_err(|e| fail(row, e.to_string()))?;
            if rec.len() != header.len() {
                return Err(fail(row, format!("expected {} fields, found {}", header.len(), rec.len())));
            }
            for (c, cell) in rec.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| fail(row, format!("column {}: '{cell}' is not a number", header[c])))?;
                if !v.is_finite() {
                    return Err(fail(row, format!("column {}: non-finite value", header[c])));
                }
                if c == 0 {
                    if let Some(&prev) = t.last() {
                        if !(v > prev) {
                            return Err(fail(row, format!("time {v} s does not increase (previous {prev} s)")));
                        }
                    }
                    t.push(v);
                } else {
                    columns[c - 1].push(v);
                }
            }
        }
        Self::new(t, header[1..].to_vec(), columns)
    }
}

/// A thermocouple dataset with the fixed column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    series: TimeSeries,
}

impl Dataset {
    pub fn from_series(series: TimeSeries) -> Result<Self> {
        let expected: Vec<String> = DATASET_HEADER[1..].iter().map(|s| s.to_string()).collect();
        if series.names() != expected.as_slice() {
            return Err(Error::input(format!("dataset channels {:?} do not match {:?}", series.names(), expected)));
        }
        Ok(Self { series })
    }

    /// Builds a dataset from the time, flow, inlet and six thermocouple channels.
    pub fn from_channels(t: Vec<f64>, mdot: Vec<f64>, tc0: Vec<f64>, tcs: [Vec<f64>; 6]) -> Result<Self> {
        let mut columns = vec![mdot, tc0];
        columns.extend(tcs);
        let names = DATASET_HEADER[1..].iter().map(|s| s.to_string()).collect();
        Self::from_series(TimeSeries::new(t, names, columns)?)
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }
    pub fn len(&self) -> usize {
        self.series.len()
    }
    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
    pub fn t(&self) -> &[f64] {
        self.series.t()
    }

    fn col(&self, name: &str) -> &[f64] {
        self.series.column(name).expect("schema checked at construction")
    }

    pub fn mdot(&self) -> &[f64] {
        self.col("mdot_kg_s")
    }
    pub fn tc0(&self) -> &[f64] {
        self.col("tc0_K")
    }

    /// Output channel for `sensor`, averaging thermocouple pairs.
    pub fn output(&self, sensor: Sensor) -> Vec<f64> {
        let cols: Vec<&[f64]> = sensor.channels().iter().map(|c| self.col(&format!("{c}_K"))).collect();
        (0..self.len()).map(|k| cols.iter().map(|c| c[k]).sum::<f64>() / cols.len() as f64).collect()
    }

    pub fn tc2(&self) -> Vec<f64> {
        self.output(Sensor::Tc2)
    }
    pub fn tc4(&self) -> Vec<f64> {
        self.output(Sensor::Tc4)
    }

    pub fn decimate(&self, factor: usize) -> Result<Self> {
        Ok(Self { series: self.series.decimate(factor)? })
    }

    /// Flow and inlet temperature as estimator inputs.
    pub fn inputs(&self) -> InputSeries<f64> {
        InputSeries { t: self.t().to_vec(), mdot: self.mdot().to_vec(), t_in: self.tc0().to_vec() }
    }

    /// Inputs at every row, with flow and inlet temperature taken only from
    /// every `every`-th row and held in between, as a logger sampling all
    /// channels at the slower rate would deliver them.
    pub fn held_inputs(&self, every: usize) -> Result<InputSeries<f64>> {
        if every == 0 {
            return Err(Error::input("hold factor must be at least 1"));
        }
        let hold = |c: &[f64]| (0..c.len()).map(|k| c[k - k % every]).collect();
        Ok(InputSeries { t: self.t().to_vec(), mdot: hold(self.mdot()), t_in: hold(self.tc0()) })
    }

    /// Measurement rows holding only the listed sensors, in TC1..TC4 order.
    pub fn measurements(&self, sensors: &[Sensor]) -> MeasurementSeries<f64> {
        let mut sorted = sensors.to_vec();
        sorted.sort();
        let cols: Vec<Vec<f64>> = sorted.iter().map(|&s| self.output(s)).collect();
        let y = (0..self.len()).map(|k| DVector::from_iterator(cols.len(), cols.iter().map(|c| c[k]))).collect();
        MeasurementSeries { t: self.t().to_vec(), y }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.series.write_csv(path, DATASET_HEADER[0])
    }
}

/// Loads and validates a dataset CSV: exact header, finite cells, strictly
/// increasing time.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let shown = path.display().to_string();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let missing: Vec<&str> = DATASET_HEADER.iter().copied().filter(|h| !header.iter().any(|x| x == h)).collect();
    if !missing.is_empty() {
        return Err(Error::Dataset { path: shown, row: 0, msg: format!("missing columns: {}", missing.join(", ")) });
    }
    if header != DATASET_HEADER {
        return Err(Error::Dataset { path: shown, row: 0, msg: format!("header must be exactly: {}", DATASET_HEADER.join(", ")) });
    }
    let series = TimeSeries::read_csv(path)?;
    if series.is_empty() {
        return Err(Error::Dataset { path: shown, row: 1, msg: "no data rows".into() });
    }
    Dataset::from_series(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "t_s, mdot_kg_s, tc0_K, tc1_K, tc2a_K, tc2b_K, tc3_K, tc4a_K, tc4b_K\n";

    #[test]
    fn three_rows_average_pairs() {
        let f = write(&format!(
            "{HEADER}0.0,0.1,290,291,292,294,293,296,298\n0.0125,0.1,290,291,280,281,293,296,297\n0.025,0.0,290,291,292,292,293,296,296\n"
        ));
        let d = load_dataset(f.path()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.tc2(), vec![293.0, 280.5, 292.0]);
        assert_eq!(d.tc4(), vec![297.0, 296.5, 296.0]);
        let m = d.measurements(&[Sensor::Tc3, Sensor::Tc1]);
        assert_eq!(m.y[0].as_slice(), &[291.0, 293.0]);
    }

    #[test]
    fn reversed_time_names_row() {
        let f = write(&format!("{HEADER}1.0,0,1,1,1,1,1,1,1\n0.5,0,1,1,1,1,1,1,1\n"));
        let err = load_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn nan_and_missing_columns() {
        let f = write(&format!("{HEADER}0,0,1,NaN,1,1,1,1,1\n"));
        let err = load_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("tc1_K"), "{err}");
        let f = write("t_s,mdot_kg_s,tc0_K\n0,0,1\n");
        let err = load_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains("missing columns") && err.contains("tc4b_K"), "{err}");
        let f = write(&format!("{HEADER}0,0,1,1,1\n"));
        assert!(load_dataset(f.path()).unwrap_err().to_string().contains("row 1"));
    }

    #[test]
    fn decimation_takes_every_nth_row() {
        let n = 80;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.0125).collect();
        let s = TimeSeries::new(t.clone(), vec!["a".into()], vec![(0..n).map(|k| k as f64).collect()]).unwrap();
        let d = s.decimate(8).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.column("a").unwrap()[1], 8.0);
        assert!((d.uniform_interval(0.01).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn jitter_check() {
        let s = TimeSeries::new(vec![0.0, 1.0, 2.005, 3.0], vec![], vec![]).unwrap();
        assert!(s.uniform_interval(0.01).is_ok());
        let s = TimeSeries::new(vec![0.0, 1.0, 2.2, 3.0], vec![], vec![]).unwrap();
        assert!(s.uniform_interval(0.01).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let t = vec![0.0, 0.1, 0.2 + 1e-17, 1.0 / 3.0];
        let v = vec![289.123_456_789_012_3, -1e-300, std::f64::consts::PI, 2.0f64.sqrt()];
        let s = TimeSeries::new(t, vec!["x".into()], vec![v]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        s.write_csv(f.path(), "t_s").unwrap();
        assert_eq!(TimeSeries::read_csv(f.path()).unwrap(), s);
    }
}
