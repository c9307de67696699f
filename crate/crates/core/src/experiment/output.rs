//! CSV result files and their aggregation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::ResultRow;

pub const HEADER: &str = "n,trial,estimator,post,metric,value,iterations,wall_ms";

/// Exponent notation with 17 significant digits, enough to round-trip.
fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes rows as CSV with LF line endings. Output depends only on the rows.
pub fn emit_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.trial.to_string(),
            r.estimator.clone(),
            r.post.clone(),
            r.metric.clone(),
            fmt_value(r.value),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    emit_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Malformed(e.to_string()))
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Malformed(format!("bad field {i} on line {line}")))
}

/// Reads rows written by [`emit_csv`].
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != HEADER {
        return Err(Error::Malformed(format!("unexpected header {:?}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let iterations = match rec.get(6) {
            Some("") | None => None,
            Some(_) => Some(field(&rec, 6, line)?),
        };
        rows.push(ResultRow {
            n: field(&rec, 0, line)?,
            trial: field(&rec, 1, line)?,
            estimator: field(&rec, 2, line)?,
            post: field(&rec, 3, line)?,
            metric: field(&rec, 4, line)?,
            value: field(&rec, 5, line)?,
            iterations,
            wall_ms: field(&rec, 7, line)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Median,
    Mean,
}

impl FromStr for Stat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Stat::Median),
            "mean" => Ok(Stat::Mean),
            _ => Err(Error::InvalidParameter(format!("unknown statistic {s:?}"))),
        }
    }
}

impl Stat {
    pub fn name(self) -> &'static str {
        match self {
            Stat::Median => "median",
            Stat::Mean => "mean",
        }
    }

    fn apply(self, values: &mut [f64]) -> f64 {
        match self {
            Stat::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Stat::Median => {
                values.sort_by(f64::total_cmp);
                let m = values.len() / 2;
                if values.len() % 2 == 1 {
                    values[m]
                } else {
                    0.5 * (values[m - 1] + values[m])
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub n: u64,
    pub estimator: String,
    pub post: String,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
}

/// Collapses trials of each `(n, estimator, post, metric)` into one value.
pub fn aggregate(rows: &[ResultRow], stat: Stat) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(u64, &str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.n, &r.estimator, &r.post, &r.metric))
            .or_default()
            .push(r.value);
    }
    cells
        .into_iter()
        .map(|((n, e, p, m), mut v)| AggregateRow {
            n,
            estimator: e.to_string(),
            post: p.to_string(),
            metric: m.to_string(),
            trials: v.len(),
            value: stat.apply(&mut v),
        })
        .collect()
}

pub fn emit_aggregate_csv<W: Write>(rows: &[AggregateRow], stat: Stat, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["n", "estimator", "post", "metric", stat.name(), "trials"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.estimator.clone(),
            r.post.clone(),
            r.metric.clone(),
            fmt_value(r.value),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(n: u64, trial: u32, value: f64, iterations: Option<usize>) -> ResultRow {
        ResultRow {
            n,
            trial,
            estimator: "gibu".into(),
            post: "none".into(),
            metric: "emd".into(),
            value,
            iterations,
            wall_ms: 0,
        }
    }

    #[test]
    fn csv_layout() {
        let s = to_csv_string(&[row(1000, 0, 0.25, Some(12)), row(1000, 1, 1e-300, None)]).unwrap();
        assert_eq!(
            s,
            "n,trial,estimator,post,metric,value,iterations,wall_ms\n\
             1000,0,gibu,none,emd,2.5000000000000000e-1,12,0\n\
             1000,1,gibu,none,emd,1.0000000000000000e-300,,0\n"
        );
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(parse_csv(format!("{HEADER}\nx,0,a,b,c,1,,0\n").as_bytes()).is_err());
    }

    #[test]
    fn aggregation() {
        let rows: Vec<_> = [3.0, 1.0, 2.0, 10.0].iter().enumerate().map(|(t, &v)| row(10, t as u32, v, None)).collect();
        let med = aggregate(&rows, Stat::Median);
        assert_eq!(med.len(), 1);
        assert_eq!((med[0].value, med[0].trials), (2.5, 4));
        assert_eq!(aggregate(&rows[..3], Stat::Median)[0].value, 2.0);
        assert_eq!(aggregate(&rows, Stat::Mean)[0].value, 4.0);
        assert!("mode".parse::<Stat>().is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trips_exactly(
            vals in prop::collection::vec((any::<f64>().prop_filter("finite", |v| v.is_finite()), prop::option::of(0usize..100000)), 1..20)
        ) {
            let rows: Vec<_> = vals.iter().enumerate().map(|(t, &(v, it))| row(100, t as u32, v, it)).collect();
            let s = to_csv_string(&rows).unwrap();
            let back = parse_csv(s.as_bytes()).unwrap();
            prop_assert_eq!(&back, &rows);
            prop_assert_eq!(to_csv_string(&back).unwrap(), s);
        }
    }
}
