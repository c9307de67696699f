//! Gowalla check-in parsing and binning onto a planar grid.
//!
//! Input lines are tab-separated `user_id, timestamp, lat, lon, location_id`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::alphabet::PlanarGrid;
use crate::distributions::SampleSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkin {
    pub user_id: u64,
    pub timestamp: String,
    pub lat: f64,
    pub lon: f64,
    pub location_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCheckins {
    pub checkins: Vec<Checkin>,
    pub lines: usize,
    pub malformed: usize,
}

fn parse_line(line: &str) -> Option<Checkin> {
    let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
    let [user, ts, lat, lon, loc] = fields.as_slice() else {
        return None;
    };
    let lat: f64 = lat.trim().parse().ok()?;
    let lon: f64 = lon.trim().parse().ok()?;
    if !((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)) {
        return None;
    }
    Some(Checkin {
        user_id: user.trim().parse().ok()?,
        timestamp: ts.to_string(),
        lat,
        lon,
        location_id: loc.trim().parse().ok()?,
    })
}

/// Parses check-ins from any line source. Malformed lines are skipped and
/// counted; more than half malformed means the input is not check-in data.
pub fn parse_gowalla_reader<R: BufRead>(reader: R) -> Result<ParsedCheckins> {
    let mut out = ParsedCheckins { checkins: Vec::new(), lines: 0, malformed: 0 };
    for line in reader.lines() {
        let line = line?;
        out.lines += 1;
        match parse_line(&line) {
            Some(c) => out.checkins.push(c),
            None => out.malformed += 1,
        }
    }
    if out.lines == 0 {
        log::warn!("check-in input is empty");
    } else if out.malformed * 2 > out.lines {
        return Err(Error::Malformed(format!(
            "{} of {} lines are not check-ins; is this a Gowalla check-in file?",
            out.malformed, out.lines
        )));
    } else if out.malformed > 0 {
        log::warn!("skipped {} malformed check-in lines of {}", out.malformed, out.lines);
    }
    Ok(out)
}

pub fn parse_gowalla(path: impl AsRef<Path>) -> Result<ParsedCheckins> {
    parse_gowalla_reader(BufReader::new(File::open(path)?))
}

/// Keeps the first check-in of every user, in input order.
pub fn one_per_user(checkins: &[Checkin]) -> Vec<Checkin> {
    let mut seen = HashSet::new();
    checkins.iter().filter(|c| seen.insert(c.user_id)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCheckins {
    pub samples: SampleSet,
    /// check-ins outside the grid's bounding box
    pub dropped: usize,
}

/// One sample per in-box check-in, the flat index of its cell.
pub fn bin_to_grid(checkins: &[Checkin], grid: &PlanarGrid) -> Result<BinnedCheckins> {
    grid.bbox().ok_or(Error::MissingBoundingBox)?;
    let mut values = Vec::with_capacity(checkins.len());
    let mut dropped = 0;
    for c in checkins {
        match grid.cell_of(c.lat, c.lon)? {
            Some(cell) => values.push(cell),
            None => dropped += 1,
        }
    }
    Ok(BinnedCheckins { samples: SampleSet { values, seed: 0 }, dropped })
}

/// Per-cell counts of a sample set over `size` cells.
pub fn cell_counts(samples: &SampleSet, size: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; size];
    for &v in &samples.values {
        *counts.get_mut(v).ok_or(Error::IndexOutOfRange { index: v, size })? += 1;
    }
    Ok(counts)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CountRow {
    cell_index: usize,
    count: u64,
}

/// Writes `cell_index,count` rows for every cell.
pub fn write_cell_counts(path: impl AsRef<Path>, counts: &[u64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for (cell_index, &count) in counts.iter().enumerate() {
        w.serialize(CountRow { cell_index, count })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `cell_index,count` file; cells not listed have count 0.
pub fn read_cell_counts(path: impl AsRef<Path>, size: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; size];
    for row in csv::Reader::from_path(path)?.deserialize() {
        let row: CountRow = row?;
        *counts
            .get_mut(row.cell_index)
            .ok_or(Error::IndexOutOfRange { index: row.cell_index, size })? += row.count;
    }
    Ok(counts)
}

/// Expands cached counts back into a sample set in cell order.
pub fn samples_from_counts(counts: &[u64]) -> SampleSet {
    let values = counts
        .iter()
        .enumerate()
        .flat_map(|(cell, &c)| std::iter::repeat_n(cell, c as usize))
        .collect();
    SampleSet { values, seed: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::BoundingBox;
    use crate::distributions::total_variation;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use std::io::Cursor;

    #[test]
    fn parses_a_record() {
        let r = parse_gowalla_reader(Cursor::new("0\t2010-10-19T23:55:27Z\t30.23\t-97.79\t22847\n")).unwrap();
        assert_eq!(
            r.checkins,
            vec![Checkin {
                user_id: 0,
                timestamp: "2010-10-19T23:55:27Z".into(),
                lat: 30.23,
                lon: -97.79,
                location_id: 22847
            }]
        );
        assert_eq!(r.malformed, 0);
    }

    #[test]
    fn empty_and_malformed_lines() {
        let r = parse_gowalla_reader(Cursor::new("")).unwrap();
        assert!(r.checkins.is_empty() && r.lines == 0);

        let text = "1\tt\t37.75\t-122.45\t5\n2\tt\t37.75\t-122.45\n3\tt\t37.76\t-122.44\t6\n";
        let r = parse_gowalla_reader(Cursor::new(text)).unwrap();
        assert_eq!((r.checkins.len(), r.malformed, r.lines), (2, 1, 3));

        let junk = "a,b,c\nd,e,f\n1\tt\t37.75\t-122.45\t5\n";
        assert!(matches!(parse_gowalla_reader(Cursor::new(junk)), Err(Error::Malformed(_))));
        assert!(parse_gowalla("/definitely/not/here.tsv").is_err());
    }

    #[test]
    fn binning() {
        let g = PlanarGrid::san_francisco();
        let b = BoundingBox::SAN_FRANCISCO;
        let mk = |lat, lon| Checkin { user_id: 1, timestamp: String::new(), lat, lon, location_id: 0 };
        let out = bin_to_grid(&[mk(b.lat_min, b.lon_min), mk(30.23, -97.79)], &g).unwrap();
        assert_eq!(out.samples.values, vec![0]);
        assert_eq!(out.dropped, 1);
        assert!(bin_to_grid(&[], &PlanarGrid::new(2, 2, 1.0).unwrap()).is_err());
    }

    #[test]
    fn uniform_scatter_bins_uniformly() {
        let g = PlanarGrid::san_francisco();
        let b = BoundingBox::SAN_FRANCISCO;
        let mut rng = rng_from_seed(99);
        let pts: Vec<Checkin> = (0..10_000)
            .map(|i| Checkin {
                user_id: i,
                timestamp: String::new(),
                lat: rng.random_range(b.lat_min..b.lat_max),
                lon: rng.random_range(b.lon_min..b.lon_max),
                location_id: 0,
            })
            .collect();
        let out = bin_to_grid(&pts, &g).unwrap();
        assert_eq!(out.dropped, 0);
        let freq = out.samples.frequencies(g.size()).unwrap();
        assert!(total_variation(&freq, &vec![1.0 / g.size() as f64; g.size()]) < 0.1);
    }

    #[test]
    fn accounting_and_order_independence() {
        let text = "1\tt\t37.75\t-122.45\t5\nbad\n2\tt\t30.0\t-97.0\t6\n1\tt\t37.73\t-122.50\t7\n";
        let r = parse_gowalla_reader(Cursor::new(text)).unwrap();
        let g = PlanarGrid::san_francisco();
        let out = bin_to_grid(&r.checkins, &g).unwrap();
        assert_eq!(out.samples.len() + out.dropped + r.malformed, r.lines);

        let mut rev = r.checkins.clone();
        rev.reverse();
        let mut a = out.samples.values.clone();
        let mut b = bin_to_grid(&rev, &g).unwrap().samples.values;
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);

        assert_eq!(one_per_user(&r.checkins).len(), 2);
        assert_eq!(one_per_user(&r.checkins)[0].location_id, 5);
    }

    #[test]
    fn count_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.csv");
        let counts = vec![3, 0, 7, 1];
        write_cell_counts(&path, &counts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("cell_index,count\n0,3\n"));
        assert_eq!(read_cell_counts(&path, 4).unwrap(), counts);
        assert!(read_cell_counts(&path, 2).is_err());
        let s = samples_from_counts(&counts);
        assert_eq!(cell_counts(&s, 4).unwrap(), counts);
    }
}
