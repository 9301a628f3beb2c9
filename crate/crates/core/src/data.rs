//! Fused-trial records and their CSV interchange format.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::Error;
use crate::Result;

/// One fused-trial record. `v2` holds the generated modifier value even when
/// it is masked; estimation code must go through [`Observation::v2_obs`],
/// which respects the observed flag. Records ingested from CSV carry
/// `v2 = 0` with `v2_observed = false` when the column is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub s: u8,
    pub w1: u8,
    pub w2: f64,
    pub v1: [u8; 3],
    pub v2: u8,
    pub v2_observed: bool,
    pub a: u8,
    pub y: u8,
}

impl Observation {
    /// The modifier as available to an estimator: `None` when masked.
    pub fn v2_obs(&self) -> Option<u8> {
        self.v2_observed.then_some(self.v2)
    }

    /// Index of this record's observed-modifier cell in `0..8` (v1 only).
    pub fn v1_cell(&self) -> usize {
        (self.v1[0] as usize) << 2 | (self.v1[1] as usize) << 1 | self.v1[2] as usize
    }
}

/// A column-typed collection of records.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<Observation>,
}

pub const CSV_HEADER: &str = "s,w1,w2,v11,v12,v13,v2,a,y";

impl Dataset {
    pub fn new(records: Vec<Observation>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the dataset in the fixed interchange schema; `v2` is the empty
    /// string for records where the modifier is unobserved.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            let v2 = match r.v2_obs() {
                Some(v) => v.to_string(),
                None => String::new(),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.s, r.w1, r.w2, r.v1[0], r.v1[1], r.v1[2], v2, r.a, r.y
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Parses the interchange schema. Enforces the fused-design invariant
    /// that `v2` is present exactly when `s = 1`, reporting the offending
    /// 1-based data line otherwise.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::CsvFormat {
            line: 1,
            msg: "empty input".into(),
        })?;
        let header = header?;
        if header.trim() != CSV_HEADER {
            return Err(Error::CsvFormat {
                line: 1,
                msg: format!("expected header `{CSV_HEADER}`, got `{}`", header.trim()),
            });
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(Error::CsvFormat {
                    line: lineno,
                    msg: format!("expected 9 fields, got {}", fields.len()),
                });
            }
            let bit = |i: usize, name: &str| -> Result<u8> {
                match fields[i].trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::CsvFormat {
                        line: lineno,
                        msg: format!("column {name} must be 0 or 1, got `{other}`"),
                    }),
                }
            };
            let s = bit(0, "s")?;
            let w1 = bit(1, "w1")?;
            let w2: f64 = fields[2].trim().parse().map_err(|_| Error::CsvFormat {
                line: lineno,
                msg: format!("column w2 must be a real number, got `{}`", fields[2]),
            })?;
            let v1 = [bit(3, "v11")?, bit(4, "v12")?, bit(5, "v13")?];
            let v2_field = fields[6].trim();
            let (v2, v2_observed) = if v2_field.is_empty() {
                (0, false)
            } else {
                (bit(6, "v2")?, true)
            };
            if v2_observed != (s == 1) {
                let msg = if s == 1 {
                    "v2 missing for an S=1 row (v2 must be present iff S=1)"
                } else {
                    "v2 present for an S=0 row (v2 must be present iff S=1)"
                };
                return Err(Error::CsvFormat {
                    line: lineno,
                    msg: msg.into(),
                });
            }
            let a = bit(7, "a")?;
            let y = bit(8, "y")?;
            records.push(Observation {
                s,
                w1,
                w2,
                v1,
                v2,
                v2_observed,
                a,
                y,
            });
        }
        Ok(Self { records })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Masks `v2` on every record where `s = 0`, the observability pattern
    /// of the fused design.
    pub fn mask_v2_by_s(&mut self) {
        for r in &mut self.records {
            r.v2_observed = r.s == 1;
        }
    }
}

/// The 8 observed-modifier cells in a fixed enumeration order.
pub fn v1_cells() -> [[u8; 3]; 8] {
    let mut cells = [[0u8; 3]; 8];
    for (i, cell) in cells.iter_mut().enumerate() {
        *cell = [(i >> 2) as u8 & 1, (i >> 1) as u8 & 1, i as u8 & 1];
    }
    cells
}

/// Index of a v1 pattern in the [`v1_cells`] order.
pub fn v1_cell_index(v1: [u8; 3]) -> usize {
    (v1[0] as usize) << 2 | (v1[1] as usize) << 1 | v1[2] as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<Observation> {
        vec![
            Observation {
                s: 1,
                w1: 0,
                w2: 0.25,
                v1: [1, 0, 1],
                v2: 1,
                v2_observed: true,
                a: 1,
                y: 0,
            },
            Observation {
                s: 0,
                w1: 1,
                w2: 0.6171875,
                v1: [0, 1, 0],
                v2: 0,
                v2_observed: false,
                a: 0,
                y: 1,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = Dataset::new(sample_records());
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(back.records[0], ds.records[0]);
        // The masked v2 value itself is not representable in CSV; only the
        // observability flag and everything else must survive.
        assert_eq!(back.records[1].v2_obs(), None);
        assert_eq!(back.records[1].w2, ds.records[1].w2);
    }

    #[test]
    fn rejects_missing_v2_for_s1_row() {
        let text = format!("{CSV_HEADER}\n1,0,0.5,0,0,0,,0,0\n");
        let err = Dataset::read_csv(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("S=1"), "{msg}");
    }

    #[test]
    fn rejects_v2_present_for_s0_row() {
        let text = format!("{CSV_HEADER}\n0,0,0.5,0,0,0,1,0,0\n");
        let err = Dataset::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("S=0"));
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "a,b,c\n";
        assert!(Dataset::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn cell_indexing_round_trips() {
        for (i, cell) in v1_cells().iter().enumerate() {
            assert_eq!(v1_cell_index(*cell), i);
        }
    }
}
