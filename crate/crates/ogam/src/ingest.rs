//! Streaming CSV ingestion: rows grouped by block id in file order, never
//! holding more than one block in memory.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::blockstats::DataBlock;
use crate::error::{OgamError, Result};

/// Expected header: `block,y,x1,...,xd`.
pub struct BlockReader<R: Read> {
    rdr: csv::Reader<R>,
    d: usize,
    line: u64,
    next_index: usize,
    /// Row buffered from the previous group boundary.
    pending: Option<(String, f64, Vec<f64>)>,
    done: bool,
}

impl BlockReader<File> {
    pub fn open(path: &Path) -> Result<BlockReader<File>> {
        BlockReader::new(File::open(path)?)
    }
}

impl<R: Read> BlockReader<R> {
    pub fn new(reader: R) -> Result<BlockReader<R>> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| OgamError::Parse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 3 || cols[0] != "block" || cols[1] != "y" {
            return Err(OgamError::Parse {
                line: 1,
                msg: format!("expected header 'block,y,x1,...,xd', got '{}'", cols.join(",")),
            });
        }
        for (j, col) in cols[2..].iter().enumerate() {
            let expect = format!("x{}", j + 1);
            if *col != expect {
                return Err(OgamError::Parse {
                    line: 1,
                    msg: format!("expected covariate column '{expect}', got '{col}'"),
                });
            }
        }
        Ok(BlockReader {
            rdr,
            d: cols.len() - 2,
            line: 1,
            next_index: 1,
            pending: None,
            done: false,
        })
    }

    pub fn dimensions(&self) -> usize {
        self.d
    }

    fn parse_row(&self, record: &csv::StringRecord, line: u64) -> Result<(String, f64, Vec<f64>)> {
        if record.len() != self.d + 2 {
            return Err(OgamError::Parse {
                line,
                msg: format!("expected {} fields, got {}", self.d + 2, record.len()),
            });
        }
        let id = record[0].to_string();
        let y: f64 = record[1].parse().map_err(|_| OgamError::Parse {
            line,
            msg: format!("bad response '{}'", &record[1]),
        })?;
        let mut x = Vec::with_capacity(self.d);
        for j in 0..self.d {
            let raw = &record[j + 2];
            let v: f64 = raw.parse().map_err(|_| OgamError::Parse {
                line,
                msg: format!("bad covariate x{} = '{raw}'", j + 1),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(OgamError::Parse {
                    line,
                    msg: format!("covariate x{} = {v} outside [0,1]", j + 1),
                });
            }
            x.push(v);
        }
        Ok((id, y, x))
    }

    fn read_row(&mut self) -> Result<Option<(String, f64, Vec<f64>)>> {
        let mut record = csv::StringRecord::new();
        match self.rdr.read_record(&mut record) {
            Ok(true) => {
                self.line += 1;
                let line = self.line;
                self.parse_row(&record, line).map(Some)
            }
            Ok(false) => Ok(None),
            Err(e) => Err(OgamError::Parse {
                line: self.line + 1,
                msg: e.to_string(),
            }),
        }
    }
}

impl<R: Read> Iterator for BlockReader<R> {
    type Item = Result<DataBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let first = match self.pending.take() {
            Some(row) => row,
            None => match self.read_row() {
                Ok(Some(row)) => row,
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            },
        };
        let id = first.0.clone();
        let mut y = vec![first.1];
        let mut x = first.2;
        loop {
            match self.read_row() {
                Ok(Some(row)) => {
                    if row.0 == id {
                        y.push(row.1);
                        x.extend_from_slice(&row.2);
                    } else {
                        self.pending = Some(row);
                        break;
                    }
                }
                Ok(None) => {
                    self.done = true;
                    break;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        let index = self.next_index;
        self.next_index += 1;
        Some(DataBlock::new(index, self.d, x, y))
    }
}

/// Write blocks in the ingest format.
pub fn write_blocks_csv<W: std::io::Write>(
    mut out: W,
    blocks: impl Iterator<Item = DataBlock>,
) -> Result<()> {
    let mut header_written = false;
    for block in blocks {
        if !header_written {
            let cols: Vec<String> = (1..=block.d).map(|j| format!("x{j}")).collect();
            writeln!(out, "block,y,{}", cols.join(","))?;
            header_written = true;
        }
        for i in 0..block.len() {
            let xs: Vec<String> = (0..block.d)
                .map(|j| format!("{}", block.xv(i, j)))
                .collect();
            writeln!(out, "{},{},{}", block.index, block.y[i], xs.join(","))?;
        }
    }
    Ok(())
}
