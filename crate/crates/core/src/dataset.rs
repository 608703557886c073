//! Dataset ingestion: UCR-style series files, bag CSV and precomputed Gram CSV.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Bag, Instance, Label, LabeledBag, Sample};
use crate::error::{invalid, Error, Result};
use crate::kernel::PrecomputedGram;
use crate::timeseries::TimeSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// One series per line, label first; whitespace or comma separated.
    UcrTs,
    /// Rows `bag_id,label,feature...`.
    BagCsv,
    /// Square kernel matrix plus an index file of `row,bag_id,label`.
    GramCsv,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucr_ts" | "ucr" => Ok(DataFormat::UcrTs),
            "bag_csv" => Ok(DataFormat::BagCsv),
            "gram_csv" => Ok(DataFormat::GramCsv),
            other => Err(invalid("format", format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::UcrTs => "ucr_ts",
            DataFormat::BagCsv => "bag_csv",
            DataFormat::GramCsv => "gram_csv",
        })
    }
}

/// How raw label strings become ±1.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelMapping {
    /// Exactly two labels; the lexicographically smaller one is −1.
    #[default]
    Auto,
    /// One label is +1, every other label −1.
    OneVsRest {
        positive: String,
    },
    Explicit {
        labels: BTreeMap<String, Label>,
    },
}

/// Integral numeric labels are canonicalized, so `1`, `1.0` and
/// `1.0000000e+00` name the same class.
pub fn canonical_label(raw: &str) -> String {
    let t = raw.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", v as i64),
        _ => t.to_string(),
    }
}

impl LabelMapping {
    /// Parse `name:±1` pairs separated by commas, e.g. `1:-1,2:+1,3:+1`.
    pub fn parse_pairs(spec: &str) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, sign) = pair
                .rsplit_once(':')
                .ok_or_else(|| invalid("label_map", format!("expected name:sign, got {pair:?}")))?;
            let sign: i64 = sign
                .trim()
                .trim_start_matches('+')
                .parse()
                .map_err(|_| invalid("label_map", format!("bad sign in {pair:?}")))?;
            labels.insert(canonical_label(name), Label::try_from(sign)?);
        }
        if labels.is_empty() {
            return Err(invalid("label_map", "no pairs given"));
        }
        Ok(LabelMapping::Explicit { labels })
    }

    /// Fix an `Auto` mapping against the observed labels; other kinds pass through.
    pub fn resolve<'a>(&self, observed: impl IntoIterator<Item = &'a str>) -> Result<LabelMapping> {
        match self {
            LabelMapping::Auto => {
                let distinct: BTreeSet<&str> = observed.into_iter().collect();
                if distinct.len() != 2 {
                    return Err(Error::Validation(format!(
                        "expected exactly two label values, found {}: {:?}",
                        distinct.len(),
                        distinct
                    )));
                }
                let mut it = distinct.into_iter();
                let labels = BTreeMap::from([
                    (it.next().unwrap().to_string(), Label::Negative),
                    (it.next().unwrap().to_string(), Label::Positive),
                ]);
                Ok(LabelMapping::Explicit { labels })
            }
            other => Ok(other.clone()),
        }
    }

    /// Map one canonical label. `Auto` must be resolved first.
    pub fn map(&self, label: &str) -> Option<Label> {
        match self {
            LabelMapping::Auto => None,
            LabelMapping::OneVsRest { positive } => Some(if label == positive {
                Label::Positive
            } else {
                Label::Negative
            }),
            LabelMapping::Explicit { labels } => labels.get(label).copied(),
        }
    }

    fn map_at(&self, label: &str, line: usize) -> Result<Label> {
        self.map(label).ok_or_else(|| Error::Parse {
            line,
            msg: format!("label {label:?} is not covered by the label mapping"),
        })
    }
}

#[derive(Clone, Debug)]
pub enum Data {
    Series(Vec<TimeSeries>),
    Bags(Sample),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::Series(s) => s.len(),
            Data::Bags(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels in input order; series without a label are an error.
    pub fn labels(&self) -> Result<Vec<Label>> {
        match self {
            Data::Series(s) => s
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    t.label
                        .ok_or_else(|| Error::Validation(format!("series {i} has no label")))
                })
                .collect(),
            Data::Bags(s) => Ok(s.labels().collect()),
        }
    }

    /// Keep the given items, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Data> {
        Ok(match self {
            Data::Series(s) => Data::Series(indices.iter().map(|&i| s[i].clone()).collect()),
            Data::Bags(s) => Data::Bags(s.subset(indices)?),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub data: Data,
    /// Present for `gram_csv` input; bag instances are row handles into it.
    pub gram: Option<Arc<PrecomputedGram>>,
    /// The mapping actually applied (never `Auto`).
    pub mapping: LabelMapping,
}

#[derive(Clone, Debug)]
pub struct DatasetSource {
    pub format: DataFormat,
    pub path: PathBuf,
    /// Index file for `gram_csv`.
    pub index: Option<PathBuf>,
    pub mapping: LabelMapping,
}

pub fn load_dataset(src: &DatasetSource) -> Result<Dataset> {
    match src.format {
        DataFormat::UcrTs => {
            let mut text = String::new();
            File::open(&src.path)?.read_to_string(&mut text)?;
            let (series, mapping) = parse_ucr(&text, &src.mapping)?;
            Ok(Dataset {
                data: Data::Series(series),
                gram: None,
                mapping,
            })
        }
        DataFormat::BagCsv => {
            let (sample, mapping) = parse_bag_csv(File::open(&src.path)?, &src.mapping)?;
            Ok(Dataset {
                data: Data::Bags(sample),
                gram: None,
                mapping,
            })
        }
        DataFormat::GramCsv => {
            let index = src
                .index
                .as_ref()
                .ok_or_else(|| invalid("index", "gram_csv needs an index file"))?;
            let gram = parse_gram_matrix(File::open(&src.path)?)?;
            let (sample, mapping) = parse_gram_index(File::open(index)?, gram.size(), &src.mapping)?;
            Ok(Dataset {
                data: Data::Bags(sample),
                gram: Some(Arc::new(gram)),
                mapping,
            })
        }
    }
}

fn parse_float(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value {field:?}"),
        });
    }
    Ok(v)
}

/// Parse UCR text. Blank lines and lines starting with `#` are skipped.
pub fn parse_ucr(text: &str, mapping: &LabelMapping) -> Result<(Vec<TimeSeries>, LabelMapping)> {
    let mut rows: Vec<(usize, String, Vec<f64>)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        let label = canonical_label(fields.next().expect("line is nonempty"));
        let values = fields.map(|f| parse_float(f, line_no)).collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "series has no values".into(),
            });
        }
        rows.push((line_no, label, values));
    }
    if rows.is_empty() {
        return Err(Error::Validation("no series in input".into()));
    }
    let mapping = mapping.resolve(rows.iter().map(|r| r.1.as_str()))?;
    let series = rows
        .into_iter()
        .map(|(line, label, values)| TimeSeries::new(values, Some(mapping.map_at(&label, line)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((series, mapping))
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// Rows grouped into bags by id, in order of first appearance. A first row
/// whose feature columns are not numeric is taken as a header.
struct Grouped {
    order: Vec<String>,
    bags: HashMap<String, (String, usize, Vec<Vec<f64>>)>,
}

impl Grouped {
    fn new() -> Self {
        Grouped {
            order: Vec::new(),
            bags: HashMap::new(),
        }
    }

    fn push(&mut self, id: &str, label: String, line: usize, row: Vec<f64>) -> Result<()> {
        match self.bags.get_mut(id) {
            Some((first, _, rows)) => {
                if *first != label {
                    return Err(Error::Parse {
                        line,
                        msg: format!("bag {id:?} has conflicting labels {first:?} and {label:?}"),
                    });
                }
                rows.push(row);
            }
            None => {
                self.order.push(id.to_string());
                self.bags.insert(id.to_string(), (label, line, vec![row]));
            }
        }
        Ok(())
    }

    fn into_sample(
        mut self,
        mapping: &LabelMapping,
        make: impl Fn(Vec<f64>) -> Instance,
    ) -> Result<(Sample, LabelMapping)> {
        if self.order.is_empty() {
            return Err(Error::Validation("no bags in input".into()));
        }
        let mapping = mapping.resolve(self.order.iter().map(|id| self.bags[id].0.as_str()))?;
        let items = self
            .order
            .iter()
            .map(|id| {
                let (label, line, rows) = self.bags.remove(id).expect("grouped id");
                Ok(LabeledBag::new(
                    Bag::new(rows.into_iter().map(&make).collect()),
                    mapping.map_at(&label, line)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Sample::new(items)?, mapping))
    }
}

pub fn parse_bag_csv<R: Read>(input: R, mapping: &LabelMapping) -> Result<(Sample, LabelMapping)> {
    let mut grouped = Grouped::new();
    let mut width: Option<usize> = None;
    for (k, rec) in csv_reader(input).records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() < 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected bag_id,label,features...; got {} fields", rec.len()),
            });
        }
        if k == 0 && rec[2].parse::<f64>().is_err() {
            continue;
        }
        let features = (2..rec.len())
            .map(|j| parse_float(&rec[j], line))
            .collect::<Result<Vec<f64>>>()?;
        match width {
            Some(w) if w != features.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("ragged row: {} features, expected {w}", features.len()),
                })
            }
            _ => width = Some(features.len()),
        }
        grouped.push(&rec[0], canonical_label(&rec[1]), line, features)?;
    }
    grouped.into_sample(mapping, Instance::new)
}

/// Square, symmetric kernel matrix, one row per line.
pub fn parse_gram_matrix<R: Read>(input: R) -> Result<PrecomputedGram> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in csv_reader(input).records() {
        let rec = rec?;
        let line = record_line(&rec);
        let row = rec.iter().map(|f| parse_float(f, line)).collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("ragged row: {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows[0].len() != n {
        return Err(Error::Validation(format!(
            "gram matrix must be square, got {n} rows of {} entries",
            rows.first().map_or(0, Vec::len)
        )));
    }
    PrecomputedGram::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Index rows `row,bag_id,label`; `row` addresses the Gram matrix.
pub fn parse_gram_index<R: Read>(input: R, size: usize, mapping: &LabelMapping) -> Result<(Sample, LabelMapping)> {
    let mut grouped = Grouped::new();
    for (k, rec) in csv_reader(input).records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected row,bag_id,label; got {} fields", rec.len()),
            });
        }
        let row: usize = match rec[0].parse() {
            Ok(r) => r,
            Err(_) if k == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("bad row index {:?}", &rec[0]),
                })
            }
        };
        if row >= size {
            return Err(Error::Parse {
                line,
                msg: format!("row {row} outside gram matrix of size {size}"),
            });
        }
        grouped.push(&rec[1], canonical_label(&rec[2]), line, vec![row as f64])?;
    }
    grouped.into_sample(mapping, |v| Instance::from_index(v[0] as usize))
}
