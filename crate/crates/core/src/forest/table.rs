use std::io::{BufRead, Write};

use rand::seq::index;

use crate::error::{argument, Error, Result};
use crate::rng;

/// Row-per-entity numeric features with optional binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    columns: Vec<String>,
    ids: Vec<String>,
    data: Vec<f64>,
    labels: Option<Vec<bool>>,
}

impl FeatureTable {
    pub fn new(
        columns: Vec<String>,
        ids: Vec<String>,
        data: Vec<f64>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        if data.len() != ids.len() * columns.len() {
            return Err(Error::Schema(format!(
                "{} values for {} rows of {} columns",
                data.len(),
                ids.len(),
                columns.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != ids.len() {
                return Err(Error::Schema(format!(
                    "{} labels for {} rows",
                    l.len(),
                    ids.len()
                )));
            }
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Schema(format!(
                "non-finite value in row `{}`",
                ids[i / columns.len()]
            )));
        }
        Ok(Self {
            columns,
            ids,
            data,
            labels,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.n_rows() {
            return Err(Error::Schema(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n_rows()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Rows at `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            data: rows.iter().flat_map(|&i| self.row(i)).copied().collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Projection onto the named columns.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Schema(format!("no column `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            columns: names.iter().map(|s| s.to_string()).collect(),
            ids: self.ids.clone(),
            data: (0..self.n_rows())
                .flat_map(|r| idx.iter().map(move |&c| (r, c)))
                .map(|(r, c)| self.value(r, c))
                .collect(),
            labels: self.labels.clone(),
        })
    }

    /// CSV with header `id,<columns>[,label]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "id")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        if self.labels.is_some() {
            write!(w, ",label")?;
        }
        writeln!(w)?;
        for i in 0..self.n_rows() {
            write!(w, "{}", self.ids[i])?;
            for x in self.row(i) {
                write!(w, ",{x}")?;
            }
            if let Some(l) = &self.labels {
                write!(w, ",{}", u8::from(l[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |line: usize, m: String| Error::Syntax(format!("feature table line {line}: {m}"));
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?
            .map_err(|e| Error::io("<features>", e))?;
        let mut columns: Vec<String> = header.trim().split(',').map(str::to_owned).collect();
        if columns.first().map(String::as_str) != Some("id") {
            return Err(bad(1, "header must start with `id`".into()));
        }
        columns.remove(0);
        let labelled = columns.last().map(String::as_str) == Some("label");
        if labelled {
            columns.pop();
        }
        let (mut ids, mut data, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<features>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            let expected = 1 + columns.len() + usize::from(labelled);
            if fields.len() != expected {
                return Err(bad(
                    i + 2,
                    format!("{} fields, expected {expected}", fields.len()),
                ));
            }
            ids.push(fields[0].to_owned());
            for f in &fields[1..=columns.len()] {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| bad(i + 2, format!("bad number `{f}`")))?,
                );
            }
            if labelled {
                labels.push(match *fields.last().unwrap() {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(bad(i + 2, format!("label must be 0 or 1, got `{other}`")))
                    }
                });
            }
        }
        Self::new(columns, ids, data, labelled.then_some(labels))
    }
}

/// Downsamples the majority class uniformly at random to the minority
/// count. Surviving rows keep their original order.
pub fn balance_classes(t: &FeatureTable, seed: u64) -> Result<FeatureTable> {
    let labels = t
        .labels()
        .ok_or_else(|| argument("balance_classes needs labels"))?;
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..t.n_rows()).partition(|&i| labels[i]);
    if pos.is_empty() || neg.is_empty() {
        return Err(argument(format!(
            "cannot balance {} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = rng::seeded(seed);
    let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|i| majority[i])
        .chain(minority)
        .collect();
    keep.sort_unstable();
    Ok(t.subset(&keep))
}
