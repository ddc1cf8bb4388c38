//! Group-tagged repeated observations and their CSV representation.
//!
//! CSV layout is `group,individual,obs_index,value` with 1-based individual
//! and observation indices. Group 1 individuals occupy `1..=n1` and group 2
//! individuals `n1+1..=N`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{RcrError, Result};

pub const CSV_HEADER: [&str; 4] = ["group", "individual", "obs_index", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    G1,
    G2,
}

impl Group {
    pub fn tag(self) -> u8 {
        match self {
            Group::G1 => 1,
            Group::G2 => 2,
        }
    }
}

/// Responses `Y_{g,i,k}` for `N = n1 + n2` individuals with `K` replicates each.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    n1: usize,
    n2: usize,
    k: usize,
    /// Individual-major: values for individual `i` at `i*K..(i+1)*K`.
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    group: u8,
    individual: usize,
    obs_index: usize,
    value: f64,
}

impl ObservationSet {
    /// Builds a set from individual-major values. Group sizes may be zero so
    /// degenerate inputs can be represented; estimators reject them.
    pub fn new(n1: usize, n2: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(RcrError::Parse("K must be at least 1".into()));
        }
        if values.len() != (n1 + n2) * k {
            return Err(RcrError::Parse(format!(
                "expected {} values for N = {} and K = {}, got {}",
                (n1 + n2) * k,
                n1 + n2,
                k,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(RcrError::Parse(format!("non-finite value {bad}")));
        }
        Ok(Self { n1, n2, k, values })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// All responses stacked individual-major, matching the row order of the
    /// mixed-model design matrices.
    pub fn stacked(&self) -> &[f64] {
        &self.values
    }

    pub fn individual(&self, index: usize) -> Result<&[f64]> {
        if index >= self.n() {
            return Err(RcrError::IndexOutOfRange { index, total: self.n() });
        }
        Ok(&self.values[index * self.k..(index + 1) * self.k])
    }

    pub fn group_of(&self, index: usize) -> Result<Group> {
        if index >= self.n() {
            return Err(RcrError::IndexOutOfRange { index, total: self.n() });
        }
        Ok(if index < self.n1 { Group::G1 } else { Group::G2 })
    }

    /// Replicate mean `Ȳ_{gi}` of one individual.
    pub fn individual_mean(&self, index: usize) -> Result<f64> {
        let obs = self.individual(index)?;
        Ok(obs.iter().sum::<f64>() / self.k as f64)
    }

    /// Grand mean `Ȳ_g` over individuals and replicates of a group.
    pub fn group_mean(&self, group: Group) -> Result<f64> {
        let (start, count) = match group {
            Group::G1 => (0, self.n1),
            Group::G2 => (self.n1, self.n2),
        };
        if count == 0 {
            return Err(RcrError::DegenerateDesign);
        }
        let slice = &self.values[start * self.k..(start + count) * self.k];
        Ok(slice.iter().sum::<f64>() / slice.len() as f64)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(RcrError::Parse(format!(
                "expected header `{}`, got `{}`",
                CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = rec?;
            let at = line + 2;
            if row.group != 1 && row.group != 2 {
                return Err(RcrError::Parse(format!(
                    "line {at}: group must be 1 or 2, got {}",
                    row.group
                )));
            }
            if row.individual == 0 || row.obs_index == 0 {
                return Err(RcrError::Parse(format!("line {at}: indices are 1-based")));
            }
            if !row.value.is_finite() {
                return Err(RcrError::Parse(format!("line {at}: non-finite value")));
            }
            rows.push(row);
        }
        let n = rows.iter().map(|r| r.individual).max().unwrap_or(0);
        let k = rows.iter().map(|r| r.obs_index).max().unwrap_or(0);
        if n == 0 {
            return Err(RcrError::Parse("no observations".into()));
        }

        let mut groups: Vec<Option<u8>> = vec![None; n];
        let mut values: Vec<Option<f64>> = vec![None; n * k];
        for r in &rows {
            let i = r.individual - 1;
            match groups[i] {
                None => groups[i] = Some(r.group),
                Some(g) if g != r.group => {
                    return Err(RcrError::Parse(format!(
                        "individual {} tagged with both groups",
                        r.individual
                    )))
                }
                _ => {}
            }
            let slot = &mut values[i * k + r.obs_index - 1];
            if slot.replace(r.value).is_some() {
                return Err(RcrError::Parse(format!(
                    "duplicate observation {} for individual {}",
                    r.obs_index, r.individual
                )));
            }
        }

        let mut n1 = 0;
        for (i, g) in groups.iter().enumerate() {
            match g {
                None => return Err(RcrError::Parse(format!("individual {} has no observations", i + 1))),
                Some(1) if i == n1 => n1 += 1,
                Some(1) => {
                    return Err(RcrError::Parse(format!(
                        "group 1 individuals must precede group 2; individual {} is out of order",
                        i + 1
                    )))
                }
                _ => {}
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(idx, v)| {
                v.ok_or_else(|| {
                    RcrError::Parse(format!(
                        "individual {} is missing observation {} (all individuals need K = {k})",
                        idx / k + 1,
                        idx % k + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n1, n - n1, k, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for i in 0..self.n() {
            let group = self.group_of(i)?.tag().to_string();
            let individual = (i + 1).to_string();
            for (k, value) in self.individual(i)?.iter().enumerate() {
                w.write_record([
                    group.as_str(),
                    individual.as_str(),
                    &(k + 1).to_string(),
                    &value.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
