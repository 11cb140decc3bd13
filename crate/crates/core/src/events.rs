//! Marked event sequences on `[0, T)` and their CSV representation.
//!
//! Files hold one `time,mark` row per event with 1-based marks, preceded by
//! optional `#` comment lines. A comment of the form
//! `# T=2000 U=3 seed=1 scenario=mutually-exciting` carries metadata.
//! In memory, marks are 0-based dimension indices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// A realization of a `U`-dimensional point process observed on `[0, T]`.
///
/// Times are strictly increasing and lie in `[0, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSequence {
    times: Vec<f64>,
    marks: Vec<usize>,
    horizon: f64,
    dims: usize,
}

impl EventSequence {
    pub fn new(times: Vec<f64>, marks: Vec<usize>, horizon: f64, dims: usize) -> Result<Self> {
        if times.len() != marks.len() {
            return Err(Error::InvalidEvents(format!(
                "{} times but {} marks",
                times.len(),
                marks.len()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidEvents(format!("horizon must be positive, got {horizon}")));
        }
        if dims == 0 {
            return Err(Error::InvalidEvents("dimension count must be at least 1".into()));
        }
        for (n, (&t, &u)) in times.iter().zip(&marks).enumerate() {
            if !(t >= 0.0 && t < horizon) {
                return Err(Error::InvalidEvents(format!(
                    "event {n} at t = {t} lies outside [0, {horizon})"
                )));
            }
            if u >= dims {
                return Err(Error::InvalidEvents(format!(
                    "event {n} has mark {} but U = {dims}",
                    u + 1
                )));
            }
            if n > 0 && t <= times[n - 1] {
                return Err(Error::InvalidEvents(format!(
                    "event times must be strictly increasing (event {n} at t = {t})"
                )));
            }
        }
        Ok(Self {
            times,
            marks,
            horizon,
            dims,
        })
    }

    pub fn empty(horizon: f64, dims: usize) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), horizon, dims)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `|N_i|` for every dimension.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.dims];
        for &u in &self.marks {
            c[u] += 1;
        }
        c
    }

    /// Index of the first event with time `≥ t`.
    pub fn lower_bound(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    /// Events strictly before `t`, observed on the shortened horizon `[0, t)`.
    pub fn truncate(&self, t: f64) -> Result<Self> {
        let end = self.lower_bound(t);
        Self::new(self.times[..end].to_vec(), self.marks[..end].to_vec(), t, self.dims)
    }

    /// Applies a dimension relabeling `u ↦ perm[u]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dims {
            return Err(Error::InvalidParameter("permutation length must equal U".into()));
        }
        Self::new(
            self.times.clone(),
            self.marks.iter().map(|&u| perm[u]).collect(),
            self.horizon,
            self.dims,
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W, meta: &CsvMeta) -> Result<()> {
        let mut header = format!("# T={} U={}", self.horizon, self.dims);
        if let Some(seed) = meta.seed {
            header.push_str(&format!(" seed={seed}"));
        }
        if let Some(name) = &meta.scenario {
            header.push_str(&format!(" scenario={name}"));
        }
        writeln!(w, "{header}")?;
        writeln!(w, "time,mark")?;
        for (&t, &u) in self.times.iter().zip(&self.marks) {
            writeln!(w, "{t:.16e},{}", u + 1)?;
        }
        Ok(())
    }

    /// Parses the CSV format. `horizon` and `dims` override the metadata; when
    /// neither is present `T` is required in the header and `U` defaults to the
    /// largest mark.
    pub fn read_csv<R: BufRead>(r: R, horizon: Option<f64>, dims: Option<usize>) -> Result<(Self, CsvMeta)> {
        let mut meta = CsvMeta::default();
        let mut times = Vec::new();
        let mut marks = Vec::new();
        let mut lines = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            if let Some(comment) = text.strip_prefix('#') {
                meta.absorb(comment, line_no)?;
                continue;
            }
            if text.eq_ignore_ascii_case("time,mark") {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            let mut fields = text.split(',').map(str::trim);
            let (Some(t), Some(u), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(format!("expected `time,mark`, got `{text}`")));
            };
            let t: f64 = t.parse().map_err(|_| parse_err(format!("invalid time `{t}`")))?;
            let u: usize = u.parse().map_err(|_| parse_err(format!("invalid mark `{u}`")))?;
            if !t.is_finite() || t < 0.0 {
                return Err(parse_err(format!("event time {t} must be finite and nonnegative")));
            }
            if u == 0 {
                return Err(parse_err("marks are 1-based; got 0".into()));
            }
            if let Some(&prev) = times.last() {
                if t == prev {
                    return Err(Error::DuplicateTime { line: line_no });
                }
                if t < prev {
                    return Err(parse_err(format!("event time {t} is earlier than {prev}")));
                }
            }
            times.push(t);
            marks.push(u - 1);
            lines.push(line_no);
        }

        let horizon = horizon.or(meta.horizon).ok_or_else(|| {
            Error::InvalidEvents("observation horizon T missing: add `# T=...` or pass it explicitly".into())
        })?;
        let max_mark = marks.iter().map(|&u| u + 1).max().unwrap_or(1);
        let dims = dims.or(meta.dims).unwrap_or(max_mark);
        if let Some(pos) = marks.iter().position(|&u| u >= dims) {
            return Err(Error::Parse {
                line: lines[pos],
                message: format!("mark {} exceeds U = {dims}", marks[pos] + 1),
            });
        }
        if let Some(pos) = times.iter().position(|&t| t >= horizon) {
            return Err(Error::Parse {
                line: lines[pos],
                message: format!("event time {} is not before the horizon T = {horizon}", times[pos]),
            });
        }
        meta.horizon = Some(horizon);
        meta.dims = Some(dims);
        Ok((Self::new(times, marks, horizon, dims)?, meta))
    }
}

/// Metadata carried in CSV comment lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvMeta {
    pub horizon: Option<f64>,
    pub dims: Option<usize>,
    pub seed: Option<u64>,
    pub scenario: Option<String>,
}

impl CsvMeta {
    fn absorb(&mut self, comment: &str, line: usize) -> Result<()> {
        let bad = |message: String| Error::Parse { line, message };
        for token in comment.split([' ', ',', '\t']).filter(|s| !s.is_empty()) {
            let Some((key, value)) = token.split_once('=') else {
                continue;
            };
            match key {
                "T" => self.horizon = Some(value.parse().map_err(|_| bad(format!("invalid T `{value}`")))?),
                "U" => self.dims = Some(value.parse().map_err(|_| bad(format!("invalid U `{value}`")))?),
                "seed" => self.seed = Some(value.parse().map_err(|_| bad(format!("invalid seed `{value}`")))?),
                "scenario" => self.scenario = Some(value.to_string()),
                _ => {}
            }
        }
        Ok(())
    }
}
