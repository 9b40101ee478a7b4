//! Panel count datasets.
//!
//! A subject is observed at visit times `t_1 < ... < t_m` inside its
//! follow-up window `(0, C]`; at each visit the cumulative number of
//! recurrent events `N_j` is recorded. Covariates are time-fixed and must not
//! include an intercept column.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub obs_times: Vec<f64>,
    pub cum_counts: Vec<u64>,
    pub covariates: Vec<f64>,
    pub censor_time: f64,
}

/// Events between two consecutive visits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Increment {
    pub start: f64,
    pub end: f64,
    pub count: u64,
}

impl Subject {
    pub fn new(
        id: impl Into<String>,
        obs_times: Vec<f64>,
        cum_counts: Vec<u64>,
        covariates: Vec<f64>,
        censor_time: f64,
    ) -> Result<Self> {
        let s = Subject {
            id: id.into(),
            obs_times,
            cum_counts,
            covariates,
            censor_time,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let id = &self.id;
        if !(self.censor_time.is_finite() && self.censor_time > 0.0) {
            return Err(Error::validation(format!(
                "censor time for subject {id} must be positive and finite"
            )));
        }
        if self.obs_times.len() != self.cum_counts.len() {
            return Err(Error::validation(format!(
                "subject {id}: {} observation times but {} counts",
                self.obs_times.len(),
                self.cum_counts.len()
            )));
        }
        if let Some(x) = self.covariates.iter().find(|x| !x.is_finite()) {
            return Err(Error::validation(format!(
                "subject {id}: non-finite covariate value {x}"
            )));
        }
        let mut prev_t = 0.0;
        let mut prev_n = 0;
        for (&t, &n) in self.obs_times.iter().zip(&self.cum_counts) {
            if !t.is_finite() || t <= prev_t {
                return Err(Error::validation(format!(
                    "subject {id}: observation times must be strictly increasing and positive (got {t} after {prev_t})"
                )));
            }
            if t > self.censor_time {
                return Err(Error::validation(format!(
                    "subject {id}: observation time {t} exceeds censor time {}",
                    self.censor_time
                )));
            }
            if n < prev_n {
                return Err(Error::validation(format!(
                    "non-monotone counts for subject {id}: {n} after {prev_n}"
                )));
            }
            prev_t = t;
            prev_n = n;
        }
        Ok(())
    }

    pub fn n_visits(&self) -> usize {
        self.obs_times.len()
    }

    /// `N_{i,m_i}`, zero when there are no visits.
    pub fn final_count(&self) -> u64 {
        self.cum_counts.last().copied().unwrap_or(0)
    }

    /// `t_{i,m_i}`, zero when there are no visits.
    pub fn last_time(&self) -> f64 {
        self.obs_times.last().copied().unwrap_or(0.0)
    }

    /// Intervals `(t_{j-1}, t_j]` with their event counts, `t_0 = 0`.
    pub fn increments(&self) -> Vec<Increment> {
        let mut prev_t = 0.0;
        let mut prev_n = 0;
        self.obs_times
            .iter()
            .zip(&self.cum_counts)
            .map(|(&t, &n)| {
                let inc = Increment {
                    start: prev_t,
                    end: t,
                    count: n - prev_n,
                };
                prev_t = t;
                prev_n = n;
                inc
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub subjects: Vec<Subject>,
    pub covariate_names: Vec<String>,
    /// `T_max = max_i C_i`, the length of the study window.
    pub time_horizon: f64,
}

impl PanelDataset {
    pub fn new(subjects: Vec<Subject>, covariate_names: Vec<String>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::validation("dataset has no subjects"));
        }
        let p = covariate_names.len();
        for s in &subjects {
            s.validate()?;
            if s.covariates.len() != p {
                return Err(Error::validation(format!(
                    "subject {} has {} covariates, expected {p}",
                    s.id,
                    s.covariates.len()
                )));
            }
        }
        let mut seen = HashMap::new();
        for s in &subjects {
            if seen.insert(s.id.as_str(), ()).is_some() {
                return Err(Error::validation(format!("duplicate subject id {}", s.id)));
            }
        }
        if subjects.len() >= 2 {
            for (k, name) in covariate_names.iter().enumerate() {
                let first = subjects[0].covariates[k];
                if subjects.iter().all(|s| s.covariates[k] == first) {
                    return Err(Error::validation(format!(
                        "covariate column '{name}' is constant: intercept column not permitted"
                    )));
                }
            }
        }
        let time_horizon = subjects
            .iter()
            .map(|s| s.censor_time)
            .fold(0.0, f64::max);
        Ok(PanelDataset {
            subjects,
            covariate_names,
            time_horizon,
        })
    }

    /// A dataset with no subjects, used to run the sampler against the prior.
    pub fn empty(covariate_names: Vec<String>, time_horizon: f64) -> Result<Self> {
        if !(time_horizon > 0.0) {
            return Err(Error::validation("time horizon must be positive"));
        }
        Ok(PanelDataset {
            subjects: Vec::new(),
            covariate_names,
            time_horizon,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Subjects that must have at least one visit to be fitted.
    pub fn check_fittable(&self) -> Result<()> {
        if let Some(s) = self.subjects.iter().find(|s| s.n_visits() == 0) {
            return Err(Error::validation(format!(
                "subject {} has no visits; fitting requires at least one observation per subject",
                s.id
            )));
        }
        Ok(())
    }
}

/// Per-subject increments.
pub fn increments(dataset: &PanelDataset) -> Vec<Vec<Increment>> {
    dataset.subjects.iter().map(Subject::increments).collect()
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::validation(format!("line {line}: cannot parse {what} '{field}' as a number"))
    })
}

/// Reads the events and covariates CSV files.
///
/// Events: `subject_id,time,cum_count`, one row per visit.
/// Covariates: `subject_id,censor_time,<name1>,...`, one row per subject.
/// Subjects appear in the order of the covariates file.
pub fn load_dataset(events_path: &Path, covariates_path: &Path) -> Result<PanelDataset> {
    let mut cov_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(covariates_path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", covariates_path.display())))?;
    let header = cov_reader.headers()?.clone();
    if header.len() < 2 || &header[0] != "subject_id" || &header[1] != "censor_time" {
        return Err(Error::validation(format!(
            "{}: header must start with subject_id,censor_time",
            covariates_path.display()
        )));
    }
    let covariate_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();

    let mut order = Vec::new();
    let mut rows: HashMap<String, (f64, Vec<f64>)> = HashMap::new();
    for rec in cov_reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::validation(format!(
                "{} line {line}: expected {} fields, found {}",
                covariates_path.display(),
                header.len(),
                rec.len()
            )));
        }
        let id = rec[0].to_string();
        let censor = parse_f64(&rec[1], "censor_time", line)?;
        let x = (2..rec.len())
            .map(|k| {
                if rec[k].is_empty() {
                    Err(Error::validation(format!(
                        "line {line}: missing value for covariate '{}'",
                        header[k].to_string()
                    )))
                } else {
                    parse_f64(&rec[k], &header[k], line)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(id.clone(), (censor, x)).is_some() {
            return Err(Error::validation(format!("duplicate covariate row for subject {id}")));
        }
        order.push(id);
    }

    let mut ev_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(events_path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", events_path.display())))?;
    let eh = ev_reader.headers()?.clone();
    if eh.len() != 3 || &eh[0] != "subject_id" || &eh[1] != "time" || &eh[2] != "cum_count" {
        return Err(Error::validation(format!(
            "{}: header must be subject_id,time,cum_count",
            events_path.display()
        )));
    }
    let mut visits: BTreeMap<String, Vec<(f64, u64)>> = BTreeMap::new();
    for rec in ev_reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].to_string();
        if !rows.contains_key(&id) {
            return Err(Error::validation(format!(
                "covariate row missing for subject {id}"
            )));
        }
        let t = parse_f64(&rec[1], "time", line)?;
        let n: u64 = rec[2].parse().map_err(|_| {
            Error::validation(format!(
                "line {line}: cannot parse cum_count '{}' as a nonnegative integer",
                &rec[2]
            ))
        })?;
        visits.entry(id).or_default().push((t, n));
    }

    let subjects = order
        .into_iter()
        .map(|id| {
            let (censor, x) = rows.remove(&id).expect("id collected above");
            let mut v = visits.remove(&id).unwrap_or_default();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (times, counts) = v.into_iter().unzip();
            Subject::new(id, times, counts, x, censor)
        })
        .collect::<Result<Vec<_>>>()?;
    PanelDataset::new(subjects, covariate_names)
}

/// Writes the two CSV files read by [`load_dataset`]. Floats are written in
/// shortest round-trip form, so reading them back is exact.
pub fn write_dataset(dataset: &PanelDataset, events_path: &Path, covariates_path: &Path) -> Result<()> {
    let mut ev = std::io::BufWriter::new(std::fs::File::create(events_path)?);
    writeln!(ev, "subject_id,time,cum_count")?;
    for s in &dataset.subjects {
        for (t, n) in s.obs_times.iter().zip(&s.cum_counts) {
            writeln!(ev, "{},{},{}", s.id, t, n)?;
        }
    }
    ev.flush()?;

    let mut cv = std::io::BufWriter::new(std::fs::File::create(covariates_path)?);
    write!(cv, "subject_id,censor_time")?;
    for name in &dataset.covariate_names {
        write!(cv, ",{name}")?;
    }
    writeln!(cv)?;
    for s in &dataset.subjects {
        write!(cv, "{},{}", s.id, s.censor_time)?;
        for x in &s.covariates {
            write!(cv, ",{x}")?;
        }
        writeln!(cv)?;
    }
    cv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_two_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(
            dir.path(),
            "e.csv",
            "subject_id,time,cum_count\na,1.0,0\na,2.5,3\nb,0.5,1\n",
        );
        let c = write(
            dir.path(),
            "c.csv",
            "subject_id,censor_time,trt\na,3,0\nb,4,1\n",
        );
        let d = load_dataset(&e, &c).unwrap();
        assert_eq!(d.n_subjects(), 2);
        assert_eq!(d.subjects[0].n_visits(), 2);
        assert_eq!(d.subjects[1].n_visits(), 1);
        assert_eq!(d.time_horizon, 4.0);
        assert_eq!(d.covariate_names, vec!["trt".to_string()]);
    }

    #[test]
    fn rejects_decreasing_counts() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(
            dir.path(),
            "e.csv",
            "subject_id,time,cum_count\na,1.0,3\na,2.0,2\nb,1.0,0\n",
        );
        let c = write(dir.path(), "c.csv", "subject_id,censor_time,x\na,3,0\nb,3,1\n");
        let err = load_dataset(&e, &c).unwrap_err().to_string();
        assert!(err.contains("non-monotone counts"), "{err}");
    }

    #[test]
    fn rejects_intercept_column() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.csv", "subject_id,time,cum_count\na,1,0\nb,1,0\n");
        let c = write(
            dir.path(),
            "c.csv",
            "subject_id,censor_time,one,x\na,3,1,0\nb,3,1,1\n",
        );
        let err = load_dataset(&e, &c).unwrap_err().to_string();
        assert!(err.contains("intercept column not permitted"), "{err}");
    }

    #[test]
    fn rejects_time_after_censoring_and_missing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "subject_id,censor_time,x\na,3,0\nb,3,1\n");
        let e = write(dir.path(), "e.csv", "subject_id,time,cum_count\na,4,0\n");
        assert!(load_dataset(&e, &c).unwrap_err().to_string().contains("exceeds censor"));
        let e = write(dir.path(), "e2.csv", "subject_id,time,cum_count\nz,1,0\n");
        assert!(load_dataset(&e, &c)
            .unwrap_err()
            .to_string()
            .contains("covariate row missing for subject z"));
        let e = write(dir.path(), "e3.csv", "subject_id,time,cum_count\na,1,zero\n");
        assert!(load_dataset(&e, &c).unwrap_err().is_validation());
    }

    #[test]
    fn increments_from_cumulative_counts() {
        let s = Subject::new("a", vec![1.0, 2.0, 3.0], vec![1, 1, 4], vec![0.0], 3.0).unwrap();
        let counts: Vec<u64> = s.increments().iter().map(|i| i.count).collect();
        assert_eq!(counts, vec![1, 0, 3]);
        let single = Subject::new("b", vec![2.0], vec![0], vec![1.0], 3.0).unwrap();
        let inc = single.increments();
        assert_eq!(inc.len(), 1);
        assert_eq!(inc[0], Increment { start: 0.0, end: 2.0, count: 0 });
    }
}
