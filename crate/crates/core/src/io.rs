//! Plain-text file formats. Every file starts with `#` header lines of the
//! form `# key: value`; the body is CSV.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::calibrate::{Statistic, ThresholdTable};
use crate::error::{Error, Result};
use crate::likelihood::LogLRField;
use crate::limits::{LimitClass, LimitTrajectory};
use crate::models::{IntensityModel, ModelClass};
use crate::simulate::{Dataset, PathSample};
use crate::testing::{PowerCurve, Provenance, Threshold, ThresholdSet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THRESHOLD_FORMAT: &str = "thresholds/1";
pub const DATASET_FORMAT: &str = "dataset/1";

/// Short SHA-256 of the package name and version.
pub fn version_hash() -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(concat!(env!("CARGO_PKG_NAME"), "@", env!("CARGO_PKG_VERSION")).as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// Ordered `key: value` pairs written as comment lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new(format: &str) -> Self {
        let mut h = Header::default();
        h.push("format", format);
        h.push("version", format!("{VERSION}+{}", version_hash()));
        h
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        self.entries.push((key.to_string(), value));
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write(&self, w: &mut dyn Write) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }
}

/// Splits a file into its header and the non-empty body lines.
fn read_lines(r: &mut dyn BufRead) -> Result<(Header, Vec<String>)> {
    let mut header = Header::default();
    let mut body = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                header.entries.push((k.trim().to_string(), v.trim().to_string()));
            }
        } else if !t.is_empty() {
            body.push(t.to_string());
        }
    }
    Ok((header, body))
}

fn require<'a>(h: &'a Header, key: &str) -> Result<&'a str> {
    h.get(key).ok_or_else(|| Error::Parse(format!("missing header field {key:?}")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad {what}: {s:?}")))
}

fn opt_num(s: &str, what: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        num(s, what).map(Some)
    }
}

// ---------------------------------------------------------------- datasets

/// `replicate_id,event_time` rows; `header` should carry the run context.
pub fn write_dataset(w: &mut dyn Write, data: &Dataset, model: &IntensityModel, mut header: Header) -> Result<()> {
    header.push("model", model.describe());
    header.push("model_hash", &data.model_hash);
    header.push("theta", data.theta);
    header.push("n", data.n);
    header.push("seed_root", data.seed_root);
    header.write(w)?;
    writeln!(w, "replicate_id,event_time")?;
    for p in &data.paths {
        for t in p.events() {
            writeln!(w, "{},{}", p.replicate_id, t)?;
        }
    }
    Ok(())
}

/// Reads a dataset written by [`write_dataset`] and checks it against `model`.
pub fn read_dataset(r: &mut dyn BufRead, model: &IntensityModel) -> Result<Dataset> {
    let (h, body) = read_lines(r)?;
    let hash = require(&h, "model_hash")?.to_string();
    if hash != model.hash() {
        return Err(Error::InvalidModel(format!(
            "dataset was drawn from model {hash}, not {}",
            model.hash()
        )));
    }
    let theta: f64 = num(require(&h, "theta")?, "theta")?;
    let n: usize = num(require(&h, "n")?, "n")?;
    let seed_root: u64 = num(require(&h, "seed_root")?, "seed_root")?;
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); n];
    for line in body.iter().filter(|l| !l.starts_with("replicate_id")) {
        let (id, t) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected `replicate_id,event_time`, got {line:?}")))?;
        let id: usize = num(id, "replicate id")?;
        let slot = events
            .get_mut(id)
            .ok_or_else(|| Error::Parse(format!("replicate id {id} out of range for n = {n}")))?;
        slot.push(num(t, "event time")?);
    }
    let paths = events
        .into_iter()
        .enumerate()
        .map(|(i, ev)| PathSample::new(ev, i as u64, theta, model.tau()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        paths,
        n,
        seed_root,
        theta,
        model_hash: hash,
    })
}

// ---------------------------------------------------------------- fields and trajectories

/// `u,theta,ln_z` rows.
pub fn write_field(w: &mut dyn Write, field: &LogLRField, header: Header) -> Result<()> {
    header
        .with("phi_n", field.phi_n())
        .with("theta1", field.theta1())
        .with("u_max", field.u_max())
        .write(w)?;
    writeln!(w, "u,theta,ln_z")?;
    for (&u, &z) in field.nodes().iter().zip(field.values()) {
        writeln!(w, "{},{},{}", u, field.theta_of(u), z)?;
    }
    Ok(())
}

/// `trajectory,u,ln_z` rows. Event trajectories are written at both one-sided
/// limits of every jump, so linear interpolation of the rows is exact.
pub fn write_trajectories(w: &mut dyn Write, trajectories: &[LimitTrajectory], header: Header) -> Result<()> {
    header.write(w)?;
    writeln!(w, "trajectory,u,ln_z")?;
    for (i, t) in trajectories.iter().enumerate() {
        match t {
            LimitTrajectory::Grid { du, ln_z, .. } => {
                for (k, z) in ln_z.iter().enumerate() {
                    writeln!(w, "{i},{},{z}", k as f64 * du)?;
                }
            }
            LimitTrajectory::Events {
                rho,
                u_start,
                points,
                u_max,
                ..
            } => {
                writeln!(w, "{i},{u_start},{}", t.ln_z_at(*u_start))?;
                for &p in points.iter().filter(|&&p| p > *u_start && p < *u_max) {
                    writeln!(w, "{i},{p},{}", t.ln_z_at(p) - rho.ln())?;
                    writeln!(w, "{i},{p},{}", t.ln_z_at(p))?;
                }
                writeln!(w, "{i},{u_max},{}", t.ln_z_at(*u_max))?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- thresholds

const THRESHOLD_COLUMNS: &str =
    "class,parameter,eps,statistic,value,ci_lo,ci_hi,stderr,provenance,u_star,d_count,q,M,U_max,du,seed_root";

fn class_name(c: LimitClass) -> &'static str {
    match c.model_class() {
        ModelClass::Cusp => "cusp",
        ModelClass::Jump => "jump",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Versioned threshold table: one row per (ε, statistic, provenance) plus
/// one row per stored N-PT entry.
pub fn write_thresholds(w: &mut dyn Write, table: &ThresholdTable, header: Header) -> Result<()> {
    header.write(w)?;
    writeln!(w, "{THRESHOLD_COLUMNS}")?;
    let c = &table.config;
    let tail = format!("{},{},{},{}", c.m, c.u_max, c.du, c.seed);
    let lead = |eps: f64| format!("{},{},{}", class_name(table.class), table.class.parameter(), eps);
    for set in &table.sets {
        for stat in Statistic::ALL {
            if let Some(t) = stat.of(set) {
                let (lo, hi) = t.ci.unzip();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},,,,{}",
                    lead(set.eps),
                    stat.name(),
                    t.value,
                    fmt_opt(lo),
                    fmt_opt(hi),
                    fmt_opt(t.stderr),
                    t.provenance,
                    tail
                )?;
            }
        }
        for e in set.npt_entries() {
            let (d, q) = e.count_and_q.unzip();
            writeln!(
                w,
                "{},npt_ln_d,{},,,,analytic,{},{},{},{}",
                lead(set.eps),
                e.ln_d,
                e.u_star,
                d.map(|d| d.to_string()).unwrap_or_default(),
                fmt_opt(q),
                tail
            )?;
        }
    }
    for a in &table.analytic {
        for (stat, v) in [(Statistic::LnH, a.ln_h), (Statistic::G, a.g)] {
            writeln!(w, "{},{},{},,,,analytic,,,,{}", lead(a.eps), stat.name(), v, tail)?;
        }
    }
    Ok(())
}

/// Reads a threshold table into one [`ThresholdSet`] per ε.
///
/// When a statistic has both a Monte Carlo and a closed-form row, the Monte
/// Carlo value is used; N-PT rows are recomputed from their closed forms.
pub fn read_thresholds(r: &mut dyn BufRead) -> Result<Vec<ThresholdSet>> {
    let (h, body) = read_lines(r)?;
    match h.get("format") {
        Some(THRESHOLD_FORMAT) => {}
        other => {
            return Err(Error::Parse(format!(
                "expected a {THRESHOLD_FORMAT} file, found format {other:?}"
            )))
        }
    }
    let mut sets: BTreeMap<u64, ThresholdSet> = BTreeMap::new();
    for line in body.iter().skip_while(|l| l.starts_with("class")) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != THRESHOLD_COLUMNS.split(',').count() {
            return Err(Error::Parse(format!("threshold row has {} fields: {line:?}", f.len())));
        }
        let class = match f[0] {
            "cusp" => ModelClass::Cusp,
            "jump" => ModelClass::Jump,
            other => return Err(Error::Parse(format!("unknown class {other:?}"))),
        };
        let class = LimitClass::from_parts(class, num(f[1], "parameter")?);
        let eps: f64 = num(f[2], "eps")?;
        let set = sets.entry(eps.to_bits()).or_insert_with(|| ThresholdSet::new(class, eps));
        if set.class != class {
            return Err(Error::Parse("threshold file mixes model classes".into()));
        }
        if f[3] == "npt_ln_d" {
            set.add_npt(num(f[9], "u_star")?)?;
            continue;
        }
        let stat = Statistic::parse(f[3])?;
        let provenance = Provenance::parse(f[8])?;
        let t = Threshold {
            value: num(f[4], "value")?,
            ci: opt_num(f[5], "ci_lo")?.zip(opt_num(f[6], "ci_hi")?),
            stderr: opt_num(f[7], "stderr")?,
            provenance,
        };
        let slot = stat.slot(set);
        let replace = match slot {
            None => true,
            Some(old) => old.provenance != Provenance::MonteCarlo,
        };
        if replace {
            *slot = Some(t);
        }
    }
    Ok(sets.into_values().collect())
}

// ---------------------------------------------------------------- power curves

pub const POWER_COLUMNS: &str = "test,u_star,n_or_limit,power,ci_lo,ci_hi,replicates,seed_root";

pub fn write_power_header(w: &mut dyn Write, header: Header) -> Result<()> {
    header.write(w)?;
    writeln!(w, "{POWER_COLUMNS}")?;
    Ok(())
}

/// Appends the rows of `curve`; `label` overrides the test name.
pub fn write_power_rows(w: &mut dyn Write, curve: &PowerCurve, label: Option<&str>) -> Result<()> {
    let name = label.map(str::to_string).unwrap_or_else(|| curve.spec.kind.label().to_string());
    let n = curve.n.map(|n| n.to_string()).unwrap_or_else(|| "limit".into());
    for p in &curve.points {
        writeln!(
            w,
            "{name},{},{n},{},{},{},{},{}",
            p.u_star, p.power, p.ci_lo, p.ci_hi, p.replicates, curve.seed_root
        )?;
    }
    Ok(())
}
