//! Text formats for matrices, class maps, selection models and priors.
//!
//! Matrix files: optional `#` comment lines, a header of unique column
//! names, then one row of reals per line. The delimiter is a tab if the
//! header contains one, a comma otherwise. Values are written as `{:.16e}`
//! (17 significant digits), which reads back bit-identically. Missing
//! cells, NaN and infinities are errors.
//!
//! Class maps: one `feature<TAB>class` line per feature.
//!
//! Model files:
//!
//! ```text
//! mdl-select model v1
//! scheme <name>
//! setting <1|2>                      transfer models only
//! dims <n> <m> <h>
//! l_theta <bits>
//! null_se <bits>
//! flags <text>                       optional
//! add <feature>@<index> tasks=<t,..> dSE=<bits> dSM=<bits> [class=<name> entry=<yes|no>]
//! remove <feature>@<index> dTDL=<bits>
//! intercept <task> <value>           one per task
//! coef <task> <feature>@<index> <value>
//! total <bits>
//! checksum <sha256 of every preceding byte, hex>
//! ```
//!
//! Prior files:
//!
//! ```text
//! transfer-prior v1
//! hyper class <a> <b>                optional
//! hyper feature <c> <d>              optional
//! class <name> <selected> <unselected>
//! feature <class>/<name> <selected> <unselected>
//! ```
//!
//! The number of training models is the per-record total, which must agree
//! across records. Names in model and prior files may not contain
//! whitespace, and class names may not contain `/`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::dataset::{ClassMap, Dataset};
use crate::error::{Error, Result};
use crate::model::{Event, FeatureRef, Scheme, SelectionModel, TaskCoefficients, TransferSetting};
use crate::transfer::{Counts, TransferPrior};

pub const MODEL_HEADER: &str = "mdl-select model v1";
pub const PRIOR_HEADER: &str = "transfer-prior v1";

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(source: &str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        column,
        message: message.into(),
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A named numeric matrix as read from a delimited file.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Parses a matrix file. `source` labels errors.
pub fn parse_matrix(text: &str, source: &str) -> Result<NamedMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(source, 1, 1, "missing header row"))?;
    let delim = if header.contains('\t') { '\t' } else { ',' };
    let names: Vec<String> = header.split(delim).map(|s| s.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for (c, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(parse_err(source, header_line, c + 1, "empty column name"));
        }
        if !seen.insert(name.as_str()) {
            return Err(parse_err(source, header_line, c + 1, format!("duplicate column `{name}`")));
        }
    }
    let cols = names.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(delim).collect();
        if fields.len() != cols {
            return Err(parse_err(
                source,
                line_no,
                fields.len().min(cols) + 1,
                format!("expected {cols} fields, found {}", fields.len()),
            ));
        }
        for (c, f) in fields.iter().enumerate() {
            let f = f.trim();
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(source, line_no, c + 1, format!("not a number: `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(source, line_no, c + 1, format!("non-finite value `{f}`")));
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok(NamedMatrix {
        names,
        values: DMatrix::from_row_slice(rows, cols, &data),
    })
}

/// Formats a matrix file with the given comment lines (without `#`).
pub fn format_matrix(names: &[String], values: &DMatrix<f64>, comments: &[String], delim: char) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str(&names.join(&delim.to_string()));
    out.push('\n');
    for row in values.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(&delim.to_string()));
        out.push('\n');
    }
    out
}

pub fn load_matrix(path: &Path) -> Result<NamedMatrix> {
    parse_matrix(&read_text(path)?, &path.display().to_string())
}

pub fn save_matrix(path: &Path, names: &[String], values: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    if names.len() != values.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} names for {} columns",
            names.len(),
            values.ncols()
        )));
    }
    write_text(path, &format_matrix(names, values, comments, ','))
}

/// Parses a class map against the dataset's feature names. Classes are
/// numbered in order of first appearance.
pub fn parse_class_map(text: &str, source: &str, features: &[String]) -> Result<ClassMap> {
    let mut class_names: Vec<String> = Vec::new();
    let mut class_of: Vec<Option<usize>> = vec![None; features.len()];
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (feature, class) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(source, line_no, 1, "expected `feature<TAB>class`"))?;
        let (feature, class) = (feature.trim(), class.trim());
        if class.is_empty() {
            return Err(parse_err(source, line_no, 2, "empty class name"));
        }
        let j = features
            .iter()
            .position(|f| f == feature)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
        if class_of[j].is_some() {
            return Err(parse_err(source, line_no, 1, format!("feature `{feature}` listed twice")));
        }
        let c = match class_names.iter().position(|c| c == class) {
            Some(c) => c,
            None => {
                class_names.push(class.to_string());
                class_names.len() - 1
            }
        };
        class_of[j] = Some(c);
    }
    let class_of = class_of
        .into_iter()
        .enumerate()
        .map(|(j, c)| c.ok_or_else(|| Error::MissingClass(features[j].clone())))
        .collect::<Result<Vec<_>>>()?;
    ClassMap::new(class_of, class_names)
}

/// Reads a class map on its own; the feature list is the file's first
/// column in order.
pub fn load_class_map_file(path: &Path) -> Result<(Vec<String>, ClassMap)> {
    let text = read_text(path)?;
    let features: Vec<String> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').next().unwrap_or("").trim().to_string())
        .collect();
    let map = parse_class_map(&text, &path.display().to_string(), &features)?;
    Ok((features, map))
}

pub fn format_class_map(features: &[String], map: &ClassMap) -> String {
    let mut out = String::new();
    for (j, f) in features.iter().enumerate() {
        let _ = writeln!(out, "{f}\t{}", map.names()[map.class_of(j)]);
    }
    out
}

/// Loads X, Y and an optional class map into a validated dataset.
pub fn load_dataset(x_path: &Path, y_path: &Path, classmap_path: Option<&Path>) -> Result<Dataset> {
    let x = load_matrix(x_path)?;
    let y = load_matrix(y_path)?;
    if x.values.nrows() != y.values.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} rows, {} has {}",
            x_path.display(),
            x.values.nrows(),
            y_path.display(),
            y.values.nrows()
        )));
    }
    let class_map = match classmap_path {
        Some(p) => Some(parse_class_map(&read_text(p)?, &p.display().to_string(), &x.names)?),
        None => None,
    };
    Dataset::with_names(x.values, y.values, x.names, y.names, class_map)
}

/// Writes `x.csv`, `y.csv` and, with a class map, `classes.tsv` into `dir`.
pub fn save_dataset(dir: &Path, data: &Dataset, comments: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_matrix(&dir.join("x.csv"), &data.feature_names, &data.x, comments)?;
    save_matrix(&dir.join("y.csv"), &data.task_names, &data.y, comments)?;
    if let Some(map) = &data.class_map {
        write_text(&dir.join("classes.tsv"), &format_class_map(&data.feature_names, map))?;
    }
    Ok(())
}

fn check_token(kind: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::InvalidDataset(format!(
            "{kind} name `{name}` is empty or contains whitespace"
        )));
    }
    Ok(())
}

fn feature_token(f: &FeatureRef) -> Result<String> {
    check_token("feature", &f.name)?;
    Ok(format!("{}@{}", f.name, f.index))
}

fn checksum(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

pub fn format_model(model: &SelectionModel) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_HEADER}");
    let _ = writeln!(out, "scheme {}", model.scheme);
    if let Some(s) = model.setting {
        let _ = writeln!(out, "setting {}", s.number());
    }
    let _ = writeln!(out, "dims {} {} {}", model.n, model.m, model.h);
    let _ = writeln!(out, "l_theta {}", fmt_f64(model.l_theta));
    let _ = writeln!(out, "null_se {}", fmt_f64(model.null_se));
    if let Some(flags) = &model.flags {
        if flags.contains('\n') {
            return Err(Error::InvalidDataset("flags may not span lines".into()));
        }
        let _ = writeln!(out, "flags {flags}");
    }
    for e in &model.events {
        match e {
            Event::Add {
                feature,
                tasks,
                d_se,
                d_sm,
                class,
            } => {
                let tasks: Vec<String> = tasks.iter().map(|t| t.to_string()).collect();
                let _ = write!(
                    out,
                    "add {} tasks={} dSE={} dSM={}",
                    feature_token(feature)?,
                    tasks.join(","),
                    fmt_f64(*d_se),
                    fmt_f64(*d_sm)
                );
                if let Some((name, entry)) = class {
                    check_token("class", name)?;
                    let _ = write!(out, " class={name} entry={}", if *entry { "yes" } else { "no" });
                }
                out.push('\n');
            }
            Event::Remove { feature, d_tdl } => {
                let _ = writeln!(out, "remove {} dTDL={}", feature_token(feature)?, fmt_f64(*d_tdl));
            }
        }
    }
    for (t, fit) in model.fits.iter().enumerate() {
        let _ = writeln!(out, "intercept {t} {}", fmt_f64(fit.intercept));
        for (f, v) in &fit.terms {
            let _ = writeln!(out, "coef {t} {} {}", feature_token(f)?, fmt_f64(*v));
        }
    }
    let _ = writeln!(out, "total {}", fmt_f64(model.total_tdl));
    let sum = checksum(&out);
    let _ = writeln!(out, "checksum {sum}");
    Ok(out)
}

pub fn save_model(path: &Path, model: &SelectionModel) -> Result<()> {
    write_text(path, &format_model(model)?)
}

pub fn load_model(path: &Path) -> Result<SelectionModel> {
    parse_model(&read_text(path)?, &path.display().to_string())
}

struct Cursor<'a> {
    source: &'a str,
    line: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        parse_err(self.source, self.line, 1, msg)
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn float(&self, s: &str) -> Result<f64> {
        let v: f64 = self.num(s)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("non-finite value `{s}`")))
        }
    }

    fn feature(&self, s: &str) -> Result<FeatureRef> {
        let (name, idx) = s
            .rsplit_once('@')
            .ok_or_else(|| self.err(format!("expected name@index, got `{s}`")))?;
        Ok(FeatureRef::new(self.num(idx)?, name))
    }

    fn keyed<'b>(&self, tok: Option<&'b str>, key: &str) -> Result<&'b str> {
        tok.and_then(|t| t.strip_prefix(key))
            .and_then(|t| t.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected `{key}=`")))
    }
}

/// Splits off and verifies the trailing checksum line, returning the body.
fn verify_checksum(text: &str) -> Result<&str> {
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let (body, last) = match trimmed.rfind('\n') {
        Some(i) => (&text[..=i], &trimmed[i + 1..]),
        None => ("", trimmed),
    };
    let stored = last
        .strip_prefix("checksum ")
        .ok_or_else(|| Error::ChecksumMismatch("missing checksum line (truncated file?)".into()))?;
    let actual = checksum(body);
    if stored.trim() != actual {
        return Err(Error::ChecksumMismatch(format!("stored {stored}, computed {actual}")));
    }
    Ok(body)
}

pub fn parse_model(text: &str, source: &str) -> Result<SelectionModel> {
    let first = text.lines().next().unwrap_or("");
    if first != MODEL_HEADER {
        return Err(if first.starts_with("mdl-select model") {
            Error::VersionMismatch(format!("expected `{MODEL_HEADER}`, found `{first}`"))
        } else {
            parse_err(source, 1, 1, format!("expected `{MODEL_HEADER}`"))
        });
    }
    let body = verify_checksum(text)?;

    let mut scheme = None;
    let mut setting = None;
    let mut dims = None;
    let mut l_theta = None;
    let mut null_se = None;
    let mut flags = None;
    let mut total = None;
    let mut events = Vec::new();
    let mut fits: Vec<TaskCoefficients> = Vec::new();

    for (i, line) in body.lines().enumerate().skip(1) {
        let cur = Cursor { source, line: i + 1 };
        let (kw, rest) = line.split_once(' ').unwrap_or((line, ""));
        let toks: Vec<&str> = rest.split_whitespace().collect();
        match kw {
            "scheme" => scheme = Some(rest.parse::<Scheme>().map_err(|e| cur.err(e.to_string()))?),
            "setting" => {
                let n: u8 = cur.num(rest)?;
                setting = Some(TransferSetting::from_number(n).map_err(|e| cur.err(e.to_string()))?);
            }
            "dims" => {
                if toks.len() != 3 {
                    return Err(cur.err("dims needs n m h"));
                }
                let (n, m, h): (usize, usize, usize) = (cur.num(toks[0])?, cur.num(toks[1])?, cur.num(toks[2])?);
                fits = vec![TaskCoefficients::default(); h];
                dims = Some((n, m, h));
            }
            "l_theta" => l_theta = Some(cur.float(rest)?),
            "null_se" => null_se = Some(cur.float(rest)?),
            "flags" => flags = Some(rest.to_string()),
            "add" => {
                if toks.len() != 4 && toks.len() != 6 {
                    return Err(cur.err("malformed add record"));
                }
                let feature = cur.feature(toks[0])?;
                let tasks = cur
                    .keyed(Some(toks[1]), "tasks")?
                    .split(',')
                    .map(|t| cur.num(t))
                    .collect::<Result<Vec<usize>>>()?;
                let d_se = cur.float(cur.keyed(Some(toks[2]), "dSE")?)?;
                let d_sm = cur.float(cur.keyed(Some(toks[3]), "dSM")?)?;
                let class = if toks.len() == 6 {
                    let name = cur.keyed(Some(toks[4]), "class")?;
                    let entry = match cur.keyed(Some(toks[5]), "entry")? {
                        "yes" => true,
                        "no" => false,
                        other => return Err(cur.err(format!("entry must be yes or no, got `{other}`"))),
                    };
                    Some((name.to_string(), entry))
                } else {
                    None
                };
                events.push(Event::Add {
                    feature,
                    tasks,
                    d_se,
                    d_sm,
                    class,
                });
            }
            "remove" => {
                if toks.len() != 2 {
                    return Err(cur.err("malformed remove record"));
                }
                events.push(Event::Remove {
                    feature: cur.feature(toks[0])?,
                    d_tdl: cur.float(cur.keyed(Some(toks[1]), "dTDL")?)?,
                });
            }
            "intercept" | "coef" => {
                let t: usize = cur.num(toks.first().copied().unwrap_or(""))?;
                let fit = fits
                    .get_mut(t)
                    .ok_or_else(|| cur.err(format!("task {t} out of range (dims first)")))?;
                match (kw, toks.len()) {
                    ("intercept", 2) => fit.intercept = cur.float(toks[1])?,
                    ("coef", 3) => fit.terms.push((cur.feature(toks[1])?, cur.float(toks[2])?)),
                    _ => return Err(cur.err(format!("malformed {kw} record"))),
                }
            }
            "total" => total = Some(cur.float(rest)?),
            other => return Err(cur.err(format!("unknown record `{other}`"))),
        }
    }
    let missing = |what: &str| parse_err(source, 0, 0, format!("missing `{what}` record"));
    let (n, m, h) = dims.ok_or_else(|| missing("dims"))?;
    Ok(SelectionModel {
        scheme: scheme.ok_or_else(|| missing("scheme"))?,
        setting,
        n,
        m,
        h,
        l_theta: l_theta.ok_or_else(|| missing("l_theta"))?,
        null_se: null_se.ok_or_else(|| missing("null_se"))?,
        events,
        fits,
        total_tdl: total.ok_or_else(|| missing("total"))?,
        flags,
    })
}

pub fn format_prior(prior: &TransferPrior) -> Result<String> {
    prior.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "{PRIOR_HEADER}");
    if let Some((a, b)) = prior.class_hyper {
        let _ = writeln!(out, "hyper class {} {}", fmt_f64(a), fmt_f64(b));
    }
    if let Some((c, d)) = prior.feature_hyper {
        let _ = writeln!(out, "hyper feature {} {}", fmt_f64(c), fmt_f64(d));
    }
    for (name, c) in &prior.class_counts {
        check_token("class", name)?;
        if name.contains('/') {
            return Err(Error::InvalidDataset(format!("class name `{name}` contains `/`")));
        }
        let _ = writeln!(out, "class {name} {} {}", c.selected, c.unselected);
    }
    for ((class, name), c) in &prior.feature_counts {
        check_token("class", class)?;
        check_token("feature", name)?;
        let _ = writeln!(out, "feature {class}/{name} {} {}", c.selected, c.unselected);
    }
    Ok(out)
}

pub fn parse_prior(text: &str, source: &str) -> Result<TransferPrior> {
    let first = text.lines().next().unwrap_or("");
    if first != PRIOR_HEADER {
        return Err(if first.starts_with("transfer-prior") {
            Error::VersionMismatch(format!("expected `{PRIOR_HEADER}`, found `{first}`"))
        } else {
            parse_err(source, 1, 1, format!("expected `{PRIOR_HEADER}`"))
        });
    }
    let mut prior = TransferPrior::uninformative();
    let mut t: Option<u32> = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        let cur = Cursor { source, line: i + 1 };
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let counts = |a: &str, b: &str| -> Result<Counts> {
            Ok(Counts {
                selected: cur.num(a)?,
                unselected: cur.num(b)?,
            })
        };
        let c = match toks.as_slice() {
            ["hyper", which, a, b] => {
                let pair = Some((cur.float(a)?, cur.float(b)?));
                match *which {
                    "class" => prior.class_hyper = pair,
                    "feature" => prior.feature_hyper = pair,
                    other => return Err(cur.err(format!("unknown hyperparameter group `{other}`"))),
                }
                continue;
            }
            ["class", name, a, b] => {
                let c = counts(a, b)?;
                if prior.class_counts.insert(name.to_string(), c).is_some() {
                    return Err(cur.err(format!("class `{name}` listed twice")));
                }
                c
            }
            ["feature", key, a, b] => {
                let (class, name) = key
                    .split_once('/')
                    .ok_or_else(|| cur.err(format!("expected class/feature, got `{key}`")))?;
                let c = counts(a, b)?;
                if prior
                    .feature_counts
                    .insert((class.to_string(), name.to_string()), c)
                    .is_some()
                {
                    return Err(cur.err(format!("feature `{key}` listed twice")));
                }
                c
            }
            _ => return Err(cur.err(format!("unrecognized record `{line}`"))),
        };
        let total = c
            .selected
            .checked_add(c.unselected)
            .ok_or_else(|| cur.err("count overflow"))?;
        match t {
            None => t = Some(total),
            Some(prev) if prev != total => {
                return Err(cur.err(format!("record totals {total}, earlier records total {prev}")))
            }
            _ => {}
        }
    }
    prior.t = t.unwrap_or(0);
    prior.validate()?;
    Ok(prior)
}

pub fn save_prior(path: &Path, prior: &TransferPrior) -> Result<()> {
    write_text(path, &format_prior(prior)?)
}

pub fn load_prior(path: &Path) -> Result<TransferPrior> {
    parse_prior(&read_text(path)?, &path.display().to_string())
}
