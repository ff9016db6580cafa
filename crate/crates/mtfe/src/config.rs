//! Flat key-value model configuration files.
//!
//! A [`ModelSpec`] serializes to UTF-8 text of `key = value` lines with
//! `#` comments, one key per model field. Reactions are sums of a closed
//! set of term shapes (`prod` for coefficient-times-product-of-species,
//! `logistic` for coefficient-times-s-times-one-minus-s), with `rho`
//! naming the transported density and any other species named by its
//! field. A complete file looks like:
//!
//! ```text
//! name = invasion
//! domain = 0 1
//! diffusion = linear 0.0002
//! attractant = fe_fields
//! taxis = c 0.005
//! cell_reaction = logistic 0.2 rho
//! fields = c
//! field.c.kind = diffusing 0.001 0.01
//! field.c.initial = gaussian 1 0.01      # amp, eps
//! field.c.reaction = prod 0.1 rho + prod -10 rho c
//! initial_density = gaussian 1 0.01
//! m_cells = 45
//! n_elements = 45
//! freeze_last_cell_reaction = true
//! t_end = 10
//! snapshots = 1 5 10
//! ```
//!
//! [`parse`] accepts any file [`emit`] produces and reports problems with
//! their 1-based line number; every catalog preset round-trips losslessly.
//! Keys may appear in any order; field names must be single whitespace-free
//! tokens (as the catalog's are).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{AttractantKind, Domain, FieldSpec, InitialDensity, ModelSpec, ScalarProfile};
use crate::reaction::{BoundaryPolicy, FieldKind, Reaction, ReactionTerm, Species};
use crate::transport::DiffusionLaw;

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line: Some(line),
        message: message.into(),
    }
}

fn missing(key: &str) -> Error {
    Error::Config {
        line: None,
        message: format!("missing required key `{key}`"),
    }
}

/// Render a model as a config file. The output is deterministic and
/// [`parse`] recovers the model exactly.
pub fn emit(spec: &ModelSpec) -> String {
    let mut lines: Vec<String> = Vec::new();
    lines.push(format!("name = {}", spec.name));
    match spec.domain {
        Domain::WholeLine => lines.push("domain = whole_line".into()),
        Domain::Bounded { a, b } => lines.push(format!("domain = {a} {b}")),
    }
    match spec.diffusion {
        DiffusionLaw::Linear { d_rho } => lines.push(format!("diffusion = linear {d_rho}")),
        DiffusionLaw::PowerLaw { d_rho, gamma } => {
            lines.push(format!("diffusion = power_law {d_rho} {gamma}"))
        }
        DiffusionLaw::VolumeFilling { d_rho, gamma } => {
            lines.push(format!("diffusion = volume_filling {d_rho} {gamma}"))
        }
    }
    match spec.attractant {
        AttractantKind::FeFields => lines.push("attractant = fe_fields".into()),
        AttractantKind::LogKernel => lines.push("attractant = log_kernel".into()),
    }
    if spec.attractant == AttractantKind::LogKernel || spec.kernel_chi != 0.0 {
        lines.push(format!("kernel_chi = {}", spec.kernel_chi));
    }
    if !spec.taxis.is_empty() {
        let pairs: Vec<String> = spec
            .taxis
            .iter()
            .map(|(name, chi)| format!("{name} {chi}"))
            .collect();
        lines.push(format!("taxis = {}", pairs.join(" ")));
    }
    if let Some(r) = &spec.cell_reaction {
        lines.push(format!("cell_reaction = {}", fmt_reaction(r, &spec.fields)).trim_end().into());
    }
    if !spec.fields.is_empty() {
        let names: Vec<&str> = spec.fields.iter().map(|f| f.name.as_str()).collect();
        lines.push(format!("fields = {}", names.join(" ")));
        for f in &spec.fields {
            match f.kind {
                FieldKind::Nodal => lines.push(format!("field.{}.kind = nodal", f.name)),
                FieldKind::Diffusing { d, eps } => {
                    lines.push(format!("field.{}.kind = diffusing {d} {eps}", f.name))
                }
            }
            lines.push(format!(
                "field.{}.initial = {}",
                f.name,
                fmt_profile(&f.initial)
            ));
            if let Some(r) = &f.reaction {
                lines.push(
                    format!("field.{}.reaction = {}", f.name, fmt_reaction(r, &spec.fields))
                        .trim_end()
                        .into(),
                );
            }
        }
    }
    match spec.initial_density {
        InitialDensity::SinglePeakInverse => {
            lines.push("initial_density = single_peak_inverse".into())
        }
        InitialDensity::Profile(p) => lines.push(format!("initial_density = {}", fmt_profile(&p))),
    }
    lines.push(format!("m_cells = {}", spec.m_cells));
    if let Some(n) = spec.n_elements {
        lines.push(format!("n_elements = {n}"));
    }
    lines.push(format!(
        "freeze_last_cell_reaction = {}",
        spec.policy.freeze_last_cell_reaction
    ));
    lines.push(format!("t_end = {}", spec.t_end));
    if !spec.snapshots.is_empty() {
        let ts: Vec<String> = spec.snapshots.iter().map(|t| t.to_string()).collect();
        lines.push(format!("snapshots = {}", ts.join(" ")));
    }
    lines.join("\n") + "\n"
}

fn fmt_profile(p: &ScalarProfile) -> String {
    match *p {
        ScalarProfile::Gaussian { amp, eps } => format!("gaussian {amp} {eps}"),
        ScalarProfile::OneMinusGaussian { amp, eps } => format!("one_minus_gaussian {amp} {eps}"),
        ScalarProfile::Logistic { rate } => format!("logistic {rate}"),
        ScalarProfile::Constant { value } => format!("constant {value}"),
    }
}

fn fmt_reaction(r: &Reaction, fields: &[FieldSpec]) -> String {
    let name = |s: Species| match s {
        Species::Rho => "rho".to_string(),
        Species::Field(i) => fields[i].name.clone(),
    };
    let terms: Vec<String> = r
        .terms
        .iter()
        .map(|t| match t {
            ReactionTerm::Product { coef, factors } => {
                let mut s = format!("prod {coef}");
                for &f in factors {
                    s.push(' ');
                    s.push_str(&name(f));
                }
                s
            }
            ReactionTerm::Logistic { coef, species } => {
                format!("logistic {coef} {}", name(*species))
            }
        })
        .collect();
    terms.join(" + ")
}

/// One `key = value` entry with its 1-based source line.
struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn scan(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(bad(line, format!("expected `key = value`, got `{content}`")));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(bad(line, "empty key"));
            }
            if let Some((first, _)) = map.get(&key) {
                return Err(bad(
                    line,
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
            }
            map.insert(key, (line, value.trim().to_string()));
        }
        Ok(Entries { map })
    }

    /// Consume a key, so leftovers can be reported as unknown.
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn unknown(&self) -> Option<Error> {
        self.map
            .iter()
            .min_by_key(|(_, (line, _))| *line)
            .map(|(key, (line, _))| bad(*line, format!("unknown key `{key}`")))
    }
}

fn parse_f64(line: usize, token: &str, what: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| bad(line, format!("{what}: `{token}` is not a number")))
}

fn parse_usize(line: usize, token: &str, what: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| bad(line, format!("{what}: `{token}` is not a non-negative integer")))
}

fn parse_profile(line: usize, value: &str) -> Result<ScalarProfile> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let expect = |n: usize| -> Result<()> {
        if tokens.len() == n {
            Ok(())
        } else {
            Err(bad(
                line,
                format!("profile `{}` takes {} parameter(s)", tokens[0], n - 1),
            ))
        }
    };
    match tokens.first().copied() {
        Some("gaussian") => {
            expect(3)?;
            Ok(ScalarProfile::Gaussian {
                amp: parse_f64(line, tokens[1], "gaussian amplitude")?,
                eps: parse_f64(line, tokens[2], "gaussian width")?,
            })
        }
        Some("one_minus_gaussian") => {
            expect(3)?;
            Ok(ScalarProfile::OneMinusGaussian {
                amp: parse_f64(line, tokens[1], "gaussian amplitude")?,
                eps: parse_f64(line, tokens[2], "gaussian width")?,
            })
        }
        Some("logistic") => {
            expect(2)?;
            Ok(ScalarProfile::Logistic {
                rate: parse_f64(line, tokens[1], "logistic rate")?,
            })
        }
        Some("constant") => {
            expect(2)?;
            Ok(ScalarProfile::Constant {
                value: parse_f64(line, tokens[1], "constant value")?,
            })
        }
        Some(other) => Err(bad(line, format!("unknown profile `{other}`"))),
        None => Err(bad(line, "empty profile")),
    }
}

fn parse_reaction(line: usize, value: &str, field_names: &[String]) -> Result<Reaction> {
    let species = |token: &str| -> Result<Species> {
        if token == "rho" {
            return Ok(Species::Rho);
        }
        field_names
            .iter()
            .position(|n| n == token)
            .map(Species::Field)
            .ok_or_else(|| bad(line, format!("unknown species `{token}` in reaction")))
    };
    let tokens: Vec<&str> = value.split_whitespace().collect();
    if tokens.is_empty() {
        return Ok(Reaction::default());
    }
    let mut terms = Vec::new();
    for chunk in tokens.split(|&t| t == "+") {
        match chunk.first().copied() {
            Some("prod") => {
                if chunk.len() < 2 {
                    return Err(bad(line, "`prod` needs a coefficient"));
                }
                let coef = parse_f64(line, chunk[1], "prod coefficient")?;
                let factors = chunk[2..]
                    .iter()
                    .map(|t| species(t))
                    .collect::<Result<Vec<_>>>()?;
                terms.push(ReactionTerm::Product { coef, factors });
            }
            Some("logistic") => {
                if chunk.len() != 3 {
                    return Err(bad(line, "`logistic` takes a coefficient and one species"));
                }
                let coef = parse_f64(line, chunk[1], "logistic coefficient")?;
                terms.push(ReactionTerm::Logistic {
                    coef,
                    species: species(chunk[2])?,
                });
            }
            Some(other) => {
                return Err(bad(
                    line,
                    format!("unknown reaction term `{other}` (expected `prod` or `logistic`)"),
                ))
            }
            None => return Err(bad(line, "empty reaction term")),
        }
    }
    Ok(Reaction { terms })
}

/// Parse a config file into a model. Problems are reported as
/// [`Error::Config`] carrying the offending 1-based line where one exists.
pub fn parse(text: &str) -> Result<ModelSpec> {
    let mut entries = Entries::scan(text)?;

    let (_, name) = entries.take("name").ok_or_else(|| missing("name"))?;

    let (line, value) = entries.take("domain").ok_or_else(|| missing("domain"))?;
    let domain = {
        let tokens: Vec<&str> = value.split_whitespace().collect();
        match tokens.as_slice() {
            ["whole_line"] => Domain::WholeLine,
            [a, b] => Domain::Bounded {
                a: parse_f64(line, a, "domain left end")?,
                b: parse_f64(line, b, "domain right end")?,
            },
            _ => {
                return Err(bad(
                    line,
                    "domain is `whole_line` or two interval endpoints",
                ))
            }
        }
    };

    let (line, value) = entries.take("diffusion").ok_or_else(|| missing("diffusion"))?;
    let diffusion = {
        let tokens: Vec<&str> = value.split_whitespace().collect();
        match tokens.as_slice() {
            ["linear", d] => DiffusionLaw::Linear {
                d_rho: parse_f64(line, d, "diffusivity")?,
            },
            ["power_law", d, g] => DiffusionLaw::PowerLaw {
                d_rho: parse_f64(line, d, "diffusivity")?,
                gamma: parse_f64(line, g, "diffusion exponent")?,
            },
            ["volume_filling", d, g] => DiffusionLaw::VolumeFilling {
                d_rho: parse_f64(line, d, "diffusivity")?,
                gamma: parse_f64(line, g, "jump-probability exponent")?,
            },
            _ => {
                return Err(bad(
                    line,
                    "diffusion is `linear d`, `power_law d gamma` or `volume_filling d gamma`",
                ))
            }
        }
    };

    let (line, value) = entries
        .take("attractant")
        .ok_or_else(|| missing("attractant"))?;
    let attractant = match value.as_str() {
        "fe_fields" => AttractantKind::FeFields,
        "log_kernel" => AttractantKind::LogKernel,
        other => return Err(bad(line, format!("unknown attractant kind `{other}`"))),
    };

    let kernel_chi = match entries.take("kernel_chi") {
        Some((line, value)) => parse_f64(line, &value, "kernel sensitivity")?,
        None => 0.0,
    };

    // Field order first: reactions and taxis resolve names against it.
    let field_names: Vec<String> = match entries.take("fields") {
        Some((_, value)) => value.split_whitespace().map(str::to_string).collect(),
        None => Vec::new(),
    };

    let taxis = match entries.take("taxis") {
        Some((line, value)) => {
            let tokens: Vec<&str> = value.split_whitespace().collect();
            if tokens.len() % 2 != 0 {
                return Err(bad(line, "taxis is a list of `field chi` pairs"));
            }
            tokens
                .chunks(2)
                .map(|pair| Ok((pair[0].to_string(), parse_f64(line, pair[1], "sensitivity")?)))
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };

    let cell_reaction = match entries.take("cell_reaction") {
        Some((line, value)) => Some(parse_reaction(line, &value, &field_names)?),
        None => None,
    };

    let mut fields = Vec::with_capacity(field_names.len());
    for fname in &field_names {
        let (line, value) = entries
            .take(&format!("field.{fname}.kind"))
            .ok_or_else(|| missing(&format!("field.{fname}.kind")))?;
        let tokens: Vec<&str> = value.split_whitespace().collect();
        let kind = match tokens.as_slice() {
            ["nodal"] => FieldKind::Nodal,
            ["diffusing", d, eps] => FieldKind::Diffusing {
                d: parse_f64(line, d, "field diffusivity")?,
                eps: parse_f64(line, eps, "field time scale")?,
            },
            _ => {
                return Err(bad(
                    line,
                    "field kind is `nodal` or `diffusing d eps`",
                ))
            }
        };
        let (line, value) = entries
            .take(&format!("field.{fname}.initial"))
            .ok_or_else(|| missing(&format!("field.{fname}.initial")))?;
        let initial = parse_profile(line, &value)?;
        let reaction = match entries.take(&format!("field.{fname}.reaction")) {
            Some((line, value)) => Some(parse_reaction(line, &value, &field_names)?),
            None => None,
        };
        fields.push(FieldSpec {
            name: fname.clone(),
            kind,
            initial,
            reaction,
        });
    }

    let (line, value) = entries
        .take("initial_density")
        .ok_or_else(|| missing("initial_density"))?;
    let initial_density = if value == "single_peak_inverse" {
        InitialDensity::SinglePeakInverse
    } else {
        InitialDensity::Profile(parse_profile(line, &value)?)
    };

    let (line, value) = entries.take("m_cells").ok_or_else(|| missing("m_cells"))?;
    let m_cells = parse_usize(line, &value, "mass cell count")?;

    let n_elements = match entries.take("n_elements") {
        Some((line, value)) => Some(parse_usize(line, &value, "element count")?),
        None => None,
    };

    let freeze_last_cell_reaction = match entries.take("freeze_last_cell_reaction") {
        Some((line, value)) => match value.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(bad(line, format!("expected `true` or `false`, got `{other}`"))),
        },
        None => false,
    };

    let (line, value) = entries.take("t_end").ok_or_else(|| missing("t_end"))?;
    let t_end = parse_f64(line, &value, "end time")?;

    let snapshots = match entries.take("snapshots") {
        Some((line, value)) => value
            .split_whitespace()
            .map(|t| parse_f64(line, t, "snapshot time"))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };

    if let Some(err) = entries.unknown() {
        return Err(err);
    }

    Ok(ModelSpec {
        name,
        domain,
        diffusion,
        attractant,
        kernel_chi,
        taxis,
        cell_reaction,
        fields,
        initial_density,
        m_cells,
        n_elements,
        policy: BoundaryPolicy {
            freeze_last_cell_reaction,
        },
        t_end,
        snapshots,
    })
}
