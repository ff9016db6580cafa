//! Model descriptions and the preset catalog.
//!
//! A [`ModelSpec`] is pure data: the domain, the diffusion law of the
//! transported density, how the attractant is obtained (finite-element
//! fields or the logarithmic convolution kernel), the chemical fields with
//! their reactions, initial data, grid resolutions, and output times. The
//! catalog enumerates the benchmark configurations the solver is exercised
//! on: parabolic-elliptic Keller-Segel aggregation with and without logistic
//! growth, porous-medium-type nonlinear diffusion, volume-filling variants,
//! the parabolic-parabolic system, and two cancer invasion models up to the
//! five-species urokinase system.

use crate::error::{Error, Result};
use crate::euler::{EulerGrid, FeField};
use crate::mass::{init_inverse_from_density, InverseDistribution, MassGrid};
use crate::reaction::{
    BoundaryPolicy, FieldKind, FieldSystem, FieldVariable, Reaction, ReactionTerm, Species,
};
use crate::transport::DiffusionLaw;

/// Spatial domain of a model: free boundaries on the whole line, or a
/// bounded interval with walls (which also carries the finite-element mesh).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    WholeLine,
    Bounded { a: f64, b: f64 },
}

/// Closed set of initial-data shapes, all functions of the absolute
/// coordinate x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarProfile {
    /// amp * exp(-x^2 / eps)
    Gaussian { amp: f64, eps: f64 },
    /// 1 - amp * exp(-x^2 / eps)
    OneMinusGaussian { amp: f64, eps: f64 },
    /// 1 / (1 + exp(-rate * x))
    Logistic { rate: f64 },
    Constant { value: f64 },
}

impl ScalarProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarProfile::Gaussian { amp, eps } => amp * (-x * x / eps).exp(),
            ScalarProfile::OneMinusGaussian { amp, eps } => 1.0 - amp * (-x * x / eps).exp(),
            ScalarProfile::Logistic { rate } => 1.0 / (1.0 + (-rate * x).exp()),
            ScalarProfile::Constant { value } => value,
        }
    }
}

/// Initial data for the transported density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDensity {
    /// The single-peak benchmark datum given directly in inverse form,
    /// V0(w) = (w - 1/2) / ((w + 0.01)(1.01 - w))^(1/4), carrying unit mass.
    SinglePeakInverse,
    /// A density profile, sampled and inverted numerically on the domain.
    Profile(ScalarProfile),
}

/// The single-peak inverse datum.
pub fn single_peak_inverse(w: f64) -> f64 {
    (w - 0.5) / ((w + 0.01) * (1.01 - w)).powf(0.25)
}

/// How the attractant entering the taxis term is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttractantKind {
    /// Spline fitted to a linear combination of finite-element fields.
    FeFields,
    /// Logarithmic convolution kernel evaluated on the nodes directly.
    LogKernel,
}

/// One chemical field of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub initial: ScalarProfile,
    pub reaction: Option<Reaction>,
}

/// Complete, immutable description of one simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub domain: Domain,
    pub diffusion: DiffusionLaw,
    pub attractant: AttractantKind,
    /// Sensitivity of the kernel attractant (LogKernel models).
    pub kernel_chi: f64,
    /// FeFields taxis: per driving field, its name and sensitivity.
    pub taxis: Vec<(String, f64)>,
    /// Reaction of the transported density (cell averages); may only
    /// reference the density itself.
    pub cell_reaction: Option<Reaction>,
    pub fields: Vec<FieldSpec>,
    pub initial_density: InitialDensity,
    /// Cells of the mass grid.
    pub m_cells: usize,
    /// Intervals of the finite-element grid; None for kernel models.
    pub n_elements: Option<usize>,
    pub policy: BoundaryPolicy,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
}

/// Qualitative phenomena a preset is expected to show; used for labeling
/// runs, not for control flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phenomenon {
    Blowup,
    TwoPeaks,
    BoundedByOne,
    TravelingFront,
    MultiPeak,
}

/// A named catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub spec: ModelSpec,
    pub tags: &'static [Phenomenon],
}

impl ModelSpec {
    /// Structural diagnostics; an empty list means the spec is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.m_cells < 3 {
            problems.push(format!("mass grid needs at least 3 cells, got {}", self.m_cells));
        }
        if let Some(n) = self.n_elements {
            if n < 3 {
                problems.push(format!("element grid needs at least 3 intervals, got {n}"));
            }
        }
        match self.domain {
            Domain::Bounded { a, b } => {
                if !(a < b) {
                    problems.push(format!("domain bounds are not increasing: ({a}, {b})"));
                }
                if !self.fields.is_empty() && self.n_elements.is_none() {
                    problems.push("chemical fields need an element grid (N unset)".into());
                }
            }
            Domain::WholeLine => {
                if !self.fields.is_empty() {
                    problems.push("finite-element fields require a bounded domain".into());
                }
            }
        }
        if let Err(e) = self.diffusion.check() {
            problems.push(format!("{e}"));
        }
        match self.attractant {
            AttractantKind::LogKernel => {
                if !self.taxis.is_empty() {
                    problems.push("kernel attractant admits no field-driven taxis entries".into());
                }
                if self.n_elements.is_some() && self.fields.is_empty() {
                    problems.push("Euler grid unused: kernel attractant with N set".into());
                }
                if !(self.kernel_chi >= 0.0) {
                    problems.push(format!(
                        "kernel sensitivity must be nonnegative, got {}",
                        self.kernel_chi
                    ));
                }
            }
            AttractantKind::FeFields => {
                if self.kernel_chi != 0.0 {
                    problems.push("kernel sensitivity set on a field-attractant model".into());
                }
                for (name, chi) in &self.taxis {
                    if self.fields.iter().all(|f| &f.name != name) {
                        problems.push(format!("taxis references unknown field '{name}'"));
                    }
                    if !(*chi >= 0.0) {
                        problems.push(format!("taxis sensitivity for '{name}' must be nonnegative"));
                    }
                }
            }
        }
        for (i, field) in self.fields.iter().enumerate() {
            if self.fields[..i].iter().any(|f| f.name == field.name) {
                problems.push(format!("duplicate field name '{}'", field.name));
            }
            if let FieldKind::Diffusing { d, eps } = field.kind {
                if !(d >= 0.0 && d.is_finite()) {
                    problems.push(format!("field '{}': diffusivity must be >= 0", field.name));
                }
                if !(eps > 0.0 && eps.is_finite()) {
                    problems.push(format!("field '{}': time scale must be > 0", field.name));
                }
            }
            if let Some(r) = &field.reaction {
                for s in r.species() {
                    if let Species::Field(k) = s {
                        if k >= self.fields.len() {
                            problems.push(format!(
                                "field '{}': reaction references field #{k}, out of range",
                                field.name
                            ));
                        }
                    }
                }
            }
        }
        if let Some(r) = &self.cell_reaction {
            if r.species().iter().any(|s| matches!(s, Species::Field(_))) {
                problems.push("the density reaction may only reference the density".into());
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            problems.push(format!("end time must be finite and nonnegative, got {}", self.t_end));
        }
        let mut last = 0.0;
        for &s in &self.snapshots {
            if !(s > last) {
                problems.push(format!("snapshot times must be increasing and positive: {s}"));
            }
            if s > self.t_end {
                problems.push(format!("snapshot time {s} lies beyond the end time {}", self.t_end));
            }
            last = s;
        }
        problems
    }

    /// Build the initial inverse distribution and chemical fields.
    pub fn initial_state(&self) -> Result<(InverseDistribution, FieldSystem)> {
        let problems = self.validate();
        if !problems.is_empty() {
            return Err(Error::InvalidModel { problems });
        }
        let m = self.m_cells;
        let v = match (&self.initial_density, self.domain) {
            (InitialDensity::SinglePeakInverse, _) => {
                let nodes = (0..=m).map(|j| single_peak_inverse(j as f64 / m as f64)).collect();
                InverseDistribution::new(MassGrid::new(m, 1.0)?, nodes)?
            }
            (InitialDensity::Profile(profile), Domain::Bounded { a, b }) => {
                init_inverse_from_density(|x| profile.eval(x), a, b, m, 65536)?.0
            }
            (InitialDensity::Profile(_), Domain::WholeLine) => {
                return Err(Error::InvalidModel {
                    problems: vec!["profile initial data needs a bounded domain".into()],
                });
            }
        };
        let fields = if self.fields.is_empty() {
            FieldSystem::empty()
        } else {
            let (a, b) = match self.domain {
                Domain::Bounded { a, b } => (a, b),
                Domain::WholeLine => unreachable!("validated above"),
            };
            let n = self.n_elements.expect("validated above");
            let grid = EulerGrid::new(a, b, n);
            let vars = self
                .fields
                .iter()
                .map(|f| FieldVariable {
                    name: f.name.clone(),
                    kind: f.kind,
                    field: FeField::from_fn(grid, |x| f.initial.eval(x)),
                    reaction: f.reaction.clone(),
                })
                .collect();
            FieldSystem::new(vars)?
        };
        Ok((v, fields))
    }

    /// Whether the transport step pins the outer nodes to the walls.
    pub fn pinned_ends(&self) -> bool {
        matches!(self.domain, Domain::Bounded { .. })
    }
}

fn species_by_name(fields: &[&str], name: &str) -> Species {
    if name == "rho" {
        Species::Rho
    } else {
        Species::Field(
            fields
                .iter()
                .position(|f| *f == name)
                .unwrap_or_else(|| panic!("unknown species '{name}' in catalog")),
        )
    }
}

fn prod(fields: &[&str], coef: f64, names: &[&str]) -> ReactionTerm {
    ReactionTerm::Product {
        coef,
        factors: names.iter().map(|n| species_by_name(fields, n)).collect(),
    }
}

fn logistic(fields: &[&str], coef: f64, name: &str) -> ReactionTerm {
    ReactionTerm::Logistic {
        coef,
        species: species_by_name(fields, name),
    }
}

fn reaction(terms: Vec<ReactionTerm>) -> Option<Reaction> {
    Some(Reaction { terms })
}

fn kernel_model(name: &str, diffusion: DiffusionLaw, mu: f64, m: usize, t_end: f64, snapshots: Vec<f64>) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        domain: Domain::WholeLine,
        diffusion,
        attractant: AttractantKind::LogKernel,
        kernel_chi: 2.5 * std::f64::consts::PI,
        taxis: Vec::new(),
        cell_reaction: if mu == 0.0 {
            None
        } else {
            reaction(vec![logistic(&[], mu, "rho")])
        },
        fields: Vec::new(),
        initial_density: InitialDensity::SinglePeakInverse,
        m_cells: m,
        n_elements: None,
        policy: BoundaryPolicy::default(),
        t_end,
        snapshots,
    }
}

fn pp_ks_domain() -> (f64, f64) {
    (single_peak_inverse(0.0), single_peak_inverse(1.0))
}

fn pp_ks_model(
    name: &str,
    d_rho: f64,
    d_c: f64,
    chi: f64,
    alpha: f64,
    beta: f64,
    c0: ScalarProfile,
    m: usize,
    n: usize,
    t_end: f64,
    snapshots: Vec<f64>,
) -> ModelSpec {
    let (a, b) = pp_ks_domain();
    let fields = ["c"];
    ModelSpec {
        name: name.into(),
        domain: Domain::Bounded { a, b },
        diffusion: DiffusionLaw::Linear { d_rho },
        attractant: AttractantKind::FeFields,
        kernel_chi: 0.0,
        taxis: vec![("c".into(), chi)],
        cell_reaction: None,
        fields: vec![FieldSpec {
            name: "c".into(),
            kind: FieldKind::Diffusing { d: d_c, eps: 1.0 },
            initial: c0,
            reaction: reaction(vec![
                prod(&fields, alpha, &["rho"]),
                prod(&fields, -beta, &["c"]),
            ]),
        }],
        initial_density: InitialDensity::SinglePeakInverse,
        m_cells: m,
        n_elements: Some(n),
        policy: BoundaryPolicy::default(),
        t_end,
        snapshots,
    }
}

fn invasion_model() -> ModelSpec {
    let fields = ["v", "m"];
    let eps = 1e-2;
    ModelSpec {
        name: "invasion".into(),
        domain: Domain::Bounded { a: 0.0, b: 1.0 },
        diffusion: DiffusionLaw::Linear { d_rho: 2e-4 },
        attractant: AttractantKind::FeFields,
        kernel_chi: 0.0,
        taxis: vec![("v".into(), 5e-3)],
        cell_reaction: reaction(vec![logistic(&fields, 0.2, "rho")]),
        fields: vec![
            FieldSpec {
                name: "v".into(),
                kind: FieldKind::Nodal,
                initial: ScalarProfile::OneMinusGaussian { amp: 0.5, eps },
                reaction: reaction(vec![prod(&fields, -10.0, &["v", "m"])]),
            },
            FieldSpec {
                name: "m".into(),
                kind: FieldKind::Diffusing { d: 1e-3, eps: 1.0 },
                initial: ScalarProfile::Gaussian { amp: 0.5, eps },
                reaction: reaction(vec![prod(&fields, 0.1, &["rho"])]),
            },
        ],
        initial_density: InitialDensity::Profile(ScalarProfile::Gaussian { amp: 1.0, eps }),
        m_cells: 45,
        n_elements: Some(45),
        policy: BoundaryPolicy {
            freeze_last_cell_reaction: true,
        },
        t_end: 1.0,
        snapshots: vec![0.25, 0.5, 1.0],
    }
}

fn upa_model(name: &str, diffusion: DiffusionLaw, t_end: f64, snapshots: Vec<f64>) -> ModelSpec {
    let fields = ["v", "u", "p", "m"];
    let eps = 5e-3;
    ModelSpec {
        name: name.into(),
        domain: Domain::Bounded { a: 0.0, b: 10.0 },
        diffusion,
        attractant: AttractantKind::FeFields,
        kernel_chi: 0.0,
        taxis: vec![
            ("v".into(), 2.85e-2),
            ("u".into(), 3.05e-2),
            ("p".into(), 3.75e-2),
        ],
        cell_reaction: reaction(vec![logistic(&fields, 0.25, "rho")]),
        fields: vec![
            FieldSpec {
                name: "v".into(),
                kind: FieldKind::Nodal,
                initial: ScalarProfile::OneMinusGaussian { amp: 0.5, eps },
                reaction: reaction(vec![
                    prod(&fields, -8.15, &["v", "m"]),
                    prod(&fields, 0.75, &["u", "p"]),
                    prod(&fields, -0.55, &["v", "p"]),
                    logistic(&fields, 0.15, "v"),
                ]),
            },
            FieldSpec {
                name: "u".into(),
                kind: FieldKind::Diffusing { d: 2.5e-3, eps: 1.0 },
                initial: ScalarProfile::Gaussian { amp: 0.5, eps },
                reaction: reaction(vec![
                    prod(&fields, -0.75, &["u", "p"]),
                    prod(&fields, -0.3, &["rho", "u"]),
                    prod(&fields, 0.215, &["rho"]),
                ]),
            },
            FieldSpec {
                name: "p".into(),
                kind: FieldKind::Diffusing { d: 3.5e-3, eps: 1.0 },
                initial: ScalarProfile::Gaussian { amp: 0.05, eps },
                reaction: reaction(vec![
                    prod(&fields, -0.75, &["u", "p"]),
                    prod(&fields, -0.55, &["v", "p"]),
                    prod(&fields, 0.5, &["m"]),
                ]),
            },
            FieldSpec {
                name: "m".into(),
                kind: FieldKind::Diffusing { d: 4.91e-3, eps: 1.0 },
                initial: ScalarProfile::Constant { value: 0.0 },
                reaction: reaction(vec![
                    prod(&fields, 0.11, &["v", "p"]),
                    prod(&fields, 0.75, &["rho", "u"]),
                    prod(&fields, -0.5, &["m"]),
                ]),
            },
        ],
        initial_density: InitialDensity::Profile(ScalarProfile::Gaussian { amp: 1.0, eps }),
        m_cells: 400,
        n_elements: Some(400),
        policy: BoundaryPolicy {
            freeze_last_cell_reaction: true,
        },
        t_end,
        snapshots,
    }
}

/// The benchmark catalog. Names are the CLI vocabulary; each entry carries
/// the exact published parameters of its experiment.
pub fn catalog() -> Vec<Preset> {
    let upa_snapshots = vec![5.0, 10.0, 15.0, 20.0, 23.0];
    vec![
        Preset {
            name: "ks_log_blowup",
            spec: kernel_model(
                "ks_log_blowup",
                DiffusionLaw::Linear { d_rho: 1.0 },
                0.0,
                50,
                0.5,
                vec![0.1, 0.2, 0.3],
            ),
            tags: &[Phenomenon::Blowup],
        },
        Preset {
            name: "ks_log_logistic",
            spec: kernel_model(
                "ks_log_logistic",
                DiffusionLaw::Linear { d_rho: 1.0 },
                0.2,
                50,
                3.0,
                vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            ),
            tags: &[],
        },
        Preset {
            name: "nonlinear_diffusion_g2",
            spec: kernel_model(
                "nonlinear_diffusion_g2",
                DiffusionLaw::PowerLaw {
                    d_rho: 1.0,
                    gamma: 2.0,
                },
                0.0,
                500,
                1.0,
                vec![0.25, 0.5, 1.0],
            ),
            tags: &[],
        },
        Preset {
            name: "nonlinear_diffusion_g1_5",
            spec: kernel_model(
                "nonlinear_diffusion_g1_5",
                DiffusionLaw::PowerLaw {
                    d_rho: 1.0,
                    gamma: 1.5,
                },
                0.0,
                500,
                1.0,
                vec![0.25, 0.5, 1.0],
            ),
            tags: &[],
        },
        Preset {
            name: "volume_filling_g2",
            spec: kernel_model(
                "volume_filling_g2",
                DiffusionLaw::VolumeFilling {
                    d_rho: 1.0,
                    gamma: 2.0,
                },
                0.0,
                50,
                1.0,
                vec![0.1, 0.25, 0.5, 1.0],
            ),
            tags: &[Phenomenon::BoundedByOne],
        },
        Preset {
            name: "volume_filling_g0_5",
            spec: kernel_model(
                "volume_filling_g0_5",
                DiffusionLaw::VolumeFilling {
                    d_rho: 1.0,
                    gamma: 0.5,
                },
                0.0,
                50,
                1.0,
                vec![0.1, 0.25, 0.5, 1.0],
            ),
            tags: &[Phenomenon::BoundedByOne],
        },
        Preset {
            name: "pp_ks_peak_movement",
            spec: pp_ks_model(
                "pp_ks_peak_movement",
                0.1,
                0.01,
                2.5,
                0.5,
                1.0,
                ScalarProfile::Logistic { rate: 5.0 },
                45,
                230,
                1.0,
                vec![0.25, 0.5, 1.0],
            ),
            tags: &[],
        },
        Preset {
            name: "pp_ks_peak_splitting",
            spec: pp_ks_model(
                "pp_ks_peak_splitting",
                0.1,
                0.1,
                5.0,
                1.0,
                1.0,
                ScalarProfile::OneMinusGaussian {
                    amp: 1.0,
                    eps: 0.05,
                },
                90,
                450,
                0.3,
                vec![0.1, 0.2, 0.3],
            ),
            tags: &[Phenomenon::TwoPeaks],
        },
        Preset {
            name: "invasion",
            spec: invasion_model(),
            tags: &[Phenomenon::TravelingFront],
        },
        Preset {
            name: "upa",
            spec: upa_model(
                "upa",
                DiffusionLaw::Linear { d_rho: 3.5e-4 },
                23.0,
                upa_snapshots.clone(),
            ),
            tags: &[Phenomenon::MultiPeak, Phenomenon::TravelingFront],
        },
        Preset {
            name: "upa_volume_filling_g2",
            spec: upa_model(
                "upa_volume_filling_g2",
                DiffusionLaw::VolumeFilling {
                    d_rho: 3.5e-4,
                    gamma: 2.0,
                },
                23.0,
                upa_snapshots.clone(),
            ),
            tags: &[Phenomenon::BoundedByOne, Phenomenon::TravelingFront],
        },
        Preset {
            name: "upa_volume_filling_g0_5",
            spec: upa_model(
                "upa_volume_filling_g0_5",
                DiffusionLaw::VolumeFilling {
                    d_rho: 3.5e-4,
                    gamma: 0.5,
                },
                23.0,
                upa_snapshots,
            ),
            tags: &[Phenomenon::BoundedByOne, Phenomenon::TravelingFront],
        },
    ]
}

/// Look a preset up by name.
pub fn preset(name: &str) -> Option<Preset> {
    catalog().into_iter().find(|p| p.name == name)
}
