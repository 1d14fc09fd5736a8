//! Tube and robot parameter sets.
//!
//! Units used throughout the crate: millimeters for lengths, newtons for
//! forces, so moduli given in GPa become N/mm² (×10³) and bending stiffness is
//! reported in N·mm². Precurvature is stored in m⁻¹, matching the values
//! published for the reference systems, and converted on access.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric and material description of one tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeParams {
    /// Overall tube length, mm.
    pub length_total: f64,
    /// Length of the precurved distal section, mm.
    pub length_curved: f64,
    /// mm.
    pub inner_diameter: f64,
    /// mm.
    pub outer_diameter: f64,
    /// GPa.
    pub youngs_modulus: f64,
    /// GPa.
    pub shear_modulus: f64,
    /// Planar precurvature of the distal section, m⁻¹.
    pub precurvature: f64,
}

/// The seven perturbable tube fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeField {
    LengthTotal,
    LengthCurved,
    InnerDiameter,
    OuterDiameter,
    YoungsModulus,
    ShearModulus,
    Precurvature,
}

impl TubeField {
    pub const ALL: [TubeField; 7] = [
        TubeField::LengthTotal,
        TubeField::LengthCurved,
        TubeField::InnerDiameter,
        TubeField::OuterDiameter,
        TubeField::YoungsModulus,
        TubeField::ShearModulus,
        TubeField::Precurvature,
    ];

    fn name(self) -> &'static str {
        match self {
            TubeField::LengthTotal => "length_total",
            TubeField::LengthCurved => "length_curved",
            TubeField::InnerDiameter => "inner_diameter",
            TubeField::OuterDiameter => "outer_diameter",
            TubeField::YoungsModulus => "youngs_modulus",
            TubeField::ShearModulus => "shear_modulus",
            TubeField::Precurvature => "precurvature",
        }
    }
}

impl TubeParams {
    pub fn get(&self, field: TubeField) -> f64 {
        match field {
            TubeField::LengthTotal => self.length_total,
            TubeField::LengthCurved => self.length_curved,
            TubeField::InnerDiameter => self.inner_diameter,
            TubeField::OuterDiameter => self.outer_diameter,
            TubeField::YoungsModulus => self.youngs_modulus,
            TubeField::ShearModulus => self.shear_modulus,
            TubeField::Precurvature => self.precurvature,
        }
    }

    pub fn set(&mut self, field: TubeField, value: f64) {
        match field {
            TubeField::LengthTotal => self.length_total = value,
            TubeField::LengthCurved => self.length_curved = value,
            TubeField::InnerDiameter => self.inner_diameter = value,
            TubeField::OuterDiameter => self.outer_diameter = value,
            TubeField::YoungsModulus => self.youngs_modulus = value,
            TubeField::ShearModulus => self.shear_modulus = value,
            TubeField::Precurvature => self.precurvature = value,
        }
    }

    /// Precurvature in mm⁻¹.
    pub fn precurvature_per_mm(&self) -> f64 {
        self.precurvature * 1e-3
    }

    /// Annular second moment of area, mm⁴.
    pub fn second_moment(&self) -> f64 {
        std::f64::consts::PI / 64.0
            * (self.outer_diameter.powi(4) - self.inner_diameter.powi(4))
    }

    /// Torsional stiffness G·J with J = 2I, N·mm².
    pub fn torsional_stiffness(&self) -> f64 {
        self.shear_modulus * 1e3 * 2.0 * self.second_moment()
    }

    fn violations(&self, tube: usize, out: &mut Vec<Violation>) {
        let mut push = |field: TubeField, rule: &'static str| {
            out.push(Violation {
                tube: Some(tube),
                field: field.name(),
                rule,
            })
        };
        let all_finite = TubeField::ALL.iter().all(|f| self.get(*f).is_finite());
        if !all_finite {
            push(TubeField::LengthTotal, "all parameters finite");
            return;
        }
        if !(self.length_curved > 0.0) {
            push(TubeField::LengthCurved, "0 < length_curved");
        }
        if self.length_curved > self.length_total {
            push(TubeField::LengthCurved, "length_curved <= length_total");
        }
        if !(self.inner_diameter > 0.0) {
            push(TubeField::InnerDiameter, "0 < inner_diameter");
        }
        if !(self.inner_diameter < self.outer_diameter) {
            push(TubeField::InnerDiameter, "inner_diameter < outer_diameter");
        }
        if !(self.youngs_modulus > 0.0) {
            push(TubeField::YoungsModulus, "youngs_modulus > 0");
        }
        if !(self.shear_modulus > 0.0) {
            push(TubeField::ShearModulus, "shear_modulus > 0");
        }
        if self.precurvature < 0.0 {
            push(TubeField::Precurvature, "precurvature >= 0");
        }
    }
}

/// Bending stiffness E·I of a tube, N·mm².
pub fn bending_stiffness(tube: &TubeParams) -> f64 {
    tube.youngs_modulus * 1e3 * tube.second_moment()
}

/// A three-tube robot. Index 0 is the innermost and longest tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrSystem {
    pub system_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "tube")]
    pub tubes: [TubeParams; 3],
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Zero-based tube index, `None` for system-level rules.
    pub tube: Option<usize>,
    pub field: &'static str,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tube {
            Some(t) => write!(f, "tube {} {}: {}", t + 1, self.field, self.rule),
            None => write!(f, "{}: {}", self.field, self.rule),
        }
    }
}

/// Every violated invariant of `sys`; empty when valid.
pub fn validate_system(sys: &CtrSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, t) in sys.tubes.iter().enumerate() {
        t.violations(i, &mut out);
    }
    for i in 0..2 {
        let (inner, outer) = (&sys.tubes[i], &sys.tubes[i + 1]);
        if !(inner.length_total > outer.length_total) {
            out.push(Violation {
                tube: Some(i),
                field: "length_total",
                rule: "lengths not decreasing",
            });
        }
        // Non-strict nesting: no minimum clearance is imposed.
        if inner.outer_diameter > outer.inner_diameter {
            out.push(Violation {
                tube: Some(i),
                field: "outer_diameter",
                rule: "nesting: outer_diameter <= next tube inner_diameter",
            });
        }
    }
    out
}

impl CtrSystem {
    pub fn validated(self) -> Result<Self> {
        let v = validate_system(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidSystem(v))
        }
    }

    pub fn lengths(&self) -> [f64; 3] {
        [
            self.tubes[0].length_total,
            self.tubes[1].length_total,
            self.tubes[2].length_total,
        ]
    }

    /// Overall robot length, taken as the innermost tube length.
    pub fn robot_length(&self) -> f64 {
        self.tubes[0].length_total
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("system{}", self.system_id))
    }

    pub fn from_toml_str(s: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("system serializes")
    }

    /// Loads a TOML (or `.json`) robot file and validates it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sys: CtrSystem = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.into(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.into(),
                message: e.to_string(),
            })?
        };
        sys.validated()
    }
}

fn tube(
    length_total: f64,
    length_curved: f64,
    inner_diameter: f64,
    outer_diameter: f64,
    youngs_modulus: f64,
    shear_modulus: f64,
    precurvature: f64,
) -> TubeParams {
    TubeParams {
        length_total,
        length_curved,
        inner_diameter,
        outer_diameter,
        youngs_modulus,
        shear_modulus,
        precurvature,
    }
}

/// The four reference systems, ordered longest (0) to shortest (3).
pub fn reference_systems() -> [CtrSystem; 4] {
    [
        CtrSystem {
            system_id: 0,
            name: Some("system0".into()),
            tubes: [
                tube(431.0, 103.0, 0.7, 1.1, 102.5, 187.9, 21.3),
                tube(332.0, 113.0, 1.4, 1.8, 685.0, 115.3, 13.1),
                tube(174.0, 134.0, 2.0, 2.4, 169.6, 142.5, 3.5),
            ],
        },
        CtrSystem {
            system_id: 1,
            name: Some("system1".into()),
            tubes: [
                tube(370.0, 45.0, 0.3, 0.4, 500.0, 230.0, 15.8),
                tube(305.0, 100.0, 0.7, 0.9, 500.0, 230.0, 9.27),
                tube(170.0, 100.0, 1.2, 1.5, 500.0, 230.0, 4.37),
            ],
        },
        CtrSystem {
            system_id: 2,
            name: Some("system2".into()),
            tubes: [
                tube(309.0, 145.0, 0.7, 1.1, 75.0, 25.0, 1.68),
                tube(275.0, 114.0, 1.4, 1.8, 75.0, 25.0, 11.6),
                tube(173.0, 173.0, 1.83, 2.39, 75.0, 25.0, 10.8),
            ],
        },
        CtrSystem {
            system_id: 3,
            name: Some("system3".into()),
            tubes: [
                tube(150.0, 100.0, 1.0, 2.4, 50.0, 23.0, 15.82),
                tube(100.0, 21.6, 3.0, 3.8, 50.0, 23.0, 11.8),
                tube(70.0, 8.8, 4.4, 5.4, 50.0, 23.0, 20.04),
            ],
        },
    ]
}

pub fn reference_system(id: usize) -> CtrSystem {
    reference_systems()[id].clone()
}

/// Uniform multiplicative perturbation of tube parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRandomizationSpec {
    pub fraction: f64,
    #[serde(default = "all_fields")]
    pub parameters: Vec<TubeField>,
}

fn all_fields() -> Vec<TubeField> {
    TubeField::ALL.to_vec()
}

impl DomainRandomizationSpec {
    pub fn new(fraction: f64) -> Self {
        Self {
            fraction,
            parameters: all_fields(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..1.0).contains(&self.fraction) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "domain randomization fraction {} not in [0, 1)",
                self.fraction
            )))
        }
    }
}

pub const RANDOMIZE_MAX_ATTEMPTS: usize = 100;

/// Draws every selected parameter `p` uniformly from `[p(1-f), p(1+f)]`,
/// resampling the whole system until it validates.
pub fn randomize<R: Rng + ?Sized>(
    sys: &CtrSystem,
    spec: &DomainRandomizationSpec,
    rng: &mut R,
) -> Result<CtrSystem> {
    spec.validate()?;
    if spec.fraction == 0.0 || spec.parameters.is_empty() {
        return Ok(sys.clone());
    }
    let f = spec.fraction;
    for _ in 0..RANDOMIZE_MAX_ATTEMPTS {
        let mut out = sys.clone();
        for t in out.tubes.iter_mut() {
            for &field in &spec.parameters {
                let p = t.get(field);
                let (lo, hi) = (p * (1.0 - f), p * (1.0 + f));
                let v = if lo < hi { rng.random_range(lo..=hi) } else { p };
                t.set(field, v);
            }
        }
        if validate_system(&out).is_empty() {
            return Ok(out);
        }
    }
    Err(Error::RetriesExhausted {
        attempts: RANDOMIZE_MAX_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_systems_are_valid() {
        for sys in reference_systems() {
            assert!(validate_system(&sys).is_empty(), "{}", sys.label());
        }
    }

    #[test]
    fn short_inner_tube_is_flagged() {
        let mut sys = reference_system(0);
        sys.tubes[0].length_total = 100.0;
        let v = validate_system(&sys);
        assert!(v.iter().any(|v| v.rule == "lengths not decreasing"));
        // curved length now exceeds total length as well
        assert!(v.iter().any(|v| v.rule == "length_curved <= length_total"));
    }

    #[test]
    fn equal_diameters_are_flagged() {
        let mut sys = reference_system(0);
        sys.tubes[1].inner_diameter = sys.tubes[1].outer_diameter;
        let v = validate_system(&sys);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "inner_diameter < outer_diameter");
        assert_eq!(v[0].tube, Some(1));
    }

    #[test]
    fn stiffness_matches_hand_calculation() {
        // pi/64 * (1.1^4 - 0.7^4) mm^4 times 102.5e3 N/mm^2 = 6158.5033 N mm^2
        let t = reference_system(0).tubes[0];
        let i = std::f64::consts::PI / 64.0 * (1.4641 - 0.2401);
        let expected = 102.5e3 * i;
        assert!((bending_stiffness(&t) - expected).abs() < 1e-9);
        assert!((expected - 6158.503348740244).abs() < 1e-9);
    }

    #[test]
    fn stiffness_degenerate_and_linear() {
        let mut t = reference_system(0).tubes[0];
        let k = bending_stiffness(&t);
        t.youngs_modulus *= 2.0;
        assert!((bending_stiffness(&t) - 2.0 * k).abs() < 1e-9 * k);
        t.inner_diameter = t.outer_diameter;
        assert_eq!(bending_stiffness(&t), 0.0);
    }

    #[test]
    fn zero_fraction_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for sys in reference_systems() {
            let out = randomize(&sys, &DomainRandomizationSpec::new(0.0), &mut rng).unwrap();
            assert_eq!(out, sys);
        }
    }

    #[test]
    fn randomize_is_reproducible() {
        let sys = reference_system(2);
        let spec = DomainRandomizationSpec::new(0.05);
        let a = randomize(&sys, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = randomize(&sys, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sys);
    }

    #[test]
    fn unfixable_system_exhausts_retries() {
        // Perturbing precurvature can never repair a length-ordering violation.
        let mut sys = reference_system(0);
        sys.tubes[0].length_total = 300.0;
        let spec = DomainRandomizationSpec {
            fraction: 0.05,
            parameters: vec![TubeField::Precurvature],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match randomize(&sys, &spec, &mut rng) {
            Err(Error::RetriesExhausted { attempts }) => assert_eq!(attempts, RANDOMIZE_MAX_ATTEMPTS),
            other => panic!("expected RetriesExhausted, got {other:?}"),
        }
        assert!(randomize(&reference_system(0), &DomainRandomizationSpec::new(1.5), &mut rng).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let sys = reference_system(3);
        let text = sys.to_toml_string();
        assert!(text.contains("[[tube]]"));
        let back = CtrSystem::from_toml_str(&text).unwrap();
        assert_eq!(back, sys);
    }
}
