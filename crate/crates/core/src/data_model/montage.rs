use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel labels of the 16-electrode headset layout, in recording order.
pub const STANDARD_LABELS: [&str; 16] = [
    "Cz", "Fp2", "F3", "Fz", "F4", "FT7", "C3", "Fp1", "C4", "FT8", "P3", "Pz", "P4", "PO7", "PO8",
    "Oz",
];

const NORM_TOLERANCE: f64 = 1e-9;

/// Ordered channel labels with idealized positions on the unit sphere.
///
/// Coordinates: x to the right ear, y to the nasion, z to the vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeMontage {
    names: Vec<String>,
    positions: Vec<[f64; 3]>,
}

impl ElectrodeMontage {
    pub fn new(names: Vec<String>, positions: Vec<[f64; 3]>) -> Result<Self> {
        if names.len() != positions.len() {
            return Err(Error::InvariantViolation(format!(
                "montage has {} names but {} positions",
                names.len(),
                positions.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate montage label {name}"
                )));
            }
        }
        for (name, p) in names.iter().zip(&positions) {
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::InvariantViolation(format!(
                    "position of {name} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { names, positions })
    }

    /// The 16-channel layout used for every recording in the study.
    pub fn standard() -> Self {
        let names: Vec<String> = STANDARD_LABELS.iter().map(|s| s.to_string()).collect();
        let positions = STANDARD_LABELS
            .iter()
            .map(|l| standard_position(l).expect("standard label has a position"))
            .collect();
        Self::new(names, positions).expect("standard montage is valid")
    }

    /// Builds a montage from labels known to the 10-20 table.
    pub fn from_labels(labels: &[String]) -> Result<Self> {
        let positions = labels
            .iter()
            .map(|l| {
                standard_position(l).ok_or_else(|| {
                    Error::InvariantViolation(format!("no standard position for label {l}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels.to_vec(), positions)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    /// Great-circle distance between two channels, in radians.
    pub fn angular_distance(&self, a: usize, b: usize) -> f64 {
        great_circle(&self.positions[a], &self.positions[b])
    }
}

impl Default for ElectrodeMontage {
    fn default() -> Self {
        Self::standard()
    }
}

pub(crate) fn great_circle(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let dot = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    dot.clamp(-1.0, 1.0).acos()
}

fn spherical(polar_deg: f64, azimuth_deg: f64) -> [f64; 3] {
    let (t, p) = (polar_deg.to_radians(), azimuth_deg.to_radians());
    [t.sin() * p.sin(), t.sin() * p.cos(), t.cos()]
}

fn midpoint(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    let m = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    [m[0] / n, m[1] / n, m[2] / n]
}

/// Idealized 10-20/10-10 position for a label (case-insensitive).
///
/// Polar angle is measured from the vertex, azimuth from the nasion towards
/// the right ear. The outer ring sits 18 degrees above the ear line.
pub fn standard_position(label: &str) -> Option<[f64; 3]> {
    let p = match label.to_ascii_uppercase().as_str() {
        "CZ" => spherical(0.0, 0.0),
        "FZ" => spherical(36.0, 0.0),
        "PZ" => spherical(36.0, 180.0),
        "FPZ" => spherical(72.0, 0.0),
        "OZ" => spherical(72.0, 180.0),
        "FP1" => spherical(72.0, -18.0),
        "FP2" => spherical(72.0, 18.0),
        "F7" => spherical(72.0, -54.0),
        "F8" => spherical(72.0, 54.0),
        "FT7" => spherical(72.0, -72.0),
        "FT8" => spherical(72.0, 72.0),
        "T7" | "T3" => spherical(72.0, -90.0),
        "T8" | "T4" => spherical(72.0, 90.0),
        "P7" | "T5" => spherical(72.0, -126.0),
        "P8" | "T6" => spherical(72.0, 126.0),
        "PO7" => spherical(72.0, -144.0),
        "PO8" => spherical(72.0, 144.0),
        "O1" => spherical(72.0, -162.0),
        "O2" => spherical(72.0, 162.0),
        "C3" => spherical(36.0, -90.0),
        "C4" => spherical(36.0, 90.0),
        "F3" => midpoint(spherical(36.0, 0.0), spherical(72.0, -54.0)),
        "F4" => midpoint(spherical(36.0, 0.0), spherical(72.0, 54.0)),
        "P3" => midpoint(spherical(36.0, 180.0), spherical(72.0, -126.0)),
        "P4" => midpoint(spherical(36.0, 180.0), spherical(72.0, 126.0)),
        _ => return None,
    };
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_montage_matches_headset_layout() {
        let m = ElectrodeMontage::standard();
        assert_eq!(m.len(), 16);
        let expected = "Cz, Fp2, F3, Fz, F4, FT7, C3, Fp1, C4, FT8, P3, Pz, P4, PO7, PO8, Oz";
        assert_eq!(m.names().join(", "), expected);
        for p in m.positions() {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn left_hemisphere_has_negative_x() {
        let m = ElectrodeMontage::standard();
        for label in ["F3", "FT7", "C3", "Fp1", "P3", "PO7"] {
            assert!(m.positions()[m.index_of(label).unwrap()][0] < 0.0, "{label}");
        }
    }

    #[test]
    fn rejects_duplicates_and_off_sphere_points() {
        let dup = ElectrodeMontage::new(
            vec!["Cz".into(), "Cz".into()],
            vec![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        );
        assert!(matches!(dup, Err(Error::InvariantViolation(_))));
        let off = ElectrodeMontage::new(vec!["Cz".into()], vec![[0.0, 0.0, 1.1]]);
        assert!(matches!(off, Err(Error::InvariantViolation(_))));
    }
}
