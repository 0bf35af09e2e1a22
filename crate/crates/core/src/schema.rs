//! The 50-landmark facial schema (12 midline, 19 per side).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Midline,
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkDef {
    pub name: String,
    pub full_name: &'static str,
    pub region: Region,
}

const MIDLINE: [(&str, &str); 12] = [
    ("Tr", "Trichion"),
    ("G", "Glabella"),
    ("N", "Nasion"),
    ("Prn", "Pronasale"),
    ("C", "Columella"),
    ("Sn", "Subnasale"),
    ("Ls", "Labiale Superius"),
    ("Sto", "Stomion"),
    ("Li", "Labiale Inferius"),
    ("Sl", "Sublabiale"),
    ("Pg", "Pogonion"),
    ("Gn", "Gnathion"),
];

const BILATERAL: [(&str, &str); 19] = [
    ("T", "Tragion"),
    ("Pra", "Preaurale"),
    ("Sa", "Superaurale"),
    ("Pa", "Postaurale"),
    ("Sba", "Subaurale"),
    ("Ft", "Frontotemporale"),
    ("Zy", "Zygion"),
    ("Go", "Gonion"),
    ("Os", "Orbitale Superius"),
    ("Ex", "Exocanthion"),
    ("Or", "Orbitale"),
    ("En", "Endocanthion"),
    ("Chk", "Malare Cheek"),
    ("Ac", "Alar crest"),
    ("Al", "Alare"),
    ("Itn", "Inferior terminal point of the nostril axis"),
    ("Stn", "Superior terminal point of the nostril axis"),
    ("Cph", "Crista Philtri"),
    ("Ch", "Cheilion"),
];

/// Abbreviations of the eight peripheral ear landmarks (both sides).
pub const EAR_LANDMARKS: [&str; 8] = ["Pra_R", "Sa_R", "Pa_R", "Sba_R", "Pra_L", "Sa_L", "Pa_L", "Sba_L"];

/// Landmark names in canonical file order: midline, right side, left side.
/// Bilateral names carry an `_R` / `_L` suffix.
pub fn facial_schema() -> Vec<LandmarkDef> {
    let mut out: Vec<LandmarkDef> = MIDLINE
        .iter()
        .map(|&(name, full_name)| LandmarkDef {
            name: name.to_string(),
            full_name,
            region: Region::Midline,
        })
        .collect();
    for (region, suffix) in [(Region::Right, "_R"), (Region::Left, "_L")] {
        for &(abbr, full) in &BILATERAL {
            out.push(LandmarkDef {
                name: format!("{abbr}{suffix}"),
                full_name: full,
                region,
            });
        }
    }
    out
}

pub fn facial_names() -> Vec<String> {
    facial_schema().into_iter().map(|d| d.name).collect()
}

/// Region of a schema name, inferred from its suffix.
pub fn region_of(name: &str) -> Region {
    if name.ends_with("_R") {
        Region::Right
    } else if name.ends_with("_L") {
        Region::Left
    } else {
        Region::Midline
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_unique_names() {
        let names = facial_names();
        assert_eq!(names.len(), 50);
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 50);
        for ear in EAR_LANDMARKS {
            assert!(names.iter().any(|n| n == ear));
        }
    }
}
