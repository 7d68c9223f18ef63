//! Atomic and collisional constants for the rubidium D1 line.
//!
//! Hyperfine splittings, masses and isotope shift follow the standard
//! rubidium D-line reference tables. Gyromagnetic ratios are
//! `g_F · μ_B / h` for the upper ground hyperfine level, with `g_F` including
//! the nuclear term. Abundances are the natural values for the cells this
//! toolkit models.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::Config;

/// Bohr magneton over Planck's constant, kHz/μT.
pub const BOHR_MAGNETON_KHZ_PER_UT: f64 = 13.996_244_936;
/// Free-electron g-factor magnitude of the 5S1/2 state.
pub const G_J_GROUND: f64 = 2.002_331_13;
/// Rb D1 transition frequency, GHz.
pub const D1_FREQUENCY_GHZ: f64 = 377_107.463_380;
pub const ATOMIC_MASS_UNIT_KG: f64 = 1.660_539_066_60e-27;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Isotope {
    Rb85,
    Rb87,
}

impl Isotope {
    pub const ALL: [Isotope; 2] = [Isotope::Rb85, Isotope::Rb87];

    fn config_prefix(self) -> &'static str {
        match self {
            Isotope::Rb85 => "rb85",
            Isotope::Rb87 => "rb87",
        }
    }
}

impl fmt::Display for Isotope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Isotope::Rb85 => "Rb85",
            Isotope::Rb87 => "Rb87",
        })
    }
}

impl FromStr for Isotope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rb85" | "85rb" => Ok(Isotope::Rb85),
            "rb87" | "87rb" => Ok(Isotope::Rb87),
            _ => Err(Error::UnknownIsotope(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotopeSpec {
    pub isotope: Isotope,
    pub abundance: f64,
    /// kHz/μT.
    pub gyromagnetic_ratio: f64,
    /// GHz.
    pub ground_hyperfine_splitting: f64,
    /// 5P1/2 hyperfine splitting, GHz.
    pub excited_d1_hyperfine_splitting: f64,
    /// Twice the nuclear spin I.
    pub twice_nuclear_spin: u32,
    pub ground_f_levels: Vec<u32>,
    pub excited_f_levels: Vec<u32>,
    pub mass_amu: f64,
    /// Shift of this isotope's D1 centroid relative to the ⁸⁵Rb centroid, GHz.
    pub isotope_shift: f64,
}

impl IsotopeSpec {
    pub fn name(&self) -> String {
        self.isotope.to_string()
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_amu * ATOMIC_MASS_UNIT_KG
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            self.gyromagnetic_ratio,
            self.ground_hyperfine_splitting,
            self.excited_d1_hyperfine_splitting,
            self.mass_amu,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "{}: gyromagnetic ratio, splittings and mass must be positive",
                self.isotope
            )));
        }
        if !(0.0..=1.0).contains(&self.abundance) {
            return Err(Error::InvalidParameter(format!(
                "{}: abundance {} outside [0, 1]",
                self.isotope, self.abundance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferGasCoefficients {
    pub gas: String,
    /// Pressure broadening (FWHM), GHz/amagat.
    pub broadening_coefficient: f64,
    /// Pressure shift, GHz/amagat.
    pub shift_coefficient: f64,
}

impl BufferGasCoefficients {
    /// N₂ on the Rb D1 line. The broadening coefficient is the ratio of the
    /// fitted linewidth 16.38 GHz to the inferred density 0.92 amg, which
    /// agrees with the tabulated 17.8 GHz/amg.
    pub fn nitrogen() -> Self {
        Self {
            gas: "N2".into(),
            broadening_coefficient: 16.38 / 0.92,
            shift_coefficient: -8.25,
        }
    }
}

/// One hyperfine component of the D1 line.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLine {
    pub isotope: Isotope,
    pub ground_f: u32,
    pub excited_f: u32,
    /// Relative to the ⁸⁵Rb D1 centroid, GHz.
    pub center_frequency_offset: f64,
    /// Degeneracy-weighted strength; sums to 1 over one isotope's lines.
    pub relative_strength: f64,
}

/// Registry of isotopes and buffer gases.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicData {
    isotopes: Vec<IsotopeSpec>,
    buffer_gases: Vec<BufferGasCoefficients>,
}

impl Default for AtomicData {
    fn default() -> Self {
        Self {
            isotopes: vec![
                IsotopeSpec {
                    isotope: Isotope::Rb85,
                    abundance: 0.7215,
                    gyromagnetic_ratio: g_factor(5, 3, -0.000_293_640_00)
                        * BOHR_MAGNETON_KHZ_PER_UT,
                    ground_hyperfine_splitting: 3.035_732_439,
                    excited_d1_hyperfine_splitting: 0.361_58,
                    twice_nuclear_spin: 5,
                    ground_f_levels: vec![2, 3],
                    excited_f_levels: vec![2, 3],
                    mass_amu: 84.911_789_738,
                    isotope_shift: 0.0,
                },
                IsotopeSpec {
                    isotope: Isotope::Rb87,
                    abundance: 0.2785,
                    gyromagnetic_ratio: g_factor(3, 2, -0.000_995_141_4)
                        * BOHR_MAGNETON_KHZ_PER_UT,
                    ground_hyperfine_splitting: 6.834_682_610_904,
                    excited_d1_hyperfine_splitting: 0.816_656,
                    twice_nuclear_spin: 3,
                    ground_f_levels: vec![1, 2],
                    excited_f_levels: vec![1, 2],
                    mass_amu: 86.909_180_527,
                    isotope_shift: 0.077_690,
                },
            ],
            buffer_gases: vec![BufferGasCoefficients::nitrogen()],
        }
    }
}

/// Ground-state Landé factor of level `f` for nuclear spin `twice_i / 2`.
fn g_factor(twice_i: u32, f: u32, g_i: f64) -> f64 {
    let i = twice_i as f64 / 2.0;
    let j = 0.5;
    let f = f as f64;
    let ff = f * (f + 1.0);
    G_J_GROUND * (ff - i * (i + 1.0) + j * (j + 1.0)) / (2.0 * ff)
        + g_i * (ff + i * (i + 1.0) - j * (j + 1.0)) / (2.0 * ff)
}

impl AtomicData {
    /// Defaults with any `rb85.*`, `rb87.*` or `<gas>.*` keys from `config` applied.
    pub fn from_config(config: &Config) -> Result<Self> {
        let mut data = Self::default();
        for spec in &mut data.isotopes {
            let p = spec.isotope.config_prefix();
            let key = |k: &str| format!("{p}.{k}");
            if let Some(v) = config.get_f64(&key("abundance"))? {
                spec.abundance = v;
            }
            if let Some(v) = config.get_f64(&key("gyromagnetic_ratio_khz_per_ut"))? {
                spec.gyromagnetic_ratio = v;
            }
            if let Some(v) = config.get_f64(&key("ground_splitting_ghz"))? {
                spec.ground_hyperfine_splitting = v;
            }
            if let Some(v) = config.get_f64(&key("excited_splitting_ghz"))? {
                spec.excited_d1_hyperfine_splitting = v;
            }
            if let Some(v) = config.get_f64(&key("mass_amu"))? {
                spec.mass_amu = v;
            }
            if let Some(v) = config.get_f64(&key("isotope_shift_ghz"))? {
                spec.isotope_shift = v;
            }
        }
        for gas in &mut data.buffer_gases {
            let p = gas.gas.to_ascii_lowercase();
            if let Some(v) = config.get_f64(&format!("{p}.broadening_ghz_per_amg"))? {
                gas.broadening_coefficient = v;
            }
            if let Some(v) = config.get_f64(&format!("{p}.shift_ghz_per_amg"))? {
                gas.shift_coefficient = v;
            }
        }
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        for spec in &self.isotopes {
            spec.validate()?;
        }
        let total: f64 = self.isotopes.iter().map(|s| s.abundance).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "isotope abundances sum to {total}, expected 1"
            )));
        }
        if let Some(g) = self
            .buffer_gases
            .iter()
            .find(|g| !(g.broadening_coefficient > 0.0))
        {
            return Err(Error::InvalidParameter(format!(
                "{}: broadening coefficient must be positive",
                g.gas
            )));
        }
        Ok(())
    }

    pub fn get_isotope(&self, name: &str) -> Result<&IsotopeSpec> {
        let iso: Isotope = name.parse()?;
        Ok(self.isotope(iso))
    }

    pub fn isotope(&self, iso: Isotope) -> &IsotopeSpec {
        self.isotopes
            .iter()
            .find(|s| s.isotope == iso)
            .expect("registry holds every Isotope variant")
    }

    pub fn isotopes(&self) -> &[IsotopeSpec] {
        &self.isotopes
    }

    pub fn buffer_gas(&self, gas: &str) -> Result<&BufferGasCoefficients> {
        self.buffer_gases
            .iter()
            .find(|g| g.gas.eq_ignore_ascii_case(gas))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown buffer gas `{gas}`")))
    }

    /// Natural-abundance weights `(isotope, abundance)`.
    pub fn natural_weights(&self) -> Vec<(Isotope, f64)> {
        self.isotopes
            .iter()
            .map(|s| (s.isotope, s.abundance))
            .collect()
    }
}

/// Energy of hyperfine level `f` of a J = 1/2 state, relative to its centroid.
fn j_half_level_energy(twice_i: u32, splitting: f64, f: u32) -> f64 {
    let i = twice_i as f64 / 2.0;
    let a = splitting / (i + 0.5);
    let f = f as f64;
    0.5 * a * (f * (f + 1.0) - i * (i + 1.0) - 0.75)
}

/// All allowed D1 hyperfine components of one isotope (|ΔF| ≤ 1, no 0 → 0).
pub fn d1_transition_lines(iso: &IsotopeSpec) -> Vec<TransitionLine> {
    let twice_i = iso.twice_nuclear_spin;
    let ground_states = 2.0 * (twice_i as f64 + 1.0);
    let mut lines = Vec::new();
    for &fg in &iso.ground_f_levels {
        for &fe in &iso.excited_f_levels {
            if fg.abs_diff(fe) > 1 || (fg == 0 && fe == 0) {
                continue;
            }
            let offset = iso.isotope_shift
                + j_half_level_energy(twice_i, iso.excited_d1_hyperfine_splitting, fe)
                - j_half_level_energy(twice_i, iso.ground_hyperfine_splitting, fg);
            let strength =
                d1_strength_factor(twice_i, fg, fe) * (2 * fg + 1) as f64 / ground_states;
            lines.push(TransitionLine {
                isotope: iso.isotope,
                ground_f: fg,
                excited_f: fe,
                center_frequency_offset: offset,
                relative_strength: strength,
            });
        }
    }
    lines
}

/// Unweighted lines of every isotope in `data`.
pub fn all_d1_lines(data: &AtomicData) -> Vec<TransitionLine> {
    data.isotopes().iter().flat_map(d1_transition_lines).collect()
}

/// Lines of every isotope with strengths scaled by the given weights.
pub fn weighted_d1_lines(data: &AtomicData, weights: &[(Isotope, f64)]) -> Vec<TransitionLine> {
    weights
        .iter()
        .flat_map(|&(iso, w)| {
            d1_transition_lines(data.isotope(iso))
                .into_iter()
                .map(move |mut l| {
                    l.relative_strength *= w;
                    l
                })
        })
        .collect()
}

/// Hyperfine transition strength factor `S_FF'` for J = J' = 1/2; sums to 1
/// over F' for each F.
pub fn d1_strength_factor(twice_i: u32, fg: u32, fe: u32) -> f64 {
    let w = wigner_6j([1, 1, 2, 2 * fe, 2 * fg, twice_i]);
    (2 * fe + 1) as f64 * 2.0 * w * w
}

fn factorial(n: i64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Triangle coefficient Δ(abc) with doubled arguments.
fn triangle(a: i64, b: i64, c: i64) -> Option<f64> {
    let (x, y, z) = (a + b - c, a - b + c, -a + b + c);
    if x < 0 || y < 0 || z < 0 || x % 2 != 0 || y % 2 != 0 || z % 2 != 0 {
        return None;
    }
    Some(factorial(x / 2) * factorial(y / 2) * factorial(z / 2) / factorial((a + b + c) / 2 + 1))
}

/// Wigner 6j symbol {j1 j2 j3; j4 j5 j6} by the Racah formula. Arguments
/// are doubled so half-integers stay integral.
pub fn wigner_6j(twice: [u32; 6]) -> f64 {
    let [a, b, c, d, e, f] = twice.map(|v| v as i64);
    let tri = [(a, b, c), (a, e, f), (d, b, f), (d, e, c)];
    let mut pref = 1.0;
    for &(x, y, z) in &tri {
        match triangle(x, y, z) {
            Some(t) => pref *= t,
            None => return 0.0,
        }
    }
    let sums = [(a + b + c) / 2, (a + e + f) / 2, (d + b + f) / 2, (d + e + c) / 2];
    let maxes = [(a + b + d + e) / 2, (a + c + d + f) / 2, (b + c + e + f) / 2];
    let lo = *sums.iter().max().unwrap();
    let hi = *maxes.iter().min().unwrap();
    let mut total = 0.0;
    for t in lo..=hi {
        let mut denom = 1.0;
        for s in sums {
            denom *= factorial(t - s);
        }
        for m in maxes {
            denom *= factorial(m - t);
        }
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * factorial(t + 1) / denom;
    }
    pref.sqrt() * total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(lines: &[TransitionLine], fg: u32, fe: u32) -> &TransitionLine {
        lines
            .iter()
            .find(|l| l.ground_f == fg && l.excited_f == fe)
            .unwrap()
    }

    #[test]
    fn isotope_lookup() {
        let data = AtomicData::default();
        assert_eq!(data.get_isotope("Rb85").unwrap().abundance, 0.7215);
        assert_eq!(data.get_isotope("Rb87").unwrap().abundance, 0.2785);
        assert!(matches!(
            data.get_isotope("Cs133"),
            Err(Error::UnknownIsotope(_))
        ));
    }

    #[test]
    fn abundances_sum_to_one() {
        let data = AtomicData::default();
        let total: f64 = data.isotopes().iter().map(|s| s.abundance).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strength_factors_match_reference_tables() {
        // Rb87 D1: S12 = 5/6, S11 = 1/6, S22 = S21 = 1/2.
        assert!((d1_strength_factor(3, 1, 1) - 1.0 / 6.0).abs() < 1e-12);
        assert!((d1_strength_factor(3, 1, 2) - 5.0 / 6.0).abs() < 1e-12);
        assert!((d1_strength_factor(3, 2, 1) - 0.5).abs() < 1e-12);
        assert!((d1_strength_factor(3, 2, 2) - 0.5).abs() < 1e-12);
        // Rb85 D1: S22 = 2/9, S23 = 7/9, S32 = 5/9, S33 = 4/9.
        assert!((d1_strength_factor(5, 2, 2) - 2.0 / 9.0).abs() < 1e-12);
        assert!((d1_strength_factor(5, 2, 3) - 7.0 / 9.0).abs() < 1e-12);
        assert!((d1_strength_factor(5, 3, 2) - 5.0 / 9.0).abs() < 1e-12);
        assert!((d1_strength_factor(5, 3, 3) - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn six_j_known_value() {
        // {1 1 1; 1 1 1} = 1/6
        assert!((wigner_6j([2; 6]) - 1.0 / 6.0).abs() < 1e-14);
        // violates triangle rule
        assert_eq!(wigner_6j([2, 2, 6, 2, 2, 2]), 0.0);
    }

    #[test]
    fn line_enumeration_matches_selection_rule() {
        let data = AtomicData::default();
        for iso in data.isotopes() {
            let oracle = iso
                .ground_f_levels
                .iter()
                .flat_map(|&g| iso.excited_f_levels.iter().map(move |&e| (g, e)))
                .filter(|&(g, e)| g.abs_diff(e) <= 1 && !(g == 0 && e == 0))
                .count();
            let lines = d1_transition_lines(iso);
            assert_eq!(lines.len(), oracle);
            assert_eq!(lines.len(), 4);
            let total: f64 = lines.iter().map(|l| l.relative_strength).sum();
            assert!((total - 1.0).abs() < 1e-9, "{}: {total}", iso.isotope);
        }
    }

    #[test]
    fn offsets_follow_splittings() {
        let data = AtomicData::default();
        for iso in data.isotopes() {
            let lines = d1_transition_lines(iso);
            let (g_lo, g_hi) = (iso.ground_f_levels[0], iso.ground_f_levels[1]);
            let (e_lo, e_hi) = (iso.excited_f_levels[0], iso.excited_f_levels[1]);
            for fe in [e_lo, e_hi] {
                let d = line(&lines, g_lo, fe).center_frequency_offset
                    - line(&lines, g_hi, fe).center_frequency_offset;
                assert!((d - iso.ground_hyperfine_splitting).abs() < 1e-12);
            }
            for fg in [g_lo, g_hi] {
                let d = line(&lines, fg, e_hi).center_frequency_offset
                    - line(&lines, fg, e_lo).center_frequency_offset;
                assert!((d - iso.excited_d1_hyperfine_splitting).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rb87_absolute_offsets() {
        // F=2 at +2.5630 GHz, F=1 at -4.2717 GHz; 5P1/2 F'=2 at +306.2 MHz,
        // F'=1 at -510.4 MHz.
        let data = AtomicData::default();
        let iso = data.isotope(Isotope::Rb87);
        let lines = d1_transition_lines(iso);
        let l = line(&lines, 2, 1);
        let expected = iso.isotope_shift - 0.510_41 - 2.563_006;
        assert!((l.center_frequency_offset - expected).abs() < 1e-4);
    }

    #[test]
    fn larmor_at_ten_microtesla() {
        let data = AtomicData::default();
        let f85 = data.isotope(Isotope::Rb85).gyromagnetic_ratio * 10.0;
        let f87 = data.isotope(Isotope::Rb87).gyromagnetic_ratio * 10.0;
        assert!((f85 - 46.7).abs() < 0.05, "{f85}");
        assert!((f87 - 70.0).abs() < 0.05, "{f87}");
        assert!((f85 - 47.0).abs() < 1.0 && (f87 - 70.0).abs() < 1.0);
        assert!((f87 / f85 - 1.499).abs() < 5e-4);
    }

    #[test]
    fn config_overrides_and_validation() {
        let cfg = Config::parse("rb87.gyromagnetic_ratio_khz_per_ut = 7.0\nn2.broadening_ghz_per_amg = 18").unwrap();
        let data = AtomicData::from_config(&cfg).unwrap();
        assert_eq!(data.isotope(Isotope::Rb87).gyromagnetic_ratio, 7.0);
        assert_eq!(data.buffer_gas("N2").unwrap().broadening_coefficient, 18.0);

        let bad = Config::parse("rb87.abundance = 0.5").unwrap();
        assert!(AtomicData::from_config(&bad).is_err());
        let bad = Config::parse("rb85.ground_splitting_ghz = -1").unwrap();
        assert!(AtomicData::from_config(&bad).is_err());
    }
}
