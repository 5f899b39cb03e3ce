//! Principal refractive indices of a uniaxial crystal from named coefficient sets.
//!
//! Coefficient sets are plain-text `key = value` files, one coefficient per line,
//! `#` starting a comment. The supported form is
//! `n² = A + B / (λ² − C) − D·λ²` with λ in micrometres, one set of terms per
//! principal axis (`o.*` and `e.*`).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EIMERL_1987: &str = include_str!("../../data/bbo_eimerl_1987.disp");
const KATO_1986: &str = include_str!("../../data/bbo_kato_1986.disp");

/// Names of the coefficient sets bundled with the crate.
pub const BUILTIN_SETS: [&str; 2] = ["bbo-eimerl-1987", "bbo-kato-1986"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SellmeierTerms {
    /// n² at a wavelength given in micrometres.
    #[inline]
    pub fn index_squared(&self, wavelength_um: f64) -> f64 {
        let l2 = wavelength_um * wavelength_um;
        self.a + self.b / (l2 - self.c) - self.d * l2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSet {
    pub name: String,
    /// Lower end of the supported range, metres.
    pub min_wavelength: f64,
    /// Upper end of the supported range, metres.
    pub max_wavelength: f64,
    pub ordinary: SellmeierTerms,
    pub extraordinary: SellmeierTerms,
}

impl Default for DispersionSet {
    fn default() -> Self {
        Self::bbo_eimerl()
    }
}

impl DispersionSet {
    pub fn bbo_eimerl() -> Self {
        Self::parse(EIMERL_1987).expect("bundled coefficient file is valid")
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "bbo-eimerl-1987" => Self::parse(EIMERL_1987),
            "bbo-kato-1986" => Self::parse(KATO_1986),
            other => Err(Error::Dispersion(format!(
                "unknown built-in set '{other}' (known: {})",
                BUILTIN_SETS.join(", ")
            ))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Resolve either a built-in name or a path to a coefficient file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUILTIN_SETS.contains(&name_or_path) {
            Self::builtin(name_or_path)
        } else {
            Self::load(name_or_path)
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values: HashMap<&str, &str> = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Dispersion(format!("line {}: expected 'key = value'", lineno + 1)))?;
            if values.insert(key.trim(), value.trim()).is_some() {
                return Err(Error::Dispersion(format!(
                    "line {}: duplicate key '{}'",
                    lineno + 1,
                    key.trim()
                )));
            }
        }
        let number = |key: &str| -> Result<f64> {
            let raw = values
                .get(key)
                .ok_or_else(|| Error::Dispersion(format!("missing coefficient '{key}'")))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Dispersion(format!("'{key}' is not a number: {raw}")))?;
            if !v.is_finite() {
                return Err(Error::Dispersion(format!("'{key}' is not finite")));
            }
            Ok(v)
        };
        let terms = |axis: &str| -> Result<SellmeierTerms> {
            Ok(SellmeierTerms {
                a: number(&format!("{axis}.A"))?,
                b: number(&format!("{axis}.B"))?,
                c: number(&format!("{axis}.C"))?,
                d: number(&format!("{axis}.D"))?,
            })
        };
        let name = values.get("name").copied().unwrap_or("unnamed").to_string();
        let min_um = number("min_wavelength_um")?;
        let max_um = number("max_wavelength_um")?;
        if !(min_um > 0.0 && max_um > min_um) {
            return Err(Error::Dispersion("invalid wavelength range".into()));
        }
        let set = Self {
            name,
            min_wavelength: min_um * 1e-6,
            max_wavelength: max_um * 1e-6,
            ordinary: terms("o")?,
            extraordinary: terms("e")?,
        };
        set.validate()?;
        Ok(set)
    }

    /// Both principal indices must be finite and above 1 across the declared range.
    pub fn validate(&self) -> Result<()> {
        let n = 64;
        for i in 0..=n {
            let l = self.min_wavelength + (self.max_wavelength - self.min_wavelength) * i as f64 / n as f64;
            let (no, ne) = self.principal_indices(l)?;
            if !(no.is_finite() && ne.is_finite() && no > 1.0 && ne > 1.0) {
                return Err(Error::Dispersion(format!(
                    "set '{}' gives unphysical indices ({no}, {ne}) at {:.1} nm",
                    self.name,
                    l * 1e9
                )));
            }
        }
        Ok(())
    }

    /// (n_o, n_e) at a vacuum wavelength in metres.
    pub fn principal_indices(&self, wavelength: f64) -> Result<(f64, f64)> {
        // Range comparison with a relative slack of 1e-9 so that frequencies
        // derived from an in-range wavelength do not trip the guard by rounding.
        let slack = 1e-9 * self.max_wavelength;
        if !(wavelength >= self.min_wavelength - slack && wavelength <= self.max_wavelength + slack) {
            return Err(Error::WavelengthOutOfRange {
                wavelength_nm: wavelength * 1e9,
                min_nm: self.min_wavelength * 1e9,
                max_nm: self.max_wavelength * 1e9,
            });
        }
        let um = wavelength * 1e6;
        Ok((
            self.ordinary.index_squared(um).sqrt(),
            self.extraordinary.index_squared(um).sqrt(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_sets_parse() {
        for name in BUILTIN_SETS {
            let set = DispersionSet::builtin(name).unwrap();
            assert_eq!(set.name, name);
        }
    }

    #[test]
    fn missing_coefficient_is_reported() {
        let text = "min_wavelength_um = 0.4\nmax_wavelength_um = 1.0\no.A = 2.7\n";
        let err = DispersionSet::parse(text).unwrap_err();
        assert!(err.to_string().contains("o.B"), "{err}");
    }

    #[test]
    fn out_of_range_wavelength_is_a_domain_error() {
        let set = DispersionSet::bbo_eimerl();
        assert!(matches!(
            set.principal_indices(200e-9),
            Err(Error::WavelengthOutOfRange { .. })
        ));
        assert!(set.principal_indices(1500e-9).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header\n\nname = x # trailing\nmin_wavelength_um = 0.4\nmax_wavelength_um = 1.0\n\
                    o.A = 2.7405\no.B = 0.0184\no.C = 0.0179\no.D = 0.0155\n\
                    e.A = 2.3730\ne.B = 0.0128\ne.C = 0.0156\ne.D = 0.0044\n";
        let set = DispersionSet::parse(text).unwrap();
        assert_eq!(set.name, "x");
        assert_eq!(set.ordinary, DispersionSet::bbo_eimerl().ordinary);
    }
}
