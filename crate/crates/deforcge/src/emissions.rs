//! GHG accounting over solved periods and the scale/composition
//! decomposition of emission changes.
//!
//! Emissions come from three driver families: AFOLU intensities per
//! unit of crop/livestock/forestry activity, carbon sequestration of
//! the non-productive forest stock, and non-AFOLU intensities per unit
//! of consumption of emitting products, attributed to the consumer
//! (activity, household, or government).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::equations::PeriodEquilibrium;
use crate::model::params::ModelParameters;
use crate::sam::{COMPLIANT_SUFFIX, NONCOMPLIANT_SUFFIX};

#[derive(Debug, Error)]
pub enum EmissionsError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed coefficient record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("coefficient references unknown account '{0}'")]
    MissingCoefficient(String),
    #[error("driver sets are inconsistent: {0}")]
    InconsistentDrivers(String),
}

/// Emission intensities, fixed over time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionCoefficients {
    /// MtCO₂e per unit of activity level, by activity account.
    pub afolu: BTreeMap<String, f64>,
    /// MtCO₂e per hectare of non-productive forest; ≤ 0 (a sink).
    pub sequestration: f64,
    /// Non-AFOLU intensity per unit consumption of a product:
    /// (commodity account, consumer account or None for every
    /// consumer, intensity ≥ 0).
    pub non_afolu: Vec<(String, Option<String>, f64)>,
}

impl EmissionCoefficients {
    /// Load from CSV `emitter_or_product,counterpart,intensity`. An
    /// empty counterpart marks an AFOLU activity intensity (or the
    /// forest sequestration rate for the reserved name `forest`); `*`
    /// applies a product intensity to every consumer.
    pub fn load(path: &Path) -> Result<EmissionCoefficients, EmissionsError> {
        let io_err = |source| EmissionsError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => EmissionsError::MalformedRecord {
                line: 0,
                reason: format!("{other:?}"),
            },
        })?;
        let mut coeffs = EmissionCoefficients {
            afolu: BTreeMap::new(),
            sequestration: 0.0,
            non_afolu: Vec::new(),
        };
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| EmissionsError::MalformedRecord {
                line,
                reason: e.to_string(),
            })?;
            if record.len() != 3 {
                return Err(EmissionsError::MalformedRecord {
                    line,
                    reason: format!("expected 3 fields, got {}", record.len()),
                });
            }
            let name = record[0].trim().to_string();
            let counterpart = record[1].trim().to_string();
            let intensity: f64 =
                record[2]
                    .trim()
                    .parse()
                    .map_err(|_| EmissionsError::MalformedRecord {
                        line,
                        reason: format!("bad intensity '{}'", &record[2]),
                    })?;
            if counterpart.is_empty() {
                if name == "forest" {
                    if intensity > 0.0 {
                        return Err(EmissionsError::MalformedRecord {
                            line,
                            reason: "sequestration intensity must be ≤ 0".to_string(),
                        });
                    }
                    coeffs.sequestration = intensity;
                } else {
                    coeffs.afolu.insert(name, intensity);
                }
            } else {
                if intensity < 0.0 {
                    return Err(EmissionsError::MalformedRecord {
                        line,
                        reason: "non-AFOLU intensity must be ≥ 0".to_string(),
                    });
                }
                let cp = if counterpart == "*" {
                    None
                } else {
                    Some(counterpart)
                };
                coeffs.non_afolu.push((name, cp, intensity));
            }
        }
        Ok(coeffs)
    }
}

/// One emission driver: a total quantity T split over emitters j with
/// shares σ_j and per-emitter intensities ε_j, so E_j = ε_j·T·σ_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionDriver {
    pub label: String,
    pub total: f64,
    /// Per emitter: (intensity, share of the total).
    pub parts: BTreeMap<String, (f64, f64)>,
}

/// Emissions per emitter, MtCO₂e, signed (sequestration negative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionsLedger {
    pub by_emitter: BTreeMap<String, f64>,
    pub total: f64,
}

/// Scale/composition split of an emitter's emission change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub scale: f64,
    pub composition: f64,
    pub total: f64,
}

fn class_stem(activity: &str) -> &str {
    activity
        .strip_suffix(COMPLIANT_SUFFIX)
        .or_else(|| activity.strip_suffix(NONCOMPLIANT_SUFFIX))
        .unwrap_or(activity)
}

/// Construct the emission drivers of one solved period. AFOLU drivers
/// aggregate compliant/non-compliant activity pairs into one class so
/// the composition effect captures shifts between them.
pub fn build_drivers(
    params: &ModelParameters,
    eq: &PeriodEquilibrium,
    forest: f64,
    coeffs: &EmissionCoefficients,
) -> Result<Vec<EmissionDriver>, EmissionsError> {
    let mut drivers = Vec::new();

    // AFOLU activity classes.
    let mut classes: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (name, &intensity) in &coeffs.afolu {
        let a = params
            .activity_index(name)
            .ok_or_else(|| EmissionsError::MissingCoefficient(name.clone()))?;
        classes
            .entry(class_stem(name).to_string())
            .or_default()
            .push((a, intensity));
    }
    for (stem, members) in classes {
        let total: f64 = members.iter().map(|&(a, _)| eq.unknowns.qa[a]).sum();
        let mut parts = BTreeMap::new();
        for (a, intensity) in members {
            let share = if total > 0.0 {
                eq.unknowns.qa[a] / total
            } else {
                0.0
            };
            parts.insert(params.activities[a].name.clone(), (intensity, share));
        }
        drivers.push(EmissionDriver {
            label: format!("afolu:{stem}"),
            total,
            parts,
        });
    }

    // Forest sequestration: a pure-scale driver.
    let mut forest_parts = BTreeMap::new();
    forest_parts.insert("forest".to_string(), (coeffs.sequestration, 1.0));
    drivers.push(EmissionDriver {
        label: "forest".to_string(),
        total: forest,
        parts: forest_parts,
    });

    // Non-AFOLU: consumption of emitting products by every consumer.
    for (product, counterpart, intensity) in &coeffs.non_afolu {
        let c = params
            .commodity_index(product)
            .ok_or_else(|| EmissionsError::MissingCoefficient(product.clone()))?;
        if let Some(cp) = counterpart {
            let known = params.activity_index(cp).is_some()
                || params.households.iter().any(|h| &h.name == cp)
                || cp == "gov";
            if !known {
                return Err(EmissionsError::MissingCoefficient(cp.clone()));
            }
        }
        let d = &eq.derived;
        let mut consumers: Vec<(String, f64)> = Vec::new();
        for (a, act) in params.activities.iter().enumerate() {
            consumers.push((act.name.clone(), d.intermediate_use[c][a]));
        }
        for (h, hh) in params.households.iter().enumerate() {
            consumers.push((hh.name.clone(), d.household_use[h][c]));
        }
        consumers.push(("gov".to_string(), d.government_use[c]));
        let total: f64 = consumers.iter().map(|&(_, q)| q).sum();
        let mut parts = BTreeMap::new();
        for (name, q) in consumers {
            let share = if total > 0.0 { q / total } else { 0.0 };
            let eps = match counterpart {
                None => *intensity,
                Some(cp) if *cp == name => *intensity,
                Some(_) => 0.0,
            };
            parts.insert(name, (eps, share));
        }
        drivers.push(EmissionDriver {
            label: format!("product:{product}"),
            total,
            parts,
        });
    }
    Ok(drivers)
}

/// Sum drivers into a per-emitter ledger.
pub fn ledger_from_drivers(drivers: &[EmissionDriver]) -> EmissionsLedger {
    let mut by_emitter: BTreeMap<String, f64> = BTreeMap::new();
    for d in drivers {
        for (emitter, &(eps, share)) in &d.parts {
            *by_emitter.entry(emitter.clone()).or_insert(0.0) += eps * d.total * share;
        }
    }
    let total = by_emitter.values().sum();
    EmissionsLedger { by_emitter, total }
}

/// Full GHG ledger of one solved period.
pub fn compute_emissions(
    params: &ModelParameters,
    eq: &PeriodEquilibrium,
    forest: f64,
    coeffs: &EmissionCoefficients,
) -> Result<EmissionsLedger, EmissionsError> {
    Ok(ledger_from_drivers(&build_drivers(params, eq, forest, coeffs)?))
}

/// Exact two-term decomposition of per-emitter emission changes:
/// `scale_j = Σ_d ε_j·σ⁰_j·ΔT_d` and `composition_j = Σ_d ε_j·T¹_d·Δσ_j`,
/// so scale + composition equals the total change identically.
pub fn decompose_emissions(
    base: &[EmissionDriver],
    scen: &[EmissionDriver],
) -> Result<BTreeMap<String, Decomposition>, EmissionsError> {
    if base.len() != scen.len() {
        return Err(EmissionsError::InconsistentDrivers(format!(
            "driver counts differ: {} vs {}",
            base.len(),
            scen.len()
        )));
    }
    let mut out: BTreeMap<String, Decomposition> = BTreeMap::new();
    for (b, s) in base.iter().zip(scen) {
        if b.label != s.label || b.parts.len() != s.parts.len() {
            return Err(EmissionsError::InconsistentDrivers(format!(
                "driver '{}' does not match '{}'",
                b.label, s.label
            )));
        }
        for ((emitter, &(eps_b, share_b)), (emitter_s, &(eps_s, share_s))) in
            b.parts.iter().zip(&s.parts)
        {
            if emitter != emitter_s || eps_b != eps_s {
                return Err(EmissionsError::InconsistentDrivers(format!(
                    "driver '{}': emitter/intensity mismatch at '{}'",
                    b.label, emitter
                )));
            }
            let scale = eps_b * share_b * (s.total - b.total);
            let composition = eps_b * s.total * (share_s - share_b);
            let entry = out.entry(emitter.clone()).or_insert(Decomposition {
                scale: 0.0,
                composition: 0.0,
                total: 0.0,
            });
            entry.scale += scale;
            entry.composition += composition;
            entry.total += eps_b * (s.total * share_s - b.total * share_b);
        }
    }
    Ok(out)
}

/// Average percent deviation of emissions per emitter and in total over
/// paired ledgers (one per period of the comparison window).
pub fn emissions_deviation(
    base: &[EmissionsLedger],
    scen: &[EmissionsLedger],
) -> Result<(BTreeMap<String, f64>, f64), EmissionsError> {
    if base.len() != scen.len() || base.is_empty() {
        return Err(EmissionsError::InconsistentDrivers(format!(
            "ledger counts differ or empty: {} vs {}",
            base.len(),
            scen.len()
        )));
    }
    let n = base.len() as f64;
    let mut per_emitter: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (b, s) in base.iter().zip(scen) {
        for (emitter, &eb) in &b.by_emitter {
            let es = s.by_emitter.get(emitter).copied().ok_or_else(|| {
                EmissionsError::InconsistentDrivers(format!("emitter '{emitter}' missing"))
            })?;
            if eb != 0.0 {
                *per_emitter.entry(emitter.clone()).or_insert(0.0) +=
                    100.0 * (es - eb) / eb / n;
            }
        }
        total += 100.0 * (s.total - b.total) / b.total / n;
    }
    Ok((per_emitter, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn driver(label: &str, total: f64, parts: &[(&str, f64, f64)]) -> EmissionDriver {
        EmissionDriver {
            label: label.to_string(),
            total,
            parts: parts
                .iter()
                .map(|&(n, e, s)| (n.to_string(), (e, s)))
                .collect(),
        }
    }

    #[test]
    fn worked_decomposition_example() {
        // T 100→90, shares (0.6,0.4)→(0.5,0.5), ε = 0.01.
        let base = [driver("d", 100.0, &[("e1", 0.01, 0.6), ("e2", 0.01, 0.4)])];
        let scen = [driver("d", 90.0, &[("e1", 0.01, 0.5), ("e2", 0.01, 0.5)])];
        let dec = decompose_emissions(&base, &scen).unwrap();
        let e1 = dec["e1"];
        assert_relative_eq!(e1.scale, -0.06, epsilon = 1e-15);
        assert_relative_eq!(e1.composition, -0.09, epsilon = 1e-15);
        assert_relative_eq!(e1.total, -0.15, epsilon = 1e-15);
    }

    #[test]
    fn no_share_change_is_pure_scale() {
        let base = [driver("d", 100.0, &[("e1", 0.02, 0.7), ("e2", 0.02, 0.3)])];
        let scen = [driver("d", 80.0, &[("e1", 0.02, 0.7), ("e2", 0.02, 0.3)])];
        let dec = decompose_emissions(&base, &scen).unwrap();
        assert_eq!(dec["e1"].composition, 0.0);
        assert_eq!(dec["e2"].composition, 0.0);
    }

    #[test]
    fn no_total_change_is_pure_composition() {
        let base = [driver("d", 100.0, &[("e1", 0.02, 0.7), ("e2", 0.02, 0.3)])];
        let scen = [driver("d", 100.0, &[("e1", 0.02, 0.5), ("e2", 0.02, 0.5)])];
        let dec = decompose_emissions(&base, &scen).unwrap();
        assert_eq!(dec["e1"].scale, 0.0);
        assert_eq!(dec["e2"].scale, 0.0);
    }

    #[test]
    fn decomposition_exact_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(20240817);
        for _ in 0..1000 {
            let eps: Vec<f64> = (0..3).map(|_| rng.gen_range(0.001..0.1)).collect();
            let mk = |rng: &mut ChaCha8Rng, eps: &[f64]| {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                driver(
                    "d",
                    rng.gen_range(10.0..500.0),
                    &[
                        ("e1", eps[0], raw[0] / sum),
                        ("e2", eps[1], raw[1] / sum),
                        ("e3", eps[2], raw[2] / sum),
                    ],
                )
            };
            let base = [mk(&mut rng, &eps)];
            let scen = [mk(&mut rng, &eps)];
            let dec = decompose_emissions(&base, &scen).unwrap();
            for (emitter, d) in &dec {
                let (eb, sb) = base[0].parts[emitter];
                let (_, ss) = scen[0].parts[emitter];
                let delta = eb * (scen[0].total * ss - base[0].total * sb);
                assert_relative_eq!(d.scale + d.composition, delta, max_relative = 1e-12);
                assert_relative_eq!(d.total, delta, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn ledger_sums_drivers() {
        let drivers = [
            driver("a", 100.0, &[("x", 0.01, 1.0)]),
            driver("forest", 1000.0, &[("forest", -0.001, 1.0)]),
        ];
        let ledger = ledger_from_drivers(&drivers);
        assert_relative_eq!(ledger.by_emitter["x"], 1.0, epsilon = 1e-15);
        assert_relative_eq!(ledger.by_emitter["forest"], -1.0, epsilon = 1e-15);
        assert_relative_eq!(ledger.total, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn less_forest_means_more_net_emissions() {
        // Forest stock −10 ha at −0.001/ha raises the total by 0.01.
        let before = ledger_from_drivers(&[driver("forest", 1000.0, &[("forest", -0.001, 1.0)])]);
        let after = ledger_from_drivers(&[driver("forest", 990.0, &[("forest", -0.001, 1.0)])]);
        assert_relative_eq!(after.total - before.total, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn deviation_hand_average() {
        // Two periods, (10, 10) vs (9.9, 9.8) → (−1% − 2%)/2 = −1.5%.
        let mk = |v: f64| EmissionsLedger {
            by_emitter: [("e".to_string(), v)].into(),
            total: v,
        };
        let (per, total) =
            emissions_deviation(&[mk(10.0), mk(10.0)], &[mk(9.9), mk(9.8)]).unwrap();
        assert_relative_eq!(total, -1.5, epsilon = 1e-12);
        assert_relative_eq!(per["e"], -1.5, epsilon = 1e-12);
    }

    #[test]
    fn identical_trajectories_deviate_zero() {
        let mk = |v: f64| EmissionsLedger {
            by_emitter: [("e".to_string(), v)].into(),
            total: v,
        };
        let (per, total) = emissions_deviation(&[mk(5.0)], &[mk(5.0)]).unwrap();
        assert_eq!(total, 0.0);
        assert_eq!(per["e"], 0.0);
    }

    #[test]
    fn coefficients_roundtrip_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        std::fs::write(
            &path,
            "emitter_or_product,counterpart,intensity\n\
             a-crop-c,,0.08\nforest,,-0.004\nc-manu,*,0.06\nc-serv,hhd-d1,0.01\n",
        )
        .unwrap();
        let c = EmissionCoefficients::load(&path).unwrap();
        assert_eq!(c.afolu["a-crop-c"], 0.08);
        assert_eq!(c.sequestration, -0.004);
        assert_eq!(
            c.non_afolu,
            vec![
                ("c-manu".to_string(), None, 0.06),
                ("c-serv".to_string(), Some("hhd-d1".to_string()), 0.01),
            ]
        );
    }

    #[test]
    fn positive_sequestration_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        std::fs::write(
            &path,
            "emitter_or_product,counterpart,intensity\nforest,,0.004\n",
        )
        .unwrap();
        assert!(matches!(
            EmissionCoefficients::load(&path),
            Err(EmissionsError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn mismatched_drivers_rejected() {
        let base = [driver("a", 1.0, &[("x", 0.1, 1.0)])];
        let scen = [driver("b", 1.0, &[("x", 0.1, 1.0)])];
        assert!(matches!(
            decompose_emissions(&base, &scen),
            Err(EmissionsError::InconsistentDrivers(_))
        ));
    }
}
