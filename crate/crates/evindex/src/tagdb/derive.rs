//! Filling a tag record from an event's physics summary.
//!
//! The mapping is by variable name. Headline quantities come straight
//! from the summary's structured fields; every other variable of a
//! covered group takes its deterministic filler value
//! ([`PhysicsSummary::aux_value`] keyed by the variable's schema index).
//! Presence follows the detector content of the event:
//!
//! * electron blocks (`ELEC_x1_*`, `ELEC_x2_*`) need one resp. two
//!   candidates from the matching algorithm; kinematics (`KIN_x_*`)
//!   need at least one,
//! * `VTX_*` needs a fitted vertex,
//! * `MU_N`/`MU1_*` need one muon, `MU2_*` two,
//! * `JETFn_ET1/ETA1/PHI1` need one jet, `JETFn_*2` two
//!   (`JETFn_N` is always present),
//! * charm variables need a charm candidate, `LPS_*` a leading-proton
//!   signal,
//! * everything else is always present.
//!
//! The five bitgroups are filled in declaration order from the summary's
//! trigger words; in particular the offline-selection group is the event
//! directory's flag words, bit for bit.

use crate::store::{EventRecord, RecordLocation};
use crate::summary::{ElectronCand, PhysicsSummary};

use super::record::TagRecord;
use super::schema::{TagSchema, VarKind};
use super::TagDbError;

/// Builds the tag record for one event record.
///
/// `location` is the event's address in the store (known to the caller
/// from the append or the directory entry that produced the event).
pub fn derive_tag(
    event: &EventRecord,
    location: RecordLocation,
    schema: &TagSchema,
) -> Result<TagRecord, TagDbError> {
    let summary = PhysicsSummary::decode(&event.payload)?;
    let mut rec = TagRecord::new(schema, event.run, event.event, location);

    let mut bitgroup_pos = 0usize;
    for (i, d) in schema.vars().iter().enumerate() {
        match d.kind {
            VarKind::BitGroup => {
                let words: &[u32] = match bitgroup_pos {
                    0 => &summary.flt,
                    1 => &summary.slt,
                    2 => &summary.tlt,
                    3 => &summary.offline_flags,
                    4 => &summary.misc,
                    _ => unreachable!("schemas have exactly five bitgroups"),
                };
                rec.set_bitgroup(schema, i, words)?;
                bitgroup_pos += 1;
            }
            VarKind::Int32 => {
                let v = match d.name.as_str() {
                    "RUN" => event.run as i32,
                    "EVENT" => event.event as i32,
                    _ => summary.aux_value(i as u32) as i32,
                };
                rec.set_int(schema, i, v)?;
            }
            VarKind::Float32 => {
                if let Some(v) = scalar_value(&summary, &d.name, i as u32) {
                    rec.set_float(schema, i, v)?;
                }
            }
        }
    }
    Ok(rec)
}

fn cand(list: &[ElectronCand], n: usize) -> Option<&ElectronCand> {
    list.get(n)
}

/// Value of one float variable, or `None` when it is missing for this
/// event.
fn scalar_value(s: &PhysicsSummary, name: &str, index: u32) -> Option<f32> {
    let aux = || s.aux_value(index);

    if let Some(rest) = name.strip_prefix("ELEC_") {
        let mut chars = rest.chars();
        let alg = chars.next()?;
        let which = chars.next()?.to_digit(10)? as usize;
        let suffix = rest.get(2..).unwrap_or("").trim_start_matches('_');
        let list = if alg == 'A' { &s.elec_a } else { &s.elec_b };
        let c = cand(list, which - 1)?;
        return Some(match suffix {
            "E" => c.energy,
            "ET" | "PT" => c.pt,
            "THETA" => c.theta,
            "PHI" => c.phi,
            "PROB" => c.prob,
            _ => aux(),
        });
    }

    if let Some(rest) = name.strip_prefix("KIN_") {
        let alg = rest.chars().next()?;
        let list = if alg == 'A' { &s.elec_a } else { &s.elec_b };
        let c = cand(list, 0)?;
        return Some(match rest.get(2..) {
            Some("E_SCAT") => c.energy,
            Some("THETA_SCAT") => c.theta,
            _ => aux(),
        });
    }

    if name.starts_with("VTX_") {
        let v = s.vertex.as_ref()?;
        return Some(match name {
            "VTX_X" => v.x,
            "VTX_Y" => v.y,
            "VTX_Z" => v.z,
            "VTX_CHI2" => v.chi2,
            _ => aux(),
        });
    }

    if name == "MU_N" || name == "MU_QUAL" || name.starts_with("MU1_") {
        let m = s.muons.first()?;
        return Some(match name {
            "MU_N" => s.muons.len() as f32,
            "MU1_E" => m.energy,
            "MU1_THETA" => m.theta,
            _ => aux(),
        });
    }
    if name.starts_with("MU2_") {
        let m = s.muons.get(1)?;
        return Some(match name {
            "MU2_E" => m.energy,
            "MU2_THETA" => m.theta,
            _ => aux(),
        });
    }

    if let Some(rest) = name.strip_prefix("JETF") {
        let finder = rest.chars().next()?.to_digit(10)?;
        let suffix = rest.get(1..).unwrap_or("").trim_start_matches('_');
        if suffix == "N" {
            return Some(s.jets.len() as f32);
        }
        let nth = if suffix.ends_with('1') { 0 } else { 1 };
        let jet = s.jets.get(nth)?;
        // Finder 1 reports the jets directly; the other finders stand in
        // with filler values.
        if finder == 1 {
            return Some(match suffix {
                "ET1" | "ET2" => jet.et,
                "ETA1" | "ETA2" => jet.eta,
                "PHI1" | "PHI2" => jet.phi,
                _ => aux(),
            });
        }
        return Some(aux());
    }

    if name.starts_with("DSTAR_")
        || name.starts_with("D0_")
        || name.starts_with("DS_")
        || name.starts_with("CHARM_")
    {
        let c = s.charm.as_ref()?;
        return Some(match name {
            "DSTAR_M" => c.mass,
            "DSTAR_PT" => c.pt,
            _ => aux(),
        });
    }

    if name.starts_with("LPS_") {
        if s.lps_xl <= 0.0 {
            return None;
        }
        return Some(match name {
            "LPS_XL" => s.lps_xl,
            "LPS_N" => 1.0,
            _ => aux(),
        });
    }

    // Always-present quantities.
    Some(match name {
        "E_TOTAL" => s.e_total,
        "ET_TOTAL" => s.et_total,
        "ET_MISS" => s.et_miss,
        "EMPZ" => s.empz,
        "NTRK_PRIM" => s.ntrk_prim as f32,
        "NTRK_SEC" => s.ntrk_sec as f32,
        "LUMI_E_GAMMA" => s.lumi_e_gamma,
        "LUMI_E_ELEC" => s.lumi_e_elec,
        "FNC_E" => s.fnc_energy,
        "BPC_E" => s.bpc_energy,
        "MU_SYS_E_SUM" => s.muons.iter().map(|m| m.energy).sum(),
        "MU_SYS_N_HIT" => s.muons.len() as f32 * 4.0,
        _ => aux(),
    })
}
