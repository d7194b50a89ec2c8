//! Synthetic per-event physics summary.
//!
//! Events in a generated store carry one of these at the front of their
//! payload (the rest of the payload is padding up to the configured event
//! size). The summary holds enough per-event quantities to fill every
//! group of the default tag schema: global calorimeter sums, electron
//! candidates for two algorithms, vertex and tracking counts, jets, muons,
//! a charm candidate, forward-detector and luminosity stubs, and the five
//! trigger/selection bit groups.
//!
//! Quantities that the structured fields do not cover are derived on
//! demand from `aux_seed` via [`PhysicsSummary::aux_value`], so the
//! payload stays compact while every schema variable still has a
//! deterministic per-event value.
//!
//! Encoding is a fixed little-endian layout behind a 4-byte magic, so a
//! payload can be checked cheaply for whether it contains a summary.

use thiserror::Error;

/// Magic prefix of an encoded summary.
pub const SUMMARY_MAGIC: [u8; 4] = *b"PSUM";
const SUMMARY_VERSION: u8 = 1;

/// Caps on variable-length candidate lists.
pub const MAX_ELECTRONS: usize = 2;
pub const MAX_JETS: usize = 4;
pub const MAX_MUONS: usize = 2;

#[derive(Debug, Error)]
pub enum SummaryDecodeError {
    #[error("payload does not contain a physics summary (bad magic)")]
    BadMagic,
    #[error("unsupported summary version {0}")]
    BadVersion(u8),
    #[error("summary truncated")]
    Truncated,
    #[error("candidate count {got} exceeds cap {cap}")]
    BadCount { got: u8, cap: usize },
}

/// A scattered-electron candidate: energy and angles in GeV / rad, with
/// the identification probability and transverse momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectronCand {
    pub energy: f32,
    pub theta: f32,
    pub phi: f32,
    pub prob: f32,
    pub pt: f32,
}

/// Fitted primary vertex position (cm) and fit quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexFit {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub chi2: f32,
}

/// One reconstructed jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetCand {
    pub et: f32,
    pub eta: f32,
    pub phi: f32,
}

/// One identified muon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuonCand {
    pub energy: f32,
    pub theta: f32,
}

/// One charmed-meson candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharmCand {
    pub mass: f32,
    pub pt: f32,
}

/// Per-event synthetic quantities, plus the packed trigger and selection
/// bit groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsSummary {
    /// Total calorimeter energy (GeV).
    pub e_total: f32,
    /// Total transverse energy (GeV); never negative.
    pub et_total: f32,
    /// Missing transverse energy (GeV); never negative.
    pub et_miss: f32,
    /// E - p_z sum (GeV).
    pub empz: f32,
    /// Electron candidates, algorithm A (best first).
    pub elec_a: Vec<ElectronCand>,
    /// Electron candidates, algorithm B.
    pub elec_b: Vec<ElectronCand>,
    pub vertex: Option<VertexFit>,
    pub ntrk_prim: u16,
    pub ntrk_sec: u16,
    pub jets: Vec<JetCand>,
    pub muons: Vec<MuonCand>,
    pub charm: Option<CharmCand>,
    pub lumi_e_gamma: f32,
    pub lumi_e_elec: f32,
    pub fnc_energy: f32,
    pub bpc_energy: f32,
    pub lps_xl: f32,
    /// Seed for the derived filler quantities, see [`Self::aux_value`].
    pub aux_seed: u64,
    /// Offline event-selection flags (128 bits), identical to the event
    /// directory flag words for this event.
    pub offline_flags: [u32; 4],
    /// First level trigger flags (64 bits).
    pub flt: [u32; 2],
    /// Second level trigger flags (192 bits).
    pub slt: [u32; 6],
    /// Third level trigger flags (352 bits).
    pub tlt: [u32; 11],
    /// Miscellaneous flags (64 bits).
    pub misc: [u32; 2],
}

impl PhysicsSummary {
    /// Checks the numeric invariants: non-negative energies and candidate
    /// lists within their caps.
    pub fn validate(&self) -> Result<(), String> {
        if self.et_total < 0.0 {
            return Err(format!("et_total must be >= 0, got {}", self.et_total));
        }
        if self.et_miss < 0.0 {
            return Err(format!("et_miss must be >= 0, got {}", self.et_miss));
        }
        if self.elec_a.len() > MAX_ELECTRONS || self.elec_b.len() > MAX_ELECTRONS {
            return Err("too many electron candidates".into());
        }
        if self.jets.len() > MAX_JETS {
            return Err("too many jets".into());
        }
        if self.muons.len() > MAX_MUONS {
            return Err("too many muons".into());
        }
        Ok(())
    }

    /// Deterministic filler quantity `k` for this event, uniform in
    /// [0, 100). Used for schema variables the structured fields do not
    /// cover.
    pub fn aux_value(&self, k: u32) -> f32 {
        // splitmix64 over the seed and slot index.
        let mut z = self
            .aux_seed
            .wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 40) as f32 / (1u64 << 24) as f32 * 100.0
    }

    /// Serializes the summary to its fixed little-endian layout.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(256);
        out.extend_from_slice(&SUMMARY_MAGIC);
        out.push(SUMMARY_VERSION);
        for v in [self.e_total, self.et_total, self.et_miss, self.empz] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        encode_electrons(&mut out, &self.elec_a);
        encode_electrons(&mut out, &self.elec_b);
        match self.vertex {
            Some(v) => {
                out.push(1);
                for f in [v.x, v.y, v.z, v.chi2] {
                    out.extend_from_slice(&f.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        out.extend_from_slice(&self.ntrk_prim.to_le_bytes());
        out.extend_from_slice(&self.ntrk_sec.to_le_bytes());
        out.push(self.jets.len() as u8);
        for j in &self.jets {
            for f in [j.et, j.eta, j.phi] {
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
        out.push(self.muons.len() as u8);
        for m in &self.muons {
            for f in [m.energy, m.theta] {
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
        match self.charm {
            Some(c) => {
                out.push(1);
                out.extend_from_slice(&c.mass.to_le_bytes());
                out.extend_from_slice(&c.pt.to_le_bytes());
            }
            None => out.push(0),
        }
        for v in [
            self.lumi_e_gamma,
            self.lumi_e_elec,
            self.fnc_energy,
            self.bpc_energy,
            self.lps_xl,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.aux_seed.to_le_bytes());
        for w in self.offline_flags {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for w in self.flt {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for w in self.slt {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for w in self.tlt {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for w in self.misc {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Decodes a summary from the front of `bytes`; trailing padding is
    /// ignored.
    pub fn decode(bytes: &[u8]) -> Result<PhysicsSummary, SummaryDecodeError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != SUMMARY_MAGIC {
            return Err(SummaryDecodeError::BadMagic);
        }
        let version = cur.u8()?;
        if version != SUMMARY_VERSION {
            return Err(SummaryDecodeError::BadVersion(version));
        }
        let e_total = cur.f32()?;
        let et_total = cur.f32()?;
        let et_miss = cur.f32()?;
        let empz = cur.f32()?;
        let elec_a = decode_electrons(&mut cur)?;
        let elec_b = decode_electrons(&mut cur)?;
        let vertex = if cur.u8()? != 0 {
            Some(VertexFit {
                x: cur.f32()?,
                y: cur.f32()?,
                z: cur.f32()?,
                chi2: cur.f32()?,
            })
        } else {
            None
        };
        let ntrk_prim = cur.u16()?;
        let ntrk_sec = cur.u16()?;
        let njets = cur.u8()?;
        if njets as usize > MAX_JETS {
            return Err(SummaryDecodeError::BadCount {
                got: njets,
                cap: MAX_JETS,
            });
        }
        let mut jets = Vec::with_capacity(njets as usize);
        for _ in 0..njets {
            jets.push(JetCand {
                et: cur.f32()?,
                eta: cur.f32()?,
                phi: cur.f32()?,
            });
        }
        let nmuons = cur.u8()?;
        if nmuons as usize > MAX_MUONS {
            return Err(SummaryDecodeError::BadCount {
                got: nmuons,
                cap: MAX_MUONS,
            });
        }
        let mut muons = Vec::with_capacity(nmuons as usize);
        for _ in 0..nmuons {
            muons.push(MuonCand {
                energy: cur.f32()?,
                theta: cur.f32()?,
            });
        }
        let charm = if cur.u8()? != 0 {
            Some(CharmCand {
                mass: cur.f32()?,
                pt: cur.f32()?,
            })
        } else {
            None
        };
        let lumi_e_gamma = cur.f32()?;
        let lumi_e_elec = cur.f32()?;
        let fnc_energy = cur.f32()?;
        let bpc_energy = cur.f32()?;
        let lps_xl = cur.f32()?;
        let aux_seed = cur.u64()?;
        let mut offline_flags = [0u32; 4];
        for w in &mut offline_flags {
            *w = cur.u32()?;
        }
        let mut flt = [0u32; 2];
        for w in &mut flt {
            *w = cur.u32()?;
        }
        let mut slt = [0u32; 6];
        for w in &mut slt {
            *w = cur.u32()?;
        }
        let mut tlt = [0u32; 11];
        for w in &mut tlt {
            *w = cur.u32()?;
        }
        let mut misc = [0u32; 2];
        for w in &mut misc {
            *w = cur.u32()?;
        }
        Ok(PhysicsSummary {
            e_total,
            et_total,
            et_miss,
            empz,
            elec_a,
            elec_b,
            vertex,
            ntrk_prim,
            ntrk_sec,
            jets,
            muons,
            charm,
            lumi_e_gamma,
            lumi_e_elec,
            fnc_energy,
            bpc_energy,
            lps_xl,
            aux_seed,
            offline_flags,
            flt,
            slt,
            tlt,
            misc,
        })
    }
}

fn encode_electrons(out: &mut Vec<u8>, cands: &[ElectronCand]) {
    out.push(cands.len() as u8);
    for c in cands {
        for f in [c.energy, c.theta, c.phi, c.prob, c.pt] {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
}

fn decode_electrons(cur: &mut Cursor<'_>) -> Result<Vec<ElectronCand>, SummaryDecodeError> {
    let n = cur.u8()?;
    if n as usize > MAX_ELECTRONS {
        return Err(SummaryDecodeError::BadCount {
            got: n,
            cap: MAX_ELECTRONS,
        });
    }
    let mut cands = Vec::with_capacity(n as usize);
    for _ in 0..n {
        cands.push(ElectronCand {
            energy: cur.f32()?,
            theta: cur.f32()?,
            phi: cur.f32()?,
            prob: cur.f32()?,
            pt: cur.f32()?,
        });
    }
    Ok(cands)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SummaryDecodeError> {
        if self.pos + n > self.bytes.len() {
            return Err(SummaryDecodeError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SummaryDecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, SummaryDecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, SummaryDecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SummaryDecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, SummaryDecodeError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> PhysicsSummary {
        PhysicsSummary {
            e_total: 120.5,
            et_total: 45.0,
            et_miss: 3.25,
            empz: 54.0,
            elec_a: vec![ElectronCand {
                energy: 27.5,
                theta: 2.9,
                phi: 0.4,
                prob: 0.93,
                pt: 11.0,
            }],
            elec_b: vec![],
            vertex: Some(VertexFit {
                x: 0.1,
                y: -0.05,
                z: -3.2,
                chi2: 1.4,
            }),
            ntrk_prim: 12,
            ntrk_sec: 3,
            jets: vec![
                JetCand {
                    et: 22.0,
                    eta: 1.1,
                    phi: 2.0,
                },
                JetCand {
                    et: 18.5,
                    eta: -0.7,
                    phi: 5.1,
                },
            ],
            muons: vec![],
            charm: None,
            lumi_e_gamma: 4.2,
            lumi_e_elec: 9.1,
            fnc_energy: 0.0,
            bpc_energy: 1.5,
            lps_xl: 0.88,
            aux_seed: 0xDEAD_BEEF_1234_5678,
            offline_flags: [0x0000_0468, 0, 0, 0],
            flt: [0xF, 0],
            slt: [1, 2, 3, 4, 5, 6],
            tlt: [0; 11],
            misc: [0x8000_0000, 1],
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let s = sample();
        let bytes = s.encode();
        let back = PhysicsSummary::decode(&bytes).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn decode_ignores_trailing_padding() {
        let s = sample();
        let mut bytes = s.encode();
        bytes.extend_from_slice(&[0u8; 500]);
        assert_eq!(PhysicsSummary::decode(&bytes).unwrap(), s);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(
            PhysicsSummary::decode(b"not a summary"),
            Err(SummaryDecodeError::BadMagic)
        ));
        let s = sample();
        let bytes = s.encode();
        assert!(matches!(
            PhysicsSummary::decode(&bytes[..bytes.len() - 4]),
            Err(SummaryDecodeError::Truncated)
        ));
    }

    #[test]
    fn aux_values_are_deterministic_and_bounded() {
        let s = sample();
        for k in 0..300 {
            let v = s.aux_value(k);
            assert!((0.0..100.0).contains(&v), "aux {k} out of range: {v}");
            assert_eq!(v, s.aux_value(k));
        }
        // Different slots give different values essentially always.
        assert_ne!(s.aux_value(0), s.aux_value(1));
    }

    #[test]
    fn validate_flags_negative_energies() {
        let mut s = sample();
        s.et_miss = -1.0;
        assert!(s.validate().is_err());
    }
}
