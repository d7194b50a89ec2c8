//! Tag schema: the ordered list of per-event variables and the fixed
//! record layout it determines.

use std::collections::HashMap;

use super::TagDbError;

/// The five bitgroup widths every schema must carry, in order: first,
/// second and third level trigger flags, offline selection flags and
/// miscellaneous flags.
pub const BITGROUP_WIDTHS: [u32; 5] = [64, 192, 352, 128, 64];

/// Which of the five bitgroups mirrors the event-directory flags.
pub const OFFLINE_BITGROUP_POS: usize = 3;

/// Byte length of the fixed record header (run, event, store file index,
/// store offset).
pub const RECORD_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Float32,
    Int32,
    BitGroup,
}

impl VarKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VarKind::Float32 => "float32",
            VarKind::Int32 => "int32",
            VarKind::BitGroup => "bitgroup",
        }
    }

    pub fn parse(s: &str) -> Option<VarKind> {
        match s {
            "float32" => Some(VarKind::Float32),
            "int32" => Some(VarKind::Int32),
            "bitgroup" => Some(VarKind::BitGroup),
            _ => None,
        }
    }
}

/// One schema variable: a named scalar (possibly multi-slot) or a packed
/// bit group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDescriptor {
    pub name: String,
    pub kind: VarKind,
    /// Scalar slots for float/int variables, bits for bitgroups.
    pub width: u32,
    /// Group label the variable belongs to.
    pub group: String,
}

impl VarDescriptor {
    pub fn float(name: &str, group: &str) -> Self {
        VarDescriptor {
            name: name.into(),
            kind: VarKind::Float32,
            width: 1,
            group: group.into(),
        }
    }

    pub fn int(name: &str, group: &str) -> Self {
        VarDescriptor {
            name: name.into(),
            kind: VarKind::Int32,
            width: 1,
            group: group.into(),
        }
    }

    pub fn bitgroup(name: &str, bits: u32, group: &str) -> Self {
        VarDescriptor {
            name: name.into(),
            kind: VarKind::BitGroup,
            width: bits,
            group: group.into(),
        }
    }
}

/// Layout handle for one variable.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VarSlot {
    /// For scalars: byte offset of slot 0 inside the record body.
    /// For bitgroups: bit offset inside the packed bit region (itself
    /// located after all scalar slots).
    pub start: u32,
}

/// An immutable schema with its computed fixed layout.
///
/// The record body layout is: all scalar slots (4 bytes each) in
/// declaration order, then all bitgroups packed into 32-bit words, then
/// one presence bit per variable. The full on-disk record adds a
/// [`RECORD_HEADER_LEN`]-byte header in front.
#[derive(Debug, Clone)]
pub struct TagSchema {
    vars: Vec<VarDescriptor>,
    slots: Vec<VarSlot>,
    by_name: HashMap<String, usize>,
    scalar_slots: u32,
    bit_words: u32,
    presence_len: u32,
    offline_group: usize,
    hash: u64,
}

impl PartialEq for TagSchema {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars
    }
}

fn valid_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.')
}

impl TagSchema {
    /// Builds a schema from descriptors, checking the invariants:
    /// unique names, bitgroups of exactly the five required widths in
    /// order, and more than 200 scalar slots in total.
    pub fn define(descriptors: Vec<VarDescriptor>) -> Result<TagSchema, TagDbError> {
        let mut by_name = HashMap::with_capacity(descriptors.len());
        for (i, d) in descriptors.iter().enumerate() {
            if !valid_token(&d.name) || !valid_token(&d.group) {
                return Err(TagDbError::BadDescriptor {
                    name: d.name.clone(),
                    msg: "names and groups must be non-empty [A-Za-z0-9_.]".into(),
                });
            }
            if d.width == 0 {
                return Err(TagDbError::BadDescriptor {
                    name: d.name.clone(),
                    msg: "width must be at least 1".into(),
                });
            }
            if by_name.insert(d.name.clone(), i).is_some() {
                return Err(TagDbError::DuplicateVariable(d.name.clone()));
            }
        }

        let bit_widths: Vec<u32> = descriptors
            .iter()
            .filter(|d| d.kind == VarKind::BitGroup)
            .map(|d| d.width)
            .collect();
        if bit_widths != BITGROUP_WIDTHS {
            return Err(TagDbError::BitgroupSizes {
                expected: BITGROUP_WIDTHS.to_vec(),
                got: bit_widths,
            });
        }

        let mut slots = Vec::with_capacity(descriptors.len());
        let mut scalar_slots = 0u32;
        let mut bit_offset = 0u32;
        let mut offline_group = 0usize;
        let mut bitgroups_seen = 0usize;
        for (i, d) in descriptors.iter().enumerate() {
            match d.kind {
                VarKind::Float32 | VarKind::Int32 => {
                    slots.push(VarSlot {
                        start: scalar_slots * 4,
                    });
                    scalar_slots += d.width;
                }
                VarKind::BitGroup => {
                    slots.push(VarSlot { start: bit_offset });
                    if bitgroups_seen == OFFLINE_BITGROUP_POS {
                        offline_group = i;
                    }
                    bitgroups_seen += 1;
                    // Each group starts on a fresh 32-bit word.
                    bit_offset += d.width.div_ceil(32) * 32;
                }
            }
        }
        if scalar_slots <= 200 {
            return Err(TagDbError::TooFewScalars(scalar_slots));
        }

        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for d in &descriptors {
            for part in [d.name.as_str(), d.kind.as_str(), d.group.as_str()] {
                hash = fnv1a(hash, part.as_bytes());
                hash = fnv1a(hash, &[0]);
            }
            hash = fnv1a(hash, &d.width.to_le_bytes());
        }

        let presence_len = (descriptors.len() as u32).div_ceil(8);
        Ok(TagSchema {
            slots,
            by_name,
            scalar_slots,
            bit_words: bit_offset / 32,
            presence_len,
            offline_group,
            hash,
            vars: descriptors,
        })
    }

    pub fn vars(&self) -> &[VarDescriptor] {
        &self.vars
    }

    pub fn var(&self, index: usize) -> &VarDescriptor {
        &self.vars[index]
    }

    /// Resolves a variable name to its index.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Index of the offline-selection bitgroup (the 128-bit one).
    pub fn offline_group(&self) -> usize {
        self.offline_group
    }

    /// Total scalar slots across all float/int variables.
    pub fn scalar_slots(&self) -> u32 {
        self.scalar_slots
    }

    /// Total 32-bit words of packed bitgroup data.
    pub fn bit_words(&self) -> u32 {
        self.bit_words
    }

    /// Bytes of the presence bitmap (one bit per variable).
    pub fn presence_len(&self) -> u32 {
        self.presence_len
    }

    /// Byte length of a record body (scalar slots + bit words + presence).
    pub fn body_len(&self) -> usize {
        (self.scalar_slots * 4 + self.bit_words * 4 + self.presence_len) as usize
    }

    /// Byte length of a full on-disk record.
    pub fn record_len(&self) -> usize {
        RECORD_HEADER_LEN + self.body_len()
    }

    /// Stable hash of the descriptor list; two schemas with equal hashes
    /// lay records out identically.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub(crate) fn slot(&self, index: usize) -> VarSlot {
        self.slots[index]
    }

    /// Byte offset of the packed bit region inside the record body.
    pub(crate) fn bits_base(&self) -> usize {
        (self.scalar_slots * 4) as usize
    }

    /// Byte offset of the presence bitmap inside the record body.
    pub(crate) fn presence_base(&self) -> usize {
        ((self.scalar_slots + self.bit_words) * 4) as usize
    }

    /// The builtin default schema: run/event numbers, the five trigger and
    /// selection bitgroups, and 212 float variables covering electron
    /// candidates for two algorithms, event kinematics, global calorimeter
    /// sums, tracking, luminosity, muons, forward detectors, jets from
    /// four finders and charm candidates.
    pub fn default_schema() -> TagSchema {
        TagSchema::define(default_descriptors()).expect("builtin default schema is valid")
    }
}

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

fn default_descriptors() -> Vec<VarDescriptor> {
    let mut vars = Vec::with_capacity(219);
    let f = VarDescriptor::float;

    vars.push(VarDescriptor::int("RUN", "header"));
    vars.push(VarDescriptor::int("EVENT", "header"));

    vars.push(VarDescriptor::bitgroup("FLT", 64, "trigger_l1"));
    vars.push(VarDescriptor::bitgroup("SLT", 192, "trigger_l2"));
    vars.push(VarDescriptor::bitgroup("TLT", 352, "trigger_l3"));
    vars.push(VarDescriptor::bitgroup("OFFLINE", 128, "selection"));
    vars.push(VarDescriptor::bitgroup("MISC", 64, "misc_flags"));

    // Electron candidates, algorithms A and B: first candidate has 13
    // calorimeter + 11 position variables, second candidate 5.
    for alg in ["A", "B"] {
        let group = if alg == "A" {
            "electron_a"
        } else {
            "electron_b"
        };
        for suffix in [
            "E", "ET", "THETA", "PHI", "X", "Y", "Z", "PROB", "E_CONE", "E_IN", "DEPTH", "WIDTH",
            "ISO",
        ] {
            vars.push(f(&format!("ELEC_{alg}1_{suffix}"), group));
        }
        for suffix in [
            "TRK_X",
            "TRK_Y",
            "TRK_Z",
            "TRK_THETA",
            "TRK_PHI",
            "SRTD_X",
            "SRTD_Y",
            "HES_X",
            "HES_Y",
            "PRES_E",
            "DCA",
        ] {
            vars.push(f(&format!("ELEC_{alg}1_{suffix}"), group));
        }
        for suffix in ["E", "THETA", "PHI", "PROB", "PT"] {
            vars.push(f(&format!("ELEC_{alg}2_{suffix}"), group));
        }
    }

    // Kinematic estimators from each electron algorithm.
    for alg in ["A", "B"] {
        for suffix in ["X", "Y", "Q2", "W2", "E_SCAT", "THETA_SCAT", "GAMMA_H"] {
            vars.push(f(&format!("KIN_{alg}_{suffix}"), "kinematics"));
        }
    }

    // Global calorimeter: 26 sums and shapes, 3 per-part energies, 8
    // hadronic four-vector components.
    for name in [
        "E_TOTAL",
        "ET_TOTAL",
        "ET_MISS",
        "ET_MISS_PHI",
        "EMPZ",
        "PZ_TOTAL",
        "E_EMC",
        "E_HAC",
        "ET_EMC",
        "ET_HAC",
        "E_MAX_CELL",
        "T_GLOBAL",
    ] {
        vars.push(f(name, "calorimeter"));
    }
    for i in 12..26 {
        vars.push(f(&format!("CAL_G{i:02}"), "calorimeter"));
    }
    for name in ["E_FCAL", "E_BCAL", "E_RCAL"] {
        vars.push(f(name, "calorimeter"));
    }
    for h in ["HAD1", "HAD2"] {
        for c in ["E", "PX", "PY", "PZ"] {
            vars.push(f(&format!("{h}_{c}"), "calorimeter"));
        }
    }

    // Tracking: counts, vertex, track sums.
    for name in [
        "NTRK_PRIM",
        "NTRK_SEC",
        "VTX_X",
        "VTX_Y",
        "VTX_Z",
        "VTX_CHI2",
        "NTRK_VTX",
        "NVTX_SEC",
        "TRK_PT_MAX",
        "TRK_THETA_MAX",
        "ET_TRACK",
        "ET_TRACK_F",
        "ET_TRACK_B",
        "PT_TRACK_SUM",
        "PT_TRACK_MISS",
    ] {
        vars.push(f(name, "tracking"));
    }

    for name in [
        "LUMI_E_GAMMA",
        "LUMI_E_ELEC",
        "LUMI_RATE",
        "LUMI_X",
        "LUMI_Y",
        "LUMI_ACCEPT",
    ] {
        vars.push(f(name, "luminosity"));
    }

    for name in [
        "MU_SYS_N_HIT",
        "MU_SYS_E_SUM",
        "MU_SYS_T0",
        "MU_SYS_X",
        "MU_SYS_Y",
        "MU_SYS_Z",
        "MU_SYS_QUAL",
    ] {
        vars.push(f(name, "muon_system"));
    }
    for name in [
        "MU_N",
        "MU1_E",
        "MU1_THETA",
        "MU2_E",
        "MU2_THETA",
        "MU_QUAL",
    ] {
        vars.push(f(name, "muon_id"));
    }

    for name in [
        "LPS_N", "LPS_XL", "LPS_PT2", "LPS_X", "LPS_Y", "LPS_E", "LPS_QUAL",
    ] {
        vars.push(f(name, "leading_proton"));
    }
    for name in [
        "BPC_E",
        "BPC_X",
        "BPC_Y",
        "BPC_T",
        "BPC_N_CELL",
        "BPC_E_MAX",
        "BPC_QUAL",
    ] {
        vars.push(f(name, "beampipe_cal"));
    }
    for name in ["FNC_E", "FNC_X", "FNC_Y", "FNC_T", "FNC_QUAL"] {
        vars.push(f(name, "fwd_neutron"));
    }
    for name in [
        "TAG8_E", "TAG8_X", "TAG8_Y", "TAG44_E", "TAG44_X", "TAG44_Y", "TAG_QUAL",
    ] {
        vars.push(f(name, "taggers"));
    }

    // Jets from four finders, 7 variables each.
    for finder in 1..=4 {
        for suffix in ["N", "ET1", "ETA1", "PHI1", "ET2", "ETA2", "PHI2"] {
            vars.push(f(&format!("JETF{finder}_{suffix}"), "jets"));
        }
    }

    // Charmed mesons.
    for name in [
        "DSTAR_M", "DSTAR_PT", "DSTAR_DM", "D0_M", "D0_PT", "DS_M", "DS_PT",
    ] {
        vars.push(f(name, "charm"));
    }
    for i in 0..8 {
        vars.push(f(&format!("CHARM_Q{i:02}"), "charm"));
    }

    vars
}
