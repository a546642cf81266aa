use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The fixed registry of specialty departments. Declaration order is the
/// canonical registry order used to sequence agent outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepartmentId {
    RespiratoryMedicine,
    CardiovascularMedicine,
    Neurology,
    GeneralSurgery,
    CardiothoracicSurgery,
    Neurosurgery,
    Orthopedics,
    Urology,
    ObGyn,
    Pediatrics,
    Ent,
    Emergency,
    Icu,
    Pathology,
    Anesthesiology,
    Oncology,
    Rehabilitation,
    PreventiveHealthcare,
}

impl DepartmentId {
    pub const ALL: [DepartmentId; 18] = [
        DepartmentId::RespiratoryMedicine,
        DepartmentId::CardiovascularMedicine,
        DepartmentId::Neurology,
        DepartmentId::GeneralSurgery,
        DepartmentId::CardiothoracicSurgery,
        DepartmentId::Neurosurgery,
        DepartmentId::Orthopedics,
        DepartmentId::Urology,
        DepartmentId::ObGyn,
        DepartmentId::Pediatrics,
        DepartmentId::Ent,
        DepartmentId::Emergency,
        DepartmentId::Icu,
        DepartmentId::Pathology,
        DepartmentId::Anesthesiology,
        DepartmentId::Oncology,
        DepartmentId::Rehabilitation,
        DepartmentId::PreventiveHealthcare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DepartmentId::RespiratoryMedicine => "respiratory_medicine",
            DepartmentId::CardiovascularMedicine => "cardiovascular_medicine",
            DepartmentId::Neurology => "neurology",
            DepartmentId::GeneralSurgery => "general_surgery",
            DepartmentId::CardiothoracicSurgery => "cardiothoracic_surgery",
            DepartmentId::Neurosurgery => "neurosurgery",
            DepartmentId::Orthopedics => "orthopedics",
            DepartmentId::Urology => "urology",
            DepartmentId::ObGyn => "ob_gyn",
            DepartmentId::Pediatrics => "pediatrics",
            DepartmentId::Ent => "ent",
            DepartmentId::Emergency => "emergency",
            DepartmentId::Icu => "icu",
            DepartmentId::Pathology => "pathology",
            DepartmentId::Anesthesiology => "anesthesiology",
            DepartmentId::Oncology => "oncology",
            DepartmentId::Rehabilitation => "rehabilitation",
            DepartmentId::PreventiveHealthcare => "preventive_healthcare",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DepartmentId::RespiratoryMedicine => "Respiratory Medicine",
            DepartmentId::CardiovascularMedicine => "Cardiovascular Medicine",
            DepartmentId::Neurology => "Neurology",
            DepartmentId::GeneralSurgery => "General Surgery",
            DepartmentId::CardiothoracicSurgery => "Cardiothoracic Surgery",
            DepartmentId::Neurosurgery => "Neurosurgery",
            DepartmentId::Orthopedics => "Orthopedics",
            DepartmentId::Urology => "Urology",
            DepartmentId::ObGyn => "Obstetrics & Gynecology",
            DepartmentId::Pediatrics => "Pediatrics",
            DepartmentId::Ent => "ENT",
            DepartmentId::Emergency => "Emergency Medicine",
            DepartmentId::Icu => "ICU",
            DepartmentId::Pathology => "Pathology",
            DepartmentId::Anesthesiology => "Anesthesiology",
            DepartmentId::Oncology => "Oncology",
            DepartmentId::Rehabilitation => "Rehabilitation",
            DepartmentId::PreventiveHealthcare => "Preventive Healthcare",
        }
    }

    /// Agent name, e.g. `cardiovascular_medicine_agent`.
    pub fn agent_name(self) -> String {
        format!("{}_agent", self.as_str())
    }

    /// Lenient lookup accepting registry ids, agent names, display names and
    /// common short forms ("cardiology", "ob/gyn", "intensive care").
    pub fn lookup(name: &str) -> Option<DepartmentId> {
        let mut key = String::new();
        for c in name.trim().to_lowercase().replace('&', " and ").chars() {
            if c.is_alphanumeric() {
                key.push(c);
            } else if !key.ends_with('_') {
                key.push('_');
            }
        }
        let key = key.trim_matches('_');
        let key = key.strip_suffix("_agent").unwrap_or(key);
        let key = key.strip_suffix("_department").unwrap_or(key);
        if let Some(d) = Self::ALL.iter().find(|d| d.as_str() == key) {
            return Some(*d);
        }
        let d = match key {
            "respiratory" | "pulmonology" | "pulmonary" => DepartmentId::RespiratoryMedicine,
            "cardiovascular" | "cardiology" => DepartmentId::CardiovascularMedicine,
            "general" => DepartmentId::GeneralSurgery,
            "cardiothoracic" | "thoracic_surgery" | "cardiac_surgery" => DepartmentId::CardiothoracicSurgery,
            "orthopaedics" | "orthopedic_surgery" => DepartmentId::Orthopedics,
            "ob" | "gyn" | "ob_gyn" | "obgyn" | "obstetrics_and_gynecology" | "obstetrics" | "gynecology" => {
                DepartmentId::ObGyn
            }
            "paediatrics" => DepartmentId::Pediatrics,
            "otolaryngology" | "ear_nose_and_throat" => DepartmentId::Ent,
            "emergency_medicine" => DepartmentId::Emergency,
            "intensive_care" | "intensive_care_unit" | "critical_care" => DepartmentId::Icu,
            "anesthesia" | "anaesthesiology" => DepartmentId::Anesthesiology,
            "rehab" => DepartmentId::Rehabilitation,
            "preventive" | "preventive_medicine" => DepartmentId::PreventiveHealthcare,
            _ => return None,
        };
        Some(d)
    }
}

impl fmt::Display for DepartmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DepartmentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::lookup(s).ok_or_else(|| Error::InvalidArgument(format!("unknown department `{s}`")))
    }
}
