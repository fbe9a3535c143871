use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Vehicle type to unit count.
    pub fleet: BTreeMap<String, u32>,
    /// Crew per vehicle type, when given; informational only.
    pub crew: BTreeMap<String, u32>,
}

/// Incident code to the vehicles it requires, as `(type, quantity)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchRules {
    pub rules: BTreeMap<u32, Vec<(String, u32)>>,
}

impl DispatchRules {
    pub fn required(&self, incident: u32) -> Option<&[(String, u32)]> {
        self.rules.get(&incident).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resources {
    pub stations: Vec<Station>,
    pub rules: DispatchRules,
}

impl Resources {
    /// Checks that every vehicle type named by a rule exists in some fleet.
    pub fn new(stations: Vec<Station>, rules: DispatchRules) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::Validation {
                row: 0,
                message: "no stations".into(),
            });
        }
        let known = vehicle_types(&stations);
        for (incident, needs) in &rules.rules {
            for (kind, _) in needs {
                if !known.contains(kind) {
                    return Err(Error::Validation {
                        row: 0,
                        message: format!("rule for incident {incident} needs vehicle type `{kind}`, which no station has"),
                    });
                }
            }
        }
        Ok(Resources { stations, rules })
    }

    pub fn fleet_size(&self) -> u64 {
        self.stations
            .iter()
            .flat_map(|s| s.fleet.values())
            .map(|&c| c as u64)
            .sum()
    }

    pub fn vehicle_types(&self) -> BTreeSet<String> {
        vehicle_types(&self.stations)
    }
}

fn vehicle_types(stations: &[Station]) -> BTreeSet<String> {
    stations
        .iter()
        .flat_map(|s| s.fleet.keys().cloned())
        .collect()
}

#[derive(Deserialize)]
struct StationRow {
    station_id: String,
    x: f64,
    y: f64,
    vehicle_type: String,
    count: u32,
    #[serde(default)]
    crew: Option<u32>,
}

/// Reads `station_id,x,y,vehicle_type,count[,crew]`, one row per type per
/// station. Rows of one station must repeat the same coordinates; a
/// `(station, type)` pair may appear once.
pub fn read_stations<R: Read>(reader: R) -> Result<Vec<Station>> {
    let mut stations: Vec<Station> = Vec::new();
    for (i, row) in csv::Reader::from_reader(reader)
        .deserialize::<StationRow>()
        .enumerate()
    {
        let row = row?;
        let line = i + 1;
        let invalid = |message: String| Error::Validation { row: line, message };
        if !(row.x.is_finite() && row.y.is_finite()) {
            return Err(invalid(format!(
                "station `{}` has non-finite coordinates",
                row.station_id
            )));
        }
        if row.vehicle_type.is_empty() {
            return Err(invalid("empty vehicle type".into()));
        }
        let station = match stations.iter_mut().find(|s| s.id == row.station_id) {
            Some(s) => {
                if s.x != row.x || s.y != row.y {
                    return Err(invalid(format!(
                        "station `{}` listed with two locations",
                        row.station_id
                    )));
                }
                s
            }
            None => {
                stations.push(Station {
                    id: row.station_id.clone(),
                    x: row.x,
                    y: row.y,
                    fleet: BTreeMap::new(),
                    crew: BTreeMap::new(),
                });
                stations.last_mut().expect("just pushed")
            }
        };
        if station
            .fleet
            .insert(row.vehicle_type.clone(), row.count)
            .is_some()
        {
            return Err(invalid(format!(
                "duplicate station entry `{}` / `{}`",
                row.station_id, row.vehicle_type
            )));
        }
        if let Some(c) = row.crew {
            station.crew.insert(row.vehicle_type, c);
        }
    }
    Ok(stations)
}

/// Reads `incident,vehicle_type,quantity`. Repeated `(incident, type)` rows
/// add up.
pub fn read_rules<R: Read>(reader: R) -> Result<DispatchRules> {
    #[derive(Deserialize)]
    struct Row {
        incident: u32,
        vehicle_type: String,
        quantity: u32,
    }
    let mut rules: BTreeMap<u32, Vec<(String, u32)>> = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize::<Row>() {
        let row = row?;
        if row.quantity == 0 {
            continue;
        }
        let needs = rules.entry(row.incident).or_default();
        match needs.iter_mut().find(|(k, _)| *k == row.vehicle_type) {
            Some((_, q)) => *q += row.quantity,
            None => needs.push((row.vehicle_type, row.quantity)),
        }
    }
    Ok(DispatchRules { rules })
}

pub fn load_resources(stations: impl AsRef<Path>, rules: impl AsRef<Path>) -> Result<Resources> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| Error::io(p, e));
    let stations = read_stations(open(stations.as_ref())?)?;
    let rules = read_rules(open(rules.as_ref())?)?;
    Resources::new(stations, rules)
}
