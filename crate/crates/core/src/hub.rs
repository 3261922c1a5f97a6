//! Hub description and network topology.
//!
//! A hub is a set of energy carriers tied together by grid connections,
//! converters, and storages. Each carrier gets a bus; every device port is
//! wired to its carrier's bus by exactly one branch. Routing through buses
//! keeps the branch count linear in the number of devices, where a direct
//! device-to-device (pairwise) wiring would grow with the product of sources
//! and sinks on each carrier.
//!
//! The topology produced here is purely structural: branches, the
//! flow-conservation and device-efficiency rows over branch space, and the
//! branch roles (imports, deliveries, converter inputs, storage net flows)
//! that the dispatch model attaches limits and prices to.

use serde::Deserialize;
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HubError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid hub description: {0}")]
    Parse(String),
    #[error("{entity} references unknown energy '{energy}'")]
    UnknownEnergy { entity: String, energy: String },
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("{entity}: {field} must be {requirement}, got {value}")]
    BadNumber {
        entity: String,
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("energy '{0}' is demanded but nothing can supply it")]
    NoSupply(String),
    #[error("hub has no energies")]
    Empty,
}

/// One energy carrier. `demanded` marks carriers that must serve a load
/// profile; the profile itself comes with the scenario data.
#[derive(Debug, Clone, PartialEq)]
pub struct Energy {
    pub name: String,
    pub demanded: bool,
}

/// A contracted exchange point with an external network.
///
/// Capacity is bought in steps of `cap_step` megawatts, encoded on
/// `cap_bits` bits, at `invest` currency units per megawatt. The price,
/// feed-in, emission, and availability series come from the scenario data
/// for the carrier, unless `series` names an override.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConnection {
    pub name: String,
    pub energy: usize,
    pub importable: bool,
    pub exportable: bool,
    pub cap_step: f64,
    pub cap_bits: usize,
    pub invest: f64,
    pub series: Option<String>,
}

impl GridConnection {
    /// Largest capacity the bit encoding can express.
    pub fn cap_max(&self) -> f64 {
        self.cap_step * ((1u64 << self.cap_bits) - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterOutput {
    pub energy: usize,
    /// Output megawatts per input megawatt on this carrier.
    pub efficiency: f64,
}

/// A conversion device bought in identical units of `unit_size` megawatts
/// of input capacity each, encoded on `unit_bits` bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Converter {
    pub name: String,
    pub input: usize,
    pub outputs: Vec<ConverterOutput>,
    pub unit_size: f64,
    pub unit_bits: usize,
    pub invest: f64,
}

impl Converter {
    pub fn max_units(&self) -> u64 {
        (1u64 << self.unit_bits) - 1
    }
}

/// A storage device. Power rating (megawatts through the reservoir) and
/// energy rating (megawatt hours of content) are sized independently.
#[derive(Debug, Clone, PartialEq)]
pub struct Storage {
    pub name: String,
    pub energy: usize,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    pub power_step: f64,
    pub power_bits: usize,
    pub energy_step: f64,
    pub energy_bits: usize,
    pub invest_power: f64,
    pub invest_energy: f64,
}

impl Storage {
    pub fn power_max(&self) -> f64 {
        self.power_step * ((1u64 << self.power_bits) - 1) as f64
    }
    pub fn energy_max(&self) -> f64 {
        self.energy_step * ((1u64 << self.energy_bits) - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hub {
    pub name: String,
    pub energies: Vec<Energy>,
    pub connections: Vec<GridConnection>,
    pub converters: Vec<Converter>,
    pub storages: Vec<Storage>,
}

impl Hub {
    pub fn energy_index(&self, name: &str) -> Option<usize> {
        self.energies.iter().position(|e| e.name == name)
    }

    pub fn from_toml_path(path: &Path) -> Result<Hub, HubError> {
        let text = std::fs::read_to_string(path).map_err(|source| HubError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Hub::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Hub, HubError> {
        let raw: RawHub = toml::from_str(text).map_err(|e| HubError::Parse(e.to_string()))?;
        raw.resolve()
    }

    /// Structural sanity: names unique, references resolve, numbers sane,
    /// and every demanded carrier has at least one possible supply path.
    pub fn validate(&self) -> Result<(), HubError> {
        if self.energies.is_empty() {
            return Err(HubError::Empty);
        }
        let mut names = BTreeSet::new();
        for n in self
            .energies
            .iter()
            .map(|e| &e.name)
            .chain(self.connections.iter().map(|c| &c.name))
            .chain(self.converters.iter().map(|c| &c.name))
            .chain(self.storages.iter().map(|s| &s.name))
        {
            if !names.insert(n.clone()) {
                return Err(HubError::DuplicateName(n.clone()));
            }
        }

        let positive = |entity: &str, field: &'static str, v: f64| -> Result<(), HubError> {
            if !(v.is_finite() && v > 0.0) {
                return Err(HubError::BadNumber {
                    entity: entity.to_string(),
                    field,
                    requirement: "a positive finite number",
                    value: v,
                });
            }
            Ok(())
        };
        let nonneg = |entity: &str, field: &'static str, v: f64| -> Result<(), HubError> {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HubError::BadNumber {
                    entity: entity.to_string(),
                    field,
                    requirement: "a nonnegative finite number",
                    value: v,
                });
            }
            Ok(())
        };

        for c in &self.connections {
            self.check_energy(&c.name, c.energy)?;
            positive(&c.name, "cap_step", c.cap_step)?;
            nonneg(&c.name, "invest", c.invest)?;
            if c.cap_bits == 0 || c.cap_bits > 30 {
                return Err(HubError::BadNumber {
                    entity: c.name.clone(),
                    field: "cap_bits",
                    requirement: "between 1 and 30",
                    value: c.cap_bits as f64,
                });
            }
        }
        for g in &self.converters {
            self.check_energy(&g.name, g.input)?;
            if g.outputs.is_empty() {
                return Err(HubError::Parse(format!("{} has no outputs", g.name)));
            }
            for out in &g.outputs {
                self.check_energy(&g.name, out.energy)?;
                positive(&g.name, "efficiency", out.efficiency)?;
                if out.energy == g.input {
                    return Err(HubError::Parse(format!(
                        "{} converts {} to itself",
                        g.name, self.energies[g.input].name
                    )));
                }
            }
            positive(&g.name, "unit_size", g.unit_size)?;
            nonneg(&g.name, "invest", g.invest)?;
            if g.unit_bits == 0 || g.unit_bits > 30 {
                return Err(HubError::BadNumber {
                    entity: g.name.clone(),
                    field: "unit_bits",
                    requirement: "between 1 and 30",
                    value: g.unit_bits as f64,
                });
            }
        }
        for s in &self.storages {
            self.check_energy(&s.name, s.energy)?;
            for (field, v) in [
                ("charge_efficiency", s.charge_efficiency),
                ("discharge_efficiency", s.discharge_efficiency),
            ] {
                if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                    return Err(HubError::BadNumber {
                        entity: s.name.clone(),
                        field: if field == "charge_efficiency" {
                            "charge_efficiency"
                        } else {
                            "discharge_efficiency"
                        },
                        requirement: "in (0, 1]",
                        value: v,
                    });
                }
            }
            positive(&s.name, "power_step", s.power_step)?;
            positive(&s.name, "energy_step", s.energy_step)?;
            nonneg(&s.name, "invest_power", s.invest_power)?;
            nonneg(&s.name, "invest_energy", s.invest_energy)?;
            for (field, bits) in [("power_bits", s.power_bits), ("energy_bits", s.energy_bits)] {
                if bits == 0 || bits > 30 {
                    return Err(HubError::BadNumber {
                        entity: s.name.clone(),
                        field: if field == "power_bits" {
                            "power_bits"
                        } else {
                            "energy_bits"
                        },
                        requirement: "between 1 and 30",
                        value: bits as f64,
                    });
                }
            }
        }

        // Supply reachability: a carrier is suppliable if it can be imported
        // or produced by a converter whose input is suppliable. Iterate to a
        // fixpoint so conversion chains and cycles are handled.
        let n = self.energies.len();
        let mut suppliable = vec![false; n];
        for c in &self.connections {
            if c.importable {
                suppliable[c.energy] = true;
            }
        }
        loop {
            let mut changed = false;
            for g in &self.converters {
                if suppliable[g.input] {
                    for out in &g.outputs {
                        if !suppliable[out.energy] {
                            suppliable[out.energy] = true;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for (i, e) in self.energies.iter().enumerate() {
            if e.demanded && !suppliable[i] {
                return Err(HubError::NoSupply(e.name.clone()));
            }
        }
        Ok(())
    }

    fn check_energy(&self, entity: &str, idx: usize) -> Result<(), HubError> {
        if idx >= self.energies.len() {
            return Err(HubError::UnknownEnergy {
                entity: entity.to_string(),
                energy: format!("#{idx}"),
            });
        }
        Ok(())
    }

    /// Validates and wires up the network.
    pub fn topology(&self) -> Result<Topology, HubError> {
        self.validate()?;
        Ok(build_topology(self))
    }
}

/// Whose flow a port carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortOwner {
    Bus(usize),
    GridIn(usize),
    /// Exit point of a carrier's delivery branch.
    GridOut(usize),
    Converter(usize),
    Storage(usize),
    /// Unconstrained far end of a storage's net-flow branch.
    Reservoir(usize),
}

#[derive(Debug, Clone)]
pub struct Port {
    pub name: String,
    pub owner: PortOwner,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub name: String,
    pub tail: usize,
    pub head: usize,
    /// Real branches carry physical flow and must stay nonnegative; the
    /// storage net-flow branch is virtual and signed.
    pub real: bool,
}

/// One flow-balance row over branch space: `sum(coef * flow) = 0`.
#[derive(Debug, Clone)]
pub struct BalanceRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub ports: Vec<Port>,
    pub branches: Vec<Branch>,
    /// Conservation at every bus plus the efficiency couplings of every
    /// device, all expressed over branch flows.
    pub balance: Vec<BalanceRow>,
    /// Per connection: its import branch, if importable.
    pub import_branch: Vec<Option<usize>>,
    /// Per energy: the branch serving demand and export, if any.
    pub delivery_branch: Vec<Option<usize>>,
    /// Per converter: the branches feeding its input.
    pub converter_inputs: Vec<Vec<usize>>,
    /// Per storage: the virtual branch carrying net reservoir outflow.
    pub storage_net: Vec<usize>,
    /// Per storage: the charge (bus to device) branch.
    pub storage_charge: Vec<usize>,
    /// Per storage: the discharge (device to bus) branch.
    pub storage_discharge: Vec<usize>,
    bus_port: Vec<usize>,
}

impl Topology {
    pub fn bus_port(&self, energy: usize) -> usize {
        self.bus_port[energy]
    }

    /// Branches incident to a carrier's bus.
    pub fn bus_branch_count(&self, energy: usize) -> usize {
        let bus = self.bus_port[energy];
        self.branches
            .iter()
            .filter(|b| b.tail == bus || b.head == bus)
            .count()
    }

    /// How many branches a direct device-to-device wiring of the same bus
    /// would need: every source paired with every sink, minus pairs that
    /// would loop a device back into itself.
    pub fn pairwise_branch_count(&self, energy: usize) -> usize {
        let bus = self.bus_port[energy];
        let mut sources: Vec<&PortOwner> = Vec::new();
        let mut sinks: Vec<&PortOwner> = Vec::new();
        for b in &self.branches {
            if b.head == bus {
                sources.push(&self.ports[b.tail].owner);
            } else if b.tail == bus {
                sinks.push(&self.ports[b.head].owner);
            }
        }
        let mut count = 0;
        for src in &sources {
            for dst in &sinks {
                if src != dst {
                    count += 1;
                }
            }
        }
        count
    }

    /// Ids of branches that must carry nonnegative flow.
    pub fn real_branches(&self) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.real.then_some(i))
            .collect()
    }

    /// Number of balance rows; equals device output ports plus buses.
    pub fn out_port_count(&self) -> usize {
        self.balance.len()
    }
}

fn build_topology(hub: &Hub) -> Topology {
    let mut ports: Vec<Port> = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    let mut balance: Vec<BalanceRow> = Vec::new();

    let port = |ports: &mut Vec<Port>, name: String, owner: PortOwner| -> usize {
        ports.push(Port { name, owner });
        ports.len() - 1
    };

    let bus_port: Vec<usize> = hub
        .energies
        .iter()
        .enumerate()
        .map(|(i, e)| port(&mut ports, format!("{}.bus", e.name), PortOwner::Bus(i)))
        .collect();

    // Bus conservation rows are filled in as branches attach.
    let mut bus_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); hub.energies.len()];

    let add_branch = |branches: &mut Vec<Branch>,
                          bus_row: &mut Vec<Vec<(usize, f64)>>,
                          name: String,
                          tail: usize,
                          head: usize,
                          real: bool,
                          ports: &Vec<Port>|
     -> usize {
        let id = branches.len();
        branches.push(Branch {
            name,
            tail,
            head,
            real,
        });
        if let PortOwner::Bus(e) = ports[tail].owner {
            bus_row[e].push((id, -1.0));
        }
        if let PortOwner::Bus(e) = ports[head].owner {
            bus_row[e].push((id, 1.0));
        }
        id
    };

    let mut import_branch = vec![None; hub.connections.len()];
    for (ci, c) in hub.connections.iter().enumerate() {
        if c.importable {
            let p = port(
                &mut ports,
                format!("{}.feed", c.name),
                PortOwner::GridIn(ci),
            );
            let b = add_branch(
                &mut branches,
                &mut bus_row,
                format!("{}->{}", c.name, hub.energies[c.energy].name),
                p,
                bus_port[c.energy],
                true,
                &ports,
            );
            import_branch[ci] = Some(b);
        }
    }

    let mut converter_inputs = Vec::with_capacity(hub.converters.len());
    for (gi, g) in hub.converters.iter().enumerate() {
        let p_in = port(
            &mut ports,
            format!("{}.in", g.name),
            PortOwner::Converter(gi),
        );
        let b_in = add_branch(
            &mut branches,
            &mut bus_row,
            format!("{}->{}", hub.energies[g.input].name, g.name),
            bus_port[g.input],
            p_in,
            true,
            &ports,
        );
        converter_inputs.push(vec![b_in]);
        for out in &g.outputs {
            let p_out = port(
                &mut ports,
                format!("{}.{}", g.name, hub.energies[out.energy].name),
                PortOwner::Converter(gi),
            );
            let b_out = add_branch(
                &mut branches,
                &mut bus_row,
                format!("{}->{}", g.name, hub.energies[out.energy].name),
                p_out,
                bus_port[out.energy],
                true,
                &ports,
            );
            // Output flow is the input flow scaled by this carrier's
            // efficiency: out - eff * in = 0.
            balance.push(BalanceRow {
                name: format!("{}.{}", g.name, hub.energies[out.energy].name),
                terms: vec![(b_out, 1.0), (b_in, -out.efficiency)],
            });
        }
    }

    let mut storage_net = Vec::with_capacity(hub.storages.len());
    let mut storage_charge = Vec::with_capacity(hub.storages.len());
    let mut storage_discharge = Vec::with_capacity(hub.storages.len());
    for (si, s) in hub.storages.iter().enumerate() {
        let carrier = &hub.energies[s.energy].name;
        let p_charge = port(
            &mut ports,
            format!("{}.charge", s.name),
            PortOwner::Storage(si),
        );
        let p_discharge = port(
            &mut ports,
            format!("{}.discharge", s.name),
            PortOwner::Storage(si),
        );
        let p_net = port(&mut ports, format!("{}.net", s.name), PortOwner::Storage(si));
        let p_far = port(
            &mut ports,
            format!("{}.reservoir", s.name),
            PortOwner::Reservoir(si),
        );
        let b_charge = add_branch(
            &mut branches,
            &mut bus_row,
            format!("{carrier}->{}", s.name),
            bus_port[s.energy],
            p_charge,
            true,
            &ports,
        );
        let b_discharge = add_branch(
            &mut branches,
            &mut bus_row,
            format!("{}->{carrier}", s.name),
            p_discharge,
            bus_port[s.energy],
            true,
            &ports,
        );
        // The net branch carries what actually leaves the reservoir:
        // discharge grossed up by its loss, minus what charging banks after
        // its loss. It is signed, hence virtual.
        let b_net = add_branch(
            &mut branches,
            &mut bus_row,
            format!("{}.net", s.name),
            p_far,
            p_net,
            false,
            &ports,
        );
        balance.push(BalanceRow {
            name: format!("{}.net", s.name),
            terms: vec![
                (b_net, 1.0),
                (b_discharge, -1.0 / s.discharge_efficiency),
                (b_charge, s.charge_efficiency),
            ],
        });
        storage_net.push(b_net);
        storage_charge.push(b_charge);
        storage_discharge.push(b_discharge);
    }

    let mut delivery_branch = vec![None; hub.energies.len()];
    for (ei, e) in hub.energies.iter().enumerate() {
        let has_export = hub
            .connections
            .iter()
            .any(|c| c.energy == ei && c.exportable);
        if e.demanded || has_export {
            let p = port(&mut ports, format!("{}.load", e.name), PortOwner::GridOut(ei));
            let b = add_branch(
                &mut branches,
                &mut bus_row,
                format!("{}->load", e.name),
                bus_port[ei],
                p,
                true,
                &ports,
            );
            delivery_branch[ei] = Some(b);
        }
    }

    // Bus rows go first so balance-row order is stable and readable.
    let mut all_rows: Vec<BalanceRow> = hub
        .energies
        .iter()
        .enumerate()
        .map(|(i, e)| BalanceRow {
            name: format!("{}.bus", e.name),
            terms: std::mem::take(&mut bus_row[i]),
        })
        .collect();
    all_rows.append(&mut balance);

    Topology {
        ports,
        branches,
        balance: all_rows,
        import_branch,
        delivery_branch,
        converter_inputs,
        storage_net,
        storage_charge,
        storage_discharge,
        bus_port,
    }
}

// ---------------------------------------------------------------------------
// TOML form
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHub {
    name: String,
    #[serde(rename = "energies")]
    energies: Vec<RawEnergy>,
    #[serde(default, rename = "grid")]
    grid: Vec<RawConnection>,
    #[serde(default, rename = "converters")]
    converters: Vec<RawConverter>,
    #[serde(default, rename = "storages")]
    storages: Vec<RawStorage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    name: String,
    #[serde(default)]
    demand: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConnection {
    name: String,
    energy: String,
    #[serde(default)]
    import: bool,
    #[serde(default)]
    export: bool,
    cap_step: f64,
    cap_bits: usize,
    #[serde(default)]
    invest: f64,
    #[serde(default)]
    series: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConverter {
    name: String,
    input: String,
    output: Vec<RawOutput>,
    unit_size: f64,
    unit_bits: usize,
    #[serde(default)]
    invest: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    energy: String,
    efficiency: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStorage {
    name: String,
    energy: String,
    charge_efficiency: f64,
    discharge_efficiency: f64,
    power_step: f64,
    power_bits: usize,
    energy_step: f64,
    energy_bits: usize,
    #[serde(default)]
    invest_power: f64,
    #[serde(default)]
    invest_energy: f64,
}

impl RawHub {
    fn resolve(self) -> Result<Hub, HubError> {
        let energies: Vec<Energy> = self
            .energies
            .iter()
            .map(|e| Energy {
                name: e.name.clone(),
                demanded: e.demand,
            })
            .collect();
        let find = |entity: &str, name: &str| -> Result<usize, HubError> {
            energies
                .iter()
                .position(|e| e.name == name)
                .ok_or_else(|| HubError::UnknownEnergy {
                    entity: entity.to_string(),
                    energy: name.to_string(),
                })
        };
        let hub = Hub {
            name: self.name,
            connections: self
                .grid
                .iter()
                .map(|c| {
                    Ok(GridConnection {
                        name: c.name.clone(),
                        energy: find(&c.name, &c.energy)?,
                        importable: c.import,
                        exportable: c.export,
                        cap_step: c.cap_step,
                        cap_bits: c.cap_bits,
                        invest: c.invest,
                        series: c.series.clone(),
                    })
                })
                .collect::<Result<_, HubError>>()?,
            converters: self
                .converters
                .iter()
                .map(|g| {
                    Ok(Converter {
                        name: g.name.clone(),
                        input: find(&g.name, &g.input)?,
                        outputs: g
                            .output
                            .iter()
                            .map(|o| {
                                Ok(ConverterOutput {
                                    energy: find(&g.name, &o.energy)?,
                                    efficiency: o.efficiency,
                                })
                            })
                            .collect::<Result<_, HubError>>()?,
                        unit_size: g.unit_size,
                        unit_bits: g.unit_bits,
                        invest: g.invest,
                    })
                })
                .collect::<Result<_, HubError>>()?,
            storages: self
                .storages
                .iter()
                .map(|s| {
                    Ok(Storage {
                        name: s.name.clone(),
                        energy: find(&s.name, &s.energy)?,
                        charge_efficiency: s.charge_efficiency,
                        discharge_efficiency: s.discharge_efficiency,
                        power_step: s.power_step,
                        power_bits: s.power_bits,
                        energy_step: s.energy_step,
                        energy_bits: s.energy_bits,
                        invest_power: s.invest_power,
                        invest_energy: s.invest_energy,
                    })
                })
                .collect::<Result<_, HubError>>()?,
            energies,
        };
        hub.validate()?;
        Ok(hub)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn two_boiler_wiring() {
        let hub = fixtures::two_boiler();
        let topo = hub.topology().unwrap();
        // Two imports, two converter inputs, two converter outputs, one
        // delivery.
        assert_eq!(topo.branches.len(), 7);
        assert!(topo.branches.iter().all(|b| b.real));
        // Three bus rows plus one efficiency row per converter output.
        assert_eq!(topo.out_port_count(), 5);
        let heat = hub.energy_index("heat").unwrap();
        assert!(topo.delivery_branch[heat].is_some());
        let gas = hub.energy_index("gas").unwrap();
        assert!(topo.delivery_branch[gas].is_none());
        assert_eq!(topo.converter_inputs.len(), 2);
        assert_eq!(topo.import_branch.iter().flatten().count(), 2);
    }

    #[test]
    fn campus_electric_bus_counts() {
        let hub = fixtures::campus();
        let topo = hub.topology().unwrap();
        let elec = hub.energy_index("electricity").unwrap();
        // Sources: grid feed, rooftop feed, cogenerator output, battery
        // discharge. Sinks: chiller, boiler-style heater, heat pump,
        // gas synthesizer, battery charge, delivery.
        assert_eq!(topo.bus_branch_count(elec), 10);
        // Pairwise wiring would pair 4 sources with 6 sinks, except the
        // battery looping onto itself.
        assert_eq!(topo.pairwise_branch_count(elec), 23);
    }

    #[test]
    fn storage_adds_virtual_branch_and_balance() {
        let hub = fixtures::campus();
        let topo = hub.topology().unwrap();
        assert_eq!(topo.storage_net.len(), hub.storages.len());
        for (&net, (&charge, &discharge)) in topo
            .storage_net
            .iter()
            .zip(topo.storage_charge.iter().zip(&topo.storage_discharge))
        {
            assert!(!topo.branches[net].real);
            assert!(topo.branches[charge].real);
            assert!(topo.branches[discharge].real);
        }
        let virtuals = topo.branches.iter().filter(|b| !b.real).count();
        assert_eq!(virtuals, hub.storages.len());
    }

    #[test]
    fn conservation_rows_cover_every_bus() {
        let hub = fixtures::campus();
        let topo = hub.topology().unwrap();
        for (i, e) in hub.energies.iter().enumerate() {
            let row = &topo.balance[i];
            assert_eq!(row.name, format!("{}.bus", e.name));
            assert_eq!(row.terms.len(), topo.bus_branch_count(i));
        }
        // Efficiency rows follow: one per converter output, one per storage.
        let expected = hub
            .converters
            .iter()
            .map(|c| c.outputs.len())
            .sum::<usize>()
            + hub.storages.len();
        assert_eq!(topo.balance.len(), hub.energies.len() + expected);
    }

    #[test]
    fn toml_round_trip_matches_fixture() {
        let text = fixtures::two_boiler_toml();
        let parsed = Hub::from_toml_str(&text).unwrap();
        assert_eq!(parsed, fixtures::two_boiler());
    }

    #[test]
    fn unknown_energy_is_rejected() {
        let text = r#"
name = "broken"
[[energies]]
name = "electricity"
[[grid]]
name = "feed"
energy = "steam"
import = true
cap_step = 1.0
cap_bits = 4
"#;
        match Hub::from_toml_str(text) {
            Err(HubError::UnknownEnergy { entity, energy }) => {
                assert_eq!(entity, "feed");
                assert_eq!(energy, "steam");
            }
            other => panic!("expected unknown-energy error, got {other:?}"),
        }
    }

    #[test]
    fn bad_efficiency_is_rejected() {
        let mut hub = fixtures::two_boiler();
        hub.converters[0].outputs[0].efficiency = 0.0;
        assert!(matches!(hub.validate(), Err(HubError::BadNumber { .. })));
        hub.converters[0].outputs[0].efficiency = f64::NAN;
        assert!(matches!(hub.validate(), Err(HubError::BadNumber { .. })));
    }

    #[test]
    fn storage_efficiency_above_one_is_rejected() {
        let mut hub = fixtures::campus();
        hub.storages[0].charge_efficiency = 1.2;
        assert!(matches!(hub.validate(), Err(HubError::BadNumber { .. })));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut hub = fixtures::two_boiler();
        hub.converters[1].name = hub.converters[0].name.clone();
        assert!(matches!(hub.validate(), Err(HubError::DuplicateName(_))));
    }

    #[test]
    fn demand_without_supply_is_rejected() {
        let mut hub = fixtures::two_boiler();
        // Cut both conversion paths to heat; demand becomes unservable.
        hub.converters.clear();
        match hub.validate() {
            Err(HubError::NoSupply(e)) => assert_eq!(e, "heat"),
            other => panic!("expected no-supply error, got {other:?}"),
        }
    }

    #[test]
    fn supply_through_conversion_chain_counts() {
        // Demand on a carrier that is only reachable through two hops.
        let text = r#"
name = "chain"
[[energies]]
name = "gas"
[[energies]]
name = "heat"
[[energies]]
name = "steam"
demand = true
[[grid]]
name = "gas-feed"
energy = "gas"
import = true
cap_step = 1.0
cap_bits = 4
[[converters]]
name = "boiler"
input = "gas"
output = [{ energy = "heat", efficiency = 0.9 }]
unit_size = 1.0
unit_bits = 2
[[converters]]
name = "steamer"
input = "heat"
output = [{ energy = "steam", efficiency = 0.95 }]
unit_size = 1.0
unit_bits = 2
"#;
        assert!(Hub::from_toml_str(text).is_ok());
    }

    #[test]
    fn self_conversion_is_rejected() {
        let text = r#"
name = "loop"
[[energies]]
name = "gas"
[[grid]]
name = "gas-feed"
energy = "gas"
import = true
cap_step = 1.0
cap_bits = 4
[[converters]]
name = "mixer"
input = "gas"
output = [{ energy = "gas", efficiency = 1.0 }]
unit_size = 1.0
unit_bits = 2
"#;
        assert!(matches!(
            Hub::from_toml_str(text),
            Err(HubError::Parse(msg)) if msg.contains("itself")
        ));
    }
}
