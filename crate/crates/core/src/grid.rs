//! Geo-referenced transmission grid and topological load loss.
//!
//! Only the `mpc.bus`, `mpc.gen` and `mpc.branch` matrices of a MATPOWER
//! case are read; everything else in the file is skipped.

use std::collections::HashMap;
use std::io::Read;

use thiserror::Error;

use crate::geo::GeoPoint;

/// Endpoints closer than this (degrees) mark an internal substation connection.
pub const ZERO_LENGTH_TOL_DEG: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("case is missing the `mpc.{0}` matrix")]
    MissingBlock(&'static str),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("case has no reference (type 3) bus")]
    NoReferenceBus,
    #[error("coordinates: {0}")]
    Coords(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bus {0} has no coordinates")]
    Unlocated(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
    Isolated,
}

impl BusType {
    fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            _ if code.fract() != 0.0 => None,
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Ref),
            4 => Some(BusType::Isolated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u64,
    pub bus_type: BusType,
    pub load_mw: f64,
    pub location: Option<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// 1-based row index in the case's branch matrix.
    pub id: usize,
    pub from_bus: u64,
    pub to_bus: u64,
    pub in_service_initially: bool,
    pub is_transformer: bool,
    /// Cannot be failed by wind (transformer or zero-length span).
    pub wind_exempt: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: u64,
    pub pmax_mw: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    bus_index: HashMap<u64, usize>,
    // endpoints as bus indices, parallel to `branches`
    edges: Vec<(usize, usize)>,
    gen_capacity_at: Vec<f64>,
    total_load_mw: f64,
    total_gen_mw: f64,
}

/// Line-outage indicator per branch, indexed like [`GridModel::branches`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutageState {
    delta: Vec<bool>,
}

impl OutageState {
    pub fn none(n_branches: usize) -> Self {
        Self {
            delta: vec![false; n_branches],
        }
    }

    pub fn from_flags(delta: Vec<bool>) -> Self {
        Self { delta }
    }

    pub fn is_out(&self, branch_idx: usize) -> bool {
        self.delta[branch_idx]
    }

    pub fn set_out(&mut self, branch_idx: usize) {
        self.delta[branch_idx] = true;
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn count_out(&self) -> usize {
        self.delta.iter().filter(|d| **d).count()
    }

    pub fn flags(&self) -> &[bool] {
        &self.delta
    }
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

/// Collects the numeric rows of `mpc.<name> = [ ... ];`.
fn matrix_block(text: &str, name: &'static str) -> Result<Vec<Row>, GridError> {
    let prefix = format!("mpc.{name}");
    let mut rows = Vec::new();
    let mut inside = false;
    let mut found = false;
    let mut width: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let code = raw.split('%').next().unwrap_or("");
        let mut body = code;
        if !inside {
            let t = code.trim_start();
            let Some(rest) = t.strip_prefix(&prefix) else { continue };
            let rest = rest.trim_start();
            let Some(rest) = rest.strip_prefix('=') else { continue };
            let Some(rest) = rest.trim_start().strip_prefix('[') else { continue };
            inside = true;
            found = true;
            body = rest;
        }
        let (data, closed) = match body.find(']') {
            Some(pos) => (&body[..pos], true),
            None => (body, false),
        };
        for chunk in data.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            let values = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>().map_err(|_| GridError::Parse {
                        line,
                        msg: format!("mpc.{name}: `{s}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(GridError::Parse {
                        line,
                        msg: format!("mpc.{name}: ragged row with {} columns, expected {w}", values.len()),
                    })
                }
                _ => {}
            }
            rows.push(Row { line, values });
        }
        if closed {
            return Ok(rows);
        }
    }
    if found {
        Err(GridError::Parse {
            line: text.lines().count(),
            msg: format!("mpc.{name} matrix is not terminated by `];`"),
        })
    } else {
        Err(GridError::MissingBlock(name))
    }
}

fn need_cols(row: &Row, n: usize, block: &str) -> Result<(), GridError> {
    if row.values.len() < n {
        return Err(GridError::Parse {
            line: row.line,
            msg: format!("mpc.{block} rows need at least {n} columns, found {}", row.values.len()),
        });
    }
    Ok(())
}

fn as_bus_id(v: f64, line: usize) -> Result<u64, GridError> {
    if v < 1.0 || v.fract() != 0.0 {
        return Err(GridError::Parse {
            line,
            msg: format!("`{v}` is not a valid bus number"),
        });
    }
    Ok(v as u64)
}

/// Parses the bus, generator and branch matrices of a MATPOWER case.
pub fn parse_case(text: &str) -> Result<GridModel, GridError> {
    let bus_rows = matrix_block(text, "bus")?;
    let gen_rows = matrix_block(text, "gen")?;
    let branch_rows = matrix_block(text, "branch")?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        need_cols(row, 3, "bus")?;
        let id = as_bus_id(row.values[0], row.line)?;
        let bus_type = BusType::from_code(row.values[1]).ok_or_else(|| GridError::Parse {
            line: row.line,
            msg: format!("bus {id}: unknown bus type {}", row.values[1]),
        })?;
        let load_mw = row.values[2];
        if !(load_mw >= 0.0) {
            return Err(GridError::Parse {
                line: row.line,
                msg: format!("bus {id}: negative load {load_mw} MW"),
            });
        }
        buses.push(Bus {
            id,
            bus_type,
            load_mw,
            location: None,
        });
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for row in &gen_rows {
        need_cols(row, 9, "gen")?;
        generators.push((
            row.line,
            Generator {
                bus: as_bus_id(row.values[0], row.line)?,
                pmax_mw: row.values[8],
                in_service: row.values[7] > 0.0,
            },
        ));
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (i, row) in branch_rows.iter().enumerate() {
        need_cols(row, 11, "branch")?;
        let from_bus = as_bus_id(row.values[0], row.line)?;
        let to_bus = as_bus_id(row.values[1], row.line)?;
        if from_bus == to_bus {
            return Err(GridError::Parse {
                line: row.line,
                msg: format!("branch {} connects bus {from_bus} to itself", i + 1),
            });
        }
        branches.push((
            row.line,
            Branch {
                id: i + 1,
                from_bus,
                to_bus,
                in_service_initially: row.values[10] > 0.0,
                is_transformer: row.values[8] != 0.0,
                wind_exempt: row.values[8] != 0.0,
            },
        ));
    }

    GridModel::assemble(buses, generators, branches)
}

impl GridModel {
    fn assemble(
        buses: Vec<Bus>,
        generators: Vec<(usize, Generator)>,
        branches: Vec<(usize, Branch)>,
    ) -> Result<Self, GridError> {
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if bus_index.insert(b.id, i).is_some() {
                return Err(GridError::Parse {
                    line: 0,
                    msg: format!("duplicate bus id {}", b.id),
                });
            }
        }
        if !buses.iter().any(|b| b.bus_type == BusType::Ref) {
            return Err(GridError::NoReferenceBus);
        }
        let mut gen_capacity_at = vec![0.0; buses.len()];
        let mut gens = Vec::with_capacity(generators.len());
        for (line, g) in generators {
            let idx = *bus_index.get(&g.bus).ok_or_else(|| GridError::Parse {
                line,
                msg: format!("generator at unknown bus {}", g.bus),
            })?;
            if g.in_service {
                gen_capacity_at[idx] += g.pmax_mw;
            }
            gens.push(g);
        }
        let mut edges = Vec::with_capacity(branches.len());
        let mut brs = Vec::with_capacity(branches.len());
        for (line, br) in branches {
            let lookup = |bus: u64| {
                bus_index.get(&bus).copied().ok_or_else(|| GridError::Parse {
                    line,
                    msg: format!("branch {} references unknown bus {bus}", br.id),
                })
            };
            edges.push((lookup(br.from_bus)?, lookup(br.to_bus)?));
            brs.push(br);
        }
        let total_load_mw = buses.iter().map(|b| b.load_mw).sum();
        let total_gen_mw = gens.iter().map(|g| g.pmax_mw).sum();
        Ok(Self {
            buses,
            branches: brs,
            generators: gens,
            bus_index,
            edges,
            gen_capacity_at,
            total_load_mw,
            total_gen_mw,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn bus(&self, id: u64) -> Option<&Bus> {
        self.bus_index.get(&id).map(|&i| &self.buses[i])
    }

    pub fn total_load_mw(&self) -> f64 {
        self.total_load_mw
    }

    /// Sum of Pmax over all generator rows.
    pub fn total_gen_mw(&self) -> f64 {
        self.total_gen_mw
    }

    pub fn load_count(&self) -> usize {
        self.buses.iter().filter(|b| b.load_mw != 0.0).count()
    }

    /// Branches that wind can fail.
    pub fn exposed_line_count(&self) -> usize {
        self.branches.iter().filter(|b| !b.wind_exempt).count()
    }

    pub fn is_located(&self) -> bool {
        self.buses.iter().all(|b| b.location.is_some())
    }

    /// Endpoint coordinates of a branch, by index.
    pub fn branch_endpoints(&self, idx: usize) -> Result<(GeoPoint, GeoPoint), GridError> {
        let (a, b) = self.edges[idx];
        let loc = |i: usize| self.buses[i].location.ok_or(GridError::Unlocated(self.buses[i].id));
        Ok((loc(a)?, loc(b)?))
    }

    /// Attaches bus coordinates from a `bus_id,lat_deg,lon_deg` CSV.
    ///
    /// Zero-length branches become wind-exempt.
    pub fn with_coordinates<R: Read>(mut self, input: R) -> Result<Self, GridError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["bus_id", "lat_deg", "lon_deg"] {
            return Err(GridError::Coords(format!(
                "expected header `bus_id,lat_deg,lon_deg`, found `{}`",
                header.join(",")
            )));
        }
        let mut seen = vec![false; self.buses.len()];
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let num = |j: usize| -> Result<f64, GridError> {
                let raw = rec.get(j).unwrap_or("");
                raw.parse::<f64>()
                    .map_err(|_| GridError::Coords(format!("row {row}: `{raw}` is not a number")))
            };
            let id_raw = rec.get(0).unwrap_or("");
            let id: u64 = id_raw
                .parse()
                .map_err(|_| GridError::Coords(format!("row {row}: `{id_raw}` is not a bus id")))?;
            let &idx = self
                .bus_index
                .get(&id)
                .ok_or_else(|| GridError::Coords(format!("row {row}: unknown bus {id}")))?;
            if seen[idx] {
                return Err(GridError::Coords(format!("row {row}: duplicate bus {id}")));
            }
            seen[idx] = true;
            let p = GeoPoint::new(num(1)?, num(2)?)
                .map_err(|e| GridError::Coords(format!("row {row}: bus {id}: {e}")))?;
            self.buses[idx].location = Some(p);
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(GridError::Coords(format!("bus {} has no coordinates", self.buses[i].id)));
        }
        for (br, &(a, b)) in self.branches.iter_mut().zip(&self.edges) {
            let (pa, pb) = (self.buses[a].location, self.buses[b].location);
            let zero_len = matches!((pa, pb), (Some(pa), Some(pb)) if pa.approx_eq(&pb, ZERO_LENGTH_TOL_DEG));
            br.wind_exempt = br.is_transformer || zero_len;
        }
        Ok(self)
    }

    /// Load (MW) cut off from the main grid when the flagged branches are out.
    ///
    /// The main grid is the component holding the reference bus. If reference
    /// buses end up in different components, the one with the most in-service
    /// generation capacity wins, ties going to the lowest reference bus id.
    pub fn disconnected_load(&self, outages: &OutageState) -> f64 {
        let mut dsu = DisjointSets::new(self.buses.len());
        for (i, (br, &(a, b))) in self.branches.iter().zip(&self.edges).enumerate() {
            if br.in_service_initially && !outages.is_out(i) {
                dsu.union(a, b);
            }
        }
        let main = self.main_component(&mut dsu);
        let mut lost = 0.0;
        for (i, bus) in self.buses.iter().enumerate() {
            if dsu.find(i) != main {
                lost += bus.load_mw;
            }
        }
        lost
    }

    fn main_component(&self, dsu: &mut DisjointSets) -> usize {
        // (root, lowest ref id)
        let mut candidates: Vec<(usize, u64)> = Vec::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if bus.bus_type != BusType::Ref {
                continue;
            }
            let root = dsu.find(i);
            match candidates.iter_mut().find(|c| c.0 == root) {
                Some(c) => c.1 = c.1.min(bus.id),
                None => candidates.push((root, bus.id)),
            }
        }
        if candidates.len() == 1 {
            return candidates[0].0;
        }
        let mut capacity: HashMap<usize, f64> = candidates.iter().map(|c| (c.0, 0.0)).collect();
        for (i, cap) in self.gen_capacity_at.iter().enumerate() {
            if *cap != 0.0 {
                if let Some(total) = capacity.get_mut(&dsu.find(i)) {
                    *total += cap;
                }
            }
        }
        candidates
            .iter()
            .max_by(|a, b| {
                capacity[&a.0]
                    .total_cmp(&capacity[&b.0])
                    .then_with(|| b.1.cmp(&a.1))
            })
            .map(|c| c.0)
            .expect("at least one reference bus")
    }
}

/// Attaches coordinates to a parsed case; see [`GridModel::with_coordinates`].
pub fn load_geo<R: Read>(input: R, model: GridModel) -> Result<GridModel, GridError> {
    model.with_coordinates(input)
}

/// See [`GridModel::disconnected_load`].
pub fn disconnected_load(model: &GridModel, outages: &OutageState) -> f64 {
    model.disconnected_load(outages)
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}
