//! Inference energy from operation counts and per-multiplier energy costs,
//! and the accuracy/energy trade-off ranking built on it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::data::{DatasetName, SweepResult};
use crate::error::{Error, Result};
use crate::qnn::{ArchSpec, QuantModel};

/// Reserved table key holding the energy of one accumulation.
pub const ADDER_KEY: &str = "__adder__";

/// The energy table shipped with the library. Its values are modelled, not
/// measured: see the header of the file for how they were derived.
pub const SHIPPED_TABLE: &str = include_str!("../tables/energy_surrogate.txt");

/// Energy per multiplication, by multiplier name, plus one adder cost.
///
/// Text form: one `name joules` pair per line, `#` starts a comment, and the
/// reserved key `__adder__` sets the accumulation energy (0 if absent).
/// Comment lines of the form `# @source: ...` and `# @node: ...` are kept as
/// metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    multipliers: BTreeMap<String, f64>,
    adder: f64,
    source: Option<String>,
    node: Option<String>,
}

impl EnergyTable {
    pub fn new(multipliers: BTreeMap<String, f64>, adder: f64) -> Result<Self> {
        if let Some((name, e)) = multipliers.iter().find(|(_, &e)| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Argument(format!("energy of {name} must be positive, got {e}")));
        }
        if !(adder >= 0.0 && adder.is_finite()) {
            return Err(Error::Argument(format!(
                "adder energy must be non-negative, got {adder}"
            )));
        }
        Ok(EnergyTable {
            multipliers,
            adder,
            source: None,
            node: None,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut multipliers = BTreeMap::new();
        let mut adder = None;
        let mut source = None;
        let mut node = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("@source:") {
                    source = Some(v.trim().to_string());
                } else if let Some(v) = comment.strip_prefix("@node:") {
                    node = Some(v.trim().to_string());
                }
                continue;
            }
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Format(format!(
                    "energy table line {line_no}: expected `name joules`, got {raw:?}"
                )));
            };
            let e: f64 = value
                .parse()
                .map_err(|_| Error::Format(format!("energy table line {line_no}: bad number {value:?}")))?;
            let valid = e.is_finite() && (e > 0.0 || (name == ADDER_KEY && e == 0.0));
            if !valid {
                return Err(Error::Format(format!(
                    "energy table line {line_no}: energy of {name} must be positive, got {e}"
                )));
            }
            let duplicate = if name == ADDER_KEY {
                adder.replace(e).is_some()
            } else {
                multipliers.insert(name.to_string(), e).is_some()
            };
            if duplicate {
                return Err(Error::Format(format!(
                    "energy table line {line_no}: duplicate entry {name}"
                )));
            }
        }
        Ok(EnergyTable {
            multipliers,
            adder: adder.unwrap_or(0.0),
            source,
            node,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_TABLE).expect("shipped energy table parses")
    }

    /// Energy of one multiplication with `name`.
    pub fn multiplier(&self, name: &str) -> Result<f64> {
        self.multipliers
            .get(name)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("no energy entry for multiplier {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.multipliers.contains_key(name)
    }

    pub fn adder(&self) -> f64 {
        self.adder
    }

    /// Energy of one multiply-accumulate with `name`.
    pub fn mac(&self, name: &str) -> Result<f64> {
        Ok(self.multiplier(name)? + self.adder)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.multipliers.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn node(&self) -> Option<&str> {
        self.node.as_deref()
    }

    /// Every energy multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut t = Self::new(
            self.multipliers.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
            self.adder * factor,
        )?;
        t.source.clone_from(&self.source);
        t.node.clone_from(&self.node);
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.source {
            out.push_str(&format!("# @source: {s}\n"));
        }
        if let Some(n) = &self.node {
            out.push_str(&format!("# @node: {n}\n"));
        }
        out.push_str(&format!("{ADDER_KEY} {:e}\n", self.adder));
        for (k, v) in &self.multipliers {
            out.push_str(&format!("{k} {v:e}\n"));
        }
        out
    }
}

/// Energy in joules to classify `num_images` images with `qm`.
pub fn estimate_energy(qm: &QuantModel, multiplier: &str, table: &EnergyTable, num_images: u64) -> Result<f64> {
    network_energy(&qm.spec, multiplier, table, num_images)
}

/// Energy depends only on the architecture's operation count, not on the
/// weights or on any injected fault.
pub fn network_energy(spec: &ArchSpec, multiplier: &str, table: &EnergyTable, num_images: u64) -> Result<f64> {
    Ok(num_images as f64 * spec.macs_per_image() as f64 * table.mac(multiplier)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    High,
    Low,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::High => "high",
            Level::Low => "low",
        })
    }
}

/// One multiplier's position in the accuracy/energy plane of a
/// (dataset, architecture) group.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub dataset: DatasetName,
    pub arch: u8,
    pub multiplier: String,
    /// Fault-free accuracy, if a baseline row was present.
    pub baseline_accuracy: Option<f64>,
    /// Mean accuracy over the fault rows, or the baseline when there are none.
    pub accuracy_under_fault: f64,
    pub fault_points: usize,
    /// Energy per classified image.
    pub energy_per_image_j: f64,
    /// No other multiplier in the group is at least as accurate and at most
    /// as costly, and strictly better on one of the two.
    pub pareto: bool,
    /// Relative to the group median (ties count as high).
    pub accuracy_level: Level,
    pub energy_level: Level,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Joins sweep accuracy with table energy per multiplier and flags the
/// Pareto set and median corners. Rows are grouped by (dataset, arch) and,
/// within a group, ordered by decreasing accuracy under fault.
pub fn rank_tradeoff(rows: &[SweepResult], table: &EnergyTable) -> Result<Vec<TradeoffRow>> {
    if rows.is_empty() {
        return Err(Error::Argument("no sweep results to rank".into()));
    }
    #[derive(Default)]
    struct Acc {
        baseline: Option<f64>,
        fault_sum: f64,
        faults: usize,
    }
    let mut groups: BTreeMap<(DatasetName, u8), BTreeMap<&str, Acc>> = BTreeMap::new();
    for r in rows {
        let acc = groups
            .entry((r.dataset, r.arch))
            .or_default()
            .entry(r.multiplier.as_str())
            .or_default();
        if r.is_baseline() {
            acc.baseline = Some(r.accuracy);
        } else {
            acc.fault_sum += r.accuracy;
            acc.faults += 1;
        }
    }

    let mut out = Vec::new();
    for ((dataset, arch), mults) in groups {
        let spec = ArchSpec::reference(dataset, arch)?;
        let mut group = Vec::with_capacity(mults.len());
        for (name, acc) in mults {
            let accuracy_under_fault = if acc.faults > 0 {
                acc.fault_sum / acc.faults as f64
            } else {
                acc.baseline.expect("every multiplier has a row")
            };
            group.push(TradeoffRow {
                dataset,
                arch,
                multiplier: name.to_string(),
                baseline_accuracy: acc.baseline,
                accuracy_under_fault,
                fault_points: acc.faults,
                energy_per_image_j: network_energy(&spec, name, table, 1)?,
                pareto: false,
                accuracy_level: Level::High,
                energy_level: Level::High,
            });
        }
        let acc_median = median(&mut group.iter().map(|r| r.accuracy_under_fault).collect::<Vec<_>>());
        let energy_median = median(&mut group.iter().map(|r| r.energy_per_image_j).collect::<Vec<_>>());
        let points: Vec<(f64, f64)> = group
            .iter()
            .map(|r| (r.accuracy_under_fault, r.energy_per_image_j))
            .collect();
        for r in &mut group {
            let (a, e) = (r.accuracy_under_fault, r.energy_per_image_j);
            r.pareto = !points.iter().any(|&(oa, oe)| oa >= a && oe <= e && (oa > a || oe < e));
            r.accuracy_level = if a >= acc_median { Level::High } else { Level::Low };
            r.energy_level = if e >= energy_median { Level::High } else { Level::Low };
        }
        group.sort_by(|x, y| {
            y.accuracy_under_fault
                .total_cmp(&x.accuracy_under_fault)
                .then_with(|| x.multiplier.cmp(&y.multiplier))
        });
        out.extend(group);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{PrunedArray, SURROGATE_NAMES};
    use crate::fault::FaultType;
    use crate::qnn::{Activation, FloatModel};
    use ndarray::Array2;
    use rand::SeedableRng;

    fn table(entries: &[(&str, f64)], adder: f64) -> EnergyTable {
        EnergyTable::new(entries.iter().map(|&(k, v)| (k.to_string(), v)).collect(), adder).unwrap()
    }

    fn row(mult: &str, fault: bool, accuracy: f64) -> SweepResult {
        SweepResult {
            dataset: DatasetName::Mnist,
            arch: 1,
            multiplier: mult.into(),
            fault_type: fault.then_some(FaultType::StuckAt1),
            bit: fault.then_some(10),
            layer: fault.then_some(1),
            accuracy,
            accuracy_loss: 0.0,
            energy_j: 0.0,
            images: 100,
        }
    }

    fn arch1_model() -> QuantModel {
        let spec = ArchSpec::reference(DatasetName::Mnist, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let fm = FloatModel::init(spec, &mut rng);
        let calib = Array2::from_elem((2, 784), 0.5);
        crate::qnn::quantize(&fm, calib.view()).unwrap()
    }

    #[test]
    fn mac_count_energy() {
        let qm = arch1_model();
        let t = table(&[("unit", 1.0)], 0.0);
        assert_eq!(estimate_energy(&qm, "unit", &t, 1).unwrap(), 334_336.0);
        assert_eq!(estimate_energy(&qm, "unit", &t, 2).unwrap(), 668_672.0);
        let t = table(&[("unit", 1.0)], 0.5);
        assert_eq!(estimate_energy(&qm, "unit", &t, 1).unwrap(), 1.5 * 334_336.0);
        assert!(matches!(estimate_energy(&qm, "missing", &t, 1), Err(Error::Lookup(_))));
    }

    #[test]
    fn parse_table_text() {
        let t = EnergyTable::parse(
            "# header\n# @source: test data\n# @node: 45nm\n\n__adder__ 1e-14\nA 2.5e-13 # inline\nB\t1e-13\n",
        )
        .unwrap();
        assert_eq!(t.multiplier("A").unwrap(), 2.5e-13);
        assert_eq!(t.adder(), 1e-14);
        assert_eq!(t.source(), Some("test data"));
        assert_eq!(t.node(), Some("45nm"));
        assert_eq!(EnergyTable::parse(&t.to_text()).unwrap(), t);
        for bad in ["A", "A 1 2", "A x", "A -1", "A 0", "A 1\nA 2", "A inf"] {
            assert!(matches!(EnergyTable::parse(bad), Err(Error::Format(_))), "{bad}");
        }
        assert_eq!(EnergyTable::parse("A 1").unwrap().adder(), 0.0);
    }

    #[test]
    fn shipped_table_orders_by_hardware() {
        let t = EnergyTable::shipped();
        assert!(t.source().is_some());
        let accurate = t.multiplier("accurate").unwrap();
        for name in SURROGATE_NAMES {
            let e = t.multiplier(name).unwrap();
            assert!(e <= accurate, "{name}");
            let kept = PrunedArray::preset(name).unwrap().retained_fraction();
            assert!((e / accurate - kept).abs() < 1e-3, "{name}");
        }
        for pair in SURROGATE_NAMES.windows(2) {
            assert!(t.multiplier(pair[1]).unwrap() <= t.multiplier(pair[0]).unwrap());
        }
    }

    #[test]
    fn pareto_flags() {
        let t = table(&[("a", 2.0), ("b", 1.0)], 0.0);
        let single = rank_tradeoff(&[row("a", false, 90.0)], &t).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].pareto);

        // b is more accurate and cheaper: a is dominated.
        let rows = [
            row("a", false, 90.0),
            row("a", true, 50.0),
            row("b", false, 95.0),
            row("b", true, 70.0),
        ];
        let ranked = rank_tradeoff(&rows, &t).unwrap();
        assert_eq!(ranked[0].multiplier, "b");
        assert!(ranked[0].pareto);
        assert!(!ranked[1].pareto);
        assert_eq!(ranked[1].accuracy_under_fault, 50.0);
        assert_eq!(ranked[1].baseline_accuracy, Some(90.0));
        assert_eq!(ranked[1].fault_points, 1);
        assert_eq!(ranked[1].energy_level, Level::High);
        assert_eq!(ranked[0].energy_level, Level::Low);

        assert!(matches!(
            rank_tradeoff(&[row("zzz", false, 1.0)], &t),
            Err(Error::Lookup(_))
        ));
        assert!(rank_tradeoff(&[], &t).is_err());
    }

    #[test]
    fn uniform_scaling_keeps_pareto_set() {
        let t = table(&[("a", 3.0), ("b", 2.0), ("c", 1.0), ("d", 2.5)], 0.1);
        let rows = [
            row("a", true, 80.0),
            row("b", true, 75.0),
            row("c", true, 60.0),
            row("d", true, 70.0),
        ];
        let flags = |t: &EnergyTable| -> Vec<(String, bool)> {
            rank_tradeoff(&rows, t)
                .unwrap()
                .into_iter()
                .map(|r| (r.multiplier, r.pareto))
                .collect()
        };
        let base = flags(&t);
        assert_eq!(
            base.iter()
                .filter(|(_, p)| !p)
                .map(|(m, _)| m.as_str())
                .collect::<Vec<_>>(),
            ["d"]
        );
        for k in [1e-3, 0.5, 7.0, 1e9] {
            assert_eq!(flags(&t.scaled(k).unwrap()), base);
        }
    }

    #[test]
    fn energy_is_fault_and_weight_independent() {
        let spec = ArchSpec::new(vec![4, 3, 2], Activation::Tanh).unwrap();
        let t = table(&[("m", 1e-12)], 1e-13);
        let e = network_energy(&spec, "m", &t, 10).unwrap();
        assert!((e - 10.0 * 18.0 * 1.1e-12).abs() < 1e-20);
    }
}
