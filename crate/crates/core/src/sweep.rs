//! Experiment grids: every combination of dataset, architecture, multiplier
//! and stuck-at fault, evaluated on a fixed test subset, plus plot-ready
//! summaries of the results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::arith::MultiplierModel;
use crate::data::{Dataset, DatasetName, SweepResult};
use crate::energy::{estimate_energy, rank_tradeoff, EnergyTable};
use crate::error::{Error, Result};
use crate::fault::{FaultScope, FaultSite, FaultType, MAX_BIT, MIN_BIT};
use crate::qnn::{accuracy_loss, Inference, QuantModel};
use crate::systolic::{SystolicArray, SystolicConfig};

use ndarray::Array2;

/// The accurate multiplier followed by the ten approximate ones, from most to
/// least accurate.
pub const DEFAULT_MULTIPLIERS: [&str; 11] = [
    "accurate", "KVA", "KVB", "KVL", "KX2", "KRC", "KR6", "L2H", "L1G", "KTY", "L2D",
];

/// Bit positions of the desk-scale grid.
pub const DESK_BITS: [u8; 6] = [1, 4, 7, 10, 13, 16];

/// Test images evaluated per grid point in the desk-scale grid.
pub const DESK_SUBSET: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub datasets: Vec<DatasetName>,
    pub archs: Vec<u8>,
    pub multipliers: Vec<String>,
    pub fault_types: Vec<FaultType>,
    pub bits: Vec<u8>,
    pub layers: Vec<usize>,
    pub scope: FaultScope,
    /// Images drawn from each test set; `None` evaluates all of them.
    pub subset: Option<usize>,
    /// Seed of the subset draw.
    pub seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self::desk()
    }
}

impl SweepGrid {
    /// MNIST, architecture 1, all default multipliers, both fault types,
    /// bits {1,4,7,10,13,16}, layers 1-4, on 1,000 test images.
    pub fn desk() -> Self {
        SweepGrid {
            datasets: vec![DatasetName::Mnist],
            archs: vec![1],
            multipliers: DEFAULT_MULTIPLIERS.iter().map(|s| s.to_string()).collect(),
            fault_types: vec![FaultType::StuckAt0, FaultType::StuckAt1],
            bits: DESK_BITS.to_vec(),
            layers: vec![1, 2, 3, 4],
            scope: FaultScope::AllMultiplications,
            subset: Some(DESK_SUBSET),
            seed: 0,
        }
    }

    /// Both datasets and architectures, all 16 bits, full test sets.
    pub fn full() -> Self {
        SweepGrid {
            datasets: vec![DatasetName::Mnist, DatasetName::FashionMnist],
            archs: vec![1, 2],
            bits: (MIN_BIT..=MAX_BIT).collect(),
            subset: None,
            ..Self::desk()
        }
    }

    /// Number of faulty rows the grid produces.
    pub fn fault_points(&self) -> usize {
        self.datasets.len()
            * self.archs.len()
            * self.multipliers.len()
            * self.fault_types.len()
            * self.bits.len()
            * self.layers.len()
    }

    /// Number of fault-free rows: one per (dataset, arch, multiplier).
    pub fn baseline_points(&self) -> usize {
        self.datasets.len() * self.archs.len() * self.multipliers.len()
    }

    /// Checks the grid on its own, without any models or data.
    pub fn validate(&self) -> Result<()> {
        fn axis<T: Ord + fmt::Debug>(name: &str, values: &[T]) -> Result<()> {
            if values.is_empty() {
                return Err(Error::Config(format!("sweep axis {name} is empty")));
            }
            if values.iter().collect::<BTreeSet<_>>().len() != values.len() {
                return Err(Error::Config(format!("sweep axis {name} repeats a value: {values:?}")));
            }
            Ok(())
        }
        axis("datasets", &self.datasets)?;
        axis("archs", &self.archs)?;
        axis("multipliers", &self.multipliers)?;
        axis("fault types", &self.fault_types)?;
        axis("bits", &self.bits)?;
        axis("layers", &self.layers)?;
        if let Some(a) = self.archs.iter().find(|a| !matches!(a, 1 | 2)) {
            return Err(Error::Config(format!("architecture {a} is not 1 or 2")));
        }
        if let Some(b) = self.bits.iter().find(|b| !(MIN_BIT..=MAX_BIT).contains(*b)) {
            return Err(Error::Config(format!("bit {b} outside {MIN_BIT}..={MAX_BIT}")));
        }
        if self.layers.contains(&0) {
            return Err(Error::Config("layer numbers start at 1".into()));
        }
        if self.subset == Some(0) {
            return Err(Error::Config("subset must hold at least one image".into()));
        }
        Ok(())
    }
}

/// Everything a sweep reads. All of it is shared read-only between workers.
#[derive(Debug, Clone)]
pub struct SweepInputs {
    pub models: BTreeMap<(DatasetName, u8), QuantModel>,
    pub test_sets: BTreeMap<DatasetName, Dataset>,
    pub multipliers: BTreeMap<String, MultiplierModel>,
    pub energy: EnergyTable,
    pub array: SystolicConfig,
}

impl SweepInputs {
    /// Checks that every grid point can be evaluated, before doing any work.
    pub fn check(&self, grid: &SweepGrid) -> Result<()> {
        grid.validate()?;
        for name in &grid.multipliers {
            if !self.multipliers.contains_key(name) {
                return Err(Error::Config(format!("multiplier {name:?} is not loaded")));
            }
            if !self.energy.contains(name) {
                return Err(Error::Config(format!("energy table has no entry for {name:?}")));
            }
        }
        for &ds in &grid.datasets {
            let test = self
                .test_sets
                .get(&ds)
                .ok_or_else(|| Error::Config(format!("no test set loaded for {ds}")))?;
            if let Some(n) = grid.subset {
                if n > test.len() {
                    return Err(Error::Config(format!(
                        "subset of {n} images exceeds the {} {ds} test images",
                        test.len()
                    )));
                }
            }
            for &arch in &grid.archs {
                let qm = self
                    .models
                    .get(&(ds, arch))
                    .ok_or_else(|| Error::Config(format!("no quantized model for {ds} arch {arch}")))?;
                if qm.spec.inputs() != test.features() {
                    return Err(Error::Config(format!(
                        "{ds} arch {arch} model takes {} inputs, images have {}",
                        qm.spec.inputs(),
                        test.features()
                    )));
                }
                for &ft in &grid.fault_types {
                    for &layer in &grid.layers {
                        FaultSite::new(ft, grid.bits[0], layer, grid.scope)
                            .and_then(|f| f.validate(qm.spec.num_layers(), self.array.rows, self.array.cols))
                            .map_err(|e| Error::Config(format!("{ds} arch {arch}: {e}")))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fault-free state of one (dataset, arch, multiplier) combination: the
/// int8 activations entering every layer and the baseline accuracy.
struct Prefix<'a> {
    dataset: DatasetName,
    arch: u8,
    multiplier: &'a str,
    qm: &'a QuantModel,
    labels: &'a [u8],
    activations: Vec<Array2<i8>>,
    baseline: f64,
    energy_j: f64,
}

fn build_prefix<'a>(
    grid: &SweepGrid,
    inputs: &'a SweepInputs,
    samples: &'a BTreeMap<DatasetName, Dataset>,
    (dataset, arch, multiplier): (DatasetName, u8, &'a str),
) -> Result<Prefix<'a>> {
    let qm = &inputs.models[&(dataset, arch)];
    let data = &samples[&dataset];
    let clean = SystolicArray::new(inputs.array, &inputs.multipliers[multiplier], None)?;
    let deepest = grid.layers.iter().copied().max().unwrap_or(1);
    let mut activations = vec![data.images.clone()];
    for layer in 1..deepest {
        let next = qm.run_hidden(&clean, activations[layer - 1].view(), layer, layer)?;
        activations.push(next);
    }
    let baseline = Inference::score(qm.predict_from(&clean, data.images.view(), 1)?, &data.labels).accuracy;
    Ok(Prefix {
        dataset,
        arch,
        multiplier,
        qm,
        labels: &data.labels,
        activations,
        baseline,
        energy_j: estimate_energy(qm, multiplier, &inputs.energy, data.len() as u64)?,
    })
}

fn evaluate_fault(
    prefix: &Prefix,
    inputs: &SweepInputs,
    scope: FaultScope,
    (fault_type, bit, layer): (FaultType, u8, usize),
) -> Result<SweepResult> {
    let fault = FaultSite::new(fault_type, bit, layer, scope)?;
    let array = SystolicArray::new(inputs.array, &inputs.multipliers[prefix.multiplier], Some(fault))?;
    let predictions = prefix
        .qm
        .predict_from(&array, prefix.activations[layer - 1].view(), layer)?;
    let accuracy = Inference::score(predictions, prefix.labels).accuracy;
    Ok(SweepResult {
        dataset: prefix.dataset,
        arch: prefix.arch,
        multiplier: prefix.multiplier.to_string(),
        fault_type: Some(fault_type),
        bit: Some(bit),
        layer: Some(layer),
        accuracy,
        accuracy_loss: accuracy_loss(prefix.baseline, accuracy),
        energy_j: prefix.energy_j,
        images: prefix.labels.len(),
    })
}

/// Evaluates every grid point. Each (dataset, arch, multiplier) yields one
/// baseline row followed by its fault rows ordered by fault type, layer and
/// bit, all in grid order. `workers` bounds the thread count (`None` uses
/// all cores); the output does not depend on it.
pub fn run_sweep(grid: &SweepGrid, inputs: &SweepInputs, workers: Option<usize>) -> Result<Vec<SweepResult>> {
    inputs.check(grid)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| Error::Internal(e.to_string()))?;
    pool.install(|| sweep_in_pool(grid, inputs))
}

fn sweep_in_pool(grid: &SweepGrid, inputs: &SweepInputs) -> Result<Vec<SweepResult>> {
    let samples: BTreeMap<DatasetName, Dataset> = grid
        .datasets
        .iter()
        .map(|&ds| {
            let test = &inputs.test_sets[&ds];
            let sample = match grid.subset {
                Some(n) => test.sample(n, grid.seed)?,
                None => test.clone(),
            };
            Ok((ds, sample))
        })
        .collect::<Result<_>>()?;

    let combos: Vec<(DatasetName, u8, &str)> = grid
        .datasets
        .iter()
        .flat_map(|&ds| {
            grid.archs
                .iter()
                .flat_map(move |&arch| grid.multipliers.iter().map(move |m| (ds, arch, m.as_str())))
        })
        .collect();
    let prefixes: Vec<Prefix> = combos
        .into_par_iter()
        .map(|c| build_prefix(grid, inputs, &samples, c))
        .collect::<Result<_>>()?;

    let points: Vec<(FaultType, u8, usize)> = grid
        .fault_types
        .iter()
        .flat_map(|&ft| {
            grid.layers
                .iter()
                .flat_map(move |&layer| grid.bits.iter().map(move |&bit| (ft, bit, layer)))
        })
        .collect();
    let jobs: Vec<(usize, (FaultType, u8, usize))> = (0..prefixes.len())
        .flat_map(|p| points.iter().map(move |&pt| (p, pt)))
        .collect();
    let faulty: Vec<SweepResult> = jobs
        .into_par_iter()
        .map(|(p, pt)| evaluate_fault(&prefixes[p], inputs, grid.scope, pt))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(prefixes.len() + faulty.len());
    let mut faulty = faulty.into_iter();
    for p in &prefixes {
        rows.push(SweepResult {
            dataset: p.dataset,
            arch: p.arch,
            multiplier: p.multiplier.to_string(),
            fault_type: None,
            bit: None,
            layer: None,
            accuracy: p.baseline,
            accuracy_loss: 0.0,
            energy_j: p.energy_j,
            images: p.labels.len(),
        });
        rows.extend(faulty.by_ref().take(points.len()));
    }
    Ok(rows)
}

/// Plot-ready summaries of a results file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    /// Accuracy against bit position, averaged over layers; one series per
    /// (dataset, arch, multiplier, fault type).
    Bitwise,
    /// Accuracy against bit position with one series per layer.
    Layerwise,
    /// Accuracy under fault against energy, with Pareto and corner flags.
    Tradeoff,
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bitwise" => Ok(ReportKind::Bitwise),
            "layerwise" => Ok(ReportKind::Layerwise),
            "tradeoff" => Ok(ReportKind::Tradeoff),
            _ => Err(Error::Argument(format!(
                "unknown report kind {s:?} (expected bitwise, layerwise or tradeoff)"
            ))),
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportKind::Bitwise => "bitwise",
            ReportKind::Layerwise => "layerwise",
            ReportKind::Tradeoff => "tradeoff",
        })
    }
}

type SeriesKey = (DatasetName, u8, String, FaultType);

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Renders one report as CSV text. The energy table is only needed for
/// [`ReportKind::Tradeoff`].
pub fn report(rows: &[SweepResult], kind: ReportKind, table: Option<&EnergyTable>) -> Result<String> {
    match kind {
        ReportKind::Bitwise => {
            let mut groups: BTreeMap<(SeriesKey, u8), (f64, f64, usize)> = BTreeMap::new();
            for r in rows.iter().filter(|r| !r.is_baseline()) {
                let key = (
                    (r.dataset, r.arch, r.multiplier.clone(), r.fault_type.unwrap()),
                    r.bit.unwrap(),
                );
                let g = groups.entry(key).or_default();
                g.0 += r.accuracy;
                g.1 += r.accuracy_loss;
                g.2 += 1;
            }
            let out = groups
                .into_iter()
                .map(|(((ds, arch, m, ft), bit), (acc, loss, n))| {
                    vec![
                        ds.to_string(),
                        arch.to_string(),
                        m,
                        ft.to_string(),
                        bit.to_string(),
                        n.to_string(),
                        (acc / n as f64).to_string(),
                        (loss / n as f64).to_string(),
                    ]
                })
                .collect();
            csv_text(
                &[
                    "dataset",
                    "arch",
                    "multiplier",
                    "fault_type",
                    "bit",
                    "layers",
                    "mean_accuracy",
                    "mean_accuracy_loss",
                ],
                out,
            )
        }
        ReportKind::Layerwise => {
            let mut faulty: Vec<&SweepResult> = rows.iter().filter(|r| !r.is_baseline()).collect();
            faulty.sort_by(|a, b| {
                (a.dataset, a.arch, &a.multiplier, a.fault_type, a.layer, a.bit).cmp(&(
                    b.dataset,
                    b.arch,
                    &b.multiplier,
                    b.fault_type,
                    b.layer,
                    b.bit,
                ))
            });
            let out = faulty
                .into_iter()
                .map(|r| {
                    vec![
                        r.dataset.to_string(),
                        r.arch.to_string(),
                        r.multiplier.clone(),
                        r.fault_type.unwrap().to_string(),
                        r.layer.unwrap().to_string(),
                        r.bit.unwrap().to_string(),
                        r.accuracy.to_string(),
                        r.accuracy_loss.to_string(),
                    ]
                })
                .collect();
            csv_text(
                &[
                    "dataset",
                    "arch",
                    "multiplier",
                    "fault_type",
                    "layer",
                    "bit",
                    "accuracy",
                    "accuracy_loss",
                ],
                out,
            )
        }
        ReportKind::Tradeoff => {
            let table = table.ok_or_else(|| Error::Config("the tradeoff report needs an energy table".into()))?;
            let out = rank_tradeoff(rows, table)?
                .into_iter()
                .map(|t| {
                    vec![
                        t.dataset.to_string(),
                        t.arch.to_string(),
                        t.multiplier,
                        t.baseline_accuracy.map(|a| a.to_string()).unwrap_or_default(),
                        t.accuracy_under_fault.to_string(),
                        t.fault_points.to_string(),
                        t.energy_per_image_j.to_string(),
                        t.pareto.to_string(),
                        t.accuracy_level.to_string(),
                        t.energy_level.to_string(),
                    ]
                })
                .collect();
            csv_text(
                &[
                    "dataset",
                    "arch",
                    "multiplier",
                    "baseline_accuracy",
                    "accuracy_under_fault",
                    "fault_points",
                    "energy_per_image_j",
                    "pareto",
                    "accuracy_level",
                    "energy_level",
                ],
                out,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{results_to_csv, INPUT_SCALE};
    use crate::qnn::{quantize, Activation, ArchSpec, FloatModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A tiny 784-input network and test set that stand in for the real
    /// ones; the sweep machinery does not care about their size.
    fn inputs() -> SweepInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let spec = ArchSpec::new(vec![784, 12, 10, 8, 10], Activation::Tanh).unwrap();
        let fm = FloatModel::init(spec, &mut rng);
        let images = Array2::from_shape_simple_fn((50, 784), || rng.gen_range(0..=127i8));
        let labels: Vec<u8> = (0..50).map(|_| rng.gen_range(0..10)).collect();
        let qm = quantize(&fm, images.mapv(|v| v as f64 * INPUT_SCALE).view()).unwrap();
        let mut multipliers = BTreeMap::new();
        for name in ["accurate", "KTY"] {
            multipliers.insert(name.to_string(), crate::arith::resolve_multiplier(name, None).unwrap());
        }
        SweepInputs {
            models: [((DatasetName::Mnist, 1), qm)].into_iter().collect(),
            test_sets: [(
                DatasetName::Mnist,
                Dataset {
                    name: DatasetName::Mnist,
                    images,
                    labels,
                },
            )]
            .into_iter()
            .collect(),
            multipliers,
            energy: EnergyTable::shipped(),
            array: SystolicConfig::default(),
        }
    }

    fn small_grid() -> SweepGrid {
        SweepGrid {
            multipliers: vec!["accurate".into(), "KTY".into()],
            bits: vec![4, 16],
            layers: vec![1, 4],
            subset: Some(20),
            ..SweepGrid::desk()
        }
    }

    #[test]
    fn grid_cardinality() {
        // 11 multipliers x 2 fault types x 16 bits x 4 layers x 2 archs x 2 datasets.
        assert_eq!(SweepGrid::full().fault_points(), 5_632);
        assert_eq!(SweepGrid::desk().fault_points(), 11 * 2 * 6 * 4);
        let one = SweepGrid {
            multipliers: vec!["accurate".into()],
            fault_types: vec![FaultType::StuckAt1],
            bits: vec![13],
            layers: vec![1],
            ..SweepGrid::desk()
        };
        assert_eq!(one.fault_points() + one.baseline_points(), 2);
        let rows = run_sweep(
            &SweepGrid {
                subset: Some(10),
                ..one
            },
            &inputs(),
            Some(1),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].is_baseline());
        assert_eq!(rows[0].accuracy_loss, 0.0);
        assert_eq!(rows[0].bit, None);
        assert_eq!(rows[1].bit, Some(13));
        assert_eq!(rows[1].images, 10);
        assert!((rows[1].accuracy_loss - (rows[0].accuracy - rows[1].accuracy)).abs() < 1e-12);
    }

    #[test]
    fn rows_are_canonical_and_worker_independent() {
        let inputs = inputs();
        let grid = small_grid();
        let a = run_sweep(&grid, &inputs, Some(1)).unwrap();
        let b = run_sweep(&grid, &inputs, Some(3)).unwrap();
        assert_eq!(results_to_csv(&a).unwrap(), results_to_csv(&b).unwrap());
        assert_eq!(a.len(), grid.fault_points() + grid.baseline_points());
        let keys: Vec<_> = a
            .iter()
            .map(|r| (r.multiplier.as_str(), r.fault_type, r.layer, r.bit))
            .collect();
        assert_eq!(keys[0], ("accurate", None, None, None));
        assert_eq!(keys[1], ("accurate", Some(FaultType::StuckAt0), Some(1), Some(4)));
        assert_eq!(keys[2], ("accurate", Some(FaultType::StuckAt0), Some(1), Some(16)));
        assert_eq!(keys[3], ("accurate", Some(FaultType::StuckAt0), Some(4), Some(4)));
        assert_eq!(keys[9], ("KTY", None, None, None));
        // Energy does not depend on the fault.
        assert!(a[..9].iter().all(|r| r.energy_j == a[0].energy_j));
        assert!(a[9].energy_j < a[0].energy_j);
    }

    #[test]
    fn prefix_cache_matches_full_inference() {
        let inputs = inputs();
        let grid = small_grid();
        let rows = run_sweep(&grid, &inputs, Some(2)).unwrap();
        let qm = &inputs.models[&(DatasetName::Mnist, 1)];
        let data = inputs.test_sets[&DatasetName::Mnist].sample(20, grid.seed).unwrap();
        for r in rows.iter().filter(|r| !r.is_baseline()) {
            let fault = FaultSite::layer_wide(r.fault_type.unwrap(), r.bit.unwrap(), r.layer.unwrap()).unwrap();
            let direct = crate::qnn::infer(
                qm,
                data.images.view(),
                &data.labels,
                &inputs.multipliers[&r.multiplier],
                Some(&fault),
            )
            .unwrap();
            assert_eq!(direct.accuracy, r.accuracy, "{r:?}");
        }
    }

    #[test]
    fn invalid_grids_fail_before_work() {
        let inputs = inputs();
        let bad = [
            SweepGrid {
                bits: vec![17],
                ..small_grid()
            },
            SweepGrid {
                bits: vec![],
                ..small_grid()
            },
            SweepGrid {
                layers: vec![5],
                ..small_grid()
            },
            SweepGrid {
                archs: vec![2],
                ..small_grid()
            },
            SweepGrid {
                datasets: vec![DatasetName::FashionMnist],
                ..small_grid()
            },
            SweepGrid {
                multipliers: vec!["L2D".into()],
                ..small_grid()
            },
            SweepGrid {
                subset: Some(51),
                ..small_grid()
            },
            SweepGrid {
                scope: FaultScope::SinglePe { row: 8, col: 0 },
                ..small_grid()
            },
            SweepGrid {
                bits: vec![3, 3],
                ..small_grid()
            },
        ];
        for g in bad {
            assert!(
                matches!(run_sweep(&g, &inputs, Some(1)), Err(Error::Config(_))),
                "{g:?}"
            );
        }
        let mut no_energy = inputs.clone();
        no_energy.energy = EnergyTable::parse("accurate 1e-12").unwrap();
        assert!(matches!(
            run_sweep(&small_grid(), &no_energy, Some(1)),
            Err(Error::Config(_))
        ));
    }

    fn fault_row(mult: &str, ft: FaultType, bit: u8, layer: usize, accuracy: f64) -> SweepResult {
        SweepResult {
            dataset: DatasetName::Mnist,
            arch: 1,
            multiplier: mult.into(),
            fault_type: Some(ft),
            bit: Some(bit),
            layer: Some(layer),
            accuracy,
            accuracy_loss: 90.0 - accuracy,
            energy_j: 1.0,
            images: 10,
        }
    }

    #[test]
    fn report_shapes() {
        let one = [fault_row("KVA", FaultType::StuckAt1, 7, 2, 80.0)];
        let bitwise = report(&one, ReportKind::Bitwise, None).unwrap();
        assert_eq!(
            bitwise,
            "dataset,arch,multiplier,fault_type,bit,layers,mean_accuracy,mean_accuracy_loss\nmnist,1,KVA,sa1,7,1,80,10\n"
        );

        let rows: Vec<SweepResult> = [1, 4]
            .into_iter()
            .flat_map(|layer| {
                [FaultType::StuckAt0, FaultType::StuckAt1]
                    .into_iter()
                    .flat_map(move |ft| {
                        [1u8, 16]
                            .into_iter()
                            .map(move |bit| fault_row("KTY", ft, bit, layer, 50.0 + bit as f64))
                    })
            })
            .collect();
        let layerwise = report(&rows, ReportKind::Layerwise, None).unwrap();
        let series: BTreeSet<(String, String)> = layerwise
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[3].to_string(), f[4].to_string())
            })
            .collect();
        assert_eq!(series.len(), 4);
        assert_eq!(series.iter().filter(|(ft, _)| ft == "sa0").count(), 2);

        let bitwise = report(&rows, ReportKind::Bitwise, None).unwrap();
        assert_eq!(bitwise.lines().count(), 1 + 4);
        assert!(bitwise.contains("mnist,1,KTY,sa1,16,2,66,24"));

        assert!(matches!(
            report(&rows, ReportKind::Tradeoff, None),
            Err(Error::Config(_))
        ));
        assert!("pareto".parse::<ReportKind>().is_err());
    }

    #[test]
    fn tradeoff_report_delegates_to_ranking() {
        let table = EnergyTable::shipped();
        let rows = [
            fault_row("accurate", FaultType::StuckAt1, 7, 1, 80.0),
            fault_row("KVA", FaultType::StuckAt1, 7, 1, 81.0),
            fault_row("L2D", FaultType::StuckAt1, 7, 1, 40.0),
        ];
        let text = report(&rows, ReportKind::Tradeoff, Some(&table)).unwrap();
        let ranked = rank_tradeoff(&rows, &table).unwrap();
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), ranked.len());
        for (line, r) in lines.iter().zip(&ranked) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[2], r.multiplier);
            assert_eq!(f[7], r.pareto.to_string());
        }
        // accurate is beaten by KVA on both axes.
        let accurate = lines.iter().find(|l| l.contains(",accurate,")).unwrap();
        assert!(accurate.starts_with("mnist,1,accurate,,80,1,"), "{accurate}");
        assert!(accurate.ends_with(",false,high,high"), "{accurate}");
    }
}
