use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::quantum::DrqcSpec;
use crate::rng::SplitMix64;

/// Which rows a metric or loss is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

/// Generator name, seed and parameters: enough to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(generator: &str, seed: u64) -> Self {
        Self {
            generator: generator.to_string(),
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub provenance: Provenance,
}

fn rows_of(t: &Tensor) -> usize {
    if t.shape().len() < 2 {
        1
    } else {
        t.shape()[0]
    }
}

impl Dataset {
    pub fn new(
        inputs: Tensor,
        targets: Tensor,
        train: Vec<usize>,
        test: Vec<usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = rows_of(&inputs);
        if inputs.shape().len() != 2 || targets.shape().len() != 2 || rows_of(&targets) != n {
            return Err(Error::Shape {
                op: "dataset",
                left: inputs.shape().to_vec(),
                right: targets.shape().to_vec(),
            });
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n || seen[i] {
                return Err(Error::contract(format!(
                    "row {i} is out of range or in both splits"
                )));
            }
            seen[i] = true;
        }
        Ok(Self {
            inputs,
            targets,
            train,
            test,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        rows_of(&self.inputs)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Test => self.test.clone(),
            Split::All => (0..self.len()).collect(),
        }
    }

    /// `(inputs, targets)` restricted to `rows`.
    pub fn gather(&self, rows: &[usize]) -> Result<(Tensor, Tensor)> {
        if rows.is_empty() {
            return Err(Error::contract("empty split"));
        }
        let pick = |t: &Tensor| {
            let c = t.cols();
            let mut data = Vec::with_capacity(rows.len() * c);
            for &r in rows {
                data.extend_from_slice(t.row(r));
            }
            Tensor::matrix(rows.len(), c, data)
        };
        Ok((pick(&self.inputs)?, pick(&self.targets)?))
    }

    /// CSV with `#`-prefixed provenance lines, a header
    /// `x0,…,y0,…,split`, and floats at 17 significant digits.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# generator: {}", self.provenance.generator)?;
        writeln!(out, "# seed: {}", self.provenance.seed)?;
        for (k, v) in &self.provenance.params {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut split = vec![""; self.len()];
        for &i in &self.train {
            split[i] = "train";
        }
        for &i in &self.test {
            split[i] = "test";
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.input_dim()).map(|i| format!("x{i}")).collect();
        header.extend((0..self.target_dim()).map(|i| format!("y{i}")));
        header.push("split".into());
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..self.len() {
            let mut rec: Vec<String> = self.inputs.row(r).iter().map(|v| fmt17(*v)).collect();
            rec.extend(self.targets.row(r).iter().map(|v| fmt17(*v)));
            rec.push(split[r].to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`Dataset::write_csv`].
    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        let mut provenance = Provenance::default();
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once(": ") {
                    match k {
                        "generator" => provenance.generator = v.to_string(),
                        "seed" => {
                            provenance.seed = v
                                .parse()
                                .map_err(|_| Error::Parse(format!("bad seed {v:?}")))?
                        }
                        _ => {
                            provenance.params.insert(k.to_string(), v.to_string());
                        }
                    }
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header = rdr.headers().map_err(csv_err)?.clone();
        let d_in = header.iter().filter(|h| h.starts_with('x')).count();
        let d_out = header.iter().filter(|h| h.starts_with('y')).count();
        if d_in == 0 || d_out == 0 || header.len() != d_in + d_out + 1 {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let (mut xs, mut ys, mut train, mut test) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {r}: bad number {:?}", &rec[i])))
            };
            for i in 0..d_in {
                xs.push(num(i)?);
            }
            for i in d_in..d_in + d_out {
                ys.push(num(i)?);
            }
            match &rec[d_in + d_out] {
                "train" => train.push(r),
                "test" => test.push(r),
                "" => {}
                other => return Err(Error::Parse(format!("row {r}: unknown split {other:?}"))),
            }
        }
        let n = xs.len() / d_in;
        Dataset::new(
            Tensor::matrix(n, d_in, xs)?,
            Tensor::matrix(n, d_out, ys)?,
            train,
            test,
            provenance,
        )
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Shortest-exact is not required; 17 significant digits always round-trip.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Inputs for [`drqc_dataset`]. Stored inputs are `x / input_scale`; the
/// default keeps raw circuit coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrqcDatasetConfig {
    pub count: usize,
    pub domain: (f64, f64),
    pub train_band: (f64, f64),
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for DrqcDatasetConfig {
    fn default() -> Self {
        Self {
            count: 1000,
            domain: (-20.0, 20.0),
            train_band: (-10.0, 10.0),
            input_scale: 1.0,
            seed: 0,
        }
    }
}

/// Uniform samples of the circuit output; rows inside `train_band` train,
/// the rest test.
pub fn drqc_dataset(spec: &DrqcSpec, cfg: &DrqcDatasetConfig) -> Result<Dataset> {
    let circuit = spec.compile()?;
    if circuit.input_dim() != 1 {
        return Err(Error::contract(
            "circuit datasets are defined for scalar inputs",
        ));
    }
    if cfg.count == 0 || !(cfg.domain.0 < cfg.domain.1) || !(cfg.input_scale > 0.0) {
        return Err(Error::contract("invalid circuit dataset configuration"));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let (mut xs, mut ys, mut train, mut test) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..cfg.count {
        let x = rng.uniform_range(cfg.domain.0, cfg.domain.1);
        ys.push(circuit.eval(&[x])?);
        xs.push(x / cfg.input_scale);
        if (cfg.train_band.0..=cfg.train_band.1).contains(&x) {
            train.push(i);
        } else {
            test.push(i);
        }
    }
    let provenance = Provenance::new("drqc", cfg.seed)
        .with("layout", format!("{:?}", spec.layout))
        .with("qubits", spec.qubits)
        .with("layers", spec.layers)
        .with("uploads", spec.uploads)
        .with("circuit_seed", spec.seed)
        .with("count", cfg.count)
        .with("domain", format!("[{}, {}]", cfg.domain.0, cfg.domain.1))
        .with(
            "train_band",
            format!("[{}, {}]", cfg.train_band.0, cfg.train_band.1),
        )
        .with("input_scale", cfg.input_scale)
        .with("train_rows", train.len());
    Dataset::new(
        Tensor::matrix(cfg.count, 1, xs)?,
        Tensor::matrix(cfg.count, 1, ys)?,
        train,
        test,
        provenance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circuit_dataset_split_and_bounds() {
        let ds =
            drqc_dataset(&DrqcSpec::single_qubit(8, 2), &DrqcDatasetConfig::default()).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.train.len() + ds.test.len(), 1000);
        assert!((400..600).contains(&ds.train.len()), "{}", ds.train.len());
        assert!(ds.targets.data().iter().all(|y| y.abs() <= 1.0 + 1e-12));
        for &i in &ds.train {
            assert!(ds.inputs.row(i)[0].abs() <= 10.0);
        }
        for &i in &ds.test {
            assert!(ds.inputs.row(i)[0].abs() > 10.0);
        }
        let again =
            drqc_dataset(&DrqcSpec::single_qubit(8, 2), &DrqcDatasetConfig::default()).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = drqc_dataset(
            &DrqcSpec::multi_qubit(3, 1),
            &DrqcDatasetConfig {
                count: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .starts_with("# generator: drqc"));
    }

    #[test]
    fn overlapping_splits_rejected() {
        let x = Tensor::zeros(&[3, 1]);
        assert!(Dataset::new(
            x.clone(),
            x.clone(),
            vec![0, 1],
            vec![1],
            Provenance::default()
        )
        .is_err());
        assert!(Dataset::new(x.clone(), x, vec![0, 5], vec![], Provenance::default()).is_err());
    }
}
