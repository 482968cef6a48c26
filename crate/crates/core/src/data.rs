//! Labelled datasets, standardization, splitting, and synthetic data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

/// `n × d` inputs with integer labels in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub classes: usize,
    pub feature_names: Option<Vec<String>>,
    /// Original label strings, indexed by code.
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    /// Every class in `0..classes` must occur at least once.
    pub fn new(x: Matrix, y: Vec<usize>, classes: usize) -> Result<Self> {
        let data = Self::with_label_space(x, y, classes)?;
        let counts = data.class_counts();
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("class {missing} has no samples")));
        }
        Ok(data)
    }

    /// Like [`Dataset::new`] but classes may be absent, as in a held-out
    /// file coded with a trained model's label vocabulary.
    pub fn with_label_space(x: Matrix, y: Vec<usize>, classes: usize) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::Empty("dataset"));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("dataset"));
        }
        if y.len() != x.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                y.len(),
                x.rows()
            )));
        }
        if let Some(&label) = y.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label, classes });
        }
        Ok(Dataset {
            x,
            y,
            classes,
            feature_names: None,
            class_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.x.cols() {
            return Err(Error::invalid(format!(
                "{} feature names for {} features",
                names.len(),
                self.x.cols()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.classes {
            return Err(Error::invalid(format!(
                "{} class names for {} classes",
                names.len(),
                self.classes
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn samples(&self) -> usize {
        self.x.rows()
    }

    pub fn features(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.y {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `idx`, in that order. Classes may become absent.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let x = self.x.select_rows(idx)?;
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let mut out = Dataset::with_label_space(x, y, self.classes)?;
        out.feature_names.clone_from(&self.feature_names);
        out.class_names.clone_from(&self.class_names);
        Ok(out)
    }

    /// Same labels and names, new inputs.
    pub fn with_inputs(&self, x: Matrix) -> Result<Dataset> {
        if x.shape() != self.x.shape() {
            return Err(Error::Shape {
                op: "with_inputs",
                left: self.x.shape(),
                right: x.shape(),
            });
        }
        let mut out = self.clone();
        out.x = x;
        Ok(out)
    }
}

/// Per-feature affine z-score map fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// `1 / σ`, or 0 for a constant feature.
    pub inv_scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column.
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 {
            return Err(Error::Empty("standardize"));
        }
        let mut mean = vec![0.0; d];
        let mut inv_scale = vec![0.0; d];
        for j in 0..d {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[j] = m;
            let sd = libm::sqrt(var);
            inv_scale[j] = if sd > 0.0 && sd.is_finite() { 1.0 / sd } else { 0.0 };
        }
        Ok(Standardizer { mean, inv_scale })
    }

    pub fn features(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.features() {
            return Err(Error::Shape {
                op: "Standardizer::apply",
                left: (1, self.features()),
                right: x.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) * self.inv_scale[j];
            }
        }
        Ok(out)
    }
}

/// Fits on `train` and transforms both sets.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Standardizer)> {
    let s = Standardizer::fit(&train.x)?;
    let tr = train.with_inputs(s.apply(&train.x)?)?;
    let te = test.with_inputs(s.apply(&test.x)?)?;
    Ok((tr, te, s))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            stratified: true,
        }
    }
}

/// Sorted train and test row indices.
pub fn split_indices(y: &[usize], classes: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::invalid("need at least two samples to split"));
    }
    let mut rng = RngState::new(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); classes];
        for (i, &l) in y.iter().enumerate() {
            if l >= classes {
                return Err(Error::Label { label: l, classes });
            }
            g[l].push(i);
        }
        g.retain(|members| !members.is_empty());
        if let Some(single) = g.iter().find(|m| m.len() == 1) {
            return Err(Error::invalid(format!(
                "class {} has a single sample and cannot be stratified",
                y[single[0]]
            )));
        }
        g
    } else {
        vec![(0..n).collect()]
    };

    // Largest-remainder allocation of the train quota across groups.
    let target = libm::round(f * n as f64) as usize;
    let mut take: Vec<usize> = groups.iter().map(|g| libm::floor(f * g.len() as f64) as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = f * groups[a].len() as f64 - take[a] as f64;
        let rb = f * groups[b].len() as f64 - take[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = take.iter().sum();
    for &g in order.iter().cycle().take(order.len() * 2) {
        if assigned >= target {
            break;
        }
        if take[g] + 1 < groups[g].len() {
            take[g] += 1;
            assigned += 1;
        }
    }
    for (t, g) in take.iter_mut().zip(&groups) {
        *t = (*t).clamp(1, g.len() - 1);
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (mut members, t) in groups.into_iter().zip(take) {
        rng.shuffle(&mut members);
        train.extend_from_slice(&members[..t]);
        test.extend_from_slice(&members[t..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(&data.y, data.classes, spec)?;
    Ok((data.subset(&tr)?, data.subset(&te)?))
}

/// A generated dataset and the features its labels depend on.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Sorted.
    pub planted: Vec<usize>,
}

/// Standard normal inputs; `y = 1` iff `Σ_{j ∈ planted} sin(x_j) + x_j²`
/// exceeds its sample median.
pub fn make_synthetic(n: usize, d: usize, k_star: usize, seed: u64) -> Result<SyntheticData> {
    if k_star > d {
        return Err(Error::invalid(format!("k_star = {k_star} exceeds d = {d}")));
    }
    if n < 2 || d == 0 {
        return Err(Error::invalid("need n >= 2 and d >= 1"));
    }
    let mut rng = RngState::new(seed);
    let data: Vec<f64> = (0..n * d).map(|_| rng.standard_normal()).collect();
    let x = Matrix::from_vec(n, d, data)?;
    let mut planted = rng.sample_indices(d, k_star);
    planted.sort_unstable();

    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let row = x.row(i);
            planted.iter().map(|&j| libm::sin(row[j]) + row[j] * row[j]).sum()
        })
        .collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let y: Vec<usize> = scores.iter().map(|&s| usize::from(s > median)).collect();
    Ok(SyntheticData {
        dataset: Dataset::new(x, y, 2)?,
        planted,
    })
}

/// [`make_synthetic`] plus one exact copy of every planted feature.
#[derive(Clone, Debug, PartialEq)]
pub struct DuplicatedData {
    pub synthetic: SyntheticData,
    /// `(planted, copy)` column pairs.
    pub copies: Vec<(usize, usize)>,
}

/// Overwrites `k_star` non-planted columns with copies of the planted ones.
pub fn make_synthetic_duplicated(n: usize, d: usize, k_star: usize, seed: u64) -> Result<DuplicatedData> {
    if 2 * k_star > d {
        return Err(Error::invalid("need d >= 2 k_star to hold the copies"));
    }
    let mut synthetic = make_synthetic(n, d, k_star, seed)?;
    let mut rng = RngState::with_stream(seed, 1);
    let free: Vec<usize> = (0..d).filter(|j| !synthetic.planted.contains(j)).collect();
    let picks = rng.sample_indices(free.len(), k_star);
    let copies: Vec<(usize, usize)> = synthetic
        .planted
        .iter()
        .zip(picks)
        .map(|(&p, c)| (p, free[c]))
        .collect();
    let x = &mut synthetic.dataset.x;
    for i in 0..x.rows() {
        for &(p, c) in &copies {
            let v = x.get(i, p);
            x.set(i, c, v);
        }
    }
    Ok(DuplicatedData { synthetic, copies })
}
