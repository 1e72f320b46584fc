use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Assignment of every feature to exactly one named class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    class_of: Vec<usize>,
    names: Vec<String>,
    sizes: Vec<usize>,
}

impl ClassMap {
    pub fn new(class_of: Vec<usize>, names: Vec<String>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::InvalidDataset("class map has no classes".into()));
        }
        let mut sizes = vec![0usize; k];
        for (j, &c) in class_of.iter().enumerate() {
            if c >= k {
                return Err(Error::InvalidDataset(format!(
                    "feature {j} maps to class {c}, only {k} classes"
                )));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidDataset(format!(
                "class `{}` has no features",
                names[empty]
            )));
        }
        if let Some(blank) = names.iter().position(|n| n.is_empty()) {
            return Err(Error::InvalidDataset(format!("class {blank} has an empty name")));
        }
        Ok(ClassMap {
            class_of,
            names,
            sizes,
        })
    }

    /// `k` classes of `m / k` features each, remainder spread over the first classes.
    pub fn contiguous(m: usize, k: usize) -> Result<Self> {
        if k == 0 || k > m {
            return Err(Error::domain(format!("cannot split {m} features into {k} classes")));
        }
        let base = m / k;
        let extra = m % k;
        let mut class_of = Vec::with_capacity(m);
        for c in 0..k {
            let size = base + usize::from(c < extra);
            class_of.extend(std::iter::repeat_n(c, size));
        }
        let names = (0..k).map(|c| format!("class_{c}")).collect();
        ClassMap::new(class_of, names)
    }

    pub fn class_of(&self, feature: usize) -> usize {
        self.class_of[feature]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.class_of
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.sizes[class]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_features(&self) -> usize {
        self.class_of.len()
    }
}

/// Dense design matrix `x` (n × m) with responses `y` (n × h).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub task_names: Vec<String>,
    pub class_map: Option<ClassMap>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let feature_names = (0..x.ncols()).map(|j| format!("f{j}")).collect();
        let task_names = (0..y.ncols()).map(|t| format!("task_{t}")).collect();
        Dataset::with_names(x, y, feature_names, task_names, None)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        feature_names: Vec<String>,
        task_names: Vec<String>,
        class_map: Option<ClassMap>,
    ) -> Result<Self> {
        let ds = Dataset {
            x,
            y,
            feature_names,
            task_names,
            class_map,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_class_map(mut self, class_map: ClassMap) -> Result<Self> {
        self.class_map = Some(class_map);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let (n, m, h) = (self.n(), self.m(), self.h());
        if self.y.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "x has {n} rows but y has {}",
                self.y.nrows()
            )));
        }
        if n < 2 || h < 1 {
            return Err(Error::InvalidDataset(format!(
                "need n >= 2 and h >= 1, got n={n}, h={h}"
            )));
        }
        if self.feature_names.len() != m || self.task_names.len() != h {
            return Err(Error::DimensionMismatch("name count does not match matrix shape".into()));
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite value in data".into()));
        }
        if let Some(cm) = &self.class_map {
            if cm.num_features() != m {
                return Err(Error::DimensionMismatch(format!(
                    "class map covers {} features, dataset has {m}",
                    cm.num_features()
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn h(&self) -> usize {
        self.y.ncols()
    }

    /// Column `j` of the design as a contiguous slice.
    pub fn feature(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn response(&self, t: usize) -> &[f64] {
        let n = self.n();
        &self.y.as_slice()[t * n..(t + 1) * n]
    }

    /// Single-response view used by the class-aware single-task schemes.
    pub fn task(&self, t: usize) -> Result<Dataset> {
        if t >= self.h() {
            return Err(Error::domain(format!("task {t} out of range (h={})", self.h())));
        }
        Ok(Dataset {
            x: self.x.clone(),
            y: self.y.columns(t, 1).into_owned(),
            feature_names: self.feature_names.clone(),
            task_names: vec![self.task_names[t].clone()],
            class_map: self.class_map.clone(),
        })
    }

    /// Rows selected by `rows`, in that order.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            feature_names: self.feature_names.clone(),
            task_names: self.task_names.clone(),
            class_map: self.class_map.clone(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }
}
