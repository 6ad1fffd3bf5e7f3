//! Multi-task datasets, losses and the empirical risk.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Weight matrix `W` (`d x m`); column `t` holds the weight vector of task `t`.
pub type TaskMatrix<T> = DMatrix<T>;

/// Labeled examples, each attached to one of `m` tasks.
///
/// Features are stored row-major so that one example is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset<T> {
    d: usize,
    m: usize,
    x: Vec<T>,
    y: Vec<T>,
    task: Vec<usize>,
    by_task: Vec<Vec<usize>>,
}

impl<T: Real> TaskDataset<T> {
    /// Builds a dataset from row-major features, labels and task indices.
    pub fn from_parts(d: usize, m: usize, x: Vec<T>, y: Vec<T>, task: Vec<usize>) -> Result<Self> {
        let n = y.len();
        if task.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels but {} task indices",
                n,
                task.len()
            )));
        }
        if x.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} feature values for {n} examples of dimension {d}, got {}",
                n * d,
                x.len()
            )));
        }
        let mut by_task = vec![Vec::new(); m];
        for (i, &t) in task.iter().enumerate() {
            if t >= m {
                return Err(Error::TaskOutOfRange { task: t, m });
            }
            by_task[t].push(i);
        }
        Ok(Self {
            d,
            m,
            x,
            y,
            task,
            by_task,
        })
    }

    /// Builds a dataset from `(x, y, task)` triples.
    pub fn from_examples<I>(d: usize, m: usize, examples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<T>, T, usize)>,
    {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut task = Vec::new();
        for (i, (xi, yi, ti)) in examples.into_iter().enumerate() {
            if xi.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "example {i} has {} features, expected {d}",
                    xi.len()
                )));
            }
            x.extend_from_slice(&xi);
            y.push(yi);
            task.push(ti);
        }
        Self::from_parts(d, m, x, y, task)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn x(&self, i: usize) -> &[T] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> T {
        self.y[i]
    }

    pub fn task(&self, i: usize) -> usize {
        self.task[i]
    }

    /// Indices of the examples attached to task `t`.
    pub fn task_indices(&self, t: usize) -> &[usize] {
        &self.by_task[t]
    }

    pub fn labels(&self) -> &[T] {
        &self.y
    }

    /// Keeps the listed examples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut y = Vec::with_capacity(indices.len());
        let mut task = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.x(i));
            y.push(self.y[i]);
            task.push(self.task[i]);
        }
        Self::from_parts(self.d, self.m, x, y, task).expect("subset of a valid dataset")
    }

    /// Maps every example onto a single task.
    pub fn pooled(&self) -> Self {
        Self::from_parts(self.d, 1, self.x.clone(), self.y.clone(), vec![0; self.n()])
            .expect("pooling a valid dataset")
    }

    pub(crate) fn check_matrix(&self, w: &TaskMatrix<T>) -> Result<()> {
        if w.nrows() != self.d || w.ncols() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "W is {}x{} but the dataset has d={} and m={}",
                w.nrows(),
                w.ncols(),
                self.d,
                self.m
            )));
        }
        Ok(())
    }
}

/// Pointwise loss `l(u, y)` for a prediction `u` and label `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// `(u - y)^2 / 2`
    Square,
    /// `ln(1 + exp(-y u))` with `y` in {-1, +1}
    Logistic,
}

impl Loss {
    pub fn value<T: Real>(self, u: T, y: T) -> T {
        match self {
            Loss::Square => {
                let r = u - y;
                T::lit(0.5) * r * r
            }
            Loss::Logistic => softplus(-(y * u)),
        }
    }

    /// Derivative of the loss with respect to the prediction `u`.
    pub fn derivative<T: Real>(self, u: T, y: T) -> T {
        match self {
            Loss::Square => u - y,
            // -y / (1 + exp(y u)) = -y * sigmoid(-y u)
            Loss::Logistic => -y * sigmoid(-(y * u)),
        }
    }

    /// Checks that every label is admissible for this loss.
    pub fn check_labels<T: Real>(self, data: &TaskDataset<T>) -> Result<()> {
        if self == Loss::Logistic {
            for (index, &y) in data.labels().iter().enumerate() {
                if y != T::one() && y != -T::one() {
                    return Err(Error::InvalidLabel {
                        index,
                        label: y.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Square => "square",
            Loss::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "square" | "squared" | "quadratic" => Ok(Loss::Square),
            "logistic" | "logit" => Ok(Loss::Logistic),
            other => Err(Error::Parse(format!("unknown loss '{other}'"))),
        }
    }
}

/// `ln(1 + exp(z))` without overflow.
fn softplus<T: Real>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&p, &q)| acc + p * q)
}

fn check_inputs<T: Real>(w: &TaskMatrix<T>, data: &TaskDataset<T>, loss: Loss) -> Result<()> {
    data.check_matrix(w)?;
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    loss.check_labels(data)
}

/// Average loss over all examples, normalized by the total example count.
pub fn empirical_risk<T: Real>(w: &TaskMatrix<T>, data: &TaskDataset<T>, loss: Loss) -> Result<T> {
    check_inputs(w, data, loss)?;
    let mut total = T::zero();
    for t in 0..data.m() {
        let wt = w.column(t);
        let wt = wt.as_slice();
        for &i in data.task_indices(t) {
            total += loss.value(dot(wt, data.x(i)), data.y(i));
        }
    }
    Ok(total / T::from_count(data.n()))
}

/// Gradient of [`empirical_risk`] with respect to `W`.
pub fn empirical_risk_grad<T: Real>(
    w: &TaskMatrix<T>,
    data: &TaskDataset<T>,
    loss: Loss,
) -> Result<TaskMatrix<T>> {
    Ok(risk_and_grad(w, data, loss)?.1)
}

/// Risk and gradient in a single pass over the data.
pub fn risk_and_grad<T: Real>(
    w: &TaskMatrix<T>,
    data: &TaskDataset<T>,
    loss: Loss,
) -> Result<(T, TaskMatrix<T>)> {
    check_inputs(w, data, loss)?;
    let inv_n = T::one() / T::from_count(data.n());
    let mut grad = TaskMatrix::zeros(data.d(), data.m());
    let mut total = T::zero();
    for t in 0..data.m() {
        let wt = w.column(t);
        let wt = wt.as_slice();
        let mut gt = grad.column_mut(t);
        let gt = gt.as_mut_slice();
        for &i in data.task_indices(t) {
            let xi = data.x(i);
            let u = dot(wt, xi);
            total += loss.value(u, data.y(i));
            let s = loss.derivative(u, data.y(i)) * inv_n;
            for (g, &x) in gt.iter_mut().zip(xi) {
                *g += s * x;
            }
        }
    }
    Ok((total * inv_n, grad))
}
