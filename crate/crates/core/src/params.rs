//! Named parameter storage and per-step binding of parameters into a graph.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameters keyed by dotted names such as `lffn.rdb0.conv1.weight`.
/// Iteration order is registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub const fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    /// Parameters whose name starts with `prefix` (e.g. `"erff."`).
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.ids().filter(move |&id| self.names[id.0].starts_with(prefix))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Replaces a value, keeping the registered shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::shape(
                "ParamStore::set",
                &[self.values[id.0].shape(), value.shape()],
                self.names[id.0].to_string(),
            ));
        }
        self.values[id.0] = value;
        Ok(())
    }
}

/// How a freshly registered parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    KaimingNormal { fan_in: usize },
    Zeros,
}

impl Init {
    pub fn sample(self, shape: &[usize], rng: &mut impl Rng) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::KaimingNormal { fan_in } => {
                let std = crate::math::sqrt(2.0 / fan_in.max(1) as f64);
                let normal = Normal::new(0.0, std).expect("finite std");
                Tensor::from_fn(shape, |_| normal.sample(rng))
            }
        }
    }
}

/// A graph plus lazily bound parameter leaves.
///
/// Parameters are copied into the graph on first use; after
/// [`Graph::backward`] their gradients are collected with
/// [`Session::param_grads`].
pub struct Session<'p> {
    pub graph: Graph,
    store: &'p ParamStore,
    bound: Vec<Option<Var>>,
    trainable: bool,
}

impl<'p> Session<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Session {
            graph: Graph::new(),
            store,
            bound: alloc::vec![None; store.len()],
            trainable: true,
        }
    }

    /// Session whose parameters enter the graph as constants (inference).
    pub fn frozen(store: &'p ParamStore) -> Self {
        Session {
            trainable: false,
            ..Session::new(store)
        }
    }

    /// Frozen session without any parameters, for recording plain tensor ops.
    pub fn frozen_empty() -> Session<'static> {
        static EMPTY: ParamStore = ParamStore::new();
        Session::frozen(&EMPTY)
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let value = self.store.get(id).clone();
        let v = if self.trainable {
            self.graph.param(value)
        } else {
            self.graph.constant(value)
        };
        self.bound[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.graph.constant(value)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.graph.constant(Tensor::zeros(shape))
    }

    /// Gradients of every parameter that the last backward reached.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let v = (*v)?;
                self.graph.grad(v).map(|g| (ParamId(i), g.clone()))
            })
            .collect()
    }

    /// Whether parameter `id` was used by this session's graph.
    pub fn is_bound(&self, id: ParamId) -> bool {
        self.bound[id.0].is_some()
    }
}
