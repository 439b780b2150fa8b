use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A named, shaped slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter vector plus the block layout that gives it names.
///
/// Blocks are allocated in construction order, so the layout (and therefore
/// serialization) is stable for a given architecture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub blocks: Vec<ParamBlock>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Appends a block, filling entry `i` with `init(i)`.
    pub fn alloc(&mut self, name: impl Into<String>, shape: &[usize], mut init: impl FnMut(usize) -> f64) -> Range<usize> {
        let block = ParamBlock {
            name: name.into(),
            offset: self.values.len(),
            shape: shape.to_vec(),
        };
        let range = block.range();
        self.values.extend((0..block.len()).map(&mut init));
        self.blocks.push(block);
        range
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block_values(&self, name: &str) -> Option<&[f64]> {
        self.block(name).map(|b| &self.values[b.range()])
    }
}
