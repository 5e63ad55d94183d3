use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelDims, VariantKind};
use crate::autodiff::Tensor;

/// Indices of one GRU's tensors: input weights `in x 3m`, recurrent weights
/// for the update and reset gates `m x 2m`, candidate recurrent weights
/// `m x m`, and the bias `1 x 3m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruSlots {
    pub wx: usize,
    pub uzr: usize,
    pub un: usize,
    pub b: usize,
}

/// Position of every parameter tensor for one `(dims, variant)` pair.
///
/// Outside the decoupled variant the interaction slots alias the attribute ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub entity_attr: usize,
    pub w1_attr: usize,
    pub entity_inter: usize,
    pub w1_inter: usize,
    pub relation: usize,
    pub w2: usize,
    pub w3: usize,
    pub gru_a: Option<GruSlots>,
    pub gru_i: Option<GruSlots>,
    pub head_a_w: usize,
    pub head_a_b: usize,
    pub head_i_w: usize,
    pub head_i_b: usize,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

impl Builder {
    fn add(&mut self, name: &str, shape: Vec<usize>) -> usize {
        self.names.push(name.to_string());
        self.shapes.push(shape);
        self.names.len() - 1
    }

    fn gru(&mut self, prefix: &str, input: usize, m: usize) -> GruSlots {
        GruSlots {
            wx: self.add(&format!("{prefix}.wx"), vec![input, 3 * m]),
            uzr: self.add(&format!("{prefix}.uzr"), vec![m, 2 * m]),
            un: self.add(&format!("{prefix}.un"), vec![m, m]),
            b: self.add(&format!("{prefix}.b"), vec![1, 3 * m]),
        }
    }
}

impl Layout {
    pub fn new(dims: &ModelDims, variant: VariantKind) -> Self {
        let ModelDims {
            num_entities: n,
            num_relations: r,
            attr_arity: k,
            embed_dim: d,
            hidden_dim: m,
        } = *dims;
        let mut b = Builder {
            names: Vec::new(),
            shapes: Vec::new(),
        };
        let entity_attr = b.add("entity_static", vec![n, d]);
        let w1_attr = b.add("w1", vec![k, d]);
        let (entity_inter, w1_inter) = if variant == VariantKind::Decoupled {
            (b.add("entity_static_inter", vec![n, d]), b.add("w1_inter", vec![k, d]))
        } else {
            (entity_attr, w1_attr)
        };
        let relation = b.add("relation", vec![r, d]);
        let w2 = b.add("w2", vec![3 * d, d]);
        let w3 = b.add("w3", vec![2 * d, d]);
        let gru_a = (variant != VariantKind::TimeIndependent).then(|| b.gru("gru_a", 3 * d, m));
        let gru_i = matches!(variant, VariantKind::Full | VariantKind::Decoupled).then(|| b.gru("gru_i", 4 * d, m));
        let (head_a_in, head_i_in) = if variant == VariantKind::TimeIndependent {
            (d, 2 * d)
        } else {
            (m + d, m + 2 * d)
        };
        let head_a_w = b.add("head_a.w", vec![head_a_in, k]);
        let head_a_b = b.add("head_a.b", vec![1, k]);
        let head_i_w = b.add("head_i.w", vec![head_i_in, n]);
        let head_i_b = b.add("head_i.b", vec![1, n]);
        Self {
            entity_attr,
            w1_attr,
            entity_inter,
            w1_inter,
            relation,
            w2,
            w3,
            gru_a,
            gru_i,
            head_a_w,
            head_a_b,
            head_i_w,
            head_i_b,
            names: b.names,
            shapes: b.shapes,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    fn is_bias(&self, i: usize) -> bool {
        self.names[i].ends_with(".b")
    }
}

/// Every learnable tensor of one model instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    variant: VariantKind,
    layout: Layout,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims, variant: VariantKind) -> Self {
        let layout = Layout::new(&dims, variant);
        let tensors = layout.shapes.iter().map(|s| Tensor::zeros(s.clone())).collect();
        Self {
            dims,
            variant,
            layout,
            tensors,
        }
    }

    /// Xavier-uniform matrices and zero biases, drawn from a seeded ChaCha stream.
    pub fn init(dims: ModelDims, variant: VariantKind, seed: u64) -> Self {
        let mut params = Self::zeros(dims, variant);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..params.tensors.len() {
            if params.layout.is_bias(i) {
                continue;
            }
            let shape = params.layout.shapes[i].clone();
            let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            for x in params.tensors[i].data_mut() {
                *x = rng.gen_range(-limit..=limit);
            }
        }
        params
    }

    /// Rebuilds a parameter set from tensors in layout order, checking every shape.
    pub fn from_tensors(dims: ModelDims, variant: VariantKind, tensors: Vec<Tensor>) -> Result<Self, String> {
        let layout = Layout::new(&dims, variant);
        if tensors.len() != layout.len() {
            return Err(format!("expected {} tensors, found {}", layout.len(), tensors.len()));
        }
        for ((t, shape), name) in tensors.iter().zip(&layout.shapes).zip(&layout.names) {
            if t.shape() != shape.as_slice() {
                return Err(format!("{name}: shape {:?}, expected {:?}", t.shape(), shape));
            }
        }
        Ok(Self {
            dims,
            variant,
            layout,
            tensors,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn variant(&self) -> VariantKind {
        self.variant
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.layout.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.layout.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}
