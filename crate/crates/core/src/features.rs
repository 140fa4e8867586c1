//! Product feature vectors and the purchase rule.
//!
//! Every product is a non-negative unit vector in a shared feature space. One
//! component is designated the null feature; it only exists so that a product
//! dominating another on every real feature can still be scaled to unit norm,
//! and gets no special treatment at runtime.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two products whose cosines to an aggregate differ by at most this are tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductId(pub usize);

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: ProductId,
    pub features: Vec<f64>,
    pub null_index: usize,
}

/// Scales `raw` to unit norm. Returns the product and the applied scale factor.
pub fn normalize_product(id: ProductId, raw: &[f64], null_index: usize) -> Result<(Product, f64)> {
    if raw.len() < 2 {
        return Err(Error::TooFewFeatures(raw.len()));
    }
    if null_index >= raw.len() {
        return Err(Error::NullIndexOutOfRange {
            index: null_index,
            dim: raw.len(),
        });
    }
    if raw.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::BadComponent);
    }
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let scale = 1.0 / norm;
    let features = raw.iter().map(|x| x / norm).collect();
    Ok((
        Product {
            id,
            features,
            null_index,
        },
        scale,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateVector(pub Vec<f64>);

impl AggregateVector {
    pub fn zeros(dim: usize) -> Self {
        AggregateVector(vec![0.0; dim])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Adds `weight * product`.
    pub fn accumulate(&mut self, weight: f64, product: &Product) {
        for (a, p) in self.0.iter_mut().zip(&product.features) {
            *a += weight * p;
        }
    }
}

/// Angle between `a` and unit vector `p`, in `[0, pi]`.
pub fn angular_distance(a: &AggregateVector, p: &Product) -> Result<f64> {
    let norm = a.norm();
    if norm == 0.0 {
        return Err(Error::ZeroAggregate);
    }
    Ok(cosine(&a.0, norm, &p.features).acos())
}

#[inline]
fn cosine(a: &[f64], norm: f64, p: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(p).map(|(x, y)| x * y).sum();
    (dot / norm).clamp(-1.0, 1.0)
}

/// The set of competing products sharing one feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductSet {
    dim: usize,
    products: Vec<Product>,
}

impl ProductSet {
    /// Products must have ids `0..k` (any order) and a common dimension.
    pub fn new(mut products: Vec<Product>) -> Result<Self> {
        if products.is_empty() {
            return Err(Error::InvalidArgument("no products".into()));
        }
        products.sort_by_key(|p| p.id);
        let dim = products[0].features.len();
        for (i, p) in products.iter().enumerate() {
            if p.id.0 != i {
                return Err(Error::InvalidArgument(format!(
                    "product ids must be 0..{}, found {}",
                    products.len(),
                    p.id
                )));
            }
            if p.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.features.len(),
                });
            }
        }
        Ok(ProductSet { dim, products })
    }

    /// Normalizes each raw vector; ids are assigned by position.
    pub fn from_raw(raw: &[(Vec<f64>, usize)]) -> Result<Self> {
        let products = raw
            .iter()
            .enumerate()
            .map(|(i, (v, null))| normalize_product(ProductId(i), v, *null).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        ProductSet::new(products)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn get(&self, id: ProductId) -> Result<&Product> {
        self.products.get(id.0).ok_or(Error::UnknownProduct(id.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Product> {
        self.products.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ProductId> {
        (0..self.products.len()).map(ProductId)
    }

    #[inline]
    pub(crate) fn features(&self, id: usize) -> &[f64] {
        &self.products[id].features
    }

    /// Argmax-cosine over all products with the tie set resolved by
    /// `tie_break(k)`, which must return an index below `k`.
    pub(crate) fn choose_with(
        &self,
        aggregate: &[f64],
        norm: f64,
        tie_break: impl FnOnce(usize) -> usize,
    ) -> ProductId {
        let cos = |i: usize| cosine(aggregate, norm, &self.products[i].features);
        let mut best = 0;
        let mut best_cos = cos(0);
        for i in 1..self.products.len() {
            let c = cos(i);
            if c > best_cos {
                best = i;
                best_cos = c;
            }
        }
        let tied = |i: &usize| cos(*i) >= best_cos - TIE_TOLERANCE;
        let count = (0..self.products.len()).filter(tied).count();
        if count == 1 {
            return ProductId(best);
        }
        let pick = tie_break(count);
        ProductId((0..self.products.len()).filter(tied).nth(pick).unwrap_or(best))
    }
}

/// Product with the least angular distance to `a`; exact ties broken
/// uniformly at random.
pub fn choose_product<R: Rng + ?Sized>(
    a: &AggregateVector,
    products: &ProductSet,
    rng: &mut R,
) -> Result<ProductId> {
    let norm = a.norm();
    if norm == 0.0 {
        return Err(Error::ZeroAggregate);
    }
    if a.0.len() != products.dim() {
        return Err(Error::DimensionMismatch {
            expected: products.dim(),
            got: a.0.len(),
        });
    }
    Ok(products.choose_with(&a.0, norm, |k| rng.random_range(0..k)))
}

/// Parses `<id> <f values> null=<index>` lines. Returns products and the scale
/// factor applied to each.
pub fn parse_products(path: &Path, text: &str) -> Result<(ProductSet, Vec<f64>)> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut products = Vec::new();
    let mut scales = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let lineno = i + 1;
        let (last, rest) = fields
            .split_last()
            .ok_or_else(|| err(lineno, "empty line".into()))?;
        let null = last
            .strip_prefix("null=")
            .ok_or_else(|| err(lineno, format!("expected null=<index>, found '{last}'")))?;
        let null: usize = null
            .parse()
            .map_err(|_| err(lineno, format!("bad token '{last}'")))?;
        let (id, values) = rest
            .split_first()
            .ok_or_else(|| err(lineno, "missing product id".into()))?;
        let id: usize = id.parse().map_err(|_| err(lineno, format!("bad token '{id}'")))?;
        let values = values
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| err(lineno, format!("bad token '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        let (p, scale) = normalize_product(ProductId(id), &values, null)?;
        products.push(p);
        scales.push((id, scale));
    }
    scales.sort_by_key(|s| s.0);
    let set = ProductSet::new(products)?;
    Ok((set, scales.into_iter().map(|s| s.1).collect()))
}

pub fn load_products(path: &Path) -> Result<(ProductSet, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_products(path, &text)
}

pub fn format_products(products: &ProductSet) -> String {
    let mut s = String::new();
    for p in products.iter() {
        s.push_str(&p.id.to_string());
        for x in &p.features {
            s.push_str(&format!(" {x}"));
        }
        s.push_str(&format!(" null={}\n", p.null_index));
    }
    s
}
