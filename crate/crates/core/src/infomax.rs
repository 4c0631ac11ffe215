//! Infomax objective: a bilinear discriminator scores clean and corrupted
//! embeddings against the graph summary.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::encoder::glorot_uniform;
use crate::error::{Error, Result};
use crate::prototype::LossTerm;
use crate::tensor::{dot, sigmoid, DenseMatrix, Tape, Var};

/// Log arguments are clamped here so a saturated discriminator stays finite.
pub const LOG_FLOOR: f64 = 1e-12;

/// How the column mean of the clean embeddings becomes the summary the
/// discriminator sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    /// `σ(mean z)`. With the plain mean, a linear discriminator on
    /// unit-norm embeddings is satisfied by a class-agnostic direction and
    /// training erases the cluster structure a random encoder starts with.
    #[default]
    SigmoidMean,
    Mean,
}

impl Readout {
    pub fn apply(self, tape: &mut Tape<'_>, z: Var) -> Result<Var> {
        let mean = tape.col_mean(z)?;
        match self {
            Readout::SigmoidMean => tape.sigmoid(mean),
            Readout::Mean => Ok(mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub weight: DenseMatrix,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(dim, dim, rng),
        }
    }

    pub fn from_weight(weight: DenseMatrix) -> Result<Self> {
        if weight.rows() != weight.cols() {
            return Err(Error::dim(
                "discriminator",
                format!("bilinear form must be square, got {}x{}", weight.rows(), weight.cols()),
            ));
        }
        Ok(Self { weight })
    }

    pub fn dim(&self) -> usize {
        self.weight.rows()
    }

    /// `σ(z W sᵀ)`.
    pub fn score(&self, z: &[f64], summary: &[f64]) -> Result<f64> {
        let h = self.dim();
        if z.len() != h || summary.len() != h {
            return Err(Error::dim(
                "score",
                format!("embedding {} / summary {} for a {h}-dim form", z.len(), summary.len()),
            ));
        }
        let ws: Vec<f64> = (0..h).map(|r| dot(self.weight.row(r), summary)).collect();
        Ok(sigmoid(dot(z, &ws)))
    }
}

/// `(1/|V_u|) Σ_{v ∈ V_u} -(log D(z_v, s) + log(1 - D(z̃_v, s)))`.
///
/// `summary` is a `1 × h` node (normally the column mean of all clean
/// embeddings) and `weight` the discriminator's bilinear form.
pub fn dgi_loss(
    tape: &mut Tape<'_>,
    unlabeled: &[usize],
    clean: Var,
    corrupted: Var,
    summary: Var,
    weight: Var,
) -> Result<LossTerm> {
    if tape.shape(clean) != tape.shape(corrupted) {
        return Err(Error::dim("dgi_loss", String::from("clean and corrupted embeddings differ in shape")));
    }
    if unlabeled.is_empty() {
        let var = tape.constant(DenseMatrix::scalar(0.0));
        return Ok(LossTerm { var, empty: true });
    }
    let m = unlabeled.len() as f64;
    let ws = tape.matmul_t(weight, summary)?; // h × 1

    let zp = tape.slice_rows(clean, unlabeled)?;
    let pos_logit = tape.matmul(zp, ws)?;
    let pos = tape.sigmoid(pos_logit)?;
    let log_pos = tape.log_floor(pos, LOG_FLOOR)?;

    let zn = tape.slice_rows(corrupted, unlabeled)?;
    let neg_logit = tape.matmul(zn, ws)?;
    let neg = tape.sigmoid(neg_logit)?;
    let flipped = tape.scale(neg, -1.0)?;
    let one_minus = tape.add_scalar(flipped, 1.0)?;
    let log_neg = tape.log_floor(one_minus, LOG_FLOOR)?;

    let both = tape.add(log_pos, log_neg)?;
    let total = tape.reduce_sum(both)?;
    let var = tape.scale(total, -1.0 / m)?;
    Ok(LossTerm { var, empty: false })
}
