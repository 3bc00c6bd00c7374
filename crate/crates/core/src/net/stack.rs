use nalgebra::DMatrix;
use rand::Rng;

use super::{Mlp, MlpGrads, Parameterized, DEFAULT_SLOPE};
use crate::error::{invalid, Result};

/// Topology of an [`EncoderStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub latent_dim: usize,
    pub private_dim: usize,
    pub hidden: Vec<usize>,
    pub slope: f64,
    pub use_autoencoder: bool,
    pub use_private: bool,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            latent_dim: 20,
            private_dim: 10,
            hidden: vec![200, 100, 100],
            slope: DEFAULT_SLOPE,
            use_autoencoder: false,
            use_private: false,
        }
    }
}

/// Shared encoders `f`, `g`, optional private encoders and decoders.
///
/// Members are always visited in the order encoder_x, encoder_y, private_x,
/// private_y, decoder_x, decoder_y.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStack {
    pub encoder_x: Mlp,
    pub encoder_y: Mlp,
    pub private_x: Option<Mlp>,
    pub private_y: Option<Mlp>,
    pub decoder_x: Option<Mlp>,
    pub decoder_y: Option<Mlp>,
}

pub const MEMBER_NAMES: [&str; 6] = ["encoder_x", "encoder_y", "private_x", "private_y", "decoder_x", "decoder_y"];

impl EncoderStack {
    pub fn new<R: Rng + ?Sized>(dx: usize, dy: usize, cfg: &StackConfig, rng: &mut R) -> Result<Self> {
        if cfg.latent_dim == 0 || (cfg.use_private && cfg.private_dim == 0) {
            return Err(invalid("latent dimensions must be positive"));
        }
        let sizes = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input).chain(cfg.hidden.iter().copied()).chain(std::iter::once(output)).collect()
        };
        let reversed = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input).chain(cfg.hidden.iter().rev().copied()).chain(std::iter::once(output)).collect()
        };
        let encoder_x = Mlp::new(&sizes(dx, cfg.latent_dim), cfg.slope, rng)?;
        let encoder_y = Mlp::new(&sizes(dy, cfg.latent_dim), cfg.slope, rng)?;
        let (private_x, private_y) = if cfg.use_private {
            (
                Some(Mlp::new(&sizes(dx, cfg.private_dim), cfg.slope, rng)?),
                Some(Mlp::new(&sizes(dy, cfg.private_dim), cfg.slope, rng)?),
            )
        } else {
            (None, None)
        };
        let code = cfg.latent_dim + if cfg.use_private { cfg.private_dim } else { 0 };
        let (decoder_x, decoder_y) = if cfg.use_autoencoder {
            (
                Some(Mlp::new(&reversed(code, dx), cfg.slope, rng)?),
                Some(Mlp::new(&reversed(code, dy), cfg.slope, rng)?),
            )
        } else {
            (None, None)
        };
        Ok(Self { encoder_x, encoder_y, private_x, private_y, decoder_x, decoder_y })
    }

    /// Assembles a stack from existing networks, checking that widths agree.
    pub fn from_members(members: [Option<Mlp>; 6]) -> Result<Self> {
        let [ex, ey, px, py, decx, decy] = members;
        let (encoder_x, encoder_y) = match (ex, ey) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(invalid("stack needs both shared encoders")),
        };
        let stack = Self { encoder_x, encoder_y, private_x: px, private_y: py, decoder_x: decx, decoder_y: decy };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        let dz = self.encoder_x.output_dim();
        if self.encoder_y.output_dim() != dz {
            return Err(invalid("shared encoders disagree on latent dim"));
        }
        if self.private_x.is_some() != self.private_y.is_some() || self.decoder_x.is_some() != self.decoder_y.is_some() {
            return Err(invalid("private encoders and decoders come in pairs"));
        }
        let dp = self.private_dim();
        if let (Some(px), Some(py)) = (&self.private_x, &self.private_y) {
            if px.input_dim() != self.encoder_x.input_dim() || py.input_dim() != self.encoder_y.input_dim() || py.output_dim() != dp {
                return Err(invalid("private encoder widths inconsistent"));
            }
        }
        if let (Some(dx), Some(dy)) = (&self.decoder_x, &self.decoder_y) {
            let code = dz + dp;
            if dx.input_dim() != code || dy.input_dim() != code {
                return Err(invalid(format!("decoders must take {code} inputs")));
            }
            if dx.output_dim() != self.encoder_x.input_dim() || dy.output_dim() != self.encoder_y.input_dim() {
                return Err(invalid("decoder outputs must match view dims"));
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder_x.output_dim()
    }

    pub fn private_dim(&self) -> usize {
        self.private_x.as_ref().map_or(0, Mlp::output_dim)
    }

    pub fn use_autoencoder(&self) -> bool {
        self.decoder_x.is_some()
    }

    pub fn use_private(&self) -> bool {
        self.private_x.is_some()
    }

    pub fn members(&self) -> [Option<&Mlp>; 6] {
        [
            Some(&self.encoder_x),
            Some(&self.encoder_y),
            self.private_x.as_ref(),
            self.private_y.as_ref(),
            self.decoder_x.as_ref(),
            self.decoder_y.as_ref(),
        ]
    }

    fn members_mut(&mut self) -> [Option<&mut Mlp>; 6] {
        [
            Some(&mut self.encoder_x),
            Some(&mut self.encoder_y),
            self.private_x.as_mut(),
            self.private_y.as_mut(),
            self.decoder_x.as_mut(),
            self.decoder_y.as_mut(),
        ]
    }

    pub fn encode_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encoder_x.predict(x)
    }

    pub fn encode_y(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encoder_y.predict(y)
    }
}

impl Parameterized for EncoderStack {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.members().into_iter().flatten().flat_map(|m| m.param_slices()).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.members_mut().into_iter().flatten().flat_map(|m| m.param_slices_mut()).collect()
    }
}

/// Gradients for every member of an [`EncoderStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads {
    pub members: [Option<MlpGrads>; 6],
}

impl StackGrads {
    pub fn zeros_like(stack: &EncoderStack) -> Self {
        Self { members: stack.members().map(|m| m.map(MlpGrads::zeros_like)) }
    }

    /// Adds `g` into member `index` (see [`MEMBER_NAMES`]).
    pub fn accumulate(&mut self, index: usize, g: &MlpGrads) {
        if let Some(dst) = self.members[index].as_mut() {
            dst.add_assign(g);
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.members.iter().flatten().flat_map(|g| g.slices()).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }
}
