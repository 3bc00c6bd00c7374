use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cca_loss, contrastive_loss, kl_loss, mmi_loss, reconstruction_loss, sample_negatives, Dependence, KdeBandwidths, LossConfig};
use crate::error::{invalid, Error, Result};
use crate::net::{inject_noise, EncoderStack, ForwardCache, Mlp, MlpGrads, StackGrads};

/// A batch of aligned frame pairs with every random draw made up front, so the
/// objective is a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Corrupted inputs for the reconstruction pathway; `None` means clean.
    pub x_noisy: Option<DMatrix<f64>>,
    pub y_noisy: Option<DMatrix<f64>>,
    pub negatives: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    /// Signed dependence contribution (`-L` for cca/mmi, `+L` for contrastive).
    pub dependence: f64,
    /// Already weighted by λ.
    pub reconstruction: f64,
    /// Unweighted `KL_x + KL_y`.
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub value: f64,
    pub terms: ObjectiveTerms,
    pub grads: StackGrads,
    pub grad_log_bw: [f64; 3],
}

/// Draws denoising noise and contrastive negatives for a batch, each from its
/// own generator.
pub fn prepare_batch<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    cfg: &LossConfig,
    noise_sigma: f64,
    noise_rng: &mut R1,
    shuffle_rng: &mut R2,
) -> Result<PreparedBatch> {
    if x.ncols() != y.ncols() || x.ncols() == 0 {
        return Err(invalid("batch views must be nonempty and paired"));
    }
    let needs_noise = (cfg.use_autoencoder || cfg.use_private) && noise_sigma > 0.0;
    let (x_noisy, y_noisy) = if needs_noise {
        (Some(inject_noise(&x, noise_sigma, noise_rng)?), Some(inject_noise(&y, noise_sigma, noise_rng)?))
    } else {
        (None, None)
    };
    let negatives = match cfg.dependence {
        Dependence::Contrastive => Some(sample_negatives(x.ncols(), shuffle_rng)?),
        _ => None,
    };
    Ok(PreparedBatch { x, y, x_noisy, y_noisy, negatives })
}

/// Samples the batch randomness and evaluates [`objective_with`].
pub fn total_objective<R: Rng + ?Sized>(
    stack: &EncoderStack,
    bandwidths: &KdeBandwidths,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &LossConfig,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<ObjectiveOutput> {
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let batch = prepare_batch(x.clone(), y.clone(), cfg, noise_sigma, &mut noise_rng, &mut shuffle_rng)?;
    objective_with(stack, &batch, bandwidths, cfg)
}

fn param_grads(net: &Mlp, cache: &ForwardCache, grad: &DMatrix<f64>) -> Result<MlpGrads> {
    Ok(net.backward(cache, grad)?.0)
}

/// `dep + L_ae + κ (KL_x + KL_y)` and its gradient for every stack member.
/// Terms for disabled parts of the stack are skipped.
pub fn objective_with(
    stack: &EncoderStack,
    batch: &PreparedBatch,
    bandwidths: &KdeBandwidths,
    cfg: &LossConfig,
) -> Result<ObjectiveOutput> {
    cfg.validate()?;
    if cfg.use_autoencoder != stack.use_autoencoder() || cfg.use_private != stack.use_private() {
        return Err(invalid("loss config flags do not match the encoder stack"));
    }
    let (x, y) = (&batch.x, &batch.y);
    let (zx, cache_x) = stack.encoder_x.forward(x)?;
    let (zy, cache_y) = stack.encoder_y.forward(y)?;

    let mut terms = ObjectiveTerms::default();
    let mut grad_log_bw = [0.0; 3];
    let (mut gzx, mut gzy) = match cfg.dependence {
        Dependence::Cca => {
            let out = cca_loss(&zx, &zy, cfg.cca_regularizer)?;
            terms.dependence = -out.value;
            (-out.grad_x, -out.grad_y)
        }
        Dependence::Mmi => {
            let out = mmi_loss(&zx, &zy, bandwidths, cfg.mmi_mode)?;
            terms.dependence = -out.value;
            grad_log_bw = out.grad_log_bw.map(|g| -g);
            (-out.grad_x, -out.grad_y)
        }
        Dependence::Contrastive => {
            let negatives = batch.negatives.as_deref().ok_or_else(|| invalid("contrastive batch has no negatives"))?;
            let out = contrastive_loss(&zx, &zy, negatives, cfg.margin)?;
            terms.dependence = out.value;
            (out.grad_x, out.grad_y)
        }
    };

    let mut grads = StackGrads::zeros_like(stack);
    let xr = batch.x_noisy.as_ref().unwrap_or(x);
    let yr = batch.y_noisy.as_ref().unwrap_or(y);
    let clean = batch.x_noisy.is_none() && batch.y_noisy.is_none();

    // private codes, regularized toward N(0, I)
    let mut private = None;
    if let (Some(px), Some(py)) = (&stack.private_x, &stack.private_y) {
        let (zpx, cpx) = px.forward(xr)?;
        let (zpy, cpy) = py.forward(yr)?;
        let (klx, gklx) = kl_loss(&zpx)?;
        let (kly, gkly) = kl_loss(&zpy)?;
        terms.kl = klx + kly;
        private = Some((zpx, cpx, gklx * cfg.kappa, zpy, cpy, gkly * cfg.kappa));
    }

    if let (Some(dec_x), Some(dec_y)) = (&stack.decoder_x, &stack.decoder_y) {
        // reconstruction pathway: shared code from the (possibly corrupted) input
        let (zrx, crx, zry, cry) = if clean {
            (zx.clone(), None, zy.clone(), None)
        } else {
            let (a, ca) = stack.encoder_x.forward(xr)?;
            let (b, cb) = stack.encoder_y.forward(yr)?;
            (a, Some(ca), b, Some(cb))
        };
        let dz = zrx.nrows();
        let code = |shared: &DMatrix<f64>, private: Option<&DMatrix<f64>>| match private {
            None => shared.clone(),
            Some(p) => {
                let mut c = DMatrix::zeros(shared.nrows() + p.nrows(), shared.ncols());
                c.rows_mut(0, shared.nrows()).copy_from(shared);
                c.rows_mut(shared.nrows(), p.nrows()).copy_from(p);
                c
            }
        };
        let code_x = code(&zrx, private.as_ref().map(|p| &p.0));
        let code_y = code(&zry, private.as_ref().map(|p| &p.3));
        let (xhat, cdx) = dec_x.forward(&code_x)?;
        let (yhat, cdy) = dec_y.forward(&code_y)?;
        let rec = reconstruction_loss(x, y, &xhat, &yhat, cfg.lambda)?;
        terms.reconstruction = rec.value;
        let (gdx, gcode_x) = dec_x.backward(&cdx, &rec.grad_xhat)?;
        let (gdy, gcode_y) = dec_y.backward(&cdy, &rec.grad_yhat)?;
        grads.accumulate(4, &gdx);
        grads.accumulate(5, &gdy);
        let gshared_x = gcode_x.rows(0, dz).into_owned();
        let gshared_y = gcode_y.rows(0, dz).into_owned();
        match (crx, cry) {
            (Some(crx), Some(cry)) => {
                grads.accumulate(0, &param_grads(&stack.encoder_x, &crx, &gshared_x)?);
                grads.accumulate(1, &param_grads(&stack.encoder_y, &cry, &gshared_y)?);
            }
            _ => {
                gzx += gshared_x;
                gzy += gshared_y;
            }
        }
        if let Some(p) = private.as_mut() {
            let dp = p.0.nrows();
            p.2 += gcode_x.rows(dz, dp);
            p.5 += gcode_y.rows(dz, dp);
        }
    }

    if let (Some((_, cpx, gpx, _, cpy, gpy)), Some(px), Some(py)) = (&private, &stack.private_x, &stack.private_y) {
        grads.accumulate(2, &param_grads(px, cpx, gpx)?);
        grads.accumulate(3, &param_grads(py, cpy, gpy)?);
    }
    grads.accumulate(0, &param_grads(&stack.encoder_x, &cache_x, &gzx)?);
    grads.accumulate(1, &param_grads(&stack.encoder_y, &cache_y, &gzy)?);

    let value = terms.dependence + terms.reconstruction + cfg.kappa * terms.kl;
    if !value.is_finite() {
        return Err(Error::NonFinite("training objective".into()));
    }
    Ok(ObjectiveOutput { value, terms, grads, grad_log_bw })
}
