//! Small numeric references for the training losses: Dice path losses over
//! the kernel bank, representative-kernel averaging, overlap suppression and
//! their gradients.

mod bank;
mod checks;
mod dice;
mod gradcheck;
mod head;
mod overlap;
mod tensor;

pub use bank::{
    kernel_bank_loss, representative_kernels, representative_logits, single_path_loss, total_loss, BankLoss, KernelSet,
    LossConfig, PathLoss, PathWeights,
};
pub use checks::{run_loss_checks, LossCheck, EXACT_TOLERANCE, GRAD_STEP, GRAD_TOLERANCE};
pub use dice::{dice_loss, dice_loss_grad, DEFAULT_DICE_EPS};
pub use gradcheck::{grad_check, relative_error, DiceObjective, Differentiable, OverlapObjective, GRAD_FLOOR};
pub use head::{mask_head_forward, Conv1x1, MaskHeadWeights, PathSpec};
pub use overlap::{overlap_suppression_grad, overlap_suppression_loss, softmax_channels, Activation};
pub use tensor::DenseMap;
