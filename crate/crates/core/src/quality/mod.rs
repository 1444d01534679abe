//! Full-reference image quality metrics and rank statistics between score
//! vectors.

mod batch;
mod image;
mod msssim;
mod rank;

pub use batch::{images_from_tensor, images_to_tensor, quality_batch};
pub use image::{psnr, ImageTensor};
pub use msssim::{ms_ssim, ms_ssim_scales, MS_SSIM_WEIGHTS};
pub use rank::{kendall_tau, top_k_overlap, TauResult};
