use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quality::{ms_ssim, psnr, ImageTensor};
use crate::scalar::Scalar;
use crate::tensorstore::{QualityTable, Tensor};

/// Splits an `N x C x H x W` (or single `C x H x W`) tensor into images.
pub fn images_from_tensor<T: Scalar>(tensor: &Tensor<T>, peak: T) -> Result<Vec<ImageTensor<T>>> {
    let (n, c, h, w) = match tensor.shape[..] {
        [n, c, h, w] => (n, c, h, w),
        [c, h, w] => (1, c, h, w),
        _ => return Err(Error::Shape(format!("expected N x C x H x W images, got {:?}", tensor.shape))),
    };
    let size = c * h * w;
    (0..n)
        .map(|i| ImageTensor::new(c, h, w, tensor.data[i * size..(i + 1) * size].to_vec(), peak))
        .collect()
}

pub fn images_to_tensor<T: Scalar>(images: &[ImageTensor<T>]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::invalid("empty image batch"))?;
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if (img.channels(), img.height(), img.width()) != (c, h, w) {
            return Err(Error::Shape("images in a batch must share geometry".into()));
        }
        data.extend_from_slice(img.data());
    }
    Tensor::new(vec![images.len(), c, h, w], data)
}

/// PSNR and MS-SSIM columns for aligned output/target pairs.
pub fn quality_batch<T: Scalar>(
    ids: &[String],
    outputs: &[ImageTensor<T>],
    targets: &[ImageTensor<T>],
) -> Result<QualityTable> {
    if ids.len() != outputs.len() || ids.len() != targets.len() {
        return Err(Error::Alignment(format!(
            "{} ids, {} outputs, {} targets",
            ids.len(),
            outputs.len(),
            targets.len()
        )));
    }
    let rows: Vec<(f64, f64)> = outputs
        .par_iter()
        .zip(targets.par_iter())
        .zip(ids.par_iter())
        .map(|((o, t), id)| {
            let p = psnr(o, t).map_err(|e| e.for_sample(id))?;
            let m = ms_ssim(o, t).map_err(|e| e.for_sample(id))?;
            Ok((p, m))
        })
        .collect::<Result<_>>()?;
    let mut table = QualityTable::new(ids.to_vec())?;
    table.add_metric("psnr", rows.iter().map(|r| r.0).collect())?;
    table.add_metric("ms_ssim", rows.iter().map(|r| r.1).collect())?;
    Ok(table)
}
