from .attacks import (BlurKernel, MaskSpec, apply_mask, as_image, as_seg, blur_attack_exact,
                      blur_image, blur_object, blur_sizes, correlate2d, illuminate,
                      illumination_attack, illumination_shifts, mask_attack_candidates,
                      mask_attack_exact, mask_candidates_by_gradient, mask_windows,
                      motion_blur_kernel, window_l1)
from .pnm import read_pnm, read_seg_mask, write_pnm, write_seg_mask
