"""Image-free blind deblurring: learn one inverse kernel for a whole gallery
of blur kernels with a linear convolutional network, then collapse the
network into a single restoration kernel."""

from .errors import (ContractError, DegenerateSpectrumError, FormatError, InputError,
                     InvariantError, NsdError, NumericError)
from .gallery import GaussianKernelSpec, Kernel, RkgDataset, generate_rkg, load_rkg, save_rkg
from .lcnn import LcnnModel, extract_drk, forward, init_model, load_model, save_model
from .objective import LossBreakdown, TrainConfig, train
from .restore import (Image, deblur_with_drk, deblur_with_model, load_image, save_image,
                      super_resolve, wiener_deconvolve)

__version__ = "0.1.0"
