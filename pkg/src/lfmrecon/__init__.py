"""Multi-view light-field microscopy reconstruction toolkit.

Wave-optics PSF synthesis with learnable Zernike aberrations, an FFT-based
multi-view projection operator with exact adjoints, a feature-volume scene
representation with a tiny per-voxel decoder, and a deterministic
gradient-descent reconstruction engine with a Richardson-Lucy baseline.
"""

from .engine import (
    Adam,
    DivergenceError,
    GradientCheckReport,
    ReconConfig,
    ReconResult,
    gradient_check,
    reconstruct,
    reconstruct_warmstart,
    rld,
)
from .field import (
    Decoder,
    DecoderGrads,
    FeatureVolume,
    decode,
    decode_vjp,
    init_field,
)
from .forward import (
    IntensityVolume,
    LightFieldStack,
    downsample,
    downsample_vjp,
    project,
    project_adjoint,
)
from .losses import (
    LossReport,
    LossWeights,
    fft_loss,
    mse_loss,
    pos_loss,
    total_loss,
    ztv_loss,
)
from .metrics import psnr, ssim
from .optics import (
    ComplexPupil,
    GridSpec,
    PsfStack,
    ViewSpec,
    ZernikePhaseBasis,
    ZernikeState,
    make_pupils,
    psf_vjp,
    sunflower_views,
    synthesize_psf,
    zernike_basis,
)
from .phantoms import PhantomSpec, make_phantom
from .rawio import (
    read_checkpoint,
    read_lightfield,
    read_psf_stack,
    read_raw,
    read_volume,
    write_checkpoint,
    write_lightfield,
    write_psf_stack,
    write_raw,
    write_volume,
)
from .spectrum import band_energy_ratio, radial_profile, spectrum_plot

__version__ = "0.1.0"
