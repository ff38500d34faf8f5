"""voxcorr: local-correlation indexed-point visualization for multivariate volumes."""

from .classify import (BrushWidget, ColorOpacityVolume, LinkIndex,
                       TransferFunctionSet, classify_volume, eval_axis_brushes,
                       eval_tf, link_query)
from .density import (DensityBuffer, KdeParams, Viewport, build_kdtree2,
                      kde_dynamic, splat, splat_volume, tone_map)
from .fitting import (FitParams, FitVolume, LocalFit, align_signs,
                      build_fit_volume, data_domain_fit_volume,
                      interpolate_frame, local_pca, sample_neighborhood)
from .indexed import (AxisLayout, HomogeneousLine, IndexedPoint,
                      IndexedPointVolume, angle_uniform, build_indexed_volumes,
                      dual_1flat, dual_2flat)
from .pipeline import PipelineParams, precompute
from .render import Camera, ConeParams, RenderParams, occlusion_factor, raycast
from .saliency import (LeafStrategy, Octree, SaliencyField, build_octree,
                       build_saliency, compute_saliency, smooth_saliency)
from .synthetic import (Distribution, Structure, SyntheticSpec, gen_rotating_field,
                        gen_synthetic, three_gaussian_phantom)
from .volume import (LabelVolume, MultivariateVolume, VolumeLoadError,
                     gradient_magnitude_attr, load_volume, sample_trilinear)

__version__ = "0.1.0"
