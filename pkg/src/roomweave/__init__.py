"""roomweave: sparse posed RGBD frames to a complete textured room mesh.

The pipeline projects the input frames to a partial mesh, inpaints a
cross-view-consistent RGBD panorama at the room center through a multi-view
diffusion scheduler (pluggable denoiser / latent codec / depth predictor),
picks the panorama sample that best explains the input depth, fuses it, and
then fills the remaining holes from actively sampled novel views.
"""

from .completion import (
    CompletionConfig,
    DEFAULT_PROMPT_TEMPLATE,
    active_sample,
    build_prompt,
    complete_scene,
    depth_mse,
    iterative_inpaint,
    room_center,
    sample_completion_pose,
)
from .depthfill import (
    DepthFusionConfig,
    DepthPredictor,
    SmoothFillPredictor,
    align_scale,
    fuse_distances,
    inpaint_panorama_distance,
)
from .diffusion import (
    AlphaSchedule,
    DenoiserHandle,
    DenoiserInput,
    IdentityCodec,
    LatentCodec,
    LatentGrid,
    MeshTargetDenoiser,
    OracleDenoiser,
    PanoInpaintConfig,
    PanoramaColorSampler,
    ProceduralDenoiser,
    inpaint_panorama_color,
    inpaint_view_color,
    predict_x0,
    renoise,
    stitch_views_to_equirect,
    warp_average,
    window_average,
)
from .geometry import (
    CameraIntrinsics,
    DistanceGrid,
    PanoCoverageError,
    RigidTransform,
    ViewSpec,
    depth_to_distance,
    distance_to_depth,
    make_pano_views,
    pixel_to_ray,
    ray_to_pixel,
    warp_grid,
)
from .meshing import (
    TriangleMesh,
    fuse,
    mesh_from_rgbd,
    sample_surface_points,
)
from .metrics import (
    EvalReport,
    chamfer_one_directional,
    evaluate,
    psnr,
    ssim,
)
from .panorama import PanoramaRgbd, fuse_panorama, render_panorama
from .rasterize import RenderOutput, render
from .sceneio import (
    RgbdFrame,
    SceneDataset,
    SceneLoadError,
    export_mesh,
    load_mesh,
    load_scene,
    split_views,
)

__version__ = "0.1.0"
