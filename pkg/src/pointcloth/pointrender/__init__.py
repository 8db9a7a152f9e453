from .appearance import (AppearanceConfig, AppearanceFrame, AppearanceResult, evaluate_view,
                         fit_appearance, frame_loss, render_plan)
from .camera import (Camera, CameraError, look_at, orbit_cameras, pixel_of, project_points,
                     project_tensor)
from .head import DESCRIPTOR_DIM, RendererHead, render_head
from .raster import (DEPTH_EPS, RasterBuffer, RasterError, SplatPlan, body_depth_map, plan_splats,
                     project_visible, rasterize_descriptors, silhouette, splat)
