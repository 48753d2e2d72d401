"""
Height and density rasters
==========================

The metric cloud is leveled, projected straight down onto a grid and
normalized between robust percentiles. Cells above a relative height
threshold form the canopy footprint.
"""

import numpy as np

from canopyfuel.bev import canopy_mask, footprint_area, normalize_height, rasterize
from canopyfuel.geometry import PointCloud, pca_level
from canopyfuel.synth import generate_stand, sample_cloud

stand = generate_stand(12, extent=(40, 40), seed=2)
cloud = sample_cloud(stand, points_per_m2=16.0, noise_sigma_m=0.01, seed=3)

# tilt the scene by a few degrees, as a survey frame typically is
c, s = np.cos(0.08), np.sin(0.08)
tilted = PointCloud(cloud.points @ np.array([[1, 0, 0], [0, c, -s], [0, s, c]]).T)

# leveling puts the least-variance axis on +Z, cameras on the up side
leveled, rot = pca_level(tilted, camera_centroid=[0.0, 0.0, 80.0])
print("leveling rotation:\n", np.round(rot, 4))

height, density = rasterize(leveled, cell_size_m=0.25)
print("grid %d x %d cells, %d points binned" % (height.spec.width, height.spec.height,
                                                 int(density.values.sum())))

norm, z_ground, z_top = normalize_height(height, 2.0, 98.0)
print("ground %.2f m, top %.2f m" % (z_ground, z_top))

mask = canopy_mask(norm, h_min=0.15)
print("canopy footprint %.1f m^2 (sum of crown discs %.1f m^2)"
      % (footprint_area(mask), stand.footprint_m2))
