"""
Delineating individual trees
============================

Tree cores are the canopy cells above ``mean + alpha * std``. Distance
transform peaks inside the cores seed a flood over the height surface that
never leaves the canopy mask.
"""

import numpy as np

from canopyfuel.bev import canopy_mask, normalize_height, rasterize
from canopyfuel.segmentation import core_stats, edt, find_markers, tree_core_mask, watershed
from canopyfuel.synth import generate_stand, sample_cloud

stand = generate_stand(15, extent=(45, 45), radius_range=(1.0, 2.0), seed=4)
height, _ = rasterize(sample_cloud(stand, 16.0, 0.01, seed=5), 0.25)
norm, _, _ = normalize_height(height)
canopy = canopy_mask(norm, 0.15)

stats = core_stats(norm, canopy, alpha=0.5)
print("mu %.3f sigma %.3f -> core threshold %.3f" % (stats.mu_h, stats.sigma_h, stats.t_core))

core = tree_core_mask(norm, canopy, stats)
dist = edt(core)
# 2 m minimum spacing is 8 cells at 0.25 m
markers = find_markers(dist, core, 8)
print("%d markers for %d planted trees" % (len(markers), len(stand.trees)))

labels = watershed(norm, canopy, markers)
sizes = np.bincount(labels.labels.ravel())[1:] * 0.25 ** 2
for m, area in list(zip(markers, sizes))[:5]:
    print("tree %2d at cell (%d, %d): %.2f m^2" % (m.label, m.row, m.col, area))
